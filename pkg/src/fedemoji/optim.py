"""Client SGD, weighted update aggregation and server update rules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from fedemoji.corpus import ClientDataset, Example
from fedemoji.model import Parameters, loss_and_grads
from fedemoji.seeding import rng_for


@dataclass(frozen=True)
class ClientOptConfig:
    client_lr: float = 0.5
    batch_size: int = 50
    epochs: int = 1
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.client_lr < 0:
            raise ValueError("client_lr must be >= 0")
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be >= 1")
        if self.clip_norm <= 0:
            raise ValueError("clip_norm must be > 0")


@dataclass
class ClientUpdate:
    client_id: int
    delta: np.ndarray
    num_examples: int
    train_loss: float


def clip_by_global_norm(grad: np.ndarray, clip_norm: float) -> np.ndarray:
    norm = float(np.sqrt(np.dot(grad, grad)))
    if norm > clip_norm:
        return grad * (clip_norm / norm)
    return grad


def local_epoch(params: Parameters, examples: Sequence[Example], cfg: ClientOptConfig,
                rng: np.random.Generator) -> tuple[Parameters, float, float]:
    """One shuffled pass of minibatch SGD.

    Returns (new params, summed weighted loss, summed weight). Batches whose
    examples all carry weight 0 are skipped. The last short batch is kept.
    """
    w = params.flat.copy()
    order = rng.permutation(len(examples))
    loss_sum = 0.0
    weight_sum = 0.0
    for start in range(0, len(order), cfg.batch_size):
        batch = [examples[j] for j in order[start:start + cfg.batch_size]]
        bw = sum(e.weight for e in batch)
        if bw <= 0:
            continue
        loss, grad = loss_and_grads(params.with_flat(w), batch)
        w = w - cfg.client_lr * clip_by_global_norm(grad.flat, cfg.clip_norm)
        loss_sum += loss * bw
        weight_sum += bw
    return params.with_flat(w), loss_sum, weight_sum


def epoch_rng(seed, epoch: int) -> np.random.Generator:
    keys = tuple(seed) if isinstance(seed, (tuple, list)) else (seed,)
    return rng_for(*keys, epoch)


def client_update(global_params: Parameters, dataset: ClientDataset, cfg: ClientOptConfig,
                  seed) -> ClientUpdate | None:
    """Local training on one device; None when it holds no weighted examples.

    ``seed`` is an int or a tuple of ints; epoch ``e`` shuffles with
    ``epoch_rng(seed, e)``.
    """
    n_k = dataset.num_effective
    if n_k == 0:
        return None
    params = global_params
    loss_sum = weight_sum = 0.0
    for epoch in range(cfg.epochs):
        params, ls, ws = local_epoch(params, dataset.examples, cfg, epoch_rng(seed, epoch))
        loss_sum += ls
        weight_sum += ws
    delta = params.flat - global_params.flat
    return ClientUpdate(dataset.client_id, delta, n_k, loss_sum / weight_sum)


def aggregate(updates: Sequence[ClientUpdate]) -> tuple[np.ndarray, int]:
    """Example-count weighted mean of client deltas, summed in client-id order."""
    if not updates:
        raise ValueError("no updates this round")
    ordered = sorted(updates, key=lambda u: u.client_id)
    total_n = sum(u.num_examples for u in ordered)
    acc = np.zeros_like(ordered[0].delta)
    for u in ordered:
        acc += u.num_examples * u.delta
    return acc / total_n, total_n


@dataclass
class ServerOptimizer:
    """Server update rule applied to the aggregated client delta.

    ``sgd``: ``w += lr * delta``. ``nesterov``: ``v = mu * v + delta`` then
    ``w += lr * (mu * v + delta)``.
    """

    rule: str = "sgd"
    server_lr: float = 1.0
    momentum: float = 0.0
    velocity: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.rule not in ("sgd", "nesterov"):
            raise ValueError(f"unknown server optimizer {self.rule!r}")
        if self.server_lr <= 0:
            raise ValueError("server_lr must be > 0")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError("momentum must lie in [0, 1)")
        if self.rule == "sgd" and self.momentum != 0.0:
            raise ValueError("plain SGD takes no momentum")

    @classmethod
    def nesterov(cls, server_lr: float = 1.0, momentum: float = 0.9) -> ServerOptimizer:
        return cls("nesterov", server_lr, momentum)

    def step(self, mean_delta: np.ndarray) -> np.ndarray:
        """Parameter increment for this round; updates velocity in place."""
        if self.rule == "sgd":
            return self.server_lr * mean_delta
        if self.velocity is None:
            self.velocity = np.zeros_like(mean_delta)
        self.velocity = self.momentum * self.velocity + mean_delta
        return self.server_lr * (self.momentum * self.velocity + mean_delta)


def server_apply(global_params: Parameters, mean_delta: np.ndarray,
                 opt: ServerOptimizer) -> Parameters:
    if mean_delta.shape != global_params.flat.shape:
        raise ValueError("delta length does not match parameters")
    if not np.all(np.isfinite(mean_delta)):
        raise FloatingPointError("diverged round")
    return global_params.with_flat(global_params.flat + opt.step(mean_delta))
