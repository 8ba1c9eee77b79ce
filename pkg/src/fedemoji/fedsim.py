"""Federated rounds, the parallel evaluation task, and the central baseline."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from fedemoji import metrics
from fedemoji.corpus import ClientDataset, Example
from fedemoji.model import (Parameters, load_checkpoint, load_vector, predict_proba,
                            save_checkpoint, save_vector)
from fedemoji.optim import (ClientOptConfig, ServerOptimizer, aggregate, client_update,
                            local_epoch, server_apply)
from fedemoji.seeding import (TAG_AVAILABILITY, TAG_CENTRAL, TAG_CLIENT, TAG_EVAL,
                              TAG_SAMPLE, rng_for)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FederationConfig:
    devices_per_round: int = 10
    total_rounds: int = 300
    eval_every: int = 10
    eval_clients: int = 100
    seed: int = 0
    holdout_fraction: float = 1 / 6
    availability: float = 1.0

    def __post_init__(self):
        if self.devices_per_round < 1:
            raise ValueError("devices_per_round must be >= 1")
        if self.total_rounds < 0 or self.eval_every < 1 or self.eval_clients < 1:
            raise ValueError("invalid round/eval settings")
        if not 0.0 < self.availability <= 1.0:
            raise ValueError("availability must lie in (0, 1]")


@dataclass
class FederationState:
    params: Parameters
    optimizer: ServerOptimizer
    train_population: list[ClientDataset]
    eval_population: list[ClientDataset]
    seed: int = 0
    round: int = 0

    def __post_init__(self):
        train_ids = {c.client_id for c in self.train_population}
        if len(train_ids) != len(self.train_population):
            raise ValueError("duplicate client ids in train population")
        if train_ids & {c.client_id for c in self.eval_population}:
            raise ValueError("train and eval populations overlap")


@dataclass
class RoundReport:
    round: int
    client_ids: list[int]
    mean_loss: float
    total_examples: int
    wall_time: float
    skipped: bool = False


@dataclass
class EvalReport:
    round: int
    accuracy_at_1: float
    auc: float
    num_emoji_examples: int
    num_total_examples: int


def sample_clients(population: Sequence[ClientDataset], k: int,
                   rng: np.random.Generator) -> list[ClientDataset]:
    """Uniform sample without replacement, returned in population order."""
    if len(population) < k:
        raise ValueError("population too small")
    picked = np.sort(rng.choice(len(population), size=k, replace=False))
    return [population[i] for i in picked]


def _eligible(state: FederationState, availability: float) -> list[ClientDataset]:
    if availability >= 1.0:
        return state.train_population
    coins = rng_for(state.seed, state.round, TAG_AVAILABILITY).random(len(state.train_population))
    return [c for c, up in zip(state.train_population, coins < availability) if up]


def run_round(state: FederationState, client_cfg: ClientOptConfig, fed: FederationConfig,
              workers: int = 1) -> RoundReport:
    """Sample K clients, train locally from the same global params, aggregate, apply."""
    start = time.perf_counter()
    t = state.round + 1
    state.round = t  # availability/sampling streams are keyed by the new round
    pool = _eligible(state, fed.availability)
    k = min(fed.devices_per_round, len(pool))
    chosen = sample_clients(pool, k, rng_for(state.seed, t, TAG_SAMPLE)) if k else []
    global_params = state.params

    def work(client: ClientDataset):
        return client_update(global_params, client, client_cfg,
                             (state.seed, t, TAG_CLIENT, client.client_id))

    if workers > 1 and len(chosen) > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(work, chosen))
    else:
        results = [work(c) for c in chosen]
    updates = [u for u in results if u is not None]
    ids = [c.client_id for c in chosen]
    if not updates:
        return RoundReport(t, ids, float("nan"), 0, time.perf_counter() - start, skipped=True)
    mean_delta, total_n = aggregate(updates)
    state.params = server_apply(global_params, mean_delta, state.optimizer)
    losses = np.array([u.train_loss for u in updates])
    ns = np.array([u.num_examples for u in updates], dtype=float)
    mean_loss = float(np.dot(losses, ns) / ns.sum())
    return RoundReport(t, [u.client_id for u in updates], mean_loss, total_n,
                       time.perf_counter() - start)


def evaluate_examples(params: Parameters, examples: Sequence[Example], round_: int = 0) -> EvalReport:
    """Accuracy@1 over emoji examples and trigger AUC over all, on raw probabilities."""
    if not examples:
        return EvalReport(round_, float("nan"), float("nan"), 0, 0)
    unk = params.config.num_classes - 1
    probs = predict_proba(params, [e.tokens for e in examples])
    labels = np.array([e.label for e in examples])
    acc = metrics.accuracy_at_1(metrics.emoji_argmax(probs, unk), labels, unk)
    auc = metrics.auc_roc(1.0 - probs[:, unk], labels != unk)
    return EvalReport(round_, acc, auc, int(np.sum(labels != unk)), len(examples))


def federated_eval(params: Parameters, eval_population: Sequence[ClientDataset],
                   num_eval_clients: int, rng: np.random.Generator, round_: int = 0) -> EvalReport:
    """Evaluate on sampled held-out clients, pooling example-level statistics."""
    k = min(num_eval_clients, len(eval_population))
    clients = sample_clients(eval_population, k, rng)
    pooled = [e for c in clients for e in c.examples]
    return evaluate_examples(params, pooled, round_)


# -- full runs ----------------------------------------------------------------


@dataclass
class FederatedRun:
    init: Parameters
    train_population: list[ClientDataset]
    eval_population: list[ClientDataset]
    client: ClientOptConfig = field(default_factory=ClientOptConfig)
    federation: FederationConfig = field(default_factory=FederationConfig)
    server_rule: str = "sgd"
    server_lr: float = 1.0
    momentum: float = 0.0
    out_dir: Path | None = None
    workers: int = 1

    def new_optimizer(self) -> ServerOptimizer:
        return ServerOptimizer(self.server_rule, self.server_lr, self.momentum)


@dataclass
class FederatedResult:
    params: Parameters
    rounds: list[RoundReport]
    evals: list[EvalReport]
    checkpoints: list[Path]

    @property
    def final_eval(self) -> EvalReport | None:
        return self.evals[-1] if self.evals else None


def checkpoint_path(out_dir: Path, round_: int) -> Path:
    return Path(out_dir) / f"round_{round_}.ckpt"


def _server_state_path(out_dir: Path, round_: int) -> Path:
    return Path(out_dir) / f"round_{round_}.server"


def _log_line(report: EvalReport, loss: float) -> str:
    return f"{report.round}\t{loss!r}\t{report.accuracy_at_1!r}\t{report.auc!r}\n"


def latest_checkpoint_round(out_dir: Path) -> int | None:
    rounds = [int(p.stem.split("_")[1]) for p in Path(out_dir).glob("round_*.ckpt")]
    return max(rounds) if rounds else None


def train_federated(run: FederatedRun, resume: bool = False,
                    on_eval: Callable[[EvalReport], bool | None] | None = None) -> FederatedResult:
    """Run ``total_rounds`` rounds, evaluating every ``eval_every`` rounds.

    With ``out_dir`` set, writes ``round_<t>.ckpt`` (plus server optimizer
    state) at every evaluation point and appends to ``metrics.tsv``. With
    ``resume`` the run restarts from the latest checkpoint in ``out_dir``.
    ``on_eval`` may return True to stop early.
    """
    fed = run.federation
    opt = run.new_optimizer()
    state = FederationState(run.init, opt, list(run.train_population),
                            list(run.eval_population), fed.seed, 0)
    out = Path(run.out_dir) if run.out_dir is not None else None
    checkpoints: list[Path] = []
    metrics_log = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        metrics_log = out / "metrics.tsv"
        last = latest_checkpoint_round(out) if resume else None
        if last is not None:
            state.params = load_checkpoint(checkpoint_path(out, last))
            vel = load_vector(_server_state_path(out, last))
            opt.velocity = vel if vel.size else None
            state.round = last
            _truncate_log(metrics_log, last)
        else:
            metrics_log.write_text("")
            checkpoints.append(_save(out, state))

    rounds: list[RoundReport] = []
    evals: list[EvalReport] = []
    losses_since_eval: list[float] = []
    while state.round < fed.total_rounds:
        report = run_round(state, run.client, fed, workers=run.workers)
        rounds.append(report)
        if not report.skipped:
            losses_since_eval.append(report.mean_loss)
        t = state.round
        if t % fed.eval_every == 0 or t == fed.total_rounds:
            loss = float(np.mean(losses_since_eval)) if losses_since_eval else float("nan")
            losses_since_eval = []
            if not state.eval_population:
                if out is not None:
                    checkpoints.append(_save(out, state))
                continue
            ev = federated_eval(state.params, state.eval_population, fed.eval_clients,
                                rng_for(fed.seed, t, TAG_EVAL), t)
            evals.append(ev)
            log.info("round %d loss %.4f acc@1 %.4f auc %.4f", t, loss, ev.accuracy_at_1, ev.auc)
            if out is not None:
                with open(metrics_log, "a", encoding="utf-8") as fh:
                    fh.write(_log_line(ev, loss))
                checkpoints.append(_save(out, state))
            if on_eval is not None and on_eval(ev):
                break
    return FederatedResult(state.params, rounds, evals, checkpoints)


def _save(out: Path, state: FederationState) -> Path:
    path = checkpoint_path(out, state.round)
    save_checkpoint(path, state.params)
    vel = state.optimizer.velocity
    save_vector(_server_state_path(out, state.round), vel if vel is not None else np.zeros(0))
    return path


def _truncate_log(path: Path, last_round: int) -> None:
    if not path.exists():
        return
    keep = [ln for ln in path.read_text(encoding="utf-8").splitlines(keepends=True)
            if int(ln.split("\t", 1)[0]) <= last_round]
    path.write_text("".join(keep), encoding="utf-8")


@dataclass
class CentralResult:
    checkpoints: list[Parameters]
    epoch_losses: list[float]

    @property
    def params(self) -> Parameters:
        return self.checkpoints[-1]


def train_central(examples: Sequence[Example], epochs: int, cfg: ClientOptConfig,
                  init: Parameters, seed: int = 0) -> CentralResult:
    """Server-side minibatch SGD over the pooled data; one checkpoint per epoch."""
    if not examples:
        raise ValueError("empty training pool")
    if not any(e.weight > 0 for e in examples):
        raise ValueError("empty effective batch")
    params = init
    series = [init]
    losses = []
    for epoch in range(epochs):
        params, loss_sum, weight_sum = local_epoch(params, examples, cfg,
                                                   rng_for(seed, TAG_CENTRAL, epoch))
        series.append(params)
        losses.append(loss_sum / weight_sum if weight_sum else float("nan"))
    return CentralResult(series, losses)
