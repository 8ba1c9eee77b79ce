"""CIFG-LSTM emoji classifier and tied-embedding language model in numpy.

All parameters live in one flat float64 vector; named matrices are views into
it. Canonical order: embedding, then per layer (W_i, b_i, W_o, b_o, W_g, b_g),
then the head -- ``output.W``/``output.b`` for the classifier, or
``projection`` (hidden -> embedding space) for the language model.

Gate weights have shape ``(in + h, h)`` and act on ``[x; hid]`` from the
right. The forget gate is not a parameter: it is ``1 - i`` everywhere.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np
from scipy.special import expit, logsumexp

from fedemoji.corpus import PAD_ID, Example
from fedemoji.seeding import TAG_INIT, rng_for

GATES = ("i", "o", "g")
MAGIC = b"FEDEMO1"


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    embed_dim: int
    num_layers: int
    hidden_dim: int
    num_classes: int
    lm_head: bool = False

    def __post_init__(self):
        for name in ("vocab_size", "embed_dim", "num_layers", "hidden_dim", "num_classes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")

    def layer_input(self, layer: int) -> int:
        return self.embed_dim if layer == 0 else self.hidden_dim

    def as_lm(self) -> ModelConfig:
        return ModelConfig(self.vocab_size, self.embed_dim, self.num_layers,
                           self.hidden_dim, self.num_classes, lm_head=True)

    def as_classifier(self, num_classes: int) -> ModelConfig:
        return ModelConfig(self.vocab_size, self.embed_dim, self.num_layers,
                           self.hidden_dim, num_classes, lm_head=False)


FULL_SIZE_CONFIG = ModelConfig(vocab_size=10_000, embed_dim=96, num_layers=2, hidden_dim=256,
                               num_classes=101)


def layout(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    h = config.hidden_dim
    shapes: list[tuple[str, tuple[int, ...]]] = [("embedding", (config.vocab_size, config.embed_dim))]
    for layer in range(config.num_layers):
        fan = config.layer_input(layer) + h
        for gate in GATES:
            shapes.append((f"layer{layer}.W_{gate}", (fan, h)))
            shapes.append((f"layer{layer}.b_{gate}", (h,)))
    if config.lm_head:
        shapes.append(("projection", (h, config.embed_dim)))
    else:
        shapes.append(("output.W", (h, config.num_classes)))
        shapes.append(("output.b", (config.num_classes,)))
    return shapes


def param_count(config: ModelConfig) -> int:
    """Closed-form parameter count."""
    V, d, h, C = config.vocab_size, config.embed_dim, config.hidden_dim, config.num_classes
    total = V * d
    for layer in range(config.num_layers):
        total += 3 * ((config.layer_input(layer) + h) * h + h)
    total += h * d if config.lm_head else h * C + C
    return total


def lstm_gate_param_count(config: ModelConfig) -> int:
    """Gate parameters of a standard 4-gate LSTM with the same dimensions."""
    h = config.hidden_dim
    return sum(4 * ((config.layer_input(l) + h) * h + h) for l in range(config.num_layers))


def cifg_gate_param_count(config: ModelConfig) -> int:
    h = config.hidden_dim
    return sum(3 * ((config.layer_input(l) + h) * h + h) for l in range(config.num_layers))


class LayerParams(NamedTuple):
    W_i: np.ndarray
    b_i: np.ndarray
    W_o: np.ndarray
    b_o: np.ndarray
    W_g: np.ndarray
    b_g: np.ndarray

    def fused(self) -> tuple[np.ndarray, np.ndarray]:
        return (np.concatenate([self.W_i, self.W_o, self.W_g], axis=1),
                np.concatenate([self.b_i, self.b_o, self.b_g]))


class Parameters:
    """Model weights backed by a single flat vector."""

    def __init__(self, config: ModelConfig, flat: np.ndarray | None = None):
        self.config = config
        n = param_count(config)
        if flat is None:
            flat = np.zeros(n)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (n,):
            raise ValueError(f"flat vector has length {flat.size}, expected {n}")
        self.flat = flat
        self._views: dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in layout(config):
            size = int(np.prod(shape))
            self._views[name] = flat[offset:offset + size].reshape(shape)
            offset += size

    def __getitem__(self, name: str) -> np.ndarray:
        return self._views[name]

    def names(self) -> list[str]:
        return list(self._views)

    @property
    def embedding(self) -> np.ndarray:
        return self._views["embedding"]

    @property
    def projection(self) -> np.ndarray:
        return self._views["projection"]

    def layer(self, idx: int) -> LayerParams:
        v = self._views
        return LayerParams(*(v[f"layer{idx}.{p}_{g}"] for g in GATES for p in ("W", "b")))

    def copy(self) -> Parameters:
        return Parameters(self.config, self.flat.copy())

    def with_flat(self, flat: np.ndarray) -> Parameters:
        return Parameters(self.config, flat)

    def __eq__(self, other):
        return (isinstance(other, Parameters) and self.config == other.config
                and np.array_equal(self.flat, other.flat))

    def __repr__(self):
        return f"Parameters({self.config}, n={self.flat.size})"


def init_params(config: ModelConfig, seed: int) -> Parameters:
    """Uniform(-s, s) weights with s = 1/sqrt(fan_in); zero biases.

    fan_in is the leading dimension of each matrix, except for the embedding
    table where it is the embedding width.
    """
    rng = rng_for(seed, TAG_INIT)
    params = Parameters(config)
    for name, shape in layout(config):
        if len(shape) == 1:
            continue
        fan_in = shape[1] if name == "embedding" else shape[0]
        s = 1.0 / np.sqrt(fan_in)
        params[name][...] = rng.uniform(-s, s, size=shape)
    return params


# -- forward ------------------------------------------------------------------


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise FloatingPointError("numeric overflow")


def cifg_step(layer: LayerParams, x: np.ndarray, state: tuple[np.ndarray, np.ndarray]):
    """One CIFG step. Returns ``((c', hid'), hid')``.

    Works on a single vector or a batch (leading axis).
    """
    c, hid = state
    _check_finite(x, c, hid)
    h = hid.shape[-1]
    W, b = layer.fused()
    a = np.concatenate([x, hid], axis=-1) @ W + b
    i = expit(a[..., :h])
    o = expit(a[..., h:2 * h])
    g = np.tanh(a[..., 2 * h:])
    c_new = (1.0 - i) * c + i * g
    hid_new = o * np.tanh(c_new)
    return (c_new, hid_new), hid_new


def pad_batch(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Left-pad to a common length. Returns (ids (B, T), mask (B, T))."""
    T = max(len(s) for s in seqs)
    ids = np.full((len(seqs), T), PAD_ID, dtype=np.int64)
    mask = np.zeros((len(seqs), T))
    for r, s in enumerate(seqs):
        if len(s):
            ids[r, T - len(s):] = s
            mask[r, T - len(s):] = 1.0
    return ids, mask


@dataclass
class _LayerTape:
    W: np.ndarray
    z: np.ndarray      # (B, T, in + h)
    i: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c_prev: np.ndarray
    tc: np.ndarray     # tanh(c_new)
    out: np.ndarray    # masked hidden outputs (B, T, h)


@dataclass
class Tape:
    ids: np.ndarray
    mask: np.ndarray
    layers: list[_LayerTape]

    @property
    def top(self) -> np.ndarray:
        return self.layers[-1].out


def _layer_forward(layer: LayerParams, xs: np.ndarray, mask: np.ndarray) -> _LayerTape:
    B, T, n_in = xs.shape
    h = layer.b_i.shape[0]
    W, b = layer.fused()
    z = np.empty((B, T, n_in + h))
    i_s, o_s, g_s, cp_s, tc_s, out = (np.empty((B, T, h)) for _ in range(6))
    c = np.zeros((B, h))
    hid = np.zeros((B, h))
    for t in range(T):
        z[:, t, :n_in] = xs[:, t]
        z[:, t, n_in:] = hid
        a = z[:, t] @ W + b
        i = expit(a[:, :h])
        o = expit(a[:, h:2 * h])
        g = np.tanh(a[:, 2 * h:])
        c_new = (1.0 - i) * c + i * g
        tc = np.tanh(c_new)
        m = mask[:, t, None]
        i_s[:, t], o_s[:, t], g_s[:, t], cp_s[:, t], tc_s[:, t] = i, o, g, c, tc
        c = m * c_new + (1.0 - m) * c
        hid = m * (o * tc) + (1.0 - m) * hid
        out[:, t] = hid
    return _LayerTape(W, z, i_s, o_s, g_s, cp_s, tc_s, out)


def run_stack(params: Parameters, ids: np.ndarray, mask: np.ndarray) -> Tape:
    """Embed and run every CIFG layer over a padded batch from zero state."""
    if ids.size and (ids.min() < 0 or ids.max() >= params.config.vocab_size):
        raise IndexError("token out of range")
    xs = params.embedding[ids]
    _check_finite(xs)
    tapes = []
    for layer in range(params.config.num_layers):
        tape = _layer_forward(params.layer(layer), xs, mask)
        tapes.append(tape)
        xs = tape.out
    return Tape(ids, mask, tapes)


def classify_batch(params: Parameters, seqs: Sequence[Sequence[int]]):
    """Final-step logits (B, C) for a batch of token sequences, plus the tape."""
    if params.config.lm_head:
        raise ValueError("classify_batch needs a classifier head")
    if any(len(s) == 0 for s in seqs):
        raise ValueError("empty token sequence")
    ids, mask = pad_batch(seqs)
    tape = run_stack(params, ids, mask)
    logits = tape.top[:, -1] @ params["output.W"] + params["output.b"]
    return logits, tape


def forward(params: Parameters, tokens: Sequence[int]):
    """Logits over the C classes after reading ``tokens``, plus the tape."""
    if len(tokens) == 0:
        raise ValueError("empty token sequence")
    logits, tape = classify_batch(params, [list(tokens)])
    return logits[0], tape


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(params: Parameters, seqs: Sequence[Sequence[int]], chunk: int = 1024) -> np.ndarray:
    """Class probabilities (B, C), computed in chunks of similar length."""
    order = sorted(range(len(seqs)), key=lambda r: len(seqs[r]))
    out = np.empty((len(seqs), params.config.num_classes))
    for start in range(0, len(order), chunk):
        rows = order[start:start + chunk]
        logits, _ = classify_batch(params, [seqs[r] for r in rows])
        out[rows] = softmax(logits)
    return out


def lm_forward(params: Parameters, tokens: Sequence[int]) -> np.ndarray:
    """Next-word logits (T, V) at every position of ``tokens``."""
    if not params.config.lm_head:
        raise ValueError("lm_forward needs a language-model head")
    if len(tokens) < 2:
        raise ValueError("language model needs at least two tokens")
    ids, mask = pad_batch([list(tokens)])
    tape = run_stack(params, ids, mask)
    return (tape.top[0] @ params.projection) @ params.embedding.T


# -- backward -----------------------------------------------------------------


def _layer_backward(tape: _LayerTape, d_out: np.ndarray, mask: np.ndarray,
                    grad: Parameters, layer: int) -> np.ndarray:
    """Backprop one layer. ``d_out`` is dLoss/d(masked hidden output) (B, T, h).

    Accumulates weight gradients into ``grad`` and returns dLoss/d(input).
    """
    B, T, h = d_out.shape
    n_in = tape.z.shape[2] - h
    dW = np.zeros_like(tape.W)
    db = np.zeros(3 * h)
    dx = np.empty((B, T, n_in))
    dh = np.zeros((B, h))
    dc = np.zeros((B, h))
    da = np.empty((B, 3 * h))
    for t in range(T - 1, -1, -1):
        m = mask[:, t, None]
        dh = dh + d_out[:, t]
        i, o, g, tc = tape.i[:, t], tape.o[:, t], tape.g[:, t], tape.tc[:, t]
        dh_new = m * dh
        dc_new = dh_new * o * (1.0 - tc * tc) + m * dc
        di = dc_new * (g - tape.c_prev[:, t])
        da[:, :h] = di * i * (1.0 - i)
        da[:, h:2 * h] = dh_new * tc * o * (1.0 - o)
        da[:, 2 * h:] = dc_new * i * (1.0 - g * g)
        dW += tape.z[:, t].T @ da
        db += da.sum(axis=0)
        dz = da @ tape.W.T
        dx[:, t] = dz[:, :n_in]
        dh = dz[:, n_in:] + (1.0 - m) * dh
        dc = dc_new * (1.0 - i) + (1.0 - m) * dc
    for k, gate in enumerate(GATES):
        grad[f"layer{layer}.W_{gate}"][...] += dW[:, k * h:(k + 1) * h]
        grad[f"layer{layer}.b_{gate}"][...] += db[k * h:(k + 1) * h]
    return dx


def backward_stack(params: Parameters, tape: Tape, d_top: np.ndarray, grad: Parameters) -> None:
    """Backprop from dLoss/d(top hidden outputs) to every stack parameter."""
    d = d_top
    for layer in range(params.config.num_layers - 1, -1, -1):
        d = _layer_backward(tape.layers[layer], d, tape.mask, grad, layer)
    np.add.at(grad.embedding, tape.ids, d)


def _effective(batch: Sequence[Example]) -> list[Example]:
    live = [e for e in batch if e.weight > 0]
    if not batch:
        raise ValueError("empty batch")
    if not live:
        raise ValueError("empty effective batch")
    return live


def loss_and_grads(params: Parameters, batch: Sequence[Example]) -> tuple[float, Parameters]:
    """Weight-normalised cross-entropy and its exact gradient (full BPTT)."""
    if params.config.lm_head:
        return lm_loss_and_grads(params, batch)
    live = _effective(batch)
    labels = np.array([e.label for e in live])
    if labels.min() < 0 or labels.max() >= params.config.num_classes:
        raise ValueError("label out of range")
    w = np.array([e.weight for e in live], dtype=np.float64)
    w_total = w.sum()
    logits, tape = classify_batch(params, [e.tokens for e in live])
    rows = np.arange(len(live))
    log_z = logsumexp(logits, axis=1)
    nll = log_z - logits[rows, labels]
    loss = float(np.dot(w, nll) / w_total)

    d_logits = np.exp(logits - log_z[:, None])
    d_logits[rows, labels] -= 1.0
    d_logits *= (w / w_total)[:, None]

    grad = Parameters(params.config)
    top_last = tape.top[:, -1]
    grad["output.W"][...] = top_last.T @ d_logits
    grad["output.b"][...] = d_logits.sum(axis=0)
    d_top = np.zeros_like(tape.top)
    d_top[:, -1] = d_logits @ params["output.W"].T
    backward_stack(params, tape, d_top, grad)
    return loss, grad


def lm_loss_and_grads(params: Parameters, batch: Sequence[Example]) -> tuple[float, Parameters]:
    """Mean next-word cross-entropy over all predicted positions.

    Sequences are weighted by ``Example.weight``; each position in a sequence
    counts once. The embedding receives gradient from both the input lookup
    and the tied output layer.
    """
    live = _effective(batch)
    if any(len(e.tokens) < 2 for e in live):
        raise ValueError("language model needs at least two tokens")
    ids, mask = pad_batch([e.tokens for e in live])
    tape = run_stack(params, ids, mask)
    w = np.array([e.weight for e in live], dtype=np.float64)
    target_mask = mask[:, :-1] * mask[:, 1:] * w[:, None]
    denom = target_mask.sum()

    E, P = params.embedding, params.projection
    hid = tape.top[:, :-1]                      # (B, T-1, h)
    proj = hid @ P                              # (B, T-1, d)
    logits = proj @ E.T                         # (B, T-1, V)
    targets = ids[:, 1:]
    log_z = logsumexp(logits, axis=2)
    picked = np.take_along_axis(logits, targets[..., None], axis=2)[..., 0]
    loss = float(((log_z - picked) * target_mask).sum() / denom)

    d_logits = np.exp(logits - log_z[..., None])
    b_idx, t_idx = np.nonzero(np.ones_like(targets, dtype=bool))
    d_logits[b_idx, t_idx, targets.ravel()] -= 1.0
    d_logits *= (target_mask / denom)[..., None]

    grad = Parameters(params.config)
    flat_d = d_logits.reshape(-1, d_logits.shape[2])
    flat_proj = proj.reshape(-1, proj.shape[2])
    grad.embedding[...] += flat_d.T @ flat_proj
    d_proj = d_logits @ E                       # (B, T-1, d)
    grad.projection[...] = hid.reshape(-1, hid.shape[2]).T @ d_proj.reshape(-1, d_proj.shape[2])
    d_top = np.zeros_like(tape.top)
    d_top[:, :-1] = d_proj @ P.T
    backward_stack(params, tape, d_top, grad)
    return loss, grad


# -- transfer and checkpoints -------------------------------------------------


def transfer_from_lm(lm_params: Parameters, emoji_config: ModelConfig, seed: int) -> Parameters:
    """Emoji classifier initialised from a pretrained language model.

    Embedding and all CIFG layers are copied; the output projection is fresh.
    """
    lm = lm_params.config
    if not lm.lm_head or emoji_config.lm_head:
        raise ValueError("incompatible architectures")
    dims = ("vocab_size", "embed_dim", "num_layers", "hidden_dim")
    if any(getattr(lm, k) != getattr(emoji_config, k) for k in dims):
        raise ValueError("incompatible architectures")
    params = init_params(emoji_config, seed)
    for name in params.names():
        if name == "embedding" or name.startswith("layer"):
            params[name][...] = lm_params[name]
    return params


def save_checkpoint(path: str | Path, params: Parameters) -> None:
    """Write the FEDEMO1 checkpoint format.

    Line 1 is the magic string, line 2 holds ``V d layers h C head`` as
    decimal text (head is 1 for language models), then the flat vector as
    little-endian float64.
    """
    c = params.config
    header = f"{c.vocab_size} {c.embed_dim} {c.num_layers} {c.hidden_dim} {c.num_classes} {int(c.lm_head)}"
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n" + header.encode("ascii") + b"\n")
        fh.write(params.flat.astype("<f8").tobytes())


def load_checkpoint(path: str | Path) -> Parameters:
    with open(path, "rb") as fh:
        magic = fh.readline().rstrip(b"\n")
        if magic != MAGIC:
            raise ValueError(f"{path}: not a FEDEMO1 checkpoint")
        fields = [int(x) for x in fh.readline().split()]
        body = fh.read()
    if len(fields) != 6:
        raise ValueError(f"{path}: malformed header")
    V, d, layers, h, C, head = fields
    config = ModelConfig(V, d, layers, h, C, lm_head=bool(head))
    flat = np.frombuffer(body, dtype="<f8").astype(np.float64)
    return Parameters(config, flat)


def save_vector(path: str | Path, vec: np.ndarray) -> None:
    """Auxiliary float64 vector (e.g. server velocity) with the same magic."""
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n" + struct.pack("<q", vec.size))
        fh.write(np.asarray(vec, dtype="<f8").tobytes())


def load_vector(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.readline().rstrip(b"\n") != MAGIC:
            raise ValueError(f"{path}: bad magic")
        (n,) = struct.unpack("<q", fh.read(8))
        return np.frombuffer(fh.read(8 * n), dtype="<f8").astype(np.float64)
