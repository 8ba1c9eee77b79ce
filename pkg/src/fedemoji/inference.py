"""Serving: cached incremental decoding, UNK triggering and diversified ranking."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fedemoji.corpus import Example
from fedemoji.model import Parameters, cifg_step, softmax


@dataclass(frozen=True)
class Session:
    """Per-layer (c, hid) state after the tokens typed so far."""

    states: tuple[tuple[np.ndarray, np.ndarray], ...]
    length: int = 0

    @classmethod
    def fresh(cls, params: Parameters) -> Session:
        h = params.config.hidden_dim
        zero = np.zeros(h)
        return cls(tuple((zero, zero) for _ in range(params.config.num_layers)), 0)


def predict_incremental(params: Parameters, session: Session, token: int):
    """Feed one token. Returns (probs over C classes, advanced session)."""
    if not 0 <= token < params.config.vocab_size:
        raise IndexError("token out of range")
    x = params.embedding[token]
    states = []
    for layer, state in enumerate(session.states):
        new_state, x = cifg_step(params.layer(layer), x, state)
        states.append(new_state)
    logits = x @ params["output.W"] + params["output.b"]
    return softmax(logits), Session(tuple(states), session.length + 1)


def run_session(params: Parameters, tokens: Sequence[int]) -> tuple[np.ndarray, Session]:
    session = Session.fresh(params)
    probs = None
    for tok in tokens:
        probs, session = predict_incremental(params, session, tok)
    return probs, session


@dataclass(frozen=True)
class TriggerConfig:
    threshold: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")


def should_trigger(probs: np.ndarray, cfg: TriggerConfig) -> bool:
    """Show emoji iff the UNK (last) class probability is below the threshold."""
    return bool(probs[-1] < cfg.threshold)


def choose_threshold(p_unk: np.ndarray, has_emoji: np.ndarray) -> float:
    """Threshold maximising F1 of the trigger decision on a validation set."""
    p_unk = np.asarray(p_unk, dtype=float)
    has_emoji = np.asarray(has_emoji, dtype=bool)
    best_tau, best_f1 = 0.5, -1.0
    for tau in np.unique(np.concatenate([p_unk, [1.0]])):
        fired = p_unk < tau
        tp = np.sum(fired & has_emoji)
        denom = fired.sum() + has_emoji.sum()
        f1 = 2.0 * tp / denom if denom else 0.0
        if f1 > best_f1 and tau > 0:
            best_tau, best_f1 = float(tau), f1
    return best_tau


@dataclass(frozen=True)
class Diversifier:
    empirical_probs: np.ndarray
    alpha: float = 0.7

    def __post_init__(self):
        p = np.asarray(self.empirical_probs, dtype=float)
        if p.ndim != 1 or p.size == 0 or np.any(p <= 0):
            raise ValueError("empirical probabilities must be strictly positive")
        if self.alpha < 0:
            raise ValueError("alpha must be >= 0")
        object.__setattr__(self, "empirical_probs", p)


def fit_diversifier(examples: Sequence[Example], num_emoji: int, alpha: float = 0.7,
                    smoothing: float = 1.0) -> Diversifier:
    """Smoothed emoji frequencies over emoji-labelled training examples."""
    counts = np.zeros(num_emoji)
    for ex in examples:
        if ex.label < num_emoji:
            counts[ex.label] += 1
    total = counts.sum()
    if total == 0:
        raise ValueError("no emoji examples to fit frequencies")
    probs = (counts + smoothing) / (total + num_emoji * smoothing)
    return Diversifier(probs, alpha)


def diversify(probs: np.ndarray, div: Diversifier) -> list[tuple[int, float]]:
    """Emoji classes ranked by ``probs[i] / P[i] ** alpha``; UNK excluded."""
    n = div.empirical_probs.size
    scores = probs[:n] / div.empirical_probs ** div.alpha
    order = sorted(range(n), key=lambda i: (-scores[i], i))
    return [(i, float(scores[i])) for i in order]


@dataclass(frozen=True)
class Prediction:
    ranked: tuple[tuple[int, float], ...]
    triggered: bool


def top_k(prediction: Prediction, k: int) -> Prediction:
    if k < 1:
        raise ValueError("k must be >= 1")
    return Prediction(prediction.ranked[:k], prediction.triggered)


def predict(params: Parameters, tokens: Sequence[int], trigger: TriggerConfig,
            div: Diversifier, k: int = 3) -> tuple[Prediction, np.ndarray]:
    """Ranked, diversified emoji candidates for a typed context, plus raw probs."""
    probs, _ = run_session(params, tokens)
    pred = Prediction(tuple(diversify(probs, div)), should_trigger(probs, trigger))
    return top_k(pred, k), probs
