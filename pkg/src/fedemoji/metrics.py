"""Accuracy@1 and ROC-AUC. Undefined results are reported as NaN."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import numpy as np
from scipy.stats import rankdata


class ScoredLabel(NamedTuple):
    score: float
    is_positive: bool


def emoji_argmax(probs: np.ndarray, unk_class: int) -> np.ndarray:
    """Top-1 emoji class per row. UNK is the last column and is ignored."""
    return np.argmax(np.atleast_2d(probs)[:, :unk_class], axis=1)


def accuracy_at_1(predicted: Sequence[int], labels: Sequence[int], unk_class: int) -> float:
    """Fraction of emoji-labelled examples whose predicted emoji is right."""
    predicted = np.asarray(predicted)
    labels = np.asarray(labels)
    keep = labels != unk_class
    if not keep.any():
        return float("nan")
    return float(np.mean(predicted[keep] == labels[keep]))


def auc_roc(scores: Sequence[float], positives: Sequence[bool]) -> float:
    """Mann-Whitney AUC with midranks for tied scores."""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if not np.all(np.isfinite(scores)):
        raise ValueError("non-finite score")
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(scores)
    u = ranks[positives].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_from_items(items: Sequence[ScoredLabel]) -> float:
    return auc_roc([it.score for it in items], [it.is_positive for it in items])
