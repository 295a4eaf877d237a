"""Classification metrics: accuracy, macro F1, calibration error with
reliability bins, and a Wilcoxon signed-rank test with an exact small-sample
null distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyBatchError, InvalidInputError, UndefinedTestError
from .numerics import Array

# Exact bin boundaries; confidences are right-binned so a boundary value
# falls in the lower bin and 1.0 lands in the last bin.
_BIN_EDGES = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]


def accuracy(preds: Array, labels: Array) -> float:
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise EmptyBatchError("accuracy needs equal-length nonempty arrays")
    return float(np.mean(preds == labels))


def macro_f1(preds: Array, labels: Array, n_classes: int) -> float:
    """Unweighted mean of per-class F1; a class with no predictions and no
    positives contributes zero."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape or preds.size == 0:
        raise EmptyBatchError("macro F1 needs equal-length nonempty arrays")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise InvalidInputError(f"labels must lie in [0, {n_classes})")
    scores = []
    for c in range(n_classes):
        tp = float(np.sum((preds == c) & (labels == c)))
        fp = float(np.sum((preds == c) & (labels != c)))
        fn = float(np.sum((preds != c) & (labels == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        if precision + recall > 0:
            scores.append(2 * precision * recall / (precision + recall))
        else:
            scores.append(0.0)
    return float(np.mean(scores))


@dataclass
class ReliabilityBins:
    """Ten equal-width confidence bins with per-bin statistics."""

    edges: Array        # 11 boundaries
    counts: Array       # samples per bin
    mean_confidence: Array
    bin_accuracy: Array

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def reliability(confidences: Array, correct: Array, bins: int = 10) -> ReliabilityBins:
    conf = np.asarray(confidences, dtype=np.float64)
    corr = np.asarray(correct, dtype=np.float64)
    if conf.shape != corr.shape or conf.size == 0:
        raise EmptyBatchError("reliability needs equal-length nonempty arrays")
    if np.any(conf < 0) or np.any(conf > 1):
        raise InvalidInputError("confidences must lie in [0, 1]")
    if bins == 10:
        edges = np.array(_BIN_EDGES)
    else:
        edges = np.linspace(0.0, 1.0, bins + 1)
    idx = np.digitize(conf, edges[1:-1], right=True)
    counts = np.zeros(bins)
    mean_conf = np.zeros(bins)
    bin_acc = np.zeros(bins)
    for b in range(bins):
        members = idx == b
        n = members.sum()
        counts[b] = n
        if n:
            mean_conf[b] = conf[members].mean()
            bin_acc[b] = corr[members].mean()
    return ReliabilityBins(edges, counts, mean_conf, bin_acc)


def ece(confidences: Array, correct: Array, bins: int = 10) -> float:
    """Expected calibration error: count-weighted |accuracy - confidence|
    over equal-width bins."""
    r = reliability(confidences, correct, bins)
    weights = r.counts / r.total
    return float(np.sum(weights * np.abs(r.bin_accuracy - r.mean_confidence)))


def _signed_ranks(diffs: Array) -> tuple[Array, Array]:
    """Average ranks of |d| for nonzero differences, with their signs."""
    d = np.asarray(diffs, dtype=np.float64)
    d = d[d != 0]
    order = np.argsort(np.abs(d), kind="stable")
    sorted_abs = np.abs(d)[order]
    ranks = np.empty(d.size)
    i = 0
    while i < d.size:
        j = i
        while j + 1 < d.size and sorted_abs[j + 1] == sorted_abs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks, np.sign(d)


def exact_null_pmf(ranks: Array) -> dict[float, float]:
    """Null distribution of the positive-rank sum over all sign assignments.

    Ranks may be half-integers (averaged ties); the recursion runs over
    doubled ranks so all sums are integers.
    """
    doubled = np.rint(2 * np.asarray(ranks, dtype=np.float64)).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    counts /= 2.0 ** len(doubled)
    return {w / 2.0: counts[w] for w in range(total + 1) if counts[w] > 0}


def wilcoxon_signed_rank(diffs: Array, exact_threshold: int = 20) -> float:
    """Two-sided Wilcoxon signed-rank p-value for paired differences.

    Zero differences are dropped and ties receive average ranks. Up to
    ``exact_threshold`` nonzero differences the null is enumerated exactly;
    beyond that a normal approximation with tie and continuity corrections
    is used.
    """
    d = np.asarray(diffs, dtype=np.float64)
    if d.size and np.all(d == 0):
        raise UndefinedTestError("all paired differences are zero")
    n = int(np.count_nonzero(d))
    if n < 5:
        raise InvalidInputError(f"need at least 5 nonzero differences, got {n}")
    ranks, signs = _signed_ranks(d)
    w_plus = float(ranks[signs > 0].sum())
    if n <= exact_threshold:
        pmf = exact_null_pmf(ranks)
        lo = sum(p for w, p in pmf.items() if w <= w_plus + 1e-12)
        hi = sum(p for w, p in pmf.items() if w >= w_plus - 1e-12)
        return min(1.0, 2.0 * min(lo, hi))
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(np.abs(d[d != 0]), return_counts=True)
    tie_term = float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - tie_term
    if var <= 0:
        raise UndefinedTestError("zero variance under the null (all ties)")
    shift = w_plus - mean
    z = (shift - 0.5 * np.sign(shift)) / math.sqrt(var)
    return float(math.erfc(abs(z) / math.sqrt(2.0)))
