"""Clustering evaluation: dendrogram purity, pairwise F1, threshold tuning, significance.

Ground truth is passed as a label array indexed by dataset position, or as a
:class:`~explink.core.GroundTruth`.  Multi-block results aggregate as follows:
purity is averaged with weight |within pairs| per block, F1 pools its pair
counts (micro average).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import betainc

from .core import GroundTruth
from .errors import DomainError
from .hac import Dendrogram, FlatClustering, cut_tree

__all__ = [
    "SplitScores",
    "dendrogram_purity",
    "dendrogram_purity_blocks",
    "pairwise_f1",
    "pairwise_f1_blocks",
    "pair_counts",
    "threshold_candidates",
    "tune_threshold",
    "resampled_paired_t_test",
]


def _labels_for(truth, points: np.ndarray) -> np.ndarray:
    if isinstance(truth, GroundTruth):
        lookup = {}
        for k, block in enumerate(truth.partition):
            for p in block:
                lookup[p] = k
        try:
            return np.array([lookup[int(p)] for p in points], dtype=np.int64)
        except KeyError as exc:
            raise DomainError(f"point {exc.args[0]} is not covered by the ground truth") from None
    return np.asarray(truth)[np.asarray(points)]


def _comb2(x):
    x = np.asarray(x, dtype=np.float64)
    return x * (x - 1.0) / 2.0


def _purity_sums(tree: Dendrogram, truth) -> tuple[float, float]:
    """(sum of LCA purities over same-cluster pairs, number of such pairs)."""
    labels = _labels_for(truth, tree.points)
    _, labels = np.unique(labels, return_inverse=True)
    n = tree.n_leaves
    k = int(labels.max()) + 1 if n else 0
    n_pairs = float(_comb2(np.bincount(labels, minlength=k)).sum()) if n else 0.0
    if n < 2:
        return 0.0, n_pairs
    counts = np.zeros((2 * n - 1, k))
    counts[np.arange(n), labels] = 1.0
    total = 0.0
    for t in range(n - 1):
        l, r = tree.left[t], tree.right[t]
        c = counts[l] + counts[r]
        counts[n + t] = c
        # pairs split by this node have it as their LCA
        total += float(np.sum(counts[l] * counts[r] * c) / c.sum())
    return total, n_pairs


def dendrogram_purity(tree: Dendrogram, truth) -> float:
    """Mean over same-cluster leaf pairs of the purity of their lowest common ancestor."""
    total, n_pairs = _purity_sums(tree, truth)
    if n_pairs == 0:
        raise DomainError("dendrogram purity needs at least one same-cluster pair")
    return total / n_pairs


def dendrogram_purity_blocks(trees: Sequence[Dendrogram], truth) -> float:
    """Purity over several trees, weighting each by its number of same-cluster pairs."""
    sums = [_purity_sums(t, truth) for t in trees]
    n_pairs = sum(p for _, p in sums)
    if n_pairs == 0:
        raise DomainError("dendrogram purity needs at least one same-cluster pair")
    return sum(s for s, _ in sums) / n_pairs


def pair_counts(pred: FlatClustering, truth) -> tuple[float, float, float]:
    """(true positives, predicted same-cluster pairs, true same-cluster pairs)."""
    labels = _labels_for(truth, pred.points)
    if labels.size == 0:
        return 0.0, 0.0, 0.0
    _, labels = np.unique(labels, return_inverse=True)
    _, assign = np.unique(pred.assignment, return_inverse=True)
    table = np.zeros((assign.max() + 1, labels.max() + 1))
    np.add.at(table, (assign, labels), 1.0)
    return (
        float(_comb2(table).sum()),
        float(_comb2(table.sum(axis=1)).sum()),
        float(_comb2(table.sum(axis=0)).sum()),
    )


def _f1(tp: float, n_pred: float, n_true: float) -> float:
    if tp == 0:
        return 0.0
    precision, recall = tp / n_pred, tp / n_true
    return 2 * precision * recall / (precision + recall)


def pairwise_f1(pred: FlatClustering, truth) -> float:
    """Harmonic mean of pairwise precision and recall; 0 when no pair is correct."""
    return _f1(*pair_counts(pred, truth))


def pairwise_f1_blocks(preds: Sequence[FlatClustering], truth) -> float:
    """Micro-averaged F1 pooling pair counts over blocks."""
    counts = np.array([pair_counts(p, truth) for p in preds]).reshape(-1, 3).sum(axis=0)
    return _f1(*counts)


def threshold_candidates(trees: Sequence[Dendrogram]) -> np.ndarray:
    """Midpoints between consecutive distinct merge heights, plus one sentinel on each side."""
    heights = np.unique(np.concatenate([np.asarray(t.height, dtype=np.float64) for t in trees] or [[]]))
    if heights.size == 0:
        return np.array([0.0])
    mids = (heights[:-1] + heights[1:]) / 2.0
    return np.concatenate([[heights[0] - 1.0], mids, [heights[-1] + 1.0]])


def tune_threshold(dev_trees: Sequence[Dendrogram], truth, candidates=None) -> float:
    """Cut threshold maximising pooled dev-set F1; ties go to the smallest threshold."""
    if not dev_trees:
        raise DomainError("threshold tuning needs at least one dev tree")
    cands = threshold_candidates(dev_trees) if candidates is None else np.asarray(candidates, dtype=np.float64)
    cands = np.unique(cands)
    best, best_f1 = float(cands[0]), -1.0
    for xi in cands:
        score = pairwise_f1_blocks([cut_tree(t, xi) for t in dev_trees], truth)
        if score > best_f1:
            best, best_f1 = float(xi), score
    return best


@dataclass(frozen=True)
class SplitScores:
    """Paired per-split scores of two competing methods."""

    first: np.ndarray
    second: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.first, dtype=np.float64)
        b = np.asarray(self.second, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1 or a.size < 2:
            raise DomainError("paired scores need two equal-length vectors of length >= 2")
        object.__setattr__(self, "first", a)
        object.__setattr__(self, "second", b)


def resampled_paired_t_test(scores: SplitScores) -> float:
    """Two-sided p-value of the paired t statistic over per-split differences.

    Degenerate cases: all differences zero gives 1; zero variance with a
    nonzero mean gives 0.
    """
    d = scores.first - scores.second
    n = d.size
    mean = d.mean()
    sd = d.std(ddof=1)
    if sd == 0:
        return 1.0 if mean == 0 else 0.0
    t = mean / (sd / np.sqrt(n))
    df = n - 1
    return float(betainc(df / 2.0, 0.5, df / (df + t * t)))
