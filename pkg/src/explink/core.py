"""Labeled clustering datasets and learnable pairwise dissimilarity models.

Two dataset kinds are supported:

* :class:`PointDataset` holds raw feature vectors, one per point.  Pair
  features are derived as the elementwise absolute difference.
* :class:`PairDataset` holds precomputed feature vectors for every pair of
  points that share a *block*; points in different blocks are never compared.

All clustering, training and evaluation operate on :class:`Unit` objects: a
unit is the scope inside which every pair of points is comparable (the whole
point dataset, or one block of a pair dataset).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import DatasetIntegrityError, DomainError

__all__ = [
    "PointDataset",
    "PairDataset",
    "GroundTruth",
    "Unit",
    "DissimilarityModel",
    "LinearPair",
    "Mahalanobis",
    "Euclidean",
    "pair_feature",
    "dissimilarity",
    "dissimilarity_gradient",
    "ground_truth",
]


def _check_labels(labels: np.ndarray, n: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.shape[0] != n:
        raise DatasetIntegrityError(f"expected {n} labels, got shape {labels.shape}")
    if n and not np.issubdtype(labels.dtype, np.integer):
        raise DatasetIntegrityError("labels must be integers")
    labels = labels.astype(np.int64)
    used = np.unique(labels)
    if n and not np.array_equal(used, np.arange(used.size)):
        raise DatasetIntegrityError(
            f"labels must be exactly 0..K-1 with every id used, got {used.tolist()}"
        )
    return labels


def relabel(labels: Sequence[int]) -> np.ndarray:
    """Map arbitrary integer labels onto 0..K-1 preserving sorted order."""
    _, inverse = np.unique(np.asarray(labels), return_inverse=True)
    return inverse.astype(np.int64)


@dataclass(frozen=True, eq=False)
class Unit:
    """A set of mutually comparable points with their ground-truth labels.

    ``index`` maps local positions back to dataset positions.  Exactly one of
    ``points`` (n x d raw vectors) or ``stored_features`` (n x n x d pair
    features) is set by the owning dataset.
    """

    index: np.ndarray
    labels: np.ndarray
    points: np.ndarray | None = None
    stored_features: np.ndarray | None = None

    @property
    def n(self) -> int:
        return int(self.index.shape[0])

    @property
    def dim(self) -> int:
        if self.points is not None:
            return int(self.points.shape[1])
        return int(self.stored_features.shape[2])

    @cached_property
    def features(self) -> np.ndarray:
        """Pair-feature tensor of shape (n, n, d)."""
        if self.stored_features is not None:
            return self.stored_features
        x = self.points
        return np.abs(x[:, None, :] - x[None, :, :])

    @cached_property
    def same_label(self) -> np.ndarray:
        return self.labels[:, None] == self.labels[None, :]


@dataclass(frozen=True, eq=False)
class PointDataset:
    """Points in R^d with ground-truth cluster labels 0..K-1."""

    points: np.ndarray
    labels: np.ndarray
    ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] < 1:
            raise DatasetIntegrityError(
                f"points must be an (n, d) array with d >= 1, got shape {points.shape}"
            )
        n = points.shape[0]
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "labels", _check_labels(self.labels, n))
        ids = tuple(str(i) for i in self.ids) if self.ids else tuple(str(i) for i in range(n))
        if len(ids) != n or len(set(ids)) != n:
            raise DatasetIntegrityError("ids must be unique, one per point")
        object.__setattr__(self, "ids", ids)

    kind = "points"

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    @cached_property
    def _unit(self) -> Unit:
        return Unit(np.arange(len(self)), self.labels, points=self.points)

    def units(self) -> list[Unit]:
        return [self._unit] if len(self) else []

    def subset(self, positions: Sequence[int]) -> "PointDataset":
        """Restrict to ``positions``; labels are re-indexed to stay contiguous."""
        positions = np.asarray(positions, dtype=np.int64)
        return PointDataset(
            self.points[positions],
            relabel(self.labels[positions]),
            tuple(self.ids[i] for i in positions),
        )

    def equals(self, other) -> bool:
        return (
            isinstance(other, PointDataset)
            and self.ids == other.ids
            and np.array_equal(self.labels, other.labels)
            and np.array_equal(self.points, other.points)
        )


@dataclass(frozen=True, eq=False)
class PairDataset:
    """Points grouped into blocks, with a feature vector for every within-block pair.

    ``features`` maps ``(i, j)`` position pairs to vectors; either orientation
    may be given, lookup is symmetric.
    """

    ids: tuple[str, ...]
    labels: np.ndarray
    blocks: np.ndarray
    features: dict

    kind = "pairs"

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        n = len(ids)
        if len(set(ids)) != n:
            raise DatasetIntegrityError("point ids must be unique")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", _check_labels(self.labels, n))
        blocks = np.asarray(self.blocks)
        if blocks.shape != (n,):
            raise DatasetIntegrityError(f"expected {n} block ids, got shape {blocks.shape}")
        object.__setattr__(self, "blocks", blocks.astype(np.int64))

        canon: dict[tuple[int, int], np.ndarray] = {}
        dim = None
        for (i, j), vec in self.features.items():
            i, j = int(i), int(j)
            if i == j or not (0 <= i < n and 0 <= j < n):
                raise DatasetIntegrityError(f"invalid pair ({i}, {j})")
            if self.blocks[i] != self.blocks[j]:
                raise DatasetIntegrityError(
                    f"pair ({ids[i]}, {ids[j]}) spans blocks {self.blocks[i]} and {self.blocks[j]}"
                )
            vec = np.asarray(vec, dtype=np.float64).reshape(-1)
            if dim is None:
                dim = vec.size
            if vec.size != dim or dim < 1:
                raise DatasetIntegrityError(
                    f"pair ({ids[i]}, {ids[j]}) has {vec.size} features, expected {dim}"
                )
            key = (min(i, j), max(i, j))
            if key in canon:
                raise DatasetIntegrityError(f"duplicate pair ({ids[i]}, {ids[j]})")
            canon[key] = vec
        for block in np.unique(self.blocks):
            members = np.flatnonzero(self.blocks == block)
            for i, j in combinations(members.tolist(), 2):
                if (i, j) not in canon:
                    raise DatasetIntegrityError(
                        f"missing pair feature for ({ids[i]}, {ids[j]}) in block {block}"
                    )
        object.__setattr__(self, "features", canon)
        object.__setattr__(self, "_dim", dim if dim is not None else 0)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self._dim

    @property
    def n_clusters(self) -> int:
        return int(self.labels.max()) + 1 if len(self) else 0

    @property
    def block_ids(self) -> list[int]:
        return np.unique(self.blocks).tolist()

    @cached_property
    def _units(self) -> list[Unit]:
        units = []
        for block in self.block_ids:
            members = np.flatnonzero(self.blocks == block)
            m = members.size
            tensor = np.zeros((m, m, max(self.dim, 1)))
            for a, b in combinations(range(m), 2):
                vec = self.features[(int(members[a]), int(members[b]))]
                tensor[a, b] = vec
                tensor[b, a] = vec
            units.append(Unit(members, self.labels[members], stored_features=tensor))
        return units

    def units(self) -> list[Unit]:
        return list(self._units)

    def subset_blocks(self, block_ids: Sequence[int]) -> "PairDataset":
        """Restrict to the given blocks, keeping labels contiguous."""
        keep = np.flatnonzero(np.isin(self.blocks, list(block_ids)))
        remap = {int(old): new for new, old in enumerate(keep)}
        feats = {
            (remap[i], remap[j]): v
            for (i, j), v in self.features.items()
            if i in remap and j in remap
        }
        return PairDataset(
            tuple(self.ids[i] for i in keep),
            relabel(self.labels[keep]),
            self.blocks[keep],
            feats,
        )

    def equals(self, other) -> bool:
        if not isinstance(other, PairDataset):
            return False
        if self.ids != other.ids or not np.array_equal(self.labels, other.labels):
            return False
        if not np.array_equal(self.blocks, other.blocks):
            return False
        if self.features.keys() != other.features.keys():
            return False
        return all(np.array_equal(v, other.features[k]) for k, v in self.features.items())


@dataclass(frozen=True)
class GroundTruth:
    """Ground-truth partition with its within- and across-cluster pair sets.

    For pair datasets only within-block pairs are enumerated.
    """

    partition: tuple[frozenset, ...]
    within_pairs: frozenset
    across_pairs: frozenset


def ground_truth(dataset: PointDataset | PairDataset) -> GroundTruth:
    labels = dataset.labels
    partition = tuple(
        frozenset(np.flatnonzero(labels == k).tolist()) for k in range(dataset.n_clusters)
    )
    within, across = set(), set()
    for unit in dataset.units():
        for a, b in combinations(unit.index.tolist(), 2):
            (within if labels[a] == labels[b] else across).add((a, b))
    return GroundTruth(partition, frozenset(within), frozenset(across))


def pair_feature(dataset: PointDataset | PairDataset, i: int, j: int) -> np.ndarray:
    """Feature vector of the pair at positions ``i`` and ``j``.

    Point datasets give ``|x_i - x_j|``; pair datasets return the stored vector.
    """
    if i == j:
        raise DomainError("a pair needs two distinct points")
    if isinstance(dataset, PointDataset):
        return np.abs(dataset.points[i] - dataset.points[j])
    if dataset.blocks[i] != dataset.blocks[j]:
        raise DomainError(f"points {dataset.ids[i]} and {dataset.ids[j]} are in different blocks")
    key = (min(i, j), max(i, j))
    try:
        return dataset.features[key]
    except KeyError:
        raise DatasetIntegrityError(f"missing pair feature for {key}") from None


class DissimilarityModel:
    """Base class for learnable dissimilarities.

    ``params`` holds the current parameters and is what gradient steps move.
    ``average`` is the running mean of ``params`` over all completed steps; the
    averaged model (see :meth:`averaged`) is the one used for evaluation.
    """

    def __init__(self, params: np.ndarray):
        self.params = np.array(params, dtype=np.float64)
        self.average = self.params.copy()
        self.n_updates = 0

    # subclass hooks -------------------------------------------------------
    @property
    def dim(self) -> int:
        raise NotImplementedError

    def value(self, pair) -> float:
        raise NotImplementedError

    def gradient(self, pair) -> np.ndarray:
        raise NotImplementedError

    def matrix(self, unit: Unit) -> np.ndarray:
        raise NotImplementedError

    def matrix_gradient(self, unit: Unit, weights: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # shared --------------------------------------------------------------
    def with_params(self, params: np.ndarray) -> "DissimilarityModel":
        """A fresh model (no averaging history) with the given parameters."""
        return type(self)._from_params(np.asarray(params, dtype=np.float64).reshape(self.params.shape))

    @classmethod
    def _from_params(cls, params):
        raise NotImplementedError

    def step(self, grad: np.ndarray, rate: float) -> None:
        self.params = self.params - rate * grad
        self.n_updates += 1
        self.average += (self.params - self.average) / self.n_updates

    def averaged(self) -> "DissimilarityModel":
        return self.with_params(self.average if self.n_updates else self.params)

    def copy(self) -> "DissimilarityModel":
        twin = self.with_params(self.params)
        twin.average = self.average.copy()
        twin.n_updates = self.n_updates
        return twin

    def _check_dim(self, d: int) -> None:
        if d != self.dim:
            raise DomainError(f"input dimension {d} does not match model dimension {self.dim}")


class LinearPair(DissimilarityModel):
    """``f(phi) = w . phi + b`` on a pair-feature vector ``phi``.

    Parameters are stored flat as ``[w_0, ..., w_{d-1}, b]``.
    """

    def __init__(self, weights, bias: float = 0.0):
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        super().__init__(np.append(weights, float(bias)))

    @classmethod
    def _from_params(cls, params):
        return cls(params[:-1], params[-1])

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "LinearPair":
        return cls(rng.uniform(-0.1, 0.1, size=dim), 0.0)

    @property
    def dim(self) -> int:
        return self.params.size - 1

    @property
    def weights(self) -> np.ndarray:
        return self.params[:-1]

    @property
    def bias(self) -> float:
        return float(self.params[-1])

    def value(self, pair) -> float:
        phi = np.asarray(pair, dtype=np.float64)
        self._check_dim(phi.size)
        return float(phi @ self.weights + self.bias)

    def gradient(self, pair) -> np.ndarray:
        phi = np.asarray(pair, dtype=np.float64)
        self._check_dim(phi.size)
        return np.append(phi, 1.0)

    def matrix(self, unit: Unit) -> np.ndarray:
        self._check_dim(unit.dim)
        f = unit.features @ self.weights + self.bias
        np.fill_diagonal(f, 0.0)
        return f

    def matrix_gradient(self, unit: Unit, weights: np.ndarray) -> np.ndarray:
        g = np.array(weights, dtype=np.float64)
        np.fill_diagonal(g, 0.0)
        return np.append(np.einsum("ij,ijd->d", g, unit.features), g.sum())


class Mahalanobis(DissimilarityModel):
    """``f(x, x') = (x - x')^T A^T A (x - x')`` with a square factor ``A``."""

    def __init__(self, factor):
        factor = np.asarray(factor, dtype=np.float64)
        if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
            raise DomainError(f"factor must be square, got shape {factor.shape}")
        super().__init__(factor)

    @classmethod
    def _from_params(cls, params):
        return cls(params)

    @classmethod
    def init(cls, dim: int, rng: np.random.Generator) -> "Mahalanobis":
        return cls(np.eye(dim) + rng.uniform(-0.01, 0.01, size=(dim, dim)))

    @property
    def dim(self) -> int:
        return self.params.shape[0]

    @property
    def factor(self) -> np.ndarray:
        return self.params

    def _delta(self, pair) -> np.ndarray:
        x, x2 = pair
        delta = np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
        self._check_dim(delta.size)
        return delta

    def value(self, pair) -> float:
        y = self.factor @ self._delta(pair)
        return float(y @ y)

    def gradient(self, pair) -> np.ndarray:
        delta = self._delta(pair)
        return 2.0 * self.factor @ np.outer(delta, delta)

    def matrix(self, unit: Unit) -> np.ndarray:
        if unit.points is None:
            raise DomainError("Mahalanobis dissimilarity needs raw points, not pair features")
        self._check_dim(unit.dim)
        y = unit.points @ self.factor.T
        diff = y[:, None, :] - y[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)

    def matrix_gradient(self, unit: Unit, weights: np.ndarray) -> np.ndarray:
        if unit.points is None:
            raise DomainError("Mahalanobis dissimilarity needs raw points, not pair features")
        s = np.array(weights, dtype=np.float64)
        s = s + s.T
        np.fill_diagonal(s, 0.0)
        x = unit.points
        lap = np.diag(s.sum(axis=1)) - s
        return 2.0 * self.factor @ (x.T @ lap @ x)


class Euclidean(DissimilarityModel):
    """Fixed Euclidean distance between raw points; has no parameters."""

    def __init__(self, dim: int):
        super().__init__(np.zeros(0))
        self._dim = int(dim)

    def with_params(self, params):
        return Euclidean(self._dim)

    @property
    def dim(self) -> int:
        return self._dim

    def value(self, pair) -> float:
        x, x2 = pair
        delta = np.asarray(x, dtype=np.float64) - np.asarray(x2, dtype=np.float64)
        self._check_dim(delta.size)
        return float(np.sqrt(delta @ delta))

    def gradient(self, pair) -> np.ndarray:
        return np.zeros(0)

    def matrix(self, unit: Unit) -> np.ndarray:
        if unit.points is None:
            raise DomainError("Euclidean distance needs raw points, not pair features")
        self._check_dim(unit.dim)
        diff = unit.points[:, None, :] - unit.points[None, :, :]
        return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))

    def matrix_gradient(self, unit: Unit, weights: np.ndarray) -> np.ndarray:
        return np.zeros(0)


def dissimilarity(model: DissimilarityModel, pair) -> float:
    """Evaluate ``model`` on a pair-feature vector (linear) or a point pair (Mahalanobis)."""
    return model.value(pair)


def dissimilarity_gradient(model: DissimilarityModel, pair) -> np.ndarray:
    """Gradient of :func:`dissimilarity` w.r.t. the parameters; same shape as ``model.params``."""
    return model.gradient(pair)
