"""Random train/dev/test splits.

Point datasets are split by ground-truth cluster, pair datasets by block.
Split ``i`` is drawn from a generator seeded with ``(seed, i)`` only, so any
split can be regenerated on its own.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..core import PairDataset, PointDataset
from ..errors import ConfigError

__all__ = ["SplitSpec", "split_units", "resolve_counts", "make_splits", "apply_split"]

PARTS = ("train", "dev", "test")


@dataclass(frozen=True)
class SplitSpec:
    """Assignment of clusters (points) or blocks (pairs) to the three parts."""

    index: int
    train: tuple[int, ...]
    dev: tuple[int, ...]
    test: tuple[int, ...]
    seed: int
    kind: str

    def __post_init__(self):
        parts = [self.train, self.dev, self.test]
        if any(len(p) == 0 for p in parts):
            raise ConfigError(f"split {self.index}: every part needs at least one unit")
        seen = set()
        for p in parts:
            if seen & set(p) or len(set(p)) != len(p):
                raise ConfigError(f"split {self.index}: parts overlap")
            seen |= set(p)

    def units(self) -> tuple[int, ...]:
        return tuple(sorted(self.train + self.dev + self.test))


def split_units(dataset) -> list[int]:
    """Ids of the units that are assigned to parts."""
    if isinstance(dataset, PointDataset):
        return list(range(dataset.n_clusters))
    return list(dataset.block_ids)


def resolve_counts(total: int, counts_or_ratios: Sequence[float]) -> tuple[int, int, int]:
    """Integer part sizes from counts (summing to ``total``) or from ratios.

    Integer values summing to more than 1 are counts; anything else is read
    as ratios and scaled to ``total`` by largest remainder.
    """
    values = [float(v) for v in counts_or_ratios]
    if len(values) != 3 or any(v < 0 for v in values):
        raise ConfigError(f"need three non-negative train/dev/test sizes, got {list(counts_or_ratios)}")
    if all(v.is_integer() for v in values) and sum(values) > 1:
        counts = [int(v) for v in values]
        if sum(counts) != total:
            raise ConfigError(f"split counts {counts} do not add up to {total} units")
    else:
        s = sum(values)
        if s <= 0:
            raise ConfigError("split ratios must not all be zero")
        exact = np.asarray(values) / s * total
        counts = np.floor(exact).astype(int)
        order = np.argsort(-(exact - counts), kind="stable")
        counts[order[: total - counts.sum()]] += 1
        counts = counts.tolist()
    if min(counts) < 1:
        raise ConfigError(f"split sizes {counts} leave a part empty ({total} units available)")
    return tuple(counts)


def make_splits(dataset, counts_or_ratios, n_splits: int, seed: int) -> list[SplitSpec]:
    if n_splits < 1:
        raise ConfigError(f"n_splits must be >= 1, got {n_splits}")
    units = np.asarray(split_units(dataset))
    n_train, n_dev, _ = resolve_counts(units.size, counts_or_ratios)
    specs = []
    for i in range(n_splits):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, i]))
        perm = units[rng.permutation(units.size)]
        specs.append(SplitSpec(
            index=i,
            train=tuple(sorted(perm[:n_train].tolist())),
            dev=tuple(sorted(perm[n_train:n_train + n_dev].tolist())),
            test=tuple(sorted(perm[n_train + n_dev:].tolist())),
            seed=int(seed),
            kind=dataset.kind,
        ))
    return specs


def _restrict(dataset, unit_ids):
    if isinstance(dataset, PairDataset):
        return dataset.subset_blocks(unit_ids)
    positions = np.flatnonzero(np.isin(dataset.labels, list(unit_ids)))
    return dataset.subset(positions)


def apply_split(dataset, spec: SplitSpec):
    """(train, dev, test) datasets of one split."""
    if spec.kind != dataset.kind:
        raise ConfigError(f"split was made for {spec.kind} data, got {dataset.kind}")
    return tuple(_restrict(dataset, getattr(spec, part)) for part in PARTS)
