"""Train / tune / test protocol over repeated random splits.

For every split and method a dissimilarity model is learned on the train
part.  For every linkage the cut threshold is tuned on the dev part, and the
test part is scored by dendrogram purity and by pairwise F1 of the cut.
Exponential linkage uses the learned alpha of ``expa``; any other method
gets its alpha fitted afterwards on the train part with the model frozen.
"""
from __future__ import annotations

import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError, ExperimentError
from ..evaluate import (
    SplitScores,
    dendrogram_purity_blocks,
    pairwise_f1_blocks,
    resampled_paired_t_test,
    tune_threshold,
)
from ..hac import build_dendrograms, cut_tree
from ..linkage import EXPLINK, LINKAGE_KINDS, Linkage
from ..train import Method, TrainConfig, fit_alpha, train
from .io import format_float
from .splits import SplitSpec, apply_split, make_splits

__all__ = [
    "DEFAULT_SPLIT_RATIOS",
    "ExperimentRow",
    "ExperimentResult",
    "run_split",
    "run_experiment",
    "RESULT_HEADER",
]

# train / dev / test share of clusters or blocks
DEFAULT_SPLIT_RATIOS = (0.35, 0.3, 0.35)

RESULT_HEADER = (
    "kind", "method", "linkage", "split", "dendrogram_purity", "pairwise_f1",
    "threshold", "alpha", "dp_pvalue", "f1_pvalue",
)
NA = "-"


@dataclass(frozen=True)
class ExperimentRow:
    method: str
    linkage: str
    split: int
    dendrogram_purity: float
    pairwise_f1: float
    threshold: float
    alpha: str | None = None

    @property
    def key(self):
        return (self.method, self.linkage, self.split)


@dataclass
class ExperimentResult:
    """Per-split rows plus per-(method, linkage) means and p-values.

    P-values compare each method with the best method (by mean) of the same
    linkage column, using the paired per-split scores; the best method gets 1.
    With a single split there is nothing to test and p-values are NaN.
    """

    rows: list[ExperimentRow]
    methods: tuple[str, ...]
    linkages: tuple[str, ...]
    means: dict = field(default_factory=dict)
    pvalues: dict = field(default_factory=dict)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: (self.methods.index(r.method),
                                                     self.linkages.index(r.linkage), r.split))
        self._aggregate()

    def scores(self, method: str, linkage: str, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.rows
                         if r.method == method and r.linkage == linkage])

    def _aggregate(self) -> None:
        for m in self.methods:
            for lk in self.linkages:
                self.means[(m, lk)] = (
                    float(np.mean(self.scores(m, lk, "dendrogram_purity"))),
                    float(np.mean(self.scores(m, lk, "pairwise_f1"))),
                )
        for lk in self.linkages:
            pv = {}
            for col, metric in enumerate(("dendrogram_purity", "pairwise_f1")):
                # first method wins ties for the column best
                best = max(self.methods, key=lambda m: (self.means[(m, lk)][col], -self.methods.index(m)))
                for m in self.methods:
                    a, b = self.scores(m, lk, metric), self.scores(best, lk, metric)
                    p = resampled_paired_t_test(SplitScores(a, b)) if a.size >= 2 else float("nan")
                    pv.setdefault(m, []).append(p)
            for m, (p_dp, p_f1) in pv.items():
                self.pvalues[(m, lk)] = (p_dp, p_f1)

    def to_tsv(self) -> str:
        out = io.StringIO()
        out.write("\t".join(RESULT_HEADER) + "\n")
        for r in self.rows:
            out.write("\t".join([
                "split", r.method, r.linkage, str(r.split),
                format_float(r.dendrogram_purity), format_float(r.pairwise_f1),
                format_float(r.threshold), r.alpha if r.alpha is not None else NA, NA, NA,
            ]) + "\n")
        for m in self.methods:
            for lk in self.linkages:
                dp, f1 = self.means[(m, lk)]
                p_dp, p_f1 = self.pvalues[(m, lk)]
                out.write("\t".join([
                    "mean", m, lk, NA, format_float(dp), format_float(f1),
                    NA, NA, format_float(p_dp), format_float(p_f1),
                ]) + "\n")
        return out.getvalue()


def _split_seed(seed: int, split: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 11, split]).generate_state(1)[0])


def run_split(dataset, spec: SplitSpec, methods: Sequence[Method], linkages: Sequence[str],
              config: TrainConfig) -> list[ExperimentRow]:
    """All (method, linkage) rows of one split."""
    train_ds, dev_ds, test_ds = apply_split(dataset, spec)
    cfg = config.but(seed=_split_seed(config.seed, spec.index))
    rows = []
    for method in methods:
        result = train(train_ds, cfg.but(method=method))
        model = result.model
        for kind in linkages:
            if kind == EXPLINK:
                alpha = result.alpha if method == Method.EXP_ALPHA else fit_alpha(train_ds, model, cfg)
                linkage = Linkage.explink(alpha)
            else:
                alpha, linkage = None, Linkage(kind)
            xi = tune_threshold(build_dendrograms(dev_ds, model, linkage), dev_ds.labels)
            test_trees = build_dendrograms(test_ds, model, linkage)
            rows.append(ExperimentRow(
                method=method.value,
                linkage=kind,
                split=spec.index,
                dendrogram_purity=dendrogram_purity_blocks(test_trees, test_ds.labels),
                pairwise_f1=pairwise_f1_blocks([cut_tree(t, xi) for t in test_trees], test_ds.labels),
                threshold=xi,
                alpha=str(alpha) if alpha is not None else None,
            ))
    return rows


def run_experiment(dataset, methods: Sequence, linkages: Sequence[str], n_splits: int,
                   config: TrainConfig, *, split_sizes=DEFAULT_SPLIT_RATIOS,
                   split_seed: int | None = None, n_jobs: int = 1) -> ExperimentResult:
    """Run the protocol on ``n_splits`` random splits.

    ``split_sizes`` are train/dev/test counts or ratios.  Splits are drawn
    from ``split_seed`` (default: ``config.seed``).  With ``n_jobs > 1``
    splits run in worker processes; the result does not depend on ``n_jobs``.
    A failing split raises :class:`ExperimentError` naming its index.
    """
    methods = [Method.parse(m) for m in methods]
    linkages = [str(lk) for lk in linkages]
    if not methods or not linkages:
        raise ConfigError("an experiment needs at least one method and one linkage")
    for lk in linkages:
        if lk not in LINKAGE_KINDS:
            raise ConfigError(f"unknown linkage {lk!r}; expected one of {LINKAGE_KINDS}")
    if len(set(methods)) != len(methods) or len(set(linkages)) != len(linkages):
        raise ConfigError("methods and linkages must not repeat")
    seed = config.seed if split_seed is None else split_seed
    specs = make_splits(dataset, split_sizes, n_splits, seed)

    rows: list[ExperimentRow] = []
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            futures = [pool.submit(run_split, dataset, s, methods, linkages, config) for s in specs]
            for spec, fut in zip(specs, futures):
                try:
                    rows.extend(fut.result())
                except Exception as exc:
                    raise ExperimentError(spec.index, exc) from exc
    else:
        for spec in specs:
            try:
                rows.extend(run_split(dataset, spec, methods, linkages, config))
            except Exception as exc:
                raise ExperimentError(spec.index, exc) from exc
    return ExperimentResult(rows, tuple(m.value for m in methods), tuple(linkages))
