"""Linkage functions over cluster pairs.

A cluster pair is summarised by :class:`LinkageStats`, a set of mergeable
sufficient statistics over its cross-cluster dissimilarities.  Stats merge in
O(1), so an agglomeration never revisits raw pair lists.  All fields may be
scalars or equally shaped arrays; the functions here broadcast.

The exponential linkage is the softmax-weighted mean

    psi(alpha) = sum_i exp(alpha f_i) f_i / sum_i exp(alpha f_i)

which tends to the minimum as alpha -> -inf, equals the mean at alpha = 0 and
tends to the maximum as alpha -> +inf.  Exponentials are always evaluated as
``exp(alpha f - m)`` with ``m = max(alpha f)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

ALPHA_MAX = 50.0

SL, AVG, COMP, EXPLINK = "sl", "avg", "comp", "explink"
LINKAGE_KINDS = (SL, AVG, COMP, EXPLINK)

__all__ = [
    "ALPHA_MAX",
    "Alpha",
    "Linkage",
    "LinkageStats",
    "explink",
    "classic_linkage",
    "merge_stats",
    "explink_alpha_gradient",
    "explink_f_gradients",
]


@dataclass(frozen=True)
class Alpha:
    """Interpolation parameter: ``-inf``, a finite value in [-ALPHA_MAX, ALPHA_MAX], or ``+inf``."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if math.isnan(v):
            raise DomainError("alpha cannot be NaN")
        if math.isfinite(v) and abs(v) > ALPHA_MAX:
            raise DomainError(f"finite alpha must satisfy |alpha| <= {ALPHA_MAX}, got {v}")
        object.__setattr__(self, "value", v)

    @classmethod
    def neg_inf(cls) -> "Alpha":
        return cls(-math.inf)

    @classmethod
    def pos_inf(cls) -> "Alpha":
        return cls(math.inf)

    @classmethod
    def finite(cls, value: float) -> "Alpha":
        if not math.isfinite(value):
            raise DomainError(f"expected a finite alpha, got {value}")
        return cls(value)

    @classmethod
    def clamped(cls, value: float) -> "Alpha":
        return cls(min(max(float(value), -ALPHA_MAX), ALPHA_MAX))

    @classmethod
    def parse(cls, text: str) -> "Alpha":
        t = str(text).strip().lower()
        if t in ("neg-inf", "-inf", "neginf"):
            return cls.neg_inf()
        if t in ("pos-inf", "inf", "+inf", "posinf"):
            return cls.pos_inf()
        return cls.finite(float(t))

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)

    @property
    def is_neg_inf(self) -> bool:
        return self.value == -math.inf

    @property
    def is_pos_inf(self) -> bool:
        return self.value == math.inf

    def __str__(self) -> str:
        if self.is_neg_inf:
            return "neg-inf"
        if self.is_pos_inf:
            return "pos-inf"
        return repr(self.value)


def _as_alpha(alpha) -> Alpha:
    return alpha if isinstance(alpha, Alpha) else Alpha(alpha)


@dataclass(frozen=True)
class LinkageStats:
    """Sufficient statistics of a cross-cluster dissimilarity multiset.

    ``shift``, ``w_sum``, ``wf_sum`` and ``wff_sum`` depend on the finite
    ``alpha`` the stats were built for; the other fields are alpha-free.
    For infinite alpha the weighted sums are kept at alpha = 0.
    ``argmin``/``argmax`` are integer keys of an extremal pair (smallest key
    on ties).
    """

    count: np.ndarray
    sum_f: np.ndarray
    min_f: np.ndarray
    max_f: np.ndarray
    shift: np.ndarray
    w_sum: np.ndarray
    wf_sum: np.ndarray
    wff_sum: np.ndarray
    argmin: np.ndarray
    argmax: np.ndarray
    alpha: float = 0.0

    @staticmethod
    def weight_alpha(alpha) -> float:
        a = _as_alpha(alpha)
        return a.value if a.is_finite else 0.0

    @classmethod
    def from_values(cls, values, alpha=0.0, keys=None) -> "LinkageStats":
        """Stats of a non-empty 1-D list of dissimilarities."""
        f = np.asarray(values, dtype=np.float64).reshape(-1)
        if f.size == 0:
            raise DomainError("linkage of an empty pair set is undefined")
        keys = np.arange(f.size) if keys is None else np.asarray(keys)
        a = cls.weight_alpha(alpha)
        z = a * f
        m = z.max()
        w = np.exp(z - m)
        lo = f.min()
        hi = f.max()
        return cls(
            count=np.int64(f.size),
            sum_f=f.sum(),
            min_f=lo,
            max_f=hi,
            shift=m,
            w_sum=w.sum(),
            wf_sum=(w * f).sum(),
            wff_sum=(w * f * f).sum(),
            argmin=keys[f == lo].min(),
            argmax=keys[f == hi].min(),
            alpha=a,
        )

    @classmethod
    def singletons(cls, f: np.ndarray, alpha=0.0, keys=None) -> "LinkageStats":
        """Elementwise stats where every entry of ``f`` is its own one-pair set."""
        f = np.asarray(f, dtype=np.float64)
        a = cls.weight_alpha(alpha)
        keys = np.arange(f.size).reshape(f.shape) if keys is None else np.asarray(keys)
        return cls(
            count=np.ones(f.shape, dtype=np.int64),
            sum_f=f.copy(),
            min_f=f.copy(),
            max_f=f.copy(),
            shift=a * f,
            w_sum=np.ones(f.shape),
            wf_sum=f.copy(),
            wff_sum=f * f,
            argmin=keys.copy(),
            argmax=keys.copy(),
            alpha=a,
        )

    def take(self, index) -> "LinkageStats":
        """Sub-array view of array-valued stats."""
        return LinkageStats(
            *(getattr(self, name)[index] for name in _ARRAY_FIELDS), alpha=self.alpha
        )

    def put(self, index, other: "LinkageStats") -> None:
        """Write ``other`` into ``index`` of array-valued stats, in place."""
        for name in _ARRAY_FIELDS:
            getattr(self, name)[index] = getattr(other, name)


_ARRAY_FIELDS = (
    "count", "sum_f", "min_f", "max_f", "shift", "w_sum", "wf_sum", "wff_sum", "argmin", "argmax",
)


def _check_nonempty(stats: LinkageStats) -> None:
    if np.any(np.asarray(stats.count) < 1):
        raise DomainError("linkage of an empty pair set is undefined")


def _softmax_mean(stats: LinkageStats):
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = stats.wf_sum / stats.w_sum
    return np.clip(psi, stats.min_f, stats.max_f)


def explink(stats: LinkageStats, alpha) -> float | np.ndarray:
    """Exponential linkage value of the pair set summarised by ``stats``."""
    a = _as_alpha(alpha)
    _check_nonempty(stats)
    if a.is_neg_inf:
        return stats.min_f
    if a.is_pos_inf:
        return stats.max_f
    if a.value != stats.alpha:
        raise DomainError(f"stats were built for alpha={stats.alpha}, not {a.value}")
    return _softmax_mean(stats)


def classic_linkage(stats: LinkageStats, kind: str) -> float | np.ndarray:
    """Single (min), average (mean) or complete (max) linkage."""
    _check_nonempty(stats)
    if kind == SL:
        return stats.min_f
    if kind == AVG:
        return stats.sum_f / stats.count
    if kind == COMP:
        return stats.max_f
    raise DomainError(f"unknown classic linkage {kind!r}")


def _merge(a: LinkageStats, b: LinkageStats) -> LinkageStats:
    # empty entries (count 0) carry shift=-inf and w_sum=0 and merge as identities
    ca, cb = np.asarray(a.count), np.asarray(b.count)
    m = np.maximum(a.shift, b.shift)
    with np.errstate(invalid="ignore", over="ignore"):
        sa = np.where(ca > 0, np.exp(a.shift - m), 0.0)
        sb = np.where(cb > 0, np.exp(b.shift - m), 0.0)
    a_min_wins = (a.min_f < b.min_f) | ((a.min_f == b.min_f) & (a.argmin <= b.argmin))
    a_max_wins = (a.max_f > b.max_f) | ((a.max_f == b.max_f) & (a.argmax <= b.argmax))
    return LinkageStats(
        count=ca + cb,
        sum_f=a.sum_f + b.sum_f,
        min_f=np.minimum(a.min_f, b.min_f),
        max_f=np.maximum(a.max_f, b.max_f),
        shift=m,
        w_sum=a.w_sum * sa + b.w_sum * sb,
        wf_sum=a.wf_sum * sa + b.wf_sum * sb,
        wff_sum=a.wff_sum * sa + b.wff_sum * sb,
        argmin=np.where(a_min_wins, a.argmin, b.argmin),
        argmax=np.where(a_max_wins, a.argmax, b.argmax),
        alpha=a.alpha,
    )


def merge_stats(a: LinkageStats, b: LinkageStats, alpha=None) -> LinkageStats:
    """Stats of the disjoint union of two non-empty pair sets.

    The union's weighted sums are re-shifted to ``max(shift_a, shift_b)``.
    """
    if a.alpha != b.alpha:
        raise DomainError(f"cannot merge stats built for alpha={a.alpha} and alpha={b.alpha}")
    if alpha is not None:
        want = LinkageStats.weight_alpha(alpha)
        if want != a.alpha:
            raise DomainError(f"stats were built for alpha={a.alpha}, not {want}")
    _check_nonempty(a)
    _check_nonempty(b)
    out = _merge(a, b)
    if np.ndim(out.count) == 0:
        out = LinkageStats(*(np.asarray(getattr(out, k))[()] for k in _ARRAY_FIELDS), alpha=out.alpha)
    return out


def explink_alpha_gradient(stats_or_values, alpha) -> float | np.ndarray:
    """Derivative of the exponential linkage w.r.t. a finite alpha.

    Equals the variance of the dissimilarities under the softmax weights, so
    it is never negative.  Accepts either raw values or :class:`LinkageStats`.
    """
    a = _as_alpha(alpha)
    if not a.is_finite:
        raise DomainError("the alpha-gradient is undefined at infinite alpha")
    if isinstance(stats_or_values, LinkageStats):
        stats = stats_or_values
        _check_nonempty(stats)
        if stats.alpha != a.value:
            raise DomainError(f"stats were built for alpha={stats.alpha}, not {a.value}")
        psi = _softmax_mean(stats)
        return np.maximum(stats.wff_sum / stats.w_sum - psi * psi, 0.0)
    f = np.asarray(stats_or_values, dtype=np.float64).reshape(-1)
    if f.size == 0:
        raise DomainError("linkage of an empty pair set is undefined")
    w = _weights(f, a.value)
    psi = w @ f
    return float(w @ (f - psi) ** 2)


def _weights(f: np.ndarray, a: float) -> np.ndarray:
    z = a * f
    w = np.exp(z - z.max())
    return w / w.sum()


def explink_f_gradients(values, alpha) -> np.ndarray:
    """Partial derivatives of the exponential linkage w.r.t. each dissimilarity.

    For infinite alpha this is the subgradient putting all mass on the first
    minimal (``-inf``) or maximal (``+inf``) entry.
    """
    a = _as_alpha(alpha)
    f = np.asarray(values, dtype=np.float64).reshape(-1)
    if f.size == 0:
        raise DomainError("linkage of an empty pair set is undefined")
    if not a.is_finite:
        g = np.zeros_like(f)
        g[np.argmin(f) if a.is_neg_inf else np.argmax(f)] = 1.0
        return g
    w = _weights(f, a.value)
    return w * (1.0 + a.value * (f - w @ f))


@dataclass(frozen=True)
class Linkage:
    """A linkage choice for HAC: ``sl``, ``avg``, ``comp`` or ``explink`` with an alpha."""

    kind: str
    alpha: Alpha | None = None

    def __post_init__(self):
        if self.kind not in LINKAGE_KINDS:
            raise DomainError(f"unknown linkage {self.kind!r}; expected one of {LINKAGE_KINDS}")
        if self.kind == EXPLINK:
            if self.alpha is None:
                raise DomainError("explink needs an alpha")
            object.__setattr__(self, "alpha", _as_alpha(self.alpha))
        elif self.alpha is not None:
            raise DomainError(f"{self.kind} linkage takes no alpha")

    @classmethod
    def explink(cls, alpha) -> "Linkage":
        return cls(EXPLINK, _as_alpha(alpha))

    @property
    def stats_alpha(self) -> float:
        """The alpha that weighted sums must be built for."""
        return LinkageStats.weight_alpha(self.alpha) if self.kind == EXPLINK else 0.0

    def value(self, stats: LinkageStats):
        """Linkage value; unchecked so it can run on masked engine arrays."""
        if self.kind == SL or (self.kind == EXPLINK and self.alpha.is_neg_inf):
            return stats.min_f
        if self.kind == COMP or (self.kind == EXPLINK and self.alpha.is_pos_inf):
            return stats.max_f
        if self.kind == AVG:
            with np.errstate(invalid="ignore", divide="ignore"):
                return stats.sum_f / stats.count
        return _softmax_mean(stats)

    def __str__(self) -> str:
        return f"explink({self.alpha})" if self.kind == EXPLINK else self.kind
