"""Training procedures for the dissimilarity function (and the linkage alpha).

Every method runs ``epochs`` full-batch gradient steps.  The pair-based
methods (all-pairs, triplets, best edges, MST) reduce each epoch to a list of
within-cluster and across-cluster pairs scored with the same thresholded
hinge: within pairs pay ``max(0, f - (tau - mu))``, across pairs pay
``max(0, (tau + mu) - f)``.  The exponential-linkage methods replay HAC with
pure merges only and penalise impure cluster pairs that undercut the best
pure merge.

Gradients are accumulated as a weight matrix ``G`` over point pairs of a
unit, ``G[i, j] = dLoss / df_ij``, and pushed through the model with
:meth:`~explink.core.DissimilarityModel.matrix_gradient`.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import DissimilarityModel, LinearPair, Mahalanobis, PointDataset, Unit
from .errors import ConfigError, DomainError
from .hac import HacState, build_dendrograms
from .linkage import Alpha, Linkage, explink_alpha_gradient

__all__ = [
    "Method",
    "TrainConfig",
    "TrainResult",
    "EpochResult",
    "hinge_terms",
    "pair_hinge_losses",
    "sample_triplets",
    "best_edges",
    "prim_mst",
    "mst_edges",
    "explink_training_epoch",
    "init_model",
    "epoch_loss",
    "train",
    "train_ap",
    "train_trp",
    "train_bst",
    "train_sl",
    "train_explink",
    "fit_alpha",
    "fit_alpha_path",
    "tune_bias",
]


class Method(str, Enum):
    AP = "ap"
    TRP = "trp"
    BST = "bst"
    MST = "mst"
    EXP_MINUS = "exp-"
    EXP_ZERO = "exp0"
    EXP_PLUS = "exp+"
    EXP_ALPHA = "expa"

    @classmethod
    def parse(cls, text) -> "Method":
        if isinstance(text, cls):
            return text
        key = str(text).strip().lower()
        aliases = {
            "exp_minus": "exp-", "exp-minus": "exp-", "expminus": "exp-",
            "exp_zero": "exp0", "exp-zero": "exp0", "expzero": "exp0",
            "exp_plus": "exp+", "exp-plus": "exp+", "expplus": "exp+",
            "exp_alpha": "expa", "exp-alpha": "expa", "expalpha": "expa",
        }
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            raise ConfigError(f"unknown training method {text!r}") from None

    @property
    def is_explink(self) -> bool:
        return self in (Method.EXP_MINUS, Method.EXP_ZERO, Method.EXP_PLUS, Method.EXP_ALPHA)


MODEL_KINDS = ("linear", "mahalanobis")
# threshold and margin per model kind when the config leaves them unset
HINGE_DEFAULTS = {"linear": (0.0, 2.0), "mahalanobis": (100.0, 10.0)}


@dataclass(frozen=True)
class TrainConfig:
    method: Method = Method.AP
    epochs: int = 100
    rate_theta: float = 0.01
    rate_alpha: float = 0.05
    threshold: float | None = None
    margin: float | None = None
    triplet_multiplier: int = 100
    use_margin: bool = True
    seed: int = 0
    model: str = "linear"
    average: bool = True

    def __post_init__(self):
        object.__setattr__(self, "method", Method.parse(self.method))
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if not self.rate_theta > 0:
            raise ConfigError(f"rate_theta must be > 0, got {self.rate_theta}")
        if not self.rate_alpha >= 0:
            raise ConfigError(f"rate_alpha must be >= 0, got {self.rate_alpha}")
        if self.margin is not None and self.margin < 0:
            raise ConfigError(f"margin must be >= 0, got {self.margin}")
        if self.triplet_multiplier < 1:
            raise ConfigError(f"triplet_multiplier must be >= 1, got {self.triplet_multiplier}")
        if self.model not in MODEL_KINDS:
            raise ConfigError(f"model must be one of {MODEL_KINDS}, got {self.model!r}")

    @property
    def tau(self) -> float:
        return HINGE_DEFAULTS[self.model][0] if self.threshold is None else float(self.threshold)

    @property
    def mu(self) -> float:
        return HINGE_DEFAULTS[self.model][1] if self.margin is None else float(self.margin)

    def but(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


@dataclass
class TrainResult:
    model: DissimilarityModel
    alpha: Alpha | None
    loss_trace: np.ndarray
    alpha_trace: np.ndarray = field(default_factory=lambda: np.zeros(0))
    impure_merges: int = 0
    final_model: DissimilarityModel | None = None


@dataclass
class EpochResult:
    loss: float
    grad_theta: np.ndarray
    grad_alpha: float = 0.0
    merges: int = 0
    impure_merges: int = 0


# ---------------------------------------------------------------------------
# hinge template

def hinge_terms(f_within, f_across, tau: float, mu: float, use_margin: bool = True):
    """Loss and per-pair derivatives for within/across dissimilarity arrays."""
    fw = np.asarray(f_within, dtype=np.float64)
    fa = np.asarray(f_across, dtype=np.float64)
    if not use_margin:
        return float(fw.sum() - fa.sum()), np.ones_like(fw), -np.ones_like(fa)
    hw = fw - (tau - mu)
    ha = (tau + mu) - fa
    loss = float(np.sum(hw[hw > 0]) + np.sum(ha[ha > 0]))
    return loss, (hw > 0).astype(np.float64), -(ha > 0).astype(np.float64)


def _pairs(arr) -> np.ndarray:
    return np.asarray(arr, dtype=np.int64).reshape(-1, 2)


def _unit_pair_loss(unit, model, d, within, across, tau, mu, use_margin):
    within, across = _pairs(within), _pairs(across)
    loss, gw, ga = hinge_terms(
        d[within[:, 0], within[:, 1]], d[across[:, 0], across[:, 1]], tau, mu, use_margin
    )
    g = np.zeros_like(d)
    np.add.at(g, (within[:, 0], within[:, 1]), gw)
    np.add.at(g, (across[:, 0], across[:, 1]), ga)
    return loss, model.matrix_gradient(unit, g)


def pair_hinge_losses(model, unit: Unit, within, across, tau: float, mu: float, use_margin: bool = True):
    """Hinge loss over explicit pair lists of one unit and its parameter gradient.

    ``within`` and ``across`` are (m, 2) arrays of local positions; repeats count
    with multiplicity.  Without the margin this is the raw all-pairs loss
    ``sum(f_within) - sum(f_across)``.
    """
    return _unit_pair_loss(unit, model, model.matrix(unit), within, across, tau, mu, use_margin)


# ---------------------------------------------------------------------------
# pair generators

def _upper_pairs(mask: np.ndarray) -> np.ndarray:
    return np.argwhere(np.triu(mask, 1))


def _all_pairs(unit: Unit):
    same = unit.same_label
    return _upper_pairs(same), _upper_pairs(~same)


def _unit_lookup(dataset):
    n = len(dataset)
    unit_of = np.full(n, -1, dtype=np.int64)
    local_of = np.full(n, -1, dtype=np.int64)
    for u, unit in enumerate(dataset.units()):
        unit_of[unit.index] = u
        local_of[unit.index] = np.arange(unit.n)
    return unit_of, local_of


def _rng(seed, *stream) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *stream]))


def sample_triplets(dataset, multiplier: int = 100, seed: int = 0) -> np.ndarray:
    """``multiplier * len(dataset)`` (anchor, positive, negative) triplets of dataset positions.

    Anchors are uniform over points that have a same-cluster partner and an
    out-of-cluster point in their block; positives and negatives are uniform
    over those candidates.
    """
    rng = _rng(seed, 1)
    n_samples = int(multiplier) * len(dataset)
    groups = []  # (same-cluster members, out-of-cluster points) per cluster and block
    for unit in dataset.units():
        for lab in np.unique(unit.labels):
            members = unit.index[unit.labels == lab]
            outsiders = unit.index[unit.labels != lab]
            if members.size >= 2 and outsiders.size >= 1:
                groups.append((members, outsiders))
    if not groups or n_samples == 0:
        return np.zeros((0, 3), dtype=np.int64)
    eligible = np.concatenate([m for m, _ in groups])
    group_of = np.concatenate([np.full(m.size, g) for g, (m, _) in enumerate(groups)])
    pick = rng.integers(0, eligible.size, size=n_samples)
    anchors = eligible[pick]
    pos = np.empty(n_samples, dtype=np.int64)
    neg = np.empty(n_samples, dtype=np.int64)
    for g, (members, outsiders) in enumerate(groups):
        sel = np.flatnonzero(group_of[pick] == g)
        if sel.size == 0:
            continue
        where = np.searchsorted(members, anchors[sel])
        r = rng.integers(0, members.size - 1, size=sel.size)
        pos[sel] = members[r + (r >= where)]
        neg[sel] = outsiders[rng.integers(0, outsiders.size, size=sel.size)]
    return np.stack([anchors, pos, neg], axis=1)


def _masked_argmin(d: np.ndarray, mask: np.ndarray):
    masked = np.where(mask, d, np.inf)
    j = np.argmin(masked, axis=1)
    ok = np.isfinite(masked[np.arange(d.shape[0]), j])
    return j, ok


def _unit_best_edges(unit: Unit, d: np.ndarray):
    same = unit.same_label.copy()
    np.fill_diagonal(same, False)
    rows = np.arange(unit.n)
    jw, okw = _masked_argmin(d, same)
    ja, oka = _masked_argmin(d, ~unit.same_label)
    within = np.stack([rows[okw], jw[okw]], axis=1)
    across = np.stack([rows[oka], ja[oka]], axis=1)
    return within, across


def best_edges(dataset, model: DissimilarityModel):
    """For each point, its most similar same-cluster and different-cluster partners.

    Returns two (m, 2) arrays of dataset positions.  Points without a partner
    of the required kind in their block contribute no pair.
    """
    within, across = [], []
    for unit in dataset.units():
        w, a = _unit_best_edges(unit, model.matrix(unit))
        within.append(unit.index[w])
        across.append(unit.index[a])
    empty = np.zeros((0, 2), dtype=np.int64)
    return (
        np.concatenate(within) if within else empty,
        np.concatenate(across) if across else empty,
    )


def prim_mst(d: np.ndarray) -> list[tuple[int, int]]:
    """Edges of a minimum spanning tree of the complete graph with weights ``d``.

    Dense Prim's algorithm started from vertex 0; ties go to the lowest index.
    """
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        return []
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = d[0].copy()
    source = np.zeros(n, dtype=np.int64)
    edges = []
    for _ in range(n - 1):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        u = int(source[v])
        edges.append((min(u, v), max(u, v)))
        in_tree[v] = True
        closer = (~in_tree) & (d[v] < best)
        best[closer] = d[v][closer]
        source[closer] = v
    return edges


def mst_edges(dataset, cluster, model: DissimilarityModel) -> list[tuple[int, int]]:
    """MST edges (dataset positions) over the points of one cluster under ``model``."""
    cluster = np.asarray(sorted(cluster), dtype=np.int64)
    if cluster.size < 2:
        return []
    unit_of, local_of = _unit_lookup(dataset)
    units = dataset.units()
    u = unit_of[cluster[0]]
    if np.any(unit_of[cluster] != u):
        raise DomainError("cluster spans several blocks")
    local = local_of[cluster]
    d = model.matrix(units[u])[np.ix_(local, local)]
    return [(int(cluster[a]), int(cluster[b])) for a, b in prim_mst(d)]


def _unit_mst_pairs(unit: Unit, d: np.ndarray):
    within = []
    for lab in np.unique(unit.labels):
        members = np.flatnonzero(unit.labels == lab)
        for a, b in prim_mst(d[np.ix_(members, members)]):
            within.append((members[a], members[b]))
    ja, oka = _masked_argmin(d, ~unit.same_label)
    rows = np.arange(unit.n)
    across = np.stack([rows[oka], ja[oka]], axis=1)
    return _pairs(within), across


# ---------------------------------------------------------------------------
# exponential-linkage epoch

def _explink_unit(unit: Unit, d: np.ndarray, alpha: Alpha, tau, mu, use_margin):
    n = unit.n
    state = HacState(d, Linkage.explink(alpha))
    labels = unit.labels
    g = np.zeros((n, n))
    loss = 0.0
    dalpha = 0.0
    merges = impure = 0
    upper = np.triu(np.ones((n, n), dtype=bool), 1)
    while state.n_active > 1:
        act = state.active
        slot_label = np.full(n, -1)
        slot_label[act] = labels[act]  # every active slot is pure during training
        live = upper & act[:, None] & act[None, :]
        pure = live & (slot_label[:, None] == slot_label[None, :])
        if not pure.any():
            break
        u, v = state.best_pair(allowed=pure | pure.T)
        values = state.values
        psi = values[u, v]
        impure_pairs = live & ~pure
        coef = np.zeros((n, n))
        if use_margin:
            gap = psi - (tau - mu)
            if gap > 0:
                loss += gap
                coef[min(u, v), max(u, v)] += 1.0
            viol = impure_pairs & (values < tau + mu)
            loss += float(np.sum((tau + mu) - values[viol]))
        else:
            viol = impure_pairs & (values < psi)
            loss += float(np.sum(psi - values[viol]))
            coef[min(u, v), max(u, v)] += float(viol.sum())
        coef[viol] -= 1.0
        if coef.any():
            dalpha += _push_gradients(state, coef, alpha, g)
        a_lab = labels[state.members(u)]
        b_lab = labels[state.members(v)]
        if not (np.all(a_lab == a_lab[0]) and np.all(b_lab == a_lab[0])):
            impure += 1
        state.merge(u, v)
        merges += 1
    return loss, g, dalpha, merges, impure


def _push_gradients(state: HacState, coef: np.ndarray, alpha: Alpha, g: np.ndarray) -> float:
    """Add ``sum coef[s, t] * dpsi_st / df`` into ``g``; returns the alpha-derivative."""
    coef = coef + coef.T
    assign = state.assign
    point_coef = np.triu(coef[assign][:, assign], 1)
    ii, jj = np.nonzero(point_coef)
    c = point_coef[ii, jj]
    si, sj = assign[ii], assign[jj]
    st = state.stats
    if alpha.is_finite:
        a = alpha.value
        f = state.dissim[ii, jj]
        w = np.exp(a * f - st.shift[si, sj]) / st.w_sum[si, sj]
        psi = state.values[si, sj]
        np.add.at(g, (ii, jj), c * w * (1.0 + a * (f - psi)))
        slot_coef = np.triu(coef, 1)
        ss, tt = np.nonzero(slot_coef)
        var = explink_alpha_gradient(st.take((ss, tt)), alpha)
        return float(np.sum(slot_coef[ss, tt] * var))
    extreme = st.argmin if alpha.is_neg_inf else st.argmax
    hit = state.pair_key[ii, jj] == extreme[si, sj]
    np.add.at(g, (ii[hit], jj[hit]), c[hit])
    return 0.0


def explink_training_epoch(dataset, model: DissimilarityModel, alpha, tau: float, mu: float,
                           use_margin: bool = True) -> EpochResult:
    """Loss and gradients of one pass of pure-merge-only HAC over every unit.

    In each round the cheapest pure merge (both clusters inside one
    ground-truth cluster) is taken.  Without the margin, every impure pair
    whose linkage is strictly below it pays the difference.  With the
    margin, the pure merge pays ``max(0, psi - (tau - mu))`` and every
    impure pair pays ``max(0, (tau + mu) - psi)``.  Rounds stop when no
    pure merge remains.
    """
    alpha = alpha if isinstance(alpha, Alpha) else Alpha(alpha)
    grad = np.zeros_like(model.params)
    total = dalpha = 0.0
    merges = impure = 0
    for unit in dataset.units():
        if unit.n < 2:
            continue
        loss, g, da, m, bad = _explink_unit(unit, model.matrix(unit), alpha, tau, mu, use_margin)
        total += loss
        dalpha += da
        merges += m
        impure += bad
        if g.any():
            grad = grad + model.matrix_gradient(unit, g)
    return EpochResult(total, grad, dalpha, merges, impure)


# ---------------------------------------------------------------------------
# drivers

def init_model(dataset, config: TrainConfig) -> DissimilarityModel:
    rng = _rng(config.seed, 0)
    if config.model == "mahalanobis":
        if not isinstance(dataset, PointDataset):
            raise ConfigError("the Mahalanobis model needs a point dataset")
        return Mahalanobis.init(dataset.dim, rng)
    return LinearPair.init(dataset.dim, rng)


def _check_trainable(dataset) -> None:
    if dataset.n_clusters < 2:
        raise DomainError("training needs at least two ground-truth clusters")


def _finish(model, config, trace, alpha=None, alpha_trace=(), impure=0) -> TrainResult:
    final = model.copy()
    out = model.averaged() if config.average else model.with_params(model.params)
    return TrainResult(out, alpha, np.asarray(trace, dtype=np.float64),
                       np.asarray(alpha_trace, dtype=np.float64), impure, final)


def _epoch_pairs(dataset, config: TrainConfig, epoch: int, units, model):
    """(within, across) local pair lists per unit for one epoch of a pair-based method."""
    method = config.method
    if method == Method.AP:
        return [_all_pairs(u) for u in units]
    if method == Method.BST:
        return [_unit_best_edges(u, model.matrix(u)) for u in units]
    if method == Method.MST:
        return [_unit_mst_pairs(u, model.matrix(u)) for u in units]
    # triplets are resampled every epoch
    unit_of, local_of = _unit_lookup(dataset)
    position = {id(u): k for k, u in enumerate(dataset.units())}
    trip = sample_triplets(dataset, config.triplet_multiplier, _epoch_seed(config.seed, epoch))
    out = []
    for unit in units:
        loc = local_of[trip[unit_of[trip[:, 0]] == position[id(unit)]]]
        out.append((loc[:, [0, 1]], loc[:, [0, 2]]))
    return out


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, 7, epoch]).generate_state(1)[0])


def epoch_loss(dataset, model: DissimilarityModel, config: TrainConfig, epoch: int = 0,
               alpha=None) -> EpochResult:
    """Loss and gradient of one training epoch of ``config.method`` at ``model``.

    Exponential-linkage methods use their fixed alpha, or ``alpha`` (required
    for ``expa``).
    """
    if config.method.is_explink:
        if alpha is None:
            if config.method == Method.EXP_ALPHA:
                raise ConfigError("expa needs an explicit alpha")
            alpha = _FIXED_ALPHA[config.method]
        return explink_training_epoch(dataset, model, alpha, config.tau, config.mu, config.use_margin)
    units = [u for u in dataset.units() if u.n >= 2]
    total = 0.0
    grad = np.zeros_like(model.params)
    for unit, (within, across) in zip(units, _epoch_pairs(dataset, config, epoch, units, model)):
        loss, g = _unit_pair_loss(unit, model, model.matrix(unit), within, across,
                                  config.tau, config.mu, config.use_margin)
        total += loss
        grad = grad + g
    return EpochResult(total, grad)


def _train_pairs(dataset, config: TrainConfig, model) -> TrainResult:
    _check_trainable(dataset)
    model = init_model(dataset, config) if model is None else model.copy()
    trace = []
    for epoch in range(config.epochs):
        res = epoch_loss(dataset, model, config, epoch)
        trace.append(res.loss)
        model.step(res.grad_theta, config.rate_theta)
    return _finish(model, config, trace)


def train_ap(dataset, config: TrainConfig, model=None) -> TrainResult:
    """All within- and across-cluster pairs, every epoch."""
    return _train_pairs(dataset, config.but(method=Method.AP), model)


def train_trp(dataset, config: TrainConfig, model=None) -> TrainResult:
    """Triplet-derived pairs (anchor-positive within, anchor-negative across), resampled every epoch."""
    return _train_pairs(dataset, config.but(method=Method.TRP), model)


def train_bst(dataset, config: TrainConfig, model=None) -> TrainResult:
    """Nearest same-cluster and nearest different-cluster partner of every point."""
    return _train_pairs(dataset, config.but(method=Method.BST), model)


def train_sl(dataset, config: TrainConfig, model=None) -> TrainResult:
    """MST edges of every ground-truth cluster against each point's nearest outsider."""
    return _train_pairs(dataset, config.but(method=Method.MST), model)


_FIXED_ALPHA = {
    Method.EXP_MINUS: Alpha.neg_inf(),
    Method.EXP_ZERO: Alpha(0.0),
    Method.EXP_PLUS: Alpha.pos_inf(),
}


def train_explink(dataset, config: TrainConfig, model=None) -> TrainResult:
    """Exponential-linkage training with a fixed alpha, or jointly with alpha for ``expa``."""
    _check_trainable(dataset)
    if not config.method.is_explink:
        raise ConfigError(f"{config.method.value} is not an exponential-linkage method")
    model = init_model(dataset, config) if model is None else model.copy()
    if config.method == Method.EXP_ALPHA:
        alpha = Alpha(_rng(config.seed, 2).uniform(-1.0, 1.0))
    else:
        alpha = _FIXED_ALPHA[config.method]
    trace, alphas = [], []
    impure = 0
    for _ in range(config.epochs):
        res = explink_training_epoch(dataset, model, alpha, config.tau, config.mu, config.use_margin)
        trace.append(res.loss)
        impure += res.impure_merges
        model.step(res.grad_theta, config.rate_theta)
        if config.method == Method.EXP_ALPHA:
            alpha = Alpha.clamped(alpha.value - config.rate_alpha * res.grad_alpha)
        alphas.append(alpha.value)
    return _finish(model, config, trace, alpha, alphas, impure)


def fit_alpha_path(dataset, model: DissimilarityModel, config: TrainConfig):
    """Gradient descent on alpha alone from 0; returns (alphas, losses) per epoch.

    ``losses[t]`` is the loss at ``alphas[t]``; the last alpha is the result.
    """
    frozen = model.with_params(model.params)
    alpha = Alpha(0.0)
    alphas, losses = [alpha.value], []
    for _ in range(config.epochs):
        res = explink_training_epoch(dataset, frozen, alpha, config.tau, config.mu, config.use_margin)
        losses.append(res.loss)
        alpha = Alpha.clamped(alpha.value - config.rate_alpha * res.grad_alpha)
        alphas.append(alpha.value)
    losses.append(explink_training_epoch(dataset, frozen, alpha, config.tau, config.mu,
                                         config.use_margin).loss)
    return np.asarray(alphas), np.asarray(losses)


def fit_alpha(dataset, model: DissimilarityModel, config: TrainConfig) -> Alpha:
    """Pick the exponential linkage for a trained model by descending the loss over alpha."""
    alphas, _ = fit_alpha_path(dataset, model, config)
    return Alpha.clamped(alphas[-1])


_TRAINERS = {
    Method.AP: train_ap,
    Method.TRP: train_trp,
    Method.BST: train_bst,
    Method.MST: train_sl,
}


def train(dataset, config: TrainConfig, model=None) -> TrainResult:
    if config.method.is_explink:
        return train_explink(dataset, config, model)
    return _TRAINERS[config.method](dataset, config, model)


def tune_bias(dataset, model: LinearPair, linkage: Linkage) -> LinearPair:
    """Shift the bias so that cutting at zero gives the best F1 on ``dataset``.

    Optional post-step for linear models.  Every supported linkage shifts by
    the same constant as the dissimilarities, so the merge order is unchanged.
    """
    from .evaluate import tune_threshold

    if not isinstance(model, LinearPair):
        raise DomainError("bias tuning applies to linear models only")
    xi = tune_threshold(build_dendrograms(dataset, model, linkage), dataset.labels)
    return LinearPair(model.weights, model.bias - xi)
