"""Pairwise stochastic gradient ascent for SPMC and the baselines.

Two implementations of every update live side by side: readable per-sample
numpy functions (``spmc_gradient``, ``sgd_step``, ``sbpr_step``, ...) and the
compiled epoch loops in ``_kernels`` that ``train`` runs. Both consume the
same random stream, so tests can replay one against the other.

Randomness: every run derives two independent numpy ``PCG64`` generators
from the seed, ``default_rng([seed, 0])`` for initialization and
``default_rng([seed, 1])`` for sampling. Sampling only ever calls
``Generator.random`` and maps uniforms to indices with ``floor(u * n)``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from . import _kernels
from .corpus import SplitCorpus, friend_context
from .errors import TrainingDiverged
from .models import ModelKind, ModelParams, ScoreContext, init_params, score, sigmoid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    kind: ModelKind = ModelKind.SPMC
    K: int = 20
    eta: float = 0.05
    lam: float = 0.01
    alpha: float = 1.0
    epochs: int = 50
    seed: int = 0
    merged: bool = True
    init_scale: float = 0.1
    gbpr_group_size: int = 3
    gbpr_rho: float = 0.8

    def __post_init__(self):
        object.__setattr__(self, "kind", ModelKind.parse(self.kind))
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if not self.eta > 0:
            raise ValueError(f"eta must be > 0, got {self.eta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.init_scale > 0:
            raise ValueError(f"init_scale must be > 0, got {self.init_scale}")
        if self.gbpr_group_size < 2:
            raise ValueError(f"gbpr_group_size must be >= 2, got {self.gbpr_group_size}")
        if not 0.0 <= self.gbpr_rho <= 1.0:
            raise ValueError(f"gbpr_rho must lie in [0, 1], got {self.gbpr_rho}")
        if not math.isfinite(self.alpha):
            raise ValueError(f"alpha must be finite, got {self.alpha}")

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["kind"] = self.kind.value
        return d


class TrainSample(NamedTuple):
    u: int
    i: int
    l: int
    j: int
    friends: Sequence[tuple[int, int]] = ()
    f_count: int = 0

    def context(self, item: int) -> ScoreContext:
        return ScoreContext(self.u, item, self.l, self.friends, self.f_count)


def _rngs(seed):
    return np.random.default_rng([seed, 0]), np.random.default_rng([seed, 1])


def _index(u01: float, n: int) -> int:
    return min(int(u01 * n), n - 1)


def sample_negative(split: SplitCorpus, u: int, rng: np.random.Generator) -> int:
    """Uniform draw from the items ``u`` never interacted with (train, val or test)."""
    arr = split.arrays
    lo, hi = arr.pos_ptr[u], arr.pos_ptr[u + 1]
    n_neg = arr.n_items - (hi - lo)
    if n_neg <= 0:
        raise ValueError(f"user {u} has interacted with every item")
    return int(_kernels.nth_excluded(arr.pos_items, lo, hi, _index(rng.random(), n_neg)))


def sample_from_query(split: SplitCorpus, q: int, j: int) -> TrainSample:
    tr = split.arrays.transitions
    u = int(tr.user[q])
    return TrainSample(
        u, int(tr.item[q]), int(tr.prev[q]), j, tr.friends(q), int(split.arrays.f_count[u])
    )


def sample_triple(split: SplitCorpus, rng: np.random.Generator) -> TrainSample:
    """Uniform training transition ``(u, i, l)`` plus a uniform negative ``j``.

    Users who have consumed every item are never drawn.
    """
    tr = split.arrays.transitions
    if len(tr) == 0:
        raise ValueError("split has no training transitions")
    q = _index(rng.random(), len(tr))
    return sample_from_query(split, q, sample_negative(split, int(tr.user[q]), rng))


# -- reference gradients ----------------------------------------------------

Fragments = dict  # (matrix name, row) -> gradient (float for beta, vector otherwise)


def _add(grads, key, value):
    if key in grads:
        grads[key] = grads[key] + value
    else:
        grads[key] = value


def bprmf_gradient(params: ModelParams, u, i, j) -> Fragments:
    """Partials of ``x_ui - x_uj`` for the MF predictor."""
    gU, gI = params.gammaU, params.gammaI
    return {
        ("beta", i): 1.0,
        ("beta", j): -1.0,
        ("gammaU", u): gI[i] - gI[j],
        ("gammaI", i): gU[u].copy(),
        ("gammaI", j): -gU[u],
    }


def fpmc_gradient(params: ModelParams, sample: TrainSample) -> Fragments:
    """Partials of ``x_uil - x_ujl`` for FPMC (no bias)."""
    u, i, l, j = sample.u, sample.i, sample.l, sample.j
    g = bprmf_gradient(params, u, i, j)
    del g[("beta", i)], g[("beta", j)]
    tI, tL = params.thetaI, params.theta_last
    last = "thetaI" if params.merged else "thetaL"
    _add(g, ("thetaI", i), tL[l].copy())
    _add(g, ("thetaI", j), -tL[l])
    _add(g, (last, l), tI[i] - tI[j])
    return g


def spmc_gradient(params: ModelParams, sample: TrainSample) -> Fragments:
    """Partials of ``x_uil - x_ujl`` for SPMC.

    Fragments that address the same row are summed, e.g. when a friend's
    latest item coincides with ``i`` or ``j``.
    """
    g = fpmc_gradient(params, sample)
    u, i, j = sample.u, sample.i, sample.j
    _add(g, ("beta", i), 1.0)
    _add(g, ("beta", j), -1.0)
    if sample.f_count == 0 or not sample.friends:
        return g
    W, Wf, M, Mf = params.W, params.W_friend, params.M, params.M_friend
    w_name = "W" if params.merged else "V"
    m_name = "M" if params.merged else "N"
    c = 2.0 / sample.f_count**params.alpha
    g_mi = np.zeros(params.K)
    g_wu = np.zeros(params.K)
    dM = M[i] - M[j]
    for v, ip in sample.friends:
        s = sigmoid(float(W[u] @ Wf[v]))
        ds = s * sigmoid(-float(W[u] @ Wf[v]))
        proj = float(dM @ Mf[ip])
        g_mi += s * Mf[ip]
        g_wu += ds * proj * Wf[v]
        _add(g, (m_name, ip), c * s * dM)
        _add(g, (w_name, v), c * ds * proj * W[u])
    _add(g, ("M", i), c * g_mi)
    _add(g, ("M", j), -c * g_mi)
    _add(g, ("W", u), c * g_wu)
    return g


def pair_gradient(params: ModelParams, sample: TrainSample) -> Fragments:
    if params.kind is ModelKind.SPMC:
        return spmc_gradient(params, sample)
    if params.kind is ModelKind.FPMC:
        return fpmc_gradient(params, sample)
    return bprmf_gradient(params, sample.u, sample.i, sample.j)


def pair_margin(params: ModelParams, sample: TrainSample) -> float:
    return score(params, sample.context(sample.i)) - score(params, sample.context(sample.j))


def _apply(params: ModelParams, grads: Fragments, eta: float, lam: float, scale: float = 1.0):
    for (name, row), g in grads.items():
        arr = getattr(params, name)
        arr[row] = arr[row] + eta * (scale * g - lam * arr[row])


def sgd_step(
    params: ModelParams,
    sample: TrainSample,
    eta: float,
    lam: float,
    epoch: int = 0,
    freeze_bias: bool = False,
) -> ModelParams:
    """One ascent step on ``ln sigma(x_uil - x_ujl)``; updates ``params`` in place.

    Only rows that appear in the sample's predictors are regularized.
    """
    xi = score(params, sample.context(sample.i))
    xj = score(params, sample.context(sample.j))
    if not (math.isfinite(xi) and math.isfinite(xj)):
        raise TrainingDiverged(epoch)
    delta = sigmoid(xj - xi)
    grads = pair_gradient(params, sample)
    if freeze_bias:
        grads = {k: v for k, v in grads.items() if k[0] != "beta"}
    _apply(params, grads, eta, lam, delta)
    return params


def sbpr_objective(params: ModelParams, u, i, k, j, s_uk) -> float:
    x = lambda t: float(params.beta[t] + params.gammaU[u] @ params.gammaI[t])  # noqa: E731
    d1 = (x(i) - x(k)) / (1.0 + s_uk)
    d2 = x(k) - x(j)
    return -np.logaddexp(0.0, -d1) - np.logaddexp(0.0, -d2)


def sbpr_gradient(params: ModelParams, u, i, k, j, s_uk) -> Fragments:
    """Gradient of the two-pair social objective (already includes the sigmoid weights)."""
    gU, gI, beta = params.gammaU, params.gammaI, params.beta
    scale = 1.0 / (1.0 + s_uk)
    xi = beta[i] + gU[u] @ gI[i]
    xk = beta[k] + gU[u] @ gI[k]
    xj = beta[j] + gU[u] @ gI[j]
    e1 = sigmoid(-(xi - xk) * scale) * scale
    e2 = sigmoid(-(xk - xj))
    return {
        ("beta", i): e1,
        ("beta", k): e2 - e1,
        ("beta", j): -e2,
        ("gammaU", u): e1 * (gI[i] - gI[k]) + e2 * (gI[k] - gI[j]),
        ("gammaI", i): e1 * gU[u],
        ("gammaI", k): (e2 - e1) * gU[u],
        ("gammaI", j): -e2 * gU[u],
    }


def sbpr_step(params, split: SplitCorpus, rng, eta, lam, epoch: int = 0) -> ModelParams:
    """Sample ``(u, i, k, j)`` and ascend the SBPR objective.

    ``k`` is drawn from the items the user's friends consumed in training but
    the user never did; without such items the step is a plain BPR-MF step.
    """
    arr = split.arrays
    sp_ptr, sp_items, sp_count, ex_ptr, ex_items = arr.social_positives
    d = rng.random(3)
    q = _index(d[0], len(arr.inter_user))
    u, i = int(arr.inter_user[q]), int(arr.inter_item[q])
    n_sp = sp_ptr[u + 1] - sp_ptr[u]
    n_ex = ex_ptr[u + 1] - ex_ptr[u]
    if n_sp == 0 or n_ex >= arr.n_items:
        lo, hi = arr.pos_ptr[u], arr.pos_ptr[u + 1]
        j = int(_kernels.nth_excluded(arr.pos_items, lo, hi, _index(d[2], arr.n_items - (hi - lo))))
        return sgd_step(params, TrainSample(u, i, i, j), eta, lam, epoch)
    p = sp_ptr[u] + _index(d[1], n_sp)
    k, s_uk = int(sp_items[p]), int(sp_count[p])
    j = int(
        _kernels.nth_excluded(ex_items, ex_ptr[u], ex_ptr[u + 1], _index(d[2], arr.n_items - n_ex))
    )
    _check_finite(params, u, (i, k, j), epoch)
    _apply(params, sbpr_gradient(params, u, i, k, j, s_uk), eta, lam)
    return params


def gbpr_objective(params: ModelParams, u, i, j, group, rho) -> float:
    gU, gI, beta = params.gammaU, params.gammaI, params.beta
    members = [u, *group]
    mean = sum(float(gU[w] @ gI[i]) for w in members) / len(members)
    xgi = rho * mean + (1.0 - rho) * float(beta[i] + gU[u] @ gI[i])
    return -float(np.logaddexp(0.0, -(xgi - float(beta[j] + gU[u] @ gI[j]))))


def gbpr_gradient(params: ModelParams, u, i, j, group, rho) -> Fragments:
    gU, gI, beta = params.gammaU, params.gammaI, params.beta
    members = [u, *group]
    w = rho / len(members)
    mean = sum(float(gU[m] @ gI[i]) for m in members) / len(members)
    xgi = rho * mean + (1.0 - rho) * float(beta[i] + gU[u] @ gI[i])
    e = sigmoid(-(xgi - float(beta[j] + gU[u] @ gI[j])))
    grads = {
        ("beta", i): e * (1.0 - rho),
        ("beta", j): -e,
        ("gammaI", i): e * (w * sum(gU[m] for m in members) + (1.0 - rho) * gU[u]),
        ("gammaI", j): -e * gU[u],
        ("gammaU", u): e * (w * gI[i] + (1.0 - rho) * gI[i] - gI[j]),
    }
    for m in group:
        grads[("gammaU", m)] = e * (w * gI[i])
    return grads


def gbpr_step(
    params, split: SplitCorpus, rng, eta, lam, group_size=3, rho=0.8, epoch: int = 0
) -> ModelParams:
    """Sample ``(u, i, j)`` and a group of co-consumers of ``i``; ascend the GBPR objective."""
    arr = split.arrays
    d = rng.random(group_size + 1)
    q = _index(d[0], len(arr.inter_user))
    u, i = int(arr.inter_user[q]), int(arr.inter_item[q])
    lo, hi = arr.pos_ptr[u], arr.pos_ptr[u + 1]
    j = int(_kernels.nth_excluded(arr.pos_items, lo, hi, _index(d[1], arr.n_items - (hi - lo))))
    if rho == 0.0:
        return sgd_step(params, TrainSample(u, i, i, j), eta, lam, epoch)
    iu_ptr, iu_users = arr.item_users
    cand = [int(x) for x in iu_users[iu_ptr[i]:iu_ptr[i + 1]]]
    # mirror the kernel: u swapped to the end, partial Fisher-Yates over the rest
    pu = cand.index(u)
    cand[pu], cand[-1] = cand[-1], cand[pu]
    cand = cand[:-1]
    m = min(group_size - 1, len(cand))
    for t in range(m):
        r = t + _index(d[2 + t], len(cand) - t)
        cand[t], cand[r] = cand[r], cand[t]
    _check_finite(params, u, (i, j), epoch)
    _apply(params, gbpr_gradient(params, u, i, j, cand[:m], rho), eta, lam)
    return params


def _check_finite(params, u, items, epoch):
    for t in items:
        x = float(params.beta[t] + params.gammaU[u] @ params.gammaI[t])
        if not math.isfinite(x):
            raise TrainingDiverged(epoch)


# -- objective --------------------------------------------------------------


def _pool(split: SplitCorpus, kind: ModelKind):
    """``(users, items, prev, ctx_ptr, ctx_friend, ctx_item)`` of the positives a model trains on."""
    arr = split.arrays
    if kind.sequential:
        t = arr.transitions
        return t.user, t.item, t.prev, t.ctx_ptr, t.ctx_friend, t.ctx_item
    n = len(arr.inter_user)
    empty = np.zeros(0, dtype=np.int64)
    return arr.inter_user, arr.inter_item, arr.inter_item, np.zeros(n + 1, np.int64), empty, empty


def map_objective_estimate(
    params: ModelParams,
    split: SplitCorpus,
    num_negatives_per_positive: int | None = 1,
    rng: np.random.Generator | None = None,
    lam: float = 0.0,
    chunk: int = 512,
) -> float:
    """``sum ln sigma(x_uil - x_ujl) - lam/2 * ||Theta||^2`` over training positives.

    ``num_negatives_per_positive=None`` sums over every negative (exact).
    """
    from .models import score_batch, social_context_vectors

    if num_negatives_per_positive is not None and num_negatives_per_positive < 1:
        raise ValueError("num_negatives_per_positive must be >= 1")
    arr = split.arrays
    users, items, prev, cptr, cfr, cit = _pool(split, params.kind)
    total = 0.0
    for a in range(0, len(users), chunk):
        b = min(a + chunk, len(users))
        soc = None
        if params.kind is ModelKind.SPMC:
            sub_ptr = cptr[a : b + 1] - cptr[a]
            sl = slice(cptr[a], cptr[b])
            soc = social_context_vectors(params, users[a:b], sub_ptr, cfr[sl], cit[sl], arr.f_count)
        S = score_batch(params, users[a:b], prev[a:b], soc)
        for r, q in enumerate(range(a, b)):
            u = users[q]
            pos = arr.pos_items[arr.pos_ptr[u] : arr.pos_ptr[u + 1]]
            if num_negatives_per_positive is None:
                mask = np.ones(arr.n_items, dtype=bool)
                mask[pos] = False
                neg = np.flatnonzero(mask)
            else:
                neg = np.array([sample_negative(split, int(u), rng) for _ in range(num_negatives_per_positive)])
            total -= float(np.sum(np.logaddexp(0.0, -(S[r, items[q]] - S[r, neg]))))
    return total - 0.5 * lam * params.squared_norm()


# -- training loop ----------------------------------------------------------


class TrainResult(NamedTuple):
    params: ModelParams
    curve: list  # validation AUC after each epoch
    objective: list  # per-epoch MAP objective estimate (empty unless tracked)


def epoch_size(split: SplitCorpus, kind) -> int:
    """Steps per epoch: the number of positives the model samples from."""
    return len(_pool(split, ModelKind.parse(kind))[0])


def run_epoch(params: ModelParams, split: SplitCorpus, config: TrainConfig, rng, epoch: int = 0):
    """One sweep of ``epoch_size`` sampled steps through the compiled kernels."""
    arr = split.arrays
    kind = params.kind
    n = epoch_size(split, kind)
    if n == 0:
        return
    eta, lam = float(config.eta), float(config.lam)
    if kind is ModelKind.SBPR:
        sp_ptr, sp_items, sp_count, ex_ptr, ex_items = arr.social_positives
        fail = _kernels.sbpr_epoch(
            params.beta, params.gammaU, params.gammaI,
            arr.inter_user, arr.inter_item, arr.pos_ptr, arr.pos_items,
            sp_ptr, sp_items, sp_count, ex_ptr, ex_items,
            rng.random((n, 3)), eta, lam,
        )
    elif kind is ModelKind.GBPR:
        iu_ptr, iu_users = arr.item_users
        g = int(config.gbpr_group_size)
        fail = _kernels.gbpr_epoch(
            params.beta, params.gammaU, params.gammaI,
            arr.inter_user, arr.inter_item, arr.pos_ptr, arr.pos_items, iu_ptr, iu_users,
            rng.random((n, g + 1)), g, float(config.gbpr_rho), eta, lam,
        )
    else:
        users, items, prev, cptr, cfr, cit = _pool(split, kind)
        picks, negs = _kernels.map_pair_draws(
            rng.random((n, 2)), users, arr.pos_ptr, arr.pos_items, arr.n_items
        )
        fail = pair_kernel(params, split, picks, negs, eta, lam)
    if fail >= 0 or not params.is_finite():
        raise TrainingDiverged(epoch)


def pair_kernel(params, split, picks, negs, eta, lam, update_bias=None):
    """Run the compiled pair loop over an explicit (query, negative) stream."""
    arr = split.arrays
    kind = params.kind
    users, items, prev, cptr, cfr, cit = _pool(split, kind)
    K = params.K
    dummy = np.zeros((1, K))
    seq = kind.sequential
    soc = kind is ModelKind.SPMC
    tI = params.thetaI if seq else dummy
    W = params.W if soc else dummy
    M = params.M if soc else dummy
    use_bias = kind is not ModelKind.FPMC if update_bias is None else update_bias
    return _kernels.pair_epoch(
        params.beta, params.gammaU, params.gammaI,
        tI, params.theta_last if seq else dummy,
        W, params.W_friend if soc else dummy,
        M, params.M_friend if soc else dummy,
        bool(params.merged), float(params.alpha), bool(use_bias), seq, soc,
        users, items, prev, cptr, cfr, cit, arr.f_count,
        picks, negs, eta, lam,
    )


def train(
    split: SplitCorpus,
    config: TrainConfig,
    *,
    track_objective: bool = False,
    threads: int = 1,
    on_epoch: Optional[Callable[[int, float, float], None]] = None,
    evaluate: bool = True,
) -> TrainResult:
    """Train ``config.kind`` for ``config.epochs`` sweeps; deterministic given ``config.seed``."""
    from .evaluation import auc

    rng_init, rng_sample = _rngs(config.seed)
    params = init_params(
        config.kind, split.num_users, split.num_items, config.K, config.init_scale,
        rng_init, merged=config.merged, alpha=config.alpha,
    )
    curve, objective = [], []
    for epoch in range(1, config.epochs + 1):
        run_epoch(params, split, config, rng_sample, epoch)
        val = auc(params, split, which="val", threads=threads).auc if evaluate else float("nan")
        curve.append(val)
        obj = float("nan")
        if track_objective:
            # a dedicated stream keeps the training trajectory independent of tracking
            obj = map_objective_estimate(
                params, split, 1, np.random.default_rng([config.seed, 2, epoch]), config.lam
            )
            objective.append(obj)
        if on_epoch is not None:
            on_epoch(epoch, val, obj)
        log.debug("%s epoch %d val_auc=%.6f", config.kind.value, epoch, val)
    return TrainResult(params, curve, objective)
