"""Parameter containers and predictors for SPMC and the four baselines.

All models share ``beta`` (item bias) and the preference factors
``gammaU``/``gammaI``. FPMC adds the transition factors ``thetaI`` (and
``thetaL`` when unmerged); SPMC further adds the social factors ``W``/``M``
(and ``V``/``N`` when unmerged). With merged embeddings the "last item",
"friend" and "friend item" roles reuse ``thetaI``, ``W`` and ``M``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, fields
from typing import IO, NamedTuple, Optional, Sequence

import numpy as np

from .errors import ParseError


class ModelKind(str, enum.Enum):
    BPRMF = "BPRMF"
    FPMC = "FPMC"
    SBPR = "SBPR"
    GBPR = "GBPR"
    SPMC = "SPMC"

    @classmethod
    def parse(cls, value) -> "ModelKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper().replace("-", ""))
        except ValueError:
            raise ValueError(
                f"unknown model kind {value!r}; expected one of "
                + ", ".join(k.value.lower() for k in cls)
            ) from None

    @property
    def sequential(self) -> bool:
        return self in (ModelKind.FPMC, ModelKind.SPMC)


MATRICES = ("gammaU", "gammaI", "thetaI", "thetaL", "W", "V", "M", "N")


def required_matrices(kind: ModelKind, merged: bool) -> tuple[str, ...]:
    names = ["gammaU", "gammaI"]
    if kind in (ModelKind.FPMC, ModelKind.SPMC):
        names.append("thetaI")
        if not merged:
            names.append("thetaL")
    if kind is ModelKind.SPMC:
        names += ["W", "M"] if merged else ["W", "V", "M", "N"]
    return tuple(names)


@dataclass
class ModelParams:
    kind: ModelKind
    beta: np.ndarray
    gammaU: np.ndarray
    gammaI: np.ndarray
    thetaI: Optional[np.ndarray] = None
    thetaL: Optional[np.ndarray] = None
    W: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    M: Optional[np.ndarray] = None
    N: Optional[np.ndarray] = None
    alpha: float = 1.0
    merged: bool = True

    def __post_init__(self):
        self.kind = ModelKind.parse(self.kind)
        need = set(required_matrices(self.kind, self.merged))
        for name in MATRICES:
            present = getattr(self, name) is not None
            if present != (name in need):
                state = "missing" if name in need else "unexpected"
                raise ValueError(f"{self.kind.value} (merged={self.merged}): {state} matrix {name}")

    @property
    def num_users(self) -> int:
        return self.gammaU.shape[0]

    @property
    def num_items(self) -> int:
        return self.gammaI.shape[0]

    @property
    def K(self) -> int:
        return self.gammaU.shape[1]

    # role accessors resolve the merged/unmerged distinction
    @property
    def theta_last(self):
        return self.thetaI if self.merged else self.thetaL

    @property
    def W_friend(self):
        return self.W if self.merged else self.V

    @property
    def M_friend(self):
        return self.M if self.merged else self.N

    def arrays(self) -> dict[str, np.ndarray]:
        out = {"beta": self.beta}
        for name in MATRICES:
            value = getattr(self, name)
            if value is not None:
                out[name] = value
        return out

    def copy(self) -> "ModelParams":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        for name, value in self.arrays().items():
            kw[name] = value.copy()
        return ModelParams(**kw)

    def is_finite(self) -> bool:
        return all(np.isfinite(a).all() for a in self.arrays().values())

    def squared_norm(self) -> float:
        return float(sum(np.sum(a * a) for a in self.arrays().values()))


def init_params(
    kind,
    num_users: int,
    num_items: int,
    K: int = 20,
    init_scale: float = 0.1,
    rng: np.random.Generator | int | None = None,
    merged: bool = True,
    alpha: float = 1.0,
) -> ModelParams:
    """Zero biases and i.i.d. ``N(0, init_scale**2)`` latent factors."""
    kind = ModelKind.parse(kind)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if not init_scale > 0:
        raise ValueError(f"init_scale must be > 0, got {init_scale}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    rows = {"gammaU": num_users, "W": num_users, "V": num_users}
    mats = {}
    for name in required_matrices(kind, merged):
        n = rows.get(name, num_items)
        mats[name] = init_scale * rng.standard_normal((n, K))
    return ModelParams(
        kind=kind, beta=np.zeros(num_items), alpha=float(alpha), merged=merged, **mats
    )


def sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def _dot(a, b) -> float:
    return float(np.dot(a, b))


def _check(idx, n, what):
    if not 0 <= idx < n:
        raise IndexError(f"{what} id {idx} out of range [0, {n})")


def _require(params, *kinds):
    if params.kind not in kinds:
        raise ValueError(
            f"expected a {'/'.join(k.value for k in kinds)} model, got {params.kind.value}"
        )


class ScoreContext(NamedTuple):
    """Inputs of the socially-aware predictor for one (user, candidate) pair."""

    u: int
    i: int
    l: int
    friends: Sequence[tuple[int, int]] = ()
    f_count: int = 0


def score_bprmf(params: ModelParams, u: int, i: int) -> float:
    _require(params, ModelKind.BPRMF, ModelKind.SBPR, ModelKind.GBPR)
    _check(u, params.num_users, "user")
    _check(i, params.num_items, "item")
    return float(params.beta[i]) + _dot(params.gammaU[u], params.gammaI[i])


def score_social_baseline(params: ModelParams, u: int, i: int) -> float:
    """SBPR and GBPR predict with the plain MF predictor."""
    _require(params, ModelKind.SBPR, ModelKind.GBPR)
    return score_bprmf(params, u, i)


def _preference_and_sequence(params, u, i, l):
    _check(u, params.num_users, "user")
    _check(i, params.num_items, "item")
    _check(l, params.num_items, "item")
    return _dot(params.gammaU[u], params.gammaI[i]) + _dot(params.thetaI[i], params.theta_last[l])


def score_fpmc(params: ModelParams, u: int, i: int, l: int) -> float:
    _require(params, ModelKind.FPMC)
    return _preference_and_sequence(params, u, i, l)


def social_term(params: ModelParams, u, i, friends, f_count) -> float:
    """Friend-weighted affinity between ``i`` and the friends' latest items."""
    if f_count == 0 or not friends:
        return 0.0
    W, Wf, M, Mf = params.W, params.W_friend, params.M, params.M_friend
    total = 0.0
    for v, j in friends:
        _check(v, params.num_users, "user")
        _check(j, params.num_items, "item")
        total += sigmoid(_dot(W[u], Wf[v])) * _dot(M[i], Mf[j])
    return 2.0 / f_count**params.alpha * total


def score_spmc(params: ModelParams, ctx: ScoreContext) -> float:
    _require(params, ModelKind.SPMC)
    base = _preference_and_sequence(params, ctx.u, ctx.i, ctx.l)
    return base + social_term(params, ctx.u, ctx.i, ctx.friends, ctx.f_count) + float(
        params.beta[ctx.i]
    )


def score(params: ModelParams, ctx: ScoreContext) -> float:
    """Dispatch on ``params.kind``; non-sequential models ignore ``l`` and friends."""
    if params.kind is ModelKind.SPMC:
        return score_spmc(params, ctx)
    if params.kind is ModelKind.FPMC:
        return score_fpmc(params, ctx.u, ctx.i, ctx.l)
    return score_bprmf(params, ctx.u, ctx.i)


def social_context_vectors(params: ModelParams, users, ctx_ptr, ctx_friend, ctx_item, f_count):
    """Rows ``c_q`` such that the social term of query ``q`` for item ``i`` is ``<M_i, c_q>``."""
    users = np.asarray(users)
    out = np.zeros((len(users), params.K))
    sizes = np.diff(ctx_ptr)
    if sizes.sum() == 0:
        return out
    owner = np.repeat(np.arange(len(users)), sizes)
    z = np.einsum("ij,ij->i", params.W[users[owner]], params.W_friend[ctx_friend])
    ez = np.exp(-np.abs(z))
    weights = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    np.add.at(out, owner, weights[:, None] * params.M_friend[ctx_item])
    fc = np.asarray(f_count)[users].astype(float)
    active = (fc > 0) & (sizes > 0)
    out[active] *= (2.0 / fc[active] ** params.alpha)[:, None]
    out[~active] = 0.0
    return out


def score_batch(params: ModelParams, users, prev, social=None) -> np.ndarray:
    """Scores of every item for a batch of queries, shape ``(len(users), num_items)``.

    ``social`` holds the per-query context vectors from
    :func:`social_context_vectors` (SPMC only).
    """
    users = np.asarray(users)
    S = params.gammaU[users] @ params.gammaI.T
    if params.kind.sequential:
        S += params.theta_last[np.asarray(prev)] @ params.thetaI.T
    if params.kind is ModelKind.SPMC and social is not None:
        S += social @ params.M.T
    if params.kind is not ModelKind.FPMC:
        S += params.beta
    return S


# -- checkpoints ------------------------------------------------------------


def save_checkpoint(params: ModelParams, fh: IO[str]) -> None:
    """Text checkpoint; floats use 17 significant digits and round-trip exactly."""
    fh.write(
        f"kind={params.kind.value} K={params.K} alpha={params.alpha!r} "
        f"merged={int(params.merged)} users={params.num_users} items={params.num_items}\n"
    )
    for name, arr in params.arrays().items():
        fh.write(f"{name}\n")
        rows = arr.reshape(len(arr), -1)
        fh.writelines(" ".join(format(x, ".17g") for x in row) + "\n" for row in rows.tolist())


def load_checkpoint(fh: IO[str], source: str | None = None) -> ModelParams:
    lines = fh.read().splitlines()
    try:
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        kind = ModelKind.parse(head["kind"])
        K, n_users, n_items = int(head["K"]), int(head["users"]), int(head["items"])
        alpha, merged = float(head["alpha"]), bool(int(head["merged"]))
    except (IndexError, KeyError, ValueError):
        raise ParseError("bad checkpoint header", 1, source) from None
    arrays = {}
    pos = 1
    for name in ("beta",) + required_matrices(kind, merged):
        if pos >= len(lines) or lines[pos] != name:
            raise ParseError(f"expected section {name!r}", pos + 1, source)
        n = n_users if name in ("gammaU", "W", "V") else n_items
        block = lines[pos + 1 : pos + 1 + n]
        try:
            arr = np.array([[float(x) for x in row.split()] for row in block], dtype=float)
        except ValueError:
            raise ParseError(f"non-numeric value in section {name!r}", pos + 2, source) from None
        width = 1 if name == "beta" else K
        if arr.shape != (n, width):
            raise ParseError(f"section {name!r} has shape {arr.shape}", pos + 1, source)
        arrays[name] = arr[:, 0].copy() if name == "beta" else arr
        pos += 1 + n
    return ModelParams(kind=kind, alpha=alpha, merged=merged, **arrays)
