"""Held-out AUC: per user, the share of unobserved items scored strictly below the held-out item."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .corpus import SplitCorpus
from .models import ModelKind, ModelParams, score_batch, social_context_vectors

log = logging.getLogger(__name__)

# scorer(u, l, friends, f_count) -> scores of every item
ItemScorer = Callable[[int, int, list, int], np.ndarray]


@dataclass
class EvalReport:
    auc: float
    num_users_evaluated: int
    per_user_auc: Optional[dict] = None
    # numerator/denominator of each user's AUC, kept exact for auditing
    per_user_counts: Optional[dict] = field(default=None, repr=False)
    config_echo: Optional[dict] = None


def _batch_scores(params: ModelParams, queries, f_count, lo, hi):
    soc = None
    if params.kind is ModelKind.SPMC:
        a, b = queries.ctx_ptr[lo], queries.ctx_ptr[hi]
        soc = social_context_vectors(
            params,
            queries.user[lo:hi],
            queries.ctx_ptr[lo : hi + 1] - a,
            queries.ctx_friend[a:b],
            queries.ctx_item[a:b],
            f_count,
        )
    return score_batch(params, queries.user[lo:hi], queries.prev[lo:hi], soc)


def strict_count(scores: np.ndarray, target: int, positives: np.ndarray) -> tuple[int, int]:
    """``(#negatives scored strictly below target, #negatives)`` for one user."""
    mask = np.ones(scores.shape[0], dtype=bool)
    mask[positives] = False
    below = scores[mask] < scores[target]
    return int(np.count_nonzero(below)), int(mask.sum())


def auc(
    scorer: Union[ModelParams, ItemScorer],
    split: SplitCorpus,
    which: str = "test",
    threads: int = 1,
    chunk: int = 256,
    per_user: bool = False,
    config: Optional[dict] = None,
) -> EvalReport:
    """Mean per-user AUC on the held-out ``test`` (or ``val``) items.

    Ties count as misses. Users who consumed every item are skipped.
    ``scorer`` is either trained parameters (scored in batches) or any
    callable returning the scores of all items for one query.
    """
    if which not in ("test", "val"):
        raise ValueError(f"which must be 'test' or 'val', got {which!r}")
    arr = split.arrays
    queries = arr.test if which == "test" else arr.val
    n = len(queries)
    num = np.zeros(n, dtype=np.int64)
    den = np.zeros(n, dtype=np.int64)

    def run(lo, hi):
        if isinstance(scorer, ModelParams):
            S = _batch_scores(scorer, queries, arr.f_count, lo, hi)
        else:
            S = np.vstack(
                [
                    scorer(int(queries.user[q]), int(queries.prev[q]), queries.friends(q),
                           int(arr.f_count[queries.user[q]]))
                    for q in range(lo, hi)
                ]
            )
        for r, q in enumerate(range(lo, hi)):
            u = queries.user[q]
            num[q], den[q] = strict_count(
                S[r], int(queries.item[q]), arr.pos_items[arr.pos_ptr[u] : arr.pos_ptr[u + 1]]
            )

    bounds = [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda b: run(*b), bounds))
    else:
        for lo, hi in bounds:
            run(lo, hi)

    keep = den > 0
    if not keep.all():
        log.warning("skipping %d users with no unobserved items", int((~keep).sum()))
    ratios = num[keep] / den[keep]
    users = queries.user[keep].tolist()
    # fixed user-id order summation keeps the mean independent of thread count
    total = 0.0
    for r in ratios.tolist():
        total += r
    mean = total / len(users) if users else float("nan")
    return EvalReport(
        auc=mean,
        num_users_evaluated=len(users),
        per_user_auc=dict(zip(users, ratios.tolist())) if per_user else None,
        per_user_counts=dict(zip(users, zip(num[keep].tolist(), den[keep].tolist())))
        if per_user
        else None,
        config_echo=config,
    )
