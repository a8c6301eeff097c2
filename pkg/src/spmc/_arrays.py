"""Flat numpy views of a SplitCorpus consumed by the compiled kernels.

Variable-length per-row data is stored CSR style: ``ptr`` has one more entry
than there are rows and row ``r`` occupies ``data[ptr[r]:ptr[r + 1]]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


def _ptr(rows):
    ptr = np.zeros(len(rows) + 1, dtype=np.int64)
    for r, row in enumerate(rows):
        ptr[r + 1] = ptr[r] + len(row)
    return ptr


def _csr(rows):
    ptr = _ptr(rows)
    data = np.fromiter((x for row in rows for x in row), dtype=np.int64, count=int(ptr[-1]))
    return ptr, data


@dataclass(frozen=True)
class Queries:
    """A batch of ``(user, item, previous item, time)`` queries with friend contexts."""

    user: np.ndarray
    item: np.ndarray
    prev: np.ndarray
    time: np.ndarray
    ctx_ptr: np.ndarray
    ctx_friend: np.ndarray
    ctx_item: np.ndarray

    def __len__(self):
        return len(self.user)

    def friends(self, k):
        a, b = self.ctx_ptr[k], self.ctx_ptr[k + 1]
        return list(zip(self.ctx_friend[a:b].tolist(), self.ctx_item[a:b].tolist()))


def _queries(split, user, item, prev, time) -> Queries:
    from .corpus import friend_context

    contexts = [friend_context(split, u, t) for u, t in zip(user, time)]
    ptr = _ptr(contexts)
    return Queries(
        user=np.asarray(user, dtype=np.int64),
        item=np.asarray(item, dtype=np.int64),
        prev=np.asarray(prev, dtype=np.int64),
        time=np.asarray(time, dtype=np.int64),
        ctx_ptr=ptr,
        ctx_friend=np.fromiter((v for c in contexts for v, _ in c), np.int64, int(ptr[-1])),
        ctx_item=np.fromiter((i for c in contexts for _, i in c), np.int64, int(ptr[-1])),
    )


@dataclass(frozen=True, eq=False)
class SplitArrays:
    n_users: int
    n_items: int
    users: np.ndarray
    pos_ptr: np.ndarray  # full positive set (train + val + test), sorted
    pos_items: np.ndarray
    friend_ptr: np.ndarray
    friend_ids: np.ndarray
    f_count: np.ndarray
    transitions: Queries  # training items with a predecessor
    inter_user: np.ndarray  # every training interaction of a retained user
    inter_item: np.ndarray
    val: Queries
    test: Queries
    train_ptr: np.ndarray  # per-user training item sets, sorted
    train_items: np.ndarray

    @classmethod
    def from_split(cls, split) -> "SplitArrays":
        train = split.train
        n_users, n_items = train.num_users, train.num_items
        users = list(split.users)

        pos_rows = [sorted(split.positives.get(u, ())) for u in range(n_users)]
        pos_ptr, pos_items = _csr(pos_rows)
        friend_ptr, friend_ids = _csr(train.trust)
        n_neg = n_items - np.diff(pos_ptr)

        tu, ti, tl, tt = [], [], [], []
        iu, ii = [], []
        for u in users:
            if n_neg[u] <= 0:
                continue
            seq = train.sequences[u]
            for p, rec in enumerate(seq):
                iu.append(u)
                ii.append(rec.item)
                if p > 0:
                    tu.append(u)
                    ti.append(rec.item)
                    tl.append(seq[p - 1].item)
                    tt.append(rec.timestamp)

        train_ptr, train_items = _csr([sorted(r.item for r in s) for s in train.sequences])
        return cls(
            n_users=n_users,
            n_items=n_items,
            users=np.asarray(users, dtype=np.int64),
            pos_ptr=pos_ptr,
            pos_items=pos_items,
            friend_ptr=friend_ptr,
            friend_ids=friend_ids,
            f_count=np.diff(friend_ptr),
            transitions=_queries(split, tu, ti, tl, tt),
            inter_user=np.asarray(iu, dtype=np.int64),
            inter_item=np.asarray(ii, dtype=np.int64),
            val=_queries(
                split,
                users,
                [split.val_item[u] for u in users],
                [split.val_predecessor[u] for u in users],
                [split.val_time[u] for u in users],
            ),
            test=_queries(
                split,
                users,
                [split.test_item[u] for u in users],
                [split.test_predecessor[u] for u in users],
                [split.test_time[u] for u in users],
            ),
            train_ptr=train_ptr,
            train_items=train_items,
        )

    @cached_property
    def item_users(self):
        """CSR of training users per item (sorted), for group sampling."""
        rows = [[] for _ in range(self.n_items)]
        for u, i in zip(self.inter_user.tolist(), self.inter_item.tolist()):
            rows[i].append(u)
        return _csr([sorted(r) for r in rows])

    @cached_property
    def social_positives(self):
        """Per user: items some friend consumed in training but the user never did.

        Returns ``(sp_ptr, sp_items, sp_count, ex_ptr, ex_items)`` where
        ``sp_count`` holds the number of friends behind each social item and
        ``ex`` is the sorted union of the positive and social sets.
        """
        sp_rows, cnt_rows, ex_rows = [], [], []
        for u in range(self.n_users):
            own = set(self.pos_items[self.pos_ptr[u]:self.pos_ptr[u + 1]].tolist())
            counts: dict[int, int] = {}
            for v in self.friend_ids[self.friend_ptr[u]:self.friend_ptr[u + 1]].tolist():
                for k in self.train_items[self.train_ptr[v]:self.train_ptr[v + 1]].tolist():
                    if k not in own:
                        counts[k] = counts.get(k, 0) + 1
            items = sorted(counts)
            sp_rows.append(items)
            cnt_rows.append([counts[k] for k in items])
            ex_rows.append(sorted(own.union(items)))
        sp_ptr, sp_items = _csr(sp_rows)
        _, sp_count = _csr(cnt_rows)
        ex_ptr, ex_items = _csr(ex_rows)
        return sp_ptr, sp_items, sp_count, ex_ptr, ex_items
