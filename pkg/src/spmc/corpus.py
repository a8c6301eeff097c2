"""Interaction/trust ingestion, cold-start thresholding and leave-last-out splits.

Raw files are plain text, one record per line, fields separated by tabs or
runs of whitespace. Lines starting with ``#`` are comments.

Serialized corpus grammar (``write_corpus`` / ``read_corpus``)::

    users=<n> items=<m>
    <user> <item> <timestamp>        # dense ids, one line per interaction,
    ...                              # grouped by user in sequence order
    trust
    <user> <friend>                  # dense ids, grouped by user, sorted
    ...
    user_ids
    <raw id>                         # line k holds the raw id of dense user k
    ...
    item_ids
    <raw id>
    ...
"""

from __future__ import annotations

import bisect
import io
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import IO, Iterable, NamedTuple, Sequence, Union

import numpy as np

from .errors import EmptySplitError, ParseError

log = logging.getLogger(__name__)

MIN_SEQUENCE = 4

Source = Union[bytes, str, IO[bytes], IO[str], Iterable]


class Interaction(NamedTuple):
    """One positive-feedback event."""

    user: object
    item: object
    timestamp: int


def _lines(stream):
    if isinstance(stream, bytes):
        stream = io.BytesIO(stream)
    elif isinstance(stream, str):
        stream = io.StringIO(stream)
    for line_no, line in enumerate(stream, start=1):
        if isinstance(line, bytes):
            line = line.decode("utf-8")
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        yield line_no, line.split()


def _parse_timestamp(text, line_no, source):
    try:
        ts = int(text)
    except ValueError:
        raise ParseError(f"timestamp {text!r} is not an integer", line_no, source) from None
    if ts < 0:
        raise ParseError(f"negative timestamp {ts}", line_no, source)
    return ts


def parse_interactions(stream: Source, source: str | None = None) -> list[Interaction]:
    """Parse ``user item [rating] timestamp`` lines into raw-id interactions.

    The optional rating column is ignored: every observed record counts as
    positive feedback.
    """
    out = []
    for line_no, fields in _lines(stream):
        if len(fields) not in (3, 4):
            raise ParseError(
                f"expected 3 or 4 fields (user item [rating] timestamp), got {len(fields)}",
                line_no,
                source,
            )
        ts = _parse_timestamp(fields[-1], line_no, source)
        out.append(Interaction(fields[0], fields[1], ts))
    return out


class TrustEdges(list):
    """Directed ``(truster, trustee)`` edge list; remembers dropped self-loops."""

    self_loops: int = 0


def parse_trust(stream: Source, source: str | None = None) -> TrustEdges:
    edges = TrustEdges()
    for line_no, fields in _lines(stream):
        # some public dumps append a constant trust value as a third column
        if len(fields) not in (2, 3):
            raise ParseError(
                f"expected 2 fields (truster trustee), got {len(fields)}", line_no, source
            )
        a, b = fields[0], fields[1]
        if a == b:
            edges.self_loops += 1
            continue
        edges.append((a, b))
    if edges.self_loops:
        log.warning("dropped %d self-loop trust edges", edges.self_loops)
    return edges


@dataclass(frozen=True)
class Corpus:
    """Dense-id interaction sequences plus the directed trust graph.

    ``sequences[u]`` is user ``u``'s chronologically sorted history and
    ``trust[u]`` the sorted ids of the users ``u`` trusts.
    """

    num_users: int
    num_items: int
    sequences: tuple[tuple[Interaction, ...], ...]
    trust: tuple[tuple[int, ...], ...]
    user_ids: tuple[str, ...]
    item_ids: tuple[str, ...]

    @cached_property
    def user_index(self) -> dict[str, int]:
        return {raw: k for k, raw in enumerate(self.user_ids)}

    @cached_property
    def item_index(self) -> dict[str, int]:
        return {raw: k for k, raw in enumerate(self.item_ids)}

    @property
    def num_interactions(self) -> int:
        return sum(len(s) for s in self.sequences)

    @property
    def num_trust_edges(self) -> int:
        return sum(len(f) for f in self.trust)

    def stats(self) -> dict[str, float]:
        n = max(self.num_users, 1)
        return {
            "users": self.num_users,
            "items": self.num_items,
            "feedback": self.num_interactions,
            "trusts": self.num_trust_edges,
            "feedback_per_user": self.num_interactions / n,
            "trusts_per_user": self.num_trust_edges / n,
        }


def build_corpus(
    interactions: Sequence[Interaction], trust_edges: Iterable[tuple] = ()
) -> Corpus:
    """Assign dense ids by first appearance, sort, deduplicate and map trust edges."""
    if not interactions:
        raise ValueError("build_corpus needs at least one interaction")
    user_index: dict = {}
    item_index: dict = {}
    per_user: list[list[Interaction]] = []
    for rec in interactions:
        u = user_index.get(rec.user)
        if u is None:
            u = user_index[rec.user] = len(user_index)
            per_user.append([])
        i = item_index.get(rec.item)
        if i is None:
            i = item_index[rec.item] = len(item_index)
        per_user[u].append(Interaction(u, i, int(rec.timestamp)))

    sequences = []
    for seq in per_user:
        seq.sort(key=lambda r: r.timestamp)  # stable: ties keep input order
        seen = set()
        kept = []
        for rec in seq:
            if rec.item in seen:
                continue
            seen.add(rec.item)
            kept.append(rec)
        sequences.append(tuple(kept))

    friends: list[set[int]] = [set() for _ in range(len(user_index))]
    dropped = 0
    for a, b in trust_edges:
        ua, ub = user_index.get(a), user_index.get(b)
        if ua is None or ub is None:
            dropped += 1
            continue
        if ua != ub:
            friends[ua].add(ub)
    if dropped:
        log.info("dropped %d trust edges with endpoints lacking interactions", dropped)

    return Corpus(
        num_users=len(user_index),
        num_items=len(item_index),
        sequences=tuple(sequences),
        trust=tuple(tuple(sorted(f)) for f in friends),
        user_ids=tuple(str(k) for k in user_index),
        item_ids=tuple(str(k) for k in item_index),
    )


def load_corpus(interactions_path, trust_path=None) -> Corpus:
    """Read raw interaction and (optional) trust files from disk."""
    with open(interactions_path, "rb") as fh:
        inter = parse_interactions(fh, source=str(interactions_path))
    edges: list = []
    if trust_path is not None:
        with open(trust_path, "rb") as fh:
            edges = parse_trust(fh, source=str(trust_path))
    return build_corpus(inter, edges)


def apply_threshold(corpus: Corpus, n: int) -> Corpus:
    """Keep only each user's ``n`` most recent interactions.

    The user/item universe and the trust graph are left untouched.
    """
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
        raise TypeError(f"threshold must be an integer, got {n!r}")
    if n < MIN_SEQUENCE:
        raise ValueError(f"threshold must be >= {MIN_SEQUENCE}, got {n}")
    return Corpus(
        num_users=corpus.num_users,
        num_items=corpus.num_items,
        sequences=tuple(seq[-n:] for seq in corpus.sequences),
        trust=corpus.trust,
        user_ids=corpus.user_ids,
        item_ids=corpus.item_ids,
    )


def write_corpus(corpus: Corpus, fh: IO[str]) -> None:
    fh.write(f"users={corpus.num_users} items={corpus.num_items}\n")
    for seq in corpus.sequences:
        for rec in seq:
            fh.write(f"{rec.user} {rec.item} {rec.timestamp}\n")
    fh.write("trust\n")
    for u, friends in enumerate(corpus.trust):
        for v in friends:
            fh.write(f"{u} {v}\n")
    fh.write("user_ids\n")
    for raw in corpus.user_ids:
        fh.write(f"{raw}\n")
    fh.write("item_ids\n")
    for raw in corpus.item_ids:
        fh.write(f"{raw}\n")


def read_corpus(fh: IO[str], source: str | None = None) -> Corpus:
    """Inverse of :func:`write_corpus`."""
    lines = fh.read().splitlines()
    if not lines:
        raise ParseError("empty corpus file", 1, source)
    try:
        head = dict(tok.split("=", 1) for tok in lines[0].split())
        n_users, n_items = int(head["users"]), int(head["items"])
    except (ValueError, KeyError):
        raise ParseError("bad header, expected 'users=<n> items=<m>'", 1, source) from None

    seqs: list[list[Interaction]] = [[] for _ in range(n_users)]
    friends: list[list[int]] = [[] for _ in range(n_users)]
    user_ids: list[str] = []
    item_ids: list[str] = []
    section = "interactions"
    for line_no, line in enumerate(lines[1:], start=2):
        if line in ("trust", "user_ids", "item_ids"):
            section = line
            continue
        try:
            if section == "interactions":
                u, i, t = (int(x) for x in line.split())
                if not (0 <= u < n_users and 0 <= i < n_items):
                    raise ValueError("id out of range")
                seqs[u].append(Interaction(u, i, t))
            elif section == "trust":
                u, v = (int(x) for x in line.split())
                friends[u].append(v)
            elif section == "user_ids":
                user_ids.append(line)
            else:
                item_ids.append(line)
        except (ValueError, IndexError) as exc:
            raise ParseError(f"bad {section} line {line!r} ({exc})", line_no, source) from None
    if len(user_ids) != n_users or len(item_ids) != n_items:
        raise ParseError("id map sizes do not match header", None, source)
    return Corpus(
        num_users=n_users,
        num_items=n_items,
        sequences=tuple(tuple(s) for s in seqs),
        trust=tuple(tuple(f) for f in friends),
        user_ids=tuple(user_ids),
        item_ids=tuple(item_ids),
    )


class FriendRecencyIndex:
    """Per-user sorted ``(timestamp, item)`` arrays over training interactions."""

    def __init__(self, corpus: Corpus):
        self._times = [[rec.timestamp for rec in seq] for seq in corpus.sequences]
        self._items = [[rec.item for rec in seq] for seq in corpus.sequences]

    def query(self, user: int, t: int) -> int | None:
        """Item of ``user``'s latest training interaction strictly before ``t``."""
        k = bisect.bisect_left(self._times[user], t)
        if k == 0:
            return None
        return self._items[user][k - 1]


@dataclass(frozen=True, eq=False)
class SplitCorpus:
    """Leave-last-out split of a (thresholded) corpus.

    ``train`` keeps all users and items of the source corpus; users without
    enough history have empty training sequences and no held-out items.
    """

    train: Corpus
    users: tuple[int, ...]
    test_item: dict[int, int]
    val_item: dict[int, int]
    test_predecessor: dict[int, int]
    val_predecessor: dict[int, int]
    test_time: dict[int, int]
    val_time: dict[int, int]
    positives: dict[int, frozenset] = field(repr=False)

    @property
    def num_users(self) -> int:
        return self.train.num_users

    @property
    def num_items(self) -> int:
        return self.train.num_items

    @cached_property
    def recency(self) -> FriendRecencyIndex:
        return FriendRecencyIndex(self.train)

    @cached_property
    def arrays(self):
        from ._arrays import SplitArrays

        return SplitArrays.from_split(self)


def split(corpus: Corpus) -> SplitCorpus:
    """Hold out each user's last interaction for test and the one before for validation."""
    train_seqs = []
    users = []
    test_item, val_item, test_pred, val_pred, test_time, val_time = {}, {}, {}, {}, {}, {}
    positives = {}
    for u, seq in enumerate(corpus.sequences):
        if len(seq) < MIN_SEQUENCE:
            train_seqs.append(())
            continue
        users.append(u)
        *rest, val, test = seq
        train_seqs.append(tuple(rest))
        test_item[u], test_time[u], test_pred[u] = test.item, test.timestamp, val.item
        val_item[u], val_time[u], val_pred[u] = val.item, val.timestamp, rest[-1].item
        positives[u] = frozenset(rec.item for rec in seq)
    if not users:
        raise EmptySplitError(
            f"no user has at least {MIN_SEQUENCE} interactions; nothing to split"
        )
    train = Corpus(
        num_users=corpus.num_users,
        num_items=corpus.num_items,
        sequences=tuple(train_seqs),
        trust=corpus.trust,
        user_ids=corpus.user_ids,
        item_ids=corpus.item_ids,
    )
    return SplitCorpus(
        train=train,
        users=tuple(users),
        test_item=test_item,
        val_item=val_item,
        test_predecessor=test_pred,
        val_predecessor=val_pred,
        test_time=test_time,
        val_time=val_time,
        positives=positives,
    )


def friend_context(split: SplitCorpus, u: int, t: int) -> list[tuple[int, int]]:
    """``(friend, item)`` pairs: each friend's latest training item strictly before ``t``."""
    index = split.recency
    out = []
    for v in split.train.trust[u]:
        item = index.query(v, t)
        if item is not None:
            out.append((v, item))
    return out
