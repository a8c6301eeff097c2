"""Synthetic corpora with planted preference, sequential and social structure.

Items are split into clusters. Each user has a home cluster and a fixed set
of trusted friends. Users act on one global timeline; every action picks a
cluster by mixing three sources (the home cluster, the cluster of the
user's previous item, the cluster of a random friend's latest item) and
then an unused item inside it.
"""

from __future__ import annotations

import heapq
import os
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, Interaction, build_corpus


@dataclass(frozen=True)
class SynthConfig:
    num_users: int = 200
    num_items: int = 100
    num_clusters: int = 10
    seq_len_mean: float = 7.0
    friends_per_user: int = 5
    mix: tuple = (0.3, 0.3, 0.4)  # (preference, sequential, social)
    noise: float = 0.1
    seed: int = 0
    # users start uniformly within this many mean gaps of each other; 0 is plain round-robin
    start_spread: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "mix", tuple(float(w) for w in self.mix))
        if len(self.mix) != 3 or min(self.mix) < 0:
            raise ValueError(f"mix must be three nonnegative weights, got {self.mix}")
        if abs(sum(self.mix) - 1.0) > 1e-9:
            raise ValueError(f"mix weights must sum to 1, got {sum(self.mix)!r}")
        if not 0.0 <= self.noise <= 1.0:
            raise ValueError(f"noise must lie in [0, 1], got {self.noise}")
        if self.num_users < 1 or self.num_items < 1:
            raise ValueError("num_users and num_items must be positive")
        if not 1 <= self.num_clusters <= self.num_items:
            raise ValueError("num_clusters must lie in [1, num_items]")
        if not 0 <= self.friends_per_user < self.num_users:
            raise ValueError("friends_per_user must lie in [0, num_users)")
        if not self.seq_len_mean >= 1:
            raise ValueError("seq_len_mean must be >= 1")
        if self.start_spread < 0:
            raise ValueError("start_spread must be >= 0")


@dataclass
class SynthData:
    """Raw records plus the planted ground truth."""

    interactions: list
    trust: list
    item_cluster: np.ndarray
    home: np.ndarray
    corpus: Corpus = field(repr=False)


def generate(config: SynthConfig, rng: np.random.Generator | None = None) -> SynthData:
    if rng is None:
        rng = np.random.default_rng(config.seed)
    U, I, C = config.num_users, config.num_items, config.num_clusters

    perm = rng.permutation(I)
    item_cluster = np.empty(I, dtype=np.int64)
    members = [np.sort(chunk) for chunk in np.array_split(perm, C)]
    for c, chunk in enumerate(members):
        item_cluster[chunk] = c
    home = rng.integers(C, size=U)
    friends = [
        np.sort(rng.choice(np.delete(np.arange(U), u), config.friends_per_user, replace=False))
        for u in range(U)
    ]
    lengths = np.minimum(1 + rng.poisson(config.seq_len_mean - 1, size=U), I)

    # global timeline: jittered unit gaps from staggered start times
    events = []
    for u in range(U):
        t = rng.uniform(0.0, config.start_spread)
        for _ in range(lengths[u]):
            events.append((t, u))
            t += rng.uniform(0.5, 1.5)
    heapq.heapify(events)

    last_item = np.full(U, -1, dtype=np.int64)
    used = [set() for _ in range(U)]
    w_pref, w_seq, _ = config.mix
    records = []
    stamp = 0
    while events:
        _, u = heapq.heappop(events)
        if rng.random() < config.noise:
            item = _fresh_uniform(rng, I, used[u])
        else:
            r = rng.random()
            if r < w_pref:
                cluster = home[u]
            elif r < w_pref + w_seq:
                cluster = item_cluster[last_item[u]] if last_item[u] >= 0 else home[u]
            else:
                acted = [v for v in friends[u] if last_item[v] >= 0]
                if acted:
                    v = acted[min(int(rng.random() * len(acted)), len(acted) - 1)]
                    cluster = item_cluster[last_item[v]]
                else:
                    cluster = home[u]
            item = _fresh_in(rng, members[cluster], I, used[u])
        used[u].add(item)
        last_item[u] = item
        records.append(Interaction(f"u{u}", f"i{item}", stamp))
        stamp += 1

    trust = [(f"u{u}", f"u{v}") for u in range(U) for v in friends[u]]
    return SynthData(
        interactions=records,
        trust=trust,
        item_cluster=item_cluster,
        home=home,
        corpus=build_corpus(records, trust),
    )


def _fresh_uniform(rng, n_items, used):
    while True:
        item = int(rng.integers(n_items))
        if item not in used:
            return item


def _fresh_in(rng, cluster_items, n_items, used):
    """Uniform unused item of the cluster; redraws up to the cluster size, then any unused item."""
    for _ in range(len(cluster_items)):
        item = int(cluster_items[rng.integers(len(cluster_items))])
        if item not in used:
            return item
    return _fresh_uniform(rng, n_items, used)


def write_dataset(data: SynthData, directory) -> tuple[str, str]:
    """Write ``interactions.tsv`` and ``trust.tsv`` in the raw input formats."""
    os.makedirs(directory, exist_ok=True)
    inter_path = os.path.join(directory, "interactions.tsv")
    trust_path = os.path.join(directory, "trust.tsv")
    with open(inter_path, "w") as fh:
        fh.writelines(f"{r.user}\t{r.item}\t{r.timestamp}\n" for r in data.interactions)
    with open(trust_path, "w") as fh:
        fh.writelines(f"{a}\t{b}\n" for a, b in data.trust)
    return inter_path, trust_path

