"""Random access streams replayed through the compiled tag store and the list-based reference."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

import numpy as np

from figsim.config import Replacement
from figsim.figcache import fts_replay, make_fts
from oracles import ReferenceTagStore

POLICIES = [r.value for r in Replacement]


@dataclass
class StreamCase:
    rows: int
    per_row: int
    policy: str
    benefit_bits: int
    threshold: int
    seed: int
    tags: list[int]
    writes: list[int]

    @property
    def home_segments(self) -> int:
        return max(self.tags, default=0) + 1


def random_case(rng: random.Random, max_events: int = 10_000) -> StreamCase:
    rows = rng.choice([1, 2, 3, 4])
    per_row = rng.choice([1, 2, 4, 8])
    capacity = rows * per_row
    universe = rng.choice([capacity + 1, 2 * capacity, 4 * capacity, 16 * capacity, 200])
    hot = rng.sample(range(universe), k=max(1, min(universe, rng.choice([1, capacity // 2 + 1, capacity]))))
    hot_p = rng.choice([0.0, 0.3, 0.6, 0.9])
    n = int(math.exp(rng.uniform(math.log(20), math.log(max_events))))
    tags, writes = [], []
    wr = rng.choice([0.0, 0.3, 0.7])
    for _ in range(n):
        tags.append(rng.choice(hot) if rng.random() < hot_p else rng.randrange(universe))
        writes.append(1 if rng.random() < wr else 0)
    return StreamCase(
        rows=rows,
        per_row=per_row,
        policy=rng.choice(POLICIES),
        benefit_bits=rng.choice([0, 1, 2, 3, 5]),
        threshold=rng.choice([1, 1, 2, 3, 4, 8]),
        seed=rng.randrange(1 << 20),
        tags=tags,
        writes=writes,
    )


def replay_compiled(case: StreamCase):
    home_rows = math.ceil(case.home_segments / case.per_row)
    f = make_fts(
        1,
        case.rows,
        case.per_row,
        home_rows,
        policy=Replacement(case.policy),
        benefit_bits=case.benefit_bits,
        threshold=case.threshold,
        seed=case.seed,
    )
    n = len(case.tags)
    hit = np.zeros(n, dtype=np.int64)
    ev = np.zeros(n, dtype=np.int64)
    dirty = np.zeros(n, dtype=np.int64)
    fts_replay(f, 0, np.array(case.tags, dtype=np.int64), np.array(case.writes, dtype=np.int64), hit, ev, dirty)
    return list(zip(hit.tolist(), ev.tolist(), dirty.tolist())), f


def replay_reference(case: StreamCase):
    ref = ReferenceTagStore(case.rows, case.per_row, case.policy, case.benefit_bits, case.threshold, case.seed)
    return [ref.access(t, bool(w)) for t, w in zip(case.tags, case.writes)]


def first_divergence(case: StreamCase):
    """Index of the first event where the two implementations differ, or None."""
    got, _ = replay_compiled(case)
    want = replay_reference(case)
    for i, (a, b) in enumerate(zip(got, want)):
        if a != b:
            return i, a, b
    return None
