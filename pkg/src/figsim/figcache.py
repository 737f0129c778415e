"""FIGCache tag store: per-bank fully associative segment cache metadata.

Every bank owns one portion of ``cache_rows * segments_per_row`` entries.  Entry
``i`` describes slot ``i % segments_per_row`` of cache row
``i // segments_per_row``.  A home segment is identified by the tag
``row_in_bank * segments_per_row + segment_index``.

The arrays below are shared by the compiled controller loop and by the
Python-level :class:`FigCache` / :class:`FtsPortion` views.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .config import DramConfig, Replacement
from .dram import splitmix64
from .errors import SlotOccupied

POLICY_CODES = {
    Replacement.ROW_BENEFIT: 0,
    Replacement.SEGMENT_BENEFIT: 1,
    Replacement.LRU: 2,
    Replacement.RANDOM: 3,
}
ROW_BENEFIT, SEGMENT_BENEFIT, LRU, RANDOM = 0, 1, 2, 3

# parameter slots
F_E = 0  # entries per bank
F_SPR = 1  # segments per row
F_MAXBEN = 2
F_POLICY = 3
F_THRESH = 4
F_SEED = 5
F_INIT_BEN = 6
N_FPARAMS = 7

Fts = namedtuple(
    "Fts",
    ["fp", "tag", "dirty", "benefit", "stamp", "where", "misses", "victim", "pending", "clock", "nvalid", "rng"],
)


def make_fts(
    banks: int,
    cache_rows: int,
    segments_per_row: int,
    home_rows: int,
    *,
    policy: Replacement = Replacement.ROW_BENEFIT,
    benefit_bits: int = 5,
    threshold: int = 1,
    seed: int = 0,
) -> Fts:
    entries = cache_rows * segments_per_row
    tags = home_rows * segments_per_row
    fp = np.zeros(N_FPARAMS, dtype=np.int64)
    fp[F_E] = entries
    fp[F_SPR] = segments_per_row
    fp[F_MAXBEN] = (1 << benefit_bits) - 1
    fp[F_POLICY] = POLICY_CODES[Replacement(policy)]
    fp[F_THRESH] = threshold
    fp[F_SEED] = seed
    fp[F_INIT_BEN] = min(1, int(fp[F_MAXBEN]))
    miss_shape = (banks, tags) if threshold > 1 else (1, 1)
    return Fts(
        fp=fp,
        tag=np.full((banks, entries), -1, dtype=np.int64),
        dirty=np.zeros((banks, entries), dtype=np.int64),
        benefit=np.zeros((banks, entries), dtype=np.int64),
        stamp=np.zeros((banks, entries), dtype=np.int64),
        where=np.full((banks, tags), -1, dtype=np.int32),
        misses=np.zeros(miss_shape, dtype=np.int32),
        victim=np.full(banks, -1, dtype=np.int64),
        pending=np.zeros((banks, segments_per_row), dtype=np.int64),
        clock=np.zeros(banks, dtype=np.int64),
        nvalid=np.zeros(banks, dtype=np.int64),
        rng=np.zeros(1, dtype=np.int64),
    )


def make_fts_for(config: DramConfig) -> Fts:
    g, p = config.geometry, config.policy
    return make_fts(
        g.banks_per_channel,
        config.cache_rows,
        config.cache_segments_per_row,
        g.rows_per_bank,
        policy=p.replacement,
        benefit_bits=p.benefit_bits,
        threshold=p.insertion_threshold,
        seed=p.random_seed,
    )


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def fts_probe(f, bank, tag):
    """Entry index holding ``tag`` or -1; no side effects."""
    return f.where[bank, tag]


@njit(cache=True)
def fts_lookup(f, bank, tag, is_write):
    idx = f.where[bank, tag]
    if idx < 0:
        return -1
    if f.benefit[bank, idx] < f.fp[F_MAXBEN]:
        f.benefit[bank, idx] += 1
    if is_write:
        f.dirty[bank, idx] = 1
    f.clock[bank] += 1
    f.stamp[bank, idx] = f.clock[bank]
    return idx


@njit(cache=True)
def fts_should_insert(f, bank, tag):
    th = f.fp[F_THRESH]
    if th <= 1:
        return True
    c = f.misses[bank, tag] + 1
    if c >= th:
        f.misses[bank, tag] = 0
        return True
    f.misses[bank, tag] = c
    return False


@njit(cache=True)
def fts_free_slot(f, bank):
    if f.nvalid[bank] >= f.fp[F_E]:
        return -1
    for i in range(f.fp[F_E]):
        if f.tag[bank, i] < 0:
            return i
    return -1


@njit(cache=True)
def _invalidate(f, bank, idx):
    f.where[bank, f.tag[bank, idx]] = -1
    f.tag[bank, idx] = -1
    f.dirty[bank, idx] = 0
    f.benefit[bank, idx] = 0
    f.stamp[bank, idx] = 0
    f.nvalid[bank] -= 1


@njit(cache=True)
def fts_select_victim_row(f, bank):
    spr = f.fp[F_SPR]
    rows = f.fp[F_E] // spr
    best = -1
    best_sum = np.int64(1) << 62
    for r in range(rows):
        s = 0
        for k in range(spr):
            i = r * spr + k
            if f.tag[bank, i] >= 0:
                s += f.benefit[bank, i]
        if s < best_sum:
            best_sum = s
            best = r
    f.victim[bank] = best
    for k in range(spr):
        f.pending[bank, k] = 1
    return best


@njit(cache=True)
def fts_evict_next(f, bank):
    """Drain one marked segment of the victim row; returns its entry index or -1 if none left.

    The evicted entry is invalidated; its tag and dirty bit remain readable
    through the returned ``(idx, tag, dirty)`` triple.
    """
    spr = f.fp[F_SPR]
    r = f.victim[bank]
    if r < 0:
        return -1, -1, 0
    best = -1
    best_b = np.int64(1) << 62
    for k in range(spr):
        if f.pending[bank, k] == 0:
            continue
        i = r * spr + k
        if f.tag[bank, i] < 0:
            f.pending[bank, k] = 0
            continue
        if f.benefit[bank, i] < best_b:
            best_b = f.benefit[bank, i]
            best = k
    if best < 0:
        f.victim[bank] = -1
        return -1, -1, 0
    f.pending[bank, best] = 0
    idx = r * spr + best
    tag = f.tag[bank, idx]
    dirty = f.dirty[bank, idx]
    _invalidate(f, bank, idx)
    remaining = 0
    for k in range(spr):
        remaining += f.pending[bank, k]
    if remaining == 0:
        f.victim[bank] = -1
    return idx, tag, dirty


@njit(cache=True)
def _evict_min(f, bank, arr):
    best = -1
    best_v = np.int64(1) << 62
    for i in range(f.fp[F_E]):
        if f.tag[bank, i] >= 0 and arr[bank, i] < best_v:
            best_v = arr[bank, i]
            best = i
    return best


@njit(cache=True)
def _random_valid(f, bank):
    f.rng[0] += 1
    z = np.uint64(splitmix64(f.fp[F_SEED] * 0x100000001B3 + f.rng[0]))
    k = np.int64(z % np.uint64(f.nvalid[bank]))
    for i in range(f.fp[F_E]):
        if f.tag[bank, i] >= 0:
            if k == 0:
                return i
            k -= 1
    return -1


@njit(cache=True)
def fts_make_room(f, bank):
    """Find a slot for a new segment, evicting if the portion is full.

    Returns ``(idx, evicted_tag, evicted_dirty)`` with ``evicted_tag == -1``
    when a free slot was available.
    """
    free = fts_free_slot(f, bank)
    if free >= 0:
        return free, -1, 0
    pol = f.fp[F_POLICY]
    if pol == ROW_BENEFIT:
        while True:
            if f.victim[bank] < 0:
                fts_select_victim_row(f, bank)
            idx, tag, dirty = fts_evict_next(f, bank)
            if idx >= 0:
                return idx, tag, dirty
    if pol == SEGMENT_BENEFIT:
        idx = _evict_min(f, bank, f.benefit)
    elif pol == LRU:
        idx = _evict_min(f, bank, f.stamp)
    else:
        idx = _random_valid(f, bank)
    tag = f.tag[bank, idx]
    dirty = f.dirty[bank, idx]
    _invalidate(f, bank, idx)
    return idx, tag, dirty


@njit(cache=True)
def fts_insert(f, bank, tag, idx):
    """Fill entry ``idx`` with ``tag``; False if the slot is taken or the tag is already cached."""
    if f.tag[bank, idx] >= 0 or f.where[bank, tag] >= 0:
        return False
    f.tag[bank, idx] = tag
    f.where[bank, tag] = idx
    f.dirty[bank, idx] = 0
    f.benefit[bank, idx] = f.fp[F_INIT_BEN]
    f.clock[bank] += 1
    f.stamp[bank, idx] = f.clock[bank]
    f.nvalid[bank] += 1
    return True


@njit(cache=True)
def fts_replay(f, bank, tags, writes, hit_out, evict_out, dirty_out):
    """Drive one portion with an access stream using insert-on-miss.

    Per event: ``hit_out`` is 1 on hit, ``evict_out`` the evicted tag (or -1),
    ``dirty_out`` whether that victim was dirty.  Misses that are not
    admitted by the threshold leave ``evict_out`` at -2.
    """
    for k in range(tags.shape[0]):
        tag = tags[k]
        idx = fts_lookup(f, bank, tag, writes[k] != 0)
        evict_out[k] = -1
        dirty_out[k] = 0
        if idx >= 0:
            hit_out[k] = 1
            continue
        hit_out[k] = 0
        if not fts_should_insert(f, bank, tag):
            evict_out[k] = -2
            continue
        slot, ev_tag, ev_dirty = fts_make_room(f, bank)
        evict_out[k] = ev_tag
        dirty_out[k] = ev_dirty
        # a write miss lands at home first, so the cached copy starts clean
        fts_insert(f, bank, tag, slot)


# ---------------------------------------------------------------------------
# Python views
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FtsEntry:
    tag: int
    valid: bool
    dirty: bool
    benefit: int


class FtsPortion:
    """One bank's tag store."""

    def __init__(self, fts: Fts, bank: int):
        self.fts = fts
        self.bank = bank

    @property
    def segments_per_row(self) -> int:
        return int(self.fts.fp[F_SPR])

    @property
    def size(self) -> int:
        return int(self.fts.fp[F_E])

    def location(self, idx: int) -> tuple[int, int]:
        return divmod(idx, self.segments_per_row)

    def index(self, cache_row: int, slot: int) -> int:
        return cache_row * self.segments_per_row + slot

    def entry(self, idx: int) -> FtsEntry:
        f, b = self.fts, self.bank
        tag = int(f.tag[b, idx])
        return FtsEntry(tag, tag >= 0, bool(f.dirty[b, idx]), int(f.benefit[b, idx]))

    def entries(self) -> list[FtsEntry]:
        return [self.entry(i) for i in range(self.size)]

    def probe(self, tag: int) -> Optional[tuple[int, int]]:
        idx = int(fts_probe(self.fts, self.bank, tag))
        return None if idx < 0 else self.location(idx)

    def lookup(self, tag: int, is_write: bool = False) -> Optional[tuple[int, int]]:
        """(cache_row, slot) on hit, None on miss."""
        idx = int(fts_lookup(self.fts, self.bank, tag, is_write))
        return None if idx < 0 else self.location(idx)

    def should_insert(self, tag: int) -> bool:
        return bool(fts_should_insert(self.fts, self.bank, tag))

    def free_slot(self) -> Optional[tuple[int, int]]:
        idx = int(fts_free_slot(self.fts, self.bank))
        return None if idx < 0 else self.location(idx)

    def select_victim_row(self) -> int:
        return int(fts_select_victim_row(self.fts, self.bank))

    @property
    def victim_row(self) -> Optional[int]:
        v = int(self.fts.victim[self.bank])
        return None if v < 0 else v

    @property
    def pending_mask(self) -> int:
        """Marked slots as a bitmask, slot 0 in the least significant bit."""
        bits = self.fts.pending[self.bank]
        return sum(1 << k for k in range(len(bits)) if bits[k])

    def evict_next_segment(self) -> Optional[tuple[int, int, FtsEntry]]:
        if self.victim_row is None:
            self.select_victim_row()
        before = {i: self.entry(i) for i in range(self.size)}
        idx, tag, dirty = fts_evict_next(self.fts, self.bank)
        if idx < 0:
            return None
        old = before[int(idx)]
        row, slot = self.location(int(idx))
        return row, slot, FtsEntry(int(tag), True, bool(dirty), old.benefit)

    def make_room(self) -> tuple[int, int, Optional[FtsEntry]]:
        """Free slot or eviction per the configured policy: (cache_row, slot, evicted entry or None)."""
        snapshot = [self.entry(i) for i in range(self.size)]
        idx, tag, dirty = fts_make_room(self.fts, self.bank)
        row, slot = self.location(int(idx))
        if tag < 0:
            return row, slot, None
        return row, slot, FtsEntry(int(tag), True, bool(dirty), snapshot[int(idx)].benefit)

    def insert(self, tag: int, where: tuple[int, int]) -> FtsEntry:
        idx = self.index(*where)
        if not fts_insert(self.fts, self.bank, tag, idx):
            if self.fts.tag[self.bank, idx] >= 0:
                raise SlotOccupied(f"slot {where} already holds tag {int(self.fts.tag[self.bank, idx])}")
            raise SlotOccupied(f"tag {tag} already cached")
        return self.entry(idx)

    def occupied(self) -> int:
        return int(self.fts.nvalid[self.bank])

    def tracked_misses(self) -> int:
        """Number of home segments with a nonzero consecutive-miss count."""
        if self.fts.misses.shape[0] == 1 and self.fts.misses.shape[1] == 1:
            return 0
        return int(np.count_nonzero(self.fts.misses[self.bank]))

    def check(self) -> None:
        """Assert the structural invariants of this portion."""
        f, b = self.fts, self.bank
        tags = f.tag[b]
        valid = tags >= 0
        assert len(set(tags[valid].tolist())) == int(valid.sum()), "duplicate tag"
        assert int(valid.sum()) == int(f.nvalid[b])
        assert np.all(f.dirty[b][~valid] == 0) and np.all(f.benefit[b][~valid] == 0)
        assert np.all((f.benefit[b] >= 0) & (f.benefit[b] <= f.fp[F_MAXBEN]))
        for i in np.nonzero(valid)[0]:
            assert f.where[b, tags[i]] == i
        assert int(np.count_nonzero(f.where[b] >= 0)) == int(valid.sum())
        assert (f.victim[b] >= 0) == bool(f.pending[b].any())


class FigCache:
    """Tag store for every bank of one channel."""

    def __init__(self, config: DramConfig, fts: Optional[Fts] = None):
        self.config = config
        self.fts = fts if fts is not None else make_fts_for(config)

    def portion(self, bank: int) -> FtsPortion:
        return FtsPortion(self.fts, bank)

    def tag_of(self, row_in_bank: int, segment_index: int) -> int:
        return row_in_bank * self.config.cache_segments_per_row + segment_index

    def home_of(self, tag: int) -> tuple[int, int]:
        return divmod(tag, self.config.cache_segments_per_row)


# ---------------------------------------------------------------------------
# Storage accounting
# ---------------------------------------------------------------------------

REPORTED_TAG_BITS = 19  # tag width stated for the reference design


@dataclass(frozen=True)
class FtsAccounting:
    entries_per_bank: int
    tag_bits: int
    entry_bits: int
    bytes_per_channel: float
    reported_tag_bits: int
    reported_entry_bits: int
    reported_bytes_per_channel: float

    @property
    def kib_per_channel(self) -> float:
        return self.bytes_per_channel / 1024

    @property
    def reported_kib_per_channel(self) -> float:
        return self.reported_bytes_per_channel / 1024

    def lines(self) -> list[str]:
        return [
            f"entries per bank      : {self.entries_per_bank}",
            f"computed tag bits     : {self.tag_bits}",
            f"computed entry bits   : {self.entry_bits}",
            f"computed size/channel : {self.kib_per_channel:.1f} KB",
            f"reported tag bits     : {self.reported_tag_bits}",
            f"reported entry bits   : {self.reported_entry_bits}",
            f"reported size/channel : {self.reported_kib_per_channel:.1f} KB",
        ]


def fts_accounting(config: DramConfig, tag_bits_override: Optional[int] = None) -> FtsAccounting:
    """Tag store size: computed from the geometry, and with the reference 19-bit tag."""
    g, p = config.geometry, config.policy
    entries = config.cache_rows * config.cache_segments_per_row
    segments = g.rows_per_bank * config.cache_segments_per_row
    tag_bits = math.ceil(math.log2(segments)) if segments > 1 else 0
    if tag_bits_override is not None:
        tag_bits = tag_bits_override
    entry_bits = tag_bits + p.benefit_bits + 2
    banks = g.banks_per_channel
    reported_entry = REPORTED_TAG_BITS + p.benefit_bits + 2
    return FtsAccounting(
        entries_per_bank=entries,
        tag_bits=tag_bits,
        entry_bits=entry_bits,
        bytes_per_channel=banks * entries * entry_bits / 8,
        reported_tag_bits=REPORTED_TAG_BITS,
        reported_entry_bits=reported_entry,
        reported_bytes_per_channel=banks * entries * reported_entry / 8,
    )
