"""DRAM device model: address mapping, bank state machine, command timing, block contents.

Bank state lives in plain integer arrays so the controller loop can run under
``numba``.  Each bank tracks at most two open local row buffers: the source row
opened by a normal ACTIVATE, and the destination row opened by the commit
ACTIVATE that ends a relocation sequence (ACT src, RELOC..., ACT dst, PRE).

Time is measured in integer ticks (``TimingParams.tick_ns``), fine enough to
hold every timing parameter exactly.
"""

from __future__ import annotations

import enum
from collections import namedtuple
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .config import DramConfig, DramGeometry, Mode, TimingParams
from .errors import IllegalCommand, OutOfRange, StoreFull

# ---------------------------------------------------------------------------
# Addresses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecodedAddress:
    channel: int
    rank: int
    bank_group: int
    bank: int
    row_in_bank: int
    block_column: int
    geometry: DramGeometry = DramGeometry()

    @property
    def subarray(self) -> int:
        return self.row_in_bank // self.geometry.rows_per_subarray

    @property
    def row_in_subarray(self) -> int:
        return self.row_in_bank % self.geometry.rows_per_subarray

    @property
    def segment_index(self) -> int:
        return self.block_column // self.geometry.blocks_per_segment

    @property
    def bank_index(self) -> int:
        """Flat bank number within the channel."""
        g = self.geometry
        return (self.rank * g.bank_groups + self.bank_group) * g.banks_per_group + self.bank

    def coords(self) -> tuple:
        return (self.channel, self.rank, self.bank_group, self.bank, self.row_in_bank, self.block_column)


def decode_address(addr: int, geometry: DramGeometry) -> DecodedAddress:
    """Split a byte address; the row is the most significant field, the column the least."""
    g = geometry
    if addr < 0 or addr >= g.total_bytes:
        raise OutOfRange(f"address {addr:#x} outside {g.total_bytes:#x}-byte memory")
    if addr % g.block_bytes:
        raise OutOfRange(f"address {addr:#x} is not {g.block_bytes}-byte aligned")
    blk = addr // g.block_bytes
    blk, col = divmod(blk, g.blocks_per_row)
    blk, ch = divmod(blk, g.channels)
    blk, bank = divmod(blk, g.banks_per_group)
    blk, bg = divmod(blk, g.bank_groups)
    row, rank = divmod(blk, g.ranks_per_channel)
    return DecodedAddress(ch, rank, bg, bank, row, col, g)


def encode_address(
    geometry: DramGeometry, *, channel=0, rank=0, bank_group=0, bank=0, row_in_bank=0, block_column=0
) -> int:
    g = geometry
    limits = (
        (channel, g.channels, "channel"),
        (rank, g.ranks_per_channel, "rank"),
        (bank_group, g.bank_groups, "bank_group"),
        (bank, g.banks_per_group, "bank"),
        (row_in_bank, g.rows_per_bank, "row_in_bank"),
        (block_column, g.blocks_per_row, "block_column"),
    )
    for value, bound, name in limits:
        if not 0 <= value < bound:
            raise OutOfRange(f"{name}={value} outside [0, {bound})")
    blk = row_in_bank
    blk = blk * g.ranks_per_channel + rank
    blk = blk * g.bank_groups + bank_group
    blk = blk * g.banks_per_group + bank
    blk = blk * g.channels + channel
    blk = blk * g.blocks_per_row + block_column
    return blk * g.block_bytes


def decode_array(addr: np.ndarray, geometry: DramGeometry):
    """Vectorised decode returning (channel, flat bank, row, column) arrays."""
    g = geometry
    blk = np.asarray(addr, dtype=np.int64) // g.block_bytes
    col = blk % g.blocks_per_row
    blk = blk // g.blocks_per_row
    ch = blk % g.channels
    blk = blk // g.channels
    bank = blk % g.banks_per_group
    blk = blk // g.banks_per_group
    bg = blk % g.bank_groups
    blk = blk // g.bank_groups
    rank = blk % g.ranks_per_channel
    row = blk // g.ranks_per_channel
    flat_bank = (rank * g.bank_groups + bg) * g.banks_per_group + bank
    return ch, flat_bank, row, col


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


class CmdKind(enum.IntEnum):
    ACT = 0
    RD = 1
    WR = 2
    PRE = 3
    RELOC = 4
    RBM = 5  # row-buffer movement, the whole-row copy used by the lisa-villa baseline


ACT, RD, WR, PRE, RELOC, RBM = range(6)
NEVER = np.int64(1 << 62)
BANK_KEY_SHIFT = 24


@dataclass(frozen=True)
class Command:
    """A DRAM command addressed to one bank of a channel.

    ``row`` is the bank-local row id: home rows are ``[0, rows_per_bank)``,
    cache rows follow at ``rows_per_bank + cache_row``.  RD/WR name the row
    they expect to be open.
    """

    kind: CmdKind
    bank: int
    row: int = -1
    column: int = -1
    dst_subarray: int = -1
    dst_column: int = -1

    def as_tuple(self):
        return int(self.kind), self.bank, self.row, self.column, self.dst_subarray, self.dst_column

    @classmethod
    def act(cls, bank, row):
        return cls(CmdKind.ACT, bank, row)

    @classmethod
    def rd(cls, bank, row, column):
        return cls(CmdKind.RD, bank, row, column)

    @classmethod
    def wr(cls, bank, row, column):
        return cls(CmdKind.WR, bank, row, column)

    @classmethod
    def pre(cls, bank):
        return cls(CmdKind.PRE, bank)

    @classmethod
    def reloc(cls, bank, src_column, dst_subarray, dst_column):
        return cls(CmdKind.RELOC, bank, -1, src_column, dst_subarray, dst_column)

    @classmethod
    def rbm(cls, bank, dst_subarray):
        return cls(CmdKind.RBM, bank, -1, -1, dst_subarray, -1)


def reloc_operand_bits(geometry: DramGeometry, total_subarrays: int) -> tuple[int, int, int]:
    """Bit widths of the RELOC operands: source column, destination subarray, destination column."""
    col_bits = max(1, (geometry.blocks_per_row - 1).bit_length())
    sub_bits = max(1, (total_subarrays - 1).bit_length())
    return col_bits, sub_bits, col_bits


# ---------------------------------------------------------------------------
# Device layout and state arrays
# ---------------------------------------------------------------------------

MODE_CODES = {
    Mode.BASE: 0,
    Mode.FIG_FAST: 1,
    Mode.FIG_SLOW: 2,
    Mode.LISA_VILLA: 3,
    Mode.FIG_IDEAL: 4,
    Mode.LL_DRAM: 5,
}

# params array slots
P_MODE = 0
P_NB = 1  # banks per channel
P_R = 2  # home rows per bank
P_RPS = 3  # rows per home subarray
P_S = 4  # home subarrays
P_NS = 5  # total subarrays (home + extra fast)
P_CR = 6  # cache rows per bank
P_CACHE_BASE_SUB = 7
P_CACHE_ROWS_PER_SUB = 8
P_CACHE_SLOW = 9  # cache rows are reserved rows of one home subarray
P_CACHE_SUB = 10
P_BPR = 11
P_T_RELOC = 12
P_T_CCD = 13
P_T_BURST = 14
P_HOP = 15
P_HAS_RBM = 16
P_TICK_PER_CLK = 17
N_PARAMS = 18

# per-class timing columns (class 0 = regular subarray, 1 = fast subarray)
T_RCD = 0
T_RP = 1
T_RAS = 2

# bank state columns
B_NACTIVE = 0
B_SRC_SUB = 1
B_SRC_ROW = 2
B_SRC_ACT = 3
B_DST_SUB = 4
B_DST_ROW = 5
B_DST_ACT = 6
B_STAGE_SUB = 7
B_STAGE_N = 8
B_STAGE_FULL = 9
B_RELOC_END = 10
B_LAST_COL = 11
B_ACT_READY = 12
N_BANK_COLS = 13

C_LAST_CMD = 0
C_LAST_COL = 1

_LONG_AGO = -(1 << 40)

Store = namedtuple("Store", ["page_of", "pool", "npages", "rows_per_bank_ext", "bpr"])
Device = namedtuple(
    "Device", ["params", "tim", "is_fast", "hops", "bank", "chan", "stage_col", "stage_tok", "counts", "store"]
)


def lisa_hops(subarrays: int, fast_subarrays: int) -> np.ndarray:
    """Inter-subarray links between each regular subarray and its nearest fast subarray.

    The fast subarrays are interleaved evenly: fast subarray k sits right after
    regular subarray ``floor((k + 0.5) * S / F) - 1`` in the physical order.
    """
    order = []  # physical sequence of ("slow"|"fast", index)
    after = {}
    for k in range(fast_subarrays):
        pos = max(0, int((k + 0.5) * subarrays / fast_subarrays) - 1)
        after.setdefault(pos, []).append(k)
    for i in range(subarrays):
        order.append(("slow", i))
        for k in after.get(i, ()):
            order.append(("fast", k))
    slow_pos = {idx: p for p, (kind, idx) in enumerate(order) if kind == "slow"}
    fast_pos = [p for p, (kind, _) in enumerate(order) if kind == "fast"]
    return np.array([min(abs(slow_pos[i] - f) for f in fast_pos) for i in range(subarrays)], dtype=np.int64)


def build_params(config: DramConfig):
    """Integer parameter vector, per-class timing table, fast flags and lisa hop table."""
    g, t, p = config.geometry, config.timing, config.policy
    fast = config.fast_timing
    mode = p.mode
    S = g.subarrays_per_bank
    cache_rows = p.cache_rows_per_bank if mode.caches else 0
    extra = p.fast_subarrays if mode in (Mode.FIG_FAST, Mode.FIG_IDEAL, Mode.LISA_VILLA) else 0
    NS = S + extra

    P = np.zeros(N_PARAMS, dtype=np.int64)
    P[P_MODE] = MODE_CODES[mode]
    P[P_NB] = g.banks_per_channel
    P[P_R] = g.rows_per_bank
    P[P_RPS] = g.rows_per_subarray
    P[P_S] = S
    P[P_NS] = NS
    P[P_CR] = cache_rows
    P[P_CACHE_BASE_SUB] = S
    P[P_CACHE_ROWS_PER_SUB] = p.fast_subarray_rows
    P[P_CACHE_SLOW] = 1 if mode is Mode.FIG_SLOW else 0
    P[P_CACHE_SUB] = p.cache_subarray if p.cache_subarray is not None else S - 1
    P[P_BPR] = g.blocks_per_row
    P[P_T_RELOC] = t.ticks(t.t_reloc)
    P[P_T_CCD] = t.ticks(t.t_ccd)
    P[P_T_BURST] = t.ticks(t.t_burst)
    P[P_HOP] = t.ticks(p.lisa_hop_ns)
    P[P_HAS_RBM] = 1 if mode is Mode.LISA_VILLA else 0
    P[P_TICK_PER_CLK] = t.ticks_per_clock

    tim = np.array(
        [
            [t.ticks(t.t_rcd), t.ticks(t.t_rp), t.ticks(t.t_ras)],
            [t.ticks(fast.t_rcd), t.ticks(fast.t_rp), t.ticks(fast.t_ras)],
        ],
        dtype=np.int64,
    )
    is_fast = np.zeros(NS, dtype=np.int64)
    if mode is Mode.LL_DRAM:
        is_fast[:] = 1
    else:
        is_fast[S:] = 1
    if mode is Mode.LISA_VILLA:
        hops = lisa_hops(S, extra)
    else:
        hops = np.zeros(S, dtype=np.int64)
    return P, tim, is_fast, hops


def make_store(banks: int, rows_per_bank_ext: int, bpr: int, capacity_rows: int) -> Store:
    return Store(
        page_of=np.full(banks * rows_per_bank_ext, -1, dtype=np.int32),
        pool=np.zeros((max(1, capacity_rows), bpr), dtype=np.int64),
        npages=np.zeros(1, dtype=np.int64),
        rows_per_bank_ext=rows_per_bank_ext,
        bpr=bpr,
    )


def make_device(config: DramConfig, store_rows: int = 4096) -> Device:
    P, tim, is_fast, hops = build_params(config)
    nb = int(P[P_NB])
    bank = np.zeros((nb, N_BANK_COLS), dtype=np.int64)
    reset_banks(bank)
    chan = np.array([-1, _LONG_AGO], dtype=np.int64)
    bpr = int(P[P_BPR])
    store = make_store(nb, int(P[P_R] + P[P_CR]), bpr, store_rows)
    return Device(
        params=P,
        tim=tim,
        is_fast=is_fast,
        hops=hops,
        bank=bank,
        chan=chan,
        stage_col=np.zeros((nb, bpr), dtype=np.int64),
        stage_tok=np.zeros((nb, bpr), dtype=np.int64),
        counts=np.zeros((nb, 6), dtype=np.int64),
        store=store,
    )


def reset_banks(bank: np.ndarray) -> None:
    bank[:] = 0
    for col in (B_SRC_SUB, B_SRC_ROW, B_DST_SUB, B_DST_ROW, B_STAGE_SUB):
        bank[:, col] = -1
    bank[:, B_LAST_COL] = _LONG_AGO


# ---------------------------------------------------------------------------
# Block content tokens
# ---------------------------------------------------------------------------


@njit(cache=True)
def splitmix64(x):
    z = np.uint64(x) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    return np.int64(z)


@njit(cache=True)
def block_key(store, bank, row, col):
    # fixed bank stride so keys do not depend on how many cache rows a mode adds
    return ((bank << BANK_KEY_SHIFT) + row) * store.bpr + col


@njit(cache=True)
def initial_token(store, bank, row, col):
    return splitmix64(block_key(store, bank, row, col))


@njit(cache=True)
def store_read(store, bank, row, col):
    page = store.page_of[bank * store.rows_per_bank_ext + row]
    if page < 0:
        return initial_token(store, bank, row, col)
    return store.pool[page, col]


@njit(cache=True)
def store_write(store, bank, row, col, token):
    """Write one block token; returns False when the page pool is exhausted."""
    idx = bank * store.rows_per_bank_ext + row
    page = store.page_of[idx]
    if page < 0:
        page = store.npages[0]
        if page >= store.pool.shape[0]:
            return False
        for c in range(store.bpr):
            store.pool[page, c] = initial_token(store, bank, row, c)
        store.page_of[idx] = page
        store.npages[0] = page + 1
    store.pool[page, col] = token
    return True


@njit(cache=True)
def store_mismatches(a, b):
    """Number of blocks whose current tokens differ between two stores of the same shape."""
    n = 0
    rows = a.page_of.shape[0]
    for idx in range(rows):
        pa = a.page_of[idx]
        pb = b.page_of[idx]
        if pa < 0 and pb < 0:
            continue
        bank = idx // a.rows_per_bank_ext
        row = idx % a.rows_per_bank_ext
        for c in range(a.bpr):
            ta = a.pool[pa, c] if pa >= 0 else initial_token(a, bank, row, c)
            tb = b.pool[pb, c] if pb >= 0 else initial_token(b, bank, row, c)
            if ta != tb:
                n += 1
    return n


@njit(cache=True)
def store_mismatches_home(a, b, home_rows):
    """Like :func:`store_mismatches` but only over home rows (cache rows ignored).

    The two stores may differ in how many cache rows they address.
    """
    n = 0
    banks = a.page_of.shape[0] // a.rows_per_bank_ext
    for bank in range(banks):
        for row in range(home_rows):
            pa = a.page_of[bank * a.rows_per_bank_ext + row]
            pb = b.page_of[bank * b.rows_per_bank_ext + row]
            if pa < 0 and pb < 0:
                continue
            for c in range(a.bpr):
                ta = a.pool[pa, c] if pa >= 0 else initial_token(a, bank, row, c)
                tb = b.pool[pb, c] if pb >= 0 else initial_token(b, bank, row, c)
                if ta != tb:
                    n += 1
    return n


class BlockStore:
    """Per-channel block contents as 64-bit tokens, paged by row.

    Unwritten blocks hold a deterministic initial token derived from their
    coordinates, so only rows that are ever written take memory.  Cache rows
    share the keyspace at row ids ``rows_per_bank + cache_row``.
    """

    def __init__(self, store: Store, home_rows: int):
        self.raw = store
        self.home_rows = home_rows

    def read(self, bank: int, row: int, col: int) -> int:
        return int(store_read(self.raw, bank, row, col))

    def write(self, bank: int, row: int, col: int, token: int) -> None:
        if not store_write(self.raw, bank, row, col, np.int64(token)):
            raise StoreFull("block store page pool exhausted")

    def initial(self, bank: int, row: int, col: int) -> int:
        return int(initial_token(self.raw, bank, row, col))

    def read_cache(self, bank: int, cache_row: int, col: int) -> int:
        return self.read(bank, self.home_rows + cache_row, col)

    def written_rows(self):
        idx = np.nonzero(self.raw.page_of >= 0)[0]
        ext = self.raw.rows_per_bank_ext
        return [(int(i // ext), int(i % ext)) for i in idx]

    def home_mismatches(self, other: "BlockStore") -> int:
        return int(store_mismatches_home(self.raw, other.raw, self.home_rows))


# ---------------------------------------------------------------------------
# Timing kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def subarray_of(P, row):
    R = P[P_R]
    if row < R:
        return row // P[P_RPS]
    if P[P_CACHE_SLOW] == 1:
        return P[P_CACHE_SUB]
    return P[P_CACHE_BASE_SUB] + (row - R) // P[P_CACHE_ROWS_PER_SUB]


@njit(cache=True)
def cache_row_id(P, cache_row):
    return P[P_R] + cache_row


@njit(cache=True)
def earliest_issue(dev, kind, bank, row, col, dst_sub, dst_col):
    """Earliest tick at which the command becomes legal given the current state, or NEVER.

    Every constraint is a lower bound on time once the structural state
    (which rows are open, what is staged) matches, so ``can_issue`` at ``now``
    is simply ``earliest_issue(...) <= now``.
    """
    P = dev.params
    if bank < 0 or bank >= P[P_NB]:
        return NEVER
    b = dev.bank[bank]
    tim = dev.tim
    t = dev.chan[C_LAST_CMD] + 1
    nact = b[B_NACTIVE]
    if kind == ACT:
        if row < 0 or row >= P[P_R] + P[P_CR]:
            return NEVER
        s = subarray_of(P, row)
        if b[B_STAGE_SUB] >= 0:
            # commit activation of the relocation destination
            if nact != 1 or b[B_DST_SUB] >= 0 or s != b[B_STAGE_SUB]:
                return NEVER
            return max(t, b[B_RELOC_END])
        if nact != 0:
            return NEVER
        return max(t, b[B_ACT_READY])
    if kind == RD or kind == WR:
        if nact != 1 or b[B_STAGE_SUB] >= 0 or b[B_SRC_ROW] != row:
            return NEVER
        if col < 0 or col >= P[P_BPR]:
            return NEVER
        cls = dev.is_fast[b[B_SRC_SUB]]
        t = max(t, b[B_SRC_ACT] + tim[cls, T_RCD])
        return max(t, dev.chan[C_LAST_COL] + P[P_T_CCD])
    if kind == PRE:
        if nact == 0:
            return NEVER
        cls = dev.is_fast[b[B_SRC_SUB]]
        t = max(t, b[B_SRC_ACT] + tim[cls, T_RAS])
        if b[B_DST_SUB] >= 0:
            dcls = dev.is_fast[b[B_DST_SUB]]
            t = max(t, b[B_DST_ACT] + tim[dcls, T_RCD])
        return t
    if kind == RELOC or kind == RBM:
        if nact != 1 or b[B_STAGE_FULL] == 1:
            return NEVER
        src = b[B_SRC_SUB]
        if dst_sub < 0 or dst_sub >= P[P_NS] or dst_sub == src:
            return NEVER
        if kind == RELOC:
            if col < 0 or col >= P[P_BPR] or dst_col < 0 or dst_col >= P[P_BPR]:
                return NEVER
            if b[B_STAGE_SUB] >= 0 and b[B_STAGE_SUB] != dst_sub:
                return NEVER
            if b[B_STAGE_N] >= P[P_BPR]:
                return NEVER
        else:
            # whole-row move between a regular subarray and a fast one
            if P[P_HAS_RBM] == 0 or b[B_STAGE_SUB] >= 0:
                return NEVER
            if (src < P[P_S]) == (dst_sub < P[P_S]):
                return NEVER
        cls = dev.is_fast[src]
        t = max(t, b[B_SRC_ACT] + tim[cls, T_RAS])
        t = max(t, b[B_LAST_COL] + P[P_T_CCD])
        return max(t, b[B_RELOC_END])
    return NEVER


@njit(cache=True)
def issue_command(dev, kind, bank, row, col, dst_sub, dst_col, now, wtoken):
    """Apply one command.  Returns (status, token): status 0 ok, 1 illegal, 2 store full.

    RD returns the token read; RELOC copies the source token into the
    destination staging area; the commit ACT writes the staged columns.
    """
    if earliest_issue(dev, kind, bank, row, col, dst_sub, dst_col) > now:
        return 1, np.int64(0)
    P = dev.params
    b = dev.bank[bank]
    store = dev.store
    token = np.int64(0)
    dev.chan[C_LAST_CMD] = now
    dev.counts[bank, kind] += 1
    if kind == ACT:
        s = subarray_of(P, row)
        if b[B_STAGE_SUB] >= 0:
            for i in range(b[B_STAGE_N]):
                if not store_write(store, bank, row, dev.stage_col[bank, i], dev.stage_tok[bank, i]):
                    return 2, token
            b[B_DST_SUB] = s
            b[B_DST_ROW] = row
            b[B_DST_ACT] = now
            b[B_STAGE_SUB] = -1
            b[B_STAGE_N] = 0
            b[B_STAGE_FULL] = 0
            b[B_NACTIVE] = 2
        else:
            b[B_SRC_SUB] = s
            b[B_SRC_ROW] = row
            b[B_SRC_ACT] = now
            b[B_NACTIVE] = 1
    elif kind == RD or kind == WR:
        dev.chan[C_LAST_COL] = now
        b[B_LAST_COL] = now
        if kind == RD:
            token = store_read(store, bank, row, col)
        else:
            if not store_write(store, bank, row, col, wtoken):
                return 2, token
            token = wtoken
    elif kind == PRE:
        if b[B_DST_SUB] >= 0:
            cls = dev.is_fast[b[B_DST_SUB]]
        else:
            cls = dev.is_fast[b[B_SRC_SUB]]
        b[B_ACT_READY] = now + dev.tim[cls, T_RP]
        b[B_NACTIVE] = 0
        b[B_SRC_SUB] = -1
        b[B_SRC_ROW] = -1
        b[B_DST_SUB] = -1
        b[B_DST_ROW] = -1
        b[B_STAGE_SUB] = -1
        b[B_STAGE_N] = 0
        b[B_STAGE_FULL] = 0
    elif kind == RELOC:
        n = b[B_STAGE_N]
        dev.stage_col[bank, n] = dst_col
        dev.stage_tok[bank, n] = store_read(store, bank, b[B_SRC_ROW], col)
        b[B_STAGE_N] = n + 1
        b[B_STAGE_SUB] = dst_sub
        b[B_RELOC_END] = now + P[P_T_RELOC]
    else:  # RBM
        bpr = P[P_BPR]
        for c in range(bpr):
            dev.stage_col[bank, c] = c
            dev.stage_tok[bank, c] = store_read(store, bank, b[B_SRC_ROW], c)
        b[B_STAGE_N] = bpr
        b[B_STAGE_SUB] = dst_sub
        b[B_STAGE_FULL] = 1
        slow = b[B_SRC_SUB] if b[B_SRC_SUB] < P[P_S] else dst_sub
        b[B_RELOC_END] = now + dev.hops[slow] * P[P_HOP]
    return 0, token


# ---------------------------------------------------------------------------
# Python-facing device
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubarrayState:
    state: str  # "precharged" | "activating" | "active"
    row: Optional[int] = None
    until: Optional[int] = None  # tick at which an activating row becomes accessible


class DramDevice:
    """One channel's banks, command timing and block contents."""

    def __init__(self, config: DramConfig, store_rows: int = 4096):
        self.config = config
        self.raw = make_device(config, store_rows)
        self.store = BlockStore(self.raw.store, config.geometry.rows_per_bank)
        self.timing: TimingParams = config.timing

    @property
    def params(self):
        return self.raw.params

    @property
    def total_subarrays(self) -> int:
        return int(self.raw.params[P_NS])

    def subarray_of(self, row: int) -> int:
        return int(subarray_of(self.raw.params, row))

    def cache_row_id(self, cache_row: int) -> int:
        return self.config.geometry.rows_per_bank + cache_row

    def is_fast(self, subarray: int) -> bool:
        return bool(self.raw.is_fast[subarray])

    def ticks(self, ns: float) -> int:
        return self.timing.ticks(ns)

    def earliest(self, cmd: Command) -> Optional[int]:
        t = int(earliest_issue(self.raw, *cmd.as_tuple()))
        return None if t >= NEVER else t

    def can_issue(self, cmd: Command, now: int) -> bool:
        return bool(earliest_issue(self.raw, *cmd.as_tuple()) <= now)

    def issue(self, cmd: Command, now: int, token: int = 0) -> Optional[int]:
        """Issue ``cmd`` at tick ``now``; returns the token read by RD, else None."""
        status, tok = issue_command(self.raw, *cmd.as_tuple(), now, np.int64(token))
        if status == 1:
            raise IllegalCommand(f"{cmd} not legal at tick {now}")
        if status == 2:
            raise StoreFull("block store page pool exhausted")
        return int(tok) if cmd.kind == CmdKind.RD else None

    def next_ready(self, bank: int, row: int = 0) -> dict:
        """Earliest tick for each command kind on ``bank`` (None when structurally blocked)."""
        b = self.raw.bank[bank]
        open_row = int(b[B_SRC_ROW]) if b[B_SRC_ROW] >= 0 else row
        out = {}
        for kind in CmdKind:
            if kind in (CmdKind.RD, CmdKind.WR):
                cmd = Command(kind, bank, open_row, 0)
            elif kind == CmdKind.RELOC:
                cmd = Command(kind, bank, -1, 0, self._spare_subarray(bank), 0)
            elif kind == CmdKind.RBM:
                cmd = Command(kind, bank, -1, -1, self._spare_subarray(bank), -1)
            else:
                cmd = Command(kind, bank, row)
            out[kind.name] = self.earliest(cmd)
        return out

    def _spare_subarray(self, bank: int) -> int:
        b = self.raw.bank[bank]
        if b[B_STAGE_SUB] >= 0:
            return int(b[B_STAGE_SUB])
        return 1 if b[B_SRC_SUB] == 0 else 0

    def subarray_state(self, bank: int, subarray: int, now: int) -> SubarrayState:
        b = self.raw.bank[bank]
        for sub_col, row_col, act_col in ((B_SRC_SUB, B_SRC_ROW, B_SRC_ACT), (B_DST_SUB, B_DST_ROW, B_DST_ACT)):
            if b[sub_col] == subarray:
                until = int(b[act_col] + self.raw.tim[self.raw.is_fast[subarray], T_RCD])
                state = "active" if now >= until else "activating"
                return SubarrayState(state, int(b[row_col]), until)
        return SubarrayState("precharged")

    def open_row(self, bank: int) -> Optional[int]:
        b = self.raw.bank[bank]
        if b[B_NACTIVE] == 1 and b[B_STAGE_SUB] < 0:
            return int(b[B_SRC_ROW])
        return None

    def command_counts(self) -> np.ndarray:
        """Per-bank issue counts indexed by :class:`CmdKind`."""
        return self.raw.counts.copy()


# ---------------------------------------------------------------------------
# Analytic relocation latency
# ---------------------------------------------------------------------------


def relocation_latency(
    n_blocks: int,
    source_open: bool,
    timing: TimingParams,
    *,
    src_fast: bool = False,
    dst_fast: bool = False,
    ideal: bool = False,
) -> float:
    """Time in ns to relocate ``n_blocks`` columns between subarrays of one bank.

    Closed source: ACT(src), wait restoration, n RELOCs, ACT(dst), PRE.  With
    the source row already open the first activation is skipped.  Destination
    activation and precharge use the destination subarray's speed class.
    """
    if n_blocks < 1:
        raise ValueError("n_blocks must be >= 1")
    if ideal:
        return 0.0
    from .config import derive_fast_timings

    fast = derive_fast_timings(timing)
    src = fast if src_fast else timing
    dst = fast if dst_fast else timing
    ticks = n_blocks * timing.ticks(timing.t_reloc) + timing.ticks(dst.t_rcd) + timing.ticks(dst.t_rp)
    if not source_open:
        ticks += timing.ticks(src.t_ras)
    return ticks * timing.tick_ns


def row_move_latency(
    hops: int, source_open: bool, timing: TimingParams, hop_ns: float, *, src_fast=False, dst_fast=True
) -> float:
    """Whole-row copy cost for the lisa-villa baseline: a base ACT/PRE cost plus a per-hop charge."""
    from .config import derive_fast_timings

    fast = derive_fast_timings(timing)
    src = fast if src_fast else timing
    dst = fast if dst_fast else timing
    ticks = hops * timing.ticks(hop_ns) + timing.ticks(dst.t_rcd) + timing.ticks(dst.t_rp)
    if not source_open:
        ticks += timing.ticks(src.t_ras)
    return ticks * timing.tick_ns
