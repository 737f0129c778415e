"""Per-channel memory controller: queues, FR-FCFS scheduling, cache redirect and fills.

The scheduling loop is event driven: it jumps straight to the next tick at
which something can happen (a request admission, a transfer completing, or a
command becoming legal).  Since nothing changes state between those ticks the
result matches a tick-by-tick loop.

Request lifecycle:
  admission  -> read or write queue (at most ``max_inflight`` outstanding)
  scheduling -> PRE/ACT on its behalf, then one column command at the target
                chosen by the tag store (cache row on hit, home row on miss)
  completion -> column issue + t_burst; latency = completion - admission

A cache miss that is admitted for caching queues a fill operation on the
bank right after the demand column command: the home row is still open, so
the fill is RELOC x n, ACT(cache row), PRE.  A dirty victim is written back
first with its own ACT, RELOC x n, ACT, PRE sequence.  While a bank has
pending operations, requests to it wait.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from .config import DramConfig, Mode
from .dram import (
    ACT,
    B_ACT_READY,
    B_DST_ACT,
    B_DST_SUB,
    B_LAST_COL,
    B_NACTIVE,
    B_RELOC_END,
    B_SRC_ACT,
    B_SRC_SUB,
    B_SRC_ROW,
    B_STAGE_SUB,
    C_LAST_COL,
    P_T_CCD,
    T_RAS,
    T_RCD,
    NEVER,
    P_NB,
    P_R,
    P_RPS,
    P_T_BURST,
    PRE,
    RBM,
    RD,
    RELOC,
    WR,
    C_LAST_CMD,
    Command,
    CmdKind,
    DramDevice,
    earliest_issue,
    issue_command,
    splitmix64,
    store_read,
    store_write,
    subarray_of,
)
from .errors import IllegalCommand, StoreFull, FigsimError
from .figcache import (
    FigCache,
    fts_insert,
    fts_make_room,
    fts_should_insert,
)

# engine parameter slots
E_N = 0
E_Q = 1
E_M = 2
E_HI = 3
E_LO = 4
E_CACHING = 5
E_IDEAL = 6
E_LISA = 7
E_SLOW_SUB = 8
E_BPS = 9
E_SEGS = 10
E_LOG_CAP = 11
E_SALT = 12
E_CHECK = 13  # cross-check scheduling bounds against earliest_issue
N_EPARAMS = 14

# loop state slots
L_NOW = 0
L_K = 1
L_INFLIGHT = 2
L_COMPLETED = 3
L_DRAIN = 4
L_LOGN = 5
L_STATUS = 6
L_RQN = 7
L_WQN = 8
L_XN = 9
L_OPS = 10
L_ITERS = 11
N_LSTATE = 12

# counters
C_REQUESTS = 0
C_READS = 1
C_WRITES = 2
C_RB_HITS = 3
C_RB_MISSES = 4
C_RB_CONFLICTS = 5
C_CACHE_HITS = 6
C_CACHE_MISSES = 7
C_INSERTIONS = 8
C_EVICTIONS = 9
C_DIRTY_WRITEBACKS = 10
C_FILL_RELOCS = 11
C_WB_RELOCS = 12
C_CACHE_COLUMNS = 13
C_CACHE_RB_HITS = 14
C_FLUSH_WRITEBACKS = 15
C_EXCLUDED = 16
C_FILL_OPS = 17
N_COUNTERS = 18

COUNTER_NAMES = (
    "requests",
    "reads",
    "writes",
    "row_buffer_hits",
    "row_buffer_misses",
    "row_buffer_conflicts",
    "cache_hits",
    "cache_misses",
    "insertions",
    "evictions",
    "dirty_writebacks",
    "fill_relocs",
    "writeback_relocs",
    "cache_columns",
    "cache_row_buffer_hits",
    "flush_writebacks",
    "excluded_misses",
    "fills",
)

# status codes
S_OK = 0
S_ILLEGAL = 1
S_STORE_FULL = 2
S_DEADLOCK = 3
S_FTS = 4
S_MISMATCH = 5

# operation fields
O_KIND = 0  # 0 fill, 1 writeback
O_SRC_ROW = 1
O_SRC_COL = 2
O_DST_ROW = 3
O_DST_SUB = 4
O_DST_COL = 5
O_N = 6
O_DONE = 7
O_COMMITTED = 8
O_TAG = 9
O_IDX = 10
O_AGE = 11
N_OPF = 12
OP_FILL = 0
OP_WRITEBACK = 1

WRITE_SALT = 1 << 40
LOG_FIELDS = 7  # tick, kind, bank, row, column, dst_subarray, dst_column

Engine = namedtuple(
    "Engine",
    [
        "ep",
        "ls",
        "arr",
        "isw",
        "bk",
        "row",
        "col",
        "gidx",
        "enq",
        "done",
        "flag",
        "rq",
        "wq",
        "xfer",
        "ops",
        "opn",
        "cnt",
        "log",
        "scratch",
    ],
)


def make_engine(
    config: DramConfig, arr, isw, bk, row, col, gidx, log_capacity: int = 0, check: bool = False
) -> Engine:
    n = len(arr)
    g, c, p = config.geometry, config.controller, config.policy
    mode = p.mode
    nb = g.banks_per_channel
    q = c.queue_capacity
    m = c.max_inflight
    q_eff = min(q, m)
    ep = np.zeros(N_EPARAMS, dtype=np.int64)
    ep[E_N] = n
    ep[E_Q] = q
    ep[E_M] = m
    ep[E_HI] = max(1, int(c.write_high_watermark * q_eff))
    ep[E_LO] = int(c.write_low_watermark * q_eff)
    ep[E_CACHING] = 1 if mode.caches else 0
    ep[E_IDEAL] = 1 if mode is Mode.FIG_IDEAL else 0
    ep[E_LISA] = 1 if mode is Mode.LISA_VILLA else 0
    ep[E_SLOW_SUB] = (p.cache_subarray if p.cache_subarray is not None else g.subarrays_per_bank - 1) if mode is Mode.FIG_SLOW else -1
    ep[E_BPS] = config.cache_blocks_per_segment
    ep[E_SEGS] = config.cache_segments_per_row
    ep[E_LOG_CAP] = log_capacity
    ep[E_SALT] = WRITE_SALT
    ep[E_CHECK] = 1 if check else 0
    return Engine(
        ep=ep,
        ls=np.zeros(N_LSTATE, dtype=np.int64),
        arr=np.ascontiguousarray(arr, dtype=np.int64),
        isw=np.ascontiguousarray(isw, dtype=np.int64),
        bk=np.ascontiguousarray(bk, dtype=np.int64),
        row=np.ascontiguousarray(row, dtype=np.int64),
        col=np.ascontiguousarray(col, dtype=np.int64),
        gidx=np.ascontiguousarray(gidx, dtype=np.int64),
        enq=np.full(n, -1, dtype=np.int64),
        done=np.full(n, -1, dtype=np.int64),
        flag=np.zeros(n, dtype=np.int64),
        rq=np.zeros(q, dtype=np.int64),
        wq=np.zeros(q, dtype=np.int64),
        xfer=np.zeros(m, dtype=np.int64),
        ops=np.zeros((nb, 2, N_OPF), dtype=np.int64),
        opn=np.zeros(nb, dtype=np.int64),
        cnt=np.zeros((nb, N_COUNTERS), dtype=np.int64),
        log=np.zeros((max(1, log_capacity), LOG_FIELDS), dtype=np.int64),
        scratch=np.zeros(nb, dtype=np.int64),
    )


# ---------------------------------------------------------------------------
# Kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _copy_blocks(store, bank, src_row, src_col, dst_row, dst_col, n):
    for i in range(n):
        if not store_write(store, bank, dst_row, dst_col + i, store_read(store, bank, src_row, src_col + i)):
            return False
    return True


@njit(cache=True)
def _push_op(dev, eng, b, kind, src_row, src_col, dst_row, dst_col, n, tag, idx, age):
    k = eng.opn[b]
    o = eng.ops[b, k]
    o[O_KIND] = kind
    o[O_SRC_ROW] = src_row
    o[O_SRC_COL] = src_col
    o[O_DST_ROW] = dst_row
    o[O_DST_SUB] = subarray_of(dev.params, dst_row)
    o[O_DST_COL] = dst_col
    o[O_N] = n
    o[O_DONE] = 0
    o[O_COMMITTED] = 0
    o[O_TAG] = tag
    o[O_IDX] = idx
    o[O_AGE] = age
    eng.opn[b] = k + 1
    eng.ls[L_OPS] += 1


@njit(cache=True)
def _miss_path(dev, f, eng, r, tag):
    """Count a cache miss and queue the fill (plus any dirty writeback) it triggers."""
    ep = eng.ep
    b = eng.bk[r]
    cnt = eng.cnt[b]
    cnt[C_CACHE_MISSES] += 1
    P = dev.params
    if ep[E_SLOW_SUB] >= 0 and eng.row[r] // P[P_RPS] == ep[E_SLOW_SUB]:
        cnt[C_EXCLUDED] += 1
        return S_OK
    if not fts_should_insert(f, b, tag):
        return S_OK
    bps = ep[E_BPS]
    segs = ep[E_SEGS]
    R = P[P_R]
    slot, ev_tag, ev_dirty = fts_make_room(f, b)
    crow = R + slot // segs
    ccol = (slot % segs) * bps
    hrow = eng.row[r]
    hcol = (tag % segs) * bps
    ideal = ep[E_IDEAL] == 1
    if ev_tag >= 0:
        cnt[C_EVICTIONS] += 1
        if ev_dirty != 0:
            cnt[C_DIRTY_WRITEBACKS] += 1
            erow = ev_tag // segs
            ecol = (ev_tag % segs) * bps
            if ideal:
                if not _copy_blocks(dev.store, b, crow, ccol, erow, ecol, bps):
                    return S_STORE_FULL
            else:
                _push_op(dev, eng, b, OP_WRITEBACK, crow, ccol, erow, ecol, bps, ev_tag, slot, r)
    cnt[C_FILL_OPS] += 1
    if ideal:
        if not _copy_blocks(dev.store, b, hrow, hcol, crow, ccol, bps):
            return S_STORE_FULL
        if not fts_insert(f, b, tag, slot):
            return S_FTS
        cnt[C_INSERTIONS] += 1
    else:
        _push_op(dev, eng, b, OP_FILL, hrow, hcol, crow, ccol, bps, tag, slot, r)
    return S_OK


@njit(cache=True)
def run_engine(dev, f, eng, until):
    """Advance the controller until all requests finish or time passes ``until``.

    Hot helpers are closures over local arrays: numba inlines them without
    the per-call reference counting that passing the state tuples costs.
    The timing bounds computed here only steer scheduling; every command is
    still checked by ``issue_command`` before it takes effect, and with
    ``E_CHECK`` set each bound is compared against ``earliest_issue``.
    """
    ep = eng.ep
    ls = eng.ls
    P = dev.params
    tim = dev.tim
    isf = dev.is_fast
    bst = dev.bank
    chan = dev.chan
    where = f.where
    fben = f.benefit
    fdirty = f.dirty
    fstamp = f.stamp
    fclock = f.clock
    maxben = f.fp[2]
    arr = eng.arr
    isw = eng.isw
    bk = eng.bk
    rowa = eng.row
    cola = eng.col
    gidx = eng.gidx
    enq = eng.enq
    done = eng.done
    flag = eng.flag
    rq = eng.rq
    wq = eng.wq
    xfer = eng.xfer
    ops = eng.ops
    opn = eng.opn
    cnt = eng.cnt
    log = eng.log
    scratch = eng.scratch

    n = ep[E_N]
    Q = ep[E_Q]
    M = ep[E_M]
    nb = P[P_NB]
    R = P[P_R]
    t_burst = P[P_T_BURST]
    t_ccd = P[P_T_CCD]
    salt = ep[E_SALT]
    caching = ep[E_CACHING]
    lisa = ep[E_LISA]
    bps = ep[E_BPS]
    segs = ep[E_SEGS]
    log_cap = ep[E_LOG_CAP]
    check = ep[E_CHECK]

    def target(r):
        # (row, column, tag, entry) the request would access now; entry -1 means home
        if caching == 0:
            return rowa[r], cola[r], -1, -1
        b = bk[r]
        tag = rowa[r] * segs + cola[r] // bps
        idx = where[b, tag]
        if idx < 0:
            return rowa[r], cola[r], tag, -1
        return R + idx // segs, (idx % segs) * bps + cola[r] % bps, tag, idx

    def bound(kind, b):
        # earliest legal tick for a structurally valid command
        t = chan[C_LAST_CMD] + 1
        if kind == ACT:
            if bst[b, B_STAGE_SUB] >= 0:
                return max(t, bst[b, B_RELOC_END])
            return max(t, bst[b, B_ACT_READY])
        cls = isf[bst[b, B_SRC_SUB]]
        if kind == PRE:
            t = max(t, bst[b, B_SRC_ACT] + tim[cls, T_RAS])
            if bst[b, B_DST_SUB] >= 0:
                t = max(t, bst[b, B_DST_ACT] + tim[isf[bst[b, B_DST_SUB]], T_RCD])
            return t
        if kind == RD or kind == WR:
            t = max(t, bst[b, B_SRC_ACT] + tim[cls, T_RCD])
            return max(t, chan[C_LAST_COL] + t_ccd)
        t = max(t, bst[b, B_SRC_ACT] + tim[cls, T_RAS])
        t = max(t, bst[b, B_LAST_COL] + t_ccd)
        return max(t, bst[b, B_RELOC_END])

    def op_cmd(b):
        # next command of the bank's head operation: (kind, row, col, dst_sub, dst_col)
        if ops[b, 0, O_COMMITTED] == 1:
            return PRE, -1, -1, -1, -1
        if ops[b, 0, O_DONE] == 0:
            if bst[b, B_NACTIVE] > 0 and (bst[b, B_SRC_ROW] != ops[b, 0, O_SRC_ROW] or bst[b, B_STAGE_SUB] >= 0):
                return PRE, -1, -1, -1, -1
            if bst[b, B_NACTIVE] == 0:
                return ACT, ops[b, 0, O_SRC_ROW], -1, -1, -1
        d = ops[b, 0, O_DONE]
        if d < ops[b, 0, O_N]:
            if lisa == 1:
                return RBM, -1, -1, ops[b, 0, O_DST_SUB], -1
            return RELOC, -1, ops[b, 0, O_SRC_COL] + d, ops[b, 0, O_DST_SUB], ops[b, 0, O_DST_COL] + d
        return ACT, ops[b, 0, O_DST_ROW], -1, -1, -1

    while ls[L_COMPLETED] < n or ls[L_OPS] > 0:
        now = ls[L_NOW]
        if now > until:
            break
        ls[L_ITERS] += 1
        # retire finished transfers
        j = 0
        while j < ls[L_XN]:
            if xfer[j] <= now:
                xfer[j] = xfer[ls[L_XN] - 1]
                ls[L_XN] -= 1
                ls[L_INFLIGHT] -= 1
                ls[L_COMPLETED] += 1
            else:
                j += 1
        # admit arrivals in trace order
        while ls[L_K] < n and arr[ls[L_K]] <= now and ls[L_INFLIGHT] < M:
            k = ls[L_K]
            if isw[k] != 0:
                if ls[L_WQN] >= Q:
                    break
                wq[ls[L_WQN]] = k
                ls[L_WQN] += 1
            else:
                if ls[L_RQN] >= Q:
                    break
                rq[ls[L_RQN]] = k
                ls[L_RQN] += 1
            enq[k] = now
            ls[L_INFLIGHT] += 1
            ls[L_K] = k + 1
        # write drain mode
        if ls[L_DRAIN] == 0:
            if ls[L_WQN] >= ep[E_HI] or (ls[L_RQN] == 0 and ls[L_WQN] > 0):
                ls[L_DRAIN] = 1
        else:
            if ls[L_WQN] <= ep[E_LO] and ls[L_RQN] > 0:
                ls[L_DRAIN] = 0
        if ls[L_DRAIN] == 1:
            queue = wq
            qn = ls[L_WQN]
        else:
            queue = rq
            qn = ls[L_RQN]

        # FR-FCFS: issuable row-hit column commands first, then the oldest issuable command
        best_src = -1  # request id, or -(bank + 2) for a bank operation
        best_col = False
        best_age = NEVER
        b_bank = 0
        b_kind = 0
        b_row = 0
        b_col = 0
        b_dsub = 0
        b_dcol = 0
        b_tag = -1
        b_idx = -1
        next_t = NEVER

        if ls[L_OPS] > 0:
            for b in range(nb):
                if opn[b] > 0:
                    kind, row, col, dsub, dcol = op_cmd(b)
                    e = bound(kind, b)
                    if check == 1 and e != earliest_issue(dev, kind, b, row, col, dsub, dcol):
                        ls[L_STATUS] = S_MISMATCH
                        return S_MISMATCH
                    age = ops[b, 0, O_AGE]
                    if e <= now:
                        if age < best_age:
                            best_src = -(b + 2)
                            best_age = age
                            b_bank = b
                            b_kind = kind
                            b_row = row
                            b_col = col
                            b_dsub = dsub
                            b_dcol = dcol
                    elif e < next_t:
                        next_t = e

        # banks whose open row a queued request would hit are not precharged
        for b in range(nb):
            scratch[b] = 0
        for qi in range(qn):
            r = queue[qi]
            b = bk[r]
            if bst[b, B_NACTIVE] == 1 and bst[b, B_STAGE_SUB] < 0 and opn[b] == 0:
                trow, tcol, tag, idx = target(r)
                if trow == bst[b, B_SRC_ROW]:
                    scratch[b] = 1

        for qi in range(qn):
            r = queue[qi]
            b = bk[r]
            if opn[b] > 0:
                continue
            trow, tcol, tag, idx = target(r)
            iscol = False
            if bst[b, B_NACTIVE] == 1 and bst[b, B_STAGE_SUB] < 0 and bst[b, B_SRC_ROW] == trow:
                kind = WR if isw[r] != 0 else RD
                iscol = True
            elif bst[b, B_NACTIVE] > 0:
                if scratch[b] == 1:
                    continue
                kind = PRE
            else:
                kind = ACT
            e = bound(kind, b)
            if check == 1 and e != earliest_issue(dev, kind, b, trow, tcol, -1, -1):
                ls[L_STATUS] = S_MISMATCH
                return S_MISMATCH
            if e <= now:
                if iscol:
                    take = (not best_col) or r < best_age
                else:
                    take = (not best_col) and r < best_age
                if take:
                    best_src = r
                    best_col = iscol
                    best_age = r
                    b_bank = b
                    b_kind = kind
                    b_row = trow
                    b_col = tcol
                    b_dsub = -1
                    b_dcol = -1
                    b_tag = tag
                    b_idx = idx
            elif e < next_t:
                next_t = e

        if best_src == -1:
            if ls[L_COMPLETED] >= n and ls[L_OPS] == 0:
                break
            t = next_t
            k = ls[L_K]
            if k < n and ls[L_INFLIGHT] < M:
                room = ls[L_WQN] < Q if isw[k] != 0 else ls[L_RQN] < Q
                if room and arr[k] < t:
                    t = arr[k]
            for j in range(ls[L_XN]):
                if xfer[j] < t:
                    t = xfer[j]
            if t >= NEVER:
                ls[L_STATUS] = S_DEADLOCK
                return S_DEADLOCK
            ls[L_NOW] = t
            continue

        b = b_bank
        wtok = np.int64(0)
        if best_src >= 0 and b_kind == WR:
            wtok = splitmix64(salt + gidx[best_src])
        status, tok = issue_command(dev, b_kind, b, b_row, b_col, b_dsub, b_dcol, now, wtok)
        if status != 0:
            ls[L_STATUS] = status
            return status
        nlog = ls[L_LOGN]
        if nlog < log_cap:
            log[nlog, 0] = now
            log[nlog, 1] = b_kind
            log[nlog, 2] = b
            log[nlog, 3] = b_row
            log[nlog, 4] = b_col
            log[nlog, 5] = b_dsub
            log[nlog, 6] = b_dcol
        ls[L_LOGN] = nlog + 1

        if best_src < 0:
            if b_kind == PRE:
                if ops[b, 0, O_COMMITTED] == 1:
                    # operation finished; the second one (if any) moves up
                    if opn[b] == 2:
                        for jj in range(N_OPF):
                            ops[b, 0, jj] = ops[b, 1, jj]
                    opn[b] -= 1
                    ls[L_OPS] -= 1
            elif b_kind == ACT:
                if ops[b, 0, O_DONE] == ops[b, 0, O_N]:
                    ops[b, 0, O_COMMITTED] = 1
                    if ops[b, 0, O_KIND] == OP_FILL:
                        if not fts_insert(f, b, ops[b, 0, O_TAG], ops[b, 0, O_IDX]):
                            ls[L_STATUS] = S_FTS
                            return S_FTS
                        cnt[b, C_INSERTIONS] += 1
            else:
                if b_kind == RBM:
                    ops[b, 0, O_DONE] = ops[b, 0, O_N]
                else:
                    ops[b, 0, O_DONE] += 1
                if ops[b, 0, O_KIND] == OP_FILL:
                    cnt[b, C_FILL_RELOCS] += 1
                else:
                    cnt[b, C_WB_RELOCS] += 1
            continue

        r = best_src
        if b_kind == PRE:
            flag[r] |= 2
            continue
        if b_kind == ACT:
            flag[r] |= 1
            continue
        # column command: the request completes after its burst
        cnt[b, C_REQUESTS] += 1
        if b_kind == WR:
            cnt[b, C_WRITES] += 1
        else:
            cnt[b, C_READS] += 1
        fl = flag[r]
        if fl & 2:
            cnt[b, C_RB_CONFLICTS] += 1
        elif fl & 1:
            cnt[b, C_RB_MISSES] += 1
        else:
            cnt[b, C_RB_HITS] += 1
        done[r] = now + t_burst
        xfer[ls[L_XN]] = now + t_burst
        ls[L_XN] += 1
        if b_kind == WR:
            for qi in range(ls[L_WQN]):
                if wq[qi] == r:
                    wq[qi] = wq[ls[L_WQN] - 1]
                    ls[L_WQN] -= 1
                    break
        else:
            for qi in range(ls[L_RQN]):
                if rq[qi] == r:
                    rq[qi] = rq[ls[L_RQN] - 1]
                    ls[L_RQN] -= 1
                    break
        if caching == 1:
            if b_idx >= 0:
                # tag store hit: same update as fts_lookup
                cnt[b, C_CACHE_HITS] += 1
                cnt[b, C_CACHE_COLUMNS] += 1
                if fl == 0:
                    cnt[b, C_CACHE_RB_HITS] += 1
                if fben[b, b_idx] < maxben:
                    fben[b, b_idx] += 1
                if b_kind == WR:
                    fdirty[b, b_idx] = 1
                fclock[b] += 1
                fstamp[b, b_idx] = fclock[b]
            else:
                st = _miss_path(dev, f, eng, r, b_tag)
                if st != S_OK:
                    ls[L_STATUS] = st
                    return st
    return S_OK


@njit(cache=True)
def flush_dirty(dev, f, eng):
    """Write every dirty cached segment back to its home row (functional, no commands)."""
    if eng.ep[E_CACHING] == 0:
        return True
    bps = eng.ep[E_BPS]
    segs = eng.ep[E_SEGS]
    R = dev.params[P_R]
    nb = dev.params[P_NB]
    for b in range(nb):
        for idx in range(f.fp[0]):
            tag = f.tag[b, idx]
            if tag >= 0 and f.dirty[b, idx] != 0:
                crow = R + idx // segs
                ccol = (idx % segs) * bps
                if not _copy_blocks(dev.store, b, crow, ccol, tag // segs, (tag % segs) * bps, bps):
                    return False
                f.dirty[b, idx] = 0
                eng.cnt[b, C_FLUSH_WRITEBACKS] += 1
    return True


# ---------------------------------------------------------------------------
# Python-facing controller
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Target:
    """Physical location a request is served from."""

    bank: int
    row: int  # bank-local row id (cache rows follow the home rows)
    column: int
    cached: bool
    cache_row: Optional[int] = None
    slot: Optional[int] = None
    offset: Optional[int] = None


@dataclass(frozen=True)
class IssuedCommand:
    tick: int
    command: Command


class MemoryController:
    """One channel: DRAM device, tag store and scheduler state."""

    def __init__(
        self, config: DramConfig, arr, isw, bank, row, col, gidx=None, *, log_capacity=0, store_rows=None, check=False
    ):
        self.config = config
        n = len(arr)
        if gidx is None:
            gidx = np.arange(n, dtype=np.int64)
        if store_rows is None:
            store_rows = _store_rows(config, np.asarray(isw), np.asarray(bank), np.asarray(row))
        self.device = DramDevice(config, store_rows)
        self.cache = FigCache(config)
        self.engine = make_engine(config, arr, isw, bank, row, col, gidx, log_capacity, check)
        self.flushed = False

    @property
    def now(self) -> int:
        return int(self.engine.ls[L_NOW])

    def _check(self, status: int) -> None:
        if status == S_OK:
            return
        if status == S_ILLEGAL:
            raise IllegalCommand(f"scheduler produced an illegal command at tick {self.now}")
        if status == S_STORE_FULL:
            raise StoreFull("block store page pool exhausted")
        if status == S_MISMATCH:
            raise FigsimError(f"scheduler timing bound disagrees with the device at tick {self.now}")
        if status == S_DEADLOCK:
            raise FigsimError(f"scheduler stalled at tick {self.now} with work pending")
        raise FigsimError(f"tag store update rejected at tick {self.now}")

    def step(self, until: int) -> None:
        """Process every event at or before tick ``until``."""
        self._check(int(run_engine(self.device.raw, self.cache.fts, self.engine, np.int64(until))))

    def run(self) -> None:
        self._check(int(run_engine(self.device.raw, self.cache.fts, self.engine, NEVER)))

    def flush(self) -> None:
        if not self.flushed:
            if not flush_dirty(self.device.raw, self.cache.fts, self.engine):
                raise StoreFull("block store page pool exhausted")
            self.flushed = True

    @property
    def finished(self) -> bool:
        ls = self.engine.ls
        return ls[L_COMPLETED] >= self.engine.ep[E_N] and ls[L_OPS] == 0

    def redirect(self, bank: int, row: int, column: int) -> Target:
        """Where an access to (bank, row, column) would be served right now; no state change."""
        cfg = self.config
        if not cfg.mode.caches:
            return Target(bank, row, column, False)
        bps = cfg.cache_blocks_per_segment
        segs = cfg.cache_segments_per_row
        tag = row * segs + column // bps
        idx = int(self.cache.fts.where[bank, tag])
        if idx < 0:
            return Target(bank, row, column, False)
        crow, slot = divmod(idx, segs)
        off = column % bps
        return Target(bank, cfg.geometry.rows_per_bank + crow, slot * bps + off, True, crow, slot, off)

    def command_log(self) -> list[IssuedCommand]:
        n = min(int(self.engine.ls[L_LOGN]), int(self.engine.ep[E_LOG_CAP]))
        out = []
        for t, kind, bank, row, col, dsub, dcol in self.engine.log[:n].tolist():
            out.append(IssuedCommand(t, Command(CmdKind(kind), bank, row, col, dsub, dcol)))
        return out

    def log_array(self) -> np.ndarray:
        n = min(int(self.engine.ls[L_LOGN]), int(self.engine.ep[E_LOG_CAP]))
        return self.engine.log[:n].copy()

    def latencies_ticks(self) -> np.ndarray:
        e = self.engine
        return e.done - e.enq

    def measure(self, request: int) -> float:
        """Latency of one completed request in ns."""
        e = self.engine
        if e.done[request] < 0:
            raise ValueError(f"request {request} has not completed")
        return float((e.done[request] - e.enq[request]) * self.config.timing.tick_ns)

    def counters(self) -> np.ndarray:
        return self.engine.cnt.copy()

    def end_tick(self) -> int:
        e = self.engine
        last = int(e.done.max()) if len(e.done) else 0
        return max(last, int(self.device.raw.chan[C_LAST_CMD]), 0)


def _store_rows(config: DramConfig, isw, bank, row) -> int:
    """Page pool size: every home row the trace writes plus every cache row."""
    writes = np.asarray(isw) != 0
    keys = np.asarray(bank, dtype=np.int64)[writes] * (1 << 32) + np.asarray(row, dtype=np.int64)[writes]
    distinct = len(np.unique(keys))
    cache = config.geometry.banks_per_channel * config.cache_rows if config.mode.caches else 0
    return distinct + cache + 1
