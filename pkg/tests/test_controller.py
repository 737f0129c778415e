import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from figsim.config import DramGeometry, Mode, TimingParams, load_config
from figsim.controller import MemoryController, WRITE_SALT
from figsim.dram import CmdKind, encode_address, relocation_latency, store_mismatches_home
from figsim.sim import simulate, split_channels
from figsim.stats import Counters
from figsim.workload import SyntheticSpec, Trace, generate_synthetic
from oracles import FlatMemory, TimingValidator, mix64

G = DramGeometry()
TICK = TimingParams().tick_ns
ACT, RD, WR, PRE, RELOC, RBM = (int(CmdKind[k]) for k in ("ACT", "RD", "WR", "PRE", "RELOC", "RBM"))


def addr(bank, row, col):
    return encode_address(G, bank_group=bank // 4, bank=bank % 4, row_in_bank=row, block_column=col)


def trace_of(records):
    """records: (cycle, 'R'|'W', bank, row, column)"""
    return Trace(
        np.array([r[0] for r in records], dtype=np.int64),
        np.array([r[1] == "W" for r in records]),
        np.array([addr(*r[2:]) for r in records], dtype=np.int64),
    )


def run(mode, records, check=True, **over):
    cfg = load_config(None, {"mode": mode, **over})
    res = simulate(cfg, trace_of(records), log_capacity=100_000, check=check)
    mc = res.channels[0].controller
    return res, mc


def kinds(mc):
    return [(c.tick, int(c.command.kind), c.command.row) for c in mc.command_log()]


def test_back_to_back_reads_to_open_row():
    # the second read arrives when the first one's column command issues (tick 55 = cycle 11)
    res, mc = run("base", [(0, "R", 0, 10, 0), (11, "R", 0, 10, 1)])
    lat = mc.latencies_ticks()
    assert lat[0] == 55 + 20
    assert lat[1] == (20 + 20)  # t_ccd + t_burst
    assert mc.measure(1) == 10.0


def test_fr_fcfs_row_hit_first_and_pre_deferred():
    recs = [(0, "R", 0, 10, 0), (12, "R", 0, 20, 0), (12, "R", 0, 10, 5)]
    _, mc = run("base", recs)
    log = kinds(mc)
    assert [k for _, k, _ in log] == [ACT, RD, RD, PRE, ACT, RD]
    assert log[2][2] == 10 and log[4][2] == 20
    assert log[3][0] == 140  # the precharge waits for t_ras, not for the younger hit


def test_oldest_first_among_non_hits():
    recs = [(0, "R", 3, 7, 0), (0, "R", 1, 9, 0)]
    _, mc = run("base", recs)
    log = mc.command_log()
    assert (log[0].command.kind, log[0].command.bank) == (CmdKind.ACT, 3)
    assert (log[1].command.kind, log[1].command.bank) == (CmdKind.ACT, 1)


def test_reads_served_before_writes_below_watermark():
    recs = [(0, "W", 0, 1, 0), (0, "W", 1, 1, 0), (0, "R", 2, 1, 0)]
    _, mc = run("base", recs)
    cols = [c for c in mc.command_log() if c.command.kind in (CmdKind.RD, CmdKind.WR)]
    assert cols[0].command.kind == CmdKind.RD
    assert [c.command.kind for c in cols[1:]] == [CmdKind.WR, CmdKind.WR]


def test_write_latency_measured_to_data_commit():
    _, mc = run("base", [(0, "W", 0, 3, 4)])
    wr = [c for c in mc.command_log() if c.command.kind == CmdKind.WR][0]
    assert mc.latencies_ticks()[0] == wr.tick + 20


def test_fill_follows_demand_on_open_row():
    recs = [(0, "R", 0, 700, 35)]
    base, _ = run("base", recs)
    res, mc = run("figcache-fast", recs)
    assert res.latencies[0] == base.latencies[0]
    log = mc.command_log()
    seq = [int(c.command.kind) for c in log]
    assert seq == [ACT, RD] + [RELOC] * 16 + [ACT, PRE]
    relocs = [c for c in log if c.command.kind == CmdKind.RELOC]
    assert [c.command.column for c in relocs] == list(range(32, 48))
    assert [c.command.dst_column for c in relocs] == list(range(16))
    first_reloc = relocs[0].tick
    ready = mc.device.next_ready(0)["ACT"]
    t = TimingParams()
    assert (ready - first_reloc) * TICK == relocation_latency(16, True, t, dst_fast=True)
    c = Counters.from_arrays(res.counters(), res.command_counts())
    assert (c.cache_misses, c.insertions, c.fill_relocs, c.evictions) == (1, 1, 16, 0)


def _small_cache():
    return {"cache_rows_per_bank": 1, "fast_subarrays": 1, "fast_subarray_rows": 1}


def test_clean_eviction_has_no_writeback():
    recs = [(i * 200, "R", 0, 100 + i, 0) for i in range(9)]
    res, mc = run("figcache-fast", recs, **_small_cache())
    c = Counters.from_arrays(res.counters(), res.command_counts())
    assert c.evictions == 1 and c.dirty_writebacks == 0 and c.writeback_relocs == 0
    assert c.relocs == 9 * 16


def test_dirty_eviction_writes_back_before_fill():
    recs = [(i * 200, "R", 0, 100 + i, 0) for i in range(8)]
    recs += [(2000 + i * 200, "W", 0, 100 + i, 1) for i in range(8)]
    recs += [(5000, "R", 0, 300, 0)]
    res, mc = run("figcache-fast", recs, **_small_cache())
    c = Counters.from_arrays(res.counters(), res.command_counts())
    assert c.evictions == 1 and c.dirty_writebacks == 1 and c.writeback_relocs == 16
    log = [c for c in mc.command_log() if c.tick >= 5000 * 5]
    R = G.rows_per_bank
    seq = [(int(c.command.kind), c.command.row if c.command.kind != CmdKind.PRE else -1) for c in log]
    # the cache row is still open from the last write hit
    assert seq[0] == (PRE, -1) and log[1].tick - log[0].tick == 35  # fast t_rp
    # demand read of row 300, then writeback of slot 0 (home row 100), then the fill
    assert seq[1:3] == [(ACT, 300), (RD, 300)]
    assert seq[3] == (PRE, -1)
    assert seq[4] == (ACT, R)
    assert [k for k, _ in seq[5:21]] == [RELOC] * 16
    assert seq[21] == (ACT, 100)
    assert seq[22] == (PRE, -1)
    assert seq[23] == (ACT, 300)
    assert [k for k, _ in seq[24:40]] == [RELOC] * 16
    assert seq[40:] == [(ACT, R), (PRE, -1)]
    # the written token reached home
    wtok = mix64(WRITE_SALT + 8)
    assert mc.device.store.read(0, 100, 1) == wtok


def test_request_during_fill_hits_after_commit():
    recs = [(0, "R", 0, 700, 35), (12, "R", 0, 700, 36)]
    res, mc = run("figcache-fast", recs)
    c = Counters.from_arrays(res.counters(), res.command_counts())
    assert (c.cache_misses, c.cache_hits) == (1, 1)
    rds = [x for x in mc.command_log() if x.command.kind == CmdKind.RD]
    assert rds[1].command.row == G.rows_per_bank and rds[1].command.column == 4


def test_cached_read_uses_fast_activation():
    # X, Y (same bank, other row), then X again long after
    recs = [(0, "R", 0, 1000, 0), (1000, "R", 0, 2000, 0), (2000, "R", 0, 1000, 1)]
    base, _ = run("base", recs)
    fast, _ = run("figcache-fast", recs)
    assert base.latencies[2] == 55 + 55 + 20  # t_rp + t_rcd + t_burst
    assert fast.latencies[2] == 30 + 20  # fast t_rcd + t_burst
    # zero-cost fills issue no commands, so the home row is still open and precharges at regular t_rp
    ideal, _ = run("figcache-ideal", recs)
    assert ideal.latencies[2] == 55 + 30 + 20


def test_redirect_and_mode_gating():
    recs = [(0, "R", 0, 700, 35)]
    _, mc = run("figcache-fast", recs)
    t = mc.redirect(0, 700, 37)
    assert t.cached and (t.row, t.column, t.slot, t.offset) == (G.rows_per_bank, 5, 0, 5)
    assert not mc.redirect(0, 701, 37).cached
    _, base = run("base", recs)
    assert base.redirect(0, 700, 37).row == 700


def test_figslow_skips_segments_of_cache_subarray():
    cache_sub_row = 63 * 512 + 4
    res, mc = run("figcache-slow", [(0, "R", 0, cache_sub_row, 0), (100, "R", 0, 5, 0)])
    c = Counters.from_arrays(res.counters(), res.command_counts())
    assert c.excluded_misses == 1 and c.insertions == 1
    assert not mc.redirect(0, cache_sub_row, 0).cached
    assert mc.redirect(0, 5, 0).cached


def test_lisa_moves_whole_rows():
    res, mc = run("lisa-villa", [(0, "R", 0, 700, 35), (500, "R", 0, 700, 90)])
    c = Counters.from_arrays(res.counters(), res.command_counts())
    assert c.row_moves == 1 and c.relocs == 0 and c.cache_hits == 1


def test_base_store_holds_exactly_the_writes():
    spec = SyntheticSpec(total_requests=5000, hot_segments=4, footprint_bytes=1 << 22, write_ratio=0.5, seed=3)
    trace = generate_synthetic(spec, G)
    cfg = load_config(None, {"mode": "base"})
    res = simulate(cfg, trace, check=True)
    store = res.channels[0].controller.device.store
    oracle = FlatMemory(G.rows_per_bank, G.blocks_per_row)
    _, bank, row, col = split_channels(cfg, trace)[0][2:5] and trace.decode(G)
    for i in np.nonzero(trace.is_write)[0].tolist():
        oracle.put(int(bank[i]), int(row[i]), int(col[i]), mix64(WRITE_SALT + i))
    rows = {(b, r) for (b, r, _) in oracle.blocks}
    assert set(store.written_rows()) == rows
    for b, r in rows:
        for c in range(G.blocks_per_row):
            assert store.read(b, r, c) == oracle.get(b, r, c)


def test_step_matches_run():
    trace = generate_synthetic(SyntheticSpec(total_requests=3000, seed=8), G)
    cfg = load_config(None, {"mode": "figcache-fast"})
    (arr, isw, bank, row, col, gidx), = split_channels(cfg, trace)
    a = MemoryController(cfg, arr, isw, bank, row, col, gidx)
    a.run()
    b = MemoryController(cfg, arr, isw, bank, row, col, gidx)
    t = 0
    while not b.finished:
        t += 997
        b.step(t)
    assert np.array_equal(a.latencies_ticks(), b.latencies_ticks())
    assert np.array_equal(a.counters(), b.counters())


def _replay_log(cfg, log):
    val = TimingValidator(cfg)
    for t, kind, bank, row, col, dsub, dcol in log.tolist():
        cmd = (kind, bank, row, col, dsub, dcol)
        reason = val.why_not(cmd, t)
        assert reason is None, f"{cmd} at {t}: {reason}"
        val.apply(cmd, t)
    return len(log)


@pytest.mark.parametrize("mode", [m.value for m in Mode])
def test_scheduler_commands_pass_validator(mode):
    trace = generate_synthetic(SyntheticSpec(total_requests=4000, footprint_bytes=1 << 24, seed=4), G)
    cfg = load_config(None, {"mode": mode})
    res = simulate(cfg, trace, log_capacity=1_000_000, check=True)
    n = _replay_log(cfg, res.channels[0].controller.log_array())
    assert n == int(res.command_counts().sum())


def _integrity_case(seed, footprint, write_ratio, n):
    spec = SyntheticSpec(
        total_requests=n, hot_segments=8, hot_fraction=0.5, footprint_bytes=footprint, write_ratio=write_ratio, seed=seed
    )
    return generate_synthetic(spec, G)


@settings(max_examples=12)
@given(
    seed=st.integers(0, 10_000),
    footprint=st.sampled_from([1 << 20, 1 << 23, 1 << 26]),
    write_ratio=st.sampled_from([0.3, 0.8]),
    mode=st.sampled_from(["figcache-fast", "figcache-slow", "lisa-villa", "figcache-ideal"]),
    small=st.booleans(),
)
def test_integrity_against_base(seed, footprint, write_ratio, mode, small):
    trace = _integrity_case(seed, footprint, write_ratio, 3000)
    over = {"cache_rows_per_bank": 2, "fast_subarrays": 1, "fast_subarray_rows": 2} if small else {}
    if small and mode == "figcache-slow":
        over = {"cache_rows_per_bank": 2}
    base = simulate(load_config(None, {"mode": "base"}), trace)
    other = simulate(load_config(None, {"mode": mode, **over}), trace, check=True)
    a = base.channels[0].controller.device.store
    b = other.channels[0].controller.device.store
    assert store_mismatches_home(a.raw, b.raw, G.rows_per_bank) == 0
    c = Counters.from_arrays(other.counters(), other.command_counts())
    assert c.requests == len(trace)
    assert np.all(other.latencies > 0)


def test_integrity_detects_lost_writeback():
    """Dropping the end-of-run flush must show up as a mismatch when dirty data is cached."""
    trace = _integrity_case(1, 1 << 20, 0.8, 2000)
    base = simulate(load_config(None, {"mode": "base"}), trace)
    fast = simulate(load_config(None, {"mode": "figcache-fast"}), trace, flush=False)
    a = base.channels[0].controller.device.store
    b = fast.channels[0].controller.device.store
    assert store_mismatches_home(a.raw, b.raw, G.rows_per_bank) > 0


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ideal_not_slower_than_fast(seed):
    trace = generate_synthetic(SyntheticSpec(total_requests=20_000, seed=seed), G)
    fast = simulate(load_config(None, {"mode": "figcache-fast"}), trace)
    ideal = simulate(load_config(None, {"mode": "figcache-ideal"}), trace)
    assert ideal.latencies.mean() <= fast.latencies.mean()


def test_conservation_and_counters():
    trace = generate_synthetic(SyntheticSpec(total_requests=10_000, seed=6), G)
    for mode in Mode:
        res = simulate(load_config(None, {"mode": mode.value}), trace)
        c = Counters.from_arrays(res.counters(), res.command_counts())
        assert c.requests == c.reads + c.writes == len(trace)
        assert c.demand_columns == c.requests
        if mode.caches:
            assert c.cache_hits + c.cache_misses == c.requests
        else:
            assert c.cache_hits == c.cache_misses == c.insertions == 0
        assert c.column_reads + c.column_writes == c.requests
        assert (res.latencies > 0).all()


def test_multi_channel_split():
    g2 = {"channels": 2}
    cfg = load_config(None, {"mode": "figcache-fast", **g2})
    trace = generate_synthetic(SyntheticSpec(total_requests=5000, seed=1), cfg.geometry)
    res = simulate(cfg, trace, check=True)
    assert len(res.channels) == 2
    assert sum(len(ch.latencies) for ch in res.channels) == 5000
    assert all(len(ch.latencies) > 1000 for ch in res.channels)
