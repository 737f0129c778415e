import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from figsim.config import DramGeometry, Mode, TimingParams, load_config
from figsim.dram import (
    CmdKind,
    Command,
    DramDevice,
    decode_address,
    decode_array,
    encode_address,
    lisa_hops,
    reloc_operand_bits,
    relocation_latency,
    row_move_latency,
)
from figsim.errors import IllegalCommand, OutOfRange
from fuzz import CommandFuzzer
from oracles import FlatMemory, Layout, bit_slice_decode, hop_distances

geometries = st.builds(
    DramGeometry,
    channels=st.sampled_from([1, 2, 4]),
    ranks_per_channel=st.sampled_from([1, 2]),
    bank_groups=st.sampled_from([2, 4]),
    banks_per_group=st.sampled_from([2, 4]),
    subarrays_per_bank=st.sampled_from([8, 64]),
    rows_per_subarray=st.sampled_from([64, 512]),
    row_bytes=st.sampled_from([2048, 8192]),
)


@given(geometries, st.data())
def test_decode_matches_bit_slicing(g, data):
    blk = data.draw(st.integers(0, g.total_bytes // g.block_bytes - 1))
    addr = blk * g.block_bytes
    d = decode_address(addr, g)
    ref = bit_slice_decode(addr, g)
    assert {k: getattr(d, k) for k in ref} == ref
    assert encode_address(g, **ref) == addr
    ch, bank, row, col = decode_array(np.array([addr]), g)
    assert (int(ch[0]), int(bank[0]), int(row[0]), int(col[0])) == (d.channel, d.bank_index, d.row_in_bank, d.block_column)


def test_decode_rejects_bad_addresses():
    g = DramGeometry()
    with pytest.raises(OutOfRange):
        decode_address(g.total_bytes, g)
    with pytest.raises(OutOfRange):
        decode_address(0x41, g)
    d = decode_address(encode_address(g, row_in_bank=1000, block_column=37), g)
    assert (d.subarray, d.row_in_subarray, d.segment_index) == (1, 488, 2)


def _device(mode="figcache-fast", **kw):
    return DramDevice(load_config(None, {"mode": mode, **kw}), store_rows=64)


def test_rd_exactly_at_t_rcd():
    dev = _device("base")
    rcd = dev.ticks(dev.timing.t_rcd)
    dev.issue(Command.act(0, 10), 0)
    assert not dev.can_issue(Command.rd(0, 10, 0), rcd - 1)
    assert dev.can_issue(Command.rd(0, 10, 0), rcd)
    assert not dev.can_issue(Command.rd(0, 11, 0), rcd)


def test_pre_one_tick_before_t_ras():
    dev = _device("base")
    ras = dev.ticks(dev.timing.t_ras)
    dev.issue(Command.act(0, 10), 0)
    assert not dev.can_issue(Command.pre(0), ras - 1)
    assert dev.can_issue(Command.pre(0), ras)
    with pytest.raises(IllegalCommand):
        dev.issue(Command.pre(0), ras - 1)


def _relocate(dev, bank, src_row, pairs, dst_row, start=0):
    """ACT src, RELOC per (src_col, dst_col), ACT dst, PRE at earliest ticks; returns the precharge-ready tick."""
    dst_sub = dev.subarray_of(dst_row)
    cmds = [Command.act(bank, src_row)]
    cmds += [Command.reloc(bank, s, dst_sub, d) for s, d in pairs]
    cmds += [Command.act(bank, dst_row), Command.pre(bank)]
    t = start
    for cmd in cmds:
        e = dev.earliest(cmd)
        assert e is not None, cmd
        t = max(t, e)
        assert dev.can_issue(cmd, t)
        dev.issue(cmd, t)
    return dev.next_ready(bank, src_row)["ACT"]


def test_single_block_relocation_takes_63_5_ns():
    dev = _device("base")
    ready = _relocate(dev, 0, 5, [(3, 1)], 600)
    assert ready * dev.timing.tick_ns == 63.5
    assert relocation_latency(1, False, TimingParams()) == 63.5


def test_relocation_latency_examples():
    t = TimingParams()
    assert relocation_latency(16, True, t) == 43.5
    assert relocation_latency(16, False, t, ideal=True) == 0.0
    # destination speed class sets the activation and precharge part
    assert relocation_latency(16, True, t, dst_fast=True) == 16 + 7.5 + 8.75
    with pytest.raises(ValueError):
        relocation_latency(0, True, t)


@given(n=st.integers(1, 128), dst_fast=st.booleans(), src_fast=st.booleans())
def test_relocation_latency_matches_device(n, dst_fast, src_fast):
    dev = _device("figcache-fast")
    R = dev.config.geometry.rows_per_bank
    src_row = R + 40 if src_fast else 700
    dst_row = R + 3 if dst_fast else 1500
    if src_fast and dst_fast:
        dst_row = R  # other fast subarray
    pairs = [(c, c) for c in range(n)]
    ready = _relocate(dev, 2, src_row, pairs, dst_row)
    want = relocation_latency(n, False, dev.timing, src_fast=src_fast, dst_fast=dst_fast)
    assert ready * dev.timing.tick_ns == pytest.approx(want, abs=1e-9)


def test_reloc_copies_one_column():
    dev = _device("base")
    mem = FlatMemory(dev.config.geometry.rows_per_bank, 128)
    _relocate(dev, 0, 5, [(3, 1)], 600)
    for cmd in ((0, 0, 5, -1, -1, -1), (4, 0, -1, 3, 1, 1), (0, 0, 600, -1, -1, -1)):
        mem.apply(cmd)
    s = dev.store
    assert s.read(0, 600, 1) == s.initial(0, 5, 3) == mem.get(0, 600, 1)
    for c in [0] + list(range(2, 128)):
        assert s.read(0, 600, c) == s.initial(0, 600, c) == mem.get(0, 600, c)
    assert s.read(0, 5, 3) == s.initial(0, 5, 3)


def test_aligned_reloc():
    dev = _device("base")
    _relocate(dev, 1, 5, [(7, 7)], 2000)
    assert dev.store.read(1, 2000, 7) == dev.store.initial(1, 5, 7)
    assert dev.store.read(1, 2000, 6) == dev.store.initial(1, 2000, 6)


def test_sixteen_relocs_change_sixteen_blocks():
    dev = _device("figcache-fast")
    R = dev.config.geometry.rows_per_bank
    mem = FlatMemory(R + dev.config.cache_rows, 128)
    pairs = [(32 + i, 48 + i) for i in range(16)]
    _relocate(dev, 3, 900, pairs, R + 5)
    mem.apply((0, 3, 900, -1, -1, -1))
    for s, d in pairs:
        mem.apply((4, 3, -1, s, 0, d))
    mem.apply((0, 3, R + 5, -1, -1, -1))
    before = [dev.store.initial(3, R + 5, c) for c in range(128)]
    after = [dev.store.read(3, R + 5, c) for c in range(128)]
    changed = {c for c in range(128) if before[c] != after[c]}
    assert changed == set(range(48, 64))
    assert sum(1 for c in range(128) if before[c] == after[c]) == 112
    assert after == [mem.get(3, R + 5, c) for c in range(128)]


def test_reloc_within_subarray_is_illegal():
    dev = _device("base")
    dev.issue(Command.act(0, 5), 0)
    cmd = Command.reloc(0, 1, 0, 1)
    assert dev.earliest(cmd) is None
    with pytest.raises(IllegalCommand):
        dev.issue(cmd, 10_000)


def test_commit_must_match_staged_subarray():
    dev = _device("base")
    dev.issue(Command.act(0, 5), 0)
    dev.issue(Command.reloc(0, 1, 3, 1), 200)
    assert dev.earliest(Command.act(0, 4 * 512)) is None
    assert dev.earliest(Command.act(0, 3 * 512 + 9)) == 204
    assert dev.earliest(Command.rd(0, 5, 0)) is None
    assert dev.earliest(Command.reloc(0, 2, 4, 2)) is None


def test_back_to_back_relocs_spaced_by_t_reloc():
    dev = _device("base")
    dev.issue(Command.act(0, 5), 0)
    ras = dev.ticks(35.0)
    dev.issue(Command.reloc(0, 1, 3, 1), ras)
    assert dev.earliest(Command.reloc(0, 2, 3, 2)) == ras + dev.ticks(1.0)


def test_row_move_only_in_lisa_mode():
    dev = _device("figcache-fast")
    dev.issue(Command.act(0, 5), 0)
    assert dev.earliest(Command.rbm(0, 64)) is None
    lisa = _device("lisa-villa")
    lisa.issue(Command.act(0, 5), 0)
    assert lisa.earliest(Command.rbm(0, 3)) is None  # two regular subarrays
    e = lisa.earliest(Command.rbm(0, 64))
    assert e == lisa.ticks(35.0)
    lisa.issue(Command.rbm(0, 64), e)
    hops = int(lisa.raw.hops[0])
    R = lisa.config.geometry.rows_per_bank
    assert lisa.earliest(Command.act(0, R + 2)) == e + hops * lisa.ticks(8.0)
    lisa.issue(Command.act(0, R + 2), e + hops * lisa.ticks(8.0))
    assert all(lisa.store.read(0, R + 2, c) == lisa.store.initial(0, 5, c) for c in range(128))


def test_row_move_latency_formula():
    t = TimingParams()
    assert row_move_latency(2, False, t, 8.0) == 35 + 16 + 7.5 + 8.75
    assert row_move_latency(1, True, t, 8.0, dst_fast=False) == 8 + 13.75 + 13.75


@given(s=st.sampled_from([8, 16, 64, 100]), f=st.integers(1, 16))
def test_lisa_hops_match_oracle(s, f):
    if f > s:
        f = s
    assert lisa_hops(s, f).tolist() == hop_distances(s, f)
    assert min(lisa_hops(s, f)) == 1


def test_default_lisa_hop_range():
    cfg = load_config(None, {"mode": "lisa-villa"})
    hops = DramDevice(cfg, 8).raw.hops
    assert hops.min() == 1 and hops.max() == 2


def test_fast_subarray_timings_in_ticks():
    cfg = load_config(None, {"mode": "figcache-fast"})
    lay = Layout.of(cfg)
    dev = DramDevice(cfg, 8)
    assert dev.raw.tim.tolist() == [[lay.rcd[0], lay.rp[0], lay.ras[0]], [lay.rcd[1], lay.rp[1], lay.ras[1]]]
    assert lay.rcd == (55, 30) and lay.rp == (55, 35) and lay.ras == (140, 55)


def test_state_views():
    dev = _device("base")
    assert dev.open_row(0) is None
    dev.issue(Command.act(0, 7), 0)
    assert dev.open_row(0) == 7
    st_ = dev.subarray_state(0, 0, 10)
    assert (st_.state, st_.row) == ("activating", 7)
    assert dev.subarray_state(0, 0, 55).state == "active"
    assert dev.subarray_state(0, 1, 55).state == "precharged"
    ready = dev.next_ready(0)
    assert ready["RD"] == 55 and ready["PRE"] == 140 and ready["ACT"] is None
    assert dev.command_counts()[0, CmdKind.ACT] == 1


def test_reloc_operand_bits():
    assert reloc_operand_bits(DramGeometry(), 66) == (7, 7, 7)


@pytest.mark.parametrize("mode", [m.value for m in Mode])
def test_short_fuzz_agrees_with_validator(mode):
    stats = CommandFuzzer(load_config(None, {"mode": mode}), seed=7).run(5000)
    assert stats.issued == 5000
    assert stats.reads_checked > 0
    kinds = stats.by_kind
    assert kinds[CmdKind.RELOC] > 0 and kinds[CmdKind.ACT] > 0
    if mode == "lisa-villa":
        assert kinds[CmdKind.RBM] > 0
