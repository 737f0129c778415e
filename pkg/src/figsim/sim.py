"""Run a trace through one controller per channel."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import DramConfig
from .controller import MemoryController
from .workload import Trace


@dataclass
class ChannelResult:
    channel: int
    counters: np.ndarray  # [banks, N_COUNTERS]
    command_counts: np.ndarray  # [banks, len(CmdKind)]
    latencies: np.ndarray  # ticks, one per request of this channel
    end_tick: int
    controller: MemoryController = field(repr=False)


@dataclass
class SimResult:
    config: DramConfig
    channels: list[ChannelResult]

    @property
    def tick_ns(self) -> float:
        return self.config.timing.tick_ns

    @property
    def latencies(self) -> np.ndarray:
        if not self.channels:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate([c.latencies for c in self.channels])

    @property
    def end_tick(self) -> int:
        return max((c.end_tick for c in self.channels), default=0)

    def counters(self) -> np.ndarray:
        return sum(c.counters.sum(axis=0) for c in self.channels)

    def command_counts(self) -> np.ndarray:
        return sum(c.command_counts.sum(axis=0) for c in self.channels)


def split_channels(config: DramConfig, trace: Trace):
    """Per-channel (arrival ticks, is_write, bank, row, column, global index) arrays."""
    g = config.geometry
    ch, bank, row, col = trace.decode(g)
    arr = np.asarray(trace.arrival, dtype=np.int64) * config.timing.ticks_per_clock
    isw = np.asarray(trace.is_write).astype(np.int64)
    idx = np.arange(len(trace), dtype=np.int64)
    out = []
    for c in range(g.channels):
        m = ch == c
        out.append((arr[m], isw[m], bank[m], row[m], col[m], idx[m]))
    return out


def simulate(
    config: DramConfig, trace: Trace, *, log_capacity: int = 0, flush: bool = True, check: bool = False
) -> SimResult:
    """Simulate ``trace`` to completion; dirty cached segments are flushed home afterwards."""
    config.validate()
    trace.check(config.geometry)
    results = []
    for c, (arr, isw, bank, row, col, gidx) in enumerate(split_channels(config, trace)):
        mc = MemoryController(config, arr, isw, bank, row, col, gidx, log_capacity=log_capacity, check=check)
        mc.run()
        if flush:
            mc.flush()
        results.append(
            ChannelResult(
                channel=c,
                counters=mc.counters(),
                command_counts=mc.device.command_counts(),
                latencies=mc.latencies_ticks(),
                end_tick=mc.end_tick(),
                controller=mc,
            )
        )
    return SimResult(config, results)
