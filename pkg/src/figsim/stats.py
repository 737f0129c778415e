"""Counters, energy accounting and report emission."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field, fields
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .config import DramConfig, EnergyParams, to_flat_dict
from .controller import COUNTER_NAMES
from .dram import CmdKind
from .figcache import fts_accounting

CSV_COLUMNS = (
    "mode",
    "seed",
    "requests",
    "cache_hit_rate",
    "row_buffer_hit_rate",
    "mean_latency_ns",
    "p99_latency_ns",
    "energy_uj",
    "relocs",
    "evictions",
    "dirty_writebacks",
    "simulated_ns",
)
# sweep coordinates and per-point errors follow the fixed columns
CSV_EXTRA_COLUMNS = ("segment_blocks", "cache_rows", "policy", "threshold", "error")

EXACT_LATENCY_LIMIT = 10_000_000
RESERVOIR_SIZE = 1_000_000


@dataclass
class Counters:
    requests: int = 0
    reads: int = 0
    writes: int = 0
    row_buffer_hits: int = 0
    row_buffer_misses: int = 0
    row_buffer_conflicts: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    insertions: int = 0
    evictions: int = 0
    dirty_writebacks: int = 0
    acts: int = 0
    pres: int = 0
    relocs: int = 0
    row_moves: int = 0  # whole-row moves (lisa-villa)
    column_reads: int = 0
    column_writes: int = 0
    fill_relocs: int = 0
    writeback_relocs: int = 0
    fills: int = 0
    cache_columns: int = 0
    cache_row_buffer_hits: int = 0
    flush_writebacks: int = 0
    excluded_misses: int = 0

    @classmethod
    def from_arrays(cls, counters: np.ndarray, commands: np.ndarray) -> "Counters":
        """Build from one controller counter row and one command-count row (any leading shape summed)."""
        cnt = np.asarray(counters).reshape(-1, len(COUNTER_NAMES)).sum(axis=0)
        cmd = np.asarray(commands).reshape(-1, len(CmdKind)).sum(axis=0)
        c = cls()
        for name, v in zip(COUNTER_NAMES, cnt.tolist()):
            if hasattr(c, name):
                setattr(c, name, int(v))
        c.acts = int(cmd[CmdKind.ACT])
        c.pres = int(cmd[CmdKind.PRE])
        c.relocs = int(cmd[CmdKind.RELOC])
        c.row_moves = int(cmd[CmdKind.RBM])
        c.column_reads = int(cmd[CmdKind.RD])
        c.column_writes = int(cmd[CmdKind.WR])
        return c

    def record(self, event: str, n: int = 1) -> None:
        setattr(self, event, getattr(self, event) + n)

    def merge(self, other: "Counters") -> "Counters":
        return Counters(**{f.name: getattr(self, f.name) + getattr(other, f.name) for f in fields(self)})

    def scaled(self, k: int) -> "Counters":
        return Counters(**{f.name: getattr(self, f.name) * k for f in fields(self)})

    @property
    def demand_columns(self) -> int:
        return self.row_buffer_hits + self.row_buffer_misses + self.row_buffer_conflicts

    def as_dict(self) -> dict:
        return asdict(self)


def energy_breakdown(c: Counters, energy: EnergyParams, simulated_ns: float, blocks_per_row: int) -> dict:
    """Per-event energy in µJ as exact decimals; keys in a fixed order."""
    d = lambda x: Decimal(repr(float(x)))  # noqa: E731
    return {
        "act": d(energy.e_act) * c.acts,
        "pre": d(energy.e_pre) * c.pres,
        "read": d(energy.e_rd) * c.column_reads,
        "write": d(energy.e_wr) * c.column_writes,
        "reloc": d(energy.e_reloc) * c.relocs,
        "row_move": d(energy.e_reloc) * blocks_per_row * c.row_moves,
        "static": d(energy.e_static) * d(simulated_ns),
    }


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile of an ascending array (q in [0, 100])."""
    n = len(sorted_values)
    k = max(1, math.ceil(q / 100.0 * n))
    return float(sorted_values[k - 1])


def latency_sample(lat: np.ndarray, seed: int = 0) -> np.ndarray:
    """All latencies up to the exact limit, else a fixed-seed uniform sample."""
    if len(lat) <= EXACT_LATENCY_LIMIT:
        return lat
    rng = np.random.default_rng(seed)
    return lat[rng.choice(len(lat), size=RESERVOIR_SIZE, replace=False)]


@dataclass
class RunReport:
    mode: str
    seed: int
    config: dict
    counters: Counters
    cache_hit_rate: Optional[float]
    row_buffer_hit_rate: Optional[float]
    cache_row_buffer_hit_rate: Optional[float]
    mean_latency_ns: Optional[float]
    median_latency_ns: Optional[float]
    p99_latency_ns: Optional[float]
    simulated_ns: float
    energy_uj: float
    energy_breakdown: dict
    fts: dict
    segment_blocks: int = 0
    cache_rows: int = 0
    policy: str = ""
    threshold: int = 1
    error: str = ""
    per_bank: list = field(default_factory=list)

    @property
    def fill_cost_ns_per_insertion(self) -> Optional[float]:
        """Average RELOC time spent filling one cache slot."""
        if not self.counters.insertions:
            return None
        t_reloc = self.config["t_reloc"]
        return self.counters.fill_relocs * t_reloc / self.counters.insertions

    def csv_row(self) -> list[str]:
        c = self.counters
        values = [
            self.mode,
            self.seed,
            c.requests,
            self.cache_hit_rate,
            self.row_buffer_hit_rate,
            self.mean_latency_ns,
            self.p99_latency_ns,
            self.energy_uj,
            c.relocs + c.row_moves,
            c.evictions,
            c.dirty_writebacks,
            self.simulated_ns,
            self.segment_blocks,
            self.cache_rows,
            self.policy,
            self.threshold,
            self.error,
        ]
        return [_fmt(v) for v in values]

    def to_json_dict(self) -> dict:
        return {
            "mode": self.mode,
            "seed": self.seed,
            "requests": self.counters.requests,
            "cache_hit_rate": self.cache_hit_rate,
            "row_buffer_hit_rate": self.row_buffer_hit_rate,
            "cache_row_buffer_hit_rate": self.cache_row_buffer_hit_rate,
            "mean_latency_ns": self.mean_latency_ns,
            "median_latency_ns": self.median_latency_ns,
            "p99_latency_ns": self.p99_latency_ns,
            "simulated_ns": self.simulated_ns,
            "energy_uj": self.energy_uj,
            "energy_breakdown_uj": {k: float(v) for k, v in self.energy_breakdown.items()},
            "counters": self.counters.as_dict(),
            "per_bank": self.per_bank,
            "fts": self.fts,
            "segment_blocks": self.segment_blocks,
            "cache_rows": self.cache_rows,
            "policy": self.policy,
            "threshold": self.threshold,
            "error": self.error,
            "config": {k: (v.value if hasattr(v, "value") else v) for k, v in self.config.items()},
        }


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _rate(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def finalize(
    counters: Counters,
    config: DramConfig,
    latencies_ticks: np.ndarray,
    simulated_ticks: int,
    *,
    seed: int = 0,
    per_bank: Sequence[Counters] = (),
) -> RunReport:
    """Turn raw counts and latencies into a report."""
    tick = config.timing.tick_ns
    c = counters
    lat = np.asarray(latencies_ticks, dtype=np.int64)
    lat = lat[lat >= 0]
    if len(lat):
        mean = float(int(lat.sum()) * tick / len(lat))
        s = np.sort(latency_sample(lat)) * tick
        median = nearest_rank(s, 50)
        p99 = nearest_rank(s, 99)
    else:
        mean = median = p99 = None
    simulated_ns = simulated_ticks * tick
    parts = energy_breakdown(c, config.energy, simulated_ns, config.geometry.blocks_per_row)
    total = sum(parts.values(), Decimal(0))
    acct = fts_accounting(config) if config.mode.caches else None
    p = config.policy
    return RunReport(
        mode=config.mode.value,
        seed=seed,
        config=to_flat_dict(config),
        counters=c,
        cache_hit_rate=_rate(c.cache_hits, c.requests),
        row_buffer_hit_rate=_rate(c.row_buffer_hits, c.demand_columns),
        cache_row_buffer_hit_rate=_rate(c.cache_row_buffer_hits, c.cache_columns),
        mean_latency_ns=mean,
        median_latency_ns=median,
        p99_latency_ns=p99,
        simulated_ns=simulated_ns,
        energy_uj=float(total),
        energy_breakdown=parts,
        fts=asdict(acct) if acct else {},
        segment_blocks=config.cache_blocks_per_segment,
        cache_rows=config.cache_rows if config.mode.caches else 0,
        policy=p.replacement.value,
        threshold=p.insertion_threshold,
        per_bank=[b.as_dict() for b in per_bank],
    )


def report_from_result(result, *, seed: int = 0, per_bank: bool = False) -> RunReport:
    """Finalize a :class:`figsim.sim.SimResult`."""
    total = Counters.from_arrays(result.counters(), result.command_counts())
    banks = []
    if per_bank:
        nb = result.config.geometry.banks_per_channel
        for b in range(nb):
            banks.append(
                Counters.from_arrays(
                    np.stack([ch.counters[b] for ch in result.channels]),
                    np.stack([ch.command_counts[b] for ch in result.channels]),
                )
            )
    return finalize(total, result.config, result.latencies, result.end_tick, seed=seed, per_bank=banks)


def error_report(config: DramConfig, seed: int, message: str) -> RunReport:
    """Placeholder row for a sweep point that failed."""
    p = config.policy
    return RunReport(
        mode=config.mode.value,
        seed=seed,
        config=to_flat_dict(config),
        counters=Counters(),
        cache_hit_rate=None,
        row_buffer_hit_rate=None,
        cache_row_buffer_hit_rate=None,
        mean_latency_ns=None,
        median_latency_ns=None,
        p99_latency_ns=None,
        simulated_ns=0.0,
        energy_uj=0.0,
        energy_breakdown={},
        fts={},
        segment_blocks=config.cache_blocks_per_segment,
        cache_rows=config.cache_rows if config.mode.caches else 0,
        policy=p.replacement.value,
        threshold=p.insertion_threshold,
        error=message,
    )


def to_csv(reports: Iterable[RunReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS + CSV_EXTRA_COLUMNS)
    for r in reports:
        w.writerow(r.csv_row())
    return buf.getvalue()


def to_json(reports: Iterable[RunReport]) -> str:
    """One JSON document per run, one per line."""
    return "".join(json.dumps(r.to_json_dict(), allow_nan=False) + "\n" for r in reports)


def emit(reports: Sequence[RunReport] | RunReport, fmt: str = "csv", path: Optional[str | Path] = None) -> str:
    """Render reports as CSV or JSON; write them to ``path`` when given."""
    if isinstance(reports, RunReport):
        reports = [reports]
    fmt = fmt.lower()
    if fmt == "csv":
        text = to_csv(reports)
    elif fmt == "json":
        text = to_json(reports)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text
