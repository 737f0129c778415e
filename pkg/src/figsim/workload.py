"""Memory traces: text format I/O and a synthetic hot-segment generator.

Trace lines read ``<arrival-cycle> <R|W> <hex-address>``; lines starting with
``#`` are comments.  Arrival cycles are memory-bus clock cycles.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .config import DramGeometry
from .dram import decode_array
from .errors import AlignmentError, OrderingError, OutOfRange, ParseError


@dataclass(frozen=True)
class TraceRecord:
    arrival: int
    kind: str  # "R" or "W"
    address: int

    @property
    def is_write(self) -> bool:
        return self.kind == "W"


@dataclass
class Trace:
    """Column-oriented trace; ``arrival`` in bus cycles."""

    arrival: np.ndarray
    is_write: np.ndarray
    address: np.ndarray

    def __len__(self) -> int:
        return len(self.arrival)

    def records(self) -> Iterator[TraceRecord]:
        for t, w, a in zip(self.arrival.tolist(), self.is_write.tolist(), self.address.tolist()):
            yield TraceRecord(t, "W" if w else "R", a)

    @classmethod
    def from_records(cls, records: Iterable[TraceRecord]) -> "Trace":
        recs = list(records)
        return cls(
            np.array([r.arrival for r in recs], dtype=np.int64),
            np.array([r.is_write for r in recs], dtype=bool),
            np.array([r.address for r in recs], dtype=np.int64),
        )

    def check(self, geometry: DramGeometry) -> None:
        """Raise if the trace is unsorted, misaligned or outside the memory."""
        if len(self) == 0:
            return
        bad = np.nonzero(np.diff(self.arrival) < 0)[0]
        if len(bad):
            i = int(bad[0]) + 1
            raise OrderingError(f"record {i + 1}: arrival {int(self.arrival[i])} before {int(self.arrival[i - 1])}")
        if int(self.arrival[0]) < 0:
            raise OrderingError("record 1: negative arrival")
        mis = np.nonzero(self.address % geometry.block_bytes)[0]
        if len(mis):
            i = int(mis[0])
            raise AlignmentError(f"record {i + 1}: address {int(self.address[i]):#x} not {geometry.block_bytes}-byte aligned")
        out = np.nonzero((self.address < 0) | (self.address >= geometry.total_bytes))[0]
        if len(out):
            i = int(out[0])
            raise OutOfRange(f"record {i + 1}: address {int(self.address[i]):#x} outside memory")

    def decode(self, geometry: DramGeometry):
        return decode_array(self.address, geometry)


def parse_line(line: str, lineno: int, block_bytes: int = 64) -> Optional[TraceRecord]:
    text = line.strip()
    if not text or text.startswith("#"):
        return None
    parts = text.split()
    if len(parts) != 3:
        raise ParseError(f"expected '<cycle> <R|W> <hex-address>', got {text!r}", lineno)
    cyc, kind, addr = parts
    try:
        arrival = int(cyc, 10)
    except ValueError:
        raise ParseError(f"bad arrival cycle {cyc!r}", lineno) from None
    if arrival < 0:
        raise ParseError(f"negative arrival cycle {arrival}", lineno)
    kind = kind.upper()
    if kind not in ("R", "W"):
        raise ParseError(f"unknown request kind {parts[1]!r}", lineno)
    try:
        address = int(addr, 16)
    except ValueError:
        raise ParseError(f"bad hex address {addr!r}", lineno) from None
    if address < 0:
        raise ParseError(f"negative address {addr!r}", lineno)
    if address % block_bytes:
        raise AlignmentError(f"line {lineno}: address {address:#x} not {block_bytes}-byte aligned")
    return TraceRecord(arrival, kind, address)


def iter_trace(lines: Iterable[str], block_bytes: int = 64) -> Iterator[TraceRecord]:
    prev = None
    for lineno, line in enumerate(lines, start=1):
        rec = parse_line(line, lineno, block_bytes)
        if rec is None:
            continue
        if prev is not None and rec.arrival < prev:
            raise OrderingError(f"line {lineno}: arrival {rec.arrival} before {prev}")
        prev = rec.arrival
        yield rec


def parse_trace(path: str | Path, block_bytes: int = 64) -> Iterator[TraceRecord]:
    """Stream validated records from a trace file."""
    with open(path, encoding="utf-8") as fh:
        yield from iter_trace(fh, block_bytes)


def load_trace(path: str | Path, geometry: Optional[DramGeometry] = None) -> Trace:
    g = geometry or DramGeometry()
    trace = Trace.from_records(parse_trace(path, g.block_bytes))
    trace.check(g)
    return trace


def format_records(trace: Trace) -> str:
    kinds = np.where(trace.is_write, "W", "R")
    lines = [f"{t} {k} {a:#x}" for t, k, a in zip(trace.arrival.tolist(), kinds.tolist(), trace.address.tolist())]
    return "".join(line + "\n" for line in lines)


def write_trace(trace: Trace, path: str | Path) -> None:
    Path(path).write_text(format_records(trace), encoding="utf-8")


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------


class Placement(str, enum.Enum):
    SPREAD = "spread"  # hot segment i lands in subarray i mod subarrays_per_bank
    SINGLE = "single"  # every hot segment in one subarray


@dataclass(frozen=True)
class SyntheticSpec:
    total_requests: int = 1_000_000
    hot_segments: int = 64
    hot_fraction: float = 0.9
    footprint_bytes: Optional[int] = None  # None: the whole memory
    write_ratio: float = 0.3
    inter_arrival: float = 4.0  # mean gap in cycles
    seed: int = 0
    placement: Placement = Placement.SPREAD
    hot_segment_bytes: int = 1024

    def validate(self, geometry: DramGeometry) -> None:
        from .errors import ValidationError

        if self.total_requests < 0:
            raise ValidationError("total_requests", "must be >= 0")
        if not 0.0 <= self.hot_fraction <= 1.0:
            raise ValidationError("hot_fraction", "must be in [0, 1]")
        if not 0.0 <= self.write_ratio <= 1.0:
            raise ValidationError("write_ratio", "must be in [0, 1]")
        if self.inter_arrival < 0:
            raise ValidationError("inter_arrival", "must be >= 0")
        seg = self.hot_segment_bytes
        if seg < geometry.block_bytes or seg % geometry.block_bytes or geometry.row_bytes % seg:
            raise ValidationError("hot_segment_bytes", "must be a block multiple dividing the row size")
        fp = self.footprint(geometry)
        if fp < seg or fp % seg or fp > geometry.total_bytes:
            raise ValidationError("footprint_bytes", "must be a segment multiple within memory")
        if self.hot_segments < 0 or self.hot_segments > fp // seg:
            raise ValidationError("hot_segments", "must fit in the footprint")
        if self.hot_fraction > 0 and self.hot_segments == 0 and self.total_requests > 0:
            raise ValidationError("hot_segments", "must be >= 1 when hot_fraction > 0")

    def footprint(self, geometry: DramGeometry) -> int:
        return geometry.total_bytes if self.footprint_bytes is None else self.footprint_bytes


def parse_synthetic(text: str, **defaults) -> SyntheticSpec:
    """Parse ``key=value`` pairs like ``hot=64,frac=0.9,n=100000``."""
    aliases = {
        "n": "total_requests",
        "requests": "total_requests",
        "hot": "hot_segments",
        "frac": "hot_fraction",
        "footprint": "footprint_bytes",
        "write": "write_ratio",
        "writes": "write_ratio",
        "gap": "inter_arrival",
        "seed": "seed",
        "placement": "placement",
        "hotbytes": "hot_segment_bytes",
    }
    kinds = {
        "total_requests": int,
        "hot_segments": int,
        "hot_fraction": float,
        "footprint_bytes": lambda v: int(v, 0),
        "write_ratio": float,
        "inter_arrival": float,
        "seed": int,
        "placement": Placement,
        "hot_segment_bytes": int,
    }
    values = dict(defaults)
    for item in filter(None, (s.strip() for s in text.split(","))):
        if "=" not in item:
            raise ParseError(f"synthetic spec item {item!r} is not key=value")
        key, raw = (s.strip() for s in item.split("=", 1))
        name = aliases.get(key, key)
        if name not in kinds:
            raise ParseError(f"unknown synthetic spec key {key!r}")
        try:
            values[name] = kinds[name](raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key!r}: {exc}") from None
    return SyntheticSpec(**values)


def _hot_segments(spec: SyntheticSpec, geometry: DramGeometry, rng: np.random.Generator) -> np.ndarray:
    """Byte addresses of the hot segments, distinct."""
    seg = spec.hot_segment_bytes
    nseg = spec.footprint(geometry) // seg
    if spec.hot_segments == 0:
        return np.zeros(0, dtype=np.int64)
    S = geometry.subarrays_per_bank
    rows_per_sub = geometry.rows_per_subarray

    def decode_sub(idx):
        _, _, row, _ = decode_array(idx * seg, geometry)
        return row // rows_per_sub

    # small footprints: decode every segment once instead of per candidate batch
    table = decode_sub(np.arange(nseg, dtype=np.int64)) if nseg <= 1 << 20 else None
    reachable = set(np.unique(table).tolist()) if table is not None else None

    def subarray_of(idx):
        return table[idx] if table is not None else decode_sub(idx)

    chosen: list[int] = []
    taken: set[int] = set()
    if spec.placement is Placement.SINGLE:
        want_sub = None
    for i in range(spec.hot_segments):
        if spec.placement is Placement.SPREAD:
            want = i % S
        else:
            want = want_sub
        found = None
        for attempt in range(128):
            # after 64 misses the wanted subarray is probably outside the footprint
            target = want if attempt < 64 else None
            if reachable is not None and target not in reachable:
                target = None
            cand = rng.integers(0, nseg, size=256)
            hits = cand if target is None else cand[subarray_of(cand) == target]
            found = next((int(c) for c in hits if int(c) not in taken), None)
            if found is not None:
                break
        if found is None:
            found = next(c for c in range(nseg) if c not in taken)
        if spec.placement is Placement.SINGLE and want_sub is None:
            want_sub = int(subarray_of(np.array([found]))[0])
        chosen.append(found)
        taken.add(found)
    return np.array(chosen, dtype=np.int64) * seg


def generate_synthetic(spec: SyntheticSpec, geometry: Optional[DramGeometry] = None) -> Trace:
    """Hot/cold mix: a fraction of accesses hit a few hot segments, the rest are uniform."""
    g = geometry or DramGeometry()
    spec.validate(g)
    rng = np.random.default_rng(spec.seed)
    n = spec.total_requests
    hot = _hot_segments(spec, g, rng)
    blk = g.block_bytes
    is_hot = rng.random(n) < spec.hot_fraction if len(hot) else np.zeros(n, dtype=bool)
    addr = np.empty(n, dtype=np.int64)
    nh = int(is_hot.sum())
    per_seg = spec.hot_segment_bytes // blk
    addr[is_hot] = hot[rng.integers(0, len(hot), size=nh)] + rng.integers(0, per_seg, size=nh) * blk if nh else 0
    nblocks = spec.footprint(g) // blk
    addr[~is_hot] = rng.integers(0, nblocks, size=n - nh) * blk
    is_write = rng.random(n) < spec.write_ratio
    if spec.inter_arrival > 0:
        gaps = rng.geometric(1.0 / (spec.inter_arrival + 1.0), size=n) - 1
    else:
        gaps = np.zeros(n, dtype=np.int64)
    arrival = np.cumsum(gaps, dtype=np.int64)
    return Trace(arrival, is_write, addr)


def hot_segment_addresses(spec: SyntheticSpec, geometry: Optional[DramGeometry] = None) -> np.ndarray:
    """The hot segment base addresses :func:`generate_synthetic` would pick."""
    g = geometry or DramGeometry()
    return _hot_segments(spec, g, np.random.default_rng(spec.seed))
