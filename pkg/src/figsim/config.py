"""Simulation parameters: geometry, timing, energy, cache policy and controller knobs.

A :class:`DramConfig` is immutable once loaded. Config files are plain
``key = value`` text with ``#`` comments; every key is the snake-case name of
one field of one of the sections below, so the key namespace is flat.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field, fields
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ParseError, ValidationError


class Mode(str, enum.Enum):
    BASE = "base"
    FIG_FAST = "figcache-fast"
    FIG_SLOW = "figcache-slow"
    LISA_VILLA = "lisa-villa"
    FIG_IDEAL = "figcache-ideal"
    LL_DRAM = "ll-dram"

    @property
    def caches(self) -> bool:
        return self in CACHING_MODES


CACHING_MODES = frozenset({Mode.FIG_FAST, Mode.FIG_SLOW, Mode.LISA_VILLA, Mode.FIG_IDEAL})

# Modes whose cache rows live in dedicated fast subarrays.
FAST_CACHE_MODES = frozenset({Mode.FIG_FAST, Mode.FIG_IDEAL, Mode.LISA_VILLA})


class Replacement(str, enum.Enum):
    ROW_BENEFIT = "row-benefit"
    SEGMENT_BENEFIT = "segment-benefit"
    LRU = "lru"
    RANDOM = "random"


_MODE_ALIASES = {
    "base": Mode.BASE,
    "figfast": Mode.FIG_FAST,
    "fig-fast": Mode.FIG_FAST,
    "figslow": Mode.FIG_SLOW,
    "fig-slow": Mode.FIG_SLOW,
    "lisavilla": Mode.LISA_VILLA,
    "lisa": Mode.LISA_VILLA,
    "figideal": Mode.FIG_IDEAL,
    "fig-ideal": Mode.FIG_IDEAL,
    "lldram": Mode.LL_DRAM,
}

_POLICY_ALIASES = {
    "rowbenefit": Replacement.ROW_BENEFIT,
    "segmentbenefit": Replacement.SEGMENT_BENEFIT,
}


def parse_mode(text: str) -> Mode:
    key = text.strip().lower()
    try:
        return Mode(key)
    except ValueError:
        pass
    if key in _MODE_ALIASES:
        return _MODE_ALIASES[key]
    raise ValueError(f"unknown mode {text!r}")


def parse_replacement(text: str) -> Replacement:
    key = text.strip().lower()
    try:
        return Replacement(key)
    except ValueError:
        pass
    if key in _POLICY_ALIASES:
        return _POLICY_ALIASES[key]
    raise ValueError(f"unknown replacement policy {text!r}")


def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@dataclass(frozen=True)
class DramGeometry:
    channels: int = 1
    ranks_per_channel: int = 1
    bank_groups: int = 4
    banks_per_group: int = 4
    subarrays_per_bank: int = 64
    rows_per_subarray: int = 512
    row_bytes: int = 8192
    block_bytes: int = 64
    blocks_per_segment: int = 16

    @property
    def blocks_per_row(self) -> int:
        return self.row_bytes // self.block_bytes

    @property
    def segments_per_row(self) -> int:
        return self.blocks_per_row // self.blocks_per_segment

    @property
    def rows_per_bank(self) -> int:
        return self.subarrays_per_bank * self.rows_per_subarray

    @property
    def banks_per_channel(self) -> int:
        return self.ranks_per_channel * self.bank_groups * self.banks_per_group

    @property
    def channel_bytes(self) -> int:
        return self.banks_per_channel * self.rows_per_bank * self.row_bytes

    @property
    def total_bytes(self) -> int:
        return self.channels * self.channel_bytes

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if not isinstance(value, int) or value <= 0:
                raise ValidationError(f.name, f"must be a positive integer, got {value!r}")
        if not _is_pow2(self.row_bytes):
            raise ValidationError("row_bytes", "must be a power of two")
        if self.row_bytes % self.block_bytes:
            raise ValidationError("block_bytes", "must divide row_bytes")
        if self.blocks_per_row % self.blocks_per_segment:
            raise ValidationError("blocks_per_segment", "must divide blocks per row")


@dataclass(frozen=True)
class TimingParams:
    """DRAM timing in nanoseconds.

    The simulator runs on an integer tick grid (``tick_ns``); every timing is
    rounded up to whole ticks.
    """

    t_rcd: float = 13.75
    t_rp: float = 13.75
    t_ras: float = 35.0
    t_reloc: float = 1.0
    t_ccd: float = 5.0  # minimum gap between column commands
    t_burst: float = 5.0  # data transfer time per block
    clock_period: float = 1.25  # 800 MHz bus
    tick_ns: float = 0.25
    fast_rcd_reduction: float = 0.455
    fast_rp_reduction: float = 0.382
    fast_ras_reduction: float = 0.629

    def ticks(self, ns: float) -> int:
        return math.ceil(round(ns / self.tick_ns, 6))

    @property
    def ticks_per_clock(self) -> int:
        return round(self.clock_period / self.tick_ns)

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name.endswith("_reduction"):
                if not 0.0 <= value < 1.0:
                    raise ValidationError(f.name, f"must be in [0, 1), got {value!r}")
            elif not value > 0:
                raise ValidationError(f.name, f"must be strictly positive, got {value!r}")
        if self.t_ras < self.t_rcd:
            raise ValidationError("t_ras", "must be >= t_rcd")
        ratio = self.clock_period / self.tick_ns
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValidationError("tick_ns", "must divide clock_period")


def _reduced_on_grid(ns: float, reduction: float, grid: float) -> float:
    """ns * (1 - reduction) rounded up to a multiple of grid, exact in the decimal values given."""
    exact = Fraction(repr(ns)) * (1 - Fraction(repr(reduction)))
    step = Fraction(repr(grid))
    return float(math.ceil(exact / step) * step)


def derive_fast_timings(base: TimingParams) -> TimingParams:
    """Fast-subarray timings: each reduction applied, then rounded up to the clock grid."""
    clk = base.clock_period
    return dataclasses.replace(
        base,
        t_rcd=_reduced_on_grid(base.t_rcd, base.fast_rcd_reduction, clk),
        t_rp=_reduced_on_grid(base.t_rp, base.fast_rp_reduction, clk),
        t_ras=_reduced_on_grid(base.t_ras, base.fast_ras_reduction, clk),
    )


@dataclass(frozen=True)
class EnergyParams:
    """Per-event energies in microjoules; ``e_static`` is per nanosecond."""

    e_act: float = 0.012
    e_pre: float = 0.005
    e_rd: float = 0.004
    e_wr: float = 0.004
    e_reloc: float = 0.001
    e_static: float = 0.0

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValidationError(f.name, "must be non-negative")


@dataclass(frozen=True)
class PolicyConfig:
    mode: Mode = Mode.BASE
    cache_rows_per_bank: Optional[int] = None  # None: 512 for lisa-villa, else 64
    replacement: Replacement = Replacement.ROW_BENEFIT
    insertion_threshold: int = 1
    benefit_bits: int = 5
    lisa_hop_ns: float = 8.0  # made-up per-hop row-move latency; keep configurable
    random_seed: int = 0
    fast_subarrays: Optional[int] = None  # None: cache_rows_per_bank / fast_subarray_rows
    fast_subarray_rows: int = 32
    cache_subarray: Optional[int] = None  # figcache-slow reserved-row subarray; None: last

    @property
    def max_benefit(self) -> int:
        return (1 << self.benefit_bits) - 1

    def validate(self) -> None:
        if self.insertion_threshold < 1:
            raise ValidationError("insertion_threshold", "must be >= 1")
        if not 0 <= self.benefit_bits <= 15:
            raise ValidationError("benefit_bits", "must be in [0, 15]")
        if self.cache_rows_per_bank is not None and self.cache_rows_per_bank < 1:
            raise ValidationError("cache_rows_per_bank", "must be >= 1")
        if self.fast_subarrays is not None and self.fast_subarrays < 1:
            raise ValidationError("fast_subarrays", "must be >= 1")
        if self.fast_subarray_rows < 1:
            raise ValidationError("fast_subarray_rows", "must be >= 1")
        if not self.lisa_hop_ns > 0:
            raise ValidationError("lisa_hop_ns", "must be strictly positive")


@dataclass(frozen=True)
class ControllerParams:
    queue_capacity: int = 64  # per read / write queue
    max_inflight: int = 8  # outstanding requests per channel
    write_high_watermark: float = 0.75  # fraction of the effective write queue
    write_low_watermark: float = 0.25

    def validate(self) -> None:
        if self.queue_capacity < 1:
            raise ValidationError("queue_capacity", "must be >= 1")
        if self.max_inflight < 1:
            raise ValidationError("max_inflight", "must be >= 1")
        if not 0 <= self.write_low_watermark <= self.write_high_watermark <= 1:
            raise ValidationError("write_high_watermark", "watermarks must satisfy 0 <= low <= high <= 1")


@dataclass(frozen=True)
class DramConfig:
    geometry: DramGeometry = field(default_factory=DramGeometry)
    timing: TimingParams = field(default_factory=TimingParams)
    energy: EnergyParams = field(default_factory=EnergyParams)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    controller: ControllerParams = field(default_factory=ControllerParams)

    @property
    def mode(self) -> Mode:
        return self.policy.mode

    @property
    def fast_timing(self) -> TimingParams:
        return derive_fast_timings(self.timing)

    @property
    def cache_blocks_per_segment(self) -> int:
        """Caching granularity; lisa-villa always moves whole rows."""
        if self.policy.mode is Mode.LISA_VILLA:
            return self.geometry.blocks_per_row
        return self.geometry.blocks_per_segment

    @property
    def cache_segments_per_row(self) -> int:
        return self.geometry.blocks_per_row // self.cache_blocks_per_segment

    @property
    def cache_rows(self) -> int:
        return self.policy.cache_rows_per_bank or 0

    def replace(self, **overrides: Any) -> "DramConfig":
        """Copy with flat-key overrides applied and re-validated.

        Already-resolved fields (cache rows, fast subarrays) keep their values;
        build from :func:`load_config` to get mode-dependent defaults afresh.
        """
        flat = to_flat_dict(self)
        flat.update(overrides)
        return from_flat_dict(flat)

    def validate(self) -> None:
        self.geometry.validate()
        self.timing.validate()
        self.energy.validate()
        self.policy.validate()
        self.controller.validate()
        if self.geometry.rows_per_bank + self.cache_rows >= 1 << 24:
            raise ValidationError("rows_per_subarray", "home plus cache rows per bank must stay below 2^24")
        validate_mode(self)


_SECTIONS = {
    "geometry": DramGeometry,
    "timing": TimingParams,
    "energy": EnergyParams,
    "policy": PolicyConfig,
    "controller": ControllerParams,
}

# flat key -> (section, field)
KEY_INDEX = {f.name: (sec, f) for sec, cls in _SECTIONS.items() for f in fields(cls)}


def _coerce(key: str, raw: Any) -> Any:
    _, f = KEY_INDEX[key]
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    if key == "mode":
        return parse_mode(text)
    if key == "replacement":
        return parse_replacement(text)
    if f.type in ("Optional[int]",) and text.lower() in ("auto", "none", ""):
        return None
    if f.type in ("int", "Optional[int]"):
        return int(text, 0)
    if f.type == "float":
        return float(text)
    raise ValueError(f"no parser for {key}")


def _resolve(policy: PolicyConfig, geometry: DramGeometry) -> PolicyConfig:
    rows = policy.cache_rows_per_bank
    if rows is None:
        rows = 512 if policy.mode is Mode.LISA_VILLA else 64
    fast = policy.fast_subarrays
    if fast is None:
        fast = max(1, rows // policy.fast_subarray_rows)
    sub = policy.cache_subarray
    if sub is None:
        sub = geometry.subarrays_per_bank - 1
    return dataclasses.replace(policy, cache_rows_per_bank=rows, fast_subarrays=fast, cache_subarray=sub)


def from_flat_dict(values: Mapping[str, Any]) -> DramConfig:
    """Build a resolved, validated config from flat key/value pairs (defaults fill the rest)."""
    parts: dict[str, dict[str, Any]] = {sec: {} for sec in _SECTIONS}
    for key, raw in values.items():
        if key not in KEY_INDEX:
            raise ParseError(f"unknown key {key!r}")
        sec, _ = KEY_INDEX[key]
        try:
            parts[sec][key] = _coerce(key, raw)
        except ValueError as exc:
            raise ParseError(f"bad value for {key}: {exc}") from None
    built = {sec: cls(**parts[sec]) for sec, cls in _SECTIONS.items()}
    built["geometry"].validate()
    built["policy"] = _resolve(built["policy"], built["geometry"])
    config = DramConfig(**built)
    config.validate()
    return config


def to_flat_dict(config: DramConfig) -> dict[str, Any]:
    out = {}
    for sec in _SECTIONS:
        part = getattr(config, sec)
        for f in fields(part):
            out[f.name] = getattr(part, f.name)
    return out


def _format_value(value: Any) -> str:
    if isinstance(value, enum.Enum):
        return value.value
    if value is None:
        return "auto"
    return repr(value)


def dumps_config(config: DramConfig) -> str:
    lines = []
    for sec in _SECTIONS:
        lines.append(f"# {sec}")
        part = getattr(config, sec)
        for f in fields(part):
            lines.append(f"{f.name} = {_format_value(getattr(part, f.name))}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        key, sep, value = stripped.partition("=")
        key = key.strip()
        if not sep or not key or not value.strip():
            raise ParseError(f"expected 'key = value', got {line.strip()!r}", line=lineno)
        if key not in KEY_INDEX:
            raise ParseError(f"unknown key {key!r}", line=lineno)
        values[key] = value.strip()
    return values


def load_config(path: Optional[str | Path] = None, overrides: Optional[Mapping[str, Any]] = None) -> DramConfig:
    """Load a config file (or pure defaults when ``path`` is None) with optional overrides.

    Overrides win over file values, which win over defaults.
    """
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8")))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return from_flat_dict(values)


def save_config(config: DramConfig, path: str | Path) -> None:
    Path(path).write_text(dumps_config(config), encoding="utf-8")


def validate_mode(config: DramConfig) -> None:
    """Mode-specific capacity checks for the in-DRAM cache; non-caching modes always pass."""
    p, g = config.policy, config.geometry
    mode = p.mode
    if not mode.caches:
        return
    rows = p.cache_rows_per_bank
    if mode is Mode.FIG_SLOW:
        if p.cache_subarray is None or not 0 <= p.cache_subarray < g.subarrays_per_bank:
            raise ValidationError("cache_subarray", f"no subarray {p.cache_subarray} in a {g.subarrays_per_bank}-subarray bank")
        if rows > g.rows_per_subarray:
            raise ValidationError(
                "cache_rows_per_bank", f"{rows} reserved rows exceed {g.rows_per_subarray} rows per subarray"
            )
    else:
        if p.fast_subarrays * p.fast_subarray_rows != rows:
            raise ValidationError(
                "fast_subarrays",
                f"{p.fast_subarrays} x {p.fast_subarray_rows} rows != cache_rows_per_bank {rows}",
            )
        if mode is Mode.LISA_VILLA and p.fast_subarrays > g.subarrays_per_bank:
            raise ValidationError("fast_subarrays", "cannot interleave more fast subarrays than slow ones")
