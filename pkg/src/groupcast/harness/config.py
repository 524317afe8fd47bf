"""Simulation configuration and the flat ``key = value`` file format.

Every field is addressable by a dotted name (``harq.max_retx``).  The file
format is one assignment per line with ``#`` comments; tuples are written as
comma-separated lists and the MCS table as
``mod_order:code_rate:threshold_db`` triples.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

from ..radio_geometry import DEFAULT_MCS_ENTRIES, BlerShape, McsEntry, McsTable, RadioParams
from ..resource_frame import FrameConfig, FrameConfigError, derive_total_prb
from ..access_strategies import StrategyKind


class ConfigError(ValueError):
    def __init__(self, problems: Mapping[str, str]):
        self.problems = dict(problems)
        super().__init__("; ".join(f"{k}: {v}" for k, v in self.problems.items()))


@dataclass(frozen=True)
class GridSection:
    isd_m: float = 1732.0
    rings: int = 2


@dataclass(frozen=True)
class FrameSection:
    pdcch_symbols: int = 2
    symbols_per_subframe: int = 14
    mbsfn_subframes: tuple[int, ...] = (1, 6)
    # mixed: every strategy sees mbsfn_subframes; dedicated: PMCH owns all ten
    # subframes and PDSCH strategies own none of them being MBSFN
    layout: str = "mixed"


@dataclass(frozen=True)
class LinkSection:
    target_bler: float = 0.01
    ignore_worst_fraction: float = 0.0
    ignore_worst_feedback: bool = False
    # 1: target applies to one transmission; 1 + max_retx: to the HARQ residual
    mcs_rounds: int = 1
    mcs_table: tuple[tuple[int, float, float], ...] = tuple(
        (e.mod_order, e.code_rate, e.sinr_threshold_db) for e in DEFAULT_MCS_ENTRIES
    )
    bler_anchor: float = 0.10
    bler_tail: float = 0.01
    bler_gap_db: float = 2.0
    # per-round block fading diversity order; 0 keeps the static channel
    fading_order: int = 0


@dataclass(frozen=True)
class HarqSection:
    max_retx: int = 3
    feedback_delay: int = 4


@dataclass(frozen=True)
class IcSection:
    max_m: int = 4
    hold_subframes: int = 20


@dataclass(frozen=True)
class TrafficSection:
    payload_bytes: int = 40
    period: int = 20


@dataclass(frozen=True)
class PmchSection:
    mcs: int = 0
    mcch_period: int = 512


@dataclass(frozen=True)
class SimSection:
    strategy: str = StrategyKind.SCPTM.value
    group_size: int = 8
    groups: int = 4
    warmup: int = 2000
    horizon: int = 20000
    seed: int = 1


@dataclass(frozen=True)
class SimConfig:
    grid: GridSection = field(default_factory=GridSection)
    radio: RadioParams = field(default_factory=RadioParams)
    frame: FrameSection = field(default_factory=FrameSection)
    link: LinkSection = field(default_factory=LinkSection)
    harq: HarqSection = field(default_factory=HarqSection)
    ic: IcSection = field(default_factory=IcSection)
    traffic: TrafficSection = field(default_factory=TrafficSection)
    pmch: PmchSection = field(default_factory=PmchSection)
    sim: SimSection = field(default_factory=SimSection)

    # -- derived objects ---------------------------------------------------
    @property
    def strategy(self) -> StrategyKind:
        return StrategyKind(self.sim.strategy)

    @property
    def total_prb(self) -> int:
        return derive_total_prb(self.radio.bandwidth_mhz)

    def mcs_table(self) -> McsTable:
        return McsTable(tuple(McsEntry(i, int(m), float(r), float(s))
                              for i, (m, r, s) in enumerate(self.link.mcs_table)))

    def bler_shape(self) -> BlerShape:
        return BlerShape(self.link.bler_anchor, self.link.bler_tail, self.link.bler_gap_db)

    def frame_config(self, strategy: StrategyKind | None = None) -> FrameConfig:
        strategy = self.strategy if strategy is None else strategy
        mbsfn, allow_any = self.frame.mbsfn_subframes, False
        if self.frame.layout == "dedicated":
            if strategy is StrategyKind.PMCH:
                mbsfn, allow_any = tuple(range(10)), True
            else:
                mbsfn = ()
        return FrameConfig(self.total_prb, self.frame.pdcch_symbols, mbsfn,
                           self.frame.symbols_per_subframe, allow_any)

    # -- flat view ---------------------------------------------------------
    def to_flat(self) -> dict[str, Any]:
        out = {}
        for sec in fields(self):
            obj = getattr(self, sec.name)
            for f in fields(obj):
                if f.init:
                    out[f"{sec.name}.{f.name}"] = getattr(obj, f.name)
        return out

    def with_updates(self, updates: Mapping[str, Any]) -> "SimConfig":
        """Return a copy with dotted-key overrides (values may be strings)."""
        problems = {}
        sections: dict[str, dict] = {}
        flat = self.to_flat()
        for key, value in updates.items():
            if key not in flat:
                problems[key] = "unknown key"
                continue
            try:
                sections.setdefault(key.split(".")[0], {})[key.split(".")[1]] = _coerce(
                    flat[key], value, key)
            except (TypeError, ValueError) as exc:
                problems[key] = str(exc)
        new = self
        for sec, vals in sections.items():
            new = replace(new, **{sec: replace(getattr(new, sec), **vals)})
        try:
            new.validate()
        except ConfigError as exc:
            problems.update(exc.problems)
        if problems:
            raise ConfigError(problems)
        return new

    def validate(self) -> "SimConfig":
        p = {}
        if self.grid.isd_m <= 0:
            p["grid.isd_m"] = "must be positive"
        if self.grid.rings < 0:
            p["grid.rings"] = "must be >= 0"
        try:
            self.total_prb
        except ValueError as exc:
            p["radio.bandwidth_mhz"] = str(exc)
        for name in ("carrier_ghz", "h_bs_m", "h_ut_m", "building_h_m", "d_min_m", "shadow_std_db"):
            if getattr(self.radio, name) <= 0:
                p[f"radio.{name}"] = "must be positive"
        if self.frame.layout not in ("mixed", "dedicated"):
            p["frame.layout"] = "must be 'mixed' or 'dedicated'"
        elif "radio.bandwidth_mhz" not in p:
            for s in StrategyKind:
                try:
                    self.frame_config(s)
                except FrameConfigError as exc:
                    p["frame.mbsfn_subframes"] = str(exc)
        if not 0 < self.link.target_bler < 1:
            p["link.target_bler"] = "must lie in (0, 1)"
        if not 0 <= self.link.ignore_worst_fraction < 1:
            p["link.ignore_worst_fraction"] = "must lie in [0, 1)"
        try:
            self.mcs_table()
        except (ValueError, TypeError) as exc:
            p["link.mcs_table"] = str(exc)
        try:
            self.bler_shape()
        except ValueError as exc:
            p["link.bler_anchor"] = str(exc)
        if self.link.mcs_rounds < 1:
            p["link.mcs_rounds"] = "must be >= 1"
        if self.link.fading_order < 0:
            p["link.fading_order"] = "must be >= 0"
        if self.harq.max_retx < 0:
            p["harq.max_retx"] = "must be >= 0"
        if self.harq.feedback_delay < 1:
            p["harq.feedback_delay"] = "must be >= 1"
        if self.ic.max_m < 1:
            p["ic.max_m"] = "must be >= 1"
        if self.ic.hold_subframes < 0:
            p["ic.hold_subframes"] = "must be >= 0"
        if self.traffic.payload_bytes < 1:
            p["traffic.payload_bytes"] = "must be >= 1"
        if self.traffic.period < 1:
            p["traffic.period"] = "must be >= 1"
        if self.pmch.mcch_period < 1:
            p["pmch.mcch_period"] = "must be >= 1"
        if "link.mcs_table" not in p and self.pmch.mcs not in self.mcs_table():
            p["pmch.mcs"] = "not in the MCS table"
        try:
            StrategyKind(self.sim.strategy)
        except ValueError:
            p["sim.strategy"] = f"must be one of {[k.value for k in StrategyKind]}"
        if self.sim.group_size < 1:
            p["sim.group_size"] = "must be >= 1"
        if self.sim.groups < 0:
            p["sim.groups"] = "must be >= 0"
        if self.sim.warmup < 0:
            p["sim.warmup"] = "must be >= 0"
        if self.sim.horizon < 1:
            p["sim.horizon"] = "must be >= 1"
        if p:
            raise ConfigError(p)
        return self


def _coerce(current: Any, value: Any, key: str) -> Any:
    if not isinstance(value, str):
        return value
    v = value.strip()
    if key == "link.mcs_table":
        rows = []
        for item in v.split(","):
            m, r, s = item.strip().split(":")
            rows.append((int(m), _number(r), float(s)))
        return tuple(rows)
    if isinstance(current, bool):
        if v.lower() in ("1", "true", "yes", "on"):
            return True
        if v.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {v!r}")
    if isinstance(current, tuple):
        return tuple(int(x) for x in v.split(",") if x.strip())
    if isinstance(current, int):
        return int(v)
    if isinstance(current, float):
        return float(v)
    return v


def _number(s: str) -> float:
    s = s.strip()
    if "/" in s:
        a, b = s.split("/")
        return float(a) / float(b)
    return float(s)


def format_value(key: str, value: Any) -> str:
    if key == "link.mcs_table":
        return ", ".join(f"{m}:{r!r}:{s!r}" for m, r, s in value)
    if isinstance(value, tuple):
        return ",".join(str(x) for x in value)
    return str(value)


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    problems = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            problems[f"line {n}"] = f"expected 'key = value', got {raw!r}"
            continue
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    if problems:
        raise ConfigError(problems)
    return out


def load_config(path, base: SimConfig | None = None) -> SimConfig:
    with open(path) as fh:
        updates = parse_config_text(fh.read())
    return (base or SimConfig()).with_updates(updates)


def dump_config(cfg: SimConfig) -> str:
    return "".join(f"{k} = {format_value(k, v)}\n" for k, v in cfg.to_flat().items())
