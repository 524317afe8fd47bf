"""Per-subframe PRB accounting, transport-block sizing and DCI records.

Transport blocks are sized multiplicatively rather than from the LTE TBS
tables::

    tbs = floor(n_prb * 12 * n_data_symbols * mod_order * code_rate)

where ``n_data_symbols`` is ``symbols_per_subframe - pdcch_symbols`` for the
PDSCH family and ``symbols_per_subframe`` for PMCH.
"""

from __future__ import annotations

import csv
import enum
import itertools
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .radio_geometry import McsTable

SUBCARRIERS_PER_PRB = 12
SUBFRAMES_PER_FRAME = 10

# 36.101 channel bandwidth -> transmission bandwidth configuration
PRB_BY_BANDWIDTH = {1.4: 6, 3.0: 15, 5.0: 25, 10.0: 50, 15.0: 75, 20.0: 100}
FDD_MBSFN_CAPABLE = frozenset({1, 2, 3, 6, 7, 8})


class ChannelKind(str, enum.Enum):
    PDSCH_UNICAST = "pdsch-unicast"
    PMCH = "pmch"
    SC_PTM = "sc-ptm"


class RntiKind(str, enum.Enum):
    C_RNTI = "c-rnti"
    GROUP_RNTI = "group-rnti"
    MBSFN_AREA = "mbsfn-area"


class FrameConfigError(ValueError):
    pass


class ResourceShortage(RuntimeError):
    """Not enough PRBs left in the requested subframe."""


class SegmentationRequired(ValueError):
    """Payload does not fit one full-bandwidth TB at this MCS."""


def derive_total_prb(bandwidth_mhz: float) -> int:
    try:
        return PRB_BY_BANDWIDTH[float(bandwidth_mhz)]
    except KeyError:
        raise ValueError(
            f"unsupported LTE bandwidth {bandwidth_mhz} MHz; expected one of "
            f"{sorted(PRB_BY_BANDWIDTH)}"
        ) from None


@dataclass(frozen=True)
class FrameConfig:
    total_prb: int = 50
    pdcch_symbols: int = 2
    mbsfn_subframes: tuple[int, ...] = (1, 6)
    symbols_per_subframe: int = 14
    # all-PMCH frames (every subframe MBSFN) are allowed on request
    allow_any_mbsfn: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mbsfn_subframes", tuple(sorted(set(self.mbsfn_subframes))))
        if self.total_prb < 1:
            raise FrameConfigError("total_prb must be >= 1")
        if self.pdcch_symbols not in (1, 2, 3):
            raise FrameConfigError("pdcch_symbols must be 1, 2 or 3")
        if not self.symbols_per_subframe > self.pdcch_symbols:
            raise FrameConfigError("symbols_per_subframe must exceed pdcch_symbols")
        allowed = set(range(SUBFRAMES_PER_FRAME)) if self.allow_any_mbsfn else FDD_MBSFN_CAPABLE
        bad = set(self.mbsfn_subframes) - allowed
        if bad:
            raise FrameConfigError(
                f"subframes {sorted(bad)} cannot carry MBSFN (allowed {sorted(allowed)})"
            )

    def is_mbsfn(self, subframe: int) -> bool:
        return subframe % SUBFRAMES_PER_FRAME in self.mbsfn_subframes

    def eligible(self, subframe: int, kind: ChannelKind) -> bool:
        return self.is_mbsfn(subframe) == (kind is ChannelKind.PMCH)

    def eligible_count(self, kind: ChannelKind, window: int) -> int:
        """Subframes in ``[0, window)`` usable by ``kind``."""
        return sum(self.eligible(t, kind) for t in range(window))

    def data_res_per_prb(self, kind: ChannelKind) -> int:
        if kind is ChannelKind.PMCH:
            return SUBCARRIERS_PER_PRB * self.symbols_per_subframe
        return SUBCARRIERS_PER_PRB * (self.symbols_per_subframe - self.pdcch_symbols)


def tbs_bits(mcs: int, n_prb: int, cfg: FrameConfig, table: McsTable,
             kind: ChannelKind = ChannelKind.SC_PTM) -> int:
    if n_prb < 1:
        raise ValueError("n_prb must be >= 1")
    e = table[mcs]
    return math.floor(n_prb * cfg.data_res_per_prb(kind) * e.mod_order * e.code_rate)


def prbs_needed(payload_bits: int, mcs: int, cfg: FrameConfig, table: McsTable,
                kind: ChannelKind = ChannelKind.SC_PTM) -> int:
    """Smallest PRB count whose TB holds ``payload_bits``."""
    if payload_bits < 1:
        raise ValueError("payload_bits must be >= 1")
    e = table[mcs]
    per_prb = cfg.data_res_per_prb(kind) * e.mod_order * e.code_rate
    n = max(1, math.ceil(payload_bits / per_prb))
    # float guard around the floor in tbs_bits
    while n > 1 and tbs_bits(mcs, n - 1, cfg, table, kind) >= payload_bits:
        n -= 1
    while tbs_bits(mcs, n, cfg, table, kind) < payload_bits:
        n += 1
    if n > cfg.total_prb:
        raise SegmentationRequired(
            f"{payload_bits} bits exceed a {cfg.total_prb}-PRB TB at MCS {mcs}"
        )
    return n


def segment_bits(payload_bits: int, mcs: int, cfg: FrameConfig, table: McsTable,
                 kind: ChannelKind = ChannelKind.SC_PTM) -> list[int]:
    """Split a payload into sequential TB sizes that each fit the full bandwidth."""
    cap = tbs_bits(mcs, cfg.total_prb, cfg, table, kind)
    full, rest = divmod(payload_bits, cap)
    return [cap] * full + ([rest] if rest else [])


@dataclass(frozen=True)
class Allocation:
    alloc_id: int
    subframe: int
    prb_count: int
    kind: ChannelKind
    rnti_kind: RntiKind
    group_id: int | None = None


@dataclass(frozen=True)
class HarqInfo:
    process_id: int
    new_data: bool
    tb_id: int


@dataclass(frozen=True)
class DciRecord:
    rnti: int
    allocation: Allocation
    harq_infos: tuple[HarqInfo, ...]

    @property
    def m(self) -> int:
        return len(self.harq_infos)


@dataclass
class ResourceLedger:
    """PRB book-keeping for one cell.

    Subframe indices are absolute; the frame position is ``subframe % 10``.
    """

    cfg: FrameConfig
    allocations: list[Allocation] = field(default_factory=list)
    control_log: dict[int, list[DciRecord]] = field(default_factory=lambda: defaultdict(list))
    _used: dict[int, int] = field(default_factory=lambda: defaultdict(int))
    _by_group: dict = field(default_factory=lambda: defaultdict(int))
    _ids: itertools.count = field(default_factory=itertools.count)

    def remaining(self, subframe: int) -> int:
        return self.cfg.total_prb - self._used.get(subframe, 0)

    def allocated(self, subframe: int, kind: ChannelKind | None = None) -> int:
        if kind is None:
            return self._used.get(subframe, 0)
        return sum(a.prb_count for a in self.allocations
                   if a.subframe == subframe and a.kind is kind)

    def allocate(self, subframe: int, prb_count: int, kind: ChannelKind,
                 rnti_kind: RntiKind, group_id: int | None = None) -> Allocation:
        if prb_count < 1:
            raise ValueError("prb_count must be >= 1")
        if not self.cfg.eligible(subframe, kind):
            where = "MBSFN" if self.cfg.is_mbsfn(subframe) else "non-MBSFN"
            raise FrameConfigError(f"{kind.value} not allowed in {where} subframe {subframe}")
        if prb_count > self.remaining(subframe):
            raise ResourceShortage(
                f"subframe {subframe}: requested {prb_count}, {self.remaining(subframe)} left"
            )
        a = Allocation(next(self._ids), subframe, prb_count, kind, rnti_kind, group_id)
        self._used[subframe] += prb_count
        self._by_group[(kind, group_id)] += prb_count
        self.allocations.append(a)
        return a

    def emit_dci(self, alloc: Allocation, rnti: int, harq_infos: Sequence[HarqInfo]) -> DciRecord:
        harq_infos = tuple(harq_infos)
        if not harq_infos:
            raise ValueError("a DCI needs at least one HARQ info")
        tb_ids = [h.tb_id for h in harq_infos]
        if len(set(tb_ids)) != len(tb_ids):
            raise ValueError(f"duplicate component TB ids in DCI: {tb_ids}")
        rec = DciRecord(rnti, alloc, harq_infos)
        self.control_log[alloc.subframe].append(rec)
        return rec

    def group_total(self, kind: ChannelKind, group_id: int | None) -> int:
        return self._by_group.get((kind, group_id), 0)

    def total(self) -> int:
        return sum(self._used.values())

    def dci_records(self) -> list[DciRecord]:
        return [r for t in sorted(self.control_log) for r in self.control_log[t]]

    def rows(self) -> Iterable[tuple]:
        for a in self.allocations:
            yield (a.subframe, a.kind.value, a.prb_count, a.rnti_kind.value,
                   "" if a.group_id is None else a.group_id)

    def export_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEDGER_HEADER)
            w.writerows(self.rows())


LEDGER_HEADER = ("subframe", "kind", "prbs", "rnti_kind", "group_id")


def emit_dci(ledger: ResourceLedger, alloc: Allocation, rnti: int,
             harq_infos: Sequence[HarqInfo]) -> DciRecord:
    return ledger.emit_dci(alloc, rnti, harq_infos)
