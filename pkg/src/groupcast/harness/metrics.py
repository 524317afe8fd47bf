"""Metrics derived from a run trace.

``compute_report`` is a pure function of a :class:`RunTrace`; nothing else
from the simulation is consulted, so a trace re-read from CSV reproduces the
report exactly.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from ..access_strategies import TraceEvent


@dataclass
class RunTrace:
    meta: dict
    events: list[TraceEvent] = field(default_factory=list)


@dataclass(frozen=True)
class MetricsReport:
    strategy: str
    group_size: int
    groups: int
    seed: int
    packets: int
    mean_prbs_per_packet: float
    usable_prbs: int
    group_capacity: int | None
    group_capacity_exact: float | None
    cell_capacity_unique_bps: float
    cell_capacity_aggregate_bps: float
    retx_prb_share: float
    delay_mean: float | None
    delay_p95: float | None
    first_tx_wait_mean: float | None
    residual_loss: float
    ic_plans: int
    ic_mean_m: float | None
    redundant_avoided: int
    feedback_messages: int
    infeasible_groups: int
    pmch_wasted_prbs: int
    efficiency_bits_per_prb: float | None

    def as_row(self) -> dict:
        return asdict(self)


REPORT_FIELDS = tuple(MetricsReport.__dataclass_fields__)


def group_capacity(mean_prbs_per_packet: float, usable_prbs: float) -> int:
    """Groups a cell can carry: usable PRBs per inter-arrival over PRBs per packet."""
    if not mean_prbs_per_packet > 0:
        raise ZeroDivisionError("mean PRBs per packet must be positive")
    return math.floor(usable_prbs / mean_prbs_per_packet + 1e-9)


def usable_prbs_per_interarrival(total_prb: int, eligible_subframes: int) -> int:
    return total_prb * eligible_subframes


def cell_capacity(delivered_bits: float, horizon_subframes: int) -> float:
    """Delivered bits per second over a horizon of 1 ms subframes."""
    if horizon_subframes <= 0:
        raise ValueError("measured horizon must be positive")
    return delivered_bits / (horizon_subframes * 1e-3)


def compute_report(trace: RunTrace) -> MetricsReport:
    meta = trace.meta
    lo, hi = meta["warmup"], meta["warmup"] + meta["horizon"]
    arrivals = {}
    for e in trace.events:
        if e.event == "arrival" and lo <= e.subframe < hi:
            arrivals[(e.group, e.packets[0])] = e
    done = {(e.group, e.packets[0]): e for e in trace.events
            if e.event == "packet" and (e.group, e.packets[0]) in arrivals}

    prbs = Fraction(0)
    retx_prbs = Fraction(0)
    feedback = 0
    plans = 0
    m_sum = 0
    retx_tx = 0
    avoided = 0
    pmch_used = defaultdict(int)
    for e in trace.events:
        if e.event != "tx":
            continue
        mine = sum(1 for s in e.packets if (e.group, s) in arrivals)
        if e.channel == "pmch":
            pmch_used[e.subframe] += e.prbs
        if not mine:
            continue
        share = Fraction(e.prbs * mine, e.m)
        prbs += share
        feedback += e.count
        if e.retx:
            retx_prbs += share
            retx_tx += 1
            m_sum += e.m
            if e.m > 1:
                plans += 1
                avoided += e.ref
    n = len(arrivals)
    mean_prbs = float(prbs / n) if n else 0.0
    usable = meta["usable_prbs"]
    cap = group_capacity(mean_prbs, usable) if mean_prbs > 0 else None
    cap_exact = usable / mean_prbs if mean_prbs > 0 else None

    bits_unique = 0
    bits_aggregate = 0
    members_total = 0
    delivered_total = 0
    delays, waits = [], []
    for key, a in arrivals.items():
        d = done.get(key)
        members_total += a.total
        if d is None:
            continue
        delivered_total += d.count
        bits_aggregate += a.count * d.count
        waits.append(d.ref - a.subframe)
        if d.count == d.total:
            bits_unique += a.count
            delays.append(d.subframe - a.subframe)

    wasted = sum(meta["total_prb"] - used for used in pmch_used.values()) \
        if meta["strategy"] == "pmch" else 0
    consumed = float(prbs) + wasted
    infeasible = sum(e.retx for e in trace.events if e.event == "session")
    return MetricsReport(
        strategy=meta["strategy"],
        group_size=meta["group_size"],
        groups=meta["groups"],
        seed=meta["seed"],
        packets=n,
        mean_prbs_per_packet=mean_prbs,
        usable_prbs=usable,
        group_capacity=cap,
        group_capacity_exact=cap_exact,
        cell_capacity_unique_bps=cell_capacity(bits_unique, meta["horizon"]),
        cell_capacity_aggregate_bps=cell_capacity(bits_aggregate, meta["horizon"]),
        retx_prb_share=float(retx_prbs / prbs) if prbs else 0.0,
        delay_mean=float(np.mean(delays)) if delays else None,
        delay_p95=float(np.percentile(delays, 95)) if delays else None,
        first_tx_wait_mean=float(np.mean(waits)) if waits else None,
        residual_loss=1 - delivered_total / members_total if members_total else 0.0,
        ic_plans=plans,
        ic_mean_m=m_sum / retx_tx if retx_tx else None,
        redundant_avoided=avoided,
        feedback_messages=feedback,
        infeasible_groups=infeasible,
        pmch_wasted_prbs=wasted,
        efficiency_bits_per_prb=bits_aggregate / consumed if consumed else None,
    )


def packet_prbs(trace: RunTrace) -> dict[tuple[int, int], Fraction]:
    """Exact PRB attribution per packet (coded retransmissions split evenly)."""
    out: dict[tuple[int, int], Fraction] = defaultdict(Fraction)
    for e in trace.events:
        if e.event == "tx":
            for s in e.packets:
                out[(e.group, s)] += Fraction(e.prbs, e.m)
    return dict(out)
