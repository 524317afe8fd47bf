"""One deterministic simulation run: drop, warm-up, measured horizon, drain."""

from __future__ import annotations

import numpy as np

from ..access_strategies import (
    GroupSession,
    default_draws,
    default_fading,
    drive,
    gen_voice_traffic,
    make_scheduler,
)
from ..radio_geometry import UeDrop, build_grid, drop_ues, link_sinrs
from ..resource_frame import ResourceLedger
from .config import SimConfig
from .metrics import MetricsReport, RunTrace, compute_report, usable_prbs_per_interarrival

# named RNG substreams: (tag, entity id) under the master seed
STREAM_DROP = 0xD809
STREAM_DECODE = 0xDEC0
STREAM_FADING = 0xFAD


def substream_seed(seed: int, tag: int, *ids: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(tag, *ids))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def center_cell_groups(cfg: SimConfig):
    """Grid, stacked drop and sessions for ``groups`` groups in the centre cell.

    Each group draws its members from its own substream, so a group of size N
    is the first N UEs of the same group at any larger size.
    """
    grid = build_grid(cfg.grid.isd_m, cfg.grid.rings)
    n, g = cfg.sim.group_size, cfg.sim.groups
    drops = [drop_ues(grid, n, substream_seed(cfg.sim.seed, STREAM_DROP, k),
                      cfg.radio.shadow_std_db, cells=[0]) for k in range(g)]
    if drops:
        drop = UeDrop(np.vstack([d.positions for d in drops]),
                      np.concatenate([d.serving for d in drops]),
                      np.vstack([d.shadowing_db for d in drops]), cfg.sim.seed)
    else:
        drop = drop_ues(grid, 0, cfg.sim.seed, cells=[0])
    sessions = [GroupSession(k, 1000 + k, tuple(range(k * n, (k + 1) * n))) for k in range(g)]
    return grid, drop, sessions


def build_scheduler(cfg: SimConfig, ledger: ResourceLedger, sessions, uni, mbsfn, trace):
    return make_scheduler(
        cfg.strategy, ledger, sessions, uni, mbsfn, cfg.mcs_table(),
        shape=cfg.bler_shape(),
        draws=default_draws(substream_seed(cfg.sim.seed, STREAM_DECODE), 1 + cfg.harq.max_retx),
        trace=trace,
        fading=(default_fading(substream_seed(cfg.sim.seed, STREAM_FADING), 1 + cfg.harq.max_retx,
                               cfg.link.fading_order) if cfg.link.fading_order else None),
        target_bler=cfg.link.target_bler,
        ignore_worst_fraction=cfg.link.ignore_worst_fraction,
        ignore_worst_feedback=cfg.link.ignore_worst_feedback,
        mcs_rounds=cfg.link.mcs_rounds,
        max_retx=cfg.harq.max_retx,
        feedback_delay=cfg.harq.feedback_delay,
        max_m=cfg.ic.max_m,
        hold_subframes=cfg.ic.hold_subframes,
        mcs=cfg.pmch.mcs,
        mcch_period=cfg.pmch.mcch_period,
        rounds=1 + cfg.harq.max_retx,
    )


def run_meta(cfg: SimConfig) -> dict:
    frame = cfg.frame_config()
    eligible = frame.eligible_count(cfg.strategy.channel, cfg.traffic.period)
    return {
        "strategy": cfg.strategy.value,
        "group_size": cfg.sim.group_size,
        "groups": cfg.sim.groups,
        "seed": cfg.sim.seed,
        "warmup": cfg.sim.warmup,
        "horizon": cfg.sim.horizon,
        "period": cfg.traffic.period,
        "total_prb": frame.total_prb,
        "eligible_subframes": eligible,
        "usable_prbs": usable_prbs_per_interarrival(frame.total_prb, eligible),
    }


def simulate(cfg: SimConfig):
    """Run and return ``(report, trace, ledger)``."""
    cfg.validate()
    frame = cfg.frame_config()
    grid, drop, sessions = center_cell_groups(cfg)
    if drop.n_ues:
        uni, mbsfn = link_sinrs(grid, drop, list(range(drop.n_ues)), cfg.radio, frame.total_prb)
    else:
        uni = mbsfn = np.empty(0)
    ledger = ResourceLedger(frame)
    trace = RunTrace(run_meta(cfg))
    sched = build_scheduler(cfg, ledger, sessions, uni, mbsfn, trace.events)
    sched.start_sessions()
    span = cfg.sim.warmup + cfg.sim.horizon
    packets = [p for s in sessions for p in gen_voice_traffic(
        s, span, cfg.traffic.period, cfg.traffic.payload_bytes)]
    drive(sched, packets)
    return compute_report(trace), trace, ledger


def run(cfg: SimConfig) -> tuple[MetricsReport, RunTrace]:
    report, trace, _ = simulate(cfg)
    return report, trace
