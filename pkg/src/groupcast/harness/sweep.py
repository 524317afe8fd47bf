"""Cross-product sweeps over strategy, group size and seed.

Per-run rows are followed by one summary row per (strategy, group size):
seed-averaged means, a 95% Student-t half-width on the group capacity, and
the SC-PTM-IC over SC-PTM capacity ratio on the SC-PTM-IC summary rows.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from ..access_strategies import StrategyKind
from .config import SimConfig
from .export import rows_to_csv
from .metrics import MetricsReport
from .simulation import run

METRICS = (
    "packets", "mean_prbs_per_packet", "usable_prbs", "group_capacity", "group_capacity_exact",
    "cell_capacity_unique_bps", "cell_capacity_aggregate_bps", "retx_prb_share",
    "delay_mean", "delay_p95", "residual_loss", "ic_plans", "ic_mean_m",
    "redundant_avoided", "infeasible_groups", "efficiency_bits_per_prb",
)
SWEEP_COLUMNS = ("kind", "strategy", "group_size", "seed", *METRICS,
                 "group_capacity_ci95", "ic_ratio", "ic_ratio_exact")
SWEEP_HEADER = ",".join(SWEEP_COLUMNS)


class SweepError(RuntimeError):
    def __init__(self, key, cause):
        self.key = key
        super().__init__(f"run {key} failed: {cause}")


@dataclass
class SweepResult:
    runs: dict[tuple[str, int, int], MetricsReport]
    summary: list[dict]

    def rows(self) -> list[dict]:
        out = []
        for (s, n, seed), r in self.runs.items():
            row = {c: None for c in SWEEP_COLUMNS}
            row.update(kind="run", strategy=s, group_size=n, seed=seed,
                       **{k: getattr(r, k) for k in METRICS})
            out.append(row)
        return out + self.summary

    def to_csv(self) -> str:
        return rows_to_csv(SWEEP_COLUMNS, ([row[c] for c in SWEEP_COLUMNS] for row in self.rows()))

    def mean(self, strategy: str, group_size: int, metric: str = "group_capacity"):
        for row in self.summary:
            if row["strategy"] == strategy and row["group_size"] == group_size:
                return row[metric]
        raise KeyError((strategy, group_size))


def ci95_half_width(values: Sequence[float]) -> float | None:
    n = len(values)
    if n < 2:
        return None
    return float(stats.t.ppf(0.975, n - 1) * np.std(values, ddof=1) / math.sqrt(n))


def _mean(values):
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _one(cfg: SimConfig) -> MetricsReport:
    return run(cfg)[0]


def sweep(base: SimConfig, group_sizes: Sequence[int], strategies: Sequence[str | StrategyKind],
          seeds: Sequence[int], workers: int = 1) -> SweepResult:
    """Run the full cross product; row order is independent of ``workers``."""
    if not (group_sizes and strategies and seeds):
        raise ValueError("group_sizes, strategies and seeds must be nonempty")
    names = [StrategyKind(s).value for s in strategies]
    keys = [(s, int(n), int(sd)) for s in names for n in group_sizes for sd in seeds]
    cfgs = []
    for s, n, sd in keys:
        try:
            cfgs.append(base.with_updates({"sim.strategy": s, "sim.group_size": n, "sim.seed": sd}))
        except ValueError as exc:
            raise SweepError((s, n, sd), exc) from exc
    reports = []
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            futures = [pool.submit(_one, c) for c in cfgs]
            for key, fut in zip(keys, futures):
                try:
                    reports.append(fut.result())
                except Exception as exc:
                    raise SweepError(key, exc) from exc
    else:
        for key, c in zip(keys, cfgs):
            try:
                reports.append(_one(c))
            except Exception as exc:
                raise SweepError(key, exc) from exc
    runs = dict(zip(keys, reports))
    return SweepResult(runs, summarize(runs, names, group_sizes, seeds))


def summarize(runs, strategies, group_sizes, seeds) -> list[dict]:
    rows = {}
    for s in strategies:
        for n in group_sizes:
            reps = [runs[(s, int(n), int(sd))] for sd in seeds]
            row = {c: None for c in SWEEP_COLUMNS}
            row.update(kind="summary", strategy=s, group_size=int(n))
            for k in METRICS:
                row[k] = _mean([getattr(r, k) for r in reps])
            caps = [r.group_capacity for r in reps if r.group_capacity is not None]
            row["group_capacity_ci95"] = ci95_half_width(caps)
            rows[(s, int(n))] = row
    ic, plain = StrategyKind.SCPTM_IC.value, StrategyKind.SCPTM.value
    for n in group_sizes:
        a, b = rows.get((ic, int(n))), rows.get((plain, int(n)))
        if a is None or b is None:
            continue
        for col, metric in (("ic_ratio", "group_capacity"), ("ic_ratio_exact", "group_capacity_exact")):
            if a[metric] is not None and b[metric]:
                a[col] = a[metric] / b[metric]
    return list(rows.values())
