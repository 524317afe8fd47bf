"""Deployment geometry, propagation and the link-to-BLER abstraction.

Sites sit on a hexagonal lattice; each site's coverage region is the
hexagon of points closer to it than to any other lattice point (apothem
``isd/2``).  Path loss follows the ITU-R M.2135 rural-macro (RMa) LOS
model::

    PL1(d) = 20 log10(40 pi d fc / 3) + min(0.03 h^1.72, 10) log10(d)
             - min(0.044 h^1.72, 14.77) + 0.002 log10(h) d
    PL2(d) = PL1(d_bp) + 40 log10(d / d_bp)              for d > d_bp
    d_bp   = 2 pi h_bs h_ut fc_hz / c

with ``d`` in meters, ``fc`` in GHz and ``h`` the average building height.
Defaults: h_bs = 35 m, h_ut = 1.5 m, h = 5 m, d clamped below at 35 m.

BLER curves are shifted logistics in dB::

    BLER(s) = 1 / (1 + A exp(k (s - s_thr)))

with ``A`` and ``k`` fixed by two anchors (0.10 at ``s_thr`` and 0.01 at
``s_thr + 2 dB`` by default).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np
from scipy.special import expit

SPEED_OF_LIGHT = 299_792_458.0
D_MIN_M = 35.0

UNICAST = "unicast"
MBSFN = "mbsfn"


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CellGrid:
    centers: np.ndarray  # (n_cells, 2) meters
    isd_m: float
    rings: int

    @property
    def n_cells(self) -> int:
        return len(self.centers)

    @property
    def cell_ids(self) -> range:
        return range(self.n_cells)


def build_grid(isd_m: float, rings: int) -> CellGrid:
    """Hexagonal lattice of ``1 + 3 rings (rings + 1)`` sites centred on the origin.

    Cell 0 is the centre site; the remaining ids run ring by ring.
    """
    if not isd_m > 0:
        raise ValueError(f"isd_m must be positive, got {isd_m}")
    if rings < 0:
        raise ValueError(f"rings must be >= 0, got {rings}")
    axial = []
    for q in range(-rings, rings + 1):
        for r in range(-rings, rings + 1):
            ring = max(abs(q), abs(r), abs(q + r))
            if ring <= rings:
                axial.append((ring, q, r))
    axial.sort()
    pts = np.array(
        [[isd_m * (q + r / 2.0), isd_m * r * math.sqrt(3) / 2.0] for _, q, r in axial],
        dtype=float,
    ).reshape(-1, 2)
    return CellGrid(centers=pts, isd_m=float(isd_m), rings=int(rings))


_HEX_NORMALS = np.array(
    [[math.cos(k * math.pi / 3), math.sin(k * math.pi / 3)] for k in range(6)]
)


def in_hexagon(points: np.ndarray, center: np.ndarray, isd_m: float) -> np.ndarray:
    """Boolean mask of points inside the coverage hexagon of a site."""
    rel = np.atleast_2d(points) - center
    return np.all(rel @ _HEX_NORMALS.T <= isd_m / 2.0 * (1 + 1e-12), axis=1)


def _sample_hexagon(rng: np.random.Generator, n: int, isd_m: float) -> np.ndarray:
    # fixed-size batches keep the accepted sequence prefix-stable in n
    out = np.empty((0, 2))
    half_w = isd_m / 2.0
    half_h = isd_m / math.sqrt(3)
    while len(out) < n:
        cand = rng.uniform(-1.0, 1.0, size=(256, 2)) * (half_w, half_h)
        out = np.vstack([out, cand[in_hexagon(cand, np.zeros(2), isd_m)]])
    return out[:n]


@dataclass(frozen=True)
class UeDrop:
    positions: np.ndarray  # (n_ue, 2)
    serving: np.ndarray  # (n_ue,) serving cell id
    shadowing_db: np.ndarray  # (n_ue, n_cells)
    seed: int

    @property
    def n_ues(self) -> int:
        return len(self.positions)

    @property
    def ue_ids(self) -> range:
        return range(self.n_ues)


def drop_ues(
    grid: CellGrid,
    per_cell: int,
    seed: int,
    shadow_std_db: float = 8.0,
    cells: Iterable[int] | None = None,
) -> UeDrop:
    """Uniformly drop ``per_cell`` UEs in each listed cell (all cells by default).

    Every cell uses its own RNG substream, so the first ``k`` UEs of a cell do
    not depend on ``per_cell`` or on which other cells are dropped.
    """
    if per_cell < 0:
        raise ValueError("per_cell must be >= 0")
    cells = list(grid.cell_ids if cells is None else cells)
    pos, serving, shadow = [], [], []
    for c in cells:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(c,))
        geo_ss, sh_ss = ss.spawn(2)
        pts = _sample_hexagon(np.random.default_rng(geo_ss), per_cell, grid.isd_m)
        pos.append(pts + grid.centers[c])
        serving.append(np.full(per_cell, c, dtype=int))
        sh = np.random.default_rng(sh_ss).standard_normal((per_cell, grid.n_cells))
        shadow.append(sh * shadow_std_db)
    if not cells:
        return UeDrop(np.empty((0, 2)), np.empty(0, dtype=int), np.empty((0, grid.n_cells)), seed)
    return UeDrop(
        positions=np.vstack(pos),
        serving=np.concatenate(serving),
        shadowing_db=np.vstack(shadow),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Propagation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadioParams:
    carrier_ghz: float = 0.8
    bandwidth_mhz: float = 10.0
    tx_dbm: float = 46.0
    antenna_gain_dbi: float = 15.0
    noise_figure_db: float = 9.0
    h_bs_m: float = 35.0
    h_ut_m: float = 1.5
    building_h_m: float = 5.0
    d_min_m: float = D_MIN_M
    diversity_gain_db: float = 3.0
    shadow_std_db: float = 8.0

    def noise_dbm(self, n_prb: int) -> float:
        # thermal noise over the occupied PRB bandwidth
        return -174.0 + 10 * math.log10(n_prb * 180e3) + self.noise_figure_db


def path_loss_db(
    distance_m,
    carrier_ghz: float,
    h_bs_m: float = 35.0,
    h_ut_m: float = 1.5,
    building_h_m: float = 5.0,
    d_min_m: float = D_MIN_M,
):
    """RMa LOS path loss in dB; accepts scalars or arrays."""
    d = np.maximum(np.asarray(distance_m, dtype=float), d_min_m)
    h = building_h_m
    d_bp = 2 * math.pi * h_bs_m * h_ut_m * carrier_ghz * 1e9 / SPEED_OF_LIGHT

    def pl1(x):
        return (
            20 * np.log10(40 * math.pi * x * carrier_ghz / 3)
            + min(0.03 * h**1.72, 10.0) * np.log10(x)
            - min(0.044 * h**1.72, 14.77)
            + 0.002 * math.log10(h) * x
        )

    out = np.where(d <= d_bp, pl1(d), pl1(d_bp) + 40 * np.log10(d / d_bp))
    return float(out) if out.ndim == 0 else out


def rx_power_dbm(tx_dbm, antenna_gain_dbi, pl_db, shadow_db):
    return tx_dbm + antenna_gain_dbi - pl_db + shadow_db


def rx_power_matrix(grid: CellGrid, drop: UeDrop, params: RadioParams = RadioParams()) -> np.ndarray:
    """Received power in dBm for every (UE, cell) pair."""
    dist = np.linalg.norm(drop.positions[:, None, :] - grid.centers[None, :, :], axis=2)
    pl = path_loss_db(
        dist, params.carrier_ghz, params.h_bs_m, params.h_ut_m, params.building_h_m, params.d_min_m
    )
    return rx_power_dbm(params.tx_dbm, params.antenna_gain_dbi, pl, drop.shadowing_db)


@dataclass(frozen=True)
class LinkQuality:
    sinr_linear: float
    mode: str = UNICAST

    def __post_init__(self):
        if not self.sinr_linear > 0:
            raise ValueError("sinr_linear must be positive")
        if self.mode not in (UNICAST, MBSFN):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def sinr_db(self) -> float:
        return 10 * math.log10(self.sinr_linear)

    @classmethod
    def from_db(cls, sinr_db: float, mode: str = UNICAST) -> "LinkQuality":
        return cls(10 ** (sinr_db / 10), mode)


def sinr_from_rx(rx_dbm_row: np.ndarray, serving: Iterable[int], noise_dbm: float,
                 mode: str, diversity_gain_db: float = 0.0) -> float:
    serving = list(serving)
    if not serving:
        raise ValueError("serving set must be nonempty")
    if mode == UNICAST and len(serving) != 1:
        raise ValueError("unicast mode takes exactly one serving cell")
    lin = 10 ** (np.asarray(rx_dbm_row, dtype=float) / 10)
    mask = np.zeros(len(lin), dtype=bool)
    mask[serving] = True
    signal = lin[mask].sum()
    interference = 0.0 if mode == MBSFN else lin[~mask].sum()
    ratio = signal / (interference + 10 ** (noise_dbm / 10))
    return float(ratio * 10 ** (diversity_gain_db / 10))


def sinr(
    ue: int,
    serving: Iterable[int],
    grid: CellGrid,
    drop: UeDrop,
    noise_dbm: float,
    mode: str = UNICAST,
    params: RadioParams = RadioParams(),
) -> LinkQuality:
    """Per-UE SINR.

    In ``mbsfn`` mode every cell of ``serving`` adds to the signal and no cell
    interferes; in ``unicast`` mode the single serving cell is the signal and all
    other cells interfere.  The transmit-diversity offset is applied in both.
    """
    rx = rx_power_matrix(grid, _single(drop, ue), params)[0]
    return LinkQuality(sinr_from_rx(rx, serving, noise_dbm, mode, params.diversity_gain_db), mode)


def _single(drop: UeDrop, ue: int) -> UeDrop:
    return UeDrop(drop.positions[ue:ue + 1], drop.serving[ue:ue + 1],
                  drop.shadowing_db[ue:ue + 1], drop.seed)


def link_sinrs(grid: CellGrid, drop: UeDrop, ues: Sequence[int], params: RadioParams,
               n_prb: int) -> tuple[np.ndarray, np.ndarray]:
    """Linear unicast and MBSFN SINR arrays for the given UEs (vectorised)."""
    sub = UeDrop(drop.positions[ues], drop.serving[ues], drop.shadowing_db[ues], drop.seed)
    lin = 10 ** (rx_power_matrix(grid, sub, params) / 10)
    noise = 10 ** (params.noise_dbm(n_prb) / 10)
    div = 10 ** (params.diversity_gain_db / 10)
    own = lin[np.arange(len(ues)), sub.serving]
    uni = own / (lin.sum(axis=1) - own + noise) * div
    mbsfn = lin.sum(axis=1) / noise * div
    return uni, mbsfn


# ---------------------------------------------------------------------------
# MCS table and BLER
# ---------------------------------------------------------------------------

class McsEntry(NamedTuple):
    index: int
    mod_order: int
    code_rate: float
    sinr_threshold_db: float

    @property
    def efficiency(self) -> float:
        return self.mod_order * self.code_rate


@dataclass(frozen=True)
class McsTable:
    entries: tuple[McsEntry, ...]
    _pos: dict = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.entries:
            raise ValueError("empty MCS table")
        for a, b in zip(self.entries, self.entries[1:]):
            if not (a.index < b.index and a.efficiency < b.efficiency
                    and a.sinr_threshold_db < b.sinr_threshold_db):
                raise ValueError(f"MCS entries {a.index} and {b.index} are not strictly ordered")
        for e in self.entries:
            if not 0 < e.code_rate <= 1:
                raise ValueError(f"code rate out of range for MCS {e.index}")
        object.__setattr__(self, "_pos", {e.index: i for i, e in enumerate(self.entries)})

    def __getitem__(self, mcs: int) -> McsEntry:
        try:
            return self.entries[self._pos[mcs]]
        except KeyError:
            raise KeyError(f"unknown MCS index {mcs}") from None

    def __contains__(self, mcs) -> bool:
        return mcs in self._pos

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def indices(self) -> list[int]:
        return [e.index for e in self.entries]

    @property
    def thresholds_db(self) -> np.ndarray:
        return np.array([e.sinr_threshold_db for e in self.entries])


# QPSK 1/8 .. 64QAM 3/4; thresholds are single-shot 10% BLER points (configuration).
DEFAULT_MCS_ENTRIES = (
    McsEntry(0, 2, 1 / 8, -5.0),
    McsEntry(1, 2, 1 / 4, -2.5),
    McsEntry(2, 2, 1 / 2, 1.0),
    McsEntry(3, 2, 3 / 4, 3.5),
    McsEntry(4, 4, 1 / 2, 6.5),
    McsEntry(5, 4, 3 / 4, 10.0),
    McsEntry(6, 6, 2 / 3, 14.0),
    McsEntry(7, 6, 3 / 4, 16.5),
)


def default_mcs_table() -> McsTable:
    return McsTable(DEFAULT_MCS_ENTRIES)


@dataclass(frozen=True)
class BlerShape:
    """Two-anchor logistic: ``anchor_bler`` at threshold, ``tail_bler`` at threshold + gap."""

    anchor_bler: float = 0.10
    tail_bler: float = 0.01
    gap_db: float = 2.0

    def __post_init__(self):
        if not (0 < self.tail_bler < self.anchor_bler < 1 and self.gap_db > 0):
            raise ValueError("BLER shape anchors must satisfy 0 < tail < anchor < 1 and gap > 0")

    @property
    def log_a(self) -> float:
        return math.log(1 / self.anchor_bler - 1)

    @property
    def slope(self) -> float:
        return (math.log(1 / self.tail_bler - 1) - self.log_a) / self.gap_db


DEFAULT_SHAPE = BlerShape()


def bler(mcs: int, eff_sinr_db, table: McsTable, shape: BlerShape = DEFAULT_SHAPE):
    """Single-transmission block error probability of ``mcs`` at ``eff_sinr_db``."""
    thr = table[mcs].sinr_threshold_db
    x = shape.slope * (np.asarray(eff_sinr_db, dtype=float) - thr) + shape.log_a
    out = expit(-x)
    return float(out) if out.ndim == 0 else out


def bler_all(eff_sinr_db, table: McsTable, shape: BlerShape = DEFAULT_SHAPE) -> np.ndarray:
    """BLER for every table entry; shape ``(len(table),) + shape(eff_sinr_db)``."""
    s = np.asarray(eff_sinr_db, dtype=float)
    thr = table.thresholds_db.reshape((-1,) + (1,) * s.ndim)
    return expit(-(shape.slope * (s - thr) + shape.log_a))


class McsChoice(NamedTuple):
    index: int
    feasible: bool


def ignored_count(n: int, ignore_worst_fraction: float) -> int:
    """How many of ``n`` links rate adaptation leaves out (never all of them)."""
    return max(0, min(int(math.floor(ignore_worst_fraction * n + 1e-9)), n - 1))


def governing_sinr_db(sinrs_db: Sequence[float], ignore_worst_fraction: float = 0.0) -> float:
    """The link that rate adaptation must satisfy.

    With ``ignore_worst_fraction`` > 0 the ``floor(fraction * n)`` weakest links
    are left out (at least one link always remains).
    """
    s = np.sort(np.asarray(sinrs_db, dtype=float))
    if s.size == 0:
        raise ValueError("select_mcs needs at least one link")
    return float(s[ignored_count(s.size, ignore_worst_fraction)])


def residual_bler_all(eff_sinr_db: float, table: McsTable, shape: BlerShape = DEFAULT_SHAPE,
                      rounds: int = 1) -> np.ndarray:
    """Per-MCS probability of failing ``rounds`` chase-combined transmissions.

    Round j decodes at j times the per-round linear SINR, with independent draws.
    """
    out = np.ones(len(table))
    for j in range(1, rounds + 1):
        out = out * bler_all(eff_sinr_db + 10 * math.log10(j), table, shape)
    return out


def select_mcs(
    links: Iterable[LinkQuality | float],
    table: McsTable,
    target_bler: float = 0.01,
    shape: BlerShape = DEFAULT_SHAPE,
    ignore_worst_fraction: float = 0.0,
    rounds: int = 1,
) -> McsChoice:
    """Highest-rate MCS meeting ``target_bler`` at the governing link.

    With ``rounds=1`` the target applies to a single transmission; larger values
    apply it to the residual after that many chase-combined transmissions.
    ``links`` may hold :class:`LinkQuality` objects or plain SINR values in dB.
    Falls back to the most robust entry with ``feasible=False``.
    """
    if not 0 < target_bler < 1:
        raise ValueError("target_bler must lie in (0, 1)")
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    sinrs = [l.sinr_db if isinstance(l, LinkQuality) else float(l) for l in links]
    s = governing_sinr_db(sinrs, ignore_worst_fraction)
    # slack absorbs rounding at the calibration anchor itself
    ok = np.nonzero(residual_bler_all(s, table, shape, rounds) <= target_bler + 1e-12)[0]
    if ok.size == 0:
        return McsChoice(table.entries[0].index, False)
    return McsChoice(table.entries[ok[-1]].index, True)
