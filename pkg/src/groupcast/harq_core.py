"""HARQ processes for multicast transport blocks.

Chase combining is modelled by summing each UE's linear SINR over the
transmissions it has received; the decode draw of a round uses the BLER at
that accumulated SINR.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .radio_geometry import DEFAULT_SHAPE, BlerShape, LinkQuality, McsTable, bler

DEFAULT_MAX_RETX = 3
FEEDBACK_DELAY = 4


class HarqError(RuntimeError):
    pass


@dataclass(frozen=True)
class TransportBlock:
    tb_id: int
    group_id: int
    payload: bytes

    def __post_init__(self):
        if not self.payload:
            raise ValueError("empty transport block")

    @property
    def size_bits(self) -> int:
        return 8 * len(self.payload)


class Status(str, enum.Enum):
    ACTIVE = "active"
    DONE = "done"
    FAILED = "failed"


_process_ids = itertools.count(1)


@dataclass
class HarqProcess:
    process_id: int
    tb: TransportBlock
    mcs: int
    targets: np.ndarray  # sorted unique UE ids
    max_retx: int = DEFAULT_MAX_RETX
    created_at: int = 0
    tx_count: int = 0
    acc_sinr: np.ndarray = None
    pending: np.ndarray = None  # bool mask over targets
    tracked: np.ndarray = None  # targets whose feedback drives retransmission
    status: Status = Status.ACTIVE
    prb_count: int = 0
    tag: object = None  # free slot for the scheduler (packet key)

    def __post_init__(self):
        n = len(self.targets)
        if self.acc_sinr is None:
            self.acc_sinr = np.zeros(n)
        if self.pending is None:
            self.pending = np.ones(n, dtype=bool)
        if self.tracked is None:
            self.tracked = np.ones(n, dtype=bool)

    @property
    def group_id(self) -> int:
        return self.tb.group_id

    @property
    def nack_mask(self) -> np.ndarray:
        return self.pending & self.tracked

    @property
    def nack_set(self) -> frozenset[int]:
        """Tracked UEs that have not decoded yet."""
        return frozenset(self.targets[self.nack_mask].tolist())

    @property
    def nack_count(self) -> int:
        return int(self.nack_mask.sum())

    @property
    def undecoded(self) -> frozenset[int]:
        """All targets without the TB, ignored-feedback UEs included."""
        return frozenset(self.targets[self.pending].tolist())

    @property
    def delivered(self) -> int:
        return len(self.targets) - int(self.pending.sum())

    @property
    def terminal(self) -> bool:
        return self.status is not Status.ACTIVE

    def acc_sinr_db(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return 10 * np.log10(self.acc_sinr)


def start_process(tb: TransportBlock, mcs: int, targets: Iterable[int], *,
                  process_id: int | None = None, max_retx: int = DEFAULT_MAX_RETX,
                  created_at: int = 0, untracked: Iterable[int] = ()) -> HarqProcess:
    """New process; ``untracked`` UEs receive every round but their feedback is ignored."""
    t = np.unique(np.fromiter(targets, dtype=np.int64))
    if t.size == 0:
        raise ValueError("a HARQ process needs at least one target UE")
    if process_id is None:
        process_id = next(_process_ids)
    tracked = ~np.isin(t, np.fromiter(untracked, dtype=np.int64))
    if not tracked.any():
        raise ValueError("at least one target must give feedback")
    return HarqProcess(process_id, tb, mcs, t, max_retx=max_retx, created_at=created_at,
                       tracked=tracked)


def transmit_round(
    proc: HarqProcess,
    links: Mapping[int, LinkQuality] | np.ndarray,
    rng: np.random.Generator | None = None,
    *,
    table: McsTable,
    shape: BlerShape = DEFAULT_SHAPE,
    draws: np.ndarray | None = None,
    receivers: np.ndarray | None = None,
) -> dict[int, bool]:
    """One (re)transmission of ``proc``; returns ACK (True) / NACK per receiving UE.

    ``links`` is either a mapping UE -> LinkQuality or an array of linear SINRs
    aligned with ``proc.targets``.  Uniform decode draws come from ``draws``
    (aligned with targets) when given, else from ``rng``.  ``receivers``
    optionally restricts which pending targets can use this round (an
    index-coded round is useless to a UE missing two of its components).
    """
    if proc.terminal:
        raise HarqError(f"process {proc.process_id} is {proc.status.value}")
    if proc.tx_count > proc.max_retx:
        raise HarqError(f"process {proc.process_id} exhausted its retransmissions")
    if isinstance(links, Mapping):
        snr = np.array([links[int(u)].sinr_linear for u in proc.targets])
    else:
        snr = np.asarray(links, dtype=float)
    if draws is None:
        if rng is None:
            raise ValueError("need rng or draws")
        draws = rng.random(len(proc.targets))
    rx = proc.pending.copy()
    if receivers is not None:
        rx &= receivers
    proc.acc_sinr = np.where(rx, proc.acc_sinr + snr, proc.acc_sinr)
    p_err = bler(proc.mcs, 10 * np.log10(proc.acc_sinr[rx]), table, shape)
    ok = np.zeros_like(rx)
    ok[rx] = draws[rx] >= p_err
    proc.pending &= ~ok
    proc.tx_count += 1
    if not proc.nack_mask.any():
        proc.status = Status.DONE
    elif proc.tx_count == 1 + proc.max_retx:
        proc.status = Status.FAILED
    return {int(u): bool(a) for u, a, r in zip(proc.targets, ok, rx) if r}


def needs_retransmission(proc: HarqProcess) -> bool:
    return proc.status is Status.ACTIVE and proc.tx_count >= 1 and bool(proc.nack_mask.any())


@dataclass(frozen=True)
class ReceptionMatrix:
    """ACK/NACK snapshot: rows are pending processes (oldest first), columns UEs."""

    process_ids: tuple[int, ...]
    ue_ids: tuple[int, ...]
    nack: np.ndarray  # bool (rows, cols)
    tb_bytes: tuple[int, ...] = ()
    group_id: int | None = None

    @property
    def n_rows(self) -> int:
        return len(self.process_ids)

    def nack_set(self, row: int) -> frozenset[int]:
        return frozenset(u for u, x in zip(self.ue_ids, self.nack[row]) if x)

    def nack_masks(self) -> list[int]:
        """Row NACK sets as integer bitmasks over column positions."""
        n = self.nack.shape[1] if self.nack.ndim == 2 else 0
        if n <= 62:
            return [int(x) for x in self.nack.astype(np.int64) @ (np.int64(1) << np.arange(n, dtype=np.int64))]
        return [sum(1 << int(j) for j in np.flatnonzero(row)) for row in self.nack]

    @classmethod
    def from_sets(cls, nack_sets: Mapping[int, Iterable[int]], ue_ids: Sequence[int] | None = None,
                  tb_bytes: Sequence[int] = ()) -> "ReceptionMatrix":
        """Build directly from ``{process_id: nack set}`` (insertion order = age)."""
        rows = {p: frozenset(s) for p, s in nack_sets.items()}
        if ue_ids is None:
            ue_ids = sorted(set().union(*rows.values())) if rows else []
        col = {u: j for j, u in enumerate(ue_ids)}
        m = np.zeros((len(rows), len(ue_ids)), dtype=bool)
        for i, s in enumerate(rows.values()):
            for u in s:
                m[i, col[u]] = True
        return cls(tuple(rows), tuple(ue_ids), m, tuple(tb_bytes))


def build_reception_matrix(pending: Sequence[HarqProcess], group_ues: Iterable[int]) -> ReceptionMatrix:
    groups = {p.group_id for p in pending}
    if len(groups) > 1:
        raise ValueError(f"pending processes span several groups: {sorted(groups)}")
    ue_ids = tuple(sorted(int(u) for u in group_ues))
    col = {u: j for j, u in enumerate(ue_ids)}
    rows = sorted(pending, key=lambda p: (p.created_at, p.process_id))
    m = np.zeros((len(rows), len(ue_ids)), dtype=bool)
    for i, p in enumerate(rows):
        for u in p.targets[p.nack_mask]:
            m[i, col[int(u)]] = True
    return ReceptionMatrix(
        tuple(p.process_id for p in rows), ue_ids, m,
        tuple(len(p.tb.payload) for p in rows),
        next(iter(groups)) if groups else None,
    )


@dataclass
class FeedbackQueue:
    """Error-free HARQ feedback arriving ``delay`` subframes after the transmission."""

    delay: int = FEEDBACK_DELAY
    _heap: list = field(default_factory=list)
    _seq: itertools.count = field(default_factory=itertools.count)
    messages: int = 0

    def push(self, tx_subframe: int, proc: HarqProcess, acks: Mapping[int, bool]) -> None:
        self.messages += len(acks)
        heapq.heappush(self._heap, (tx_subframe + self.delay, next(self._seq), proc, dict(acks)))

    def pop_due(self, subframe: int) -> list[tuple[HarqProcess, dict[int, bool]]]:
        out = []
        while self._heap and self._heap[0][0] <= subframe:
            _, _, proc, acks = heapq.heappop(self._heap)
            out.append((proc, acks))
        return out

    def __len__(self) -> int:
        return len(self._heap)
