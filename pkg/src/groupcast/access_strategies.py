"""The four group-dissemination methods behind one per-subframe scheduler interface.

Each scheduler owns nothing but its queues: the caller feeds packets with
:meth:`submit` and advances time with :meth:`step`.  Transmissions land in a
shared :class:`ResourceLedger` and every event is appended to a trace list
(see :class:`TraceEvent`), from which all metrics are derived.
"""

from __future__ import annotations

import enum
import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import harq_core as hq
from .index_coder import DEFAULT_MAX_M, plan_combinations
from .radio_geometry import DEFAULT_SHAPE, BlerShape, McsTable, bler, ignored_count, select_mcs
from .resource_frame import (
    ChannelKind,
    FrameConfig,
    FrameConfigError,
    HarqInfo,
    ResourceLedger,
    RntiKind,
    prbs_needed,
    segment_bits,
)

M_RNTI = 0xFFFD


class StrategyKind(str, enum.Enum):
    UNICAST = "unicast-pdsch"
    PMCH = "pmch"
    SCPTM = "sc-ptm"
    SCPTM_IC = "sc-ptm-ic"

    @property
    def channel(self) -> ChannelKind:
        return {
            StrategyKind.UNICAST: ChannelKind.PDSCH_UNICAST,
            StrategyKind.PMCH: ChannelKind.PMCH,
        }.get(self, ChannelKind.SC_PTM)


@dataclass(frozen=True)
class GroupSession:
    group_id: int
    group_rnti: int
    members: tuple[int, ...]
    serving_cell: int = 0

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"group {self.group_id} has no members")


@dataclass(frozen=True)
class GroupPacket:
    group_id: int
    seq: int
    payload: bytes
    arrival: int

    @property
    def key(self) -> tuple[int, int]:
        return (self.group_id, self.seq)

    @property
    def bits(self) -> int:
        return 8 * len(self.payload)


def voice_payload(group_id: int, seq: int, n_bytes: int) -> bytes:
    return hashlib.shake_128(f"{group_id}:{seq}".encode()).digest(n_bytes)


def gen_voice_traffic(session: GroupSession, horizon: int, period: int = 20,
                      payload_bytes: int = 40, start: int = 0) -> list[GroupPacket]:
    """``floor(horizon / period)`` packets with a per-group arrival phase."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    phase = (session.group_id * 7) % period
    return [
        GroupPacket(session.group_id, k, voice_payload(session.group_id, k, payload_bytes),
                    start + k * period + phase)
        for k in range(horizon // period)
    ]


@dataclass(frozen=True)
class TraceEvent:
    """One trace row.

    ``arrival``: count = payload bits, total = members.
    ``tx``: packets = component packet seqs, prbs, channel, m = components,
    retx = 1 for retransmissions, count = receiving UEs (feedback messages),
    total = allocation id, ref = redundant receptions avoided.
    ``packet``: count = UEs delivered, total = members, retx = retransmissions,
    ref = first transmission subframe; subframe = last successful decode.
    ``session``: m = chosen MCS, retx = 1 if infeasible, total = members.
    """

    subframe: int
    event: str
    group: int
    packets: tuple[int, ...] = ()
    prbs: int = 0
    channel: str = ""
    m: int = 0
    retx: int = 0
    count: int = 0
    total: int = 0
    ref: int = 0


DrawFn = Callable[[int, int, int], np.ndarray]


def default_draws(seed: int, rounds: int) -> DrawFn:
    """Uniform decode draws keyed by (group, packet, segment).

    Returns a ``(rounds, members)`` matrix; row r serves transmission round r.
    Every strategy sees the same draws for the same key.
    """
    def draws(group: int, seq: int, n: int, segment: int = 0) -> np.ndarray:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(0xDEC0DE, group, seq, segment))
        return np.random.default_rng(ss).random((rounds, n))
    return draws


def default_fading(seed: int, rounds: int, order: int) -> DrawFn:
    """Per-round block-fading power gains, unit mean, keyed like the decode draws.

    Gamma(order, 1/order) is the post-combining power of ``order`` independent
    Rayleigh branches.
    """
    def gains(group: int, seq: int, n: int, segment: int = 0) -> np.ndarray:
        ss = np.random.SeedSequence(entropy=seed, spawn_key=(0xFAD, group, seq, segment))
        return np.random.default_rng(ss).gamma(order, 1.0 / order, (rounds, n))
    return gains


@dataclass
class _PacketState:
    packet: GroupPacket
    procs: list = field(default_factory=list)
    first_tx: int | None = None
    last_ok: int = -1
    retx: int = 0
    closed: bool = False
    draw_rows: dict = field(default_factory=dict)
    gain_rows: dict = field(default_factory=dict)


class Scheduler:
    """Shared machinery for PDSCH-family strategies."""

    kind: StrategyKind

    def __init__(self, ledger: ResourceLedger, sessions: Sequence[GroupSession],
                 sinr_linear: np.ndarray, table: McsTable, *, shape: BlerShape = DEFAULT_SHAPE,
                 target_bler: float = 0.01, ignore_worst_fraction: float = 0.0,
                 ignore_worst_feedback: bool = False, mcs_rounds: int = 1,
                 max_retx: int = hq.DEFAULT_MAX_RETX, feedback_delay: int = hq.FEEDBACK_DELAY,
                 draws: DrawFn | None = None, seed: int = 0, fading: DrawFn | None = None,
                 trace: list[TraceEvent] | None = None):
        self.ledger = ledger
        self.fading = fading
        self.frame: FrameConfig = ledger.cfg
        self.sessions = {s.group_id: s for s in sessions}
        self.sinr = np.asarray(sinr_linear, dtype=float)
        self.table = table
        self.shape = shape
        self.target_bler = target_bler
        self.ignore_worst_fraction = ignore_worst_fraction
        self.ignore_worst_feedback = ignore_worst_feedback
        self.mcs_rounds = mcs_rounds
        self.max_retx = max_retx
        self.draws = draws or default_draws(seed, 1 + max_retx)
        self.trace = trace if trace is not None else []
        self.feedback = hq.FeedbackQueue(feedback_delay)
        self._pids = itertools.count(1)
        self._packets: dict[tuple[int, int], _PacketState] = {}
        self._new: list[hq.HarqProcess] = []  # awaiting first transmission
        self._retx: list[hq.HarqProcess] = []
        self._ready_at: dict[int, int] = {}
        self.infeasible: set[int] = set()
        self._mcs_cache: dict = {}
        self._open = 0
        self._col_pos = {g: {u: i for i, u in enumerate(s.members)} for g, s in self.sessions.items()}

    # -- public interface ---------------------------------------------------
    def submit(self, packet: GroupPacket) -> None:
        s = self.sessions[packet.group_id]
        st = _PacketState(packet)
        self._packets[packet.key] = st
        self._open += 1
        self.trace.append(TraceEvent(packet.arrival, "arrival", packet.group_id, (packet.seq,),
                                     count=packet.bits, total=len(s.members)))
        self._enqueue(st, s)

    def step(self, t: int) -> None:
        for proc, acks in self.feedback.pop_due(t):
            self._on_feedback(t, proc, acks)
        if self.frame.eligible(t, self.kind.channel):
            self._dispatch(t)

    def busy(self) -> bool:
        return bool(self._new or self._retx or len(self.feedback) or self._open)

    def start_sessions(self) -> None:
        for g, s in sorted(self.sessions.items()):
            choice = self.group_mcs(s)
            if not choice.feasible:
                self.infeasible.add(g)
            self.trace.append(TraceEvent(0, "session", g, m=choice.index,
                                         retx=int(not choice.feasible), total=len(s.members)))

    # -- helpers ------------------------------------------------------------
    def mcs_for(self, ues: Sequence[int]):
        key = tuple(ues)
        if key not in self._mcs_cache:
            sinr_db = 10 * np.log10(self.sinr[list(ues)])
            self._mcs_cache[key] = select_mcs(sinr_db, self.table, self.target_bler, self.shape,
                                              self.ignore_worst_fraction, self.mcs_rounds)
        return self._mcs_cache[key]

    def ignored_members(self, s: GroupSession) -> tuple[int, ...]:
        """Weakest members whose HARQ feedback is disregarded (empty unless enabled)."""
        if not self.ignore_worst_feedback:
            return ()
        k = ignored_count(len(s.members), self.ignore_worst_fraction)
        order = sorted(s.members, key=lambda u: (self.sinr[u], u))
        return tuple(order[:k])

    def group_mcs(self, s: GroupSession):
        return self.mcs_for(s.members)

    def _new_process(self, st: _PacketState, seg: int, bits: int, mcs: int,
                     targets: Sequence[int], untracked: Sequence[int] = ()) -> hq.HarqProcess:
        pid = next(self._pids)
        payload = st.packet.payload
        if bits < st.packet.bits:
            chunk = bits // 8
            payload = payload[seg * chunk:(seg + 1) * chunk] or payload
        tb = hq.TransportBlock(pid, st.packet.group_id, payload)
        proc = hq.start_process(tb, mcs, targets, process_id=pid, max_retx=self.max_retx,
                                created_at=st.packet.arrival, untracked=untracked)
        proc.prb_count = prbs_needed(max(bits, 1), mcs, self.frame, self.table, self.kind.channel)
        proc.tag = (st.packet.key, seg)
        st.procs.append(proc)
        return proc

    def _segments(self, bits: int, mcs: int) -> list[int]:
        return segment_bits(bits, mcs, self.frame, self.table, self.kind.channel)

    def _rnti(self, proc: hq.HarqProcess) -> tuple[int, RntiKind]:
        s = self.sessions[proc.group_id]
        if self.kind is StrategyKind.UNICAST:
            return 10_000 + int(proc.targets[0]), RntiKind.C_RNTI
        return s.group_rnti, RntiKind.GROUP_RNTI

    def _transmit(self, t: int, procs: Sequence[hq.HarqProcess], retx: bool) -> bool:
        """Allocate one resource for ``procs`` (an index-coded set when len > 1)."""
        prbs = max(p.prb_count for p in procs)
        if prbs > self.ledger.remaining(t):
            return False
        group = procs[0].group_id
        rnti, rnti_kind = self._rnti(procs[0])
        alloc = self.ledger.allocate(t, prbs, self.kind.channel, rnti_kind, group)
        self.ledger.emit_dci(alloc, rnti, [HarqInfo(p.process_id, not retx, p.tb.tb_id) for p in procs])
        receivers = 0
        others = [set(p.undecoded) for p in procs]
        for i, p in enumerate(procs):
            (key, seg) = p.tag
            st = self._packets[key]
            if st.first_tx is None:
                st.first_tx = t
            if retx:
                st.retx += 1
            if seg not in st.draw_rows:
                n = len(self.sessions[key[0]].members)
                st.draw_rows[seg] = self.draws(key[0], key[1], n, seg)
            cols = self._columns(p)
            draws = st.draw_rows[seg][p.tx_count][cols]
            links = self.sinr[p.targets]
            if self.fading is not None:
                if seg not in st.gain_rows:
                    st.gain_rows[seg] = self.fading(key[0], key[1], len(self.sessions[key[0]].members), seg)
                links = links * st.gain_rows[seg][p.tx_count][cols]
            rx = None
            if len(procs) > 1:
                # a coded round only helps UEs missing this component alone
                blocked = set().union(*(o for j, o in enumerate(others) if j != i))
                rx = ~np.isin(p.targets, list(blocked))
            receivers += int((p.pending if rx is None else p.pending & rx).sum())
            acks = hq.transmit_round(p, links, table=self.table, shape=self.shape,
                                     draws=draws, receivers=rx)
            if any(acks.values()):
                st.last_ok = max(st.last_ok, t)
            self.feedback.push(t, p, acks)
        n_members = len(self.sessions[group].members)
        avoided = (len(procs) - 1) * n_members
        self.trace.append(TraceEvent(
            t, "tx", group, tuple(p.tag[0][1] for p in procs), prbs, self.kind.channel.value,
            len(procs), int(retx), receivers, alloc.alloc_id, avoided))
        return True

    def _columns(self, p: hq.HarqProcess) -> np.ndarray:
        pos = self._col_pos[p.group_id]
        return np.array([pos[int(u)] for u in p.targets])

    def _on_feedback(self, t: int, proc: hq.HarqProcess, acks: dict) -> None:
        if hq.needs_retransmission(proc):
            self._ready_at[proc.process_id] = t
            self._retx.append(proc)
        else:
            self._maybe_close(t, self._packets[proc.tag[0]])

    def _maybe_close(self, t: int, st: _PacketState) -> None:
        if st.closed or not all(p.terminal for p in st.procs):
            return
        members = self.sessions[st.packet.group_id].members
        delivered = self._delivered(st, members)
        st.closed = True
        self._open -= 1
        self.trace.append(TraceEvent(
            max(st.last_ok, st.first_tx), "packet", st.packet.group_id, (st.packet.seq,),
            retx=st.retx, count=delivered, total=len(members), ref=st.first_tx))

    def _delivered(self, st: _PacketState, members: Sequence[int]) -> int:
        missing = set()
        for p in st.procs:
            missing |= p.undecoded
        return len(members) - len(missing)

    def _dispatch(self, t: int) -> None:
        self._dispatch_retx(t)
        self._dispatch_new(t)

    def _dispatch_retx(self, t: int) -> None:
        waiting = []
        for p in sorted(self._retx, key=lambda p: (self._ready_at[p.process_id], p.created_at,
                                                    p.process_id)):
            if not self.ledger.remaining(t) or not self._transmit(t, [p], retx=True):
                waiting.append(p)
        self._retx = waiting

    def _dispatch_new(self, t: int) -> None:
        waiting = []
        for p in self._new:
            if not self.ledger.remaining(t) or not self._transmit(t, [p], retx=False):
                waiting.append(p)
        self._new = waiting

    def _enqueue(self, st: _PacketState, s: GroupSession) -> None:
        raise NotImplementedError

    # test hook: place a process that has already been transmitted into the retx pool
    def inject_pending(self, proc: hq.HarqProcess, packet: GroupPacket, ready_at: int = 0) -> None:
        if packet.key not in self._packets:
            self._packets[packet.key] = _PacketState(packet, first_tx=ready_at)
            self._open += 1
        st = self._packets[packet.key]
        proc.tag = (packet.key, len(st.procs))
        st.procs.append(proc)
        self._ready_at[proc.process_id] = ready_at
        self._retx.append(proc)


class UnicastScheduler(Scheduler):
    """Duplicate delivery: one C-RNTI HARQ process per member, per-UE MCS."""

    kind = StrategyKind.UNICAST

    def start_sessions(self) -> None:
        for g, s in sorted(self.sessions.items()):
            choices = [self.mcs_for([u]) for u in s.members]
            if not all(c.feasible for c in choices):
                self.infeasible.add(g)
            self.trace.append(TraceEvent(0, "session", g, m=min(c.index for c in choices),
                                         retx=int(g in self.infeasible), total=len(s.members)))

    def _enqueue(self, st: _PacketState, s: GroupSession) -> None:
        for u in s.members:
            mcs = self.mcs_for([u]).index
            for seg, bits in enumerate(self._segments(st.packet.bits, mcs)):
                proc = self._new_process(st, seg, bits, mcs, [u])
                proc.tag = (st.packet.key, seg)
                self._new.append(proc)

    def _delivered(self, st: _PacketState, members: Sequence[int]) -> int:
        failed = {int(p.targets[0]) for p in st.procs if p.undecoded}
        return len(members) - len(failed)


class ScptmScheduler(Scheduler):
    """Single-cell point-to-multipoint: one group-RNTI process per TB.

    With ``index_coding`` the NACKed processes of each group are pooled and
    dispatched through :func:`plan_combinations`; a process that finds no
    partner is retransmitted alone once it has waited ``hold_subframes``.
    """

    def __init__(self, *args, index_coding: bool = False, max_m: int = DEFAULT_MAX_M,
                 hold_subframes: int = 0, **kw):
        super().__init__(*args, **kw)
        self.index_coding = index_coding
        self.max_m = max_m
        self.hold = hold_subframes
        self._idle: dict[int, tuple[frozenset, int]] = {}
        self.kind = StrategyKind.SCPTM_IC if index_coding else StrategyKind.SCPTM

    def _enqueue(self, st: _PacketState, s: GroupSession) -> None:
        mcs = self.group_mcs(s).index
        ignored = self.ignored_members(s)
        for seg, bits in enumerate(self._segments(st.packet.bits, mcs)):
            self._new.append(self._new_process(st, seg, bits, mcs, s.members, ignored))

    def _dispatch_retx(self, t: int) -> None:
        if not self.index_coding:
            return super()._dispatch_retx(t)
        by_group: dict[int, list[hq.HarqProcess]] = {}
        for p in self._retx:
            by_group.setdefault(p.group_id, []).append(p)
        waiting = []
        for g in sorted(by_group):
            pending = by_group[g]
            ids = frozenset(p.process_id for p in pending)
            idle = self._idle.get(g)
            if idle is not None and idle[0] == ids and t < idle[1]:
                # same pool, every plan singleton and still inside its hold window
                waiting.extend(pending)
                continue
            matrix = hq.build_reception_matrix(pending, self.sessions[g].members)
            lookup = {p.process_id: p for p in pending}
            blocked = False
            held = []
            for plan in plan_combinations(matrix, self.max_m):
                procs = [lookup[i] for i in plan.components]
                due = plan.m > 1 or any(t - self._ready_at[p.process_id] >= self.hold for p in procs)
                if due and self._transmit(t, procs, retx=True):
                    continue
                blocked |= due
                held.extend(procs)
            waiting.extend(held)
            if blocked or not held:
                self._idle.pop(g, None)
            else:
                self._idle[g] = (frozenset(p.process_id for p in held),
                                 min(self._ready_at[p.process_id] for p in held) + self.hold)
        self._retx = waiting


class PmchScheduler:
    """MBSFN broadcast: one robust-MCS shot per packet, no HARQ.

    Packets become schedulable at the next MCCH modification-period boundary
    and are concatenated into MBSFN subframes in arrival order.
    """

    kind = StrategyKind.PMCH

    def __init__(self, ledger: ResourceLedger, sessions: Sequence[GroupSession],
                 mbsfn_sinr_linear: np.ndarray, table: McsTable, *, shape: BlerShape = DEFAULT_SHAPE,
                 mcs: int | None = None, mcch_period: int = 512, draws: DrawFn | None = None,
                 seed: int = 0, rounds: int = 1 + hq.DEFAULT_MAX_RETX,
                 fading: DrawFn | None = None, trace: list[TraceEvent] | None = None):
        if not ledger.cfg.mbsfn_subframes:
            raise FrameConfigError("PMCH needs at least one MBSFN subframe")
        self.ledger = ledger
        self.frame = ledger.cfg
        self.sessions = {s.group_id: s for s in sessions}
        self.sinr = np.asarray(mbsfn_sinr_linear, dtype=float)
        self.table = table
        self.shape = shape
        self.mcs = table.entries[0].index if mcs is None else mcs
        self.mcch_period = mcch_period
        self.draws = draws or default_draws(seed, rounds)
        self.fading = fading
        self.trace = trace if trace is not None else []
        self._queue: list[tuple[int, GroupPacket]] = []
        self.infeasible: set[int] = set()
        self.waits: list[int] = []

    def start_sessions(self) -> None:
        for g, s in sorted(self.sessions.items()):
            self.trace.append(TraceEvent(0, "session", g, m=self.mcs, total=len(s.members)))

    def packet_prbs(self, bits: int) -> int:
        return prbs_needed(bits, self.mcs, self.frame, self.table, ChannelKind.PMCH)

    def submit(self, packet: GroupPacket) -> None:
        s = self.sessions[packet.group_id]
        self.trace.append(TraceEvent(packet.arrival, "arrival", packet.group_id, (packet.seq,),
                                     count=packet.bits, total=len(s.members)))
        ready = -(-packet.arrival // self.mcch_period) * self.mcch_period
        self._queue.append((ready, packet))

    def step(self, t: int) -> None:
        if not self.frame.is_mbsfn(t):
            return
        waiting = []
        for ready, pkt in self._queue:
            if ready > t or not self._send(t, pkt):
                waiting.append((ready, pkt))
        self._queue = waiting

    def busy(self) -> bool:
        return bool(self._queue)

    def _send(self, t: int, pkt: GroupPacket) -> bool:
        s = self.sessions[pkt.group_id]
        segs = segment_bits(pkt.bits, self.mcs, self.frame, self.table, ChannelKind.PMCH)
        prbs = [self.packet_prbs(b) for b in segs]
        if sum(prbs) > self.ledger.remaining(t):
            return False
        ok = np.ones(len(s.members), dtype=bool)
        links = self.sinr[list(s.members)]
        for seg, n in enumerate(prbs):
            alloc = self.ledger.allocate(t, n, ChannelKind.PMCH, RntiKind.MBSFN_AREA, pkt.group_id)
            self.ledger.emit_dci(alloc, M_RNTI, [HarqInfo(0, True, pkt.seq)])
            gain = 1.0 if self.fading is None else self.fading(pkt.group_id, pkt.seq, len(s.members), seg)[0]
            p_err = bler(self.mcs, 10 * np.log10(links * gain), self.table, self.shape)
            ok &= self.draws(pkt.group_id, pkt.seq, len(s.members), seg)[0] >= p_err
            self.trace.append(TraceEvent(t, "tx", pkt.group_id, (pkt.seq,), n, ChannelKind.PMCH.value,
                                         1, 0, 0, alloc.alloc_id))
        self.waits.append(t - pkt.arrival)
        self.trace.append(TraceEvent(t, "packet", pkt.group_id, (pkt.seq,), count=int(ok.sum()),
                                     total=len(s.members), ref=t))
        return True


def make_scheduler(kind: StrategyKind | str, ledger: ResourceLedger, sessions: Sequence[GroupSession],
                   unicast_sinr: np.ndarray, mbsfn_sinr: np.ndarray, table: McsTable, **opts):
    """Build the scheduler for ``kind``; ``opts`` are forwarded where they apply."""
    kind = StrategyKind(kind)
    common = {k: opts[k] for k in ("shape", "draws", "seed", "trace") if k in opts}
    if kind is StrategyKind.PMCH:
        extra = {k: opts[k] for k in ("mcs", "mcch_period", "rounds", "fading") if k in opts}
        return PmchScheduler(ledger, sessions, mbsfn_sinr, table, **common, **extra)
    harq = {k: opts[k] for k in ("target_bler", "ignore_worst_fraction", "ignore_worst_feedback",
                                 "mcs_rounds", "max_retx", "feedback_delay", "fading") if k in opts}
    if kind is StrategyKind.UNICAST:
        return UnicastScheduler(ledger, sessions, unicast_sinr, table, **common, **harq)
    ic = {k: opts[k] for k in ("max_m", "hold_subframes") if k in opts}
    return ScptmScheduler(ledger, sessions, unicast_sinr, table, **common, **harq,
                          index_coding=kind is StrategyKind.SCPTM_IC, **ic)


def drive(scheduler, packets: Iterable[GroupPacket], start: int = 0, limit: int = 1_000_000) -> int:
    """Run ``scheduler`` until all ``packets`` are handled; returns the end subframe."""
    pending = sorted(packets, key=lambda p: (p.arrival, p.group_id, p.seq))
    i, t = 0, start
    while i < len(pending) or scheduler.busy():
        while i < len(pending) and pending[i].arrival <= t:
            scheduler.submit(pending[i])
            i += 1
        scheduler.step(t)
        t += 1
        if t - start > limit:
            raise RuntimeError("scheduler did not drain")
    return t


# -- single-packet entry points ---------------------------------------------

def _single(kind, packet, session, links, ledger, table, seed, **opts) -> list[TraceEvent]:
    if packet.group_id != session.group_id:
        raise ValueError("packet does not belong to the session")
    links = np.asarray(links, dtype=float)
    trace: list[TraceEvent] = []
    sched = make_scheduler(kind, ledger, [session], links, links, table, seed=seed,
                           trace=trace, **opts)
    sched.start_sessions()
    drive(sched, [packet], start=packet.arrival)
    return trace


def schedule_unicast(packet, session, links, ledger, table, seed=0, **opts) -> list[TraceEvent]:
    return _single(StrategyKind.UNICAST, packet, session, links, ledger, table, seed, **opts)


def schedule_pmch(packet, session, mbsfn_links, ledger, table, seed=0, **opts) -> list[TraceEvent]:
    return _single(StrategyKind.PMCH, packet, session, mbsfn_links, ledger, table, seed, **opts)


def schedule_scptm(packet, session, links, ledger, table, seed=0, ic=False, **opts) -> list[TraceEvent]:
    kind = StrategyKind.SCPTM_IC if ic else StrategyKind.SCPTM
    return _single(kind, packet, session, links, ledger, table, seed, **opts)


@dataclass(frozen=True)
class PacketOutcome:
    group: int
    seq: int
    delivered_fraction: float
    subframes_to_delivery: int | None
    prbs: float
    retransmissions: int


def delivery_report(events: Sequence[TraceEvent]) -> dict[tuple[int, int], PacketOutcome]:
    """Per-packet outcome; raises if any arrived packet has not reached a terminal state."""
    arrivals = {(e.group, e.packets[0]): e for e in events if e.event == "arrival"}
    done = {(e.group, e.packets[0]): e for e in events if e.event == "packet"}
    open_ = set(arrivals) - set(done)
    if open_:
        raise RuntimeError(f"packets not terminal yet: {sorted(open_)}")
    prbs = {k: 0.0 for k in arrivals}
    for e in events:
        if e.event == "tx":
            for seq in e.packets:
                prbs[(e.group, seq)] += e.prbs / e.m
    out = {}
    for k, a in arrivals.items():
        d = done[k]
        full = d.count == d.total
        out[k] = PacketOutcome(k[0], k[1], d.count / d.total,
                               d.subframe - a.subframe if full else None, prbs[k], d.retx)
    return out
