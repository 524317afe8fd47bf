"""Index-coded HARQ retransmission: combination planning and XOR coding.

Two pending HARQ processes of one group can share a retransmission when no
UE has NACKed both; every NACK UE then holds all other components and
recovers its missing TB by XOR.  Choosing combinations is a proper colouring
of the conflict graph (edge = shared NACK UE).  ``plan_combinations`` is a
first-fit greedy; ``oracle_min_partition`` is an exact backtracking search
used to measure it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .harq_core import ReceptionMatrix, TransportBlock

DEFAULT_MAX_M = 4
ORACLE_MAX_ROWS = 12


@dataclass(frozen=True)
class ConflictGraph:
    vertices: tuple[int, ...]
    edges: frozenset[tuple[int, int]]  # (a, b) with a < b

    def neighbours(self, v: int) -> set[int]:
        return {b if a == v else a for a, b in self.edges if v in (a, b)}

    def has_edge(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.edges


@dataclass(frozen=True)
class CombinationPlan:
    components: tuple[int, ...]  # process ids, ascending
    coded_length: int  # bytes
    union_nack: frozenset[int]

    @property
    def m(self) -> int:
        return len(self.components)


@dataclass(frozen=True)
class CodedTb:
    data: bytes
    component_ids: tuple[int, ...]
    component_lengths: tuple[int, ...]
    group_id: int | None = None

    @property
    def length(self) -> int:
        return len(self.data)


def _check_rows(matrix: ReceptionMatrix) -> list[int]:
    masks = matrix.nack_masks()
    for pid, mask in zip(matrix.process_ids, masks):
        if mask == 0:
            raise ValueError(f"process {pid} has no NACK UE and is not pending")
    return masks


def build_conflict_graph(matrix: ReceptionMatrix) -> ConflictGraph:
    masks = _check_rows(matrix)
    ids = matrix.process_ids
    edges = set()
    for i in range(len(ids)):
        for j in range(i + 1, len(ids)):
            if masks[i] & masks[j]:
                a, b = ids[i], ids[j]
                edges.add((min(a, b), max(a, b)))
    return ConflictGraph(tuple(ids), frozenset(edges))


def plan_combinations(matrix: ReceptionMatrix, max_m: int = DEFAULT_MAX_M) -> list[CombinationPlan]:
    """Greedy first-fit partition of the pending rows into combinable sets.

    Rows are visited in matrix order (oldest first); each joins the earliest
    open plan it does not conflict with and that still has room.
    """
    if max_m < 1:
        raise ValueError("max_m must be >= 1")
    masks = _check_rows(matrix)
    lengths = matrix.tb_bytes or (0,) * matrix.n_rows
    bins: list[list[int]] = []
    unions: list[int] = []
    for row, mask in enumerate(masks):
        for b, u in enumerate(unions):
            if not u & mask and len(bins[b]) < max_m:
                bins[b].append(row)
                unions[b] |= mask
                break
        else:
            bins.append([row])
            unions.append(mask)
    plans = []
    for rows, u in zip(bins, unions):
        union = frozenset(matrix.ue_ids[j] for j in range(len(matrix.ue_ids)) if u >> j & 1)
        plans.append(CombinationPlan(
            components=tuple(sorted(matrix.process_ids[r] for r in rows)),
            coded_length=max(lengths[r] for r in rows),
            union_nack=union,
        ))
    return plans


def _as_array(payload: bytes, length: int) -> np.ndarray:
    out = np.zeros(length, dtype=np.uint8)
    out[:len(payload)] = np.frombuffer(payload, dtype=np.uint8)
    return out


def xor_encode(components: Sequence[TransportBlock]) -> CodedTb:
    if not components:
        raise ValueError("nothing to encode")
    ids = [tb.tb_id for tb in components]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate component TB ids: {ids}")
    length = max(len(tb.payload) for tb in components)
    acc = np.zeros(length, dtype=np.uint8)
    for tb in components:
        acc ^= _as_array(tb.payload, length)
    return CodedTb(acc.tobytes(), tuple(ids), tuple(len(tb.payload) for tb in components),
                   components[0].group_id)


def xor_decode(coded: CodedTb, side_info: Sequence[TransportBlock]) -> TransportBlock:
    """Recover the one component of ``coded`` missing from ``side_info``."""
    have = [tb.tb_id for tb in side_info]
    foreign = set(have) - set(coded.component_ids)
    if foreign:
        raise ValueError(f"side information holds non-component TBs {sorted(foreign)}")
    if len(set(have)) != len(have):
        raise ValueError("duplicate TBs in side information")
    missing = [i for i in coded.component_ids if i not in set(have)]
    if len(missing) != 1:
        raise ValueError(f"side information must miss exactly one component, misses {len(missing)}")
    acc = np.frombuffer(coded.data, dtype=np.uint8).copy()
    for tb in side_info:
        acc ^= _as_array(tb.payload, coded.length)
    tb_id = missing[0]
    n = coded.component_lengths[coded.component_ids.index(tb_id)]
    return TransportBlock(tb_id, coded.group_id, acc[:n].tobytes())


def side_information(plan: CombinationPlan, nack_sets: dict[int, frozenset[int]], ue: int) -> set[int]:
    """Components of ``plan`` that ``ue`` already holds."""
    return {p for p in plan.components if ue not in nack_sets[p]}


def decodable(plan: CombinationPlan, nack_sets: dict[int, frozenset[int]]) -> bool:
    """Every NACK UE of the plan holds all components but its own."""
    for u in plan.union_nack:
        if len(plan.components) - len(side_information(plan, nack_sets, u)) != 1:
            return False
    return True


def oracle_min_partition(matrix: ReceptionMatrix, max_m: int | None = None) -> int:
    """Exact minimum number of combinable sets covering all rows.

    Backtracking over colour assignments, rows taken most-constrained first.
    Exponential; limited to ``ORACLE_MAX_ROWS`` rows.
    """
    n = matrix.n_rows
    if n > ORACLE_MAX_ROWS:
        raise ValueError(f"oracle limited to {ORACLE_MAX_ROWS} rows, got {n}")
    if n == 0:
        return 0
    nack = matrix.nack
    if not nack.any(axis=1).all():
        raise ValueError("every row needs a NACK UE")
    adj = [[bool((nack[i] & nack[j]).any()) and i != j for j in range(n)] for i in range(n)]
    order = sorted(range(n), key=lambda i: -sum(adj[i]))
    cap = n if max_m is None else max_m

    def colourable(k: int) -> bool:
        colour = [-1] * n
        size = [0] * k

        def place(pos: int) -> bool:
            if pos == n:
                return True
            v = order[pos]
            used_new = False
            for c in range(k):
                if size[c] == 0:
                    # empty colours are interchangeable: try only one
                    if used_new:
                        continue
                    used_new = True
                if size[c] >= cap:
                    continue
                if any(adj[v][w] and colour[w] == c for w in range(n)):
                    continue
                colour[v] = c
                size[c] += 1
                if place(pos + 1):
                    return True
                colour[v] = -1
                size[c] -= 1
            return False

        return place(0)

    k = max(1, -(-n // cap))
    while not colourable(k):
        k += 1
    return k
