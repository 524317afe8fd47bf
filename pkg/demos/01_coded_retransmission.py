"""Two pending HARQ processes, one retransmission.

Three UEs listen to one group. Process 1 was missed by UE 3 only, process 4 by
UE 2 only. Each UE that needs a retransmission already holds the other TB, so
a single XOR-coded TB serves both.
"""

from groupcast.harq_core import ReceptionMatrix, TransportBlock
from groupcast.index_coder import build_conflict_graph, plan_combinations, xor_decode, xor_encode

matrix = ReceptionMatrix.from_sets({1: {3}, 4: {2}}, ue_ids=[1, 2, 3], tb_bytes=[40, 40])
print("NACK matrix (rows = processes, cols = UEs 1..3)")
print(matrix.nack.astype(int))

graph = build_conflict_graph(matrix)
print("conflict edges:", sorted(graph.edges) or "none")

plans = plan_combinations(matrix)
for plan in plans:
    print(f"plan components={plan.components} m={plan.m} serves UEs {sorted(plan.union_nack)}")

# the actual bytes
tb1 = TransportBlock(1, 0, b"frame 17 (process 1)".ljust(40, b"."))
tb4 = TransportBlock(4, 0, b"late frame 20, proc 4".ljust(40, b"."))
coded = xor_encode([tb1, tb4])
print("coded TB:", coded.data[:16].hex(), "...")

# UE 2 holds TB 1 and wants TB 4; UE 3 the other way round
print("UE 2 recovers:", xor_decode(coded, [tb1]).payload[:21])
print("UE 3 recovers:", xor_decode(coded, [tb4]).payload[:21])
