"""Where the SINR of a centre-cell group comes from, and what MCS it gets.

19 cells, 1732 m apart, RMa LOS path loss at 800 MHz and 8 dB shadowing.
Unicast SINR treats every other cell as interference; MBSFN SINR adds them up.
"""

import numpy as np

from groupcast.radio_geometry import (
    RadioParams,
    build_grid,
    default_mcs_table,
    drop_ues,
    link_sinrs,
    path_loss_db,
    select_mcs,
)

for d in (100, 500, 880, 1000, 2000):
    print(f"path loss at {d:5d} m: {path_loss_db(d, 0.8):6.1f} dB")

grid = build_grid(1732, 2)
drop = drop_ues(grid, 2000, seed=7, cells=[0])
params = RadioParams()
uni, mbsfn = link_sinrs(grid, drop, list(range(drop.n_ues)), params, 50)
uni_db, mbsfn_db = 10 * np.log10(uni), 10 * np.log10(mbsfn)

print("\nSINR percentiles (dB)      5%    50%    95%")
print("unicast               " + " ".join(f"{x:6.1f}" for x in np.percentile(uni_db, [5, 50, 95])))
print("MBSFN (19 cells)      " + " ".join(f"{x:6.1f}" for x in np.percentile(mbsfn_db, [5, 50, 95])))
print(f"share of UEs below the most robust MCS threshold: {np.mean(uni_db < -5):.1%}")

# the group MCS is set by the weakest member, so it falls with group size
table = default_mcs_table()
rng = np.random.default_rng(0)
print("\ngroup size  mean MCS  infeasible groups")
for n in (1, 2, 4, 8, 16, 32):
    picks = [select_mcs(rng.choice(uni_db, n, replace=False), table) for _ in range(400)]
    print(f"{n:10d}  {np.mean([p.index for p in picks]):8.2f}  {np.mean([not p.feasible for p in picks]):17.1%}")
