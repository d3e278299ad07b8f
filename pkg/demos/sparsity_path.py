"""Number of surviving joint cells along a grid of penalty values on fully dependent data.

Run: python3 demos/sparsity_path.py
"""

import numpy as np

from mvlbm import FitConfig, generate, run_sem_gibbs, table1_spec
from mvlbm.core import ari

ds, rows, _ = generate(table1_spec(300, 60, delta_dep=1.0, seed=3))
grid = [(i / 10) ** 2 / 9 for i in range(1, 10)] + [np.nextafter(1 / 9, 0)]
print("lambda    alive  row ARI")
for lam in [0.0] + grid:
    fit = run_sem_gibbs(ds, (3, 3), ((3, 3, 3, 3),) * 2, FitConfig(seed=0, lam=lam))
    aris = [ari(a, b) for a, b in zip(fit.partitions.row_labels, rows)]
    print(f"{lam:.5f}  {int(fit.alive.sum()):5d}  {min(aris):.3f}")
