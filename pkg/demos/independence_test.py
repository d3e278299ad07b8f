"""Permutation test of independent row clusterings on an independent and a dependent pair.

Run: python3 demos/independence_test.py [B]
"""

import sys

import numpy as np

from mvlbm import FitConfig, generate, permutation_test, run_sem_gibbs, table1_spec

B = int(sys.argv[1]) if len(sys.argv) > 1 else 100

for delta in (0.0, 0.875):
    ds, _, _ = generate(table1_spec(300, 60, delta, seed=11))
    # marginal single-view fits, as the test plugs in per-view estimates
    fits = [run_sem_gibbs(ds.subset([v]), (3,), ((3, 3, 3, 3),), FitConfig(seed=v)) for v in (0, 1)]
    res = permutation_test(fits[0], fits[1], ds, B=B, seed=0)
    print(f"delta={delta}: log-ratio {res.log_lambda:.3f}, p={res.p_value:.3f}, "
          f"largest permuted {res.permutation_stats.max():.3f}")
    print("  coupled pi estimate:")
    print(np.round(res.pi_hat, 3))
