"""Transport and moment bounds between mu x L and mu x K on a small grid.

K is a discretized Gaussian kernel, so it has no certified T2 constant.
An empirical constant is computed by probing each row with tilted and
competing measures, and the coupling chain is checked with it.
"""

import numpy as np

from bridgebound.bounds import default_probes, empirical_t2_constant, verify_theorem1
from bridgebound.suites import random_discrete_triple

rng = np.random.default_rng(3)
mu, K, L, desc = random_discrete_triple(rng)
rho_hat = empirical_t2_constant(K, default_probes(K, L))
print(f"grid of {desc['n']} points, L is {desc['L_kind']}; empirical rho = {rho_hat:.4f}")
print(f"(continuum constant |tau| = {desc['K']['tau'][0][0]:.4f})\n")

for r in verify_theorem1(mu, K, L, rho_hat, flags=("empirical",)):
    print(f"{r.name:<15} {r.lhs:12.5e} <= {r.rhs:12.5e}   {'pass' if r.passed else 'FAIL'}")
