"""Compare the averaged functions f_i with the stroboscopic averaged field g_i.

f_1 = T g_1 holds for every system. When f_1 vanishes identically the first
non-trivial coefficient also agrees, f_2 = T g_2, and one order higher when
f_1 and f_2 both vanish.
"""

import numpy as np

from avgkit import corpus
from avgkit.melnikov import averaged_f
from avgkit.strobo import first_nonvanishing, strobo_g

rng = np.random.default_rng(0)
for name in ("van_der_pol_polar", "zero_mean_cubic", "zero_mean_planar", "double_zero"):
    system = corpus.load(name)
    lo, hi = system.sample_box()
    probes = rng.uniform(lo, hi, size=(6, system.n))
    ell = first_nonvanishing(system, probes).order
    z = probes[0]
    f = averaged_f(system, z, order=ell)
    g = strobo_g(system, z, order=ell).g
    gap = np.max(np.abs(f[ell - 1] - system.T * g[ell - 1]))
    print(f"{name:18s} first non-vanishing order {ell}:  |f_{ell} - T g_{ell}| = {gap:.2e} at z = {np.round(z, 3)}")
