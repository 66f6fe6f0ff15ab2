"""Observe the predicted powers of eps numerically.

The order study fits the residual of the truncated series for the time-T map,
which should fall like eps^(k+1). The closeness study compares the full and
averaged solutions over times of order 1/eps, where the gap should fall like
eps^k for an averaged equation truncated at order k.
"""

import numpy as np

from avgkit import corpus
from avgkit.studies import closeness_study, order_study

eps_list = 10.0 ** -np.arange(2.0, 3.6, 0.5)
for name, z in (("linear_forced", [0.5]), ("duffing_forced", [0.3, -0.2]), ("planar_cubic", [0.2, 0.6])):
    system = corpus.load(name)
    study = order_study(system, z, eps_list)
    print(f"order study  {name:15s} k={system.k}: slope {study.slope:.3f} (expected {study.expected_slope})")

for k in (1, 2):
    study = closeness_study(corpus.load("quadratic_forced"), [0.5], [0.04, 0.02, 0.01, 0.005], order=k)
    devs = ", ".join(f"{d:.2e}" for d in study.deviations)
    print(f"closeness    quadratic_forced truncated at {k}: deviations [{devs}], slope {study.slope:.3f}")
