"""
A2 constants under window doubling
==================================

A weight is in A2 when averages of v and 1/v over every interval stay
balanced.  Only a window [-R, R] can be sampled, so membership is judged by
whether the constant settles when R doubles.
"""

import numpy as np

from basisdiag import a2_check, integrability_check, synthetic_trace

gallery = {
    "constant": lambda x: np.ones_like(x),
    "|x|^0.5": lambda x: np.abs(x) ** 0.5,
    "|x|^0.9": lambda x: np.abs(x) ** 0.9,
    "|x|^1.5": lambda x: np.abs(x) ** 1.5,
    "1 + x^2": lambda x: 1 + x**2,
}

for name, v in gallery.items():
    rep = a2_check(synthetic_trace(v, 50))
    ci, cp = rep.constant_interval, rep.constant_poisson
    r = rep.growth_trend["ratios"]
    print(f"{name:>9}: interval {ci:8.3f}  poisson {cp:8.3f}  2R/R {r[0]:.3f} {r[1]:.3f}  {rep.verdict}")

# the weighted integrals of v and 1/v against 1 / (1 + x^2)
rep = integrability_check(synthetic_trace(gallery["1 + x^2"], 50))
print("1 + x^2 direct:", rep["direct"]["verdict"], " reciprocal:", rep["reciprocal"]["verdict"])
