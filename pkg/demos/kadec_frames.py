"""
Gram trends of shifted exponentials
===================================

The family exp(i (k + delta sign k) t) on [0, 2 pi] stays a Riesz basis for
small shifts and loses it at delta = 1/4.  A finite Gram matrix cannot see
the limit, but the trend of its smallest eigenvalue can.
"""

import numpy as np

from basisdiag import ExponentialFamily, frame_report

for delta in (0.0, 0.1, 0.2, 0.25):
    fam = ExponentialFamily.symmetric(256, delta, signed=True)
    rep = frame_report(fam)
    trend = ", ".join(f"{m:.3f}" for _, m, _ in rep.trend)
    print(f"delta={delta:<5} m_N over N=64,128,256: {trend}   -> {rep.verdict}")

# delta = 0.2 is flagged too, although it is a Riesz basis: its m_N still
# drifts down at N <= 256 at nearly the same logarithmic rate, so the trend
# verdict cannot separate it from the critical shift at this size

# at delta = 1/4 the decay is only logarithmic, so halving m_N needs far
# more than a fourfold increase of N
ms = []
Ns = (64, 256, 1024)
for N in Ns:
    G = ExponentialFamily.symmetric(N, 0.25).gram()
    ms.append(np.linalg.eigvalsh(G)[0])
print("delta=0.25 m_N at N =", Ns, ":", np.round(ms, 4))
print("m_N * log N:", np.round(np.array(ms) * np.log(Ns), 3))
