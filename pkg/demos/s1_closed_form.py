"""
The integration operator with f = g = 1
=======================================

Walks through the smallest model with a closed-form answer: the
determinant is (1 - i) + i exp(iz), every zero sits on the line
Im z = -ln(2)/2, and all weights are constant.
"""

import numpy as np

from basisdiag import (
    DetFunction,
    EigenFamily,
    PerturbedModel,
    a2_check,
    build_integration_operator,
    find_spectrum,
    frame_report,
    trace_W,
    trace_w,
    uniform_minimality,
    vector_from_tag,
)

# discretize J_1 on 201 Chebyshev points and attach f = g = 1
B = build_integration_operator(1.0, 201)
one = vector_from_tag(B.grid, "one")
model = PerturbedModel(B, one, one)
det = DetFunction(model)

# the determinant against its closed form
z = 2 + 0.5j
print("phi(2 + 0.5i)  numeric:", det(z))
print("               exact:  ", (1 - 1j) + 1j * np.exp(1j * z))

# zeros by the argument principle, then Newton
spec = find_spectrum(det, (-60, 60, -2, 2))
k = np.round((spec.zeros.real - np.pi / 4) / (2 * np.pi))
exact = np.pi / 4 + 2 * np.pi * k - 0.5j * np.log(2)
print(f"{len(spec)} zeros, worst error {np.max(np.abs(spec.zeros - exact)):.1e}")

# |g(x)|^2 is the squared norm of exp(ixt), so w^2 = 1 on the real line
w = trace_w(model, 30, 256)
print("w^2 range:", w.values.min(), w.values.max())

# W^2 = |phi|^2 / (w^2 delta^2) is not constant but it is an A2 weight
rep = a2_check(trace_W(model, spec, 15, 512))
print("A2 for W^2:", rep.verdict, "ratios", np.round(rep.growth_trend["ratios"], 3))

# the eigenvectors exp(i lambda_k t) form a Riesz basis: the Gram trend is flat
family = EigenFamily(model, spec, det)
frames = frame_report(family)
print("Gram trend (size, m, M):", [(s, round(m, 3), round(M, 3)) for s, m, M in frames.trend])
print("frame verdict:", frames.verdict)
print("uniform minimality ratio:", round(uniform_minimality(family).ratio, 6))
