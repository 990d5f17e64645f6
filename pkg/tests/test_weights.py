import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basisdiag.errors import EmptySpectrum, NonpositiveWeight, SpectrumTouchesLine
from basisdiag.weights import (
    WeightTrace,
    a2_check,
    cell_centres,
    delta_eval,
    integrability_check,
    interval_constant,
    poisson_constant,
    sample_trace,
    synthetic_trace,
    trace_W,
    trace_phi_over_w,
    trace_w,
    trace_w_star,
)
from basisdiag.detfun import Spectrum

from conftest import make_model, s1_zeros


def fake_spectrum(zeros):
    zeros = np.asarray(zeros, dtype=complex)
    return Spectrum(zeros, (-1, 1, -1, 1), np.ones_like(zeros), np.zeros(zeros.size), zeros.size)


def test_cell_centres_avoid_origin():
    x = cell_centres(10.0, 64)
    assert x.size == 64 and not np.any(x == 0)
    assert x[0] == pytest.approx(-10 + 10 / 64)


def test_trace_needs_enough_samples():
    with pytest.raises(ValueError):
        sample_trace(np.ones_like, 1.0, 16)


def test_s1_traces_are_constant(s1):
    for trace in (trace_w(s1, 50, 256), trace_w_star(s1, 50, 256)):
        assert np.allclose(trace.values, s1.a, rtol=1e-10)
    assert trace_w_star(s1, 50, 256).extras["sign_gap"] < 1e-10


def test_traces_at_origin_are_vector_norms(s3):
    # x = 0 is the only sample of a one-point-centred window
    x0 = np.array([0.0])
    w = trace_w(s3, 1.0, 64).source(x0)[0]
    ws = trace_w_star(s3, 1.0, 64).source(x0)[0]
    assert w == pytest.approx(s3.g.norm() ** 2, rel=1e-14)
    assert ws == pytest.approx(s3.f.norm() ** 2, rel=1e-14)


def test_s3_trace_is_positive_and_grid_stable():
    coarse = trace_w(make_model(g="exp_t", n=121), 40, 128)
    fine = trace_w(make_model(g="exp_t", n=241), 40, 128)
    assert np.all(coarse.values > 0) and np.all(np.isfinite(coarse.values))
    assert np.max(np.abs(fine.values / coarse.values - 1)) < 0.01


def test_w_star_sign_gap_reported(s3):
    trace = trace_w_star(s3, 20, 128)
    assert trace.extras["sign_gap"] > 0
    assert trace.extras["alternative_values"].shape == trace.values.shape


def test_delta_values():
    spec = fake_spectrum([1 + 1j, -2 - 1j])
    assert delta_eval(spec, 1 + 1j) == 0
    assert delta_eval(spec, 1 + 2j) == pytest.approx(0.5)
    assert delta_eval(spec, 1e6 + 1j) == pytest.approx(1 - 1e-6, abs=1e-9)
    with pytest.raises(EmptySpectrum):
        delta_eval(fake_spectrum([]), 0j)


@given(
    st.complex_numbers(max_magnitude=50),
    st.complex_numbers(max_magnitude=50),
)
@settings(max_examples=100, deadline=None)
def test_delta_is_lipschitz_and_below_one(z1, z2):
    spec = fake_spectrum([1 + 1j, -2 - 1j, 10 + 0.5j])
    d1, d2 = delta_eval(spec, z1), delta_eval(spec, z2)
    assert 0 <= d1 < 1 and 0 <= d2 < 1
    assert abs(d1 - d2) <= abs(z1 - z2) + 1e-12


def test_W_rejects_real_zero(s1):
    with pytest.raises(SpectrumTouchesLine):
        trace_W(s1, fake_spectrum([1 + 1e-9j]), 10, 64)


def test_W_matches_w_star_on_s1(s1, s1_wide):
    W = trace_W(s1, s1_wide, 25, 512)
    ws = trace_w_star(s1, 25, 512)
    q = W.values / ws.values
    # equivalence up to one constant: q / C lies in [0.2, 5] for C = sqrt(min max)
    C = np.sqrt(q.min() * q.max())
    assert q.min() / C >= 0.2 and q.max() / C <= 5


def test_W_closed_form_on_s1(s1, s1_wide):
    W = trace_W(s1, s1_wide, 25, 256)
    zeros = s1_zeros(np.arange(-20, 20))
    d = np.min(np.abs(W.x[:, None] - zeros[None, :]), axis=1)
    phi2 = np.abs((1 - 1j) + 1j * np.exp(1j * W.x)) ** 2
    expected = phi2 / (s1.a * (d / (1 + d)) ** 2)
    assert np.allclose(W.values, expected, rtol=1e-9)


def test_W_refinement_keeps_shared_samples(s1, s1_wide):
    coarse = trace_W(s1, s1_wide, 20, 128)
    fine = trace_W(s1, s1_wide, 20, 384)
    # every third centre of the finer grid is a centre of the coarse one
    assert np.allclose(fine.x[1::3], coarse.x, rtol=0, atol=1e-12)
    assert np.allclose(fine.values[1::3], coarse.values, rtol=1e-10)


def test_W_has_no_spike_near_zeros(s1, s1_wide):
    W = trace_W(s1, s1_wide, 25, 2048)
    for lam in s1_zeros(range(4)):
        i = int(np.argmin(np.abs(W.x - lam.real)))
        local = W.values[max(0, i - 20) : i + 21]
        assert W.values[i] <= 10 * np.median(local)


def test_phi_over_w_trace(s1):
    trace = trace_phi_over_w(s1, 20, 128)
    assert trace.provenance == "phi_over_w_sq"
    expected = np.abs((1 - 1j) + 1j * np.exp(1j * trace.x)) ** 2
    assert np.allclose(trace.values, expected, rtol=1e-10)


def test_a2_constant_weight():
    rep = a2_check(synthetic_trace(np.ones_like, 30))
    assert rep.constant_interval == pytest.approx(1, abs=1e-9)
    assert rep.constant_poisson == pytest.approx(1, abs=1e-9)
    assert rep.verdict == "stable"


def test_a2_power_weights():
    assert a2_check(synthetic_trace(lambda x: np.abs(x) ** 0.5, 50)).verdict == "stable"
    rep = a2_check(synthetic_trace(lambda x: np.abs(x) ** 1.5, 50))
    assert rep.verdict == "growing"
    assert max(rep.growth_trend["ratios"]) >= 1.3


def test_a2_zero_offset_rule():
    rep = a2_check(synthetic_trace(lambda x: np.where(np.abs(x) < 1, 0.0, 1.0), 20))
    assert rep.offset > 0


def test_a2_rejects_nonpositive_weight():
    x = cell_centres(5, 64)
    trace = WeightTrace(5.0, x, np.where(x > 0, 1.0, 0.0), "w_sq")
    with pytest.raises(NonpositiveWeight):
        a2_check(trace)
    trace = WeightTrace(5.0, x, np.full(64, np.nan), "w_sq")
    with pytest.raises(NonpositiveWeight):
        a2_check(trace)


def test_a2_without_source_is_inconclusive():
    x = cell_centres(5, 64)
    rep = a2_check(WeightTrace(5.0, x, 1 + x**2, "w_sq"))
    assert rep.verdict == "inconclusive" and rep.constant_interval > 1


@given(
    st.lists(st.floats(1e-3, 1e3), min_size=64, max_size=200),
)
@settings(max_examples=60, deadline=None)
def test_a2_constants_at_least_one(values):
    v = np.array(values)
    ci = interval_constant(v)
    R = 10.0
    cp, _ = poisson_constant(WeightTrace(R, cell_centres(R, v.size), v, "synthetic"))
    assert ci >= 1 - 1e-12 and cp >= 1 - 1e-12
    if np.ptp(v) > 1e-6 * v.max():
        # a nonconstant weight has a block whose product exceeds one
        assert ci > 1 + 1e-12 or cp > 1 + 1e-12


def test_integrability_constant_weight():
    rep = integrability_check(synthetic_trace(np.ones_like, 100, 8192))
    assert rep["direct"]["R"] == pytest.approx(np.pi, rel=0.02)
    assert rep["direct"]["verdict"] == "convergent"


def test_integrability_s1(s1):
    rep = integrability_check(trace_w(s1, 100, 4096))
    assert rep["direct"]["2R"] == pytest.approx(np.pi * s1.a, rel=0.01)
    assert rep["reciprocal"]["2R"] == pytest.approx(np.pi / s1.a, rel=0.01)


def test_integrability_split_verdict():
    rep = integrability_check(synthetic_trace(lambda x: 1 + x**2, 50))
    assert rep["direct"]["verdict"] == "divergent"
    assert rep["reciprocal"]["verdict"] == "convergent"
