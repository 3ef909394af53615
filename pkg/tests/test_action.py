import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forced_escape.action import (
    closed_form_correction,
    delta_S,
    delta_S_curve,
    fourier_integral,
    fourier_magnitude,
    minimize_over_t0,
    stationarity_residual,
    total_rate_exponent,
)
from forced_escape.errors import NegativeExponent, ResolutionWarning
from forced_escape.model import AdditiveSinusoid, GeneralPeriodic, ParametricSinusoid

pytestmark = pytest.mark.invariant
W0 = math.sqrt(2)


def test_zero_amplitude_gives_zero(dw_orbits):
    _, up, _ = dw_orbits
    for cls in (AdditiveSinusoid, ParametricSinusoid):
        f = cls(0.0, 1.3)
        assert delta_S(up, f, 0.7) == 0.0
        assert minimize_over_t0(up, f).deltaS_e == 0.0


@given(t0=st.floats(0, 20))
@settings(max_examples=15, deadline=None)
def test_delta_S_periodic_in_t0(dw_orbits, t0):
    _, up, _ = dw_orbits
    f = ParametricSinusoid(1.0, W0, 0.3)
    a, b = delta_S(up, f, t0), delta_S(up, f, t0 + f.period)
    assert abs(a - b) <= 1e-10 * max(1.0, abs(a))


def test_direct_quadrature_matches_fourier_form(dw_orbits):
    _, up, _ = dw_orbits
    f = AdditiveSinusoid(1.0, W0, 0.0)
    I = fourier_integral(up, "linear", W0).weighted
    assert delta_S(up, f, 0.0) == pytest.approx(-2 * math.cos(math.atan2(I.imag, I.real)) * abs(I), rel=1e-9)
    t0 = np.linspace(0, f.period, 7)
    assert np.allclose(delta_S_curve(up, f, t0), [delta_S(up, f, t) for t in t0], rtol=1e-9, atol=1e-12)


@pytest.mark.parametrize("cls", [AdditiveSinusoid, ParametricSinusoid])
def test_closed_form_matches_scan(dw_orbits, pend_orbits, cls):
    for _, up, _ in (dw_orbits, pend_orbits):
        f = cls(0.8, 1.1, 0.4)
        cf = minimize_over_t0(up, f, method="closed_form")
        qd = minimize_over_t0(up, f, method="quadrature")
        assert cf.method == "closed_form" and qd.method == "quadrature"
        assert qd.deltaS_e == pytest.approx(cf.deltaS_e, rel=1e-6)
        dt0 = (qd.t0_star - cf.t0_star + f.period / 2) % f.period - f.period / 2
        assert abs(dt0) <= 1e-4 * f.period


def test_phase_does_not_change_minimum(dw_orbits):
    _, up, _ = dw_orbits
    vals = [minimize_over_t0(up, ParametricSinusoid(1.0, W0, th)).deltaS_e for th in (0, math.pi / 4, math.pi / 2, math.pi)]
    assert max(vals) - min(vals) <= 1e-10


def test_grid_invariants_and_cosine_shape(dw_orbits):
    _, up, _ = dw_orbits
    f = AdditiveSinusoid(1.0, 1.2, 0.5)
    res = minimize_over_t0(up, f, n_grid=64, method="quadrature")
    scale = np.max(np.abs(res.deltaS_values))
    assert res.deltaS_e <= res.deltaS_values.min() + 1e-12 * scale
    # dS(t0) = -2 M cos(w t0 + theta + phi)
    B = np.column_stack([np.cos(1.2 * res.t0_grid + 0.5), np.sin(1.2 * res.t0_grid + 0.5)])
    coef, *_ = np.linalg.lstsq(B, res.deltaS_values, rcond=None)
    M = np.hypot(*coef) / 2
    assert np.max(np.abs(B @ coef - res.deltaS_values)) <= 1e-6 * M
    assert 2 * M == pytest.approx(2 * fourier_magnitude(up, "linear", 1.2), rel=1e-6)


def test_heterogeneous_forcing_beats_fine_grid(dw_orbits):
    _, up, _ = dw_orbits
    f = AdditiveSinusoid([1.0], [W0], [0.0])
    g = GeneralPeriodic(
        lambda x, t: np.cos(W0 * t) * x + 0.5 * np.cos(2 * W0 * t + 1.0), period=2 * math.pi / W0, vectorized=True
    )
    loop = GeneralPeriodic(g.callback, g.period)
    assert np.allclose(g.evaluate_many(up.positions[:50], up.times[:50]),
                       loop.evaluate_many(up.positions[:50], up.times[:50]), atol=1e-15)
    res = minimize_over_t0(up, g, n_grid=32)
    fine = np.linspace(0, g.period, 320, endpoint=False)
    assert res.method == "quadrature"
    assert all(res.deltaS_e <= delta_S(up, g, t) + 1e-12 for t in fine)
    assert closed_form_correction(up, f) is not None
    assert closed_form_correction(up, g) is None


def test_two_frequency_sinusoid_has_no_closed_form():
    f = AdditiveSinusoid([1.0, 1.0], [1.0, 2.0], dimension=2)
    assert not f.is_homogeneous
    assert f.period == pytest.approx(2 * math.pi)


def test_zero_frequency_limits(dw_orbits):
    _, up, _ = dw_orbits
    x0, x1 = up.positions[0, 0], up.positions[-1, 0]
    lin = fourier_integral(up, "linear", 0.0).values[0]
    par = fourier_integral(up, "parametric", 0.0).values[0]
    assert lin.real == pytest.approx(x1 - x0, abs=1e-6) and abs(lin.imag) < 1e-15
    assert par.real == pytest.approx(0.5 * (x1**2 - x0**2), abs=1e-6)
    assert lin.real == pytest.approx(1.0, abs=1e-5)
    assert par.real == pytest.approx(-0.5, abs=1e-5)


def test_resonance_exceeds_off_resonance(dw_orbits):
    _, up, _ = dw_orbits
    for kind in ("linear", "parametric"):
        assert fourier_magnitude(up, kind, W0) > 5 * fourier_magnitude(up, kind, 3.0)


@given(om=st.floats(0.05, 6.0))
@settings(max_examples=20, deadline=None)
def test_conjugate_symmetry(dw_orbits, om):
    _, up, _ = dw_orbits
    for kind in ("linear", "parametric"):
        a = fourier_integral(up, kind, om).values
        b = fourier_integral(up, kind, -om).values
        assert np.allclose(a, np.conj(b), rtol=1e-12, atol=1e-14)


def test_riemann_lebesgue_decay(dw_orbits):
    _, up, _ = dw_orbits
    for kind in ("linear", "parametric"):
        peak = max(fourier_magnitude(up, kind, w) for w in np.linspace(1.2, 1.6, 41))
        assert fourier_magnitude(up, kind, 50 * W0) <= 1e-3 * peak


def test_downhill_orbits_are_refused(dw_orbits):
    _, _, down = dw_orbits
    with pytest.raises(ValueError):
        delta_S(down, AdditiveSinusoid(1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        fourier_integral(down, "linear", 1.0)


def test_resolution_warning(dw_orbits):
    _, up, _ = dw_orbits
    with pytest.warns(ResolutionWarning):
        fourier_integral(up, "linear", 0.2 / up.dt)


def test_stationarity_residual_vanishes_at_optimum(dw_orbits):
    _, up, _ = dw_orbits
    f = ParametricSinusoid(1.0, W0, 0.0)
    res = minimize_over_t0(up, f)
    scale = abs(res.deltaS_e) * W0
    assert abs(stationarity_residual(up, f, res.t0_star)) <= 1e-5 * scale
    assert abs(stationarity_residual(up, f, res.t0_star + 0.25 * f.period)) > 0.1 * scale


def test_total_rate_exponent():
    assert total_rate_exponent(0.5, -3.0, 0.0) == 0.5
    assert total_rate_exponent(0.5, -3.0, 0.01) < 0.5
    e0, e1, e2 = (total_rate_exponent(0.5, -3.0, e) for e in (0.0, 0.02, 0.04))
    assert e2 - e0 == pytest.approx(2 * (e1 - e0), rel=1e-12)
    with pytest.warns(NegativeExponent):
        total_rate_exponent(0.5, -3.0, 1.0)
    with pytest.raises(ValueError):
        total_rate_exponent(0.5, -3.0, -0.1)


def test_invalid_arguments(dw_orbits):
    _, up, _ = dw_orbits
    f = AdditiveSinusoid(1.0, 1.0)
    with pytest.raises(ValueError):
        minimize_over_t0(up, f, n_grid=4)
    with pytest.raises(ValueError):
        minimize_over_t0(up, f, method="nope")
    with pytest.raises(ValueError):
        fourier_integral(up, "quadratic", 1.0)
