import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forced_escape.errors import ConfigError, NoCommonPeriod, NonConvergence, NotAMinimum, ZeroMode
from forced_escape.model import (
    AdditiveSinusoid,
    CallbackModel,
    Damping,
    DoubleWell,
    GeneralPeriodic,
    Harmonic,
    ParametricSinusoid,
    Pendulum,
    classify_point,
    common_period,
    evaluate_forcing,
    find_critical_point,
    intrinsic_frequencies,
    make_model,
)

pytestmark = pytest.mark.invariant

coord = st.floats(-2.5, 2.5, allow_nan=False)


def fd_gradient(model, x, h=1e-6):
    g = np.empty(x.size)
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        g[i] = (model.value(x + e) - model.value(x - e)) / (2 * h)
    return g


def fd_hessian(model, x, h=1e-5):
    H = np.empty((x.size, x.size))
    for i in range(x.size):
        e = np.zeros(x.size)
        e[i] = h
        H[:, i] = (model.gradient(x + e) - model.gradient(x - e)) / (2 * h)
    return H


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-3)


MODELS = [DoubleWell(), Pendulum(), Harmonic([1.0, 4.0]), Pendulum(dimension=3)]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: f"{m.name}-{m.dimension}")
def test_gradient_and_hessian_match_finite_differences(model):
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = rng.uniform(-2.5, 2.5, model.dimension)
        assert _rel(model.gradient(x), fd_gradient(model, x)) <= 1e-5
        H = model.hessian(x)
        assert _rel(H, fd_hessian(model, x)) <= 1e-4
        assert np.max(np.abs(H - H.T)) <= 1e-10


@pytest.mark.parametrize("model", MODELS[:2] + MODELS[3:], ids=lambda m: f"{m.name}-{m.dimension}")
def test_vectorised_evaluations_agree(model):
    X = np.random.default_rng(3).uniform(-2, 2, (20, model.dimension))
    U = np.random.default_rng(4).standard_normal((20, model.dimension))
    assert np.allclose(model.values(X), [model.value(x) for x in X], atol=1e-14)
    assert np.allclose(model.gradients(X), [model.gradient(x) for x in X], atol=1e-14)
    hv = model.hessian_vector_products(X, U)
    assert np.allclose(hv, [model.hessian(x) @ u for x, u in zip(X, U)], atol=1e-12)


@given(x=coord, k=st.integers(-3, 3))
def test_pendulum_box_periodicity(x, k):
    m = Pendulum()
    y = np.array([x + k * 2 * math.pi])
    assert abs(m.value([x]) - m.value(y)) <= 1e-10
    assert np.allclose(m.gradient([x]), m.gradient(y), atol=1e-10)
    assert np.allclose(m.hessian([x]), m.hessian(y), atol=1e-10)


def test_critical_point_examples():
    m = DoubleWell()
    cp = find_critical_point(m, [-0.8])
    assert cp.location[0] == pytest.approx(-1.0, abs=1e-12)
    assert cp.potential_value == pytest.approx(0.0, abs=1e-14)
    assert cp.index == 0 and cp.kind == "minimum"
    cp = find_critical_point(m, [0.1])
    assert cp.location[0] == pytest.approx(0.0, abs=1e-12)
    assert cp.potential_value == pytest.approx(0.25)
    assert cp.index == 1 and cp.kind == "saddle"
    p = find_critical_point(Pendulum(), [-1.4])
    assert p.location[0] == pytest.approx(-math.pi / 2, abs=1e-12)
    assert p.potential_value == pytest.approx(-1.0)
    assert p.index == 0


def test_critical_point_invariants():
    m = Harmonic([1.0, 3.0, 0.5])
    cp = find_critical_point(m, [0.3, -0.2, 0.1])
    ref = np.linalg.norm(m.gradient([0.3, -0.2, 0.1]))
    assert cp.gradient_norm <= 1e-10 * (1 + ref)
    H = m.hessian(cp.location)
    for lam, v in zip(cp.hessian_eigenvalues, cp.hessian_eigenvectors.T):
        assert np.linalg.norm(H @ v - lam * v) <= 1e-8
    assert np.all(np.diff(cp.hessian_eigenvalues) >= 0)


def test_double_well_grid_recovers_all_critical_points():
    m = DoubleWell()
    found = set()
    for s in np.linspace(-2, 2, 21):
        if abs(abs(s) - 1 / math.sqrt(3)) < 0.05:  # Newton is singular at V''=0
            continue
        found.add(round(find_critical_point(m, [s]).location[0], 9))
    assert found == {-1.0, 0.0, 1.0}


@given(s=st.floats(-2, 2).filter(lambda s: abs(abs(s) - 1 / math.sqrt(3)) > 0.05))
@settings(max_examples=30, deadline=None)
def test_find_critical_point_is_idempotent(s):
    m = DoubleWell()
    cp = find_critical_point(m, [s])
    again = find_critical_point(m, cp.location)
    assert np.allclose(again.location, cp.location, atol=1e-10)


def test_intrinsic_frequencies(dw, pend):
    assert intrinsic_frequencies(dw[1]) == pytest.approx([math.sqrt(2)], rel=1e-12)
    assert intrinsic_frequencies(pend[1]) == pytest.approx([1.0], rel=1e-12)
    with pytest.raises(NotAMinimum):
        intrinsic_frequencies(dw[2])
    h = find_critical_point(Harmonic([4.0, 1.0]), [0.1, 0.1])
    assert intrinsic_frequencies(h) == pytest.approx([1.0, 2.0])


def test_intrinsic_frequencies_flags_translation_modes(lj_defect):
    with pytest.raises(ZeroMode):
        intrinsic_frequencies(lj_defect)
    w = intrinsic_frequencies(lj_defect, drop_zero_modes=True)
    assert w.size == 70 and np.all(w > 0) and np.all(np.diff(w) >= 0)
    assert lj_defect.n_zero == 2


def test_damping_square_root():
    A = np.array([[2.0, 0.3], [0.3, 0.5]])
    d = Damping.from_matrix(A)
    assert np.allclose(d.sqrt_gamma @ d.sqrt_gamma, A, atol=1e-10)
    assert d.min_eigenvalue > 0
    assert np.allclose(d.inverse() @ A, np.eye(2))
    with pytest.raises(ValueError):
        Damping.from_matrix([[1.0, 0.0], [0.0, -1.0]])
    with pytest.raises(ValueError):
        Damping.from_matrix([[1.0, 2.0], [0.0, 1.0]])


def test_forcing_examples():
    f = AdditiveSinusoid(1.0, 2.0, 0.0, dimension=3)
    assert np.allclose(evaluate_forcing(f, np.zeros(3), 0.0), 1.0)
    g = ParametricSinusoid(1.0, 2.0, math.pi / 2, dimension=2)
    assert np.allclose(evaluate_forcing(g, np.array([3.0, -4.0]), 0.0), 0.0, atol=1e-15)
    h = ParametricSinusoid(2.0, 1.0, 0.0)
    assert evaluate_forcing(h, np.array([3.0]), math.pi) == pytest.approx([-6.0])


FORCINGS = [
    AdditiveSinusoid([1.0, 0.5], [1.0, 2.0], [0.0, 0.3]),
    ParametricSinusoid([1.0, 2.0], [1.5, 0.5], [0.1, 0.0]),
    AdditiveSinusoid(1.0, math.sqrt(2), 0.2, dimension=2),
    GeneralPeriodic(lambda x, t: np.sin(3 * t) * x**2, period=2 * math.pi / 3),
]


@pytest.mark.parametrize("forcing", FORCINGS, ids=lambda f: type(f).__name__)
def test_forcing_periodicity(forcing):
    rng = np.random.default_rng(11)
    tau = forcing.period
    worst = 0.0
    for x in rng.uniform(-2, 2, (10, 2)):
        for t in rng.uniform(0, 50, 10):
            worst = max(worst, np.linalg.norm(forcing(x, t + tau) - forcing(x, t)))
    assert worst <= 1e-10


@given(x=st.lists(coord, min_size=2, max_size=2), t=st.floats(0, 100))
def test_sinusoid_closed_forms(x, t):
    A, w, th = np.array([0.7, -1.3]), np.array([1.1, 0.4]), np.array([0.2, 2.0])
    x = np.array(x)
    c = A * np.cos(w * t + th)
    assert np.allclose(AdditiveSinusoid(A, w, th)(x, t), c, atol=1e-12)
    assert np.allclose(ParametricSinusoid(A, w, th)(x, t), c * x, atol=1e-12)


def test_forcing_kernels_match_python():
    for f in FORCINGS[:3]:
        fn, params = f.kernel
        out = np.empty(2)
        x = np.array([0.3, -1.1])
        fn(x, 1.7, params, out)
        assert np.allclose(out, f(x, 1.7), atol=1e-14)


def test_common_period():
    assert common_period([1.0, 2.0]) == pytest.approx(2 * math.pi)
    assert common_period([2.0, 3.0]) == pytest.approx(2 * math.pi)
    assert common_period([1.5, 0.5]) == pytest.approx(4 * math.pi)
    with pytest.raises(NoCommonPeriod):
        common_period([1.0, math.pi])
    assert common_period([0.0, 2.0]) == pytest.approx(math.pi)


def test_callback_model_finite_differences():
    m = CallbackModel(2, lambda x: float(np.sum(x**4) / 4 - x[0] * x[1]))
    x = np.array([0.7, -0.4])
    exact = np.array([x[0] ** 3 - x[1], x[1] ** 3 - x[0]])
    assert np.allclose(m.gradient(x), exact, atol=1e-8)
    assert np.allclose(m.hessian(x), [[3 * x[0] ** 2, -1], [-1, 3 * x[1] ** 2]], atol=1e-6)
    cp = find_critical_point(m, [0.9, 0.9])
    assert np.allclose(cp.location, [1.0, 1.0], atol=1e-8) and cp.index == 0


def test_critical_point_json_record(dw):
    rec = dw[1].to_dict()
    json.dumps(rec)
    assert set(rec) >= {"location", "value", "eigenvalues", "index"}


def test_make_model():
    assert isinstance(make_model("double-well"), DoubleWell)
    assert isinstance(make_model("pendulum"), Pendulum)
    with pytest.raises(ValueError):
        make_model("nope")


def test_newton_reports_nonconvergence():
    m = CallbackModel(1, lambda x: float(np.exp(x[0])))  # no critical point
    with pytest.raises(NonConvergence):
        find_critical_point(m, [0.0], max_iter=20)
