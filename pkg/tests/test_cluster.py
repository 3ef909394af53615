import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from forced_escape.cluster import (
    DefectRecipe,
    LJCluster,
    build_perfect_lattice,
    cluster_resonance_experiment,
    dimer_search,
    find_saddle,
    load_configuration,
    make_defect,
    minimum_image,
    pair_energy,
    pair_force,
    relax,
    save_configuration,
    triangular_lattice,
)
from forced_escape.errors import IncompatibleBox, RelaxedToPerfect
from forced_escape.model import DoubleWell, classify_point, find_critical_point
from forced_escape.svg import configuration_svg

pytestmark = pytest.mark.invariant


@pytest.fixture(scope="module")
def rand_q(lj):
    c, qb = lj
    return qb + 0.05 * np.random.default_rng(5).standard_normal(qb.size)


def _zero_mode_count(H):
    lam = np.linalg.eigvalsh(H)
    return int(np.sum(np.abs(lam) <= 1e-8 * np.abs(lam).max()))


@given(dx=st.floats(-20, 20), dy=st.floats(-20, 20))
@settings(max_examples=25, deadline=None)
def test_translation_invariance(lj, rand_q, dx, dy):
    c, _ = lj
    shifted = rand_q + np.tile([dx, dy], c.n)
    assert abs(c.value(shifted) - c.value(rand_q)) <= 1e-10 * abs(c.value(rand_q))
    assert np.max(np.abs(c.gradient(shifted) - c.gradient(rand_q))) <= 1e-10


def test_two_zero_modes_at_critical_points(lj, lj_defect, lj_saddle):
    c, qb = lj
    for q in (qb, lj_defect.location, lj_saddle.saddle.location):
        assert _zero_mode_count(c.hessian(q)) == 2


def test_minimum_image_brute_force():
    rng = np.random.default_rng(9)
    cell = np.array([3 * math.sqrt(3), 6.0])
    a = rng.uniform(-10, 20, (1000, 2))
    b = rng.uniform(-10, 20, (1000, 2))
    d = minimum_image(a - b, cell)
    r = np.hypot(d[:, 0], d[:, 1])
    # reduce into the primary cell, then try all 9 neighbouring images
    base = np.mod(a - b, cell)
    shifts = np.array([[i, j] for i in (-1, 0, 1) for j in (-1, 0, 1)]) * cell
    brute = np.min(np.linalg.norm(base[:, None, :] + shifts[None], axis=2), axis=1)
    assert np.allclose(r, brute, rtol=0, atol=1e-12)


def test_gradient_matches_finite_differences(lj, rand_q):
    c, _ = lj
    g = c.gradient(rand_q)
    fd = np.empty_like(g)
    h = 1e-6
    for i in range(g.size):
        e = np.zeros_like(g)
        e[i] = h
        fd[i] = (c.value(rand_q + e) - c.value(rand_q - e)) / (2 * h)
    assert np.linalg.norm(g - fd) / np.linalg.norm(g) <= 1e-5
    E, g2 = c.energy_gradient(rand_q)
    assert E == c.value(rand_q) and np.array_equal(g2, g)


def test_hessian_matches_gradient_differences(lj, rand_q):
    c, _ = lj
    H = c.hessian(rand_q)
    h = 1e-6
    fd = np.column_stack([
        (c.gradient(rand_q + h * e) - c.gradient(rand_q - h * e)) / (2 * h) for e in np.eye(rand_q.size)
    ])
    assert np.linalg.norm(H - fd) / np.linalg.norm(H) <= 1e-6
    assert np.array_equal(H, H.T)


@given(r=st.floats(0.8, 2.6))
def test_pair_force_law(r):
    h = 1e-6 * r
    fd = -(pair_energy(r + h) - pair_energy(r - h)) / (2 * h)
    f = pair_force(r)
    assert abs(f - fd) <= 1e-7 * max(abs(f), 1.0)
    assert pair_force(1.0) == 0.0 and pair_energy(1.0) == -1.0


def test_energy_is_pair_sum(lj, rand_q):
    c, _ = lj
    assert c.value(rand_q) == pytest.approx(np.sum(pair_energy(c.pair_distances(rand_q))), rel=1e-13)


def test_perfect_lattice(lj):
    c, qb = lj
    assert c.value(qb) == pytest.approx(-120.4712, abs=0.01)
    cp = classify_point(c, qb)
    lam = cp.hessian_eigenvalues[~cp.zero_mask]
    assert lam.size == 2 * c.n - 2 and np.all(lam > 0)
    assert np.linalg.norm(c.gradient(qb)) <= 1e-10


def _forces_without_ties(c, q):
    """Net pair force per particle, skipping pairs separated by exactly half a box."""
    P = c.positions(q)
    cell = np.asarray(c.cell)
    i, j = np.triu_indices(c.n, 1)
    d = minimum_image(P[i] - P[j], cell)
    tie = np.any(np.isclose(np.abs(d), cell / 2, rtol=0, atol=1e-12), axis=1)
    r = np.hypot(d[:, 0], d[:, 1])
    f = (pair_force(r) / r)[:, None] * d
    f[tie] = 0.0
    F = np.zeros_like(P)
    np.add.at(F, i, f)
    np.add.at(F, j, -f)
    return F, int(tie.sum())


def test_analytic_lattice_is_stationary_up_to_half_box_ties(lj):
    c, qb = lj
    q0 = triangular_lattice(6, 6, c.r0)
    F, n_tie = _forces_without_ties(c, q0)
    assert n_tie > 0 and np.max(np.abs(F)) <= 1e-12
    # the residual gradient comes from the tied pairs and relaxation only nudges the lattice
    moved = c.positions(qb) - c.positions(q0)
    rel = moved - moved.mean(axis=0)
    assert np.max(np.abs(rel)) <= 1e-3
    assert 0 <= c.value(q0) - c.value(qb) <= 1e-3


@pytest.mark.xfail(strict=True, reason="half-box ties put the analytic lattice on a kink of the minimum-image energy")
def test_analytic_lattice_relaxation_moves_at_most_1e_8(lj):
    c, qb = lj
    moved = c.positions(qb) - c.positions(triangular_lattice(6, 6, c.r0))
    assert np.max(np.abs(moved - moved.mean(axis=0))) <= 1e-8


def test_incompatible_box():
    with pytest.raises(IncompatibleBox):
        build_perfect_lattice(LJCluster(36, (5.0, 6.0)))
    with pytest.raises(IncompatibleBox):
        build_perfect_lattice(LJCluster(30))
    with pytest.raises(IncompatibleBox):
        build_perfect_lattice(LJCluster(35, (5 * math.sqrt(3) / 2, 7.0)), columns=5, rows=7)


def test_defect(lj, lj_defect):
    c, qb = lj
    assert lj_defect.index == 0
    assert -120.47 < lj_defect.potential_value < -100
    assert lj_defect.potential_value == pytest.approx(-109.7064, abs=1e-3)


def test_defect_is_deterministic(lj):
    c, qb = lj
    a = make_defect(c, qb, seed=3, max_attempts=5)
    b = make_defect(c, qb, seed=3, max_attempts=5)
    assert np.max(np.abs(a.location - b.location)) <= 1e-12
    assert a.index == 0 and c.value(qb) < a.potential_value < -100


def test_pair_shift_recipe_runs(lj):
    c, qb = lj
    try:
        cp = make_defect(c, qb, seed=1, recipe=DefectRecipe("pair_shift", sigma=0.05), max_attempts=5)
    except RelaxedToPerfect:
        return
    assert cp.index == 0 and cp.potential_value > c.value(qb)


def test_relaxed_to_perfect(lj):
    c, qb = lj
    with pytest.raises(RelaxedToPerfect):
        make_defect(c, qb, recipe=DefectRecipe(sigma=1e-3), max_attempts=2)


def test_saddle(lj, lj_defect, lj_saddle):
    c, qb = lj
    s = lj_saddle.saddle
    assert s.index == 1 and s.gradient_norm <= 1e-8
    va, vb = lj_defect.potential_value, c.value(qb)
    assert va < s.potential_value < va + 10
    assert vb < va < s.potential_value
    ends = sorted([lj_saddle.minus_end.potential_value, lj_saddle.plus_end.potential_value])
    assert ends == pytest.approx([vb, va], abs=1e-3)


def test_saddle_perturbation_stability(lj, lj_saddle):
    c, _ = lj
    s = lj_saddle.saddle
    v = np.random.default_rng(2).standard_normal(s.location.size)
    x0 = s.location + 1e-4 * v / np.linalg.norm(v)
    neg = s.hessian_eigenvectors[:, int(np.argmin(np.where(s.zero_mask, np.inf, s.hessian_eigenvalues)))]
    z, _ = dimer_search(c, x0, neg)
    d = c.positions(c.displacement(z, s.location))
    # compare modulo the rigid translation zero modes
    assert np.linalg.norm(d - d.mean(axis=0)) <= 1e-6


def test_double_well_saddle_search(dw):
    m, qa, qs, qb = dw
    res = find_saddle(m, qa.location, qb.location)
    assert res.saddle.location[0] == pytest.approx(0.0, abs=1e-10)
    assert res.saddle.index == 1


def test_relax_reaches_minimum():
    m = DoubleWell()
    z = relax(m, [0.3])
    assert z[0] == pytest.approx(1.0, abs=1e-10)
    assert find_critical_point(m, z).index == 0


def test_zero_weights_give_zero_sweep(lj, lj_defect, lj_saddle, lj_orbit):
    c, _ = lj
    sw = cluster_resonance_experiment(c, lj_defect, lj_saddle.saddle, direction="x", amplitude=0.0,
                                      n_points=20, orbit=lj_orbit)
    assert np.all(sw.magnitudes == 0) and sw.peaks == ()


def test_configuration_round_trip_and_svg(tmp_path, lj, lj_defect):
    c, _ = lj
    p = tmp_path / "qa.csv"
    save_configuration(p, c, lj_defect.location)
    c2, q = load_configuration(p)
    assert c2.n == c.n and c2.cell == c.cell and np.array_equal(q, lj_defect.location)
    assert p.read_text().splitlines()[1] == "j,x,y"
    configuration_svg(c.positions(q), c.cell, tmp_path / "qa.svg", title="defect")
    text = (tmp_path / "qa.svg").read_text()
    assert text.startswith("<svg") or text.startswith("<?xml")
    assert text.count("<circle") == c.n
