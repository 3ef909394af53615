"""Two-dimensional Lennard-Jones cluster in a periodic box.

Coordinates are flattened as (x_1, y_1, x_2, y_2, ...).  Pair distances
use the minimum image, and the pair energy is
phi(r) = (r0/r)^12 - 2 (r0/r)^6, summed once over each unordered pair.
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels as K
from .errors import (
    IncompatibleBox,
    NonConvergence,
    NonFinite,
    RelaxedToPerfect,
    WrongConnectivity,
)
from .hetero import HeteroclinicOrbit, settle_from_saddle, shoot_uphill
from .model import (
    CriticalPoint,
    Damping,
    PotentialModel,
    classify_point,
    find_critical_point,
    intrinsic_frequencies,
)
from .resonance import FrequencySweep, sweep

log = logging.getLogger(__name__)

__all__ = [
    "LJCluster",
    "minimum_image",
    "pair_energy",
    "pair_force",
    "triangular_lattice",
    "build_perfect_lattice",
    "relax",
    "DefectRecipe",
    "make_defect",
    "dimer_search",
    "SaddleSearchResult",
    "find_saddle",
    "cluster_uphill_orbit",
    "direction_weights",
    "cluster_resonance_experiment",
    "save_configuration",
    "load_configuration",
]


def minimum_image(d, s):
    """Wrap separations into [-s/2, s/2)."""
    return np.mod(np.asarray(d, dtype=float) + 0.5 * s, s) - 0.5 * s


def pair_energy(r, r0=1.0):
    q = (r0 / np.asarray(r, dtype=float)) ** 6
    return q * q - 2.0 * q


def pair_force(r, r0=1.0):
    """-dphi/dr = 12[(r0/r)^12 - (r0/r)^6] / r."""
    r = np.asarray(r, dtype=float)
    q = (r0 / r) ** 6
    return 12.0 * (q * q - q) / r


class LJCluster(PotentialModel):
    """n particles in a periodic (s_x, s_y) box with Lennard-Jones pairs."""

    name = "lj_cluster"
    n_zero_modes = 2

    def __init__(self, n: int = 36, box: Sequence[float] = (3 * math.sqrt(3), 6.0), r0: float = 1.0):
        if n < 2:
            raise ValueError("need at least two particles")
        sx, sy = (float(b) for b in box)
        if sx <= 0 or sy <= 0 or r0 <= 0:
            raise ValueError("box lengths and r0 must be positive")
        super().__init__(2 * n, box=(sx, sy) * n)
        self.n = int(n)
        self.cell = (sx, sy)
        self.r0 = float(r0)
        self._params = np.array([sx, sy, self.r0])

    def params(self):
        return {"n": self.n, "box": list(self.cell), "r0": self.r0}

    def value(self, q):
        q = np.ascontiguousarray(self._as_vec(q))
        return float(K.lj_energy_grad(q, self.cell[0], self.cell[1], self.r0, np.empty(q.size)))

    def gradient(self, q):
        q = np.ascontiguousarray(self._as_vec(q))
        out = np.empty(q.size)
        K.lj_energy_grad(q, self.cell[0], self.cell[1], self.r0, out)
        return out

    def energy_gradient(self, q):
        q = np.ascontiguousarray(self._as_vec(q))
        out = np.empty(q.size)
        e = K.lj_energy_grad(q, self.cell[0], self.cell[1], self.r0, out)
        return float(e), out

    def hessian(self, q):
        q = np.ascontiguousarray(self._as_vec(q))
        return K.lj_hessian(q, self.cell[0], self.cell[1], self.r0)

    def gradients(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        out = np.empty_like(X)
        for k in range(X.shape[0]):
            K.lj_energy_grad(X[k], self.cell[0], self.cell[1], self.r0, out[k])
        return out

    def zero_mode_basis(self):
        T = np.zeros((2, self.dimension))
        T[0, 0::2] = 1.0
        T[1, 1::2] = 1.0
        return T / math.sqrt(self.n)

    @property
    def kernel(self):
        return K.lj_grad, self._params

    def positions(self, q) -> np.ndarray:
        return np.asarray(q, dtype=float).reshape(self.n, 2)

    def pair_distances(self, q) -> np.ndarray:
        """Minimum-image distances for all i<j pairs, in row-major pair order."""
        P = self.positions(q)
        i, j = np.triu_indices(self.n, 1)
        d = minimum_image(P[i] - P[j], np.asarray(self.cell))
        return np.hypot(d[:, 0], d[:, 1])


# --------------------------------------------------------------- relaxation


def _project(v, T):
    return v - T.T @ (T @ v) if T.size else v


def _newton_polish(model: PotentialModel, x, gtol=1e-11, max_iter=50):
    """Pseudo-inverse Newton on grad V = 0, ignoring exact symmetry modes."""
    x = np.array(x, dtype=float)
    for _ in range(max_iter):
        g = model.gradient(x)
        if np.linalg.norm(g) <= gtol:
            break
        lam, V = np.linalg.eigh(model.hessian(x))
        keep = np.abs(lam) > 1e-8 * np.abs(lam).max()
        if model.n_zero_modes:
            keep[np.argsort(np.abs(lam))[: model.n_zero_modes]] = False
        step = -V[:, keep] @ ((V[:, keep].T @ g) / lam[keep])
        x = x + step
    return x


def relax(model: PotentialModel, x, gtol=1e-10, flow_gtol=1e-5, t_max=1e4) -> np.ndarray:
    """Steepest-descent flow into the local basin, then Newton polish.

    The flow x' = -grad V is integrated with an adaptive stiff solver until
    |grad V| < flow_gtol, which keeps the result inside the basin of the
    starting point; a few Newton steps then reach |grad V| <= gtol.
    """
    x = np.asarray(x, dtype=float).copy()

    def rhs(t, z):
        return -model.gradient(z)

    def jac(t, z):
        return -model.hessian(z)

    def small(t, z):
        return np.linalg.norm(model.gradient(z)) - flow_gtol

    small.terminal = True
    if np.linalg.norm(model.gradient(x)) > flow_gtol:
        sol = solve_ivp(rhs, (0.0, t_max), x, method="LSODA", jac=jac, events=small, rtol=1e-8, atol=1e-10)
        x = sol.y[:, -1]
        if not np.all(np.isfinite(x)):
            raise NonFinite("relaxation diverged")
    x = _newton_polish(model, x, gtol=0.1 * gtol)
    gn = np.linalg.norm(model.gradient(x))
    if gn > gtol:
        raise NonConvergence(f"relaxation stalled at |grad V| = {gn:.3g}")
    return x


# ------------------------------------------------------------------ lattice


def triangular_lattice(columns: int = 6, rows: int = 6, r0: float = 1.0) -> np.ndarray:
    """Columns at x = i*sqrt(3)/2*r0, sites at y = (j + (i mod 2)/2)*r0."""
    i, j = np.meshgrid(np.arange(columns), np.arange(rows), indexing="ij")
    x = i * math.sqrt(3) / 2 * r0
    y = (j + 0.5 * (i % 2)) * r0
    return np.column_stack([x.ravel(), y.ravel()]).ravel()


def build_perfect_lattice(
    cluster: Optional[LJCluster] = None, columns: int = 6, rows: int = 6, gtol: float = 1e-10
) -> np.ndarray:
    """Relaxed triangular lattice commensurate with the cluster's box."""
    cluster = cluster or LJCluster()
    sx, sy = cluster.cell
    if columns * rows != cluster.n:
        raise IncompatibleBox(f"{columns}x{rows} sites do not match n={cluster.n}")
    if columns % 2:
        raise IncompatibleBox("periodic triangular lattice needs an even number of columns")
    want = (columns * math.sqrt(3) / 2 * cluster.r0, rows * cluster.r0)
    if not (math.isclose(sx, want[0], rel_tol=1e-9) and math.isclose(sy, want[1], rel_tol=1e-9)):
        raise IncompatibleBox(f"box {cluster.cell} is not the commensurate {want}")
    return relax(cluster, triangular_lattice(columns, rows, cluster.r0), gtol=gtol)


# ------------------------------------------------------------------ defects


@dataclass(frozen=True)
class DefectRecipe:
    """Seeded perturbation of the perfect lattice.

    ``local_disorder`` (default) gives every particle within ``radius`` of a
    randomly chosen centre a Gaussian kick of width ``sigma``.
    ``pair_shift`` moves one nearest-neighbour pair by ``shift`` in opposite
    tangential directions and adds jitter ``sigma`` to all coordinates.
    Lengths are in units of r0.
    """

    kind: str = "local_disorder"
    radius: float = 1.8
    sigma: float = 0.75
    shift: float = 0.5

    def apply(self, cluster: LJCluster, lattice, rng: np.random.Generator) -> np.ndarray:
        P = cluster.positions(lattice).copy()
        cell = np.asarray(cluster.cell)
        r0 = cluster.r0
        if self.kind == "local_disorder":
            c = int(rng.integers(cluster.n))
            d = minimum_image(P - P[c], cell)
            idx = np.flatnonzero(np.hypot(d[:, 0], d[:, 1]) < self.radius * r0)
            P[idx] += self.sigma * r0 * rng.standard_normal((idx.size, 2))
            return P.ravel()
        if self.kind == "pair_shift":
            r = cluster.pair_distances(lattice)
            i, j = np.triu_indices(cluster.n, 1)
            nn = np.flatnonzero(np.abs(r - r.min()) < 0.05 * r0)
            k = nn[rng.integers(nn.size)]
            a, b = i[k], j[k]
            d = minimum_image(P[a] - P[b], cell)
            t = np.array([-d[1], d[0]]) / np.hypot(*d)
            P[a] += self.shift * r0 * t
            P[b] -= self.shift * r0 * t
            return P.ravel() + self.sigma * r0 * rng.standard_normal(P.size)
        raise ValueError(f"unknown defect recipe {self.kind!r}")


def make_defect(
    cluster: LJCluster,
    lattice,
    seed: int = 0,
    recipe: DefectRecipe = DefectRecipe(),
    max_attempts: int = 50,
    target_energy: Optional[float] = None,
    energy_tol: float = 1e-3,
) -> CriticalPoint:
    """Perturb and relax the perfect lattice until a distinct local minimum appears.

    Attempt k uses the generator ``default_rng([seed, k])``.  With
    ``target_energy`` the search continues until a minimum with that energy
    (within ``energy_tol``) is found.
    """
    v_perfect = cluster.value(lattice)
    tried = []
    for attempt in range(max_attempts):
        rng = np.random.default_rng([seed, attempt])
        q = recipe.apply(cluster, lattice, rng)
        try:
            z = relax(cluster, q)
        except (NonConvergence, NonFinite):
            continue
        cp = classify_point(cluster, z)
        tried.append(cp.potential_value)
        if cp.index != 0 or cp.potential_value - v_perfect <= energy_tol:
            continue
        if target_energy is not None and abs(cp.potential_value - target_energy) > energy_tol:
            continue
        log.info("defect after %d attempt(s): V = %.6f", attempt + 1, cp.potential_value)
        return cp
    raise RelaxedToPerfect(
        f"no {'matching ' if target_energy is not None else ''}defect in {max_attempts} attempts "
        f"(energies seen: {sorted(set(np.round(tried, 4)))})"
    )


# ------------------------------------------------------------ saddle search


def dimer_search(
    model: PotentialModel,
    x0,
    direction,
    dimer_length: float = 1e-4,
    max_step: float = 0.05,
    gtol: float = 1e-8,
    switch_gtol: float = 1e-3,
    max_iter: int = 5000,
    max_rotations: int = 20,
    energy_ceiling: Optional[float] = None,
):
    """Dimer walk to an index-1 saddle, finished by Newton steps.

    Each rotation uses two gradient evaluations (dimer end point and a trial
    rotation) and a harmonic fit of the curvature in the rotation plane.
    Translation inverts the force along the dimer while the curvature is
    negative and climbs along it otherwise, with steps capped at
    ``max_step``.  Once |grad V| < switch_gtol with negative curvature the
    point is polished by Newton iteration to |grad V| <= gtol.

    Returns (location, iterations).  Raises NonConvergence when the walk
    fails or the polished point is not an index-1 saddle.
    """
    T = model.zero_mode_basis()
    x = np.array(x0, dtype=float)
    N = _project(np.asarray(direction, dtype=float), T)
    if np.linalg.norm(N) == 0:
        raise ValueError("initial dimer direction lies in the symmetry modes")
    N /= np.linalg.norm(N)
    dR = dimer_length
    ceiling = (model.value(x) + 1e3) if energy_ceiling is None else energy_ceiling
    grad = model.gradient
    for it in range(max_iter):
        g0 = grad(x)
        for _ in range(max_rotations):
            g1 = grad(x + dR * N)
            dg = (g1 - g0) / dR
            C0 = float(dg @ N)
            Fperp = _project(-(dg - (dg @ N) * N), T)
            fn = float(np.linalg.norm(Fperp))
            if fn < 1e-3 * max(1.0, abs(C0)):
                break
            Theta = Fperp / fn
            phi1 = math.pi / 40
            N1 = math.cos(phi1) * N + math.sin(phi1) * Theta
            C1 = float((grad(x + dR * N1) - g0) @ N1 / dR)
            b1 = -fn
            a1 = (C0 - C1 + b1 * math.sin(2 * phi1)) / (1 - math.cos(2 * phi1))
            phi = 0.5 * math.atan2(b1, a1)
            # atan2 picks the branch minimising a1 cos 2phi + b1 sin 2phi up to pi/2
            if a1 * math.cos(2 * phi) + b1 * math.sin(2 * phi) > 0:
                phi += 0.5 * math.pi
            N = math.cos(phi) * N + math.sin(phi) * Theta
            N = _project(N, T)
            N /= np.linalg.norm(N)
        C = float((grad(x + dR * N) - g0) @ N / dR)
        gn = float(np.linalg.norm(g0))
        if C < 0 and gn < switch_gtol:
            z = _newton_polish(model, x, gtol=0.1 * gtol)
            cp = classify_point(model, z)
            if cp.index == 1 and cp.gradient_norm <= gtol:
                return z, it
        F = -g0
        Feff = F - 2 * (F @ N) * N if C < 0 else -(F @ N) * N
        fe = float(np.linalg.norm(Feff))
        if fe == 0:
            break
        d = Feff / fe
        Cd = float((grad(x + dR * d) - g0) @ d / dR)
        step = min(fe / abs(Cd), max_step) if Cd > 0 else max_step
        x = x + step * d
        e = model.value(x)
        if not math.isfinite(e) or e > ceiling:
            raise NonConvergence("dimer walk left the physical region")
    raise NonConvergence(f"dimer did not converge in {max_iter} iterations")


@dataclass(frozen=True)
class SaddleSearchResult:
    saddle: CriticalPoint
    minus_end: CriticalPoint
    plus_end: CriticalPoint
    iterations: int
    gradient_norm: float
    start: str = ""

    def to_dict(self):
        return {
            "saddle_value": self.saddle.potential_value,
            "saddle_index": self.saddle.index,
            "minus_end_value": self.minus_end.potential_value,
            "plus_end_value": self.plus_end.potential_value,
            "iterations": self.iterations,
            "gradient_norm": self.gradient_norm,
            "start": self.start,
        }


def _negative_mode(cp: CriticalPoint) -> np.ndarray:
    lam = np.where(cp.zero_mask, np.inf, cp.hessian_eigenvalues)
    return cp.hessian_eigenvectors[:, int(np.argmin(lam))]


def saddle_ends(model: PotentialModel, saddle: CriticalPoint, offset: float = 1e-3):
    """Minima reached by relaxing from the saddle along -/+ its negative mode."""
    v = _negative_mode(saddle)
    ends = []
    for s in (-1.0, 1.0):
        ends.append(classify_point(model, relax(model, saddle.location + s * offset * v)))
    return ends


def find_saddle(
    model: PotentialModel,
    q_a,
    q_b,
    fractions: Sequence[float] = (0.5, 0.6, 0.4, 0.7, 0.3, 0.8, 0.2),
    n_modes: int = 6,
    mode_offset: float = 0.1,
    energy_tol: float = 1e-3,
    **dimer_kwargs,
) -> SaddleSearchResult:
    """Index-1 saddle whose two downhill sides reach q_a and q_b.

    Dimer walks start from points interpolated between q_b and q_a (along
    the minimum-image displacement after removing any rigid shift), oriented
    along that displacement, and then from q_a displaced along its softest
    non-symmetry modes.  The first saddle whose relaxations reach minima
    with the energies of q_a and q_b (within ``energy_tol``) is returned.
    """
    q_a = np.asarray(q_a, dtype=float)
    q_b = np.asarray(q_b, dtype=float)
    va, vb = model.value(q_a), model.value(q_b)
    d = model.displacement(q_a, q_b)
    if isinstance(model, LJCluster):
        shift = np.median(d.reshape(-1, 2), axis=0)
        q_b = q_b + np.tile(shift, model.n)
        d = model.displacement(q_a, q_b)
    if np.linalg.norm(d) == 0:
        raise ValueError("q_a and q_b coincide (modulo the periodic box)")
    starts = [(f"interp {f:g}", q_b + f * d, d) for f in fractions]
    cp_a = classify_point(model, q_a)
    order = np.flatnonzero(~cp_a.zero_mask)[:n_modes]
    for k in order:
        v = cp_a.hessian_eigenvectors[:, k]
        for s in (1.0, -1.0):
            starts.append((f"mode {k} {s:+.0f}", q_a + s * mode_offset * v, s * v))
    seen = []
    for label, x0, n0 in starts:
        if np.linalg.norm(_project(n0, model.zero_mode_basis())) == 0:
            continue
        try:
            z, it = dimer_search(model, x0, n0, **dimer_kwargs)
        except NonConvergence as exc:
            log.debug("%s: %s", label, exc)
            continue
        sp = classify_point(model, z)
        lo, hi = saddle_ends(model, sp)
        ends = sorted([lo.potential_value, hi.potential_value])
        seen.append((label, sp.potential_value, ends))
        log.debug("%s: saddle %.6f -> %s", label, sp.potential_value, ends)
        want = sorted([va, vb])
        if abs(ends[0] - want[0]) <= energy_tol and abs(ends[1] - want[1]) <= energy_tol:
            return SaddleSearchResult(sp, lo, hi, it, sp.gradient_norm, label)
    if seen:
        raise WrongConnectivity(f"saddles found but none joins the two minima: {seen}")
    raise NonConvergence("no saddle found from any start")


# ----------------------------------------------------------- experiment


def cluster_uphill_orbit(
    cluster: LJCluster,
    q_a: CriticalPoint,
    q_s: CriticalPoint,
    gamma: float = 1.0,
    energy_tol: float = 1e-3,
    **shoot_kwargs,
) -> HeteroclinicOrbit:
    """Uphill orbit from the defect minimum to the saddle.

    The damped branches leaving the saddle are followed to rest first; the
    one ending at the energy of q_a is Newton-polished and used as the exact
    target, so its rigid position matches the saddle's.
    """
    damping = Damping.scalar(gamma, cluster.dimension)
    ends = settle_from_saddle(cluster, damping, q_s)
    for x in ends:
        cp = find_critical_point(cluster, _newton_polish(cluster, x))
        if cp.index == 0 and abs(cp.potential_value - q_a.potential_value) <= energy_tol:
            return shoot_uphill(cluster, damping, q_s, cp, **shoot_kwargs)
    raise WrongConnectivity("no damped branch from the saddle settles at the defect minimum")


def direction_weights(cluster: LJCluster, direction: str, amplitude: float = 1.0) -> np.ndarray:
    """Per-coordinate amplitudes selecting x, y, or both components."""
    w = np.zeros(cluster.dimension)
    if direction in ("x", "both"):
        w[0::2] = amplitude
    if direction in ("y", "both"):
        w[1::2] = amplitude
    if direction not in ("x", "y", "both"):
        raise ValueError("direction must be 'x', 'y' or 'both'")
    return w


def cluster_resonance_experiment(
    cluster: LJCluster,
    q_a: CriticalPoint,
    q_s: CriticalPoint,
    gamma: float = 1.0,
    direction: str = "both",
    kind: str = "parametric",
    omega_min: float = 0.1,
    omega_max: Optional[float] = None,
    n_points: int = 2000,
    amplitude: float = 1.0,
    orbit: Optional[HeteroclinicOrbit] = None,
    rel_prominence: float = 0.05,
) -> FrequencySweep:
    """Sweep of the cluster's uphill orbit under x, y, or xy shaking.

    ``omega_max`` defaults to 1.1 times the largest intrinsic frequency at
    q_a.  Pass ``orbit`` to reuse an orbit across directions and kinds.
    """
    if orbit is None:
        orbit = cluster_uphill_orbit(cluster, q_a, q_s, gamma)
    if omega_max is None:
        omega_max = 1.1 * float(intrinsic_frequencies(q_a, drop_zero_modes=True).max())
    w = direction_weights(cluster, direction, amplitude)
    return sweep(orbit, kind, omega_min, omega_max, n_points, w, order=1, rel_prominence=rel_prominence)


# ------------------------------------------------------------------ storage


def save_configuration(path, cluster: LJCluster, q) -> None:
    """CSV rows {j, x, y} under a one-line JSON header {n, box, r0, V}."""
    P = cluster.positions(q)
    head = {"n": cluster.n, "box": list(cluster.cell), "r0": cluster.r0, "V": cluster.value(q)}
    with open(os.fspath(path), "w") as fh:
        fh.write("# " + json.dumps(head) + "\n")
        fh.write("j,x,y\n")
        for j, (x, y) in enumerate(P):
            fh.write(f"{j},{x:.17g},{y:.17g}\n")


def load_configuration(path):
    with open(os.fspath(path)) as fh:
        head = json.loads(fh.readline()[1:])
    data = np.loadtxt(os.fspath(path), delimiter=",", skiprows=2, ndmin=2)
    cluster = LJCluster(head["n"], head["box"], head["r0"])
    return cluster, data[:, 1:].ravel()
