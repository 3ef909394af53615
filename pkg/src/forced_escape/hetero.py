"""Heteroclinic orbits between a minimum and an index-1 saddle.

Both orbit directions are computed by integrating the damped dynamics
``x'' + G x' + grad V = 0`` forward in time from a point just off the saddle
along its unstable direction.  The uphill orbit (minimum to saddle, solving
``x'' - G x' + grad V = 0``) is that trajectory reversed in time with the
velocity sign flipped.
"""

from __future__ import annotations

import io
import json
import logging
import math
import os
import zipfile
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .errors import NoUnstableDirection, NonFinite, WrongBasin
from .model import CriticalPoint, Damping, PotentialModel

log = logging.getLogger(__name__)

__all__ = [
    "HeteroclinicOrbit",
    "HamiltonianLift",
    "default_dt",
    "saddle_unstable_direction",
    "shoot_uphill",
    "shoot_downhill",
    "settle_from_saddle",
    "fw_action",
    "hamiltonian_lift",
    "rk4_step",
    "ode_residual",
    "save_orbit",
    "load_orbit",
]

_CHUNK = 1 << 18


@dataclass(frozen=True)
class HeteroclinicOrbit:
    """Uniformly sampled trajectory with endpoint metadata."""

    direction: str
    dt: float
    positions: np.ndarray = field(repr=False)
    velocities: np.ndarray = field(repr=False)
    gamma: np.ndarray = field(repr=False)
    start_point: Optional[CriticalPoint] = field(default=None, repr=False)
    end_point: Optional[CriticalPoint] = field(default=None, repr=False)
    start_residual: float = 0.0
    end_residual: float = 0.0
    saddle_offset: float = 0.0

    @property
    def n_samples(self) -> int:
        return self.positions.shape[0]

    @property
    def dimension(self) -> int:
        return self.positions.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.n_samples)

    @property
    def duration(self) -> float:
        return self.dt * (self.n_samples - 1)

    def accelerations(self, order: int = 2) -> np.ndarray:
        """Finite-difference time derivative of the stored velocities.

        ``order=2`` uses centred second-order differences (one-sided at the
        ends); ``order=4`` uses the five-point centred stencil with
        one-sided fourth-order stencils at the two samples nearest each end.
        """
        if order == 2:
            return np.gradient(self.velocities, self.dt, axis=0, edge_order=2)
        if order == 4:
            return _derivative4(self.velocities, self.dt)
        raise ValueError("order must be 2 or 4")

    def metadata(self) -> dict:
        def pt(cp):
            if cp is None:
                return None
            return {"location": cp.location.tolist(), "value": cp.potential_value, "index": cp.index}

        return {
            "nd": self.dimension,
            "dt": self.dt,
            "direction": self.direction,
            "gamma": self.gamma.tolist(),
            "start_residual": self.start_residual,
            "end_residual": self.end_residual,
            "saddle_offset": self.saddle_offset,
            "start_point": pt(self.start_point),
            "end_point": pt(self.end_point),
        }


def default_dt(damping: Damping) -> float:
    """1e-3, reduced to the smallest damping rate when that is below 1e-3."""
    return min(1e-3, damping.min_eigenvalue)


def saddle_unstable_direction(saddle: CriticalPoint, damping: Damping):
    """Unstable eigenpair of the damped first-order system at the saddle.

    Returns (growth rate, position part, velocity part), normalised so the
    full phase-space vector has unit length.
    """
    nd = saddle.dimension
    H = saddle.hessian_eigenvectors @ np.diag(saddle.hessian_eigenvalues) @ saddle.hessian_eigenvectors.T
    J = np.block([[np.zeros((nd, nd)), np.eye(nd)], [-H, -damping.gamma]])
    w, V = np.linalg.eig(J)
    k = int(np.argmax(w.real))
    if not w[k].real > 0:
        raise NoUnstableDirection("damped Jacobian at the saddle has no growing mode")
    vec = V[:, k]
    # real eigenvalue for an index-1 saddle; rotate away any complex phase
    vec = vec * np.exp(-1j * np.angle(vec[np.argmax(np.abs(vec))]))
    vec = vec.real / np.linalg.norm(vec.real)
    return float(w[k].real), vec[:nd], vec[nd:]


def _run_damped(model, damping, x0, v0, dt, target, tol, max_time, settle_tol):
    """Integrate the damped dynamics in chunks; return (X, V, status)."""
    grad, params = model.kernel
    loop = K.damped_rk4
    gamma = np.ascontiguousarray(damping.gamma, dtype=float)
    target = np.ascontiguousarray(target, dtype=float)
    n_max = int(math.ceil(max_time / dt)) + 1
    xs, vs = [], []
    x, v = np.asarray(x0, dtype=float).copy(), np.asarray(v0, dtype=float).copy()
    total = 0
    status = K.RUNNING
    while total < n_max:
        n = min(_CHUNK, n_max - total + (1 if total else 0))
        bx = np.empty((n, x.size))
        bv = np.empty((n, x.size))
        rows, status = loop(grad, params, gamma, x, v, dt, bx, bv, target, tol, settle_tol)
        first = 0 if total == 0 else 1  # row 0 repeats the previous chunk's last state
        xs.append(bx[first:rows])
        vs.append(bv[first:rows])
        total += rows - first
        x, v = bx[rows - 1].copy(), bv[rows - 1].copy()
        if status != K.RUNNING:
            break
    X = np.concatenate(xs)
    V = np.concatenate(vs)
    if status == K.NONFINITE:
        raise NonFinite("trajectory overflowed during shooting")
    return X, V, status


def _shoot(model, damping, saddle, target_min, dt, delta, tol, max_time):
    if saddle.index != 1:
        raise ValueError(f"saddle must have index 1, got {saddle.index}")
    if target_min.index != 0:
        raise ValueError(f"target must be a minimum, got index {target_min.index}")
    dt = default_dt(damping) if dt is None else float(dt)
    max_time = 50.0 / damping.min_eigenvalue if max_time is None else float(max_time)
    xu = np.asarray(saddle.location, dtype=float)
    offset = delta * max(1.0, float(np.linalg.norm(xu)))
    rate, ex, ev = saddle_unstable_direction(saddle, damping)
    settle_tol = 1e-3 * tol
    attempts = []
    for sign in (1.0, -1.0):
        x0 = xu + sign * offset * ex
        v0 = sign * offset * ev
        X, V, status = _run_damped(model, damping, x0, v0, dt, target_min.location, tol, max_time, settle_tol)
        attempts.append((sign, status, X[-1]))
        if status == K.REACHED:
            log.debug("shot with sign %+d reached target after %d steps", sign, len(X))
            return X, V, dt, offset
    detail = ", ".join(
        f"sign {s:+.0f}: {'settled' if st == K.SETTLED else 'ran out of time'} at V={model.value(xe):.6g}"
        for s, st, xe in attempts
    )
    raise WrongBasin(f"neither unstable branch reached the target minimum ({detail})")


def shoot_uphill(
    model: PotentialModel,
    damping: Damping,
    saddle: CriticalPoint,
    target_min: CriticalPoint,
    dt: Optional[float] = None,
    delta: float = 1e-6,
    tol_a: float = 1e-8,
    max_time: Optional[float] = None,
) -> HeteroclinicOrbit:
    """Orbit from the minimum ``target_min`` up to ``saddle``.

    ``delta`` is scaled by max(1, |x_u|); ``dt`` defaults to
    :func:`default_dt` and ``max_time`` to 50 / (smallest damping rate).
    """
    X, V, dt, offset = _shoot(model, damping, saddle, target_min, dt, delta, tol_a, max_time)
    X = np.ascontiguousarray(X[::-1])
    V = np.ascontiguousarray(-V[::-1])
    X.setflags(write=False)
    V.setflags(write=False)
    xa, xu = target_min.location, saddle.location
    return HeteroclinicOrbit(
        direction="uphill",
        dt=dt,
        positions=X,
        velocities=V,
        gamma=np.array(damping.gamma),
        start_point=target_min,
        end_point=saddle,
        start_residual=float(np.sqrt(np.sum((X[0] - xa) ** 2) + np.sum(V[0] ** 2))),
        end_residual=float(np.sqrt(np.sum((X[-1] - xu) ** 2) + np.sum(V[-1] ** 2))),
        saddle_offset=offset,
    )


def shoot_downhill(
    model: PotentialModel,
    damping: Damping,
    saddle: CriticalPoint,
    target_min: CriticalPoint,
    dt: Optional[float] = None,
    delta: float = 1e-6,
    tol_b: float = 1e-8,
    max_time: Optional[float] = None,
) -> HeteroclinicOrbit:
    """Damped relaxation from ``saddle`` into ``target_min``."""
    X, V, dt, offset = _shoot(model, damping, saddle, target_min, dt, delta, tol_b, max_time)
    X.setflags(write=False)
    V.setflags(write=False)
    xb, xu = target_min.location, saddle.location
    return HeteroclinicOrbit(
        direction="downhill",
        dt=dt,
        positions=X,
        velocities=V,
        gamma=np.array(damping.gamma),
        start_point=saddle,
        end_point=target_min,
        start_residual=float(np.sqrt(np.sum((X[0] - xu) ** 2) + np.sum(V[0] ** 2))),
        end_residual=float(np.sqrt(np.sum((X[-1] - xb) ** 2) + np.sum(V[-1] ** 2))),
        saddle_offset=offset,
    )


def settle_from_saddle(
    model: PotentialModel,
    damping: Damping,
    saddle: CriticalPoint,
    dt: Optional[float] = None,
    delta: float = 1e-6,
    max_time: Optional[float] = None,
    settle_tol: float = 1e-6,
):
    """Follow both unstable branches until the motion comes to rest.

    Returns the two resting positions (sign +1 first).  Useful when the
    minima on either side are not known in advance.
    """
    dt = default_dt(damping) if dt is None else float(dt)
    max_time = 50.0 / damping.min_eigenvalue if max_time is None else float(max_time)
    xu = np.asarray(saddle.location, dtype=float)
    offset = delta * max(1.0, float(np.linalg.norm(xu)))
    _, ex, ev = saddle_unstable_direction(saddle, damping)
    ends = []
    nowhere = np.full(xu.size, np.inf)
    for sign in (1.0, -1.0):
        X, _, _ = _run_damped(model, damping, xu + sign * offset * ex, sign * offset * ev,
                              dt, nowhere, 0.0, max_time, settle_tol)
        ends.append(X[-1].copy())
    return ends


def _derivative4(y: np.ndarray, h: float) -> np.ndarray:
    if y.shape[0] < 5:
        raise ValueError("need at least 5 samples for fourth-order differences")
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[0] = (-25 * y[0] + 48 * y[1] - 36 * y[2] + 16 * y[3] - 3 * y[4]) / (12 * h)
    d[1] = (-3 * y[0] - 10 * y[1] + 18 * y[2] - 6 * y[3] + y[4]) / (12 * h)
    d[-1] = (25 * y[-1] - 48 * y[-2] + 36 * y[-3] - 16 * y[-4] + 3 * y[-5]) / (12 * h)
    d[-2] = (3 * y[-1] + 10 * y[-2] - 18 * y[-3] + 6 * y[-4] - y[-5]) / (12 * h)
    return d


def ode_residual(orbit: HeteroclinicOrbit, model: PotentialModel, order: int = 4) -> np.ndarray:
    """Per-sample norm of x'' -/+ G x' + grad V (sign by orbit direction).

    The acceleration uses fourth-order differences by default, so the
    residual reflects the integrator error rather than the stencil's.
    """
    a = orbit.accelerations(order)
    gv = orbit.velocities @ orbit.gamma.T
    sign = -1.0 if orbit.direction == "uphill" else 1.0
    r = a + sign * gv + model.gradients(orbit.positions)
    return np.linalg.norm(r, axis=1)


def fw_action(orbit: HeteroclinicOrbit, model: PotentialModel, damping: Damping) -> float:
    """Trapezoid value of 1/2 int |x'' + G x' + grad V|^2_{G^-1} dt.

    The acceleration comes from second-order differences of the stored
    velocities (one-sided at the two ends).
    """
    a = orbit.accelerations()
    r = a + orbit.velocities @ damping.gamma.T + model.gradients(orbit.positions)
    ginv = damping.inverse()
    integrand = 0.5 * np.einsum("ki,ij,kj->k", r, ginv, r)
    return float(np.trapezoid(integrand, dx=orbit.dt))


@dataclass(frozen=True)
class HamiltonianLift:
    """Phase-space lift (q1, q2, p1, p2) of an orbit and the Hamiltonian H0."""

    q1: np.ndarray = field(repr=False)
    q2: np.ndarray = field(repr=False)
    p1: np.ndarray = field(repr=False)
    p2: np.ndarray = field(repr=False)
    H0: np.ndarray = field(repr=False)
    dt: float = 0.0

    @property
    def max_abs_H0(self) -> float:
        return float(np.max(np.abs(self.H0)))

    def residuals(self, model: PotentialModel, damping: Damping) -> dict:
        """Largest deviations of the differenced momenta from their equations.

        p1' should equal Hess V(q1)^T p2 and p2' should equal G p2 - p1.
        """
        dp1 = np.gradient(self.p1, self.dt, axis=0, edge_order=2)
        dp2 = np.gradient(self.p2, self.dt, axis=0, edge_order=2)
        rhs1 = model.hessian_vector_products(self.q1, self.p2)
        rhs2 = self.p2 @ damping.gamma.T - self.p1
        return {
            "p1_dot": float(np.max(np.abs(dp1 - rhs1))),
            "p2_dot": float(np.max(np.abs(dp2 - rhs2))),
        }


def hamiltonian_lift(orbit: HeteroclinicOrbit, model: PotentialModel, damping: Damping) -> HamiltonianLift:
    """Momenta along an uphill orbit: p2 = 2 q2 and p1 = 2 G q2 - 2 q2'."""
    if orbit.direction != "uphill":
        # along a downhill orbit the lift is p2 = 0 with constant p1 = 0
        q1 = orbit.positions
        q2 = orbit.velocities
        zero = np.zeros_like(q1)
        H0 = zero[:, 0].copy()
        return HamiltonianLift(q1, q2, zero, zero.copy(), H0, orbit.dt)
    q1 = orbit.positions
    q2 = orbit.velocities
    gq2 = q2 @ damping.gamma.T
    p2 = 2.0 * q2
    p1 = 2.0 * gq2 - 2.0 * orbit.accelerations()
    grad = model.gradients(q1)
    H0 = (
        0.5 * np.einsum("ki,ij,kj->k", p2, damping.gamma, p2)
        + np.einsum("ki,ki->k", p1, q2)
        - np.einsum("ki,ki->k", p2, gq2 + grad)
    )
    return HamiltonianLift(q1, q2, p1, p2, H0, orbit.dt)


def rk4_step(field_fn: Callable, state, dt: float) -> np.ndarray:
    """One classical Runge-Kutta step of y' = field_fn(y)."""
    y = np.asarray(state, dtype=float)
    k1 = np.asarray(field_fn(y), dtype=float)
    k2 = np.asarray(field_fn(y + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(field_fn(y + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(field_fn(y + dt * k3), dtype=float)
    out = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise NonFinite("RK4 step produced a non-finite state")
    return out


# ------------------------------------------------------------------ storage


def _write_npz(path, **arrays) -> None:
    # fixed member timestamps keep the file byte-identical across runs
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def save_orbit(path, orbit: HeteroclinicOrbit) -> None:
    """Write an orbit as .npz (binary) or .csv (JSON header line + rows)."""
    path = os.fspath(path)
    meta = orbit.metadata()
    if path.endswith(".npz"):
        _write_npz(path, positions=orbit.positions, velocities=orbit.velocities, meta=np.array(json.dumps(meta)))
        return
    nd = orbit.dimension
    cols = ["t"] + [f"x_{i + 1}" for i in range(nd)] + [f"v_{i + 1}" for i in range(nd)]
    data = np.column_stack([orbit.times, orbit.positions, orbit.velocities])
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        fh.write(",".join(cols) + "\n")
        np.savetxt(fh, data, delimiter=",", fmt="%.17g")


def load_orbit(path) -> HeteroclinicOrbit:
    """Read an orbit written by :func:`save_orbit`.

    Endpoints come back as location/value records only; reclassify them with
    :func:`forced_escape.model.classify_point` when spectra are needed.
    """
    path = os.fspath(path)
    if path.endswith(".npz"):
        with np.load(path) as z:
            X, V = z["positions"], z["velocities"]
            meta = json.loads(str(z["meta"]))
    else:
        with open(path) as fh:
            meta = json.loads(fh.readline()[1:])
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        nd = meta["nd"]
        X, V = data[:, 1 : 1 + nd], data[:, 1 + nd : 1 + 2 * nd]
    X = np.ascontiguousarray(X)
    V = np.ascontiguousarray(V)
    X.setflags(write=False)
    V.setflags(write=False)
    return HeteroclinicOrbit(
        direction=meta["direction"],
        dt=float(meta["dt"]),
        positions=X,
        velocities=V,
        gamma=np.asarray(meta["gamma"], dtype=float),
        start_point=_point_stub(meta.get("start_point")),
        end_point=_point_stub(meta.get("end_point")),
        start_residual=float(meta["start_residual"]),
        end_residual=float(meta["end_residual"]),
        saddle_offset=float(meta["saddle_offset"]),
    )


def _point_stub(rec):
    if rec is None:
        return None
    loc = np.asarray(rec["location"], dtype=float)
    nd = loc.size
    return CriticalPoint(
        location=loc,
        potential_value=float(rec["value"]),
        hessian_eigenvalues=np.full(nd, np.nan),
        hessian_eigenvectors=np.eye(nd),
        index=int(rec["index"]),
        zero_mask=np.zeros(nd, dtype=bool),
    )
