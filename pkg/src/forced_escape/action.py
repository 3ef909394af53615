"""First-order action correction along an uphill orbit.

For a periodic forcing f the correction at phase t0 is

    dS(t0) = -2 int v(s) . f(x(s), s + t0) ds

over the sampled orbit, and the rate-relevant value is its minimum over
t0.  For sinusoidal forcings everything reduces to the Fourier sums
``int v_j e^{i w s} ds`` (additive) and ``int v_j x_j e^{i w s} ds``
(parametric), evaluated by the trapezoid rule.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels as K
from .errors import NegativeExponent, ResolutionWarning
from .hetero import HeteroclinicOrbit
from .model import AdditiveSinusoid, Forcing, ParametricSinusoid

__all__ = [
    "FourierIntegral",
    "ActionCorrection",
    "fourier_integral",
    "fourier_magnitude",
    "delta_S",
    "delta_S_curve",
    "minimize_over_t0",
    "closed_form_correction",
    "stationarity_residual",
    "total_rate_exponent",
]

KINDS = ("linear", "parametric")


@dataclass(frozen=True)
class FourierIntegral:
    """Per-component Fourier sums at one frequency."""

    omega: float
    kind: str
    values: np.ndarray
    weights: np.ndarray

    @property
    def weighted(self) -> complex:
        return complex(np.sum(self.weights * self.values))

    @property
    def magnitude(self) -> float:
        return abs(self.weighted)

    def to_row(self) -> dict:
        return {"omega": self.omega, "magnitude": self.magnitude,
                "re": self.weighted.real, "im": self.weighted.imag}


@dataclass(frozen=True)
class ActionCorrection:
    """dS over a grid of forcing phases and its refined minimum."""

    t0_grid: np.ndarray = field(repr=False)
    deltaS_values: np.ndarray = field(repr=False)
    deltaS_e: float = 0.0
    t0_star: float = 0.0
    method: str = "quadrature"
    period: float = math.inf

    def summary(self) -> dict:
        return {"deltaS_e": self.deltaS_e, "t0_star": self.t0_star, "method": self.method}


def _check_uphill(orbit: HeteroclinicOrbit):
    if orbit.direction != "uphill":
        raise ValueError(
            "action corrections are defined on uphill orbits; the downhill leg contributes zero at first order"
        )


def _resolution_guard(orbit, omega, hard_limit=None):
    phase = abs(omega) * orbit.dt
    if hard_limit is not None and phase > hard_limit:
        from .errors import ResolutionError

        raise ResolutionError(f"omega*dt = {phase:.3g} exceeds {hard_limit}")
    if phase > 0.1:
        warnings.warn(f"omega*dt = {phase:.3g} > 0.1: phase under-resolved", ResolutionWarning, stacklevel=3)


def _components(orbit: HeteroclinicOrbit, kind: str, omega: float) -> np.ndarray:
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    return K.fourier_components(orbit.positions, orbit.velocities, kind == "parametric", orbit.dt, float(omega))


def fourier_integral(
    orbit: HeteroclinicOrbit, kind: str, omega: float, weights: Optional[Sequence[float]] = None
) -> FourierIntegral:
    """Trapezoid Fourier sums of v_j (linear) or v_j x_j (parametric).

    The time origin is the first orbit sample.
    """
    _check_uphill(orbit)
    _resolution_guard(orbit, omega)
    w = np.ones(orbit.dimension) if weights is None else np.broadcast_to(np.asarray(weights, float), (orbit.dimension,))
    return FourierIntegral(float(omega), kind, _components(orbit, kind, omega), np.array(w))


def fourier_magnitude(orbit, kind, omega, weights=None) -> float:
    """|sum_j w_j I_j(omega)| without building the record (no guard)."""
    vals = _components(orbit, kind, omega)
    if weights is None:
        return float(abs(vals.sum()))
    return float(abs(np.sum(np.asarray(weights, float) * vals)))


def _forcing_samples(orbit, forcing, t0):
    return forcing.evaluate_many(orbit.positions, orbit.times + t0)


def delta_S(orbit: HeteroclinicOrbit, forcing: Forcing, t0: float) -> float:
    """Trapezoid value of -2 int v(s) . f(x(s), s + t0) ds."""
    _check_uphill(orbit)
    f = _forcing_samples(orbit, forcing, t0)
    integrand = np.einsum("ki,ki->k", orbit.velocities, f)
    return float(-2.0 * np.trapezoid(integrand, dx=orbit.dt))


def delta_S_curve(orbit: HeteroclinicOrbit, forcing: Forcing, t0s) -> np.ndarray:
    """dS on a set of phases.

    Sinusoids are handled through their Fourier sums, so each phase costs
    O(nd) once the sums exist; general forcings fall back to quadrature.
    """
    t0s = np.asarray(t0s, dtype=float)
    if isinstance(forcing, (AdditiveSinusoid, ParametricSinusoid)):
        return _sinusoid_curve(orbit, forcing, t0s)
    return np.array([delta_S(orbit, forcing, t) for t in t0s])


def _sinusoid_curve(orbit, forcing, t0s):
    kind = "parametric" if isinstance(forcing, ParametricSinusoid) else "linear"
    out = np.zeros_like(t0s)
    A, w, th = forcing.amplitudes, forcing.frequencies, forcing.phases
    # group components that share a frequency so each Fourier sum runs once
    for freq in np.unique(w[A != 0]):
        cols = (w == freq) & (A != 0)
        vals = _components(orbit, kind, freq)[cols]
        c = np.sum(A[cols] * np.exp(1j * th[cols]) * vals)
        out += -2.0 * np.real(np.exp(1j * freq * t0s) * c)
    # zero-frequency components contribute a constant
    zero = (w == 0) & (A != 0)
    if zero.any():
        vals = _components(orbit, kind, 0.0)[zero]
        out += -2.0 * np.real(np.sum(A[zero] * np.cos(th[zero]) * vals))
    return out


def closed_form_correction(orbit: HeteroclinicOrbit, forcing: Forcing) -> Optional[ActionCorrection]:
    """Exact minimum for a single-frequency homogeneous sinusoid, else None.

    With C = sum_j A_j I_j(w) and common phase theta,
    dS(t0) = -2 Re[e^{i(w t0 + theta)} C], minimised at
    t0* = (-theta - arg C)/w (mod period) with value -2|C|.
    """
    if not isinstance(forcing, (AdditiveSinusoid, ParametricSinusoid)) or not forcing.is_homogeneous:
        return None
    A = forcing.amplitudes
    active = A != 0
    if not active.any():
        return ActionCorrection(np.zeros(1), np.zeros(1), 0.0, 0.0, "closed_form", forcing.period)
    omega = float(forcing.frequencies[active][0])
    theta = float(forcing.phases[active][0])
    kind = "parametric" if isinstance(forcing, ParametricSinusoid) else "linear"
    c = complex(np.sum(A * _components(orbit, kind, omega)))
    tau = forcing.period
    t_star = float(((-theta - math.atan2(c.imag, c.real)) / omega) % tau)
    return ActionCorrection(
        t0_grid=np.array([t_star]),
        deltaS_values=np.array([-2.0 * abs(c)]),
        deltaS_e=float(-2.0 * abs(c)),
        t0_star=t_star,
        method="closed_form",
        period=tau,
    )


def minimize_over_t0(
    orbit: HeteroclinicOrbit, forcing: Forcing, n_grid: int = 256, method: str = "auto"
) -> ActionCorrection:
    """Minimum of dS over one forcing period.

    ``method='auto'`` uses the closed form when it applies and the grid scan
    otherwise; ``'quadrature'`` forces the scan (grid of ``n_grid`` phases
    followed by bounded Brent refinement to 1e-8 of the period).
    """
    _check_uphill(orbit)
    if n_grid < 8:
        raise ValueError("n_grid must be at least 8")
    if method not in ("auto", "closed_form", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method in ("auto", "closed_form"):
        cf = closed_form_correction(orbit, forcing)
        if cf is not None:
            return cf
        if method == "closed_form":
            raise ValueError("closed form requires a single-frequency homogeneous sinusoid")
    tau = forcing.period
    if not math.isfinite(tau):
        raise ValueError("forcing has no finite period")
    # direct quadrature of the sampled forcing, independent of the closed form
    grid = np.arange(n_grid) * (tau / n_grid)
    vals = np.array([delta_S(orbit, forcing, t) for t in grid])
    k = int(np.argmin(vals))
    h = tau / n_grid
    res = minimize_scalar(
        lambda t: delta_S(orbit, forcing, t),
        bounds=(grid[k] - h, grid[k] + h),
        method="bounded",
        options={"xatol": 1e-8 * tau},
    )
    best_t, best = float(res.x), float(res.fun)
    if vals[k] < best:
        best_t, best = float(grid[k]), float(vals[k])
    return ActionCorrection(grid, vals, best, best_t % tau, "quadrature", tau)


def stationarity_residual(orbit: HeteroclinicOrbit, forcing: Forcing, t0: float, h: float = 1e-6) -> float:
    """Trapezoid value of int [a . f + v . (Df v)] ds at phase t0.

    This is half the t0-derivative of dS and vanishes at an interior
    optimum; Df v comes from a central difference of f along v.
    """
    _check_uphill(orbit)
    X, V, T = orbit.positions, orbit.velocities, orbit.times + t0
    a = orbit.accelerations()
    f = forcing.evaluate_many(X, T)
    df = (forcing.evaluate_many(X + h * V, T) - forcing.evaluate_many(X - h * V, T)) / (2 * h)
    integrand = np.einsum("ki,ki->k", a, f) + np.einsum("ki,ki->k", V, df)
    return float(np.trapezoid(integrand, dx=orbit.dt))


def total_rate_exponent(barrier_action: float, deltaS_e: float, eps: float) -> float:
    """First-order exponent S = S0 + eps * dS_e.

    The transition rate behaves like exp(-S / mu) as mu -> 0; the downhill
    leg adds nothing at this order.
    """
    if eps < 0:
        raise ValueError("eps must be non-negative")
    s = barrier_action + eps * deltaS_e
    if s < 0:
        warnings.warn("negative exponent: eps is too large for a first-order correction", NegativeExponent, stacklevel=2)
    return s
