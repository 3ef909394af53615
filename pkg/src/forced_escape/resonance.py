"""Frequency sweeps of the Fourier magnitudes and related resonance tools."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq, minimize_scalar
from scipy.signal import find_peaks

from .action import _check_uphill, _resolution_guard, fourier_magnitude
from .errors import DivisionByNearZero, NotStationary, OutOfWellEnergy
from .hetero import HeteroclinicOrbit, shoot_uphill
from .model import CriticalPoint, Damping, PotentialModel, intrinsic_frequencies

__all__ = [
    "Peak",
    "FrequencySweep",
    "ScalingStudy",
    "sweep",
    "detect_peaks",
    "predicted_resonances",
    "refine_peak",
    "refine_sweep_peak",
    "peak_sharpness",
    "gamma_scaling_study",
    "oscillation_frequency",
    "stationary_phase_estimate",
]


@dataclass(frozen=True)
class Peak:
    omega: float
    magnitude: float
    prominence: float

    def to_dict(self):
        return {"omega_peak": self.omega, "magnitude": self.magnitude, "prominence": self.prominence}


@dataclass(frozen=True)
class FrequencySweep:
    kind: str
    omega_grid: np.ndarray = field(repr=False)
    magnitudes: np.ndarray = field(repr=False)
    peaks: tuple = ()
    predicted: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def argmax(self) -> float:
        return float(self.omega_grid[int(np.argmax(self.magnitudes))])

    @property
    def top_peak(self) -> Optional[Peak]:
        return max(self.peaks, key=lambda p: p.magnitude) if self.peaks else None

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "argmax": self.argmax,
            "max_magnitude": float(self.magnitudes.max()),
            "peaks": [p.to_dict() for p in self.peaks],
            "predicted": self.predicted.tolist(),
        }

    def rows(self):
        return zip(self.omega_grid.tolist(), self.magnitudes.tolist())


@dataclass(frozen=True)
class ScalingStudy:
    gammas: np.ndarray
    peak_omegas: np.ndarray
    peak_magnitudes: np.ndarray
    fitted_exponent: float
    fit_residual: float
    kind: str = "parametric"

    @property
    def ratios(self) -> np.ndarray:
        """Peak-magnitude growth between consecutive damping values."""
        return self.peak_magnitudes[1:] / self.peak_magnitudes[:-1]

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "gammas": self.gammas.tolist(),
            "peak_omegas": self.peak_omegas.tolist(),
            "peak_magnitudes": self.peak_magnitudes.tolist(),
            "ratios": self.ratios.tolist(),
            "fitted_exponent": self.fitted_exponent,
            "fit_residual": self.fit_residual,
        }


def predicted_resonances(frequencies: Sequence[float], order: int = 5) -> np.ndarray:
    """All multiples l*w for l = 1..order, sorted."""
    w = np.asarray(frequencies, dtype=float)
    return np.sort(np.outer(np.arange(1, order + 1), w).ravel())


def detect_peaks(omegas, magnitudes, rel_prominence: float = 0.05) -> tuple:
    """Strict local maxima whose prominence is at least rel_prominence * max."""
    mags = np.asarray(magnitudes, dtype=float)
    top = mags.max() if mags.size else 0.0
    if top <= 0:
        return ()
    idx, props = find_peaks(mags, prominence=rel_prominence * top)
    return tuple(
        Peak(float(omegas[i]), float(mags[i]), float(p)) for i, p in zip(idx, props["prominences"])
    )


def _orbit_frequencies(orbit: HeteroclinicOrbit) -> np.ndarray:
    cp = orbit.start_point
    if cp is None or not np.all(np.isfinite(cp.hessian_eigenvalues)):
        return np.zeros(0)
    return intrinsic_frequencies(cp, drop_zero_modes=True)


def sweep(
    orbit: HeteroclinicOrbit,
    kind: str,
    omega_min: float,
    omega_max: float,
    n_points: int,
    weights: Optional[Sequence[float]] = None,
    order: int = 5,
    rel_prominence: float = 0.05,
) -> FrequencySweep:
    """Fourier magnitude on a uniform grid, with peaks and predicted resonances.

    Predictions are l*sqrt(lambda_i) for the positive Hessian eigenvalues at
    the orbit's starting minimum.  A phase step omega_max*dt above 0.5 is an
    error; above 0.1 it only warns.
    """
    _check_uphill(orbit)
    if omega_min < 0 or omega_max <= omega_min:
        raise ValueError("need 0 <= omega_min < omega_max")
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    _resolution_guard(orbit, omega_max, hard_limit=0.5)
    grid = np.linspace(omega_min, omega_max, n_points)
    w = None if weights is None else np.broadcast_to(np.asarray(weights, float), (orbit.dimension,)).copy()
    mags = np.array([fourier_magnitude(orbit, kind, om, w) for om in grid])
    return FrequencySweep(
        kind=kind,
        omega_grid=grid,
        magnitudes=mags,
        peaks=detect_peaks(grid, mags, rel_prominence),
        predicted=predicted_resonances(_orbit_frequencies(orbit), order),
        weights=w,
    )


def refine_peak(orbit, kind, lo, hi, weights=None, xatol=1e-10):
    """Local maximiser of the magnitude on [lo, hi] (bounded Brent search)."""
    res = minimize_scalar(
        lambda om: -fourier_magnitude(orbit, kind, om, weights),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": xatol},
    )
    return float(res.x), float(-res.fun)


def refine_sweep_peak(orbit, sw: FrequencySweep, peak: Optional[Peak] = None):
    """Refine a grid peak (the largest one by default) between its neighbours."""
    peak = sw.top_peak if peak is None else peak
    i = int(np.searchsorted(sw.omega_grid, peak.omega))
    lo = sw.omega_grid[max(i - 1, 0)]
    hi = sw.omega_grid[min(i + 1, sw.omega_grid.size - 1)]
    return refine_peak(orbit, sw.kind, lo, hi, sw.weights)


def peak_sharpness(orbit, kind, omega_star, d_omega, weights=None) -> float:
    """Ratio magnitude(omega_star) / magnitude(omega_star + d_omega)."""
    if d_omega == 0:
        raise ValueError("d_omega must be nonzero")
    num = fourier_magnitude(orbit, kind, omega_star, weights)
    den = fourier_magnitude(orbit, kind, omega_star + d_omega, weights)
    if den < 1e-14 * max(num, 1.0):
        raise DivisionByNearZero(f"magnitude at {omega_star + d_omega} is {den:.3g}")
    return num / den


def gamma_scaling_study(
    model: PotentialModel,
    gammas: Sequence[float],
    saddle: CriticalPoint,
    minimum: CriticalPoint,
    kind: str = "parametric",
    omega_min: Optional[float] = None,
    omega_max: Optional[float] = None,
    n_points: int = 41,
    weights=None,
    shoot_kwargs: Optional[dict] = None,
    progress: Optional[Callable[[float, float, float], None]] = None,
) -> ScalingStudy:
    """Peak magnitude of the sweep as the damping decreases.

    For each damping value the uphill orbit is recomputed with its own
    default time step, the grid argmax in [omega_min, omega_max] is refined
    between neighbouring grid points, and log(peak) is fitted against
    log(1/gamma).  The window defaults to [0.5, 1.5] times the lowest
    intrinsic frequency.
    """
    g = np.asarray(gammas, dtype=float)
    if g.size < 2 or np.any(np.diff(g) >= 0):
        raise ValueError("gammas must be strictly decreasing with at least two entries")
    lam = np.asarray(minimum.hessian_eigenvalues)
    lam_min = lam[lam > 0].min()
    if g[0] ** 2 >= 4 * lam_min:
        raise ValueError("largest gamma is not underdamped at the minimum")
    w0 = math.sqrt(lam_min)
    lo = 0.5 * w0 if omega_min is None else omega_min
    hi = 1.5 * w0 if omega_max is None else omega_max
    peak_om, peak_mag = [], []
    for gamma in g:
        damping = Damping.scalar(float(gamma), model.dimension)
        orbit = shoot_uphill(model, damping, saddle, minimum, **(shoot_kwargs or {}))
        sw = sweep(orbit, kind, lo, hi, n_points, weights)
        i = int(np.argmax(sw.magnitudes))
        a = sw.omega_grid[max(i - 1, 0)]
        b = sw.omega_grid[min(i + 1, n_points - 1)]
        om, mag = refine_peak(orbit, kind, a, b, weights)
        peak_om.append(om)
        peak_mag.append(mag)
        if progress is not None:
            progress(float(gamma), om, mag)
        del orbit, sw
    x = np.log(1.0 / g)
    y = np.log(peak_mag)
    slope, icept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + icept)) ** 2)))
    return ScalingStudy(g, np.array(peak_om), np.array(peak_mag), float(slope), resid, kind)


# --------------------------------------------------------- well oscillations


def _turning_point(model, x0, E, direction, limit):
    """First crossing of V = E walking from x0 in the given direction."""
    f = lambda x: model.value([x]) - E
    step = 1e-3 * (1.0 + abs(x0))
    a = x0
    for _ in range(100_000):
        b = a + direction * step
        if limit is not None and (b - limit) * direction >= 0:
            b = limit
        if f(b) >= 0:
            return brentq(f, min(a, b), max(a, b), xtol=1e-15, rtol=4 * np.finfo(float).eps)
        if b == limit:
            break
        a = b
        step *= 1.05
    raise OutOfWellEnergy(f"no turning point at E={E}")


def oscillation_frequency(
    model: PotentialModel,
    minimum: CriticalPoint,
    E: float,
    saddle: Optional[CriticalPoint] = None,
) -> float:
    """Angular frequency 2*pi/T(E) of undamped motion at energy E in a 1-D well.

    The period integral 2 int dx / sqrt(2(E - V)) between the turning points
    is evaluated after the substitution x = c + r sin(phi), which removes the
    endpoint singularities.  Without a saddle the well is taken as unbounded.
    """
    if model.dimension != 1:
        raise ValueError("oscillation_frequency needs a 1-D model")
    xm = float(minimum.location[0])
    vmin = minimum.potential_value
    vmax = math.inf if saddle is None else saddle.potential_value
    if not (vmin < E < vmax):
        raise OutOfWellEnergy(f"E={E} outside ({vmin}, {vmax})")
    lim_hi = lim_lo = None
    if saddle is not None:
        xs = float(saddle.location[0])
        if xs > xm:
            lim_hi = xs
        else:
            lim_lo = xs
    xl = _turning_point(model, xm, E, -1.0, lim_lo)
    xr = _turning_point(model, xm, E, +1.0, lim_hi)
    c, r = 0.5 * (xr + xl), 0.5 * (xr - xl)

    def integrand(phi):
        gap = E - model.value([c + r * math.sin(phi)])
        if gap <= 0:
            return 0.0
        return r * math.cos(phi) / math.sqrt(2.0 * gap)

    with warnings.catch_warnings():
        # energies barely above the minimum hit round-off in E - V; the
        # integrand is still smooth and the estimate accurate
        warnings.simplefilter("ignore", IntegrationWarning)
        half, _ = quad(integrand, -math.pi / 2, math.pi / 2, epsabs=0.0, epsrel=1e-11, limit=200)
    return 2 * math.pi / (2.0 * half)


# ---------------------------------------------------------- stationary phase


def stationary_phase_estimate(
    f: Callable[[float], complex],
    g: Callable[[float], float],
    c: float,
    nu: float,
    h: float = 1e-4,
    g1: Optional[Callable[[float], float]] = None,
    g2: Optional[Callable[[float], float]] = None,
) -> complex:
    """Leading stationary-phase value of int f(t) exp(i nu g(t)) dt around c.

    Derivatives of g default to central differences with step h.
    """
    d1 = g1(c) if g1 is not None else (g(c + h) - g(c - h)) / (2 * h)
    d2 = g2(c) if g2 is not None else (g(c + h) - 2 * g(c) + g(c - h)) / h**2
    if abs(d1) > 1e-6 * (1 + abs(d2)):
        raise NotStationary(f"g'({c}) = {d1:.3g}")
    if d2 == 0:
        raise NotStationary("g''(c) vanishes")
    sigma = 1.0 if d2 > 0 else -1.0
    amp = math.sqrt(2 * math.pi / (nu * abs(d2)))
    return complex(f(c)) * np.exp(1j * nu * g(c)) * amp * np.exp(1j * math.pi * sigma / 4)
