"""Direct simulation of the forced, damped Langevin dynamics.

    dx = v dt
    dv = (-Gamma v - grad V(x) + eps f(x, t)) dt + sqrt(mu) Gamma^{1/2} dW

integrated by Euler-Maruyama.  Each replica draws its noise from an
independent counter-based stream keyed by (seed, replica index), so results
do not depend on the order in which replicas run.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np
from scipy import stats

from . import _kernels as K
from .errors import AllCensored, NonFinite, RegimeWarning, ResolutionError, ResolutionWarning
from .model import Damping, Forcing, PotentialModel

__all__ = [
    "SimulationConfig",
    "TransitionStats",
    "integrate_sde",
    "first_passage_time",
    "measure_transitions",
    "replica_generator",
    "check_resolution",
]

_CHUNK = 1 << 14


@dataclass(frozen=True)
class SimulationConfig:
    """Parameters of one simulation arm.

    ``relax_time`` defaults to 20/gamma_min and ``capture_fraction`` sets the
    capture radius as a fraction of |x_b - x_u|.
    """

    model: PotentialModel
    damping: Damping
    forcing: Optional[Forcing] = None
    eps: float = 0.0
    mu: float = 0.1
    dt: float = 1e-3
    horizon: float = 1e5
    seed: int = 0
    relax_time: Optional[float] = None
    capture_fraction: float = 0.2
    check_every: int = 10
    relax_dt: float = 0.01

    def __post_init__(self):
        if self.eps < 0:
            raise ValueError("eps must be non-negative")
        if self.mu < 0:
            raise ValueError("mu must be non-negative")
        if self.dt <= 0 or self.horizon <= 0:
            raise ValueError("dt and horizon must be positive")
        if self.damping.dimension != self.model.dimension:
            raise ValueError("damping and model dimensions differ")
        if 0 < self.eps < self.mu:
            warnings.warn(
                f"eps={self.eps} < mu={self.mu}: outside the regime where the forcing correction dominates",
                RegimeWarning,
                stacklevel=3,
            )
        if self.forcing is not None and self.eps > 0:
            freqs = np.asarray(getattr(self.forcing, "frequencies", [2 * math.pi / self.forcing.period]))
            if np.max(np.abs(freqs)) * self.dt > 0.05:
                raise ResolutionError(f"forcing frequency * dt = {np.max(np.abs(freqs)) * self.dt:.3g} > 0.05")

    @property
    def relax_duration(self) -> float:
        return self.relax_time if self.relax_time is not None else 20.0 / self.damping.min_eigenvalue

    def kernels(self):
        grad, gparams = self.model.kernel
        if self.forcing is None or self.eps == 0:
            force, fparams = K.zero_force, np.zeros(1)
        else:
            force, fparams = self.forcing.kernel
        return grad, gparams, force, fparams


def replica_generator(seed: int, replica: int) -> np.random.Generator:
    """Philox stream keyed by (seed, replica)."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(replica)])))


def integrate_sde(
    config: SimulationConfig,
    x0,
    v0=None,
    t0: float = 0.0,
    replica: int = 0,
    record_every: int = 1,
    duration: Optional[float] = None,
) -> Iterator[tuple]:
    """Stream (t, x, v) snapshots every ``record_every`` steps.

    Nothing beyond the current chunk is stored, so long runs can be consumed
    on the fly.  Raises NonFinite on blow-up.
    """
    nd = config.model.dimension
    x = np.array(x0, dtype=float).reshape(nd)
    v = np.zeros(nd) if v0 is None else np.array(v0, dtype=float).reshape(nd)
    grad, gp, force, fp = config.kernels()
    gamma = np.ascontiguousarray(config.damping.gamma)
    sg = np.ascontiguousarray(config.damping.sqrt_gamma)
    rng = replica_generator(config.seed, replica)
    n_total = int(round((config.horizon if duration is None else duration) / config.dt))
    step = max(1, int(record_every))
    done = 0
    t = float(t0)
    yield t, x.copy(), v.copy()
    while done < n_total:
        n = min(step, n_total - done)
        noise = rng.standard_normal((n, nd))
        _, ok = K.em_advance(grad, gp, force, fp, gamma, sg, config.eps, config.mu, config.dt, x, v, t, noise)
        if not ok:
            raise NonFinite(f"SDE state overflowed near t = {t:.6g}")
        done += n
        t = t0 + done * config.dt
        yield t, x.copy(), v.copy()


def first_passage_time(config: SimulationConfig, replica: int, x_a, x_b, capture: float) -> float:
    """Time of the first confirmed entry into the basin of x_b, or inf if censored."""
    nd = config.model.dimension
    x = np.array(x_a, dtype=float).reshape(nd)
    v = np.zeros(nd)
    xa = np.ascontiguousarray(x_a, dtype=float).reshape(nd)
    xb = np.ascontiguousarray(x_b, dtype=float).reshape(nd)
    grad, gp, force, fp = config.kernels()
    gamma = np.ascontiguousarray(config.damping.gamma)
    sg = np.ascontiguousarray(config.damping.sqrt_gamma)
    rng = replica_generator(config.seed, replica)
    n_total = int(round(config.horizon / config.dt))
    relax_steps = int(math.ceil(config.relax_duration / config.relax_dt))
    done = 0
    while done < n_total:
        n = min(_CHUNK, n_total - done)
        noise = rng.standard_normal((n, nd))
        steps, status = K.em_first_passage(
            grad, gp, force, fp, gamma, sg, config.eps, config.mu, config.dt, x, v,
            done * config.dt, noise, xa, xb, capture, config.check_every, config.relax_dt, relax_steps,
        )
        if status == K.NONFINITE:
            raise NonFinite(f"replica {replica} overflowed")
        if status == K.REACHED:
            return (done + steps) * config.dt
        done += n
    return math.inf


@dataclass(frozen=True)
class TransitionStats:
    """First-passage times of one arm; censored replicas hold inf."""

    times: np.ndarray = field(repr=False)
    n_replicas: int
    mean: float
    stderr: float
    ci_low: float
    ci_high: float
    confidence: float = 0.95
    horizon: float = math.inf

    @property
    def observed(self) -> np.ndarray:
        return self.times[np.isfinite(self.times)]

    @property
    def count(self) -> int:
        return int(np.isfinite(self.times).sum())

    @property
    def censored_count(self) -> int:
        return self.n_replicas - self.count

    @property
    def rate(self) -> float:
        """Transitions per unit time, counting censored exposure."""
        exposure = self.observed.sum() + self.censored_count * self.horizon
        return self.count / exposure if exposure > 0 else math.nan

    def overlaps(self, other: "TransitionStats") -> bool:
        return not (self.ci_high < other.ci_low or other.ci_high < self.ci_low)

    def summary(self) -> dict:
        return {
            "mean": self.mean,
            "stderr": self.stderr,
            "n": self.count,
            "censored_count": self.censored_count,
            "ci": [self.ci_low, self.ci_high],
        }

    def write_csv(self, path) -> None:
        with open(os.fspath(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["replica", "t_fp", "censored"])
            for k, t in enumerate(self.times):
                w.writerow([k, repr(float(t)) if math.isfinite(t) else "", int(not math.isfinite(t))])

    def write_json(self, path) -> None:
        with open(os.fspath(path), "w") as fh:
            json.dump(self.summary(), fh, indent=2)


def _bootstrap_mean_ci(sample, confidence, seed):
    if sample.size < 2:
        return math.nan, math.nan, math.nan
    res = stats.bootstrap(
        (sample,), np.mean, confidence_level=confidence, n_resamples=2000,
        method="percentile", random_state=np.random.default_rng([int(seed), 0xB007]),
    )
    return float(res.standard_error), float(res.confidence_interval.low), float(res.confidence_interval.high)


def measure_transitions(
    config: SimulationConfig,
    n_replicas: int,
    q_a,
    q_b,
    q_s,
    confidence: float = 0.95,
    progress=None,
) -> TransitionStats:
    """First-passage statistics from q_a into the basin of q_b.

    Each replica starts at rest at q_a with forcing time 0.  A snapshot on
    q_b's side is checked by noise- and force-free damped relaxation; the
    passage counts when the relaxation ends within the capture radius of q_b.
    The mean over transitioning replicas gets a percentile bootstrap CI.
    """
    if n_replicas < 1:
        raise ValueError("n_replicas must be positive")
    q_a, q_b, q_s = (np.asarray(q, dtype=float).reshape(-1) for q in (q_a, q_b, q_s))
    capture = config.capture_fraction * float(np.linalg.norm(q_b - q_s))
    if config.forcing is None and config.eps > 0:
        raise ValueError("eps > 0 needs a forcing")
    times = np.empty(n_replicas)
    for r in range(n_replicas):
        times[r] = first_passage_time(config, r, q_a, q_b, capture)
        if progress is not None:
            progress(r + 1, n_replicas)
    obs = times[np.isfinite(times)]
    if obs.size == 0:
        raise AllCensored(f"no transition in {n_replicas} replicas within horizon {config.horizon}")
    se, lo, hi = _bootstrap_mean_ci(obs, confidence, config.seed)
    return TransitionStats(times, n_replicas, float(obs.mean()), se, lo, hi, confidence, config.horizon)


def check_resolution(config: SimulationConfig, intrinsic_max: float) -> None:
    """Warn when dt under-resolves the fastest intrinsic frequency."""
    if intrinsic_max * config.dt > 0.05:
        warnings.warn(
            f"fastest intrinsic frequency * dt = {intrinsic_max * config.dt:.3g} > 0.05",
            ResolutionWarning,
            stacklevel=2,
        )
