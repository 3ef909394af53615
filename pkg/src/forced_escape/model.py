"""Potentials, damping, periodic forcings, and critical points.

A :class:`PotentialModel` exposes ``value``, ``gradient`` and ``hessian`` on
flat coordinate vectors.  Built-in models also expose a compiled gradient
kernel used by the integrators; callback models fall back to finite
differences and interpreted loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels as K
from .errors import (
    NoCommonPeriod,
    NonConvergence,
    NotAMinimum,
    SingularHessian,
    ZeroMode,
)

__all__ = [
    "PotentialModel",
    "DoubleWell",
    "Pendulum",
    "Harmonic",
    "CallbackModel",
    "make_model",
    "Damping",
    "Forcing",
    "AdditiveSinusoid",
    "ParametricSinusoid",
    "GeneralPeriodic",
    "common_period",
    "evaluate_forcing",
    "CriticalPoint",
    "classify_point",
    "find_critical_point",
    "intrinsic_frequencies",
]

ZERO_EIG_RTOL = 1e-8


# ---------------------------------------------------------------- potentials


class PotentialModel:
    """Base class for a potential V on R^nd.

    Subclasses implement ``value``, ``gradient`` and ``hessian``.  ``box``
    holds one period per coordinate (or None when the coordinate is not
    periodic).  ``n_zero_modes`` counts exact symmetry modes of the Hessian
    (two rigid translations for a periodic 2-D cluster).
    """

    name = "potential"
    n_zero_modes = 0

    def __init__(self, dimension: int, box: Optional[Sequence[float]] = None):
        if dimension < 1:
            raise ValueError("dimension must be positive")
        self.dimension = int(dimension)
        if box is not None:
            box = tuple(float(b) for b in box)
            if len(box) != self.dimension or any(b <= 0 for b in box):
                raise ValueError("box needs one positive period per coordinate")
        self.box = box

    def value(self, x) -> float:
        raise NotImplementedError

    def gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, x) -> np.ndarray:
        raise NotImplementedError

    # vectorised helpers over samples (rows); subclasses override when cheap
    def values(self, X) -> np.ndarray:
        return np.array([self.value(x) for x in np.atleast_2d(X)])

    def gradients(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self.gradient(x) for x in X]).reshape(X.shape)

    def hessian_vector_products(self, X, U, step: float = 1e-5) -> np.ndarray:
        """Rows of Hess V(X[k]) @ U[k], by central differences of the gradient."""
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        return (self.gradients(X + step * U) - self.gradients(X - step * U)) / (2 * step)

    def displacement(self, a, b) -> np.ndarray:
        """a - b, wrapped to the nearest periodic image on boxed coordinates."""
        d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
        if self.box is None:
            return d
        s = np.asarray(self.box)
        return np.mod(d + 0.5 * s, s) - 0.5 * s

    def zero_mode_basis(self) -> np.ndarray:
        """Orthonormal rows spanning exact symmetry directions (none by default)."""
        return np.zeros((0, self.dimension))

    @property
    def kernel(self):
        """(compiled gradient kernel, parameter array) for the integrators.

        Subclasses with a native kernel override this; otherwise the Python
        gradient is wrapped once per instance.
        """
        shim = self.__dict__.get("_shim")
        if shim is None:
            grad = self.gradient

            def py_grad(x, params, out):
                out[:] = grad(x)

            shim = self.__dict__["_shim"] = K.gradient_shim(py_grad)
        return shim, np.zeros(1)

    def params(self) -> dict:
        return {}

    def _as_vec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.dimension:
            raise ValueError(f"expected {self.dimension} coordinates, got {x.size}")
        return x

    def __repr__(self):
        return f"{type(self).__name__}({self.params()})"


class DoubleWell(PotentialModel):
    """Separable quartic double well, sum of (1 - x_i^2)^2 / 4."""

    name = "double_well"

    def __init__(self, dimension: int = 1):
        super().__init__(dimension)

    def value(self, x):
        x = self._as_vec(x)
        return float(np.sum((1.0 - x**2) ** 2) / 4.0)

    def gradient(self, x):
        x = self._as_vec(x)
        return x**3 - x

    def hessian(self, x):
        x = self._as_vec(x)
        return np.diag(3.0 * x**2 - 1.0)

    def values(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dimension)
        return np.sum((1.0 - X**2) ** 2, axis=1) / 4.0

    def gradients(self, X):
        X = np.asarray(X, dtype=float)
        return X**3 - X

    def hessian_vector_products(self, X, U, step=None):
        X = np.asarray(X, dtype=float)
        return (3.0 * X**2 - 1.0) * U

    @property
    def kernel(self):
        return K.double_well_grad, np.zeros(1)

    def params(self):
        return {"dimension": self.dimension}


class Pendulum(PotentialModel):
    """Periodic potential sum of sin(x_i), period 2*pi in every coordinate."""

    name = "pendulum"

    def __init__(self, dimension: int = 1):
        super().__init__(dimension, box=(2 * math.pi,) * dimension)

    def value(self, x):
        return float(np.sum(np.sin(self._as_vec(x))))

    def gradient(self, x):
        return np.cos(self._as_vec(x))

    def hessian(self, x):
        return np.diag(-np.sin(self._as_vec(x)))

    def values(self, X):
        X = np.asarray(X, dtype=float).reshape(-1, self.dimension)
        return np.sum(np.sin(X), axis=1)

    def gradients(self, X):
        return np.cos(np.asarray(X, dtype=float))

    def hessian_vector_products(self, X, U, step=None):
        return -np.sin(np.asarray(X, dtype=float)) * U

    @property
    def kernel(self):
        return K.pendulum_grad, np.zeros(1)

    def params(self):
        return {"dimension": self.dimension}


class Harmonic(PotentialModel):
    """Quadratic well V = sum k_i x_i^2 / 2."""

    name = "harmonic"

    def __init__(self, stiffness: Sequence[float] | float = 1.0, dimension: int | None = None):
        k = np.atleast_1d(np.asarray(stiffness, dtype=float))
        if dimension is not None and k.size == 1:
            k = np.full(dimension, k[0])
        if np.any(k <= 0):
            raise ValueError("stiffness must be positive")
        super().__init__(k.size)
        self.stiffness = k

    def value(self, x):
        x = self._as_vec(x)
        return float(0.5 * np.sum(self.stiffness * x**2))

    def gradient(self, x):
        return self.stiffness * self._as_vec(x)

    def hessian(self, x):
        return np.diag(self.stiffness.copy())

    def gradients(self, X):
        return np.asarray(X, dtype=float) * self.stiffness

    def hessian_vector_products(self, X, U, step=None):
        return np.asarray(U, dtype=float) * self.stiffness

    @property
    def kernel(self):
        return K.harmonic_grad, self.stiffness.copy()

    def params(self):
        return {"stiffness": self.stiffness.tolist()}


class CallbackModel(PotentialModel):
    """Potential defined by user callables.

    Missing derivatives are replaced by central differences: the gradient
    with step 1e-6*(1+|x|) and the Hessian with step 1e-4 applied to the
    gradient.
    """

    name = "callback"

    def __init__(
        self,
        dimension: int,
        value: Callable,
        gradient: Optional[Callable] = None,
        hessian: Optional[Callable] = None,
        box: Optional[Sequence[float]] = None,
        n_zero_modes: int = 0,
    ):
        super().__init__(dimension, box)
        self._value = value
        self._gradient = gradient
        self._hessian = hessian
        self.n_zero_modes = n_zero_modes

    def value(self, x):
        return float(self._value(self._as_vec(x)))

    def gradient(self, x):
        x = self._as_vec(x)
        if self._gradient is not None:
            return np.asarray(self._gradient(x), dtype=float).reshape(-1)
        h = 1e-6 * (1.0 + np.linalg.norm(x))
        g = np.empty(self.dimension)
        for i in range(self.dimension):
            e = np.zeros(self.dimension)
            e[i] = h
            g[i] = (self._value(x + e) - self._value(x - e)) / (2 * h)
        return g

    def hessian(self, x):
        x = self._as_vec(x)
        if self._hessian is not None:
            return np.asarray(self._hessian(x), dtype=float)
        h = 1e-4
        H = np.empty((self.dimension, self.dimension))
        for i in range(self.dimension):
            e = np.zeros(self.dimension)
            e[i] = h
            H[:, i] = (self.gradient(x + e) - self.gradient(x - e)) / (2 * h)
        return 0.5 * (H + H.T)



def make_model(name: str, **params) -> PotentialModel:
    """Build a built-in model from its registry name and keyword parameters."""
    key = name.strip().lower().replace("-", "_")
    if key in ("double_well", "doublewell"):
        return DoubleWell(**params)
    if key == "pendulum":
        return Pendulum(**params)
    if key == "harmonic":
        return Harmonic(**params)
    if key in ("lj", "lj_cluster", "lennard_jones"):
        from .cluster import LJCluster

        return LJCluster(**params)
    raise ValueError(f"unknown model {name!r}")


# ------------------------------------------------------------------- damping


@dataclass(frozen=True)
class Damping:
    """Symmetric positive-definite friction matrix with its square root."""

    gamma: np.ndarray
    sqrt_gamma: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, gamma) -> "Damping":
        g = np.atleast_2d(np.asarray(gamma, dtype=float))
        if g.shape[0] != g.shape[1]:
            raise ValueError("damping matrix must be square")
        if not np.allclose(g, g.T, atol=1e-14, rtol=0):
            raise ValueError("damping matrix must be symmetric")
        w, V = np.linalg.eigh(g)
        if np.any(w <= 0):
            raise ValueError("damping matrix must be positive definite")
        root = (V * np.sqrt(w)) @ V.T
        g.setflags(write=False)
        root.setflags(write=False)
        return cls(g, root)

    @classmethod
    def scalar(cls, gamma: float, dimension: int) -> "Damping":
        if gamma <= 0:
            raise ValueError("damping coefficient must be positive")
        return cls.from_matrix(gamma * np.eye(dimension))

    @property
    def dimension(self) -> int:
        return self.gamma.shape[0]

    @property
    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.gamma)[0])

    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.gamma)


# ------------------------------------------------------------------- forcing


def common_period(frequencies: Sequence[float], max_denominator: int = 10_000, rtol: float = 1e-9) -> float:
    """Least common period of cos(w_j t) terms.

    Each ratio w_j / w_ref is approximated by a fraction p_j/q_j with
    q_j <= max_denominator; the period is 2*pi*lcm(q_j)/w_ref.  Zero
    frequencies are constant in time and ignored.
    """
    w = np.abs(np.asarray(frequencies, dtype=float))
    w = w[w > 0]
    if w.size == 0:
        return math.inf
    ref = w.min()
    lcm = 1
    for wj in w:
        frac = Fraction(wj / ref).limit_denominator(max_denominator)
        if abs(float(frac) - wj / ref) > rtol * (wj / ref):
            raise NoCommonPeriod(f"frequency ratio {wj / ref!r} is not rational within tolerance")
        lcm = lcm * frac.denominator // math.gcd(lcm, frac.denominator)
    return 2 * math.pi * lcm / ref


class Forcing:
    """Periodic perturbation f(x, t)."""

    variant = "forcing"

    def __call__(self, x, t) -> np.ndarray:
        raise NotImplementedError

    def evaluate_many(self, X, T) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        T = np.asarray(T, dtype=float)
        return np.array([self(x, t) for x, t in zip(X, T)]).reshape(X.shape)

    @property
    def period(self) -> float:
        raise NotImplementedError

    @property
    def kernel(self):
        """(compiled forcing kernel, parameter array); Python forcings are wrapped."""
        shim = self.__dict__.get("_shim")
        if shim is None:
            fn = self.__call__

            def py_force(x, t, params, out):
                out[:] = fn(x, t)

            shim = self.__dict__["_shim"] = K.force_shim(py_force)
        return shim, np.zeros(1)


class _Sinusoid(Forcing):
    def __init__(self, amplitudes, frequencies, phases=0.0, dimension: int | None = None):
        arrs = [np.atleast_1d(np.asarray(a, dtype=float)) for a in (amplitudes, frequencies, phases)]
        nd = dimension or max(a.size for a in arrs)
        out = []
        for a in arrs:
            if a.size == 1:
                a = np.full(nd, a[0])
            if a.size != nd:
                raise ValueError("sinusoid parameters must be scalars or length-nd arrays")
            a.setflags(write=False)
            out.append(a)
        self.amplitudes, self.frequencies, self.phases = out
        self.dimension = nd
        self._period = common_period(self.frequencies)

    @property
    def period(self):
        return self._period

    def _cos(self, t):
        return np.cos(self.frequencies * t + self.phases)

    @property
    def is_homogeneous(self) -> bool:
        """All components share one nonzero frequency and one phase."""
        active = self.amplitudes != 0
        if not active.any():
            return True
        w = self.frequencies[active]
        th = self.phases[active]
        return bool(np.all(w == w[0]) and w[0] > 0 and np.all(th == th[0]))

    def _packed(self):
        return np.concatenate([self.amplitudes, self.frequencies, self.phases])

    def with_phase(self, theta: float):
        return type(self)(self.amplitudes, self.frequencies, theta, self.dimension)

    def to_dict(self):
        return {
            "variant": self.variant,
            "amplitudes": self.amplitudes.tolist(),
            "frequencies": self.frequencies.tolist(),
            "phases": self.phases.tolist(),
        }

    def __repr__(self):
        return f"{type(self).__name__}(A={self.amplitudes}, w={self.frequencies}, theta={self.phases})"


class AdditiveSinusoid(_Sinusoid):
    """f_j(x, t) = A_j cos(w_j t + theta_j)."""

    variant = "additive"

    def __call__(self, x, t):
        return self.amplitudes * self._cos(t)

    def evaluate_many(self, X, T):
        T = np.asarray(T, dtype=float)[:, None]
        return self.amplitudes * np.cos(self.frequencies * T + self.phases)

    @property
    def kernel(self):
        return K.additive_force, self._packed()


class ParametricSinusoid(_Sinusoid):
    """f_j(x, t) = A_j cos(w_j t + theta_j) x_j."""

    variant = "parametric"

    def __call__(self, x, t):
        return self.amplitudes * self._cos(t) * np.asarray(x, dtype=float)

    def evaluate_many(self, X, T):
        T = np.asarray(T, dtype=float)[:, None]
        return self.amplitudes * np.cos(self.frequencies * T + self.phases) * np.asarray(X, dtype=float)

    @property
    def kernel(self):
        return K.parametric_force, self._packed()


class GeneralPeriodic(Forcing):
    """Arbitrary callback f(x, t) with declared period.

    With ``vectorized=True`` the callback must also accept a stack of states
    X of shape (n, nd) with times T of shape (n, 1) and return shape (n, nd);
    orbit-wide evaluations then make a single call.
    """

    variant = "general"

    def __init__(self, callback: Callable, period: float, vectorized: bool = False):
        if not period > 0:
            raise ValueError("period must be positive")
        self.callback = callback
        self._period = float(period)
        self.vectorized = bool(vectorized)

    def __call__(self, x, t):
        return np.asarray(self.callback(np.asarray(x, dtype=float), float(t)), dtype=float)

    def evaluate_many(self, X, T):
        if not self.vectorized:
            return super().evaluate_many(X, T)
        X = np.asarray(X, dtype=float)
        T = np.asarray(T, dtype=float).reshape(-1, 1)
        return np.broadcast_to(np.asarray(self.callback(X, T), dtype=float), X.shape)

    @property
    def period(self):
        return self._period

    def to_dict(self):
        return {"variant": self.variant, "period": self._period}


def evaluate_forcing(forcing: Forcing, x, t: float) -> np.ndarray:
    return forcing(np.asarray(x, dtype=float), t)


# ------------------------------------------------------------ critical points


@dataclass(frozen=True)
class CriticalPoint:
    """Stationary point of V with its sorted Hessian spectrum."""

    location: np.ndarray
    potential_value: float
    hessian_eigenvalues: np.ndarray
    hessian_eigenvectors: np.ndarray = field(repr=False)
    index: int
    zero_mask: np.ndarray = field(repr=False)
    gradient_norm: float = 0.0

    @property
    def kind(self) -> str:
        return {0: "minimum", 1: "saddle"}.get(self.index, "higher-index")

    @property
    def n_zero(self) -> int:
        return int(self.zero_mask.sum())

    @property
    def dimension(self) -> int:
        return self.location.size

    def to_dict(self) -> dict:
        return {
            "location": self.location.tolist(),
            "value": self.potential_value,
            "eigenvalues": self.hessian_eigenvalues.tolist(),
            "index": self.index,
            "kind": self.kind,
            "zero_modes": self.n_zero,
            "gradient_norm": self.gradient_norm,
        }


def _spectrum(H: np.ndarray, n_zero_modes: int):
    """Eigenpairs and the mask of eigenvalues treated as zero."""
    lam, vec = np.linalg.eigh(0.5 * (H + H.T))
    scale = np.abs(lam).max() if lam.size else 0.0
    zero = np.abs(lam) <= ZERO_EIG_RTOL * scale
    if n_zero_modes:
        # always drop the known symmetry modes, even if round-off leaves them
        # slightly above the relative threshold
        idx = np.argsort(np.abs(lam))[:n_zero_modes]
        zero[idx] = True
    return lam, vec, zero


def classify_point(model: PotentialModel, x) -> CriticalPoint:
    """Attach the Hessian spectrum and index to a (converged) location."""
    x = np.array(model._as_vec(x), dtype=float)
    lam, vec, zero = _spectrum(model.hessian(x), model.n_zero_modes)
    index = int(np.sum((lam < 0) & ~zero))
    x.setflags(write=False)
    lam.setflags(write=False)
    vec.setflags(write=False)
    zero.setflags(write=False)
    return CriticalPoint(
        location=x,
        potential_value=model.value(x),
        hessian_eigenvalues=lam,
        hessian_eigenvectors=vec,
        index=index,
        zero_mask=zero,
        gradient_norm=float(np.linalg.norm(model.gradient(x))),
    )


def newton_step(model: PotentialModel, x, g=None):
    """Newton step on grad V = 0 restricted to the nonzero Hessian modes."""
    H = model.hessian(x)
    g = model.gradient(x) if g is None else g
    lam, vec, zero = _spectrum(H, model.n_zero_modes)
    keep = ~zero
    if model.n_zero_modes == 0:
        amax = np.abs(lam).max()
        amin = np.abs(lam).min()
        if amin == 0 or amax / amin > 1e14:
            raise SingularHessian(f"Hessian condition number {amax / max(amin, 1e-300):.3g} at x={x}")
    V = vec[:, keep]
    return -V @ ((V.T @ g) / lam[keep])


def find_critical_point(
    model: PotentialModel,
    seed,
    max_iter: int = 200,
    rtol: float = 1e-10,
) -> CriticalPoint:
    """Newton iteration on grad V = 0 with backtracking on |grad V|^2.

    Converged when |grad V| <= rtol * (1 + |grad V(seed)|).
    """
    x = np.array(model._as_vec(seed), dtype=float)
    g = model.gradient(x)
    target = rtol * (1.0 + np.linalg.norm(g))
    f = float(g @ g)
    for _ in range(max_iter):
        if math.sqrt(f) <= target:
            return classify_point(model, x)
        step = newton_step(model, x, g)
        alpha = 1.0
        while True:
            xn = x + alpha * step
            gn = model.gradient(xn)
            fn = float(gn @ gn)
            if fn < f or alpha < 1e-10:
                break
            alpha *= 0.5
        if fn >= f and alpha < 1e-10:
            # no descent along the Newton direction; accept if at round-off level
            if math.sqrt(f) <= 100 * target:
                return classify_point(model, x)
            raise NonConvergence("line search failed to reduce |grad V|")
        x, g, f = xn, gn, fn
    if math.sqrt(f) <= target:
        return classify_point(model, x)
    raise NonConvergence(f"no critical point after {max_iter} Newton iterations (|grad V|={math.sqrt(f):.3g})")


def intrinsic_frequencies(cp: CriticalPoint, drop_zero_modes: bool = False) -> np.ndarray:
    """sqrt of the Hessian eigenvalues at a minimum, ascending.

    Near-zero eigenvalues (symmetry modes) raise :class:`ZeroMode` unless
    ``drop_zero_modes`` is set, in which case they are omitted.
    """
    if cp.index > 0:
        raise NotAMinimum(f"critical point has index {cp.index}")
    lam = np.asarray(cp.hessian_eigenvalues)
    small = (lam <= 1e-10) | cp.zero_mask
    if small.any() and not drop_zero_modes:
        raise ZeroMode(f"{int(small.sum())} eigenvalue(s) at or below 1e-10")
    return np.sqrt(np.sort(lam[~small]))
