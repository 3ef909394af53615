"""Compiled inner loops.

Every potential exposes a gradient kernel ``grad(x, params, out)`` and every
forcing a kernel ``force(x, t, params, out)``; both write into ``out``.  The
loops below take those kernels as first-class arguments, so one compiled loop
serves all built-in models.  Python callbacks are wrapped by
``gradient_shim``/``force_shim`` into compiled functions that drop into
object mode for the call.
"""

import math

import numba
import numpy as np
from numba import njit

# status codes shared by the integration loops
RUNNING = 0
REACHED = 1
NONFINITE = 2
SETTLED = 3


# ---------------------------------------------------------------- callbacks


def gradient_shim(fn):
    """Compiled wrapper around a Python ``fn(x, params, out)``."""

    @njit
    def grad(x, params, out):
        with numba.objmode():
            fn(x, params, out)

    return grad


def force_shim(fn):
    """Compiled wrapper around a Python ``fn(x, t, params, out)``."""

    @njit
    def force(x, t, params, out):
        with numba.objmode():
            fn(x, t, params, out)

    return force


# ---------------------------------------------------------------- gradients


@njit(cache=True)
def double_well_grad(x, params, out):
    for i in range(x.size):
        out[i] = x[i] ** 3 - x[i]


@njit(cache=True)
def pendulum_grad(x, params, out):
    for i in range(x.size):
        out[i] = math.cos(x[i])


@njit(cache=True)
def harmonic_grad(x, params, out):
    for i in range(x.size):
        out[i] = params[i] * x[i]


@njit(cache=True)
def _wrap(d, s):
    return (d + 0.5 * s) % s - 0.5 * s


@njit(cache=True)
def lj_energy_grad(q, sx, sy, r0, out):
    """Pair-sum energy over i<j with minimum-image distances; gradient into out."""
    n = q.size // 2
    out[:] = 0.0
    e = 0.0
    r02 = r0 * r0
    for i in range(n):
        xi = q[2 * i]
        yi = q[2 * i + 1]
        for j in range(i + 1, n):
            dx = _wrap(xi - q[2 * j], sx)
            dy = _wrap(yi - q[2 * j + 1], sy)
            r2 = dx * dx + dy * dy
            s6 = (r02 / r2) ** 3
            s12 = s6 * s6
            e += s12 - 2.0 * s6
            dpr = 12.0 * (s6 - s12) / r2
            out[2 * i] += dpr * dx
            out[2 * i + 1] += dpr * dy
            out[2 * j] -= dpr * dx
            out[2 * j + 1] -= dpr * dy
    return e


@njit(cache=True)
def lj_grad(x, params, out):
    lj_energy_grad(x, params[0], params[1], params[2], out)


@njit(cache=True)
def lj_hessian(q, sx, sy, r0):
    n = q.size // 2
    h = np.zeros((2 * n, 2 * n))
    r02 = r0 * r0
    for i in range(n):
        for j in range(i + 1, n):
            dx = _wrap(q[2 * i] - q[2 * j], sx)
            dy = _wrap(q[2 * i + 1] - q[2 * j + 1], sy)
            r2 = dx * dx + dy * dy
            s6 = (r02 / r2) ** 3
            s12 = s6 * s6
            dpr = 12.0 * (s6 - s12) / r2
            d2 = (156.0 * s12 - 84.0 * s6) / r2
            a = (d2 - dpr) / r2
            blk = ((a * dx * dx + dpr, a * dx * dy), (a * dx * dy, a * dy * dy + dpr))
            for p in range(2):
                for s in range(2):
                    val = blk[p][s]
                    h[2 * i + p, 2 * i + s] += val
                    h[2 * j + p, 2 * j + s] += val
                    h[2 * i + p, 2 * j + s] -= val
                    h[2 * j + p, 2 * i + s] -= val
    return h


# ----------------------------------------------------------------- forcings


@njit(cache=True)
def additive_force(x, t, params, out):
    # params = [A_1..A_nd, w_1..w_nd, th_1..th_nd]
    nd = x.size
    for i in range(nd):
        out[i] = params[i] * math.cos(params[nd + i] * t + params[2 * nd + i])


@njit(cache=True)
def parametric_force(x, t, params, out):
    nd = x.size
    for i in range(nd):
        out[i] = params[i] * math.cos(params[nd + i] * t + params[2 * nd + i]) * x[i]


@njit(cache=True)
def zero_force(x, t, params, out):
    out[:] = 0.0


# ------------------------------------------------------------- RK4 shooting


@njit(cache=True)
def _field(grad, params, gamma, x, v, gx, ax):
    # ax = -gamma v - grad V(x)
    grad(x, params, gx)
    nd = x.size
    for i in range(nd):
        acc = -gx[i]
        for j in range(nd):
            acc -= gamma[i, j] * v[j]
        ax[i] = acc


@njit(cache=True)
def damped_rk4(grad, params, gamma, x0, v0, dt, out_x, out_v, target, tol, settle_tol):
    """RK4 on x' = v, v' = -gamma v - grad V(x), storing every state.

    Row 0 of the output holds the initial state.  Integration stops when the
    phase-space distance to ``(target, 0)`` drops to ``tol`` (REACHED), when
    the state comes to rest elsewhere (SETTLED: |v|^2 + |grad V|^2 below
    settle_tol^2), on overflow (NONFINITE), or when the buffers are full.
    Returns (rows written, status).
    """
    nd = x0.size
    n = out_x.shape[0]
    x = x0.copy()
    v = v0.copy()
    g = np.empty(nd)
    k1x = np.empty(nd)
    k1v = np.empty(nd)
    k2x = np.empty(nd)
    k2v = np.empty(nd)
    k3x = np.empty(nd)
    k3v = np.empty(nd)
    k4v = np.empty(nd)
    xs = np.empty(nd)
    vs = np.empty(nd)
    out_x[0] = x
    out_v[0] = v
    for k in range(1, n):
        _field(grad, params, gamma, x, v, g, k1v)
        # rest test uses the gradient at the current state
        rest = 0.0
        dist = 0.0
        for i in range(nd):
            rest += v[i] * v[i] + g[i] * g[i]
            d = x[i] - target[i]
            dist += d * d + v[i] * v[i]
        if dist <= tol * tol:
            return k, REACHED
        if rest <= settle_tol * settle_tol:
            return k, SETTLED
        for i in range(nd):
            k1x[i] = v[i]
            xs[i] = x[i] + 0.5 * dt * k1x[i]
            vs[i] = v[i] + 0.5 * dt * k1v[i]
        _field(grad, params, gamma, xs, vs, g, k2v)
        for i in range(nd):
            k2x[i] = vs[i]
            xs[i] = x[i] + 0.5 * dt * k2x[i]
            vs[i] = v[i] + 0.5 * dt * k2v[i]
        _field(grad, params, gamma, xs, vs, g, k3v)
        for i in range(nd):
            k3x[i] = vs[i]
            xs[i] = x[i] + dt * k3x[i]
            vs[i] = v[i] + dt * k3v[i]
        _field(grad, params, gamma, xs, vs, g, k4v)
        finite = True
        for i in range(nd):
            x[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + vs[i])
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
            if not (math.isfinite(x[i]) and math.isfinite(v[i])):
                finite = False
        out_x[k] = x
        out_v[k] = v
        if not finite:
            return k + 1, NONFINITE
    # final row: check the target once more
    dist = 0.0
    for i in range(nd):
        d = x[i] - target[i]
        dist += d * d + v[i] * v[i]
    if dist <= tol * tol:
        return n, REACHED
    return n, RUNNING


# ---------------------------------------------------------- Fourier sums

_RESYNC = 4096


@njit(cache=True)
def fourier_components(x, v, parametric, dt, omega):
    """Trapezoid sums of v_j e^{i omega t} (or v_j x_j e^{i omega t}) per column.

    The phase factor advances by complex multiplication and is recomputed
    exactly every few thousand samples to keep round-off bounded.
    """
    n, nd = v.shape
    re = np.zeros(nd)
    im = np.zeros(nd)
    c1 = math.cos(omega * dt)
    s1 = math.sin(omega * dt)
    c = 1.0
    s = 0.0
    for k in range(n):
        if k % _RESYNC == 0:
            c = math.cos(omega * k * dt)
            s = math.sin(omega * k * dt)
        w = 0.5 if (k == 0 or k == n - 1) else 1.0
        for j in range(nd):
            f = v[k, j] * x[k, j] if parametric else v[k, j]
            re[j] += w * f * c
            im[j] += w * f * s
        c, s = c * c1 - s * s1, s * c1 + c * s1
    out = np.empty(nd, dtype=np.complex128)
    for j in range(nd):
        out[j] = complex(re[j] * dt, im[j] * dt)
    return out


# ------------------------------------------------------ Euler-Maruyama SDE


@njit(cache=True)
def _em_step(grad, gparams, force, fparams, gamma, sqrt_gamma, eps, sq, x, v, t, dt, xi, g, f):
    nd = x.size
    grad(x, gparams, g)
    force(x, t, fparams, f)
    finite = True
    for i in range(nd):
        acc = -g[i] + eps * f[i]
        noise = 0.0
        for j in range(nd):
            acc -= gamma[i, j] * v[j]
            noise += sqrt_gamma[i, j] * xi[j]
        x[i] += v[i] * dt  # uses v before update
        g[i] = acc
        f[i] = noise
    for i in range(nd):
        v[i] += g[i] * dt + sq * f[i]
        if not (math.isfinite(x[i]) and math.isfinite(v[i])):
            finite = False
    return finite


@njit(cache=True)
def em_advance(grad, gparams, force, fparams, gamma, sqrt_gamma, eps, mu, dt, x, v, t0, noise):
    """Advance (x, v) in place through len(noise) steps.  Returns (steps, ok)."""
    nd = x.size
    g = np.empty(nd)
    f = np.empty(nd)
    sq = math.sqrt(mu * dt)
    for k in range(noise.shape[0]):
        ok = _em_step(grad, gparams, force, fparams, gamma, sqrt_gamma, eps, sq,
                      x, v, t0 + k * dt, dt, noise[k], g, f)
        if not ok:
            return k + 1, False
    return noise.shape[0], True


@njit(cache=True)
def relax_to_basin(grad, gparams, gamma, x0, v0, dt, n_steps, xa, xb, capture):
    """Deterministic damped relaxation; returns +1 if it ends within capture of xb,
    -1 if it comes to rest near xa, 0 otherwise."""
    nd = x0.size
    x = x0.copy()
    v = v0.copy()
    g = np.empty(nd)
    k1v = np.empty(nd)
    k2v = np.empty(nd)
    k3v = np.empty(nd)
    k4v = np.empty(nd)
    xs = np.empty(nd)
    vs = np.empty(nd)
    k2x = np.empty(nd)
    k3x = np.empty(nd)
    small = (0.1 * capture) ** 2
    for k in range(n_steps):
        db = 0.0
        da = 0.0
        for i in range(nd):
            db += (x[i] - xb[i]) ** 2 + v[i] * v[i]
            da += (x[i] - xa[i]) ** 2 + v[i] * v[i]
        if db <= small:
            return 1
        if da <= small:
            return -1
        _field(grad, gparams, gamma, x, v, g, k1v)
        for i in range(nd):
            xs[i] = x[i] + 0.5 * dt * v[i]
            vs[i] = v[i] + 0.5 * dt * k1v[i]
        _field(grad, gparams, gamma, xs, vs, g, k2v)
        for i in range(nd):
            k2x[i] = vs[i]
            xs[i] = x[i] + 0.5 * dt * k2x[i]
            vs[i] = v[i] + 0.5 * dt * k2v[i]
        _field(grad, gparams, gamma, xs, vs, g, k3v)
        for i in range(nd):
            k3x[i] = vs[i]
            xs[i] = x[i] + dt * k3x[i]
            vs[i] = v[i] + dt * k3v[i]
        _field(grad, gparams, gamma, xs, vs, g, k4v)
        for i in range(nd):
            x[i] += dt / 6.0 * (v[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + vs[i])
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i])
    db = 0.0
    for i in range(nd):
        db += (x[i] - xb[i]) ** 2
    return 1 if db <= capture * capture else 0


@njit(cache=True)
def em_first_passage(grad, gparams, force, fparams, gamma, sqrt_gamma, eps, mu, dt,
                     x, v, t0, noise, xa, xb, capture, check_every, relax_dt, relax_steps):
    """Euler-Maruyama until the state is confirmed inside the basin of xb.

    A snapshot becomes a candidate when it is closer to xb than to xa; the
    candidate is confirmed by noise-free, force-free damped relaxation.
    Returns (steps taken, status) with REACHED on a confirmed passage; the
    passage time is t0 + steps*dt.
    """
    nd = x.size
    g = np.empty(nd)
    f = np.empty(nd)
    sq = math.sqrt(mu * dt)
    for k in range(noise.shape[0]):
        ok = _em_step(grad, gparams, force, fparams, gamma, sqrt_gamma, eps, sq,
                      x, v, t0 + k * dt, dt, noise[k], g, f)
        if not ok:
            return k + 1, NONFINITE
        if (k + 1) % check_every == 0:
            da = 0.0
            db = 0.0
            for i in range(nd):
                da += (x[i] - xa[i]) ** 2
                db += (x[i] - xb[i]) ** 2
            if db < da:
                side = relax_to_basin(grad, gparams, gamma, x, v, relax_dt, relax_steps,
                                      xa, xb, capture)
                if side == 1:
                    return k + 1, REACHED
    return noise.shape[0], RUNNING
