"""Compiled polynomial-ODE kernels: quadratic+linear right-hand sides and an
adaptive Dormand-Prince 5(4) stepper.

Every generated system (full state space or orbit-reduced) compiles to the
same sparse form

    dy[k] = sum_t qc[t] * y[qi[t]] * y[qj[t]]  +  sum_t lc[t] * y[lj[t]]

which keeps the integrator generic and lets numba remove the per-step Python
overhead that dominates long steady-state runs.  Status codes: 0 converged
(sup-norm of the derivative below the stop threshold), 1 reached t_max,
2 step-size underflow, 3 step budget exhausted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

STATUS_CONVERGED = 0
STATUS_TMAX = 1
STATUS_UNDERFLOW = 2
STATUS_MAXSTEPS = 3

# Dormand-Prince 5(4) tableau; the propagated solution is 5th order and the
# last stage is FSAL.
_A = np.zeros((7, 7))
_A[1, 0] = 1 / 5
_A[2, :2] = (3 / 40, 9 / 40)
_A[3, :3] = (44 / 45, -56 / 15, 32 / 9)
_A[4, :4] = (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729)
_A[5, :5] = (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656)
_A[6, :6] = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84)
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
# Difference between the 5th- and 4th-order weights, used for error control.
_E = np.array([71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@njit(cache=True)
def poly_rhs(y, qi, qj, qk, qc, li, lj, lc):
    dy = np.zeros(y.shape[0])
    for t in range(qi.shape[0]):
        dy[qk[t]] += qc[t] * y[qi[t]] * y[qj[t]]
    for t in range(li.shape[0]):
        dy[li[t]] += lc[t] * y[lj[t]]
    return dy


@njit(cache=True)
def _initial_step(y, f, rtol, atol):
    d0 = 0.0
    d1 = 0.0
    for i in range(y.shape[0]):
        sc = atol + rtol * abs(y[i])
        if abs(y[i]) / sc > d0:
            d0 = abs(y[i]) / sc
        if abs(f[i]) / sc > d1:
            d1 = abs(f[i]) / sc
    if d0 < 1e-5 or d1 < 1e-5:
        return 1e-6
    return 0.01 * d0 / d1


@njit(cache=True)
def _attempt(y, f, h, rtol, atol, K, qi, qj, qk, qc, li, lj, lc):
    """One trial step from (y, f) with size h; returns (err_norm, y_new).

    K is the per-call stage workspace; K[6] holds f at the trial endpoint.
    """
    n = y.shape[0]
    K[0] = f
    ys = np.empty(n)
    for s in range(1, 7):
        for i in range(n):
            acc = y[i]
            for q in range(s):
                a = _A[s, q]
                if a != 0.0:
                    acc += h * a * K[q, i]
            ys[i] = acc
        K[s] = poly_rhs(ys, qi, qj, qk, qc, li, lj, lc)
    ynew = np.empty(n)
    errn = 0.0
    for i in range(n):
        acc = y[i]
        err = 0.0
        for s in range(7):
            if _B[s] != 0.0:
                acc += h * _B[s] * K[s, i]
            if _E[s] != 0.0:
                err += _E[s] * K[s, i]
        ynew[i] = acc
        sc = atol + rtol * max(abs(y[i]), abs(acc))
        errn += (h * err / sc) ** 2
    return np.sqrt(errn / n), ynew


@njit(cache=True)
def drive_to_steady(y0, t_max, rtol, atol, eps_stop, qi, qj, qk, qc, li, lj, lc, max_steps):
    """Advance dy/dt = f(y) until sup|f| < eps_stop, t_max, or a failure code."""
    y = y0.copy()
    f = poly_rhs(y, qi, qj, qk, qc, li, lj, lc)
    t = 0.0
    h = _initial_step(y, f, rtol, atol)
    K = np.zeros((7, y.shape[0]))
    steps = 0
    while True:
        fmax = 0.0
        for i in range(f.shape[0]):
            if abs(f[i]) > fmax:
                fmax = abs(f[i])
        if fmax < eps_stop:
            return STATUS_CONVERGED, t, y, steps
        if t >= t_max:
            return STATUS_TMAX, t, y, steps
        if steps >= max_steps:
            return STATUS_MAXSTEPS, t, y, steps
        if h < 1e-13 * max(1.0, abs(t)):
            return STATUS_UNDERFLOW, t, y, steps
        if t + h > t_max:
            h = t_max - t
        errn, ynew = _attempt(y, f, h, rtol, atol, K, qi, qj, qk, qc, li, lj, lc)
        if errn <= 1.0:
            t += h
            y = ynew
            f = K[6].copy()
            steps += 1
            h *= 1.25 if errn == 0.0 else min(5.0, 0.9 * errn ** -0.2)
        else:
            h *= max(0.2, 0.9 * errn ** -0.2)


@njit(cache=True)
def integrate_path(y0, t_grid, rtol, atol, qi, qj, qk, qc, li, lj, lc, max_steps):
    """Integrate through the strictly increasing times in t_grid, recording each.

    t_grid[0] must be 0.  Steps are capped to land exactly on grid points.
    """
    n = y0.shape[0]
    out = np.zeros((t_grid.shape[0], n))
    out[0] = y0
    y = y0.copy()
    f = poly_rhs(y, qi, qj, qk, qc, li, lj, lc)
    t = 0.0
    h = _initial_step(y, f, rtol, atol)
    K = np.zeros((7, n))
    steps = 0
    for g in range(1, t_grid.shape[0]):
        target = t_grid[g]
        while t < target:
            if steps >= max_steps:
                return STATUS_MAXSTEPS, out, g - 1, steps
            if h < 1e-13 * max(1.0, abs(t)):
                return STATUS_UNDERFLOW, out, g - 1, steps
            hh = h
            capped = False
            if t + hh >= target:
                hh = target - t
                capped = True
            errn, ynew = _attempt(y, f, hh, rtol, atol, K, qi, qj, qk, qc, li, lj, lc)
            if errn <= 1.0:
                t += hh
                y = ynew
                f = K[6].copy()
                steps += 1
                fac = 1.25 if errn == 0.0 else min(5.0, 0.9 * errn ** -0.2)
                if not capped:
                    h = hh * fac
            else:
                h = hh * max(0.2, 0.9 * errn ** -0.2)
        out[g] = y
    return 0, out, t_grid.shape[0] - 1, steps


@dataclass
class PolyOde:
    """Sparse quadratic+linear right-hand side over a density vector."""

    dim: int
    qi: np.ndarray
    qj: np.ndarray
    qk: np.ndarray
    qc: np.ndarray
    li: np.ndarray
    lj: np.ndarray
    lc: np.ndarray

    def rhs(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return poly_rhs(y, self.qi, self.qj, self.qk, self.qc, self.li, self.lj, self.lc)

    @property
    def arrays(self):
        return (self.qi, self.qj, self.qk, self.qc, self.li, self.lj, self.lc)


def compile_terms(dim: int, quad: dict, lin: dict) -> PolyOde:
    """Aggregate {(i, j, k): c} and {(k, j): c} coefficient maps into a PolyOde."""
    if quad:
        keys = np.array(sorted(quad), dtype=np.int64)
        qc = np.array([quad[tuple(k)] for k in keys], dtype=float)
        nz = qc != 0.0
        keys, qc = keys[nz], qc[nz]
        qi, qj, qk = keys[:, 0].copy(), keys[:, 1].copy(), keys[:, 2].copy()
    else:
        qi = qj = qk = np.zeros(0, dtype=np.int64)
        qc = np.zeros(0)
    if lin:
        keys = np.array(sorted(lin), dtype=np.int64)
        lc = np.array([lin[tuple(k)] for k in keys], dtype=float)
        nz = lc != 0.0
        keys, lc = keys[nz], lc[nz]
        li, lj = keys[:, 0].copy(), keys[:, 1].copy()
    else:
        li = lj = np.zeros(0, dtype=np.int64)
        lc = np.zeros(0)
    return PolyOde(dim, qi, qj, qk, qc, li, lj, lc)
