"""Hot inner loops, each with a numba loop version and a numpy version.

The public names at the bottom of the module are bound to one of the two
implementations according to :data:`spde_moments._jit.NUMBA_ENABLED`.  Both
variants take and return plain float64 arrays and are interchangeable; the
test-suite checks them against each other and ``benchmarks/bench_kernels.py``
times them.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import NUMBA_ENABLED, njit

# ---------------------------------------------------------------------------
# Diagonal Euler-Maruyama batch (spectral example and other diagonal pairs)
# ---------------------------------------------------------------------------


@njit
def _diag_em_loop(lam, noise, h_w, v_w, u0, dW, dt, stride, alpha, implicit, p_ito):
    m, n = u0.shape
    n_steps = dW.shape[1]
    n_noise = dW.shape[2]
    sup_h = np.zeros(m)
    int_v = np.zeros(m)
    ito_rhs = np.zeros(m)
    terminal = np.empty((m, n))
    diverged = np.zeros(m, dtype=np.bool_)
    t_last = np.full(m, n_steps * dt)
    x = np.empty(n)
    y = np.empty(n)
    bdw = np.empty(n)
    zx = np.empty(n_noise)
    for i in range(m):
        for j in range(n):
            x[j] = u0[i, j]
        hsq = 0.0
        for j in range(n):
            hsq += h_w[j] * x[j] * x[j]
        sup_h[i] = math.sqrt(hsq)
        if p_ito > 0.0:
            ito_rhs[i] = hsq ** (0.5 * p_ito)
        for s in range(n_steps):
            vsq = 0.0
            for j in range(n):
                vsq += v_w[j] * x[j] * x[j]
            int_v[i] += vsq ** (0.5 * alpha) * dt
            for j in range(n):
                acc = 0.0
                for k in range(n_noise):
                    acc += noise[j, k] * dW[i, s, k]
                bdw[j] = acc * x[j]
            for j in range(n):
                if implicit:
                    y[j] = (x[j] + bdw[j]) / (1.0 - dt * lam[j])
                else:
                    y[j] = x[j] + dt * lam[j] * x[j] + bdw[j]
            if p_ito > 0.0:
                xn = math.sqrt(hsq)
                for k in range(n_noise):
                    acc = 0.0
                    for j in range(n):
                        acc += h_w[j] * noise[j, k] * x[j] * x[j]
                    zx[k] = acc
                drift_pair = 0.0
                qv = 0.0
                for j in range(n):
                    drift_pair += h_w[j] * x[j] * (y[j] - x[j] - bdw[j])
                    qv += h_w[j] * bdw[j] * bdw[j]
                mart = 0.0
                for k in range(n_noise):
                    mart += zx[k] * dW[i, s, k]
                if xn > 0.0:
                    pw = xn ** (p_ito - 2.0)
                    term = p_ito * pw * (drift_pair + mart) + 0.5 * p_ito * pw * qv
                    if p_ito != 2.0:
                        term += 0.5 * p_ito * (p_ito - 2.0) * xn ** (p_ito - 4.0) * mart * mart
                    ito_rhs[i] += term
                elif p_ito == 2.0:
                    ito_rhs[i] += qv
            hsq = 0.0
            finite = True
            for j in range(n):
                x[j] = y[j]
                hsq += h_w[j] * x[j] * x[j]
                if not math.isfinite(x[j]):
                    finite = False
            if not finite or not math.isfinite(hsq):
                diverged[i] = True
                t_last[i] = s * dt
                break
            if (s + 1) % stride == 0 or s + 1 == n_steps:
                hn = math.sqrt(hsq)
                if hn > sup_h[i]:
                    sup_h[i] = hn
        for j in range(n):
            terminal[i, j] = x[j]
    return sup_h, int_v, terminal, diverged, t_last, ito_rhs


def _diag_em_numpy(lam, noise, h_w, v_w, u0, dW, dt, stride, alpha, implicit, p_ito):
    m, n = u0.shape
    n_steps = dW.shape[1]
    x = u0.copy()
    hsq = (h_w * x * x).sum(axis=1)
    sup_h = np.sqrt(hsq)
    int_v = np.zeros(m)
    ito_rhs = hsq ** (0.5 * p_ito) if p_ito > 0.0 else np.zeros(m)
    diverged = np.zeros(m, dtype=bool)
    t_last = np.full(m, n_steps * dt)
    alive = np.ones(m, dtype=bool)
    terminal = x.copy()
    denom = 1.0 - dt * lam
    with np.errstate(all="ignore"):
        for s in range(n_steps):
            vsq = (v_w * x * x).sum(axis=1)
            int_v += np.where(alive, vsq ** (0.5 * alpha) * dt, 0.0)
            bdw = (dW[:, s, :] @ noise.T) * x
            y = (x + bdw) / denom if implicit else x + dt * lam * x + bdw
            if p_ito > 0.0:
                xn = np.sqrt(hsq)
                zx = (h_w * x * x) @ noise
                drift_pair = (h_w * x * (y - x - bdw)).sum(axis=1)
                qv = (h_w * bdw * bdw).sum(axis=1)
                mart = (zx * dW[:, s, :]).sum(axis=1)
                pw = np.where(xn > 0.0, xn ** (p_ito - 2.0), 0.0)
                term = p_ito * pw * (drift_pair + mart) + 0.5 * p_ito * pw * qv
                if p_ito != 2.0:
                    pw4 = np.where(xn > 0.0, xn ** (p_ito - 4.0), 0.0)
                    term = term + 0.5 * p_ito * (p_ito - 2.0) * pw4 * mart * mart
                else:
                    term = np.where(xn > 0.0, term, qv)
                ito_rhs = np.where(alive, ito_rhs + term, ito_rhs)
            hsq_new = (h_w * y * y).sum(axis=1)
            bad = alive & ~(np.isfinite(y).all(axis=1) & np.isfinite(hsq_new))
            if bad.any():
                diverged |= bad
                t_last[bad] = s * dt
                alive &= ~bad
            x = np.where(alive[:, None], y, x)
            hsq = np.where(alive, hsq_new, hsq)
            terminal = np.where(alive[:, None], x, terminal)
            if (s + 1) % stride == 0 or s + 1 == n_steps:
                sup_h = np.where(alive, np.maximum(sup_h, np.sqrt(hsq)), sup_h)
    return sup_h, int_v, terminal, diverged, t_last, ito_rhs


# ---------------------------------------------------------------------------
# Burgers convection in skew-symmetric form, zero Dirichlet data.
# Returns the weak-form vector h * (u Du + D(u^2)) / 3 with D centred; the
# grid spacing cancels.
# ---------------------------------------------------------------------------


@njit
def _burgers_skew_loop(u):
    m, n = u.shape
    out = np.empty((m, n))
    for i in range(m):
        for j in range(n):
            left = u[i, j - 1] if j > 0 else 0.0
            right = u[i, j + 1] if j < n - 1 else 0.0
            adv = u[i, j] * (right - left)
            cons = right * right - left * left
            out[i, j] = (adv + cons) / 6.0
    return out


def _burgers_skew_numpy(u):
    pad = np.zeros((u.shape[0], u.shape[1] + 2))
    pad[:, 1:-1] = u
    left = pad[:, :-2]
    right = pad[:, 2:]
    return (u * (right - left) + (right * right - left * left)) / 6.0


# ---------------------------------------------------------------------------
# p-Laplacian flux on a Dirichlet grid.  ``weak`` is the weak-form vector of
# div(|g|^{a-2} g) with g the face gradient; ``nodal`` averages |g|^{a/2}.
# ---------------------------------------------------------------------------


@njit
def _plap_loop(u, h, alpha):
    m, n = u.shape
    weak = np.empty((m, n))
    nodal = np.empty((m, n))
    flux = np.empty(n + 1)
    half = np.empty(n + 1)
    for i in range(m):
        for f in range(n + 1):
            left = u[i, f - 1] if f > 0 else 0.0
            right = u[i, f] if f < n else 0.0
            g = (right - left) / h
            ag = abs(g)
            flux[f] = ag ** (alpha - 2.0) * g if ag > 0.0 else 0.0
            half[f] = ag ** (0.5 * alpha)
        for j in range(n):
            weak[i, j] = flux[j + 1] - flux[j]
            nodal[i, j] = 0.5 * (half[j] + half[j + 1])
    return weak, nodal


def _plap_numpy(u, h, alpha):
    pad = np.zeros((u.shape[0], u.shape[1] + 2))
    pad[:, 1:-1] = u
    g = np.diff(pad, axis=1) / h
    ag = np.abs(g)
    with np.errstate(divide="ignore", invalid="ignore"):
        flux = np.where(ag > 0.0, ag ** (alpha - 2.0) * g, 0.0)
    half = ag ** (0.5 * alpha)
    weak = flux[:, 1:] - flux[:, :-1]
    nodal = 0.5 * (half[:, :-1] + half[:, 1:])
    return weak, nodal


# ---------------------------------------------------------------------------
# Scalar monotonicity margin 2(x^{a-1}-y^{a-1})(x-y) - g2 (x^{a/2}-y^{a/2})^2
# ---------------------------------------------------------------------------


@njit
def _plap_margin_loop(x, y, alpha, gamma_sq):
    worst = np.inf
    at = -1
    for i in range(x.shape[0]):
        a = x[i]
        b = y[i]
        d1 = a ** (alpha - 1.0) - b ** (alpha - 1.0)
        d2 = a ** (0.5 * alpha) - b ** (0.5 * alpha)
        val = 2.0 * d1 * (a - b) - gamma_sq * d2 * d2
        if val < worst:
            worst = val
            at = i
    return worst, at


def _plap_margin_numpy(x, y, alpha, gamma_sq):
    d1 = x ** (alpha - 1.0) - y ** (alpha - 1.0)
    d2 = x ** (0.5 * alpha) - y ** (0.5 * alpha)
    val = 2.0 * d1 * (x - y) - gamma_sq * d2 * d2
    at = int(np.argmin(val))
    return float(val[at]), at


if NUMBA_ENABLED:
    diag_em = _diag_em_loop
    burgers_skew = _burgers_skew_loop
    plap_flux = _plap_loop
    plap_margin = _plap_margin_loop
else:
    diag_em = _diag_em_numpy
    burgers_skew = _burgers_skew_numpy
    plap_flux = _plap_numpy
    plap_margin = _plap_margin_numpy

IMPLEMENTATIONS = {
    "diag_em": (_diag_em_loop, _diag_em_numpy),
    "burgers_skew": (_burgers_skew_loop, _burgers_skew_numpy),
    "plap_flux": (_plap_loop, _plap_numpy),
    "plap_margin": (_plap_margin_loop, _plap_margin_numpy),
}
