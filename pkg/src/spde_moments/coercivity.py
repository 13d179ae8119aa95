"""Sampling audits of the structural conditions on an operator pair.

The audits evaluate the inequalities on many sampled states and fit the
constants that make them hold on the sample.  A fitted constant is a bound on
the discrete constant over the sampled set, not a certificate.

Conditions, in the notation of :mod:`spde_moments.operators`:

* coercivity: ``2<A v, v> + |B v|_HS^2 + (p-2)|B(v)* v|^2 / |v|_H^2
  <= -theta |v|_V^alpha + f + K_c |v|_H^2``;
* the (p-1) variant: ``2<A v, v> + (p-1)|B v|_HS^2 <= ...`` (same right side);
* local monotonicity, growth of A and B, hemicontinuity;
* pointwise algebraic conditions on coefficient matrices.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .gelfand import GalerkinSpace, dual_norm, h_norm, v_norm
from .operators import (OperatorPair, apply_A, apply_B, as_field, b_adjoint_v, hs_norm_sq)

VIOLATION_RTOL = 1e-9
N_WITNESSES = 3


# -- samplers -------------------------------------------------------------------


class VectorSampler:
    """Deterministic source of test states for a space.

    A draw mixes four families: Gaussian coefficient vectors with a random
    spectral slope, single basis modes, the highest resolved mode, and short
    sums of smooth low modes.  Each state is rescaled to an H norm drawn
    log-uniformly from ``amplitudes``.
    """

    def __init__(self, space: GalerkinSpace, seed: int = 0, amplitudes=(1.0, 1.0),
                 weights=(0.4, 0.3, 0.15, 0.15)):
        self.space = space
        self.seed = int(seed)
        self.amplitudes = (float(amplitudes[0]), float(amplitudes[1]))
        w = np.asarray(weights, dtype=float)
        self.weights = w / w.sum()
        self._calls = 0

    def draw(self, n: int) -> np.ndarray:
        """``n`` nonzero states, shape ``(n, space.n)``; successive calls differ."""
        if n < 1:
            raise ValueError("need at least one sample")
        rng = np.random.default_rng([self.seed, self._calls])
        self._calls += 1
        sp_ = self.space
        family = rng.choice(4, size=n, p=self.weights)
        out = np.empty((n, sp_.n))
        top = self._n_modes() - 1
        for row in range(n):
            fam = family[row]
            if fam == 0:
                v = self._gaussian(rng)
            elif fam == 1:
                v = self._mode(rng, int(rng.integers(0, top + 1)))
            elif fam == 2:
                v = self._mode(rng, top)
            else:
                v = sum(rng.standard_normal() * self._mode(rng, int(j))
                        for j in rng.integers(0, min(3, top) + 1, size=3))
            v = sp_.project_admissible(v)
            nv = float(h_norm(sp_, v))
            if not nv > 0.0:
                v = sp_.project_admissible(self._mode(rng, 0))
                nv = float(h_norm(sp_, v))
            lo, hi = self.amplitudes
            amp = lo if lo == hi else math.exp(rng.uniform(math.log(lo), math.log(hi)))
            out[row] = v * (amp / nv)
        return out

    # per-kind mode tables

    def _n_modes(self) -> int:
        sp_ = self.space
        if sp_.kind == "fourier-torus":
            return sp_.n
        if sp_.kind == "fourier-torus-2d-vector":
            return int(np.ceil(sp_.shape[0] / 3.0)) - 1
        return sp_.shape[0]

    def _gaussian(self, rng) -> np.ndarray:
        sp_ = self.space
        slope = rng.uniform(0.0, 2.0)
        if sp_.kind == "fourier-torus":
            return rng.standard_normal(sp_.n) / (1.0 + sp_.modes) ** slope
        if sp_.kind == "fourier-torus-2d-vector":
            k1, k2 = sp_.fft_wavevectors
            damp = (1.0 + np.sqrt(k1 ** 2 + k2 ** 2)) ** (-slope)
            noise = rng.standard_normal((2,) + sp_.shape)
            field = np.real(np.fft.ifft2(np.fft.fft2(noise) * damp))
            return field.ravel()
        v = rng.standard_normal(sp_.n)
        if slope > 1.0:
            # smooth a little so gradient terms do not always dominate
            v = sum(rng.standard_normal() * self._mode(rng, int(j))
                    for j in rng.integers(0, self._n_modes(), size=4))
        return v

    def _mode(self, rng, k: int) -> np.ndarray:
        sp_ = self.space
        if sp_.kind == "fourier-torus":
            e = np.zeros(sp_.n)
            e[k] = 1.0
            return e
        if sp_.kind == "fourier-torus-2d-vector":
            k = max(k, 1)
            n1 = sp_.shape[0]
            ang = rng.uniform(0.0, 2.0 * np.pi)
            i1, i2 = int(round(k * math.cos(ang))), int(round(k * math.sin(ang)))
            if i1 == 0 and i2 == 0:
                i1 = 1
            x = np.arange(n1) / n1
            X, Y = np.meshgrid(x, x, indexing="ij")
            phase = 2.0 * np.pi * (i1 * X + i2 * Y) + rng.uniform(0.0, 2.0 * np.pi)
            perp = np.array([-i2, i1], dtype=float) / math.hypot(i1, i2)
            field = perp[:, None, None] * np.cos(phase)[None]
            return field.ravel()
        shape = sp_.shape
        if sp_.kind == "fd-neumann-interval":
            x = np.arange(shape[0]) / (shape[0] - 1)
            return np.cos(np.pi * k * x)
        parts = []
        for axis, m in enumerate(shape):
            kk = k + 1 if axis == 0 else int(rng.integers(1, min(k + 1, m) + 1))
            parts.append(np.sin(np.pi * kk * np.arange(1, m + 1) / (m + 1)))
        grid = parts[0]
        for q in parts[1:]:
            grid = np.multiply.outer(grid, q)
        comp = np.zeros(sp_.components)
        comp[int(rng.integers(0, sp_.components))] = 1.0
        if sp_.components > 1 and rng.uniform() < 0.5:
            comp = rng.standard_normal(sp_.components)
        return np.multiply.outer(comp, grid).ravel()


# -- reports --------------------------------------------------------------------


@dataclass
class CoercivityReport:
    condition: str
    p: Optional[float]
    alpha: float
    theta_fit: Optional[float]
    K_c: Optional[float]
    n_samples: int
    worst_margin: float
    witnesses: list = field(default_factory=list)
    passed: Optional[bool] = None
    theta: Optional[float] = None
    fitted: dict = field(default_factory=dict)

    @property
    def violations(self) -> list:
        return [w for w in self.witnesses if w["margin"] < 0.0] if self.passed is False else []

    def to_dict(self) -> dict:
        return _clean(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


def _clean(x):
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def _witnesses(margins, states, extra=None) -> list:
    order = np.argsort(margins, kind="stable")[:N_WITNESSES]
    out = []
    for i in order:
        w = {"index": int(i), "margin": float(margins[i]), "state": np.asarray(states[i]).tolist()}
        if extra is not None:
            w.update({k: float(v[i]) for k, v in extra.items()})
        out.append(w)
    return out


# -- coercivity -----------------------------------------------------------------


def _terms(pair: OperatorPair, t: float, V: np.ndarray):
    space = pair.space
    hn = h_norm(space, V)
    if np.any(hn == 0.0):
        raise ValueError("coercivity is only defined for nonzero v")
    drift = np.sum(apply_A(pair, t, V) * V, axis=-1)
    B = apply_B(pair, t, V)
    hs = np.einsum("...nk,n,...nk->...", B, space.h_weights, B)
    # B(v)* applied to v/|v|_H avoids squaring tiny norms
    adj = np.einsum("...nk,n,...n->...k", B, space.h_weights, V / hn[..., None])
    ratio = np.sum(adj * adj, axis=-1)
    return 2.0 * drift, hs, ratio, hn


def coercivity_lhs(pair: OperatorPair, t: float, v, p: float):
    """2<A v, v> + |B v|_HS^2 + (p-2) |B(v)* v|^2 / |v|_H^2, batched."""
    if p < 2.0:
        raise ValueError("p must be at least 2")
    V = pair.space.check(v)
    drift, hs, ratio, _ = _terms(pair, t, V)
    return drift + hs + (p - 2.0) * ratio


def coercivity_lhs_pminus1(pair: OperatorPair, t: float, v, p: float):
    """2<A v, v> + (p-1)|B v|_HS^2, batched."""
    V = pair.space.check(v)
    drift, hs, _, _ = _terms(pair, t, V)
    return drift + (p - 1.0) * hs


def _audit(condition, pair, lhs, V, p, theta, K_c, t):
    space = pair.space
    f = float(pair.forcing_f(t))
    vn = v_norm(space, V) ** pair.alpha
    hsq = h_norm(space, V) ** 2
    K_c = 0.0 if K_c is None else float(K_c)
    budget = f + K_c * hsq
    keep = vn > 0.0
    theta_fit = float(np.min((budget[keep] - lhs[keep]) / vn[keep])) if np.any(keep) else math.inf
    passed = None
    if theta is None:
        margin = budget - theta_fit * vn - lhs if math.isfinite(theta_fit) else budget - lhs
    else:
        margin = budget - theta * vn - lhs
        scale = 1.0 + np.abs(lhs) + abs(theta) * vn + np.abs(budget)
        passed = bool(np.all(margin >= -VIOLATION_RTOL * scale))
    return CoercivityReport(
        condition=condition,
        p=float(p),
        alpha=pair.alpha,
        theta_fit=theta_fit,
        K_c=K_c,
        n_samples=int(V.shape[0]),
        worst_margin=float(np.min(margin)),
        witnesses=_witnesses(margin, V),
        passed=passed,
        theta=None if theta is None else float(theta),
    )


def check_coercivity(pair: OperatorPair, p: float, theta, K_c, sampler: VectorSampler, n: int,
                     t: float = 0.0) -> CoercivityReport:
    """Audit the p-dependent coercivity inequality on ``n`` sampled states.

    ``theta_fit`` is the largest theta with no sampled violation at the given
    ``K_c``; it is the exact limit of a bisection over theta on this sample.
    Pass ``theta=None`` to fit only.
    """
    V = sampler.draw(n)
    return _audit("coercivity", pair, coercivity_lhs(pair, t, V, p), V, p, theta, K_c, t)


def check_coercivity_pminus1(pair: OperatorPair, p: float, theta, K_c, sampler: VectorSampler,
                             n: int, t: float = 0.0) -> CoercivityReport:
    V = sampler.draw(n)
    return _audit("coercivity-pminus1", pair, coercivity_lhs_pminus1(pair, t, V, p), V, p, theta, K_c, t)


def check_monotonicity(pair: OperatorPair, sampler: VectorSampler, n: int, t: float = 0.0,
                       K: Optional[float] = None) -> CoercivityReport:
    """Fit K in 2<A u - A v, u - v> + |B u - B v|^2 <= K (1+|v|_V^a)(1+|v|_H^b)|u-v|_H^2.

    Half of the pairs are independent draws, half are close pairs v + small
    perturbation, which probe the local modulus.
    """
    space = pair.space
    V = sampler.draw(n)
    U = sampler.draw(n)
    close = np.arange(n) % 2 == 1
    rng = np.random.default_rng([sampler.seed, 7919])
    eps = 10.0 ** rng.uniform(-4, -1, size=n)
    U[close] = V[close] + eps[close, None] * U[close]
    U = np.array([space.project_admissible(u) for u in U])
    dA = apply_A(pair, t, U) - apply_A(pair, t, V)
    D = U - V
    dB = apply_B(pair, t, U) - apply_B(pair, t, V)
    lhs = 2.0 * np.sum(dA * D, axis=-1) + np.einsum("mnk,n,mnk->m", dB, space.h_weights, dB)
    weight = (1.0 + v_norm(space, V) ** pair.alpha) * (1.0 + h_norm(space, V) ** pair.beta) \
        * h_norm(space, D) ** 2
    keep = weight > 0.0
    k_fit = float(max(0.0, np.max(lhs[keep] / weight[keep]))) if np.any(keep) else 0.0
    passed = None
    ref = k_fit if K is None else float(K)
    margin = ref * weight - lhs
    if K is not None:
        passed = bool(np.all(margin >= -VIOLATION_RTOL * (1.0 + np.abs(lhs) + ref * weight)))
    return CoercivityReport(
        condition="monotonicity",
        p=None,
        alpha=pair.alpha,
        theta_fit=None,
        K_c=None,
        n_samples=n,
        worst_margin=float(np.min(margin)),
        witnesses=_witnesses(margin, V),
        passed=passed,
        fitted={"K": k_fit},
    )


def check_growth(pair: OperatorPair, sampler: VectorSampler, n: int, t: float = 0.0,
                 K_B: Optional[float] = None) -> CoercivityReport:
    """Fit the growth constants of A and B.

    K_A: smallest constant with |A v|_{V*}^{a/(a-1)} <= K_A (f + |v|_V^a)(1 + |v|_H^b).
    K_alpha: smallest constant with |B v|_HS^2 <= f + K_B |v|_H^2 + K_alpha |v|_V^a at the
    given ``K_B`` (default 0); K_B is then refitted at that K_alpha.
    """
    space = pair.space
    V = sampler.draw(n)
    f = float(pair.forcing_f(t))
    a = pair.alpha
    vn = v_norm(space, V) ** a
    hsq = h_norm(space, V) ** 2
    A = apply_A(pair, t, V)
    dn = np.array([dual_norm(space, row) for row in A])
    budget_A = (f + vn) * (1.0 + np.sqrt(hsq) ** pair.beta)
    keep = budget_A > 0.0
    k_a = float(np.max(dn[keep] ** (a / (a - 1.0)) / budget_A[keep])) if np.any(keep) else 0.0
    hs = hs_norm_sq(pair, t, V)
    kb0 = 0.0 if K_B is None else float(K_B)
    keep = vn > 0.0
    k_alpha = float(max(0.0, np.max((hs[keep] - f - kb0 * hsq[keep]) / vn[keep]))) if np.any(keep) else 0.0
    k_b = float(max(0.0, np.max((hs - f - k_alpha * vn) / hsq)))
    decl = pair.declared
    checks = []
    if decl.K_A is not None:
        checks.append(k_a <= decl.K_A * (1.0 + 1e-6))
    if decl.K_alpha is not None:
        checks.append(k_alpha <= decl.K_alpha * (1.0 + 1e-6) + 1e-12)
    margin = (1.0 if decl.K_alpha is None else decl.K_alpha) * vn + kb0 * hsq + f - hs
    return CoercivityReport(
        condition="growth",
        p=None,
        alpha=a,
        theta_fit=None,
        K_c=None,
        n_samples=n,
        worst_margin=float(np.min(margin)),
        witnesses=_witnesses(margin, V),
        passed=all(checks) if checks else None,
        fitted={"K_A": k_a, "K_alpha": k_alpha, "K_B": k_b},
    )


# -- hemicontinuity -------------------------------------------------------------


@dataclass
class HemicontinuityReport:
    lambdas: list
    values: list
    divided_differences: list
    degree: Optional[int]
    interpolation_errors: list
    continuous: bool

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def _divided_differences(x, y, order):
    d = np.array(y, dtype=float)
    out = []
    for r in range(1, order + 1):
        d = (d[1:] - d[:-1]) / (x[r:] - x[:-r])
        out.append(d.copy())
    return out


def check_hemicontinuity(pair: OperatorPair, u, v, w, lambdas, t: float = 0.0,
                         max_order: int = 4, refinements: int = 6) -> HemicontinuityReport:
    """Study lambda -> <A(u + lambda v), w> on a grid.

    ``degree`` is the smallest polynomial degree whose next divided
    differences vanish to rounding (None if none up to ``max_order - 1``).
    Continuity is judged by refinement: the error of piecewise-linear
    interpolation at midpoints must shrink as the grid is halved.
    """
    lam = np.asarray(lambdas, dtype=float)
    if lam.ndim != 1 or lam.size < 2 or np.any(np.diff(lam) <= 0.0):
        raise ValueError("lambdas must be a strictly increasing grid of at least 2 points")
    u, v, w = (pair.space.check(x) for x in (u, v, w))

    def g(ls):
        states = u[None, :] + ls[:, None] * v[None, :]
        return apply_A(pair, t, states) @ w

    vals = g(lam)
    scale = 1.0 + np.max(np.abs(vals))
    dds = _divided_differences(lam, vals, min(max_order, lam.size - 1))
    width = lam[-1] - lam[0]
    dd_max = [float(np.max(np.abs(d))) if d.size else 0.0 for d in dds]
    degree = None
    for r, m in enumerate(dd_max, start=1):
        if m * width ** r <= 1e-10 * scale:
            degree = r - 1
            break
    errors = []
    grid = lam
    for _ in range(refinements):
        mid = 0.5 * (grid[1:] + grid[:-1])
        gm = g(mid)
        gg = g(grid)
        errors.append(float(np.max(np.abs(gm - 0.5 * (gg[1:] + gg[:-1])))))
        grid = np.sort(np.concatenate([grid, mid]))
    tol = 1e-12 * scale
    continuous = errors[-1] <= tol or (errors[-1] < errors[0] and
                                      all(b <= a * 1.01 + tol for a, b in zip(errors, errors[1:])))
    return HemicontinuityReport(lam.tolist(), vals.tolist(), dd_max, degree, errors, bool(continuous))


# -- pointwise algebraic conditions ----------------------------------------------


def _sigma_from_b(b_nodes):
    return np.einsum("pik,pjk->pij", b_nodes, b_nodes)


def ellipticity_min(a, sigma=None, points=None, *, b=None) -> float:
    """min over points of the smallest eigenvalue of sym(2a - sigma).

    Pass either the contracted ``sigma^{ij}`` (slots i, j) or the noise
    coefficients ``b`` (slots i, k), from which sigma^{ij} = sum_k b^i_k b^j_k.
    ``points`` optionally restricts a node-dependent field to some node indices.
    """
    af = as_field(a, ("i", "j")) if np.ndim(a) or not np.isscalar(a) else as_field([[float(a)]], ("i", "j"))
    npts = 1 if af.constant else af.values.shape[0]
    if b is not None:
        bf = as_field(b, ("i", "k"))
        if not bf.constant:
            npts = bf.values.shape[0]
        s = _sigma_from_b(bf.at_nodes(npts))
    elif sigma is not None:
        sf = as_field(sigma, ("i", "j"))
        if not sf.constant:
            npts = sf.values.shape[0]
        s = sf.at_nodes(npts)
    else:
        s = 0.0
    m = 2.0 * af.at_nodes(npts) - s
    if points is not None:
        m = m[np.asarray(points)]
    m = 0.5 * (m + np.swapaxes(m, -1, -2))
    return float(np.min(np.linalg.eigvalsh(m)))


def msp_tensor(a, sigma, lam, p):
    """The p-dependent tensor (i, j, alpha, beta) of the modified parabolicity condition."""
    a = np.asarray(a, dtype=float)
    s = np.asarray(sigma, dtype=float)
    l = np.asarray(lam, dtype=float)
    if not np.allclose(l, np.swapaxes(l, -1, -2), rtol=0.0, atol=1e-14):
        raise ValueError("lambda must be symmetric in (alpha, beta)")
    ss = np.einsum("ikga,jkgb->ijab", s, s)
    r = s - l
    rr = np.einsum("ikga,jkgb->ijab", r, r)
    return 2.0 * a - ss - (p - 2.0) * rr


def _sphere_points(d, resolution):
    if d == 1:
        return np.array([[1.0]])
    if d == 2:
        th = np.linspace(0.0, np.pi, resolution, endpoint=False)
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    th = np.linspace(0.0, np.pi, resolution)
    ph = np.linspace(0.0, 2.0 * np.pi, resolution, endpoint=False)
    T, P = np.meshgrid(th, ph, indexing="ij")
    return np.stack([np.sin(T) * np.cos(P), np.sin(T) * np.sin(P), np.cos(T)], axis=-1).reshape(-1, 3)


def msp_check(a, sigma, lam, p: float, resolution: int = 64, starts: int = 8) -> float:
    """Estimate the largest kappa in the biquadratic parabolicity condition.

    The form is quadratic in eta for fixed xi and quadratic in xi for fixed
    eta, so each half-minimisation is an exact eigenvalue problem.  The xi
    sphere is gridded and the ``starts`` best grid points are improved by
    alternating the two eigenproblems, which never increases the form.
    Constant coefficients with shapes a: (d, d, N, N), sigma and lam:
    (d, K, N, N).
    """
    T = msp_tensor(a, sigma, lam, p)
    d = T.shape[0]

    def in_eta(xi):
        M = np.einsum("ijab,i,j->ab", T, xi, xi)
        w, vecs = np.linalg.eigh(0.5 * (M + M.T))
        return float(w[0]), vecs[:, 0]

    def in_xi(eta):
        M = np.einsum("ijab,a,b->ij", T, eta, eta)
        w, vecs = np.linalg.eigh(0.5 * (M + M.T))
        return float(w[0]), vecs[:, 0]

    pts = _sphere_points(d, resolution)
    vals = np.array([in_eta(x)[0] for x in pts])
    best = float(vals.min())
    for idx in np.argsort(vals)[:starts]:
        xi = pts[idx]
        val, eta = in_eta(xi)
        for _ in range(500):
            v1, xi = in_xi(eta)
            v2, eta = in_eta(xi)
            done = val - v2 <= 1e-15 * (1.0 + abs(val))
            val = min(val, v1, v2)
            if done:
                break
        best = min(best, val)
    return best


def higher_order_factor(m: int, p: float) -> float:
    return 0.5 * (p + (-1) ** m * (p - 2.0))


def higher_order_check(A_coef, B_coef, m: int, p: float) -> float:
    """Largest lambda with 2 xi^T A xi - c(m,p) sum_k (B_k . xi)^2 >= lambda |xi|^2.

    ``A_coef`` is square over the order-m multi-indices, ``B_coef`` has one
    row per noise coordinate.  c(m,p) is p - 1 for even m and 1 for odd m.
    The minimum over the unit sphere is an exact symmetric eigenvalue.
    """
    A = np.atleast_2d(np.asarray(A_coef, dtype=float))
    B = np.atleast_2d(np.asarray(B_coef, dtype=float))
    if A.shape[0] != A.shape[1] or B.shape[1] != A.shape[0]:
        raise ValueError("A must be square and B must have one column per multi-index")
    M = 2.0 * 0.5 * (A + A.T) - higher_order_factor(m, p) * B.T @ B
    return float(np.linalg.eigvalsh(M)[0])


@dataclass
class GammaBoundReport:
    alpha: float
    gamma_sq: float
    n_samples: int
    worst_margin: float
    witness: tuple
    passed: bool

    def to_dict(self) -> dict:
        return _clean(asdict(self))


def p_laplace_gamma_bound(alpha: float, gamma_sq: float, n_samples: int = 10 ** 6, *,
                          x_max: float = 10.0, seed: int = 0, tol: float = 1e-10) -> GammaBoundReport:
    """Brute-force the scalar inequality behind p-Laplace monotonicity.

    Samples (x, y) uniformly on [0, x_max]^2 and adds probes on the axes and
    close to the diagonal, where the margin is second order in x - y.
    """
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, x_max, n_samples)
    y = rng.uniform(0.0, x_max, n_samples)
    n_probe = max(1, n_samples // 100)
    px = rng.uniform(0.0, x_max, n_probe)
    rel = 10.0 ** rng.uniform(-6, 0, n_probe) * rng.choice([-1.0, 1.0], n_probe)
    py = np.clip(px * (1.0 + rel), 0.0, x_max)
    ax = np.concatenate([np.zeros(n_probe), px[: n_probe // 2]])
    ay = np.concatenate([rng.uniform(0.0, x_max, n_probe), np.zeros(n_probe // 2)])
    X = np.concatenate([x, px, ax])
    Y = np.concatenate([y, py, ay])
    worst, at = kernels.plap_margin(X, Y, float(alpha), float(gamma_sq))
    return GammaBoundReport(float(alpha), float(gamma_sq), int(X.size), float(worst),
                            (float(X[at]), float(Y[at])), bool(worst >= -tol))
