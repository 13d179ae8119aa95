"""Euler-Maruyama time stepping and pathwise functionals.

``semi-implicit-em`` solves ``(M - dt L) v' = M v + dt N(t, v) + M B(t, v) dW``
with L the pair's linear drift and N the remainder.  ``explicit-em`` is the
fully explicit step; ``tamed-em`` divides the explicit drift increment by
``1 + dt |M^-1 A(v)|_H``.

Paths are simulated in stacks ``(m, n)``.  Pairs with a diagonal linear
structure and no remainder go through the compiled kernel in
:mod:`spde_moments.kernels`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import kernels
from .gelfand import GalerkinSpace, h_norm, v_norm
from .noise import WienerStream, refine, sample_increments
from .operators import OperatorPair

METHODS = ("semi-implicit-em", "explicit-em", "tamed-em")


@dataclass(frozen=True)
class SchemeConfig:
    method: str = "semi-implicit-em"
    dt: float = 1e-3
    T: float = 1.0
    record_stride: int = 1

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError("dt must be positive")
        if not (self.T > 0.0 and math.isfinite(self.T)):
            raise ValueError("T must be positive")
        if self.dt > self.T * (1.0 + 1e-12):
            raise ValueError("dt must not exceed T")
        n = round(self.T / self.dt)
        if abs(n * self.dt - self.T) > 1e-9 * self.T:
            raise ValueError(f"T = {self.T} is not a multiple of dt = {self.dt}")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class PathFunctionals:
    sup_h: float
    int_v_alpha: float
    terminal: np.ndarray
    diverged: bool = False
    t_last: float = 0.0
    snapshots: Optional[list] = field(default=None, repr=False)


# -- one step ---------------------------------------------------------------------


def _noise_increment(pair: OperatorPair, t: float, V: np.ndarray, dW: np.ndarray) -> np.ndarray:
    B = pair.noise_fn(t, V)
    return np.einsum("mnk,mk->mn", B, dW)


def _step_stack(pair, method, dt, t, V, dW, solver):
    w = pair.space.h_weights
    bdw = _noise_increment(pair, t, V, dW)
    if method == "semi-implicit-em":
        rhs = w * (V + bdw) + dt * pair.remainder(t, V)
        return solver(rhs), bdw
    drift = pair.drift(t, V) / w
    if method == "tamed-em":
        size = np.sqrt(np.sum(w * drift * drift, axis=1))
        return V + dt * drift / (1.0 + dt * size)[:, None] + bdw, bdw
    return V + dt * drift + bdw, bdw


def step(pair: OperatorPair, scheme: SchemeConfig, t: float, v, dW, solver: Optional[Callable] = None):
    """One step from state(s) ``v`` with increment(s) ``dW``; returns the new state(s)."""
    v = pair.space.check(v)
    single = v.ndim == 1
    V = v.reshape(-1, pair.space.n)
    dW = np.asarray(dW, dtype=float).reshape(V.shape[0], pair.k_noise)
    if solver is None and scheme.method == "semi-implicit-em":
        solver = pair.linear_solver(scheme.dt)
    with np.errstate(all="ignore"):
        out, _ = _step_stack(pair, scheme.method, scheme.dt, t, V, dW, solver)
    return out[0] if single else out


# -- batches of paths -------------------------------------------------------------


def _v_weights(space: GalerkinSpace) -> Optional[np.ndarray]:
    """Diagonal weights with |v|_V^2 = sum v_w v^2, when the V norm is diagonal."""
    if space.kind != "fourier-torus":
        return None
    vw = space.h_weights * space.wavenumbers ** (2 * space.order)
    if space.v_norm_kind == "full":
        vw = vw + space.h_weights
    return vw


def _use_kernel(pair: OperatorPair, scheme: SchemeConfig) -> bool:
    return (pair.diagonal is not None and pair.nonlinear_fn is None
            and scheme.method in ("semi-implicit-em", "explicit-em")
            and _v_weights(pair.space) is not None)


def simulate_batch(pair: OperatorPair, scheme: SchemeConfig, U0: np.ndarray, dW: np.ndarray,
                   alpha: Optional[float] = None, p_ito: float = 0.0, record: bool = False) -> dict:
    """Simulate ``m`` paths from ``U0 (m, n)`` with increments ``dW (m, n_steps, K)``.

    Returns a dict of per-path arrays: ``sup_h``, ``int_v``, ``terminal``,
    ``diverged``, ``t_last``, ``ito_rhs`` (zeros unless ``p_ito > 0``) and,
    with ``record``, ``snapshots`` of shape ``(m, n_records, n)`` with times.
    """
    space = pair.space
    U0 = np.ascontiguousarray(space.check(U0).reshape(-1, space.n), dtype=float)
    dW = np.ascontiguousarray(dW, dtype=float)
    if dW.shape != (U0.shape[0], scheme.n_steps, pair.k_noise):
        raise ValueError(f"increments have shape {dW.shape}, expected "
                         f"{(U0.shape[0], scheme.n_steps, pair.k_noise)}")
    alpha = pair.alpha if alpha is None else float(alpha)
    if _use_kernel(pair, scheme) and not record:
        lam, noise = pair.diagonal
        sup_h, int_v, terminal, diverged, t_last, ito = kernels.diag_em(
            np.ascontiguousarray(lam, dtype=float), np.ascontiguousarray(noise, dtype=float),
            space.h_weights, _v_weights(space), U0, dW, float(scheme.dt),
            int(scheme.record_stride), alpha, scheme.method == "semi-implicit-em", float(p_ito))
        return {"sup_h": sup_h, "int_v": int_v, "terminal": terminal, "diverged": diverged,
                "t_last": t_last, "ito_rhs": ito}
    return _generic_batch(pair, scheme, U0, dW, alpha, p_ito, record)


def _generic_batch(pair, scheme, U0, dW, alpha, p_ito, record):
    space = pair.space
    w = space.h_weights
    m = U0.shape[0]
    dt = scheme.dt
    solver = pair.linear_solver(dt) if scheme.method == "semi-implicit-em" else None
    x = U0.copy()
    hsq = np.sum(w * x * x, axis=1)
    sup_h = np.sqrt(hsq)
    int_v = np.zeros(m)
    ito = hsq ** (0.5 * p_ito) if p_ito > 0.0 else np.zeros(m)
    diverged = np.zeros(m, dtype=bool)
    t_last = np.full(m, scheme.n_steps * dt)
    alive = np.ones(m, dtype=bool)
    snaps, times = ([x.copy()], [0.0]) if record else (None, None)
    with np.errstate(all="ignore"):
        for s in range(scheme.n_steps):
            t = s * dt
            int_v += np.where(alive, v_norm(space, x) ** alpha * dt, 0.0)
            y, bdw = _step_stack(pair, scheme.method, dt, t, x, dW[:, s, :], solver)
            if p_ito > 0.0:
                xn = np.sqrt(hsq)
                drift_pair = np.sum(w * x * (y - x - bdw), axis=1)
                mart = np.sum(w * x * bdw, axis=1)
                qv = np.sum(w * bdw * bdw, axis=1)
                pos = xn > 0.0
                pw = np.where(pos, xn, 1.0) ** (p_ito - 2.0)
                term = p_ito * pw * (drift_pair + mart) + 0.5 * p_ito * pw * qv
                if p_ito != 2.0:
                    pw4 = np.where(pos, np.where(pos, xn, 1.0) ** (p_ito - 4.0), 0.0)
                    term = term + 0.5 * p_ito * (p_ito - 2.0) * pw4 * mart * mart
                term = np.where(pos, term, qv if p_ito == 2.0 else 0.0)
                ito = np.where(alive, ito + term, ito)
            hsq_new = np.sum(w * y * y, axis=1)
            bad = alive & ~(np.all(np.isfinite(y), axis=1) & np.isfinite(hsq_new))
            if bad.any():
                diverged |= bad
                t_last[bad] = t
                alive &= ~bad
            x = np.where(alive[:, None], y, x)
            hsq = np.where(alive, hsq_new, hsq)
            if (s + 1) % scheme.record_stride == 0 or s + 1 == scheme.n_steps:
                sup_h = np.where(alive, np.maximum(sup_h, np.sqrt(hsq)), sup_h)
                if record:
                    snaps.append(x.copy())
                    times.append((s + 1) * dt)
    out = {"sup_h": sup_h, "int_v": int_v, "terminal": x, "diverged": diverged,
           "t_last": t_last, "ito_rhs": ito}
    if record:
        out["snapshots"] = np.stack(snaps, axis=1)
        out["times"] = np.array(times)
    return out


def simulate_path(pair: OperatorPair, scheme: SchemeConfig, u0, noise: WienerStream,
                  record: bool = False) -> PathFunctionals:
    """One path driven by ``noise``; bit-reproducible given the stream."""
    if noise.k_trunc != pair.k_noise:
        raise ValueError(f"stream has K={noise.k_trunc}, pair needs K={pair.k_noise}")
    if abs(noise.dt - scheme.dt) > 1e-15 * scheme.dt:
        raise ValueError("stream and scheme disagree on dt")
    u0 = pair.space.check(u0)
    dW = sample_increments(noise, scheme.n_steps)[None]
    res = simulate_batch(pair, scheme, u0[None], dW, record=record)
    snaps = None
    if record:
        snaps = list(zip(res["times"].tolist(), res["snapshots"][0]))
    return PathFunctionals(float(res["sup_h"][0]), float(res["int_v"][0]), res["terminal"][0],
                           bool(res["diverged"][0]), float(res["t_last"][0]), snaps)


def write_trajectory_csv(path, functionals: PathFunctionals) -> None:
    """Columns t, coeff_0, ..., coeff_{n-1} at the recording stride."""
    if functionals.snapshots is None:
        raise ValueError("path was simulated without record=True")
    n = functionals.snapshots[0][1].size
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(["t"] + [f"coeff_{j}" for j in range(n)])
        for t, x in functionals.snapshots:
            wr.writerow([repr(float(t))] + [repr(float(c)) for c in x])


# -- diagnostics -------------------------------------------------------------------


def ito_residual(pair: OperatorPair, scheme: SchemeConfig, u0, noise: WienerStream, p: float) -> float:
    """|u(T)|_H^p minus the discrete right side of the Ito formula for |.|_H^p.

    The stochastic integral uses the realised increments, the second-order
    terms use the realised quadratic variation |B dW|^2 and ((B* x) . dW)^2,
    and the drift pairing is the increment actually taken by the stepper.
    """
    if p < 2.0:
        raise ValueError("p must be at least 2")
    u0 = pair.space.check(u0)
    dW = sample_increments(noise, scheme.n_steps)[None]
    res = simulate_batch(pair, scheme, u0[None], dW, p_ito=float(p))
    return ito_residual_from_batch(pair, res, p)[0]


def ito_residual_from_batch(pair: OperatorPair, res: dict, p: float) -> np.ndarray:
    end = h_norm(pair.space, res["terminal"]) ** p
    return np.abs(end - res["ito_rhs"])


def diagonal_exact_solution(pair: OperatorPair, u0, W_T: np.ndarray, T: float) -> np.ndarray:
    """Exact solution at T of a diagonal linear pair given W(T) per path ``(m, K)``."""
    if pair.diagonal is None or pair.nonlinear_fn is not None:
        raise ValueError("exact solution needs a diagonal linear pair")
    lam, c = pair.diagonal
    expo = (lam - 0.5 * np.sum(c * c, axis=1))[None, :] * T + W_T @ c.T
    return np.asarray(u0)[None, :] * np.exp(expo)


def coupled_increments(k_trunc: int, base_dt: float, seed: int, path_id: int, n_steps: int,
                       levels: int) -> list:
    """Increments on ``levels`` nested grids dt, dt/2, ... sharing one Brownian path."""
    stream = WienerStream(k_trunc, base_dt, seed, path_id)
    out = [sample_increments(stream, n_steps)]
    for _ in range(levels - 1):
        out.append(refine(out[-1], stream))
        stream = stream.halved()
    return out


def strong_convergence_order(pair: OperatorPair, u0, base_dt: float, levels: int, n_paths: int, *,
                             T: float = 1.0, seed: int = 0, method: str = "semi-implicit-em",
                             reference: str = "auto") -> dict:
    """Regress log strong error against log dt over bridge-coupled levels.

    The error at each level is the mean over paths of |u_dt(T) - u_ref(T)|_H.
    The reference is the exact solution for diagonal linear pairs and the
    finest level otherwise.  Returns ``{"order", "dts", "errors"}``; the order
    is None when every error vanishes (nothing to regress).
    """
    if levels < 2:
        raise ValueError("need at least two levels")
    u0 = pair.space.check(u0)
    n0 = SchemeConfig(method, base_dt, T).n_steps
    exact = reference == "exact" or (reference == "auto" and pair.diagonal is not None
                                     and pair.nonlinear_fn is None)
    n_levels = levels if exact else levels + 1
    dts = [base_dt / 2 ** j for j in range(n_levels)]
    finals = [np.empty((n_paths, pair.space.n)) for _ in dts]
    W_T = np.empty((n_paths, pair.k_noise))
    incs = [coupled_increments(pair.k_noise, base_dt, seed, pid, n0, n_levels) for pid in range(n_paths)]
    for j, dt in enumerate(dts):
        dW = np.stack([inc[j] for inc in incs])
        scheme = SchemeConfig(method, dt, T)
        finals[j] = simulate_batch(pair, scheme, np.broadcast_to(u0, (n_paths, u0.size)), dW)["terminal"]
    for i, inc in enumerate(incs):
        W_T[i] = inc[0].sum(axis=0)
    if exact:
        ref = diagonal_exact_solution(pair, u0, W_T, T)
        errs = [float(np.mean(h_norm(pair.space, f - ref))) for f in finals]
    else:
        errs = [float(np.mean(h_norm(pair.space, f - finals[-1]))) for f in finals[:-1]]
        dts = dts[:-1]
    if all(e == 0.0 for e in errs):
        return {"order": None, "dts": dts, "errors": errs}
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    return {"order": slope, "dts": dts, "errors": errs}


def ito_residual_study(pair: OperatorPair, u0, dt: float, n_paths: int, p: float, *,
                       T: float = 1.0, seed: int = 0, levels: int = 2) -> dict:
    """Mean Ito residual at dt, dt/2, ... on bridge-coupled Brownian paths.

    Coupling the levels removes the path-to-path noise from the ratio of
    successive means, which otherwise swamps the O(dt) signal for p > 2.
    """
    u0 = pair.space.check(u0)
    n0 = SchemeConfig("semi-implicit-em", dt, T).n_steps
    incs = [coupled_increments(pair.k_noise, dt, seed, pid, n0, levels) for pid in range(n_paths)]
    means = []
    dts = [dt / 2 ** j for j in range(levels)]
    for j, h in enumerate(dts):
        dW = np.stack([inc[j] for inc in incs])
        res = simulate_batch(pair, SchemeConfig("semi-implicit-em", h, T),
                             np.broadcast_to(u0, (n_paths, u0.size)), dW, p_ito=float(p))
        means.append(float(np.mean(ito_residual_from_batch(pair, res, p))))
    ratios = [a / b if b > 0.0 else math.inf for a, b in zip(means, means[1:])]
    return {"dts": dts, "mean_residual": means, "ratios": ratios}
