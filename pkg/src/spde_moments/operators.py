"""Discretized drift/noise pairs (A, B) on a :class:`GalerkinSpace`.

An :class:`OperatorPair` evaluates

* ``apply_A(pair, t, v)``: the weak-form drift, a V* coefficient vector with
  ``<A(t, v), w> = apply_A(...) @ w``;
* ``apply_B(pair, t, v)``: the noise, an ``(n, K)`` matrix whose columns are
  ``B_k(t, v)`` in H coordinates;
* ``b_adjoint_v(pair, t, v)``: the vector ``((B_k(t, v), v)_H)_k``.

All three accept a stack of states ``(..., n)``.  Drift is split into a
linear part (treated implicitly by the stepper) and a remainder.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels
from .gelfand import GalerkinSpace, dual_norm, h_norm

EQUATIONS = (
    "spectral-example",
    "heat-dirichlet",
    "heat-neumann",
    "burgers",
    "navier-stokes-2d",
    "system",
    "higher-order",
    "p-laplace",
)


def _zero_forcing(t):
    return 0.0


@dataclass(frozen=True)
class DeclaredConstants:
    """Constants a pair is expected to satisfy.

    ``theta`` may be a number or a function of the moment order ``p``.
    """

    theta: object = None
    K_c: Optional[float] = None
    K_A: Optional[float] = None
    K_B: Optional[float] = None
    K_alpha: Optional[float] = None

    def theta_at(self, p: float):
        if callable(self.theta):
            return float(self.theta(p))
        return self.theta


@dataclass(frozen=True, eq=False)
class OperatorPair:
    name: str
    space: GalerkinSpace
    alpha: float
    beta: float
    k_noise: int
    noise_fn: Callable = field(repr=False)
    nonlinear_fn: Optional[Callable] = field(default=None, repr=False)
    linear_fn: Optional[Callable] = field(default=None, repr=False)
    solver_factory: Optional[Callable] = field(default=None, repr=False)
    forcing_f: Callable = field(default=_zero_forcing, repr=False)
    declared: DeclaredConstants = DeclaredConstants()
    linear: bool = False
    diagonal: Optional[tuple] = field(default=None, repr=False)
    convection_fn: Optional[Callable] = field(default=None, repr=False)
    tamed: bool = False
    info: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise ValueError("alpha must exceed 1")
        if self.beta < 0.0:
            raise ValueError("beta must be nonnegative")

    def drift(self, t: float, V: np.ndarray) -> np.ndarray:
        """Weak drift for a 2-D stack ``(m, n)``."""
        out = np.zeros_like(V)
        if self.linear_fn is not None:
            out += self.linear_fn(V)
        if self.nonlinear_fn is not None:
            out += self.nonlinear_fn(t, V)
        return out

    def remainder(self, t: float, V: np.ndarray) -> np.ndarray:
        """Drift minus its linear part (the explicitly treated piece)."""
        if self.nonlinear_fn is None:
            return np.zeros_like(V)
        return self.nonlinear_fn(t, V)

    def linear_solver(self, dt: float) -> Callable:
        """Return ``rhs -> x`` solving ``(M - dt L) x = rhs`` for stacks."""
        if self.solver_factory is not None:
            return self.solver_factory(dt)
        w = self.space.h_weights
        return lambda rhs: rhs / w


def _stack(space: GalerkinSpace, v) -> tuple[np.ndarray, tuple]:
    v = space.check(v)
    if not np.all(np.isfinite(v)):
        raise ValueError("state contains non-finite entries")
    lead = v.shape[:-1]
    return v.reshape(-1, space.n), lead


def apply_A(pair: OperatorPair, t: float, v) -> np.ndarray:
    V, lead = _stack(pair.space, v)
    return pair.drift(t, V).reshape(lead + (pair.space.n,))


def apply_B(pair: OperatorPair, t: float, v) -> np.ndarray:
    V, lead = _stack(pair.space, v)
    return pair.noise_fn(t, V).reshape(lead + (pair.space.n, pair.k_noise))


def b_adjoint_v(pair: OperatorPair, t: float, v) -> np.ndarray:
    V, lead = _stack(pair.space, v)
    B = pair.noise_fn(t, V)
    out = np.einsum("mnk,n,mn->mk", B, pair.space.h_weights, V)
    return out.reshape(lead + (pair.k_noise,))


def hs_norm_sq(pair: OperatorPair, t: float, v) -> np.ndarray:
    """Hilbert-Schmidt norm squared sum_k |B_k(t, v)|_H^2."""
    B = apply_B(pair, t, v)
    return np.einsum("...nk,n,...nk->...", B, pair.space.h_weights, B)


# -- coefficient fields -------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Coefficients indexed by named slots, constant or given per grid node.

    ``values`` has shape ``slot_shape`` when ``constant`` and
    ``(n_points,) + slot_shape`` otherwise.  Nodes are numbered in C order.
    """

    values: np.ndarray
    slots: tuple[str, ...]
    constant: bool = True

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", vals)
        if not np.all(np.isfinite(vals)):
            raise ValueError("coefficient field has non-finite entries")
        if vals.ndim != len(self.slots) + (0 if self.constant else 1):
            raise ValueError(f"values of shape {vals.shape} do not match slots {self.slots}")

    @property
    def slot_shape(self) -> tuple[int, ...]:
        return self.values.shape if self.constant else self.values.shape[1:]

    def at_nodes(self, n_points: int) -> np.ndarray:
        if self.constant:
            return np.broadcast_to(self.values, (n_points,) + self.values.shape)
        if self.values.shape[0] != n_points:
            raise ValueError(f"field given on {self.values.shape[0]} points, grid has {n_points}")
        return self.values


def as_field(x, slots: tuple[str, ...]) -> CoefficientField:
    if isinstance(x, CoefficientField):
        if x.slots != slots:
            raise ValueError(f"expected slots {slots}, got {x.slots}")
        return x
    arr = np.asarray(x, dtype=float)
    if arr.ndim == len(slots):
        return CoefficientField(arr, slots, True)
    return CoefficientField(arr, slots, False)


CSV_SLOTS = ("i", "j", "alpha", "beta", "k")


def load_coefficient_csv(path, slot_shape: dict, grid_shape: Optional[tuple] = None) -> CoefficientField:
    """Read a coefficient field from CSV.

    The header names the columns: ``g0, g1, ...`` (grid indices, only when
    ``grid_shape`` is given), then ``i, j, alpha, beta, k, value``.  Slots not
    listed in ``slot_shape`` must be 0.  Missing entries are 0.
    """
    slots = tuple(s for s in CSV_SLOTS if s in slot_shape)
    shape = tuple(int(slot_shape[s]) for s in slots)
    if grid_shape is None:
        values = np.zeros(shape)
    else:
        values = np.zeros((int(np.prod(grid_shape)),) + shape)
    grid_cols = [f"g{a}" for a in range(len(grid_shape or ()))]
    expected = grid_cols + list(CSV_SLOTS) + ["value"]
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = [h.strip() for h in next(reader)]
        if header != expected:
            raise ValueError(f"{path}: header {header} != {expected}")
        for lineno, row in enumerate(reader, start=2):
            if not row or row[0].lstrip().startswith("#"):
                continue
            if len(row) != len(expected):
                raise ValueError(f"{path}:{lineno}: expected {len(expected)} columns")
            ints = [int(c) for c in row[:-1]]
            val = float(row[-1])
            g, s = ints[: len(grid_cols)], dict(zip(CSV_SLOTS, ints[len(grid_cols):]))
            for name, idx in s.items():
                if name not in slot_shape and idx != 0:
                    raise ValueError(f"{path}:{lineno}: slot {name} must be 0")
            idx = tuple(s[n] for n in slots)
            if grid_shape is not None:
                idx = (int(np.ravel_multi_index(g, grid_shape)),) + idx
            values[idx] = val
    return CoefficientField(values, slots, grid_shape is None)


# -- shared assembly helpers --------------------------------------------------


def _n_points(space: GalerkinSpace) -> int:
    return space.n // space.components


def _scalar_ops(space: GalerkinSpace):
    """Per-axis face gradients, centred gradients and face averages on one component."""
    npts = _n_points(space)
    faces, centred, averages = [], [], []
    for g, c in zip(space.face_gradients, space.centered_gradients):
        nf = g.shape[0] // space.components
        g1 = sp.csr_matrix(g[:nf, :npts])
        c1 = sp.csr_matrix(c[:npts, :npts])
        ab = abs(g1)
        rows = np.asarray(ab.sum(axis=1)).ravel()
        avg = sp.diags(1.0 / rows) @ ab
        faces.append(g1)
        centred.append(c1)
        averages.append(sp.csr_matrix(avg))
    return faces, centred, averages


def _divergence_stiffness(space: GalerkinSpace, a_nodes: np.ndarray) -> sp.csr_matrix:
    """Weak matrix of div(a grad u) for ``a_nodes`` of shape (npts, d, d, N, N)."""
    faces, centred, averages = _scalar_ops(space)
    d = len(faces)
    N = a_nodes.shape[-1]
    w = space.h_weights[: _n_points(space)]
    fw = space.face_weight
    blocks = [[None] * N for _ in range(N)]
    for al in range(N):
        for be in range(N):
            L = sp.csr_matrix((w.size, w.size))
            for i in range(d):
                coef = averages[i] @ a_nodes[:, i, i, al, be]
                L = L - faces[i].T @ sp.diags(fw * coef) @ faces[i]
                for j in range(d):
                    if j != i and np.any(a_nodes[:, i, j, al, be]):
                        L = L - centred[j].T @ sp.diags(w * a_nodes[:, i, j, al, be]) @ centred[i]
            blocks[al][be] = L
    return sp.csr_matrix(sp.bmat(blocks))


def _transport_noise(space: GalerkinSpace, s_nodes: np.ndarray) -> list:
    """Matrices B_k u = sum_i s^i_k C_i u, ``s_nodes`` of shape (npts, d, K, N, N)."""
    _, centred, _ = _scalar_ops(space)
    d, K, N = s_nodes.shape[1], s_nodes.shape[2], s_nodes.shape[3]
    mats = []
    for k in range(K):
        blocks = [[None] * N for _ in range(N)]
        for al in range(N):
            for be in range(N):
                m = sp.csr_matrix((s_nodes.shape[0],) * 2)
                for i in range(d):
                    m = m + sp.diags(s_nodes[:, i, k, al, be]) @ centred[i]
                blocks[al][be] = m
        mats.append(sp.csr_matrix(sp.bmat(blocks)))
    return mats


def _matrix_noise(mats: list, psi=None):
    K = len(mats)

    def noise(t, V):
        out = np.empty(V.shape + (K,))
        for k, m in enumerate(mats):
            out[..., k] = (m @ V.T).T
        if psi is not None:
            out += np.asarray(psi(t), dtype=float)[None, :, :]
        return out

    return noise


def _matrix_linear(space: GalerkinSpace, L: sp.csr_matrix):
    def linear(V):
        return (L @ V.T).T

    def factory(dt):
        lu = splu(sp.csc_matrix(sp.diags(space.h_weights) - dt * L))
        return lambda rhs: lu.solve(np.ascontiguousarray(rhs.T)).T

    return linear, factory


def _diag_linear(space: GalerkinSpace, lam: np.ndarray):
    w = space.h_weights

    def linear(V):
        return w * lam * V

    def factory(dt):
        denom = w * (1.0 - dt * lam)
        return lambda rhs: rhs / denom

    return linear, factory


def _forcing_budget(space, alpha, phi, psi):
    if phi is None and psi is None:
        return _zero_forcing
    expo = alpha / (alpha - 1.0)

    def f(t):
        total = 0.0
        if phi is not None:
            total += dual_norm(space, np.asarray(phi(t), dtype=float)) ** expo
        if psi is not None:
            ps = np.asarray(psi(t), dtype=float)
            total += float(np.einsum("nk,n,nk->", ps, space.h_weights, ps))
        return total

    return f


# -- spectral example ---------------------------------------------------------


def spectral_example_make(gamma: float, space: GalerkinSpace) -> OperatorPair:
    """A = Laplacian, B = 2 gamma (-Laplacian)^{1/2}, one noise coordinate."""
    if space.kind != "fourier-torus":
        raise ValueError("the spectral example lives on a fourier-torus space")
    kap = space.wavenumbers
    lam = -kap ** 2
    noise_diag = (2.0 * gamma * np.abs(kap))[:, None]
    linear, factory = _diag_linear(space, lam)

    def noise(t, V):
        return noise_diag[None, :, :] * V[:, :, None]

    return OperatorPair(
        name="spectral-example",
        space=space,
        alpha=2.0,
        beta=0.0,
        k_noise=1,
        noise_fn=noise,
        linear_fn=linear,
        solver_factory=factory,
        declared=DeclaredConstants(theta=lambda p: 2.0 - 4.0 * gamma ** 2 * (p - 1.0), K_c=0.0,
                                   K_B=0.0, K_alpha=4.0 * gamma ** 2),
        linear=True,
        diagonal=(lam, noise_diag),
        info={"gamma": gamma},
    )


# -- second-order divergence-form equations -----------------------------------


def ellipticity_bound(a_nodes: np.ndarray, s_nodes: np.ndarray) -> float:
    """min over nodes of the smallest eigenvalue of sym(2a - sigma)."""
    sigma = np.einsum("pik,pjk->pij", s_nodes, s_nodes)
    m = 2.0 * a_nodes - sigma
    m = 0.5 * (m + np.swapaxes(m, 1, 2))
    return float(np.min(np.linalg.eigvalsh(m)))


def _heat(name, a, b, phi, psi, space, kinds):
    if space.kind not in kinds:
        raise ValueError(f"{name} needs a space of kind {kinds}, got {space.kind}")
    if space.components != 1:
        raise ValueError(f"{name} is scalar; use system_make for several components")
    d = space.dim
    npts = _n_points(space)
    af = as_field(a if np.ndim(a) or isinstance(a, CoefficientField) else np.eye(d) * float(a), ("i", "j"))
    if af.slot_shape != (d, d):
        raise ValueError(f"a must be {d}x{d}, got {af.slot_shape}")
    if b is None:
        b = np.zeros((d, 1))
    bf = as_field(b, ("i", "k"))
    if bf.slot_shape[0] != d:
        raise ValueError(f"b must have {d} rows")
    a_nodes = af.at_nodes(npts)
    b_nodes = bf.at_nodes(npts)
    K = bf.slot_shape[1]
    L = _divergence_stiffness(space, a_nodes[:, :, :, None, None])
    mats = _transport_noise(space, b_nodes[:, :, :, None, None])
    linear, factory = _matrix_linear(space, L)
    nonlinear = None
    if phi is not None:
        def nonlinear(t, V):
            return np.broadcast_to(np.asarray(phi(t), dtype=float), V.shape).copy()
    return OperatorPair(
        name=name,
        space=space,
        alpha=2.0,
        beta=0.0,
        k_noise=K,
        noise_fn=_matrix_noise(mats, psi),
        nonlinear_fn=nonlinear,
        linear_fn=linear,
        solver_factory=factory,
        forcing_f=_forcing_budget(space, 2.0, phi, psi),
        declared=DeclaredConstants(theta=ellipticity_bound(a_nodes, b_nodes)),
        linear=phi is None and psi is None,
        info={"a_nodes": a_nodes, "b_nodes": b_nodes, "stiffness": L, "noise_mats": mats},
    )


def heat_dirichlet_make(a=1.0, b=None, phi=None, psi=None, *, space: GalerkinSpace) -> OperatorPair:
    """Divergence-form heat equation with transport noise, zero Dirichlet data.

    ``a`` is a d x d matrix (or scalar, meaning a multiple of I) or a
    :class:`CoefficientField` with slots ``(i, j)``; ``b`` is d x K with slots
    ``(i, k)``.  ``phi(t)`` returns a V* vector and ``psi(t)`` an ``(n, K)``
    array; both default to zero.
    """
    return _heat("heat-dirichlet", a, b, phi, psi, space, ("fd-dirichlet-interval", "fd-grid-rd"))


def heat_neumann_make(a=1.0, b=None, phi=None, psi=None, *, space: GalerkinSpace) -> OperatorPair:
    """As :func:`heat_dirichlet_make` on an interval with natural boundary conditions."""
    pair = _heat("heat-neumann", a, b, phi, psi, space, ("fd-neumann-interval",))
    b_nodes = pair.info["b_nodes"][:, 0, :]
    c_b = float(max(np.linalg.norm(b_nodes[0]), np.linalg.norm(b_nodes[-1])))
    h = space.spacing[0]
    db = np.diff(b_nodes, axis=0) / h
    d_b = float(np.max(np.linalg.norm(db, axis=1))) if db.size else 0.0
    pair.info.update(C_b=c_b, D_b=d_b)
    return pair


def neumann_boundary_ratio(pair: OperatorPair, v) -> np.ndarray:
    """|B(v)* v|^2 / |v|_H^2, the left side of the boundary trace bound."""
    adj = b_adjoint_v(pair, 0.0, v)
    return np.sum(adj * adj, axis=-1) / h_norm(pair.space, v) ** 2


def neumann_trace_fit(pair: OperatorPair, samples: np.ndarray, eps: float) -> float:
    """Smallest C_eps with ratio <= (1+eps) C_b^2 |grad v|^2 + C_eps (C_b^2+D_b^2) |v|^2 on samples."""
    c_b, d_b = pair.info["C_b"], pair.info["D_b"]
    ratio = neumann_boundary_ratio(pair, samples)
    grad = pair.space.gradient_sq(samples)
    hsq = h_norm(pair.space, samples) ** 2
    denom = (c_b ** 2 + d_b ** 2) * hsq
    excess = ratio - (1.0 + eps) * c_b ** 2 * grad
    if np.all(denom == 0.0):
        return 0.0 if np.all(excess <= 0.0) else math.inf
    return float(max(0.0, np.max(excess / denom)))


# -- Burgers ------------------------------------------------------------------


def burgers_make(gamma: float, space: GalerkinSpace, *, declare_theta: bool = True,
                 viscosity: float = 1.0) -> OperatorPair:
    """Viscous Burgers drift in skew-symmetric form with noise gamma * du/dx.

    ``viscosity = 0`` drops the Laplacian (used to test conservation of the
    convection term on its own).
    """
    if declare_theta and not abs(gamma) < math.sqrt(2.0):
        raise ValueError(f"gamma must lie in (-sqrt 2, sqrt 2) for a positive theta, got {gamma}")
    if space.kind == "fd-dirichlet-interval":
        L = -viscosity * space.stiffness
        cmat = space.centered_gradients[0]
        linear, factory = _matrix_linear(space, sp.csr_matrix(L))

        def convection(t, V):
            return kernels.burgers_skew(np.ascontiguousarray(V))

        def noise(t, V):
            return (gamma * (cmat @ V.T).T)[:, :, None]

    elif space.kind == "fourier-torus":
        if space.unpaired:
            raise ValueError("Burgers on fourier-torus needs an odd number of modes")
        linear, factory = _diag_linear(space, -viscosity * space.wavenumbers ** 2)
        dmat = space.fourier_derivative()
        synth, proj = _fourier_grid(space)

        def convection(t, V):
            u = V @ synth.T
            du = (V @ dmat.T) @ synth.T
            prod = (u * du) @ proj.T
            sq = (u * u) @ proj.T
            return space.h_weights * (prod + sq @ dmat.T) / 3.0

        def noise(t, V):
            return (gamma * (V @ dmat.T))[:, :, None]

    else:
        raise ValueError("burgers_make needs fd-dirichlet-interval or fourier-torus")
    return OperatorPair(
        name="burgers",
        space=space,
        alpha=2.0,
        beta=2.0,
        k_noise=1,
        noise_fn=noise,
        nonlinear_fn=convection,
        linear_fn=linear,
        solver_factory=factory,
        declared=DeclaredConstants(theta=2.0 - gamma ** 2, K_c=0.0, K_B=0.0, K_alpha=gamma ** 2),
        convection_fn=convection,
        info={"gamma": gamma, "viscosity": viscosity},
    )


def _fourier_grid(space: GalerkinSpace):
    """Synthesis (grid x modes) and exact projection (modes x grid) matrices."""
    kmax = int(space.modes[-1])
    m = 3 * kmax + 2
    L = space.lengths[0]
    x = np.arange(m) * (L / m)
    kx = np.outer(x, space.wavenumbers)
    synth = np.where(space.is_sine[None, :], np.sin(kx), np.cos(kx))
    proj = (synth.T * (L / m)) / space.h_weights[:, None]
    return synth, proj


# -- Navier-Stokes on the 2-D torus ---------------------------------------------


def leray_project(space: GalerkinSpace, u, *, spectral: bool = False):
    """Divergence-free part of a vector field.

    With ``spectral=True`` ``u`` holds Fourier coefficients of shape
    ``(..., 2, n1, n2)``; otherwise it is a state vector ``(..., n)``.
    """
    if space.kind != "fourier-torus-2d-vector":
        raise ValueError("Leray projection needs a fourier-torus-2d-vector space")
    k1, k2 = space.fft_wavevectors
    ksq = k1 ** 2 + k2 ** 2
    ksq = np.where(ksq == 0.0, 1.0, ksq)
    if not spectral:
        uh = np.fft.fft2(space.as_field(space.check(u)), axes=(-2, -1))
        out = leray_project(space, uh, spectral=True)
        return space.as_vector(np.real(np.fft.ifft2(out, axes=(-2, -1))))
    uh = np.asarray(u)
    dot = (k1 * uh[..., 0, :, :] + k2 * uh[..., 1, :, :]) / ksq
    out = np.empty_like(uh)
    out[..., 0, :, :] = uh[..., 0, :, :] - k1 * dot
    out[..., 1, :, :] = uh[..., 1, :, :] - k2 * dot
    return out


def divergence(space: GalerkinSpace, v) -> np.ndarray:
    """Spectral divergence of state(s) ``v`` on the grid."""
    uh = np.fft.fft2(space.as_field(space.check(v)), axes=(-2, -1))
    k1, k2 = space.fft_wavevectors
    div = 1j * (k1 * uh[..., 0, :, :] + k2 * uh[..., 1, :, :])
    return np.real(np.fft.ifft2(div, axes=(-2, -1)))


def navier_stokes_2d_make(nu: float, b, space: GalerkinSpace) -> OperatorPair:
    """Incompressible Navier-Stokes with transport noise on the periodic square.

    ``b`` is a ``(K, 2)`` array of constant vectors or a ``(K, 2, n1, n2)``
    array of grid fields; grid fields must be discretely divergence free.
    """
    if space.kind != "fourier-torus-2d-vector":
        raise ValueError("navier_stokes_2d_make needs a fourier-torus-2d-vector space")
    if not nu > 0.0:
        raise ValueError("nu must be positive")
    b = np.asarray(b, dtype=float)
    if not np.all(np.isfinite(b)):
        raise ValueError("b has non-finite entries")
    k1, k2 = space.fft_wavevectors
    mask = space.dealias_mask
    cell = space.h_weights[0]
    K = b.shape[0]
    if b.ndim == 2:
        if b.shape[1] != 2:
            raise ValueError("constant b must have shape (K, 2)")
        b_grid = None
        sigma = b.T @ b
    elif b.ndim == 4 and b.shape[1:] == (2,) + space.shape:
        b_grid = b
        bh = np.fft.fft2(b, axes=(-2, -1))
        div = np.real(np.fft.ifft2(1j * (k1 * bh[:, 0] + k2 * bh[:, 1]), axes=(-2, -1)))
        scale = 1.0 + np.max(np.abs(b)) * max(np.max(np.abs(k1)), np.max(np.abs(k2)))
        if np.max(np.abs(div)) > 1e-10 * scale:
            raise ValueError(f"b is not divergence free (max |div b| = {np.max(np.abs(div)):.3e})")
        sigma = np.max(np.einsum("kiab,kjab->abij", b, b).reshape(-1, 2, 2), axis=0)
    else:
        raise ValueError("b must have shape (K, 2) or (K, 2, n1, n2)")
    ksq = k1 ** 2 + k2 ** 2

    def to_hat(V):
        return np.fft.fft2(space.as_field(V), axes=(-2, -1))

    def from_hat(uh):
        return space.as_vector(np.real(np.fft.ifft2(uh, axes=(-2, -1))))

    def grid_grad(uh):
        gx = np.real(np.fft.ifft2(1j * k1 * uh, axes=(-2, -1)))
        gy = np.real(np.fft.ifft2(1j * k2 * uh, axes=(-2, -1)))
        return gx, gy

    def linear(V):
        return cell * from_hat(-nu * ksq * to_hat(V))

    def factory(dt):
        def solve(rhs):
            return from_hat(to_hat(rhs / cell) / (1.0 + dt * nu * ksq))
        return solve

    def convection(t, V):
        uh = to_hat(V)
        u = space.as_field(V)
        gx, gy = grid_grad(uh)
        conv = u[:, 0:1] * gx + u[:, 1:2] * gy
        ch = leray_project(space, np.fft.fft2(conv, axes=(-2, -1)) * mask, spectral=True)
        return -cell * from_hat(ch)

    def noise(t, V):
        uh = to_hat(V)
        out = np.empty(V.shape + (K,))
        if b_grid is None:
            for k in range(K):
                th = 1j * (b[k, 0] * k1 + b[k, 1] * k2) * uh
                out[..., k] = from_hat(leray_project(space, th * mask, spectral=True))
        else:
            gx, gy = grid_grad(uh)
            for k in range(K):
                tr = b_grid[k, 0] * gx + b_grid[k, 1] * gy
                th = leray_project(space, np.fft.fft2(tr, axes=(-2, -1)) * mask, spectral=True)
                out[..., k] = from_hat(th)
        return out

    lam_max = float(np.max(np.linalg.eigvalsh(sigma)))
    return OperatorPair(
        name="navier-stokes-2d",
        space=space,
        alpha=2.0,
        beta=2.0,
        k_noise=K,
        noise_fn=noise,
        nonlinear_fn=convection,
        linear_fn=linear,
        solver_factory=factory,
        declared=DeclaredConstants(theta=2.0 * nu - lam_max, K_c=0.0),
        convection_fn=convection,
        info={"nu": nu, "b": b},
    )


# -- second-order systems -----------------------------------------------------


def system_make(a, sigma, lam=None, *, space: GalerkinSpace, phi=None) -> OperatorPair:
    """Divergence-form system with N components and transport noise.

    ``a`` has slots ``(i, j, alpha, beta)``; ``sigma`` and ``lam`` have slots
    ``(i, k, alpha, beta)``.  ``lam`` must be symmetric in ``(alpha, beta)``;
    it only enters the parabolicity audit and defaults to the symmetric part
    of ``sigma``.
    """
    if space.kind != "fd-grid-rd":
        raise ValueError("system_make needs an fd-grid-rd space")
    d, N = space.dim, space.components
    npts = _n_points(space)
    af = as_field(a, ("i", "j", "alpha", "beta"))
    sf = as_field(sigma, ("i", "k", "alpha", "beta"))
    if af.slot_shape != (d, d, N, N):
        raise ValueError(f"a must have slot shape {(d, d, N, N)}, got {af.slot_shape}")
    if sf.slot_shape[0] != d or sf.slot_shape[2:] != (N, N):
        raise ValueError(f"sigma must have slot shape ({d}, K, {N}, {N}), got {sf.slot_shape}")
    if lam is None:
        lam = 0.5 * (sf.values + np.swapaxes(sf.values, -1, -2))
        lf = CoefficientField(lam, sf.slots, sf.constant)
    else:
        lf = as_field(lam, ("i", "k", "alpha", "beta"))
    if lf.slot_shape != sf.slot_shape:
        raise ValueError("lambda must have the same shape as sigma")
    if not np.allclose(lf.values, np.swapaxes(lf.values, -1, -2), rtol=0.0, atol=1e-14):
        raise ValueError("lambda must be symmetric in (alpha, beta)")
    a_nodes = af.at_nodes(npts)
    s_nodes = sf.at_nodes(npts)
    L = _divergence_stiffness(space, a_nodes)
    mats = _transport_noise(space, s_nodes)
    linear, factory = _matrix_linear(space, L)
    nonlinear = None
    if phi is not None:
        def nonlinear(t, V):
            return np.broadcast_to(np.asarray(phi(t), dtype=float), V.shape).copy()
    return OperatorPair(
        name="system",
        space=space,
        alpha=2.0,
        beta=0.0,
        k_noise=sf.slot_shape[1],
        noise_fn=_matrix_noise(mats),
        nonlinear_fn=nonlinear,
        linear_fn=linear,
        solver_factory=factory,
        forcing_f=_forcing_budget(space, 2.0, phi, None),
        linear=phi is None,
        info={"a_nodes": a_nodes, "sigma_nodes": s_nodes, "lambda_nodes": lf.at_nodes(npts),
              "stiffness": L, "noise_mats": mats},
    )


# -- higher-order equations on the torus ----------------------------------------


def multi_indices(order: int, d: int) -> list[tuple[int, ...]]:
    """Multi-indices of total degree ``order`` in ``d`` variables, lexicographic."""
    return sorted(idx for idx in itertools.product(range(order + 1), repeat=d) if sum(idx) == order)


def higher_order_make(m: int, A_coef, B_coef, space: GalerkinSpace) -> OperatorPair:
    """Order-2m drift -(-1)^m A d^{2m} u with noise sum_k B_k d^m u on a 1-D torus.

    ``A_coef`` is the (constant) scalar A and ``B_coef`` the length-K vector
    of B_k.  The space's V norm must be H^m (``SpaceConfig.order = m``).
    """
    if space.kind != "fourier-torus":
        raise ValueError("higher_order_make needs a fourier-torus space")
    if int(m) != m or m < 1:
        raise ValueError("m must be a positive integer")
    m = int(m)
    if space.order != m:
        raise ValueError(f"the space's V norm has order {space.order}, expected {m}")
    kmax = int(space.modes[-1])
    if 2 * m > kmax:
        raise ValueError(f"2m = {2 * m} exceeds the resolved wavenumber index {kmax}")
    A = float(np.asarray(A_coef, dtype=float).reshape(()))
    B = np.atleast_1d(np.asarray(B_coef, dtype=float))
    if not (np.isfinite(A) and np.all(np.isfinite(B))):
        raise ValueError("coefficients must be finite")
    dm = np.linalg.matrix_power(space.fourier_derivative(), m)
    L = -A * (dm.T * space.h_weights) @ dm
    linear, factory = _matrix_linear(space, sp.csr_matrix(L))

    def noise(t, V):
        dv = V @ dm.T
        return dv[:, :, None] * B[None, None, :]

    from .coercivity import higher_order_check

    A_form = np.array([[A]])
    B_form = B[:, None]
    return OperatorPair(
        name="higher-order",
        space=space,
        alpha=2.0,
        beta=0.0,
        k_noise=B.size,
        noise_fn=noise,
        linear_fn=linear,
        solver_factory=factory,
        declared=DeclaredConstants(theta=lambda p: higher_order_check(A_form, B_form, m, p), K_c=0.0),
        linear=True,
        info={"m": m, "A": A, "B": B, "Dm": dm},
    )


def lower_order_form_fit(space: GalerkinSpace, zeta, deriv: int, eps: float, samples: np.ndarray) -> float:
    """Fitted C_eps in |zeta (v, d^deriv v)_H| / |v|_H <= eps |v|_{H^m} + C_eps |v|_H.

    ``zeta`` is a constant vector in l^2; m is the order of the space's V norm.
    """
    from .gelfand import v_norm

    zn = float(np.linalg.norm(np.atleast_1d(zeta)))
    dmat = np.linalg.matrix_power(space.fourier_derivative(), deriv)
    samples = space.check(samples).reshape(-1, space.n)
    form = np.einsum("mn,n,mn->m", samples, space.h_weights, samples @ dmat.T)
    hn = h_norm(space, samples)
    ratio = zn * np.abs(form) / hn
    return float(max(0.0, np.max((ratio - eps * v_norm(space, samples)) / hn)))


# -- p-Laplacian ----------------------------------------------------------------


def p_laplace_gamma_limit(alpha: float) -> float:
    return 8.0 * (alpha - 1.0) / alpha ** 2


def p_laplace_make(alpha: float, gamma_k, C_k=None, *, space: GalerkinSpace,
                   check_gamma: bool = True) -> OperatorPair:
    """p-Laplace drift with noise B_k(u) = gamma_k |grad u|^{alpha/2} + C_k u."""
    if space.kind != "fd-dirichlet-interval":
        raise ValueError("p_laplace_make needs an fd-dirichlet-interval space")
    if not alpha > 2.0:
        raise ValueError(f"alpha must exceed 2, got {alpha}")
    if space.alpha != alpha:
        raise ValueError(f"space has alpha={space.alpha}, pair has alpha={alpha}")
    g = np.atleast_1d(np.asarray(gamma_k, dtype=float))
    c = np.zeros_like(g) if C_k is None else np.atleast_1d(np.asarray(C_k, dtype=float))
    if g.shape != c.shape:
        raise ValueError("gamma_k and C_k need the same length")
    gsq = float(np.sum(g ** 2))
    if check_gamma and gsq > p_laplace_gamma_limit(alpha) * (1.0 + 1e-15):
        raise ValueError(f"sum gamma_k^2 = {gsq} exceeds 8(alpha-1)/alpha^2 = {p_laplace_gamma_limit(alpha)}")
    h = space.spacing[0]

    def drift(t, V):
        weak, _ = kernels.plap_flux(np.ascontiguousarray(V), h, alpha)
        return weak

    def noise(t, V):
        _, nodal = kernels.plap_flux(np.ascontiguousarray(V), h, alpha)
        return nodal[:, :, None] * g[None, None, :] + V[:, :, None] * c[None, None, :]

    return OperatorPair(
        name="p-laplace",
        space=space,
        alpha=alpha,
        beta=0.0,
        k_noise=g.size,
        noise_fn=noise,
        nonlinear_fn=drift,
        declared=DeclaredConstants(theta=lambda p: 2.0 - (p - 1.0) * gsq, K_A=0.5),
        tamed=True,
        info={"gamma_k": g, "C_k": c, "gamma_sq": gsq},
    )
