"""Finite-dimensional Gelfand triples (V, H, V*).

A :class:`GalerkinSpace` holds a coefficient basis together with the data
needed to evaluate the H inner product, the V norm, the duality pairing and
the dual norm of V*.  States are plain float arrays of length ``space.n``;
every evaluator also accepts a stack of states with shape ``(..., n)``.

Conventions
-----------
* V* elements are coefficient vectors against the same basis and
  ``duality_pair(f, v) = f @ v``.  An H element ``w`` is represented in V*
  by ``riesz(w) = h_gram @ w``, so ``duality_pair(riesz(w), v) = (w, v)_H``.
* Finite-difference spaces use the lumped (diagonal) mass matrix; Fourier
  spaces use exact Parseval weights.  ``h_gram`` is therefore always diagonal
  and stored as ``h_weights``.
* The V norm of an ``alpha == 2`` space is ``|v|_H^2 + |grad v|_H^2`` when
  ``v_norm == "full"`` and ``|grad v|_H^2`` when ``v_norm == "seminorm"``.
  For ``alpha != 2`` it is the L^alpha norm of the face gradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import minimize_scalar

SPACE_KINDS = (
    "fourier-torus",
    "fd-dirichlet-interval",
    "fd-neumann-interval",
    "fd-grid-rd",
    "fourier-torus-2d-vector",
)


@dataclass(frozen=True)
class SpaceConfig:
    """Construction parameters for :func:`build_space`.

    ``n`` is the number of degrees of freedom for 1-D spaces and the number
    of grid points per axis for ``fd-grid-rd`` and
    ``fourier-torus-2d-vector``.  ``order`` is the derivative order of the V
    norm on ``fourier-torus`` (H^order); ``components`` is the number of
    unknowns per node on ``fd-grid-rd``.
    """

    kind: str
    n: int
    lengths: tuple[float, ...] = (1.0,)
    alpha: float = 2.0
    v_norm: str = "full"
    dim: int = 1
    components: int = 1
    order: int = 1


@dataclass(frozen=True, eq=False)
class GalerkinSpace:
    kind: str
    shape: tuple[int, ...]
    lengths: tuple[float, ...]
    alpha: float
    v_norm_kind: str
    components: int
    order: int
    h_weights: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.h_weights.shape[0]

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def h_gram(self) -> np.ndarray:
        return np.diag(self.h_weights)

    @property
    def spacing(self) -> tuple[float, ...]:
        if self.kind == "fd-dirichlet-interval" or self.kind == "fd-grid-rd":
            return tuple(L / (m + 1) for L, m in zip(self.lengths, self.shape))
        if self.kind == "fd-neumann-interval":
            return (self.lengths[0] / (self.shape[0] - 1),)
        return tuple(L / m for L, m in zip(self.lengths, self.shape))

    @property
    def is_fourier(self) -> bool:
        return self.kind.startswith("fourier")

    # -- Fourier-torus (1-D, real modal basis) --------------------------------

    @cached_property
    def modes(self) -> np.ndarray:
        """Integer wavenumber of each coefficient on ``fourier-torus``.

        Ordering is 1, cos(k1 x), sin(k1 x), cos(k2 x), ... with k_j = 2 pi j / L.
        """
        idx = np.arange(self.n)
        return (idx + 1) // 2

    @cached_property
    def is_sine(self) -> np.ndarray:
        idx = np.arange(self.n)
        return (idx > 0) & (idx % 2 == 0)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * self.modes / self.lengths[0]

    @cached_property
    def unpaired(self) -> bool:
        """True when the last cosine has no sine partner (even ``n``)."""
        return self.kind == "fourier-torus" and self.n % 2 == 0

    def fourier_derivative(self) -> np.ndarray:
        """Dense first-derivative matrix in the real modal basis.

        The derivative of an unpaired top cosine is set to zero, as for the
        Nyquist mode of an FFT derivative.
        """
        n = self.n
        d = np.zeros((n, n))
        kap = self.wavenumbers
        for j in range(1, n - 1, 2):
            # cos at j, sin at j + 1
            d[j, j + 1] = kap[j]
            d[j + 1, j] = -kap[j]
        return d

    # -- finite-difference operators ------------------------------------------

    @cached_property
    def face_gradients(self) -> tuple[sp.csr_matrix, ...]:
        """Forward differences onto cell faces, one sparse matrix per axis."""
        if self.kind == "fd-dirichlet-interval":
            return (_forward_dirichlet(self.shape[0], self.spacing[0]),)
        if self.kind == "fd-neumann-interval":
            n, h = self.shape[0], self.spacing[0]
            e = np.ones(n - 1) / h
            return (sp.diags([-e, e], [0, 1], shape=(n - 1, n), format="csr"),)
        if self.kind == "fd-grid-rd":
            mats = []
            for axis, (m, h) in enumerate(zip(self.shape, self.spacing)):
                parts = [sp.identity(k, format="csr") for k in self.shape]
                parts[axis] = _forward_dirichlet(m, h)
                g = parts[0]
                for q in parts[1:]:
                    g = sp.kron(g, q, format="csr")
                mats.append(sp.kron(sp.identity(self.components), g, format="csr"))
            return tuple(mats)
        raise TypeError(f"{self.kind} has no finite-difference gradient")

    @cached_property
    def centered_gradients(self) -> tuple[sp.csr_matrix, ...]:
        """Centred nodal differences, one sparse matrix per axis.

        Dirichlet grids use zero ghost values; the Neumann interval uses the
        mirror ghost, which makes the endpoint derivative vanish.
        """
        if self.kind == "fd-dirichlet-interval":
            return (_centered_dirichlet(self.shape[0], self.spacing[0]),)
        if self.kind == "fd-neumann-interval":
            n, h = self.shape[0], self.spacing[0]
            c = sp.lil_matrix((n, n))
            for j in range(1, n - 1):
                c[j, j - 1] = -0.5 / h
                c[j, j + 1] = 0.5 / h
            return (c.tocsr(),)
        if self.kind == "fd-grid-rd":
            mats = []
            for axis, (m, h) in enumerate(zip(self.shape, self.spacing)):
                parts = [sp.identity(k, format="csr") for k in self.shape]
                parts[axis] = _centered_dirichlet(m, h)
                g = parts[0]
                for q in parts[1:]:
                    g = sp.kron(g, q, format="csr")
                mats.append(sp.kron(sp.identity(self.components), g, format="csr"))
            return tuple(mats)
        raise TypeError(f"{self.kind} has no finite-difference gradient")

    @cached_property
    def face_weight(self) -> float:
        """Quadrature weight of one face value (cell volume)."""
        return float(np.prod(self.spacing))

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """Matrix S with v @ S @ v = |grad v|_H^2 (quadratic spaces)."""
        if self.kind == "fourier-torus":
            return sp.diags(self.h_weights * self.wavenumbers ** (2 * self.order), format="csr")
        if self.kind == "fourier-torus-2d-vector":
            raise TypeError("use the spectral evaluators on fourier-torus-2d-vector")
        s = None
        for g in self.face_gradients:
            term = self.face_weight * (g.T @ g)
            s = term if s is None else s + term
        return sp.csr_matrix(s)

    # -- 2-D periodic vector fields -------------------------------------------

    @cached_property
    def fft_wavevectors(self) -> tuple[np.ndarray, np.ndarray]:
        n1, n2 = self.shape
        k1 = 2.0 * np.pi * np.fft.fftfreq(n1, d=self.lengths[0] / n1)
        k2 = 2.0 * np.pi * np.fft.fftfreq(n2, d=self.lengths[1] / n2)
        return np.meshgrid(k1, k2, indexing="ij")

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        n1, n2 = self.shape
        i1 = np.abs(np.fft.fftfreq(n1) * n1)
        i2 = np.abs(np.fft.fftfreq(n2) * n2)
        m1, m2 = np.meshgrid(i1 < n1 / 3.0, i2 < n2 / 3.0, indexing="ij")
        mask = m1 & m2
        mask[0, 0] = False
        return mask

    def as_field(self, v: np.ndarray) -> np.ndarray:
        """Reshape ``(..., n)`` into ``(..., 2, n1, n2)``."""
        return v.reshape(v.shape[:-1] + (2,) + self.shape)

    def as_vector(self, u: np.ndarray) -> np.ndarray:
        return u.reshape(u.shape[:-3] + (self.n,))

    # -- shared helpers --------------------------------------------------------

    def check(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1:] != (self.n,):
            raise ValueError(f"state has trailing size {v.shape[-1:]}, space has n={self.n}")
        return v

    def riesz(self, w) -> np.ndarray:
        """V* representation of the H element ``w``."""
        return self.h_weights * self.check(w)

    def unriesz(self, f) -> np.ndarray:
        """H element whose V* representation is ``f``."""
        return self.check(f) / self.h_weights

    def gradient_sq(self, v: np.ndarray) -> np.ndarray:
        """|grad v|_H^2 for quadratic spaces, batched over leading axes."""
        v = self.check(v)
        if self.kind == "fourier-torus":
            return np.sum(self.h_weights * self.wavenumbers ** (2 * self.order) * v * v, axis=-1)
        if self.kind == "fourier-torus-2d-vector":
            uh = np.fft.fft2(self.as_field(v), axes=(-2, -1))
            k1, k2 = self.fft_wavevectors
            norm = np.prod(self.lengths) / (np.prod(self.shape) ** 2)
            return norm * np.sum((k1 ** 2 + k2 ** 2) * np.abs(uh) ** 2, axis=(-3, -2, -1))
        flat = v.reshape(-1, self.n)
        total = np.zeros(flat.shape[0])
        for g in self.face_gradients:
            dv = (g @ flat.T).T
            total += self.face_weight * np.sum(dv * dv, axis=1)
        return total.reshape(v.shape[:-1])

    def gradient_alpha(self, v: np.ndarray) -> np.ndarray:
        """sum over faces and axes of weight * |D_i v|^alpha."""
        v = self.check(v)
        flat = v.reshape(-1, self.n)
        total = np.zeros(flat.shape[0])
        for g in self.face_gradients:
            dv = (g @ flat.T).T
            total += self.face_weight * np.sum(np.abs(dv) ** self.alpha, axis=1)
        return total.reshape(v.shape[:-1])

    def project_admissible(self, v: np.ndarray) -> np.ndarray:
        """Map an arbitrary coefficient vector into V.

        Only the periodic vector space constrains its states (divergence
        free, zero mean, 2/3-dealiased); other spaces return ``v`` unchanged.
        """
        v = self.check(v)
        if self.kind != "fourier-torus-2d-vector":
            return v
        from .operators import leray_project

        uh = np.fft.fft2(self.as_field(v), axes=(-2, -1))
        uh = uh * self.dealias_mask
        uh = leray_project(self, uh, spectral=True)
        return self.as_vector(np.real(np.fft.ifft2(uh, axes=(-2, -1))))

    @cached_property
    def _v_gram_factor(self):
        g = self.stiffness.toarray()
        if self.v_norm_kind == "full":
            g = g + np.diag(self.h_weights)
        return scipy.linalg.cho_factor(g)


def _forward_dirichlet(m: int, h: float) -> sp.csr_matrix:
    e = np.ones(m) / h
    # face f sits between nodes f-1 and f; the outer nodes are the zero boundary
    return sp.diags([e, -e], [0, -1], shape=(m + 1, m), format="csr")


def _centered_dirichlet(m: int, h: float) -> sp.csr_matrix:
    e = np.full(m - 1, 0.5 / h)
    return sp.diags([-e, e], [-1, 1], shape=(m, m), format="csr")


def build_space(config: SpaceConfig) -> GalerkinSpace:
    """Validate ``config`` and assemble the discrete triple."""
    kind = config.kind
    if kind not in SPACE_KINDS:
        raise ValueError(f"unknown space kind {kind!r}; expected one of {SPACE_KINDS}")
    if int(config.n) != config.n or config.n < 2:
        raise ValueError(f"n must be an integer >= 2, got {config.n}")
    if not config.alpha > 1.0:
        raise ValueError(f"alpha must exceed 1, got {config.alpha}")
    if config.v_norm not in ("full", "seminorm"):
        raise ValueError(f"v_norm must be 'full' or 'seminorm', got {config.v_norm!r}")
    n = int(config.n)

    if kind == "fd-grid-rd":
        dim = int(config.dim)
        if dim < 1 or dim > 3:
            raise ValueError("fd-grid-rd supports 1 to 3 axes")
    elif kind == "fourier-torus-2d-vector":
        dim = 2
    else:
        dim = 1
    lengths = tuple(float(x) for x in config.lengths)
    if len(lengths) == 1 and dim > 1:
        lengths = lengths * dim
    if len(lengths) != dim:
        raise ValueError(f"expected {dim} domain lengths, got {len(lengths)}")
    if any(not L > 0.0 for L in lengths):
        raise ValueError("domain lengths must be positive")
    if config.components < 1:
        raise ValueError("components must be >= 1")
    if config.order < 1:
        raise ValueError("order must be >= 1")
    if kind != "fd-grid-rd" and config.components != 1:
        raise ValueError("several components per node are supported on fd-grid-rd only")
    if kind == "fourier-torus-2d-vector" and n % 2:
        raise ValueError("fourier-torus-2d-vector needs an even number of points per axis")

    shape = (n,) * dim
    if kind == "fourier-torus":
        w = np.full(n, lengths[0] / 2.0)
        w[0] = lengths[0]
    elif kind == "fd-dirichlet-interval":
        w = np.full(n, lengths[0] / (n + 1))
    elif kind == "fd-neumann-interval":
        h = lengths[0] / (n - 1)
        w = np.full(n, h)
        w[0] = w[-1] = h / 2.0
    elif kind == "fd-grid-rd":
        cell = float(np.prod([L / (n + 1) for L in lengths]))
        w = np.full(config.components * n ** dim, cell)
    else:
        cell = lengths[0] * lengths[1] / (n * n)
        w = np.full(2 * n * n, cell)
    return GalerkinSpace(
        kind=kind,
        shape=shape,
        lengths=lengths,
        alpha=float(config.alpha),
        v_norm_kind=config.v_norm,
        components=int(config.components),
        order=int(config.order),
        h_weights=w,
    )


def h_inner(space: GalerkinSpace, u, v) -> np.ndarray:
    u = space.check(u)
    v = space.check(v)
    return np.sum(space.h_weights * u * v, axis=-1)


def h_norm(space: GalerkinSpace, v):
    """sqrt(v^T h_gram v), batched over leading axes."""
    v = space.check(v)
    return np.sqrt(np.sum(space.h_weights * v * v, axis=-1))


def v_norm(space: GalerkinSpace, v):
    """Discrete V norm; see the module docstring for the conventions."""
    v = space.check(v)
    if space.alpha != 2.0 and not space.is_fourier:
        return space.gradient_alpha(v) ** (1.0 / space.alpha)
    sq = space.gradient_sq(v)
    if space.v_norm_kind == "full":
        sq = sq + np.sum(space.h_weights * v * v, axis=-1)
    return np.sqrt(sq)


def duality_pair(space: GalerkinSpace, f, v):
    """<f, v> for f in V* (coefficient vector) and v in V."""
    f = space.check(f)
    v = space.check(v)
    return np.sum(f * v, axis=-1)


def dual_norm(space: GalerkinSpace, f) -> float:
    """||f||_{V*} = sup_{v != 0} <f, v> / ||v||_V for a single functional."""
    f = space.check(f)
    if f.ndim != 1:
        return np.array([dual_norm(space, g) for g in f.reshape(-1, space.n)]).reshape(f.shape[:-1])
    if space.kind == "fourier-torus-2d-vector":
        g = space.as_field(f / space.h_weights)
        gh = np.fft.fft2(g, axes=(-2, -1))
        k1, k2 = space.fft_wavevectors
        ksq = k1 ** 2 + k2 ** 2
        norm = np.prod(space.lengths) / (np.prod(space.shape) ** 2)
        if space.v_norm_kind == "full":
            return math.sqrt(norm * np.sum(np.abs(gh) ** 2 / (1.0 + ksq)))
        if np.max(np.abs(gh[..., 0, 0])) > 1e-12 * (1.0 + np.max(np.abs(gh))):
            return math.inf
        ksq = ksq.copy()
        ksq[0, 0] = 1.0
        return math.sqrt(norm * np.sum(np.abs(gh) ** 2 / ksq))
    if space.kind == "fourier-torus":
        kap = space.wavenumbers ** (2 * space.order)
        gw = space.h_weights * (kap + (1.0 if space.v_norm_kind == "full" else 0.0))
        if gw[0] == 0.0:
            if abs(f[0]) > 1e-12 * (1.0 + np.max(np.abs(f))):
                return math.inf
            gw = gw.copy()
            gw[0] = 1.0
        return math.sqrt(float(np.sum(f * f / gw)))
    if space.alpha == 2.0:
        return math.sqrt(float(f @ scipy.linalg.cho_solve(space._v_gram_factor, f)))
    if space.kind != "fd-dirichlet-interval":
        raise NotImplementedError("W^{1,alpha} dual norm is implemented on the Dirichlet interval")
    return _w1a_dual_norm(f, space.spacing[0], space.alpha)


def _w1a_dual_norm(f: np.ndarray, h: float, alpha: float) -> float:
    # f = h D^T s has the solutions s = s0 + c; minimise the L^{alpha'} norm of s over c
    conj = alpha / (alpha - 1.0)
    s0 = np.concatenate(([0.0], -np.cumsum(f)))

    def cost(c):
        return h * np.sum(np.abs(s0 + c) ** conj)

    lo, hi = -float(np.max(s0)), -float(np.min(s0))
    if hi - lo <= 0.0:
        return (cost(lo)) ** (1.0 / conj)
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13 * (1.0 + abs(hi - lo))})
    return float(min(res.fun, cost(lo), cost(hi))) ** (1.0 / conj)
