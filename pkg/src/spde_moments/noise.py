"""Seeded increments of a truncated cylindrical Wiener process.

Every path owns a :class:`WienerStream`.  Its bits depend only on
``(seed, stream_id)``, never on which worker draws them, so Monte Carlo
results do not depend on scheduling.  Generation uses numpy's counter-based
Philox bit generator keyed by a ``SeedSequence`` spawn key.

Increments are rounded to a power-of-two quantum about 2^-40 times their
standard deviation.  The perturbation is far below double-precision noise in
any functional, and it makes Brownian-bridge refinement exact: both halves of
a refined increment are representable, so they sum back to the coarse value
bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

_QUANTUM_BITS = 40


@dataclass(frozen=True)
class WienerStream:
    k_trunc: int
    dt: float
    seed: int
    stream_id: int = 0
    level: int = 0

    def __post_init__(self):
        if int(self.k_trunc) != self.k_trunc or self.k_trunc < 1:
            raise ValueError(f"k_trunc must be a positive integer, got {self.k_trunc}")
        if not (self.dt > 0.0 and math.isfinite(self.dt)):
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if self.stream_id < 0:
            raise ValueError("stream_id must be nonnegative")

    @property
    def quantum(self) -> float:
        base_dt = self.dt * 2.0 ** self.level
        exp = math.floor(0.5 * math.log2(base_dt)) - _QUANTUM_BITS - self.level
        return math.ldexp(1.0, exp)

    def generator(self, *key: int) -> np.random.Generator:
        seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + key)
        return np.random.Generator(np.random.Philox(seq))

    def halved(self) -> "WienerStream":
        """The same stream viewed at half the step (after one :func:`refine`)."""
        return replace(self, dt=self.dt / 2.0, level=self.level + 1)


def _quantize(x: np.ndarray, q: float) -> np.ndarray:
    # q is a power of two, so the division and the product are exact
    return np.round(x / q) * q


def sample_increments(stream: WienerStream, n_steps: int) -> np.ndarray:
    """Increments for ``n_steps`` steps as an ``(n_steps, K)`` array."""
    if int(n_steps) != n_steps or n_steps < 1:
        raise ValueError(f"n_steps must be a positive integer, got {n_steps}")
    if stream.level:
        raise ValueError("draw from the coarse stream and refine, not from a halved view")
    z = stream.generator(0).standard_normal((int(n_steps), stream.k_trunc))
    return _quantize(z * math.sqrt(stream.dt), stream.quantum)


def refine(increments: np.ndarray, stream: WienerStream) -> np.ndarray:
    """Brownian-bridge bisection of every increment.

    ``increments`` must have been produced at ``stream.dt`` (use
    ``stream.halved()`` for the second refinement).  Row ``2i`` is
    ``dW_i/2 + xi_i`` and row ``2i+1`` is ``dW_i/2 - xi_i`` with
    ``xi_i ~ N(0, dt/4)`` from a substream keyed by the refinement level.
    """
    incr = np.asarray(increments, dtype=float)
    if incr.ndim != 2 or incr.shape[1] != stream.k_trunc:
        raise ValueError(f"expected an (n_steps, {stream.k_trunc}) array, got shape {incr.shape}")
    n = incr.shape[0]
    q = stream.quantum / 2.0
    xi = stream.generator(1, stream.level, n).standard_normal(incr.shape)
    xi = _quantize(xi * (0.5 * math.sqrt(stream.dt)), q)
    half = incr / 2.0
    fine = np.empty((2 * n, incr.shape[1]))
    fine[0::2] = half + xi
    fine[1::2] = half - xi
    return fine


def coarsen(increments: np.ndarray) -> np.ndarray:
    """Sum consecutive pairs of rows (inverse of :func:`refine`)."""
    incr = np.asarray(increments, dtype=float)
    if incr.ndim != 2 or incr.shape[0] % 2:
        raise ValueError("need an even number of rows")
    return incr[0::2] + incr[1::2]


def path_increments(k_trunc: int, dt: float, seed: int, path_ids, n_steps: int) -> np.ndarray:
    """Stacked increments ``(len(path_ids), n_steps, K)``, one stream per path."""
    out = np.empty((len(path_ids), n_steps, k_trunc))
    for row, pid in enumerate(path_ids):
        out[row] = sample_increments(WienerStream(k_trunc, dt, seed, int(pid)), n_steps)
    return out
