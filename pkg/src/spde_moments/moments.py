"""Monte Carlo moments of the pathwise functionals, with exact oracles.

Paths are split into fixed chunks by path index.  Each chunk is simulated
independently (threads release the GIL inside the compiled kernels) and the
per-path results are written back in path order, so every estimate is a
function of the master seed alone, whatever the worker count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import stats

from .gelfand import h_norm
from .noise import path_increments
from .operators import OperatorPair
from .simulate import SchemeConfig, simulate_batch

CHUNK = 2048
N_BATCHES = 16
TAIL_FRACTION = 0.05
GROWTH_FACTOR = 1.5
DOUBLINGS = 3
MIN_DIAGNOSTIC_SAMPLES = 100


@dataclass
class MomentEstimate:
    p: float
    value: float
    ci_half_width: float
    n_paths: int
    n_diverged: int
    tail_index_est: Optional[float]
    divergence_flag: bool
    functional: str = "sup"
    samples: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("samples")
        return d


@dataclass
class PathTable:
    """Per-path functionals of one Monte Carlo run, in path order."""

    sup_h: np.ndarray
    int_v_alpha: np.ndarray
    terminal_h: np.ndarray
    diverged: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(["path_id", "sup_h", "int_v_alpha", "diverged"])
            for i in range(self.sup_h.size):
                wr.writerow([i, repr(float(self.sup_h[i])), repr(float(self.int_v_alpha[i])),
                             int(bool(self.diverged[i]))])


U0Source = Union[np.ndarray, Callable[[int], np.ndarray]]


def _initial_states(space, u0_source: U0Source, ids) -> np.ndarray:
    if callable(u0_source):
        return np.stack([space.check(u0_source(int(i))) for i in ids])
    u0 = space.check(u0_source)
    return np.broadcast_to(u0, (len(ids), space.n)).copy()


def run_paths(pair: OperatorPair, scheme: SchemeConfig, u0_source: U0Source, n_paths: int,
              master_seed: int, *, alpha: Optional[float] = None, workers: int = 1,
              chunk: int = CHUNK) -> PathTable:
    """Simulate ``n_paths`` paths; path ``i`` uses stream ``(master_seed, i)``."""
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    n_steps = scheme.n_steps
    bounds = [(lo, min(lo + chunk, n_paths)) for lo in range(0, n_paths, chunk)]
    sup_h = np.empty(n_paths)
    int_v = np.empty(n_paths)
    term = np.empty(n_paths)
    div = np.empty(n_paths, dtype=bool)

    def work(lo_hi):
        lo, hi = lo_hi
        ids = range(lo, hi)
        dW = path_increments(pair.k_noise, scheme.dt, master_seed, ids, n_steps)
        res = simulate_batch(pair, scheme, _initial_states(pair.space, u0_source, ids), dW, alpha=alpha)
        return lo, hi, res

    def store(lo, hi, res):
        sup_h[lo:hi] = res["sup_h"]
        int_v[lo:hi] = res["int_v"]
        term[lo:hi] = h_norm(pair.space, res["terminal"])
        div[lo:hi] = res["diverged"]

    if workers <= 1 or len(bounds) == 1:
        for b in bounds:
            store(*work(b))
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            for lo, hi, res in ex.map(work, bounds):
                store(lo, hi, res)
    return PathTable(sup_h, int_v, term, div)


def batch_means_ci(x: np.ndarray, n_batches: int = N_BATCHES) -> float:
    """95% half-width from ``n_batches`` contiguous batch means."""
    if x.size < n_batches:
        return math.inf
    batches = np.array([b.mean() for b in np.array_split(x, n_batches)])
    sd = float(np.std(batches, ddof=1))
    return float(stats.t.ppf(0.975, n_batches - 1) * sd / math.sqrt(n_batches))


def moment_from_samples(x: np.ndarray, diverged: np.ndarray, p: float, functional: str) -> MomentEstimate:
    """Estimate E x^p from per-path norms ``x``; diverged paths are counted, not averaged."""
    n = x.size
    ok = ~diverged & np.isfinite(x)
    n_div = int(n - ok.sum())
    diag = divergence_diagnostic(x[ok], p)
    if not ok.any():
        return MomentEstimate(p, math.inf, math.inf, n, n_div, None, True, functional, x)
    vals = x[ok] ** p
    value = float(np.mean(vals))
    ci = batch_means_ci(vals)
    flag = n_div > 0 or diag["flag"]
    return MomentEstimate(float(p), value, ci, n, n_div, diag["tail_index"], bool(flag), functional, x)


def estimate_sup_moment(pair: OperatorPair, scheme: SchemeConfig, u0_source: U0Source, p: float,
                        n_paths: int, master_seed: int, *, mode: str = "sup", workers: int = 1,
                        table: Optional[PathTable] = None) -> MomentEstimate:
    """E sup_t |u(t)|_H^p on the recording grid, or E |u(T)|_H^p with ``mode="terminal"``."""
    if n_paths < N_BATCHES:
        raise ValueError(f"need at least {N_BATCHES} paths for the batch-means interval")
    if mode not in ("sup", "terminal"):
        raise ValueError("mode must be 'sup' or 'terminal'")
    if table is None:
        table = run_paths(pair, scheme, u0_source, n_paths, master_seed, workers=workers)
    x = table.sup_h if mode == "sup" else table.terminal_h
    return moment_from_samples(x, table.diverged, p, mode)


def estimate_v_moment(pair: OperatorPair, scheme: SchemeConfig, u0_source: U0Source, p: float,
                      alpha: Optional[float], n_paths: int, master_seed: int, *, workers: int = 1,
                      table: Optional[PathTable] = None) -> MomentEstimate:
    """E (int_0^T |u|_V^alpha dt)^{p/2}."""
    if n_paths < N_BATCHES:
        raise ValueError(f"need at least {N_BATCHES} paths for the batch-means interval")
    if table is None:
        table = run_paths(pair, scheme, u0_source, n_paths, master_seed, alpha=alpha, workers=workers)
    return moment_from_samples(np.sqrt(table.int_v_alpha), table.diverged, p, "v-integral")


# -- oracles -------------------------------------------------------------------------


def exact_spectral_moment(gamma: float, q: float, t: float, k: float, u0_k: float) -> float:
    """E|u_k(t)|^q for du = -k^2 u dt + 2 gamma |k| u dW (a lognormal variable)."""
    if q < 0.0:
        raise ValueError("q must be nonnegative")
    if q == 0.0:
        return 1.0
    expo = q * k * k * t * (2.0 * gamma * gamma * (q - 1.0) - 1.0)
    try:
        return abs(u0_k) ** q * math.exp(expo)
    except OverflowError:
        return math.inf


def truncated_second_moment(gamma: float, t: float, u0_coeffs, K_modes: int) -> float:
    """sum over |k| <= K of E|u_k(t)|^2 for the spectral example.

    ``u0_coeffs`` maps an integer wavenumber to its initial coefficient.
    """
    terms = [exact_spectral_moment(gamma, 2.0, t, k, u0_coeffs(k)) for k in range(-K_modes, K_modes + 1)]
    if any(math.isinf(x) for x in terms):
        return math.inf
    return math.fsum(terms)


def divergence_diagnostic(samples, p: float, *, tail_fraction: float = TAIL_FRACTION,
                          growth_factor: float = GROWTH_FACTOR, doublings: int = DOUBLINGS) -> dict:
    """Heuristic test for E X^p = infinity from a sample of X >= 0.

    Flags when the Hill tail index over the top ``tail_fraction`` is <= p,
    or when the running mean of X^p grows by more than ``growth_factor`` at
    each of the last ``doublings`` doublings of the sample size.
    """
    x = np.asarray(samples, dtype=float)
    if x.size < MIN_DIAGNOSTIC_SAMPLES:
        return {"available": False, "flag": False, "tail_index": None, "mean_growth": None}
    srt = np.sort(x)[::-1]
    k = max(2, int(tail_fraction * x.size))
    ref = srt[k]
    if ref > 0.0:
        logs = np.log(srt[:k] / ref)
        denom = float(np.mean(logs))
        tail = math.inf if denom == 0.0 else 1.0 / denom
    else:
        tail = 0.0 if srt[0] > 0.0 else math.inf
    with np.errstate(over="ignore"):
        xp = x ** p
    sizes = [x.size >> j for j in range(doublings, -1, -1)]
    means = [float(np.mean(xp[:m])) for m in sizes]
    growth = [b / a if a > 0.0 else (math.inf if b > 0.0 else 1.0) for a, b in zip(means, means[1:])]
    grows = all(g > growth_factor for g in growth)
    return {"available": True, "flag": bool(tail <= p or grows),
            "tail_index": None if math.isinf(tail) else float(tail), "mean_growth": growth}


def apriori_rhs(C: float, T: float, u0_p_moment: float, f_integral_p2_moment: float) -> float:
    """C e^{CT} (E|u0|^p + E(int f)^{p/2})."""
    return C * math.exp(C * T) * (u0_p_moment + f_integral_p2_moment)


def summary_json(estimate: MomentEstimate, extra: dict) -> str:
    """JSON with fixed key order and round-trip floats."""
    out = dict(extra)
    out.update({
        "p": estimate.p,
        "estimate": estimate.value,
        "ci": estimate.ci_half_width,
        "n_paths": estimate.n_paths,
        "n_diverged": estimate.n_diverged,
        "tail_index": estimate.tail_index_est,
        "diverged": estimate.divergence_flag,
        "functional": estimate.functional,
    })
    return json.dumps(_finite(out), sort_keys=True, indent=2)


def _finite(x):
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, float) and not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    return x
