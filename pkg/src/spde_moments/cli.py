"""Command line front end: ``spde-moments <subcommand> --config FILE``.

Subcommands write ``<subcommand>.json`` (always with the resolved config and
the master seed) and, where there is tabular output, ``<subcommand>.csv``
into ``--out``.  Floats are written with ``repr``, so identical runs give
identical bytes whatever the worker count.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import coercivity as coe
from . import moments as mom
from .config import ConfigError, ExperimentConfig, load_config
from .gelfand import SpaceConfig, build_space, h_norm
from .noise import WienerStream
from .operators import (
    OperatorPair,
    burgers_make,
    heat_dirichlet_make,
    heat_neumann_make,
    higher_order_make,
    load_coefficient_csv,
    navier_stokes_2d_make,
    p_laplace_make,
    spectral_example_make,
    system_make,
)
from .simulate import SchemeConfig, simulate_path, write_trajectory_csv

EXIT_OK, EXIT_AUDIT, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
SUBCOMMANDS = ("simulate", "moments", "check", "sweep", "oracle")
STABLE_RTOL = 1e-6


@dataclass
class Experiment:
    pair: OperatorPair
    scheme: SchemeConfig
    u0: np.ndarray


# -- building -------------------------------------------------------------------


def _field(path, slot_shape, space):
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    grid = space.shape if first.strip().startswith("g0") else None
    return load_coefficient_csv(path, slot_shape, grid)


def _matrix(x, d):
    a = np.asarray(x, dtype=float)
    return np.eye(d) * float(a) if a.ndim == 0 else a


def build_pair(cfg: ExperimentConfig) -> OperatorPair:
    sp_, co = cfg.space, cfg.coefficients
    alpha = float(co["alpha"]) if cfg.equation == "p-laplace" else 2.0
    space = build_space(SpaceConfig(kind=sp_["kind"], n=sp_["n"], lengths=tuple(sp_["lengths"]), alpha=alpha,
                                    v_norm=sp_["v_norm"], dim=sp_["dim"], components=sp_["components"],
                                    order=sp_["order"]))
    eq = cfg.equation
    d = space.dim
    if eq == "spectral-example":
        return spectral_example_make(co["gamma"], space)
    if eq in ("heat-dirichlet", "heat-neumann"):
        a = _field(co["a_csv"], {"i": d, "j": d}, space) if co["a_csv"] else _matrix(co["a"], d)
        if co["b_csv"]:
            with open(co["b_csv"], encoding="utf-8") as fh:
                next(fh)
                ks = [int(row[-2]) for row in csv.reader(fh) if row]
            b = _field(co["b_csv"], {"i": d, "k": max(ks) + 1}, space)
        else:
            b = None if co["b"] is None else np.asarray(co["b"], dtype=float).reshape(d, -1)
        make = heat_dirichlet_make if eq == "heat-dirichlet" else heat_neumann_make
        return make(a, b, space=space)
    if eq == "burgers":
        return burgers_make(co["gamma"], space, viscosity=co["viscosity"])
    if eq == "navier-stokes-2d":
        b = [[co["gamma"], 0.0], [0.0, co["gamma"]]] if co["b"] is None else co["b"]
        return navier_stokes_2d_make(co["nu"], np.asarray(b, dtype=float), space)
    if eq == "system":
        N = space.components
        if co["a_csv"]:
            a = _field(co["a_csv"], {"i": d, "j": d, "alpha": N, "beta": N}, space)
        elif co["a"] is None or np.ndim(co["a"]) == 0:
            a = float(co["a"]) * np.einsum("ij,ab->ijab", np.eye(d), np.eye(N))
        else:
            a = np.asarray(co["a"], dtype=float)
        if co["sigma_csv"]:
            with open(co["sigma_csv"], encoding="utf-8") as fh:
                next(fh)
                ks = [int(row[-2]) for row in csv.reader(fh) if row]
            K = max(ks) + 1
            sigma = _field(co["sigma_csv"], {"i": d, "k": K, "alpha": N, "beta": N}, space)
        elif co["sigma"] is None:
            sigma = np.zeros((d, 1, N, N))
        else:
            sigma = np.asarray(co["sigma"], dtype=float)
        lam = None
        if co["lambda_csv"]:
            shape = sigma.slot_shape if hasattr(sigma, "slot_shape") else sigma.shape
            lam = _field(co["lambda_csv"], dict(zip(("i", "k", "alpha", "beta"), shape)), space)
        elif co["lambda"] is not None:
            lam = np.asarray(co["lambda"], dtype=float)
        return system_make(a, sigma, lam, space=space)
    if eq == "higher-order":
        B = [0.5] if co["B"] is None else co["B"]
        return higher_order_make(co["m"], co["A"], B, space)
    if eq == "p-laplace":
        g = [0.5] if co["gamma_k"] is None else co["gamma_k"]
        return p_laplace_make(alpha, g, co["C_k"], space=space)
    raise ConfigError([f"equation: unsupported {eq!r}"])


def initial_state(cfg: ExperimentConfig, space) -> np.ndarray:
    """``u0`` from the study block, scaled to the requested H norm."""
    u0 = cfg.study["u0"]
    if isinstance(u0, list):
        v = np.asarray(u0, dtype=float)
        if v.shape != (space.n,):
            raise ConfigError([f"study.u0: expected {space.n} coefficients, got {v.size}"])
        return v
    j = int(u0.split(":")[1])
    if space.kind == "fourier-torus":
        idx = 2 * j - 1 if j > 0 else 0
        if idx >= space.n:
            raise ConfigError([f"study.u0: mode {j} is not resolved by n = {space.n}"])
        v = np.zeros(space.n)
        v[idx] = 1.0
    elif space.kind == "fourier-torus-2d-vector":
        n1, n2 = space.shape
        L1, L2 = space.lengths
        y = np.arange(n2) * L2 / n2
        x = np.arange(n1) * L1 / n1
        u = np.zeros((2, n1, n2))
        u[0] = np.sin(2 * np.pi * max(j, 1) * y / L2)[None, :]
        u[1] = np.sin(2 * np.pi * max(j, 1) * x / L1)[:, None]
        v = space.project_admissible(space.as_vector(u))
    else:
        axes = []
        for L, m in zip(space.lengths, space.shape):
            if space.kind == "fd-neumann-interval":
                x = np.arange(m) * L / (m - 1)
                axes.append(np.cos(j * np.pi * x / L))
            else:
                x = np.arange(1, m + 1) * L / (m + 1)
                axes.append(np.sin(max(j, 1) * np.pi * x / L))
        node = axes[0]
        for ax in axes[1:]:
            node = np.multiply.outer(node, ax)
        v = np.tile(node.ravel(), space.components)
    norm = float(h_norm(space, v))
    if norm == 0.0:
        raise ConfigError([f"study.u0: mode {j} vanishes on this grid"])
    return v * (cfg.study["u0_h_norm"] / norm)


def build_experiment(cfg: ExperimentConfig) -> Experiment:
    """Pair, scheme and initial state; parameter errors become :class:`ConfigError`."""
    try:
        pair = build_pair(cfg)
        sc = cfg.scheme
        scheme = SchemeConfig(sc["method"], float(sc["dt"]), float(sc["T"]), int(sc["record_stride"]))
    except (ValueError, OSError) as exc:
        raise ConfigError([f"{cfg.equation}: {exc}"]) from None
    k = cfg.study["k_trunc"]
    if k is not None and k != pair.k_noise:
        raise ConfigError([f"study.k_trunc: {cfg.equation} with these coefficients has {pair.k_noise} "
                           f"noise coordinates, not {k}"])
    return Experiment(pair, scheme, initial_state(cfg, pair.space))


# -- output ---------------------------------------------------------------------


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else ("-inf" if x < 0 else "nan"))
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def write_json(path, command: str, cfg: ExperimentConfig, seed: int, results) -> None:
    doc = {"command": command, "config": cfg.resolved(), "seed": seed, "results": results}
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(_jsonable(doc), sort_keys=True, indent=2))
        fh.write("\n")


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(header)
        for row in rows:
            wr.writerow([_cell(c) for c in row])


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(cfg, seed, workers, out):
    ex = build_experiment(cfg)
    stream = WienerStream(ex.pair.k_noise, ex.scheme.dt, seed, stream_id=0)
    record = cfg.output["trajectory"]
    f = simulate_path(ex.pair, ex.scheme, ex.u0, stream, record=record)
    if record and cfg.output["csv"]:
        write_trajectory_csv(os.path.join(out, "simulate.csv"), f)
    res = {"sup_h": f.sup_h, "int_v_alpha": f.int_v_alpha, "terminal_h": float(h_norm(ex.pair.space, f.terminal)),
           "diverged": f.diverged, "t_last": f.t_last}
    return res, True


def _moment_table(cfg, ex, seed, workers):
    alpha = ex.pair.alpha if cfg.study["functional"] == "v" else None
    return mom.run_paths(ex.pair, ex.scheme, ex.u0, cfg.study["n_paths"], seed, alpha=alpha, workers=workers)


def _estimates(cfg, ex, table):
    fn = cfg.study["functional"]
    out = []
    for p in cfg.study["p"]:
        if fn == "v":
            x = np.sqrt(table.int_v_alpha)
            est = mom.moment_from_samples(x, table.diverged, float(p), "v-integral")
        else:
            x = table.sup_h if fn == "sup" else table.terminal_h
            est = mom.moment_from_samples(x, table.diverged, float(p), fn)
        out.append(est)
    return out


def cmd_moments(cfg, seed, workers, out):
    ex = build_experiment(cfg)
    table = _moment_table(cfg, ex, seed, workers)
    if cfg.output["csv"]:
        table.write_csv(os.path.join(out, "moments.csv"))
    ests = _estimates(cfg, ex, table)
    return [e.to_dict() for e in ests], True


def default_K_c(pair: OperatorPair, theta) -> float:
    """K_c matching the space's V norm.

    Declared constants assume the gradient seminorm.  Under the full norm
    the extra theta |v|_H^2 on the right is absorbed by raising K_c by theta.
    """
    base = pair.declared.K_c or 0.0
    if pair.space.v_norm_kind == "full" and theta is not None:
        return base + max(float(theta), 0.0)
    return base


def cmd_check(cfg, seed, workers, out):
    ex = build_experiment(cfg)
    pair = ex.pair
    st = cfg.study
    n = st["samples"]
    reports = []
    conds = st["conditions"]

    def sampler():
        return coe.VectorSampler(pair.space, seed=st["sampler_seed"], amplitudes=tuple(st["amplitude_range"]))

    for p in st["p"]:
        theta = st["theta"] if st["theta"] is not None else pair.declared.theta_at(p)
        K_c = default_K_c(pair, theta) if st["K_c"] is None else st["K_c"]
        if "coercivity" in conds:
            reports.append(coe.check_coercivity(pair, float(p), theta, K_c, sampler(), n))
        if "coercivity-pminus1" in conds:
            # declared constants are for the plain inequality; the variant is only fitted
            reports.append(coe.check_coercivity_pminus1(pair, float(p), st["theta"], K_c, sampler(), n))
    if "monotonicity" in conds:
        reports.append(coe.check_monotonicity(pair, sampler(), n))
    if "growth" in conds:
        reports.append(coe.check_growth(pair, sampler(), n))
    if cfg.output["csv"]:
        rows = [(r.condition, "" if r.p is None else r.p, r.theta_fit, r.K_c, r.worst_margin,
                 "" if r.passed is None else r.passed) for r in reports]
        write_rows(os.path.join(out, "check.csv"),
                   ["condition", "p", "theta_fit", "K_c", "worst_margin", "passed"], rows)
    ok = all(r.passed is not False for r in reports)
    return [r.to_dict() for r in reports], ok


def _u0_decay(cfg):
    decay = cfg.study["oracle_decay"]
    return lambda k: math.exp(-decay * abs(k))


def _oracle_rows(gamma, cfg, label, value):
    """Long-format rows for one gamma: truncated moments at each K and the stabilisation flag."""
    t = cfg.study["oracle_t"]
    u0 = _u0_decay(cfg)
    Ks = sorted(cfg.study["oracle_K"])
    vals = [mom.truncated_second_moment(gamma, t, u0, K) for K in Ks]
    rows = [(label, value, f"truncated_second_moment_K{K}", v) for K, v in zip(Ks, vals)]
    if len(vals) >= 2:
        a, b = vals[-2], vals[-1]
        rel = abs(b - a) / abs(a) if math.isfinite(a) and math.isfinite(b) and a != 0.0 else math.inf
        rows.append((label, value, "relative_change", rel))
        rows.append((label, value, "stabilized", bool(rel < STABLE_RTOL)))
    rows.append((label, value, "asymptotically_bounded", bool(2.0 * gamma ** 2 < 1.0)))
    return rows


def cmd_sweep(cfg, seed, workers, out):
    st = cfg.study
    param, mode = st["sweep_param"], st["sweep_mode"]
    values = st["sweep_values"]
    if values is None:
        values = {"gamma": [0.3, 0.4, 0.5, 0.6, 0.7, 0.8], "p": [2.0, 4.0, 8.0], "dt": [1e-2, 5e-3, 2.5e-3],
                  "K": [4, 8, 16, 32, 64]}[param]
    rows = []
    if mode == "oracle":
        if cfg.equation != "spectral-example":
            raise ConfigError(["study.sweep_mode: oracle sweeps exist for spectral-example only"])
        gamma = cfg.coefficients["gamma"]
        if param == "gamma":
            for g in values:
                rows += _oracle_rows(float(g), cfg, "gamma", g)
        elif param == "K":
            u0 = _u0_decay(cfg)
            for K in values:
                rows.append(("K", K, "truncated_second_moment",
                             mom.truncated_second_moment(gamma, st["oracle_t"], u0, int(K))))
        elif param == "p":
            for p in values:
                for k in st["oracle_modes"]:
                    rows.append(("p", p, f"exact_moment_mode{k}",
                                 mom.exact_spectral_moment(gamma, float(p), st["oracle_t"], k, _u0_decay(cfg)(k))))
        else:
            raise ConfigError(["study.sweep_param: dt sweeps need sweep_mode = 'moments'"])
    else:
        for v in values:
            if param == "gamma":
                sub = cfg.with_value("coefficients", "gamma", float(v))
            elif param == "dt":
                sub = cfg.with_value("scheme", "dt", float(v))
            elif param == "K":
                sub = cfg.with_value("space", "n", int(v))
            else:
                sub = cfg.with_value("study", "p", [float(v)])
            ex = build_experiment(sub)
            table = _moment_table(sub, ex, seed, workers)
            for e in _estimates(sub, ex, table):
                rows += [(param, v, f"moment_p{e.p}", e.value), (param, v, f"ci_p{e.p}", e.ci_half_width),
                         (param, v, "n_diverged", e.n_diverged), (param, v, f"divergence_flag_p{e.p}",
                                                                   e.divergence_flag)]
    if cfg.output["csv"]:
        write_rows(os.path.join(out, "sweep.csv"), ["parameter", "value", "quantity", "result"], rows)
    return [dict(zip(("parameter", "value", "quantity", "result"), r)) for r in rows], True


def cmd_oracle(cfg, seed, workers, out):
    if cfg.equation != "spectral-example":
        raise ConfigError(["equation: the oracle table exists for spectral-example only"])
    st = cfg.study
    gamma = cfg.coefficients["gamma"]
    u0 = _u0_decay(cfg)
    rows = []
    for q in st["p"]:
        for k in st["oracle_modes"]:
            rows.append(("exact_spectral_moment", float(q), k, "",
                         mom.exact_spectral_moment(gamma, float(q), st["oracle_t"], k, u0(k))))
    for K in st["oracle_K"]:
        rows.append(("truncated_second_moment", 2.0, "", K,
                     mom.truncated_second_moment(gamma, st["oracle_t"], u0, K)))
    if cfg.output["csv"]:
        write_rows(os.path.join(out, "oracle.csv"), ["quantity", "q", "k", "K", "value"], rows)
    return [dict(zip(("quantity", "q", "k", "K", "value"), r)) for r in rows], True


COMMANDS = {"simulate": cmd_simulate, "moments": cmd_moments, "check": cmd_check,
            "sweep": cmd_sweep, "oracle": cmd_oracle}


def make_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spde-moments",
                                 description="Moment estimates and coercivity audits for Galerkin SPDEs.")
    ap.add_argument("command", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="TOML experiment file")
    ap.add_argument("--seed", type=int, default=None, help="master seed (overrides study.seed)")
    ap.add_argument("--workers", type=int, default=1, help="threads for path simulation")
    ap.add_argument("--strict", action="store_true", help="exit 1 when an audit fails")
    ap.add_argument("--out", default=".", help="output directory")
    return ap


def run(command: str, cfg: ExperimentConfig, *, seed=None, workers: int = 1, strict: bool = False,
        out: str = ".") -> int:
    """Execute one subcommand and return its exit status."""
    if seed is not None:
        cfg = cfg.with_value("study", "seed", int(seed))
    seed = cfg.study["seed"]
    os.makedirs(out, exist_ok=True)
    results, ok = COMMANDS[command](cfg, seed, max(1, int(workers)), out)
    if cfg.output["json"]:
        write_json(os.path.join(out, f"{command}.json"), command, cfg, seed, results)
    return EXIT_AUDIT if strict and not ok else EXIT_OK


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    if args.workers < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None and args.seed < 0:
        print("error: --seed must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        status = run(args.command, cfg, seed=args.seed, workers=args.workers, strict=args.strict, out=args.out)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArithmeticError, ValueError, RuntimeError, np.linalg.LinAlgError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if status == EXIT_AUDIT:
        print("audit failed (see check.json)", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
