"""Experiment configuration (TOML) with exhaustive validation.

Layout::

    equation = "spectral-example"

    [space]          # kind, n, lengths, v_norm, dim, components, order
    [coefficients]   # equation parameters (gamma, nu, a, b, sigma, ...)
    [scheme]         # method, dt, T, record_stride
    [study]          # p, n_paths, seed, k_trunc, functional, u0, ...
    [output]         # json, csv, trajectory

Every key has a default except ``equation``.  All problems are collected and
reported together, each with the line it came from when it can be located.
"""

from __future__ import annotations

import difflib
import math
import os
import re
import sys
from dataclasses import dataclass

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .operators import EQUATIONS
from .gelfand import SPACE_KINDS
from .simulate import METHODS

DEFAULT_KIND = {
    "spectral-example": "fourier-torus",
    "heat-dirichlet": "fd-dirichlet-interval",
    "heat-neumann": "fd-neumann-interval",
    "burgers": "fd-dirichlet-interval",
    "navier-stokes-2d": "fourier-torus-2d-vector",
    "system": "fd-grid-rd",
    "higher-order": "fourier-torus",
    "p-laplace": "fd-dirichlet-interval",
}

CONDITIONS = ("coercivity", "coercivity-pminus1", "monotonicity", "growth")
SWEEP_PARAMS = ("gamma", "p", "dt", "K")

SCHEMA = {
    "": {"equation": None},
    "space": {"kind": None, "n": 3, "lengths": None, "v_norm": "full", "dim": 1,
              "components": 1, "order": None},
    "coefficients": {"gamma": 0.5, "nu": 1.0, "viscosity": 1.0, "a": 1.0, "b": None, "sigma": None,
                     "lambda": None, "m": 1, "A": 1.0, "B": None, "alpha": 3.0, "gamma_k": None,
                     "C_k": None, "a_csv": None, "b_csv": None, "sigma_csv": None, "lambda_csv": None},
    "scheme": {"method": None, "dt": 1e-3, "T": 1.0, "record_stride": 1},
    "study": {"p": [2.0], "n_paths": 1000, "seed": 0, "k_trunc": None, "functional": "terminal",
              "u0": "mode:1", "u0_h_norm": 1.0, "samples": 1000, "conditions": list(CONDITIONS),
              "theta": None, "K_c": None, "sweep_param": "gamma", "sweep_values": None,
              "sweep_mode": "oracle", "oracle_t": 1.0, "oracle_K": [32, 64], "oracle_decay": 1.0,
              "oracle_modes": [1], "sampler_seed": 0, "amplitude_range": [1.0, 1.0]},
    "output": {"json": True, "csv": True, "trajectory": True},
}


class ConfigError(Exception):
    """Raised with the complete list of problems found in a configuration."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("\n".join(self.errors))


@dataclass(frozen=True)
class ExperimentConfig:
    equation: str
    space: dict
    coefficients: dict
    scheme: dict
    study: dict
    output: dict
    base_dir: str = "."

    def resolved(self) -> dict:
        """Plain nested dict of every setting, including defaults."""
        return {"equation": self.equation, "space": dict(self.space),
                "coefficients": dict(self.coefficients), "scheme": dict(self.scheme),
                "study": dict(self.study), "output": dict(self.output)}

    def with_value(self, section: str, key: str, value) -> "ExperimentConfig":
        d = self.resolved()
        d[section][key] = value
        return ExperimentConfig(d["equation"], d["space"], d["coefficients"], d["scheme"],
                                d["study"], d["output"], self.base_dir)


def _line_of(text: str, section: str, key: str):
    current = ""
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[([^\]]+)\]", s)
        if m:
            current = m.group(1).strip()
            continue
        if current == section and re.match(rf"^{re.escape(key)}\s*=", s):
            return no
    return None


def _where(text, section, key):
    no = _line_of(text, section, key)
    name = f"{section}.{key}" if section else key
    return f"line {no}: {name}" if no else name


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    """Parse and validate; raises :class:`ConfigError` listing every problem."""
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"syntax error: {exc}"]) from None
    errors = []
    sections = {}
    for name in SCHEMA:
        if name:
            sections[name] = {}
    top = {}
    for key, val in raw.items():
        if isinstance(val, dict):
            if key not in SCHEMA or not key:
                hint = difflib.get_close_matches(key, [s for s in SCHEMA if s], n=1)
                sug = f"; did you mean [{hint[0]}]?" if hint else ""
                errors.append(f"{_where(text, '', key)}: unknown section [{key}]{sug}")
                continue
            sections[key] = val
        else:
            top[key] = val
    for section, given in [("", top)] + list(sections.items()):
        allowed = SCHEMA[section]
        for key in given:
            if key not in allowed:
                hint = difflib.get_close_matches(key, list(allowed), n=1)
                sug = f"; did you mean '{hint[0]}'?" if hint else ""
                errors.append(f"{_where(text, section, key)}: unknown key '{key}'{sug}")

    def get(section, key):
        src = top if section == "" else sections[section]
        return src.get(key, SCHEMA[section][key])

    def err(section, key, msg):
        errors.append(f"{_where(text, section, key)}: {msg}")

    equation = top.get("equation")
    if equation is None:
        errors.append("equation: required key is missing")
    elif equation not in EQUATIONS:
        hint = difflib.get_close_matches(str(equation), EQUATIONS, n=1)
        sug = f"; did you mean '{hint[0]}'?" if hint else ""
        err("", "equation", f"unknown equation {equation!r}{sug}")
        equation = None

    res = {name: {k: get(name, k) for k in SCHEMA[name]} for name in SCHEMA if name}

    def number(section, key, positive=False, integer=False, minimum=None):
        val = res[section][key]
        if val is None:
            return
        ok_type = isinstance(val, int) if integer else isinstance(val, (int, float))
        if isinstance(val, bool) or not ok_type:
            err(section, key, f"expected {'an integer' if integer else 'a number'}, got {val!r}")
            return
        if not math.isfinite(val):
            err(section, key, "must be finite")
        elif positive and not val > 0:
            err(section, key, f"must be > 0, got {val}")
        elif minimum is not None and val < minimum:
            err(section, key, f"must be >= {minimum}, got {val}")

    sp = res["space"]
    if sp["kind"] is None and equation:
        sp["kind"] = DEFAULT_KIND[equation]
    if sp["kind"] is not None and sp["kind"] not in SPACE_KINDS:
        err("space", "kind", f"unknown space kind {sp['kind']!r}")
    if equation == "burgers" and "v_norm" not in sections["space"]:
        sp["v_norm"] = "seminorm"
    if sp["lengths"] is None:
        sp["lengths"] = [2.0 * math.pi] if str(sp["kind"]).startswith("fourier") else [1.0]
    if not isinstance(sp["lengths"], list):
        sp["lengths"] = [sp["lengths"]]
    if sp["order"] is None:
        sp["order"] = int(res["coefficients"]["m"]) if equation == "higher-order" else 1
    number("space", "n", integer=True, minimum=2)
    number("space", "dim", integer=True, minimum=1)
    number("space", "components", integer=True, minimum=1)
    number("space", "order", integer=True, minimum=1)
    if sp["v_norm"] not in ("full", "seminorm"):
        err("space", "v_norm", "must be 'full' or 'seminorm'")
    if any(not isinstance(x, (int, float)) or not x > 0 for x in sp["lengths"]):
        err("space", "lengths", "domain lengths must be positive numbers")

    co = res["coefficients"]
    for key in ("gamma", "nu", "viscosity", "A"):
        number("coefficients", key)
    number("coefficients", "nu", positive=True)
    number("coefficients", "m", integer=True, minimum=1)
    number("coefficients", "alpha")
    if co["alpha"] is not None and isinstance(co["alpha"], (int, float)) and not co["alpha"] > 1:
        err("coefficients", "alpha", f"alpha must exceed 1, got {co['alpha']}")
    for key in ("a_csv", "b_csv", "sigma_csv", "lambda_csv"):
        path = co[key]
        if path is not None:
            full = path if os.path.isabs(path) else os.path.join(base_dir, path)
            if not os.path.isfile(full):
                err("coefficients", key, f"file not found: {path}")
            else:
                co[key] = full

    sc = res["scheme"]
    if sc["method"] is None:
        sc["method"] = "tamed-em" if equation == "p-laplace" else "semi-implicit-em"
    if sc["method"] not in METHODS:
        err("scheme", "method", f"unknown method {sc['method']!r}; expected one of {METHODS}")
    number("scheme", "dt", positive=True)
    number("scheme", "T", positive=True)
    number("scheme", "record_stride", integer=True, minimum=1)
    if not errors and isinstance(sc["dt"], (int, float)) and isinstance(sc["T"], (int, float)):
        n = round(sc["T"] / sc["dt"])
        if n < 1 or abs(n * sc["dt"] - sc["T"]) > 1e-9 * sc["T"]:
            err("scheme", "T", f"T = {sc['T']} must be a positive multiple of dt = {sc['dt']}")

    st = res["study"]
    if not isinstance(st["p"], list):
        st["p"] = [st["p"]]
    for p in st["p"]:
        if isinstance(p, bool) or not isinstance(p, (int, float)) or not p >= 2:
            err("study", "p", f"every p must be a number >= 2, got {p!r}")
    number("study", "n_paths", integer=True, minimum=16)
    number("study", "seed", integer=True, minimum=0)
    number("study", "samples", integer=True, minimum=1)
    number("study", "sampler_seed", integer=True, minimum=0)
    number("study", "k_trunc", integer=True, minimum=1)
    number("study", "u0_h_norm", positive=True)
    number("study", "K_c", minimum=0.0)
    number("study", "theta")
    number("study", "oracle_t", minimum=0.0)
    number("study", "oracle_decay", minimum=0.0)
    if st["functional"] not in ("terminal", "sup", "v"):
        err("study", "functional", "must be 'terminal', 'sup' or 'v'")
    for c in st["conditions"]:
        if c not in CONDITIONS:
            hint = difflib.get_close_matches(str(c), CONDITIONS, n=1)
            sug = f"; did you mean '{hint[0]}'?" if hint else ""
            err("study", "conditions", f"unknown condition {c!r}{sug}")
    if st["sweep_param"] not in SWEEP_PARAMS:
        err("study", "sweep_param", f"must be one of {SWEEP_PARAMS}")
    if st["sweep_mode"] not in ("oracle", "moments"):
        err("study", "sweep_mode", "must be 'oracle' or 'moments'")
    if isinstance(st["u0"], str):
        if not re.fullmatch(r"mode:\d+", st["u0"]):
            err("study", "u0", "string form must be 'mode:<index>'")
    elif not (isinstance(st["u0"], list) and all(isinstance(x, (int, float)) for x in st["u0"])):
        err("study", "u0", "must be 'mode:<index>' or a list of coefficients")
    for key in ("oracle_K", "oracle_modes"):
        if not isinstance(st[key], list) or not all(isinstance(x, int) and x >= 0 for x in st[key]):
            err("study", key, "must be a list of nonnegative integers")
    rng_ = st["amplitude_range"]
    if not (isinstance(rng_, list) and len(rng_) == 2 and all(isinstance(x, (int, float)) and x > 0 for x in rng_)):
        err("study", "amplitude_range", "must be two positive numbers")

    for key in ("json", "csv", "trajectory"):
        if not isinstance(res["output"][key], bool):
            err("output", key, "must be true or false")

    if errors:
        raise ConfigError(errors)
    return ExperimentConfig(equation, sp, co, sc, st, res["output"], base_dir)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    return parse_config(text, os.path.dirname(os.path.abspath(path)))
