"""The numpy fallback is selected by environment flag and agrees with numba."""

import json
import os
import subprocess
import sys

import pytest

SCRIPT = r"""
import json, sys
import numpy as np
import spde_moments as sm
from spde_moments.cli import main
print(json.dumps({"backend": sm.backend_name()}))
main(["moments", "--config", sys.argv[1], "--out", sys.argv[2]])
"""

CONFIG = """\
equation = "burgers"
[coefficients]
gamma = 1.0
[space]
n = 24
[scheme]
dt = 0.005
T = 0.1
[study]
p = [2.0, 4.0]
n_paths = 128
seed = 3
functional = "sup"
"""


def _run(tmp_path, tag, disable):
    env = dict(os.environ)
    env.pop("SPDE_MOMENTS_DISABLE_NUMBA", None)
    if disable:
        env["SPDE_MOMENTS_DISABLE_NUMBA"] = "1"
    cfg = tmp_path / "exp.toml"
    cfg.write_text(CONFIG)
    out = tmp_path / tag
    proc = subprocess.run([sys.executable, "-c", SCRIPT, str(cfg), str(out)],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 0, proc.stderr
    backend = json.loads(proc.stdout.splitlines()[0])["backend"]
    return backend, json.loads((out / "moments.json").read_text())["results"]


def test_flag_selects_numpy_and_results_agree(tmp_path):
    b_numpy, r_numpy = _run(tmp_path, "numpy", True)
    b_numba, r_numba = _run(tmp_path, "numba", False)
    assert b_numpy == "numpy" and b_numba == "numba"
    for a, b in zip(r_numpy, r_numba):
        assert a["p"] == b["p"]
        assert a["value"] == pytest.approx(b["value"], rel=1e-10)
