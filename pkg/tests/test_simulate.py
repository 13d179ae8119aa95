import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_moments import kernels
from spde_moments.gelfand import SpaceConfig, build_space, h_norm
from spde_moments.noise import WienerStream, path_increments, sample_increments
from spde_moments.operators import burgers_make, p_laplace_make, spectral_example_make
from spde_moments.simulate import (
    SchemeConfig,
    _generic_batch,
    coupled_increments,
    diagonal_exact_solution,
    ito_residual,
    simulate_batch,
    simulate_path,
    step,
    strong_convergence_order,
    write_trajectory_csv,
)


def spectral(gamma=0.5, n=5):
    return spectral_example_make(gamma, build_space(SpaceConfig("fourier-torus", n, lengths=(2 * math.pi,))))


def unit(space, idx=1):
    v = np.zeros(space.n)
    v[idx] = 1.0
    return v / h_norm(space, v)


# -- kernels: compiled loop and numpy variants agree ------------------------------

def _diag_args(rng, implicit, p_ito):
    m, n, steps, K = 7, 5, 40, 2
    lam = -np.arange(n, dtype=float) ** 2
    noise = rng.normal(scale=0.5, size=(n, K))
    h_w = rng.uniform(1, 2, n)
    v_w = h_w * (1 + np.arange(n) ** 2)
    u0 = rng.normal(size=(m, n))
    dW = rng.normal(scale=0.1, size=(m, steps, K))
    return (lam, noise, h_w, v_w, u0, dW, 0.01, 3, 2.5, implicit, p_ito)


@pytest.mark.parametrize("implicit", [True, False])
@pytest.mark.parametrize("p_ito", [0.0, 2.0, 4.0])
def test_diag_em_variants_agree(implicit, p_ito):
    args = _diag_args(np.random.default_rng(0), implicit, p_ito)
    loop, vec = kernels.IMPLEMENTATIONS["diag_em"]
    for a, b in zip(loop(*args), vec(*args)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)


def test_diag_em_variants_agree_on_divergence():
    rng = np.random.default_rng(1)
    args = list(_diag_args(rng, False, 0.0))
    args[0] = np.full(5, 50.0)  # unstable explicit drift
    args[5] = np.zeros_like(args[5])
    args[6] = 1.0
    loop, vec = kernels.IMPLEMENTATIONS["diag_em"]
    a, b = loop(*args), vec(*args)
    np.testing.assert_array_equal(a[3], b[3])
    np.testing.assert_array_equal(a[4], b[4])


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), n=st.integers(3, 40), m=st.integers(1, 6))
def test_burgers_and_plap_variants_agree(seed, n, m):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(m, n))
    lb, vb = kernels.IMPLEMENTATIONS["burgers_skew"]
    np.testing.assert_allclose(lb(u), vb(u), rtol=1e-12, atol=1e-12)
    lp, vp = kernels.IMPLEMENTATIONS["plap_flux"]
    for a, b in zip(lp(u, 1.0 / (n + 1), 3.0), vp(u, 1.0 / (n + 1), 3.0)):
        np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


def test_plap_margin_variants_agree():
    rng = np.random.default_rng(2)
    x, y = rng.uniform(0, 5, (2, 10_000))
    lm, vm = kernels.IMPLEMENTATIONS["plap_margin"]
    a, b = lm(x, y, 3.0, 2.0), vm(x, y, 3.0, 2.0)
    assert a[0] == pytest.approx(b[0], rel=1e-12)
    assert a[1] == b[1]


# -- schemes -----------------------------------------------------------------------

def test_scheme_validation():
    with pytest.raises(ValueError):
        SchemeConfig("rk4")
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.0)
    with pytest.raises(ValueError):
        SchemeConfig(dt=0.3, T=1.0)
    with pytest.raises(ValueError):
        SchemeConfig(record_stride=0)
    assert SchemeConfig(dt=0.1, T=1.0).n_steps == 10


def test_kernel_and_generic_paths_agree():
    pair = spectral()
    scheme = SchemeConfig("semi-implicit-em", 0.01, 0.5, record_stride=5)
    U0 = np.tile(unit(pair.space), (6, 1))
    dW = path_increments(1, 0.01, 3, range(6), 50)
    k = simulate_batch(pair, scheme, U0, dW, p_ito=4.0)
    g = _generic_batch(pair, scheme, U0, dW, 2.0, 4.0, False)
    for key in ("sup_h", "int_v", "terminal", "ito_rhs"):
        np.testing.assert_allclose(k[key], g[key], rtol=1e-12)


def test_semi_implicit_step_is_exact_for_deterministic_diagonal_system():
    pair = spectral(0.0)
    v = unit(pair.space, 3)  # wavenumber 2
    out = step(pair, SchemeConfig("semi-implicit-em", 0.1, 1.0), 0.0, v, [0.0])
    assert out == pytest.approx(v / (1 + 0.1 * 4))


def test_explicit_scheme_flags_divergence_and_stops():
    pair = spectral(0.0, n=41)  # top eigenvalue -400, amplification 39 per step
    scheme = SchemeConfig("explicit-em", 0.1, 30.0)
    u0 = np.zeros(41)
    u0[-1] = 1.0
    res = simulate_batch(pair, scheme, u0[None], np.zeros((1, scheme.n_steps, 1)))
    assert res["diverged"][0]
    assert res["t_last"][0] < 30.0
    assert np.all(np.isfinite(res["terminal"]))


def test_tamed_scheme_stays_finite_for_p_laplace_at_resolved_step():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 15, alpha=3.0))
    pair = p_laplace_make(3.0, [0.5], space=sp)
    scheme = SchemeConfig("tamed-em", 1e-4, 0.01)
    u0 = np.sin(np.pi * np.arange(1, 16) / 16)
    res = simulate_batch(pair, scheme, np.tile(u0, (50, 1)), path_increments(1, 1e-4, 0, range(50), 100))
    assert not res["diverged"].any()
    # dissipative on average
    assert np.median(h_norm(sp, res["terminal"])) < h_norm(sp, u0)


def test_tamed_scheme_reports_divergence_at_unresolved_step():
    # the noise is explicit and superlinear in the gradient, so a coarse step blows up
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 30, alpha=3.0))
    pair = p_laplace_make(3.0, [0.5], space=sp)
    scheme = SchemeConfig("tamed-em", 1e-3, 0.05)
    u0 = np.sin(np.pi * np.arange(1, 31) / 31)
    res = simulate_batch(pair, scheme, np.tile(u0, (5, 1)), path_increments(1, 1e-3, 0, range(5), 50))
    assert res["diverged"].all()
    assert np.all(res["t_last"] < 0.05)


def test_simulate_path_is_reproducible_and_records(tmp_path):
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 20, v_norm="seminorm"))
    pair = burgers_make(0.5, sp)
    scheme = SchemeConfig("semi-implicit-em", 0.01, 0.2, record_stride=4)
    u0 = np.sin(np.pi * np.arange(1, 21) / 21)
    stream = WienerStream(1, 0.01, 42)
    a = simulate_path(pair, scheme, u0, stream, record=True)
    b = simulate_path(pair, scheme, u0, stream, record=True)
    assert np.array_equal(a.terminal, b.terminal)
    assert [t for t, _ in a.snapshots] == pytest.approx([0.0, 0.04, 0.08, 0.12, 0.16, 0.2])
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, a)
    lines = path.read_text().splitlines()
    assert lines[0].split(",")[:2] == ["t", "coeff_0"]
    assert len(lines) == 7
    assert float(lines[-1].split(",")[1]) == a.terminal[0]


def test_simulate_path_validates_stream():
    pair = spectral()
    with pytest.raises(ValueError):
        simulate_path(pair, SchemeConfig(dt=0.01, T=0.1), unit(pair.space), WienerStream(2, 0.01, 0))
    with pytest.raises(ValueError):
        simulate_path(pair, SchemeConfig(dt=0.01, T=0.1), unit(pair.space), WienerStream(1, 0.02, 0))


def test_sup_norm_bounds_terminal_norm():
    pair = spectral()
    scheme = SchemeConfig(dt=0.01, T=0.5)
    U0 = np.tile(unit(pair.space), (20, 1))
    res = simulate_batch(pair, scheme, U0, path_increments(1, 0.01, 1, range(20), 50))
    assert np.all(res["sup_h"] >= h_norm(pair.space, res["terminal"]) - 1e-15)
    assert np.all(res["sup_h"] >= 1.0 - 1e-15)


def test_exact_solution_and_strong_error_shrink():
    pair = spectral(0.5, n=3)
    u0 = unit(pair.space)
    res = strong_convergence_order(pair, u0, 2 ** -4, 3, 200)
    assert res["errors"][0] > res["errors"][1] > res["errors"][2]
    W = np.zeros((1, 1))
    det = diagonal_exact_solution(pair, u0, W, 1.0)
    # W = 0: exp((-1 - 2 gamma^2) t) on the k = 1 mode
    assert det[0, 1] == pytest.approx(u0[1] * math.exp(-1.5))


def test_coupled_levels_share_the_brownian_path():
    incs = coupled_increments(2, 0.1, 5, 3, 10, 3)
    assert [x.shape[0] for x in incs] == [10, 20, 40]
    assert np.array_equal(incs[0].sum(axis=0), incs[2].reshape(10, 4, 2).sum(axis=1).sum(axis=0))
    assert np.array_equal(incs[0], sample_increments(WienerStream(2, 0.1, 5, 3), 10))


def test_ito_residual_small_relative_to_moment():
    pair = spectral(0.3, n=3)
    r = ito_residual(pair, SchemeConfig(dt=1e-3, T=0.5), unit(pair.space), WienerStream(1, 1e-3, 0), 2.0)
    assert abs(r) < 0.05
