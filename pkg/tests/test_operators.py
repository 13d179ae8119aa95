import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spde_moments.gelfand import SpaceConfig, build_space, h_norm, v_norm
from spde_moments.operators import (
    CoefficientField,
    apply_A,
    apply_B,
    b_adjoint_v,
    burgers_make,
    divergence,
    heat_dirichlet_make,
    heat_neumann_make,
    higher_order_make,
    hs_norm_sq,
    load_coefficient_csv,
    lower_order_form_fit,
    multi_indices,
    navier_stokes_2d_make,
    neumann_trace_fit,
    p_laplace_gamma_limit,
    p_laplace_make,
    spectral_example_make,
    system_make,
)


def torus(n=9, **kw):
    return build_space(SpaceConfig("fourier-torus", n, lengths=(2 * math.pi,), **kw))


def test_spectral_example_is_diagonal():
    sp = torus()
    pair = spectral_example_make(0.5, sp)
    v = np.zeros(sp.n)
    v[3] = 1.0  # cos(2x)
    assert np.allclose(apply_A(pair, 0, v), -4.0 * sp.h_weights * v)
    assert np.allclose(apply_B(pair, 0, v)[:, 0], 2 * 0.5 * 2 * v)
    # HS norm of B v = 4 gamma^2 |grad v|^2
    assert hs_norm_sq(pair, 0, v) == pytest.approx(sp.gradient_sq(v))


def test_heat_stiffness_symmetric_negative():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 30))
    pair = heat_dirichlet_make(1.5, None, space=sp)
    L = pair.info["stiffness"].toarray()
    assert np.allclose(L, L.T)
    assert np.max(np.linalg.eigvalsh(L)) < 0
    v = np.random.default_rng(0).normal(size=30)
    assert apply_A(pair, 0, v) @ v == pytest.approx(-1.5 * sp.gradient_sq(v))


def test_variable_coefficient_heat_from_field():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 20))
    a = CoefficientField(np.linspace(1, 2, 20)[:, None, None], ("i", "j"), constant=False)
    pair = heat_dirichlet_make(a, None, space=sp)
    assert pair.declared.theta == pytest.approx(2.0)
    v = np.random.default_rng(1).normal(size=20)
    assert apply_A(pair, 0, v) @ v < 0


def test_neumann_preserves_constants_and_fits_trace_constant():
    sp = build_space(SpaceConfig("fd-neumann-interval", 41))
    pair = heat_neumann_make(1.0, np.array([[0.3]]), space=sp)
    assert np.allclose(apply_A(pair, 0, np.ones(41)), 0.0)
    assert pair.info["C_b"] == pytest.approx(0.3)
    assert pair.info["D_b"] == 0.0
    samples = np.random.default_rng(2).normal(size=(50, 41))
    c = neumann_trace_fit(pair, samples, 0.5)
    assert math.isfinite(c) and c >= 0.0


@pytest.mark.parametrize("kind", ["fd-dirichlet-interval", "fourier-torus"])
def test_burgers_convection_conserves_energy(kind):
    n = 31 if kind == "fourier-torus" else 40
    sp = build_space(SpaceConfig(kind, n, lengths=(2 * math.pi,) if kind == "fourier-torus" else (1.0,),
                                 v_norm="seminorm"))
    pair = burgers_make(0.7, sp, viscosity=0.0)
    V = np.random.default_rng(3).normal(size=(100, n)) * 5
    pairing = np.sum(apply_A(pair, 0, V) * V, axis=1)
    assert np.max(np.abs(pairing)) < 1e-10 * np.max(np.abs(V)) ** 3
    assert np.max(np.abs(b_adjoint_v(pair, 0, V))) < 1e-10 * np.max(h_norm(sp, V)) ** 2


def test_burgers_rejects_gamma_beyond_root_two():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 10, v_norm="seminorm"))
    with pytest.raises(ValueError, match="gamma"):
        burgers_make(1.5, sp)
    burgers_make(1.5, sp, declare_theta=False)


def test_navier_stokes_output_divergence_free():
    sp = build_space(SpaceConfig("fourier-torus-2d-vector", 16, lengths=(2 * math.pi,)))
    pair = navier_stokes_2d_make(0.1, np.array([[1.0, 0.5]]), sp)
    rng = np.random.default_rng(4)
    V = np.stack([sp.project_admissible(x) for x in rng.normal(size=(5, sp.n))])
    out = pair.drift(0, V) / sp.h_weights
    assert np.max(np.abs(divergence(sp, out))) < 1e-10
    conv = pair.convection_fn(0, V)
    assert np.max(np.abs(np.sum(conv * V, axis=1))) < 1e-10


def test_navier_stokes_rejects_compressible_noise_field():
    sp = build_space(SpaceConfig("fourier-torus-2d-vector", 8, lengths=(2 * math.pi,)))
    x = np.arange(8) * 2 * math.pi / 8
    X, _ = np.meshgrid(x, x, indexing="ij")
    b = np.zeros((1, 2, 8, 8))
    b[0, 0] = np.sin(X)  # d/dx sin x != 0
    with pytest.raises(ValueError, match="divergence"):
        navier_stokes_2d_make(1.0, b, sp)
    b[0, 0] = 0.0
    b[0, 1] = np.sin(X)  # depends on x only: divergence free
    navier_stokes_2d_make(1.0, b, sp)


def test_system_requires_symmetric_lambda():
    sp = build_space(SpaceConfig("fd-grid-rd", 5, dim=1, components=2))
    a = np.einsum("ij,ab->ijab", np.eye(1), np.eye(2))
    s = np.zeros((1, 1, 2, 2))
    lam = np.zeros((1, 1, 2, 2))
    lam[0, 0, 0, 1] = 1.0
    with pytest.raises(ValueError, match="symmetric"):
        system_make(a, s, lam, space=sp)


def test_system_decouples_into_heat_for_diagonal_coefficients():
    sp2 = build_space(SpaceConfig("fd-grid-rd", 12, dim=1, components=2))
    sp1 = build_space(SpaceConfig("fd-dirichlet-interval", 12))
    a = np.einsum("ij,ab->ijab", np.eye(1), np.eye(2))
    pair2 = system_make(a, np.zeros((1, 1, 2, 2)), space=sp2)
    pair1 = heat_dirichlet_make(1.0, None, space=sp1)
    u = np.random.default_rng(5).normal(size=(2, 12))
    # component-major layout: all nodes of component 0, then component 1
    e2 = apply_A(pair2, 0, u.ravel()) @ u.ravel()
    e1 = sum(apply_A(pair1, 0, x) @ x for x in u)
    assert e2 == pytest.approx(e1, rel=1e-12)


def test_higher_order_checks():
    assert multi_indices(2, 2) == [(0, 2), (1, 1), (2, 0)]
    with pytest.raises(ValueError, match="order"):
        higher_order_make(2, 1.0, [0.1], torus(9))
    with pytest.raises(ValueError, match="exceeds"):
        higher_order_make(3, 1.0, [0.1], torus(5, order=3))
    pair = higher_order_make(2, 1.0, [0.3], torus(11, order=2))
    v = np.zeros(11)
    v[1] = 1.0
    # d^4 cos x = cos x, so <A v, v> = -|v|^2
    assert apply_A(pair, 0, v) @ v == pytest.approx(-math.pi)


def test_lower_order_form_fit_is_finite_and_decreases_with_eps():
    sp = torus(15, order=2)
    samples = np.random.default_rng(6).normal(size=(200, 15))
    c1 = lower_order_form_fit(sp, [1.0, 0.5], 1, 0.1, samples)
    c2 = lower_order_form_fit(sp, [1.0, 0.5], 1, 1.0, samples)
    assert 0.0 <= c2 <= c1 < math.inf


def test_p_laplace_validation_and_homogeneity():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 20, alpha=3.0))
    assert p_laplace_gamma_limit(3.0) == pytest.approx(16 / 9)
    with pytest.raises(ValueError, match="exceeds"):
        p_laplace_make(3.0, [1.5], space=sp)
    with pytest.raises(ValueError, match="alpha"):
        p_laplace_make(4.0, [0.1], space=sp)
    pair = p_laplace_make(3.0, [0.5], space=sp)
    v = np.random.default_rng(7).normal(size=20)
    # A is (alpha-1)-homogeneous and <A v, v> = -|grad v|_alpha^alpha
    assert np.allclose(apply_A(pair, 0, 2 * v), 4 * apply_A(pair, 0, v))
    assert apply_A(pair, 0, v) @ v == pytest.approx(-v_norm(sp, v) ** 3)


@pytest.mark.parametrize("bad", [np.nan, np.inf])
def test_non_finite_states_rejected(bad):
    sp = torus()
    pair = spectral_example_make(0.5, sp)
    v = np.ones(sp.n)
    v[2] = bad
    with pytest.raises(ValueError):
        apply_A(pair, 0, v)
    with pytest.raises(ValueError):
        apply_B(pair, 0, v)


def test_coefficient_csv_round_trip(tmp_path):
    path = tmp_path / "a.csv"
    path.write_text("g0,i,j,alpha,beta,k,value\n"
                    "0,0,0,0,0,0,1.5\n"
                    "# comment\n"
                    "2,0,0,0,0,0,2.5\n", encoding="utf-8")
    f = load_coefficient_csv(path, {"i": 1, "j": 1}, grid_shape=(3,))
    assert not f.constant
    assert f.values[:, 0, 0].tolist() == [1.5, 0.0, 2.5]
    const = tmp_path / "b.csv"
    const.write_text("i,j,alpha,beta,k,value\n0,0,0,0,1,0.25\n1,0,0,0,0,0.5\n", encoding="utf-8")
    b = load_coefficient_csv(const, {"i": 2, "k": 2})
    assert b.values.tolist() == [[0.0, 0.25], [0.5, 0.0]]


def test_coefficient_csv_errors(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("i,j,value\n", encoding="utf-8")
    with pytest.raises(ValueError, match="header"):
        load_coefficient_csv(p, {"i": 1, "j": 1})
    p.write_text("i,j,alpha,beta,k,value\n0,0,1,0,0,1.0\n", encoding="utf-8")
    with pytest.raises(ValueError, match="must be 0"):
        load_coefficient_csv(p, {"i": 1, "j": 1})
    p.write_text("i,j,alpha,beta,k,value\n0,0,0,0,0,nan\n", encoding="utf-8")
    with pytest.raises(ValueError, match="non-finite"):
        load_coefficient_csv(p, {"i": 1, "j": 1})


@settings(max_examples=40, deadline=None)
@given(gamma=st.floats(-1.4, 1.4), seed=st.integers(0, 10 ** 6))
def test_burgers_noise_is_skew(gamma, seed):
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 24, v_norm="seminorm"))
    pair = burgers_make(gamma, sp)
    v = np.random.default_rng(seed).normal(size=24)
    assert abs(b_adjoint_v(pair, 0, v)[0]) <= 1e-12 * (1 + h_norm(sp, v) ** 2)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(0.1, 5), b=st.floats(-2, 2), seed=st.integers(0, 10 ** 6))
def test_linear_pairs_are_linear(a, b, seed):
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 16))
    pair = heat_dirichlet_make(a, np.array([[b]]), space=sp)
    rng = np.random.default_rng(seed)
    u, v = rng.normal(size=(2, 16))
    lhs = apply_A(pair, 0, 2 * u - 3 * v)
    rhs = 2 * apply_A(pair, 0, u) - 3 * apply_A(pair, 0, v)
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.max(np.abs(rhs))))
