import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize

from spde_moments.gelfand import (
    SpaceConfig,
    build_space,
    dual_norm,
    duality_pair,
    h_inner,
    h_norm,
    v_norm,
)

KINDS = [
    SpaceConfig("fourier-torus", 9, lengths=(2 * math.pi,)),
    SpaceConfig("fd-dirichlet-interval", 20),
    SpaceConfig("fd-neumann-interval", 20),
    SpaceConfig("fd-grid-rd", 6, dim=2, components=2),
    SpaceConfig("fourier-torus-2d-vector", 8, lengths=(2 * math.pi,)),
]


def test_cosine_has_norm_sqrt_pi():
    sp = build_space(SpaceConfig("fourier-torus", 5, lengths=(2 * math.pi,)))
    e1 = np.zeros(5)
    e1[1] = 1.0
    assert h_norm(sp, e1) == pytest.approx(math.sqrt(math.pi), rel=1e-15)
    # |cos|_V^2 = pi (1 + 1)
    assert v_norm(sp, e1) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-14)


def test_dirichlet_sine_gradient_matches_continuum():
    n = 400
    sp = build_space(SpaceConfig("fd-dirichlet-interval", n, v_norm="seminorm"))
    x = np.arange(1, n + 1) / (n + 1)
    v = np.sin(np.pi * x)
    # |sin(pi x)|_H^2 = 1/2 and |pi cos(pi x)|^2 = pi^2 / 2
    assert h_norm(sp, v) ** 2 == pytest.approx(0.5, rel=1e-4)
    assert v_norm(sp, v) ** 2 == pytest.approx(math.pi ** 2 / 2, rel=1e-4)


def test_neumann_trapezoid_weights_integrate_constants():
    sp = build_space(SpaceConfig("fd-neumann-interval", 11, lengths=(3.0,)))
    assert h_norm(sp, np.ones(11)) ** 2 == pytest.approx(3.0)
    assert v_norm(sp, np.ones(11)) == pytest.approx(math.sqrt(3.0))


@pytest.mark.parametrize("cfg", KINDS, ids=lambda c: c.kind)
def test_riesz_represents_the_inner_product(cfg):
    sp = build_space(cfg)
    rng = np.random.default_rng(1)
    w, v = rng.normal(size=(2, sp.n))
    assert duality_pair(sp, sp.riesz(w), v) == pytest.approx(h_inner(sp, w, v), rel=1e-13)
    assert np.allclose(sp.unriesz(sp.riesz(w)), w)


@pytest.mark.parametrize("cfg", KINDS, ids=lambda c: c.kind)
def test_dual_norm_is_attained_and_bounds_pairings(cfg):
    sp = build_space(cfg)
    rng = np.random.default_rng(2)
    f = sp.riesz(sp.project_admissible(rng.normal(size=sp.n)))
    nf = dual_norm(sp, f)
    V = np.stack([sp.project_admissible(x) for x in rng.normal(size=(200, sp.n))])
    ratios = duality_pair(sp, f[None], V) / v_norm(sp, V)
    assert np.all(ratios <= nf * (1 + 1e-12))
    if sp.kind == "fourier-torus":
        gw = sp.h_weights * (sp.wavenumbers ** 2 + 1.0)
        vstar = f / gw
    elif sp.kind == "fourier-torus-2d-vector":
        return
    else:
        g = sp.stiffness.toarray() + np.diag(sp.h_weights)
        vstar = np.linalg.solve(g, f)
    assert duality_pair(sp, f, vstar) / v_norm(sp, vstar) == pytest.approx(nf, rel=1e-10)


def test_w1alpha_dual_norm_at_alpha_two_matches_gram():
    sp2 = build_space(SpaceConfig("fd-dirichlet-interval", 15, v_norm="seminorm"))
    f = np.random.default_rng(3).normal(size=15)
    gram = dual_norm(sp2, f)
    from spde_moments.gelfand import _w1a_dual_norm

    assert _w1a_dual_norm(f, sp2.spacing[0], 2.0) == pytest.approx(gram, rel=1e-8)


def test_w1alpha_dual_norm_is_the_supremum():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 8, alpha=3.0))
    f = np.random.default_rng(4).normal(size=8)
    nf = dual_norm(sp, f)
    best = 0.0
    for s in range(5):
        x0 = np.random.default_rng(s).normal(size=8)
        res = minimize(lambda v: -duality_pair(sp, f, v) / v_norm(sp, v), x0, method="BFGS")
        best = max(best, -res.fun)
    assert best <= nf * (1 + 1e-9)
    assert best == pytest.approx(nf, rel=1e-5)


def test_torus_seminorm_dual_of_constant_is_infinite():
    sp = build_space(SpaceConfig("fourier-torus", 5, lengths=(2 * math.pi,), v_norm="seminorm"))
    f = np.zeros(5)
    f[0] = 1.0
    assert dual_norm(sp, f) == math.inf
    f[0] = 0.0
    f[2] = 1.0
    assert math.isfinite(dual_norm(sp, f))


def test_navier_stokes_space_projection_is_idempotent_and_divergence_free():
    from spde_moments.operators import divergence

    sp = build_space(SpaceConfig("fourier-torus-2d-vector", 16, lengths=(2 * math.pi,)))
    v = np.random.default_rng(5).normal(size=sp.n)
    p = sp.project_admissible(v)
    assert np.allclose(sp.project_admissible(p), p, atol=1e-13)
    assert np.max(np.abs(divergence(sp, p))) < 1e-12


@pytest.mark.parametrize("bad, msg", [
    (SpaceConfig("nope", 4), "unknown space kind"),
    (SpaceConfig("fd-dirichlet-interval", 1), "n must be"),
    (SpaceConfig("fd-dirichlet-interval", 4, alpha=1.0), "alpha"),
    (SpaceConfig("fd-dirichlet-interval", 4, v_norm="h1"), "v_norm"),
    (SpaceConfig("fd-dirichlet-interval", 4, lengths=(-1.0,)), "positive"),
    (SpaceConfig("fourier-torus-2d-vector", 7), "even"),
    (SpaceConfig("fd-dirichlet-interval", 4, components=2), "components"),
])
def test_build_space_rejects(bad, msg):
    with pytest.raises(ValueError, match=msg):
        build_space(bad)


def test_wrong_length_state_rejected():
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 4))
    with pytest.raises(ValueError):
        h_norm(sp, np.ones(5))


vecs = st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=12)


@settings(max_examples=60, deadline=None)
@given(u=vecs, v=vecs, c=st.floats(-10, 10))
def test_norm_axioms_dirichlet(u, v, c):
    sp = build_space(SpaceConfig("fd-dirichlet-interval", 12))
    u, v = np.array(u), np.array(v)
    for nrm in (h_norm, v_norm):
        a, b, s = nrm(sp, u), nrm(sp, v), nrm(sp, u + v)
        assert s <= a + b + 1e-9 * (1 + a + b)
        assert nrm(sp, c * u) == pytest.approx(abs(c) * a, rel=1e-12, abs=1e-12)
    # Cauchy-Schwarz in H
    assert abs(h_inner(sp, u, v)) <= h_norm(sp, u) * h_norm(sp, v) * (1 + 1e-12) + 1e-12


@settings(max_examples=40, deadline=None)
@given(v=st.lists(st.floats(-100, 100), min_size=9, max_size=9))
def test_torus_v_norm_dominates_h_norm(v):
    sp = build_space(SpaceConfig("fourier-torus", 9, lengths=(2 * math.pi,)))
    v = np.array(v)
    assert v_norm(sp, v) >= h_norm(sp, v) * (1 - 1e-14)
