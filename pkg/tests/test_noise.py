import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from spde_moments.noise import WienerStream, coarsen, path_increments, refine, sample_increments


def test_increment_moments_at_a_million_samples():
    dt = 1e-3
    dW = sample_increments(WienerStream(4, dt, 123), 250_000).ravel()
    assert dW.size == 10 ** 6
    se_mean = math.sqrt(dt / dW.size)
    assert abs(dW.mean()) < 5 * se_mean
    # the sample variance of n normals has relative sd sqrt(2/n)
    assert dW.var() / dt == pytest.approx(1.0, abs=5 * math.sqrt(2 / dW.size))
    assert abs(stats.skew(dW)) < 5 * math.sqrt(6 / dW.size)
    assert abs(stats.kurtosis(dW)) < 5 * math.sqrt(24 / dW.size)


def test_coordinates_and_steps_uncorrelated():
    dW = sample_increments(WienerStream(3, 1.0, 7), 200_000)
    c = np.corrcoef(dW.T)
    assert np.max(np.abs(c - np.eye(3))) < 0.015
    lag = np.corrcoef(dW[:-1, 0], dW[1:, 0])[0, 1]
    assert abs(lag) < 0.015


def test_streams_are_deterministic_and_distinct():
    a = sample_increments(WienerStream(2, 0.01, 5, stream_id=3), 100)
    b = sample_increments(WienerStream(2, 0.01, 5, stream_id=3), 100)
    c = sample_increments(WienerStream(2, 0.01, 5, stream_id=4), 100)
    d = sample_increments(WienerStream(2, 0.01, 6, stream_id=3), 100)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def test_prefix_property():
    short = sample_increments(WienerStream(2, 0.01, 9), 10)
    long = sample_increments(WienerStream(2, 0.01, 9), 50)
    assert np.array_equal(short, long[:10])


def test_path_increments_stack_per_path_streams():
    stack = path_increments(2, 0.01, 11, [0, 5, 2], 20)
    for row, pid in enumerate([0, 5, 2]):
        assert np.array_equal(stack[row], sample_increments(WienerStream(2, 0.01, 11, pid), 20))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 63), sid=st.integers(0, 10 ** 6), levels=st.integers(1, 5),
       log_dt=st.integers(-14, 0))
def test_bridge_refinement_is_bit_exact(seed, sid, levels, log_dt):
    stream = WienerStream(2, 2.0 ** log_dt, seed, sid)
    coarse = sample_increments(stream, 16)
    fine = coarse
    for _ in range(levels):
        fine = refine(fine, stream)
        stream = stream.halved()
    back = fine
    for _ in range(levels):
        back = coarsen(back)
    assert np.array_equal(back, coarse)


def test_refined_increments_have_half_variance_and_bridge_independence():
    stream = WienerStream(1, 0.01, 2)
    coarse = sample_increments(stream, 200_000)
    fine = refine(coarse, stream)
    assert fine.var() / 0.005 == pytest.approx(1.0, abs=0.02)
    # the bridge term is independent of the coarse increment
    xi = fine[0::2, 0] - coarse[:, 0] / 2
    assert abs(np.corrcoef(xi, coarse[:, 0])[0, 1]) < 0.015
    assert xi.var() / (0.01 / 4) == pytest.approx(1.0, abs=0.02)


def test_refine_validates_shape_and_level():
    stream = WienerStream(2, 0.1, 0)
    with pytest.raises(ValueError):
        refine(np.zeros((4, 3)), stream)
    with pytest.raises(ValueError):
        sample_increments(stream.halved(), 4)
    with pytest.raises(ValueError):
        coarsen(np.zeros((3, 2)))


@pytest.mark.parametrize("kw", [dict(k_trunc=0), dict(dt=0.0), dict(dt=math.nan), dict(seed=-1),
                                dict(stream_id=-2)])
def test_stream_validation(kw):
    args = dict(k_trunc=1, dt=0.1, seed=0)
    args.update(kw)
    with pytest.raises(ValueError):
        WienerStream(**args)
