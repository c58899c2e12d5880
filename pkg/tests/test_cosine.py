import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats
from scipy.special import gamma

from ktube.cosine import eval_kernel, gamma_d, kernel_value, sample_cosine, sample_cosine_many, visible
from ktube.geometry import ball_volume, boundary_point_at, build_tube, profile, sample_boundary_uniform
from ktube.oracles import gamma_d_quadrature
from ktube.rng import Stream

from .test_geometry import ALL_SPECS, CYL3


@pytest.mark.parametrize("d, value", [(2, 0.5), (3, 1 / math.pi), (4, 3 / (4 * math.pi))])
def test_gamma_d_examples(d, value):
    assert gamma_d(d) == pytest.approx(value, rel=1e-14)


@pytest.mark.parametrize("d", range(2, 9))
def test_gamma_d_identities(d):
    assert gamma_d(d) == pytest.approx(gamma((d + 1) / 2) / math.pi ** ((d - 1) / 2), rel=1e-14)
    assert gamma_d(d) * ball_volume(d - 1) == pytest.approx(1.0, rel=1e-14)
    assert gamma_d_quadrature(d) == pytest.approx(gamma_d(d), rel=1e-10)


def _random_unit(rng, d):
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


@pytest.mark.parametrize("d", range(2, 9))
def test_samples_on_inward_half_sphere(d):
    n = _random_unit(np.random.default_rng(d), d)
    dirs, c = sample_cosine_many(n, d, Stream(d, 0), 20_000)
    assert np.all(np.abs(np.linalg.norm(dirs, axis=1) - 1) < 1e-12)
    assert np.all(dirs @ n > 0)
    assert np.allclose(dirs @ n, c, atol=1e-12)
    # the cosine law makes (1 - c^2)^((d-1)/2) uniform: it is the ball radius^(d-1)
    u = (1 - c * c) ** ((d - 1) / 2)
    assert stats.kstest(u, "uniform").statistic < 1.95 / math.sqrt(u.size)
    # no preferred tangential direction
    tang = dirs - np.outer(c, n)
    assert np.abs(tang.mean(axis=0)).max() < 5 / math.sqrt(u.size)


def test_d3_polar_angle():
    _, c = sample_cosine_many(np.array([0, 0, 1.0]), 3, Stream(1, 0), 100_000)
    assert stats.kstest(1 - c * c, "uniform").statistic < 1.95 / math.sqrt(c.size)


def test_d2_mean_cos():
    _, c = sample_cosine_many(np.array([0, 1.0]), 2, Stream(2, 0), 1_000_000)
    se = c.std(ddof=1) / math.sqrt(c.size)
    assert abs(c.mean() - math.pi / 4) < 3 * se


def test_single_and_batched_sampling_agree():
    n = np.array([0.0, 0.6, 0.8])
    r1, r2 = Stream(4, 1), Stream(4, 1)
    dirs, _ = sample_cosine_many(n, 3, r1, 5)
    for row in dirs:
        assert np.array_equal(row, sample_cosine(n, 3, r2).direction)


def test_bad_normal_rejected():
    with pytest.raises(ValueError):
        sample_cosine([0, 2.0, 0], 3, Stream(0))


def test_strip_kernel_hand_formula():
    strip = build_tube({"family": "CosineStrip2D", "dimension": 2, "params": {"width": 1.0, "amplitude": 0.0}}, 0)
    x = boundary_point_at(strip, [0.0, 0.0])
    for t in (0.0, 0.5, 3.0):
        y = boundary_point_at(strip, [t, 1.0])
        assert eval_kernel(strip, x, y) == pytest.approx(0.5 / (1 + t * t) ** 1.5, rel=1e-14)
    # same wall: no direct flight
    assert eval_kernel(strip, x, boundary_point_at(strip, [2.0, 0.0])) == 0.0


def test_blocked_pair_has_zero_kernel():
    t = build_tube({"family": "RotationalCosine", "dimension": 3,
                    "params": {"r0": 1.0, "amplitude": 0.9, "wavenumber": 1.0}}, 0)
    a0 = -t.phase
    x = boundary_point_at(t, [a0, 1.9, 0.0])
    y = boundary_point_at(t, [a0 + 2 * math.pi, -1.9, 0.0])
    assert kernel_value(3, x.position, x.normal_n, y.position, y.normal_n) > 0
    assert not visible(t, x, y)
    assert eval_kernel(t, x, y) == 0.0 == eval_kernel(t, y, x)


def test_non_regular_point_has_zero_kernel():
    t = build_tube({"family": "RotationalPoissonKnot", "dimension": 3,
                    "params": {"rate": 1.0, "r_min": 0.5, "r_max": 1.5}}, 3)
    _, _, ka, kr = t.arrays()
    i = int(np.searchsorted(ka, 0.0))
    knot = boundary_point_at(t, [ka[i], kr[i], 0.0])
    a = ka[i] + 0.1
    other = boundary_point_at(t, [a, -profile(t, a)[0], 0.0])
    assert not knot.regular and other.regular
    assert kernel_value(3, knot.position, knot.normal_n, other.position, other.normal_n) > 0
    assert eval_kernel(t, knot, other) == 0.0


@given(st.sampled_from(ALL_SPECS), st.integers(0, 2**31), st.integers(0, 10**5))
@settings(max_examples=150, deadline=None)
def test_kernel_symmetry(spec, seed, ev):
    t = build_tube(spec, seed)
    rng = Stream(seed, ev)
    x = sample_boundary_uniform(t, -3, 3, rng)
    y = sample_boundary_uniform(t, -3, 3, rng)
    k1, k2 = eval_kernel(t, x, y), eval_kernel(t, y, x)
    assert k1 >= 0
    assert abs(k1 - k2) <= 1e-12 * max(abs(k1), abs(k2))


def test_chord_endpoints_have_positive_kernel():
    from ktube.raycast import next_hit

    t = build_tube(CYL3, 0)
    rng = Stream(8, 0)
    for _ in range(100):
        x = sample_boundary_uniform(t, -1, 1, rng)
        v = sample_cosine(x.normal_n, 3, rng).direction
        y = next_hit(t, x.position, v).hit
        assert eval_kernel(t, x, y) > 0
