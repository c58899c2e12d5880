import csv
import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ktube.cosine import visible
from ktube.dynamics import (
    hits_up_to, krw_step, krw_trajectory, ksb_position, landing_samples, simulate_ensemble, start_point,
)
from ktube.errors import InvalidParams, OutOfRange, StuckPoint
from ktube.geometry import boundary_point_at, build_tube, contains
from ktube.rng import Stream

from .test_geometry import ALL_SPECS, CYL3, PKNOT, RCOS3, STRIP

FLAT = {"family": "CosineStrip2D", "dimension": 2, "params": {"width": 1.0, "amplitude": 0.0}}


def _walk(spec, seed, n):
    t = build_tube(spec, seed)
    return t, krw_trajectory(t, start_point(t, seed, 0), n, Stream(seed, 0))


@given(st.sampled_from(ALL_SPECS), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_trajectory_invariants(spec, seed):
    t, tr = _walk(spec, seed, 200)
    tau, pos = tr.tau, tr.positions
    assert tau[0] == 0.0
    assert np.all(np.diff(tau) > 0)
    assert np.allclose(np.diff(tau), np.linalg.norm(np.diff(pos, axis=0), axis=1), rtol=0, atol=1e-9)
    hits = tr.hits
    assert all(h.regular for h in hits)
    for k in range(20):
        assert visible(t, hits[k], hits[k + 1])
        c = tr.chord(k)
        assert c.length > 0 and abs(c.horiz) <= c.length


def test_zero_steps():
    t = build_tube(CYL3, 0)
    xi = start_point(t, 0, 0)
    tr = krw_trajectory(t, xi, 0, Stream(0, 0))
    assert tr.n_steps == 0
    assert list(tr.tau) == [0.0]
    assert np.array_equal(tr.positions[0], xi.position)


def test_start_must_be_regular():
    t = build_tube(PKNOT, 3)
    _, _, ka, kr = t.arrays()
    i = int(np.searchsorted(ka, 0.0))
    with pytest.raises(InvalidParams):
        krw_trajectory(t, boundary_point_at(t, [ka[i], kr[i], 0.0]), 5, Stream(0))


@pytest.mark.parametrize("spec", [CYL3, STRIP, RCOS3, PKNOT])
def test_reproducible_and_stepwise(spec):
    t = build_tube(spec, 4)
    xi = start_point(t, 4, 2)
    a = krw_trajectory(t, xi, 50, Stream(4, 2))
    b = krw_trajectory(build_tube(spec, 4), xi, 50, Stream(4, 2))
    assert a.positions.tobytes() == b.positions.tobytes()
    assert a.tau.tobytes() == b.tau.tobytes()
    rng = Stream(4, 2)
    x = xi
    for k in range(50):
        x, chord = krw_step(t, x, rng)
        assert np.array_equal(x.position, a.positions[k + 1])
        assert chord.length == pytest.approx(a.tau[k + 1] - a.tau[k], abs=1e-12)
    other = krw_trajectory(t, xi, 50, Stream(4, 3))
    assert not np.array_equal(other.positions, a.positions)


def test_ksb_interpolation():
    t, tr = _walk(RCOS3, 5, 300)
    for k in range(0, 300, 17):
        x, _ = ksb_position(tr, tr.tau[k])
        assert np.array_equal(x, tr.positions[k])
        mid, v = ksb_position(tr, 0.5 * (tr.tau[k] + tr.tau[k + 1]))
        assert contains(t, mid)
        assert v == pytest.approx((tr.positions[k + 1] - tr.positions[k]) / (tr.tau[k + 1] - tr.tau[k]))
    rng = np.random.default_rng(0)
    for _ in range(200):
        s, u = np.sort(rng.uniform(0, tr.tau[-1], 2))
        xs, _ = ksb_position(tr, s)
        xu, _ = ksb_position(tr, u)
        dist = np.linalg.norm(xu - xs)
        assert dist <= (u - s) + 1e-9
        if hits_up_to(tr, s) == hits_up_to(tr, u):
            assert dist == pytest.approx(u - s, abs=1e-9)
    with pytest.raises(OutOfRange):
        ksb_position(tr, tr.tau[-1])
    with pytest.raises(OutOfRange):
        ksb_position(tr, -1.0)


def test_hits_up_to():
    _, tr = _walk(CYL3, 1, 100)
    assert hits_up_to(tr, 0.0) == 0
    assert hits_up_to(tr, np.nextafter(tr.tau[1], 0)) == 0
    for k in (1, 7, 99):
        assert hits_up_to(tr, tr.tau[k]) == k
        n = hits_up_to(tr, tr.tau[k] + 1e-3)
        assert tr.tau[n] <= tr.tau[k] + 1e-3 < tr.tau[n + 1]
    with pytest.raises(OutOfRange):
        hits_up_to(tr, tr.tau[-1])


@pytest.mark.parametrize("spec", [CYL3, PKNOT, {"family": "StraightCylinder", "dimension": 4,
                                                "params": {"radius": 1.0}}])
def test_worker_count_independence(spec):
    t = build_tube(spec, 9)
    runs = [simulate_ensemble(t, 13, 400, 9, workers=w, record_positions=True) for w in (1, 4, 8)]
    fresh = simulate_ensemble(build_tube(spec, 9), 13, 400, 9, workers=3)
    for r in runs[1:] + [fresh]:
        assert np.array_equal(r.alpha, runs[0].alpha)
        assert np.array_equal(r.tau, runs[0].tau)
    head = simulate_ensemble(t, 5, 400, 9)
    tail = simulate_ensemble(t, 8, 400, 9, first_index=5)
    assert np.array_equal(np.vstack([head.alpha, tail.alpha]), runs[0].alpha)


def test_ensemble_row_is_the_single_trajectory():
    t = build_tube(RCOS3, 2)
    ens = simulate_ensemble(t, 3, 250, 2, record_positions=True)
    for i in range(3):
        tr = krw_trajectory(t, start_point(t, 2, i), 250, Stream(2, i))
        assert np.array_equal(tr.positions, ens.positions[i])
        assert np.array_equal(ens.trajectory(i).tau, tr.tau)
    tk = ens.tau[:, 100]
    assert np.array_equal(ens.ksb_alpha(tk), ens.alpha[:, 100])
    with pytest.raises(OutOfRange):
        ens.ksb_alpha(ens.tau[:, -1].max())


def test_start_points_in_init_window():
    t = build_tube(STRIP, 1)
    a = [start_point(t, 1, i).alpha for i in range(200)]
    assert min(a) >= -0.5 and max(a) <= 0.5


def test_stuck_point_after_retries():
    t = build_tube(CYL3, 0)
    xi = start_point(t, 0, 0)
    # flights longer than l_max = 1e6 * m_hat always fail once m_hat is tiny
    broken = dataclasses.replace(t, m_hat=1e-7)
    with pytest.raises(StuckPoint) as info:
        krw_trajectory(broken, xi, 3, Stream(0, 5))
    assert info.value.trajectory == 5
    assert info.value.step == 0


def test_landing_samples_match_single_steps():
    t = build_tube(CYL3, 0)
    xi = boundary_point_at(t, [0.0, 1.0, 0.0])
    y = landing_samples(t, xi, 20, Stream(3, 0))
    assert y.shape == (20, 3)
    assert np.allclose(np.hypot(y[:, 1], y[:, 2]), 1.0)
    assert np.all(y[:, 1] < 1.0)


def test_trajectory_csv(tmp_path):
    _, tr = _walk(CYL3, 1, 5)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["n", "alpha", "tau", "horiz", "length"]
    assert len(rows) == 7
    assert float(rows[3][1]) == tr.alpha[2]
    assert float(rows[3][4]) == pytest.approx(tr.tau[2] - tr.tau[1])


def test_cylinder_horizontal_jump_mean_zero():
    ens = simulate_ensemble(build_tube(CYL3, 3), 100, 10_000, 3)
    h = ens.horiz.reshape(-1, 1000).mean(axis=1)
    assert abs(h.mean()) < 3 * h.std(ddof=1) / math.sqrt(h.size)


def test_flat_strip_variance_grows_superlinearly():
    # robust scale: squared interquartile range of the displacement, per step
    ens = simulate_ensemble(build_tube(FLAT, 1), 1000, 10_000, 1)
    scale = []
    for n in (100, 1000, 10_000):
        s = ens.alpha[:, n] - ens.alpha[:, 0]
        q = np.subtract(*np.percentile(s, [75, 25]))
        scale.append(q * q / n)
    assert scale[0] < scale[1] < scale[2]
    assert scale[2] > 1.3 * scale[0]


@pytest.mark.parametrize("spec", [CYL3, STRIP, RCOS3, PKNOT,
                                  {"family": "NestedPair", "dimension": 3,
                                   "params": {"outer": {"family": "StraightCylinder", "params": {"radius": 2.0}},
                                              "inner_radius": 1.0}}],
                         ids=lambda s: s["family"])
def test_anomaly_rate(spec):
    ens = simulate_ensemble(build_tube(spec, 77), 1000, 10_000, 77)
    assert int(ens.anomalies.sum()) < 100
