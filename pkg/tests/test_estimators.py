import math
from functools import lru_cache

import numpy as np
import pytest

from ktube import estimators as E
from ktube.dynamics import simulate_ensemble
from ktube.errors import GeometryError, InsufficientData, OutOfRange
from ktube.geometry import build_tube
from ktube.oracles import b_quadrature, cylinder_mean_chord
from ktube.stats import normality_check

from ktube.acceptance import CYL3, CYL4, FLAT_STRIP, NESTED, PKNOT, RCOS3, WAVY_STRIP

FAMILIES = {"cyl3": CYL3, "cyl4": CYL4, "strip": WAVY_STRIP, "rcos": RCOS3, "pknot": PKNOT}


@lru_cache(maxsize=None)
def ens(spec_name, m, n, seed, positions=False):
    spec = {"flat": FLAT_STRIP, "nested": NESTED, **FAMILIES}[spec_name]
    return simulate_ensemble(build_tube(spec, seed), m, n, seed, record_positions=positions)


def test_chord_constant():
    assert E.chord_constant(2) == pytest.approx(math.pi)
    assert E.chord_constant(3) == pytest.approx(4.0)
    for d in range(2, 8):
        assert cylinder_mean_chord(1.0, d) * E.predicted_rate(build_tube(
            {"family": "StraightCylinder", "dimension": d, "params": {"radius": 1.0}}, 0)) == pytest.approx(1.0)


def test_predicted_rate_examples():
    assert E.predicted_rate(build_tube(CYL3, 0)) == pytest.approx(0.5, rel=1e-10)
    for r in (0.5, 1.0, 3.0):
        strip = build_tube({"family": "CosineStrip2D", "dimension": 2,
                            "params": {"width": r, "amplitude": 0.0, "wavenumber": 1.0}}, 0)
        assert E.predicted_rate(strip) == pytest.approx(2 / (math.pi * r), rel=1e-8)


def test_sigma2_needs_enough_data():
    e = ens("cyl3", 50, 3000, 1)
    with pytest.raises(InsufficientData):
        E.estimate_sigma2(e, 1000)
    e = ens("cyl3", 100, 1500, 1)
    with pytest.raises(InsufficientData):
        E.estimate_sigma2(e, 1000)


@pytest.mark.parametrize("seed", [3, 21])
def test_flat_strip_sigma2_flagged_divergent(seed):
    s = E.estimate_sigma2(ens("flat", 300, 5000, seed), 1000)
    assert s.info["flag"] == "Divergent"


@pytest.mark.parametrize("name", ["cyl3", "cyl4", "strip", "rcos"])
def test_finite_variance_families_stable(name):
    s = E.estimate_sigma2(ens(name, 300, 5000, 3), 1000)
    assert s.info["flag"] == "Stable"
    assert 0 < s.value < np.inf and s.std_error > 0


def test_d4_sigma2_matches_quadrature():
    e = ens("cyl4", 1000, 10_000, 2)
    b = b_quadrature(e.tube)
    drift, (h2,) = E.drift_and_moments(e, 1000, truncations=(np.inf,))
    assert h2.within(b)
    assert drift.within(0.0)
    s = E.estimate_sigma2(e, 1000)
    assert s.info["flag"] == "Stable"
    assert abs(s.info["slope_drift"]) < 0.05 or abs(s.info["slope_drift"]) < 3 * s.info["slope_drift_se"]


def test_sigma_hat2_errors_and_symmetry():
    e = ens("cyl3", 200, 3000, 4)
    with pytest.raises(OutOfRange):
        E.estimate_sigma_hat2(e, 1e6)
    with pytest.raises(OutOfRange):
        E.estimate_sigma_hat2(e, -1.0)
    with pytest.raises(InsufficientData):
        E.estimate_sigma_hat2(e.subset(range(50)), 100.0)
    s = E.estimate_sigma_hat2(e, 2000.0, burn_in=500)
    assert abs(s.info["mean_displacement"]) < 3 * s.info["mean_displacement_se"]
    assert s.value > 0


def test_rcos_sigma_hat2_stable_over_a_decade():
    e = ens("rcos", 400, 11_000, 5)
    a = E.estimate_sigma_hat2(e, 1e3, burn_in=1000)
    b = E.estimate_sigma_hat2(e, 1e4, burn_in=1000)
    assert 0 < a.value < np.inf and 0 < b.value < np.inf
    assert abs(a.value - b.value) < 3 * math.hypot(a.std_error, b.std_error)


@pytest.mark.parametrize("name", sorted(FAMILIES))
def test_drift_null_and_chord_rate_product(name):
    e = ens(name, 100, 3000, 7)
    drift, _ = E.drift_and_moments(e, 1000)
    assert drift.within(0.0)
    chord = E.estimate_mean_chord(e, 1000)
    # stationary mean chord is the inverse hit rate.  A short knot walk sees a
    # finite stretch of one realization, so average the tube over that stretch.
    window = (e.alpha.min(), e.alpha.max()) if name == "pknot" else None
    rate = E.predicted_rate(e.tube, window)
    assert chord.within(1.0 / rate, 4.0)


def test_mean_chord_needs_chords():
    with pytest.raises(InsufficientData):
        E.estimate_mean_chord(ens("cyl3", 2, 1200, 1), 1000)
    with pytest.raises(InsufficientData):
        E.estimate_mean_chord(ens("cyl3", 2, 1200, 1), 1200)


def test_strip_truncated_moment_grows_in_log_c():
    e = ens("flat", 300, 5000, 3)
    _, curve = E.drift_and_moments(e, 1000, truncations=(1.0, 10.0, 100.0))
    v = [p.value for p in curve]
    # the tail density r^2/(r^2+x^2)^(3/2) adds about 2 r^2 ln 10 per decade
    inc = np.diff(v)
    assert np.all(inc > 0)
    assert inc[1] > 0.5 * inc[0]
    assert E.truncation_gap(curve) > 0.01


def test_d4_truncated_moment_converges():
    _, curve = E.drift_and_moments(ens("cyl4", 1000, 10_000, 2), 1000)
    assert E.truncation_gap(curve) < 0.01


def test_tail_survival_strip():
    e = ens("flat", 300, 5000, 3)
    pts = E.tail_survival(e, [0.0, 0.5, 1.0, 3.0], burn_in=1000)
    assert pts[0].survival == 1.0
    for p in pts:
        assert p.covers(1.0 - p.x / math.sqrt(1.0 + p.x**2))
    assert E.tail_survival(np.array([1.0, -2.0, 3.0]), [1.5])[0].survival == pytest.approx(2 / 3)


def test_tail_slope_d4():
    assert E.tail_slope(ens("cyl4", 1000, 10_000, 2), 5.0, 50.0, burn_in=1000) < -2.8


def test_induced_chords_nested():
    e = ens("nested", 100, 2300, 41, True)
    s = E.induced_chord_stats(e.tube, e, 100)
    assert E.predicted_intersect_freq(e.tube) == pytest.approx(0.5, rel=1e-8)
    assert s.intersect_freq.within(0.5)
    assert s.position_ks().passed and s.direction_ks().passed
    # Cauchy: the induced chord mean is the inner cylinder mean chord
    m = s.induced_lengths.mean()
    assert m == pytest.approx(2.0, rel=0.02)


def test_induced_chords_needs_nested():
    e = ens("cyl3", 2, 1200, 1)
    with pytest.raises(GeometryError):
        E.induced_chord_stats(e.tube, e, 100)


def test_hit_histogram():
    with pytest.raises(InsufficientData):
        E.hit_histogram(ens("strip", 100, 3000, 6), E.BinSpec("alpha", 40), 1000)
    e = ens("strip", 100, 11_000, 8)
    r = E.hit_histogram(e, E.BinSpec("alpha", 40), 1000)
    assert r.passed and r.dof == 39


def test_diffusivity_report_cylinder():
    e = ens("cyl3", 200, 6000, 9)
    rep = E.diffusivity_report(e, 5000.0, burn_in=1000)
    d = rep.to_dict()
    for k, v in d.items():
        vals = v.values() if isinstance(v, dict) else [v]
        assert all(np.isfinite(x) for x in vals if isinstance(x, float)), k
    assert rep.predicted_rate == pytest.approx(0.5)
    assert rep.rate_n_over_t.within(0.5)
    assert abs(rep.identity_z) < 3
    assert rep.sigma_hat_sqrt_rate == pytest.approx(math.sqrt(rep.sigma2_discrete.value * 0.5))


def test_normality_cylinder_endpoints():
    e = ens("cyl3", 10_000, 10_000, 10)
    rep = normality_check(E.rescaled_endpoints(e, 10_000))
    assert rep.passed
    ratio = E.variance_ratio(e, 2500, 10_000)
    assert ratio.within(4.0)
