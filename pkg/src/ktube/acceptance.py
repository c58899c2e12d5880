"""The acceptance suite: eleven desk-scale checks against closed-form oracles.

Run it with ``python3 -m ktube.acceptance`` or through pytest
(``tests/test_acceptance.py``).  Each check returns a :class:`CriterionResult`;
ensembles shared between checks are simulated once and cached.
"""

from __future__ import annotations

import contextlib
import filecmp
import io
import json
import math
import sys
import tempfile
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np

from . import estimators as est
from .cosine import sample_cosine_many
from .dynamics import Ensemble, simulate_ensemble
from .experiments import RunConfig, expected_cosine, kernel_symmetry, run_kernel_check
from .geometry import TubeModel, build_tube
from .oracles import b_quadrature, cylinder_mean_chord
from .rng import Stream
from .stats import Estimate, ks_uniform, normality_check

CYL3 = {"family": "StraightCylinder", "dimension": 3, "params": {"radius": 1.0}}
CYL4 = {"family": "StraightCylinder", "dimension": 4, "params": {"radius": 1.0}}
FLAT_STRIP = {"family": "CosineStrip2D", "dimension": 2, "params": {"width": 1.0, "amplitude": 0.0, "wavenumber": 1.0}}
WAVY_STRIP = {"family": "CosineStrip2D", "dimension": 2, "params": {"width": 1.0, "amplitude": 1.0, "wavenumber": 1.0}}
RCOS3 = {"family": "RotationalCosine", "dimension": 3, "params": {"r0": 1.0, "amplitude": 0.5, "wavenumber": 1.0}}
NESTED = {"family": "NestedPair", "dimension": 3,
          "params": {"outer": {"family": "StraightCylinder", "dimension": 3, "params": {"radius": 2.0}},
                     "inner_radius": 1.0}}
PKNOT = {"family": "RotationalPoissonKnot", "dimension": 3, "params": {"rate": 1.0, "r_min": 0.5, "r_max": 1.5}}

BURN = 1000
T_HORIZON = 1e4


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    checks: dict[str, bool] = field(default_factory=dict)
    details: dict[str, str] = field(default_factory=dict)
    seconds: float = 0.0
    budget: float = math.inf

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        failed = [k for k, ok in self.checks.items() if not ok]
        tail = f" (failed: {', '.join(failed)})" if failed else ""
        return f"{status} criterion {self.number:2d}: {self.title} [{self.seconds:.1f}s]{tail}"


class _Checks:
    def __init__(self):
        self.checks: dict[str, bool] = {}
        self.details: dict[str, str] = {}

    def add(self, name: str, ok: bool, detail: str) -> None:
        self.checks[name] = bool(ok)
        self.details[name] = detail

    def estimate(self, name: str, e: Estimate, target: float, k: float = 3.0) -> None:
        self.add(name, e.within(target, k), f"{e.value:.6g} +/- {e.std_error:.3g} vs {target:.6g} "
                                            f"(z = {e.zscore(target):+.2f})")


@lru_cache(maxsize=None)
def _tube(name: str, seed: int) -> TubeModel:
    return build_tube(globals()[name], seed)


@lru_cache(maxsize=None)
def _ensemble(name: str, m: int, n: int, seed: int, positions: bool = False) -> Ensemble:
    return simulate_ensemble(_tube(name, seed), m, n, seed, record_positions=positions)


def clear_cache() -> None:
    _diffusivity.cache_clear()
    _ensemble.cache_clear()
    _tube.cache_clear()


# ---------------------------------------------------------------------------


def criterion_1(c: _Checks) -> None:
    n = np.array([0.0, 0.0, 1.0])
    _, cos3 = sample_cosine_many(n, 3, Stream(101, 0), 100_000)
    ks = ks_uniform(1.0 - cos3 * cos3)
    c.add("d3_sin2_ks", ks.passed, f"D = {ks.statistic:.5f} < {ks.threshold:.5f}")
    _, cos2 = sample_cosine_many(np.array([0.0, 1.0]), 2, Stream(102, 0), 1_000_000)
    m = Estimate(float(cos2.mean()), float(cos2.std(ddof=1) / math.sqrt(cos2.size)), cos2.size, "mean")
    c.estimate("d2_mean_cos", m, math.pi / 4)
    c.add("d2_expected_value", abs(expected_cosine(2) - math.pi / 4) < 1e-14, f"{expected_cosine(2):.15f}")


def criterion_2(c: _Checks) -> None:
    for label, name, target in (("strip", "FLAT_STRIP", math.pi / 2), ("cylinder", "CYL3", 2.0)):
        ens = _ensemble(name, 100, 11_000, 21, name == "CYL3")
        chord = est.estimate_mean_chord(ens, BURN, min_chords=1_000_000)
        z, sec = est.tube_averages(ens.tube)
        analytic = est.chord_constant(ens.tube.dimension) * sec / z
        c.estimate(f"{label}_mean_chord", chord, target)
        c.estimate(f"{label}_vs_analytic", chord, analytic)
    c.add("cylinder_oracle", abs(cylinder_mean_chord(1.0, 3) - 2.0) < 1e-12, f"{cylinder_mean_chord(1.0, 3):.15f}")


@lru_cache(maxsize=None)
def _diffusivity(name: str) -> est.DiffusivityReport:
    ens = _ensemble(name, 1000, 11_000, 7)
    return est.diffusivity_report(ens, T_HORIZON, BURN)


def criterion_3(c: _Checks) -> None:
    for label, name in (("cylinder", "CYL3"), ("rot_cosine", "RCOS3")):
        rep = _diffusivity(name)
        c.estimate(f"{label}_rate", rep.rate_n_over_t, rep.predicted_rate)
    c.add("cylinder_rate_is_half", abs(_diffusivity("CYL3").predicted_rate - 0.5) < 1e-12,
          f"{_diffusivity('CYL3').predicted_rate:.15f}")


def criterion_4(c: _Checks) -> None:
    for label, name in (("cylinder", "CYL3"), ("rot_cosine", "RCOS3")):
        rep = _diffusivity(name)
        c.add(f"{label}_identity", abs(rep.identity_z) <= 3.0,
              f"sigma_hat2 {rep.sigma_hat2_time.value:.5g} vs sigma2*rate {rep.identity_product.value:.5g} "
              f"(z = {rep.identity_z:+.2f})")
    rep = _diffusivity("CYL3")
    c.estimate("cylinder_sigma2_vs_b", rep.sigma2_discrete, b_quadrature(_tube("CYL3", 7)))


def criterion_5(c: _Checks) -> None:
    n, burn = 1000, 500
    for label, name in (("strip", "WAVY_STRIP"), ("rot_cosine", "RCOS3")):
        ens = _ensemble(name, 10_000, burn + 4 * n, 11)
        rep = normality_check(est.rescaled_endpoints(ens, 4 * n, burn))
        c.add(f"{label}_skewness", abs(rep.skewness) < 3 * rep.skewness_se,
              f"{rep.skewness:+.4f} (se {rep.skewness_se:.4f})")
        c.add(f"{label}_kurtosis", abs(rep.excess_kurtosis) < 3 * rep.kurtosis_se,
              f"{rep.excess_kurtosis:+.4f} (se {rep.kurtosis_se:.4f})")
        c.estimate(f"{label}_variance_ratio", est.variance_ratio(ens, n, 4 * n, burn), 4.0)


def criterion_6(c: _Checks) -> None:
    ens = _ensemble("FLAT_STRIP", 100, 11_000, 21)
    for p in est.tail_survival(ens, [0.5, 1.0, 2.0, 5.0], BURN):
        exact = 1.0 - p.x / math.hypot(1.0, p.x)
        c.add(f"survival_x={p.x:g}", p.covers(exact),
              f"{p.survival:.5f} in [{p.lower:.5f}, {p.upper:.5f}] vs {exact:.5f} (n = {p.n})")
    _, curve = est.drift_and_moments(ens, BURN)
    vals = [e.value for e in curve]
    gap = est.truncation_gap(curve)
    c.add("truncated_m2_grows", vals[0] < vals[1] < vals[2], ", ".join(f"{v:.4g}" for v in vals))
    c.add("no_convergence", gap >= 0.01, f"gap {gap:.3%} (>= 1% expected)")


def criterion_7(c: _Checks) -> None:
    ens = _ensemble("CYL4", 100, 11_000, 31)
    slope = est.tail_slope(ens, 2.0, 20.0, burn_in=BURN)
    c.add("loglog_slope", slope <= -2.8, f"{slope:.3f} <= -2.8")
    _, curve = est.drift_and_moments(ens, BURN)
    gap = est.truncation_gap(curve)
    c.add("truncated_m2_converges", gap < 0.01, f"gap {gap:.3%} (< 1%)")


def criterion_8(c: _Checks) -> None:
    ens = _ensemble("NESTED", 100, 2_300, 41, True)
    law = est.induced_chord_stats(ens.tube, ens, 100)
    c.estimate("intersect_freq", law.intersect_freq, est.predicted_intersect_freq(ens.tube))
    n = law.crossing_positions.shape[0]
    c.add("crossings", n >= 100_000, f"{n} crossings")
    for name, ks in (("position_ks", law.position_ks()), ("direction_ks", law.direction_ks())):
        c.add(name, ks.passed, f"D = {ks.statistic:.5f} < {ks.threshold:.5f}")


def criterion_9(c: _Checks) -> None:
    for label, name, bins in (("cylinder_angle", "CYL3", est.BinSpec("angle", 20)),
                              ("strip_alpha", "WAVY_STRIP", est.BinSpec("alpha", 40))):
        ens = _ensemble(name, 100, 11_000, 21, bins.kind == "angle")
        chi = est.hit_histogram(ens, bins, BURN, min_hits=1_000_000)
        c.add(label, chi.passed, f"chi2 {chi.statistic:.2f} < {chi.threshold:.2f} (dof {chi.dof}, "
                                 f"{int(chi.observed.sum())} hits)")


def criterion_10(c: _Checks) -> None:
    asym = kernel_symmetry(_tube("RCOS3", 51), 51, 10_000)
    c.add("symmetry_rot_cosine", asym <= 1e-12, f"max relative asymmetry {asym:.3g}")
    res = run_kernel_check(_tube("CYL3", 52), RunConfig("kernel-check", CYL3, 52, samples=1_000_000))
    rows = {r["statistic"]: r for r in res.tables["kernel_check"]}
    for gate, stat in (("kernel_symmetry", "max_relative_asymmetry"), ("kernel_normalization", "kernel_mass"),
                       ("landing_chi2", "landing_chi2")):
        r = rows[stat]
        c.add(f"cylinder_{gate}", res.gates[gate], f"{stat} = {r['value']:.8g} {r['param']}".strip())


def criterion_11(c: _Checks) -> None:
    from .cli import main

    config = {"tube": PKNOT, "seed": 61, "trajectories": 40, "steps": 3000, "burn_in": 500}
    with tempfile.TemporaryDirectory() as tmp:
        tmpd = Path(tmp)
        cfg_path = tmpd / "run.json"
        cfg_path.write_text(json.dumps(config))
        runs = [("w1", 1), ("w4", 4), ("w8", 8), ("w1_rerun", 1)]
        for label, w in runs:
            with contextlib.redirect_stdout(io.StringIO()):
                code = main(["chord-stats", "--config", str(cfg_path), "--workers", str(w),
                             "--output-dir", str(tmpd / label)])
            c.add(f"exit_{label}", code == 0, f"exit status {code}")
        ref = sorted(p.name for p in (tmpd / "w1").glob("*.csv"))
        for label, _ in runs[1:]:
            names = sorted(p.name for p in (tmpd / label).glob("*.csv"))
            same = names == ref and all(filecmp.cmp(tmpd / "w1" / f, tmpd / label / f, shallow=False)
                                        for f in ref)
            c.add(f"identical_{label}", same, f"{len(ref)} CSV files compared byte for byte")


# (number, title, function, runtime budget in seconds)
CRITERIA: tuple[tuple[int, str, Callable[[_Checks], None], float], ...] = (
    (1, "cosine-law sampler", criterion_1, 5),
    (2, "mean chord", criterion_2, 30),
    (3, "hit rate and time change", criterion_3, 120),
    (4, "diffusivity identity", criterion_4, 600),
    (5, "invariance principle shape", criterion_5, 600),
    (6, "2D heavy tail", criterion_6, 60),
    (7, "d >= 4 tail bound", criterion_7, 120),
    (8, "induced-chord law", criterion_8, 300),
    (9, "invariant measure", criterion_9, 300),
    (10, "kernel properties", criterion_10, 120),
    (11, "determinism", criterion_11, 60),
)


def run_criterion(number: int) -> CriterionResult:
    num, title, fn, budget = CRITERIA[number - 1]
    c = _Checks()
    t0 = time.perf_counter()
    fn(c)
    dt = time.perf_counter() - t0
    c.add("runtime", dt < budget, f"{dt:.1f} s < {budget:g} s")
    return CriterionResult(num, title, all(c.checks.values()) and bool(c.checks), c.checks, c.details, dt, budget)


def main(argv=None) -> int:
    args = sys.argv[1:] if argv is None else list(argv)
    numbers = [int(a) for a in args] or [c[0] for c in CRITERIA]
    ok = True
    for num in numbers:
        r = run_criterion(num)
        print(r.line())
        for k, v in r.details.items():
            print(f"    {'ok ' if r.checks[k] else 'BAD'} {k}: {v}")
        ok &= r.passed
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
