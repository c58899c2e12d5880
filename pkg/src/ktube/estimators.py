"""Estimators turning trajectory ensembles into diffusion constants and chord laws.

Error bars follow two rules.  Statistics that are one number per trajectory
use the trajectory-level bootstrap or the plain standard error, because
trajectories are independent.  Statistics pooled along a trajectory use batch
means with batches of 1000 consecutive steps.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GeometryError, InsufficientData, InvalidParams, OutOfRange
from .dynamics import Ensemble
from .geometry import CYLINDER, POISSON_KNOT, TubeModel, slab_surface_area, slab_volume, sphere_area
from .rng import PURPOSE_BOOT, Stream
from .stats import (
    ChiSquareResult,
    Estimate,
    KSResult,
    batch_chi2,
    batch_means,
    bootstrap_se,
    ks_uniform,
    wilson_interval,
)

DEFAULT_BURN_IN = 1000
N_BOOT = 200
BATCH = 1000
DRIFT_TOL = 0.05


def chord_constant(d: int) -> float:
    """``C_d = sqrt(pi) Gamma((d+1)/2) d / Gamma(d/2 + 1)``; mean chord = C_d |section| / Z."""
    return math.exp(0.5 * math.log(math.pi) + math.lgamma((d + 1) / 2) - math.lgamma(d / 2 + 1)) * d


def _boot_rng(ens: Ensemble, tag: int) -> np.random.Generator:
    return Stream(ens.seed, tag).numpy_generator(PURPOSE_BOOT)


def _check_burn(ens: Ensemble, burn_in: int) -> None:
    if not 0 <= burn_in < ens.n_steps:
        raise InsufficientData(f"burn_in {burn_in} must be below the step count {ens.n_steps}")


# ---------------------------------------------------------------------------
# ergodic averages of the tube
# ---------------------------------------------------------------------------


def default_window(tube: TubeModel) -> tuple[float, float]:
    """An averaging window: whole periods, or 10^4 mean knot gaps."""
    base = tube.base
    if base.code == CYLINDER:
        return 0.0, 1.0
    if base.code == POISSON_KNOT:
        half = 5000.0 / base.par[0]
        return -half, half
    p = tube.period
    return 0.0, 4.0 * p


def tube_averages(tube: TubeModel, window: tuple[float, float] | None = None) -> tuple[float, float]:
    """``(Z, mean section volume)`` per unit length over ``window``."""
    a, b = window if window is not None else default_window(tube)
    z = slab_surface_area(tube, a, b) / (b - a)
    sec = slab_volume(tube, a, b) / (b - a)
    return z, sec


def predicted_rate(tube: TubeModel, window: tuple[float, float] | None = None) -> float:
    """Long-run hits per unit time, ``Z / (C_d * mean section)``."""
    z, sec = tube_averages(tube, window)
    return z / (chord_constant(tube.dimension) * sec)


# ---------------------------------------------------------------------------
# diffusivity
# ---------------------------------------------------------------------------


def _dyads(span: int, lo_exp: int = 6) -> np.ndarray:
    top = int(math.floor(math.log2(span)))
    lo = min(lo_exp, max(top - 3, 0))
    return 2 ** np.arange(lo, top + 1)


def _wls_slope(m: np.ndarray, var: np.ndarray) -> float:
    # Var(S_m) = c + s m with error sd proportional to m: regress var/m on 1/m
    if m.size == 1:
        return float(var[0] / m[0])
    x = 1.0 / m
    y = var / m
    xm = x.mean()
    beta = np.sum((x - xm) * (y - y.mean())) / np.sum((x - xm) ** 2)
    return float(y.mean() - beta * xm)


def _slope_stats(disp: np.ndarray, m: np.ndarray) -> np.ndarray:
    var = disp.var(axis=0, ddof=1)
    s = _wls_slope(m, var)
    half = max(m.size // 2, 2)
    s_lo = _wls_slope(m[:half], var[:half])
    s_hi = _wls_slope(m[-half:], var[-half:])
    return np.array([s, (s_hi - s_lo) / abs(s)])


def _tail_decades(ens: Ensemble, burn_in: int) -> tuple[np.ndarray, np.ndarray]:
    """``E[h^2 1{c_k < |h| <= 10 c_k}]`` for ``c_k = 10 m_hat, 100 m_hat`` with batch-means SEs."""
    h = np.abs(ens.horiz[:, burn_in:])
    s = ens.tube.m_hat
    vals, ses = [], []
    for lo in (10.0 * s, 100.0 * s):
        e = batch_means(np.where((h > lo) & (h <= 10.0 * lo), h * h, 0.0), BATCH)
        vals.append(e.value)
        ses.append(e.std_error)
    return np.array(vals), np.array(ses)


def estimate_sigma2(ens: Ensemble, burn_in: int = DEFAULT_BURN_IN, n_boot: int = N_BOOT) -> Estimate:
    """Per-step variance rate of ``xi_n . e``.

    Slope of ``Var(xi_{b+m}.e - xi_b.e)`` against ``m`` on dyadic checkpoints.
    ``info["flag"]`` is ``"Divergent"`` when either

    * the slopes fitted on the lower and upper halves of the dyads differ by
      more than 5%, significant at 3 bootstrap SE, or
    * the second moment of the jump keeps growing: the mass of ``h^2`` with
      ``|h|`` in the last decade ``(100, 1000] m_hat`` is significant at
      3 SE and at least half that of the decade before.  A tail
      ``x^-p`` with ``p > 2`` makes that ratio ``10^(2-p)``; a logarithmic
      divergence keeps it near 1.

    The second route is the sensitive one: under infinite-variance jumps the
    bootstrap SE of the dyadic drift is dominated by the same rare flights.
    """
    m_tot = ens.n_trajectories
    if m_tot < 100:
        raise InsufficientData(f"need >= 100 trajectories, got {m_tot}")
    if ens.n_steps < 2 * burn_in or ens.n_steps - burn_in < 2:
        raise InsufficientData("need n_steps >= 2 * burn_in")
    m = _dyads(ens.n_steps - burn_in)
    disp = ens.alpha[:, burn_in + m] - ens.alpha[:, [burn_in]]
    s, drift = _slope_stats(disp, m)
    se = bootstrap_se(disp, lambda d: _slope_stats(d, m), _boot_rng(ens, 1), n_boot)
    dec, dec_se = _tail_decades(ens, burn_in)
    ratio = dec[1] / dec[0] if dec[0] > 0 else 0.0
    growing = dec[1] > 3.0 * dec_se[1] and ratio >= 0.5
    divergent = (drift > DRIFT_TOL and drift > 3.0 * se[1]) or growing
    info = {"slope_drift": float(drift), "slope_drift_se": float(se[1]), "dyads": m.tolist(),
            "tail_decades": dec.tolist(), "tail_decades_se": dec_se.tolist(), "tail_decade_ratio": float(ratio),
            "flag": "Divergent" if divergent else "Stable"}
    return Estimate(float(s), float(se[0]), m_tot, "dyadic-wls", info)


def _time_displacement(ens: Ensemble, t: float, burn_in: int) -> np.ndarray:
    t0 = ens.tau[:, burn_in]
    if np.any(t0 + t >= ens.tau[:, -1]):
        raise OutOfRange(f"t = {t} exceeds the simulated time horizon of some trajectory")
    return ens.ksb_alpha(t0 + t) - ens.alpha[:, burn_in]


def estimate_sigma_hat2(ens: Ensemble, t: float, burn_in: int = 0, n_boot: int = N_BOOT) -> Estimate:
    """Per-unit-time variance rate ``Var(X_{s+t}.e - X_s.e) / t`` with ``s = tau_burn``."""
    if ens.n_trajectories < 100:
        raise InsufficientData("need >= 100 trajectories")
    if not t > 0:
        raise OutOfRange("t must be positive")
    x = _time_displacement(ens, t, burn_in)
    se = bootstrap_se(x, lambda v: v.var(ddof=1) / t, _boot_rng(ens, 2), n_boot)
    return Estimate(float(x.var(ddof=1) / t), float(se), x.size, "ensemble-variance",
                    {"t": t, "mean_displacement": float(x.mean()),
                     "mean_displacement_se": float(x.std(ddof=1) / math.sqrt(x.size))})


def hit_rate(ens: Ensemble, t: float, burn_in: int = 0) -> Estimate:
    """``n(t) / t`` averaged over trajectories."""
    t0 = ens.tau[:, burn_in]
    if np.any(t0 + t >= ens.tau[:, -1]):
        raise OutOfRange(f"t = {t} exceeds the simulated time horizon of some trajectory")
    counts = np.array([np.searchsorted(ens.tau[i], t0[i] + t, side="right") - 1 - burn_in
                       for i in range(ens.n_trajectories)], dtype=float)
    r = counts / t
    return Estimate(float(r.mean()), float(r.std(ddof=1) / math.sqrt(r.size)), r.size, "trajectory-mean")


@dataclass(frozen=True)
class DiffusivityReport:
    sigma2_discrete: Estimate
    sigma_hat2_time: Estimate
    rate_n_over_t: Estimate
    mean_chord: Estimate
    predicted_rate: float
    z_const: float
    mean_section: float
    identity_product: Estimate
    identity_z: float
    sigma_hat_measured: float
    sigma_hat_linear_rate: float
    sigma_hat_sqrt_rate: float

    def to_dict(self) -> dict:
        out = {}
        for k, v in asdict(self).items():
            out[k] = {kk: vv for kk, vv in v.items() if kk != "info"} if isinstance(v, dict) else v
        return out


def diffusivity_report(ens: Ensemble, t_horizon: float, burn_in: int = DEFAULT_BURN_IN,
                       n_boot: int = N_BOOT) -> DiffusivityReport:
    """All diffusion constants of one ensemble and the time-change identity.

    The identity tested is ``sigma_hat^2 = sigma^2 * rate``.  Both readings of
    ``sigma_hat`` in terms of ``sigma`` are reported: ``sigma * rate`` and
    ``sigma * sqrt(rate)``.
    """
    s2 = estimate_sigma2(ens, burn_in, n_boot)
    sh2 = estimate_sigma_hat2(ens, t_horizon, burn_in, n_boot)
    rate = hit_rate(ens, t_horizon, burn_in)
    chord = estimate_mean_chord(ens, burn_in, min_chords=1)
    z, sec = tube_averages(ens.tube)
    pred = z / (chord_constant(ens.tube.dimension) * sec)

    m = _dyads(ens.n_steps - burn_in)
    disp = ens.alpha[:, burn_in + m] - ens.alpha[:, [burn_in]]
    t0 = ens.tau[:, burn_in]
    nt = np.array([np.searchsorted(ens.tau[i], t0[i] + t_horizon, side="right") - 1 - burn_in
                   for i in range(ens.n_trajectories)], dtype=float)
    joint = np.column_stack([disp, nt])

    def product(rows):
        return _slope_stats(rows[:, :-1], m)[0] * rows[:, -1].mean() / t_horizon

    prod_val = s2.value * rate.value
    prod_se = float(bootstrap_se(joint, product, _boot_rng(ens, 3), n_boot))
    prod = Estimate(prod_val, prod_se, ens.n_trajectories, "sigma2*rate")
    comb = math.hypot(prod_se, sh2.std_error)
    sigma = math.sqrt(max(s2.value, 0.0))
    return DiffusivityReport(
        sigma2_discrete=s2, sigma_hat2_time=sh2, rate_n_over_t=rate, mean_chord=chord,
        predicted_rate=pred, z_const=z, mean_section=sec, identity_product=prod,
        identity_z=(sh2.value - prod_val) / comb if comb > 0 else 0.0,
        sigma_hat_measured=math.sqrt(max(sh2.value, 0.0)),
        sigma_hat_linear_rate=sigma * pred,
        sigma_hat_sqrt_rate=sigma * math.sqrt(pred),
    )


def variance_ratio(ens: Ensemble, n1: int, n2: int, burn_in: int = 0, n_boot: int = N_BOOT) -> Estimate:
    """``Var(S_{n2}) / Var(S_{n1})`` of displacements after burn-in, bootstrap SE."""
    if not 0 < n1 < n2 <= ens.n_steps - burn_in:
        raise InsufficientData("need 0 < n1 < n2 <= n_steps - burn_in")
    disp = ens.alpha[:, [burn_in + n1, burn_in + n2]] - ens.alpha[:, [burn_in]]

    def ratio(d):
        v = d.var(axis=0, ddof=1)
        return v[1] / v[0]

    se = bootstrap_se(disp, ratio, _boot_rng(ens, 4), n_boot)
    return Estimate(float(ratio(disp)), float(se), disp.shape[0], "bootstrap-ratio")


def rescaled_endpoints(ens: Ensemble, n: int, burn_in: int = 0) -> np.ndarray:
    """``(xi_{b+n} . e - xi_b . e) / sqrt(n)`` for every trajectory."""
    return (ens.alpha[:, burn_in + n] - ens.alpha[:, burn_in]) / math.sqrt(n)


# ---------------------------------------------------------------------------
# chord statistics
# ---------------------------------------------------------------------------


def _post(ens: Ensemble, arr: np.ndarray, burn_in: int) -> np.ndarray:
    _check_burn(ens, burn_in)
    return arr[:, burn_in:]


def estimate_mean_chord(ens: Ensemble, burn_in: int = DEFAULT_BURN_IN, min_chords: int = 10_000) -> Estimate:
    lengths = _post(ens, ens.lengths, burn_in)
    if lengths.size < min_chords:
        raise InsufficientData(f"need >= {min_chords} chords, got {lengths.size}")
    return batch_means(lengths, BATCH)


def drift_and_moments(ens: Ensemble, burn_in: int = DEFAULT_BURN_IN,
                      truncations=(10.0, 100.0, 1000.0)) -> tuple[Estimate, list[Estimate]]:
    """Mean horizontal jump and ``E[h^2 1{|h| <= c}]`` for each truncation ``c``."""
    h = _post(ens, ens.horiz, burn_in)
    if h.size < 1000:
        raise InsufficientData("need >= 1000 chords")
    drift = batch_means(h, BATCH)
    curve = []
    for c in truncations:
        est = batch_means(np.where(np.abs(h) <= c, h * h, 0.0), BATCH)
        curve.append(Estimate(est.value, est.std_error, est.n, f"truncated-m2(c={c:g})", {"c": float(c)}))
    return drift, curve


def truncation_gap(curve: list[Estimate]) -> float:
    """Relative gap between the last two truncated moments."""
    a, b = curve[-2].value, curve[-1].value
    return abs(b - a) / abs(b)


@dataclass(frozen=True)
class TailPoint:
    x: float
    survival: float
    lower: float
    upper: float
    n: int

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper


def tail_survival(data, xs, burn_in: int = 0, level: float = 0.999) -> list[TailPoint]:
    """Empirical ``P(|h| > x)`` with Wilson intervals; ``data`` is an ensemble or an array."""
    h = _post(data, data.horiz, burn_in) if isinstance(data, Ensemble) else np.asarray(data)
    a = np.sort(np.abs(h).ravel())
    n = a.size
    out = []
    for x in xs:
        k = int(n - np.searchsorted(a, x, side="right"))
        lo, hi = wilson_interval(k, n, level)
        out.append(TailPoint(float(x), k / n, lo, hi, n))
    return out


def tail_slope(data, x_lo: float, x_hi: float, n_points: int = 12, burn_in: int = 0) -> float:
    """Log-log slope of the survival of ``|h|`` over ``[x_lo, x_hi]`` (count-weighted)."""
    xs = np.geomspace(x_lo, x_hi, n_points)
    pts = tail_survival(data, xs, burn_in)
    k = np.array([p.survival * p.n for p in pts])
    keep = k > 0
    if keep.sum() < 3:
        raise InsufficientData("too few tail exceedances for a slope fit")
    lx = np.log(xs[keep])
    ly = np.log([p.survival for p, kk in zip(pts, keep) if kk])
    w = k[keep]
    xm = np.average(lx, weights=w)
    ym = np.average(ly, weights=w)
    return float(np.sum(w * (lx - xm) * (ly - ym)) / np.sum(w * (lx - xm) ** 2))


# ---------------------------------------------------------------------------
# induced chords
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChordLawSamples:
    crossing_positions: np.ndarray
    crossing_directions: np.ndarray
    intersect_freq: Estimate
    induced_lengths: np.ndarray

    def position_ks(self) -> KSResult:
        """Uniformity of the crossing location on the inner section boundary (d = 3)."""
        p = self.crossing_positions
        if p.shape[1] != 2:
            raise InvalidParams("angular uniformity test implemented for d = 3")
        return ks_uniform((np.arctan2(p[:, 1], p[:, 0]) / (2 * math.pi)) % 1.0)

    def direction_ks(self) -> KSResult:
        """Cosine law of the relative direction: ``(1 - (Y.e)^2)^((d-1)/2)`` is uniform."""
        d = self.crossing_directions.shape[1]
        c = self.crossing_directions[:, 0]
        return ks_uniform((1.0 - c * c) ** ((d - 1) / 2.0))


def induced_chord_stats(nested: TubeModel, ens: Ensemble, burn_in: int = DEFAULT_BURN_IN) -> ChordLawSamples:
    """First crossings of the inner cylinder by the chords of the outer walk.

    For a chord entering the inner cylinder at ``p`` with direction ``v`` the
    frame operator is the quarter turn ``U`` in the plane of ``e`` and the
    inward inner normal ``n`` with ``U e = n``; the relative direction is
    ``Y = U^{-1} v``, so ``Y.e = v.n`` and ``Y.n = -v.e``.
    """
    rho = nested.inner_radius
    if rho is None:
        raise GeometryError("induced_chord_stats needs a NestedPair tube")
    if ens.positions is None:
        raise InvalidParams("ensemble must be simulated with positions")
    _check_burn(ens, burn_in)
    x = ens.positions[:, burn_in:-1, :]
    y = ens.positions[:, burn_in + 1:, :]
    length = ens.lengths[:, burn_in:]
    v = (y - x) / length[..., None]
    u, w = x[..., 1:], v[..., 1:]
    a = np.sum(w * w, axis=-1)
    b = np.sum(u * w, axis=-1)
    c = np.sum(u * u, axis=-1) - rho * rho
    if np.any(c <= 0):
        raise GeometryError("outer hit inside the inner cylinder")
    disc = b * b - a * c
    hits = (disc > 0) & (b < 0) & (a > 0)
    sq = np.sqrt(np.where(hits, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(hits, c / (-b + sq), np.inf)
        t2 = np.where(hits, (-b + sq) / np.where(a > 0, a, 1.0), np.inf)
    hits &= t1 < length
    freq = batch_means(hits.astype(float), BATCH)
    t1h, t2h = t1[hits], t2[hits]
    vh = v[hits]
    p = x[hits] + t1h[:, None] * vh
    n_in = -p[:, 1:] / rho
    ye = np.sum(vh[:, 1:] * n_in, axis=1)
    # Y = (v.n) e - (v.e) n + (part of v orthogonal to e and n)
    yv = np.empty_like(vh)
    yv[:, 0] = ye
    yv[:, 1:] = vh[:, 1:] - (ye + vh[:, 0])[:, None] * n_in
    return ChordLawSamples(p[:, 1:], yv, freq, t2h - t1h)


def predicted_intersect_freq(nested: TubeModel) -> float:
    """``|boundary of S| / Z`` for an inner cylinder S."""
    d = nested.dimension
    z, _ = tube_averages(nested)
    return sphere_area(d - 2) * nested.inner_radius ** (d - 2) / z


# ---------------------------------------------------------------------------
# invariant measure
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BinSpec:
    """``kind`` is ``"angle"`` (section angle, d = 3) or ``"alpha"`` (alpha over one period)."""

    kind: str
    n_bins: int


def hit_histogram(ens: Ensemble, bins: BinSpec, burn_in: int = DEFAULT_BURN_IN,
                  min_hits: int = 1_000_000) -> ChiSquareResult:
    """Binned hit frequencies against the normalized surface measure.

    Hits along a trajectory are Markov dependent, so the test uses
    :func:`ktube.stats.batch_chi2` rather than the multinomial Pearson form.
    """
    _check_burn(ens, burn_in)
    tube = ens.tube
    k = bins.n_bins
    if bins.kind == "angle":
        if ens.positions is None or tube.dimension != 3:
            raise InvalidParams("angular bins need positions of a d = 3 ensemble")
        p = ens.positions[:, burn_in + 1:, :]
        ang = (np.arctan2(p[..., 2], p[..., 1]) / (2 * math.pi)) % 1.0
        if tube.base.code != CYLINDER:
            raise InvalidParams("angular bins are uniform only for straight cylinders")
        labels = np.minimum((ang * k).astype(np.int64), k - 1)
        probs = np.full(k, 1.0 / k)
    elif bins.kind == "alpha":
        period = tube.period
        if period is None:
            raise InvalidParams("alpha bins need a periodic tube family")
        a = ens.alpha[:, burn_in + 1:]
        frac = (a / period) % 1.0
        labels = np.minimum((frac * k).astype(np.int64), k - 1)
        edges = np.linspace(0.0, period, k + 1)
        masses = np.array([slab_surface_area(tube, lo, hi) for lo, hi in zip(edges[:-1], edges[1:])])
        probs = masses / masses.sum()
    else:
        raise InvalidParams(f"unknown bin kind {bins.kind!r}")
    if labels.size < min_hits:
        raise InsufficientData(f"need >= {min_hits} hits, got {labels.size}")
    return batch_chi2(labels, probs, BATCH)
