"""Random tube families, their boundaries, normals and section measures.

A tube is ``omega = {(alpha, u) : u in omega_alpha}`` with ``alpha`` the
coordinate along the first axis ``e`` and ``u`` the transverse part.
Five families are implemented:

``StraightCylinder``
    ``|u| < radius``.  In d = 2 this is the strip ``(-radius, radius)``;
    ``width`` may be given instead of ``radius``.
``CosineStrip2D``
    d = 2 only: ``a cos(k alpha + phi) < u < a cos(k alpha + phi) + width``.
``RotationalCosine``
    ``|u| < r0 + a cos(k alpha + phi)`` with ``a < r0``.
``RotationalPoissonKnot``
    ``|u| < R(alpha)`` with ``R`` piecewise linear between the points of a
    homogeneous Poisson process of rate ``rate``; knot radii are iid
    uniform on ``[r_min, r_max]``.
``NestedPair``
    A rotational outer tube together with a coaxial straight cylinder of
    radius ``inner_radius`` strictly inside it.  Walks live in the outer
    tube; the inner cylinder is a transparent observation region.

Periodic families are made stationary with a uniform random phase ``phi``.
All randomness comes from the tube seed through :mod:`ktube.rng`.
"""

from __future__ import annotations

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from numba import njit
from scipy import integrate, stats

from .errors import InvalidParams, NotOnBoundary
from .rng import (
    PURPOSE_INIT,
    PURPOSE_KNOTS,
    PURPOSE_PHASE,
    TUBE_STREAM,
    Stream,
    fill_uniforms,
)

FAMILIES = (
    "StraightCylinder",
    "CosineStrip2D",
    "RotationalCosine",
    "RotationalPoissonKnot",
    "NestedPair",
)

# numba family codes
CYLINDER = 0
COSINE_STRIP = 1
ROT_COSINE = 2
POISSON_KNOT = 3

EPS_BND_REL = 1e-9
DELTA_KNOT = 1e-9
MAX_DIM = 8

# knots per lazily generated window, on average
_KNOTS_PER_WINDOW = 64
# windows materialized on each side of the origin at construction
_BASE_WINDOWS = 64
_WINDOW_EVENT_OFFSET = 1 << 62


def sphere_area(k: int) -> float:
    """Surface measure of the unit sphere S^k in R^{k+1} (S^0 has two points)."""
    return 2.0 * math.pi ** ((k + 1) / 2) / math.gamma((k + 1) / 2)


def ball_volume(k: int) -> float:
    """Lebesgue volume of the unit ball in R^k."""
    return math.pi ** (k / 2) / math.gamma(k / 2 + 1)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _knot_segment(ka, alpha):
    """Index i with ka[i] <= alpha < ka[i+1], or -1 outside the materialized range."""
    n = ka.shape[0]
    if n < 2 or alpha < ka[0] or alpha >= ka[n - 1]:
        return -1
    return np.searchsorted(ka, alpha, side="right") - 1


@njit(cache=True, nogil=True)
def _profile(fam, par, ka, kr, alpha):
    """Radius and slope of a rotational profile at alpha (nan when unavailable)."""
    if fam == CYLINDER:
        return par[0], 0.0
    if fam == ROT_COSINE:
        s = par[2] * alpha + par[3]
        return par[0] + par[1] * math.cos(s), -par[1] * par[2] * math.sin(s)
    if fam == POISSON_KNOT:
        i = _knot_segment(ka, alpha)
        if i < 0:
            return math.nan, math.nan
        m = (kr[i + 1] - kr[i]) / (ka[i + 1] - ka[i])
        return kr[i] + m * (alpha - ka[i]), m
    return math.nan, math.nan


@njit(cache=True, nogil=True)
def _strip_lower(par, alpha):
    s = par[2] * alpha + par[3]
    return par[0] * math.cos(s), -par[0] * par[2] * math.sin(s)


@njit(cache=True, nogil=True)
def _transverse_norm(x):
    s = 0.0
    for i in range(1, x.shape[0]):
        s += x[i] * x[i]
    return math.sqrt(s)


@njit(cache=True, nogil=True)
def implicit_value(fam, par, ka, kr, x):
    """Signed boundary function: negative inside, zero on the boundary."""
    if fam == COSINE_STRIP:
        lo, _ = _strip_lower(par, x[0])
        return max(lo - x[1], x[1] - lo - par[1])
    r, _ = _profile(fam, par, ka, kr, x[0])
    return _transverse_norm(x) - r


@njit(cache=True, nogil=True)
def boundary_frame(fam, par, ka, kr, x, n_out, r_out):
    """Inward normal, in-section normal and kappa at a boundary point.

    ``r_out`` receives the section normal embedded in R^d (zero first entry).
    Returns ``(kappa, distance_estimate)``.
    """
    d = x.shape[0]
    if fam == COSINE_STRIP:
        lo, dlo = _strip_lower(par, x[0])
        q = math.sqrt(1.0 + dlo * dlo)
        g_lo = lo - x[1]
        g_up = x[1] - lo - par[1]
        r_out[0] = 0.0
        if abs(g_lo) <= abs(g_up):
            n_out[0] = -dlo / q
            n_out[1] = 1.0 / q
            r_out[1] = 1.0
            return 1.0 / q, abs(g_lo) / q
        n_out[0] = dlo / q
        n_out[1] = -1.0 / q
        r_out[1] = -1.0
        return 1.0 / q, abs(g_up) / q
    r, dr = _profile(fam, par, ka, kr, x[0])
    q = math.sqrt(1.0 + dr * dr)
    un = _transverse_norm(x)
    n_out[0] = dr / q
    r_out[0] = 0.0
    for i in range(1, d):
        r_out[i] = -x[i] / un
        n_out[i] = r_out[i] / q
    return 1.0 / q, abs(un - r) / q


@njit(cache=True, nogil=True)
def is_regular(fam, ka, x, n):
    """False at profile knots and where the normal is parallel to e."""
    if abs(n[0]) >= 1.0 - 1e-12:
        return False
    if fam == POISSON_KNOT:
        i = _knot_segment(ka, x[0])
        if i < 0:
            return False
        if x[0] - ka[i] < DELTA_KNOT or ka[i + 1] - x[0] < DELTA_KNOT:
            return False
    return True


@njit(cache=True, nogil=True)
def _sphere_direction(u, k, out):
    """Uniform direction on S^{k-1} written into out[:k], from uniforms u."""
    if k == 1:
        out[0] = 1.0 if u[0] < 0.5 else -1.0
        return
    if k == 2:
        a = 2.0 * math.pi * u[0]
        out[0] = math.cos(a)
        out[1] = math.sin(a)
        return
    s = 0.0
    j = 0
    i = 0
    while i < k:
        rad = math.sqrt(-2.0 * math.log(u[j]))
        ang = 2.0 * math.pi * u[j + 1]
        out[i] = rad * math.cos(ang)
        s += out[i] * out[i]
        if i + 1 < k:
            out[i + 1] = rad * math.sin(ang)
            s += out[i + 1] * out[i + 1]
        i += 2
        j += 2
    s = math.sqrt(s)
    for i in range(k):
        out[i] /= s


@njit(cache=True, nogil=True)
def _segment_power_integral(r0, r1, length, p):
    # integral of R^p over a segment on which R runs linearly from r0 to r1
    if p == 0:
        return length
    s = 0.0
    for j in range(p + 1):
        s += r1**j * r0 ** (p - j)
    return length * s / (p + 1)


@njit(cache=True, nogil=True)
def sample_boundary_kernel(fam, par, ka, kr, d, a, b, k0, k1, event0, out):
    """Rejection sampler for the surface measure restricted to a <= alpha <= b.

    Each attempt consumes one event of the ``PURPOSE_INIT`` counter space.
    Returns the number of events used, or -1 when the knot window is too small.
    """
    u = np.empty(4 + d)
    dirn = np.empty(d)
    p = d - 2
    purpose = np.uint64(PURPOSE_INIT)
    i0 = 0
    nseg = 1
    total = 0.0
    cum = np.empty(1)
    if fam == POISSON_KNOT:
        if a < ka[0] or b >= ka[ka.shape[0] - 1]:
            return -1
        i0 = _knot_segment(ka, a)
        i1 = _knot_segment(ka, b)
        nseg = i1 - i0 + 1
        cum = np.empty(nseg)
        total = 0.0
        for s in range(nseg):
            i = i0 + s
            lo = max(ka[i], a)
            hi = min(ka[i + 1], b)
            m = (kr[i + 1] - kr[i]) / (ka[i + 1] - ka[i])
            r_lo = kr[i] + m * (lo - ka[i])
            r_hi = kr[i] + m * (hi - ka[i])
            total += math.sqrt(1.0 + m * m) * _segment_power_integral(r_lo, r_hi, hi - lo, p)
            cum[s] = total
    for att in range(1 << 30):
        fill_uniforms(k0, k1, event0 + np.uint64(att), np.uint64(0), purpose, u)
        if fam == COSINE_STRIP:
            alpha = a + (b - a) * u[1]
            lo, dlo = _strip_lower(par, alpha)
            env = math.sqrt(1.0 + (par[0] * par[2]) ** 2)
            if u[2] * env > math.sqrt(1.0 + dlo * dlo):
                continue
            out[0] = alpha
            out[1] = lo if u[0] < 0.5 else lo + par[1]
            return att + 1
        if fam == POISSON_KNOT:
            target = u[0] * total
            s = np.searchsorted(cum, target, side="right")
            if s >= nseg:
                s = nseg - 1
            i = i0 + s
            lo = max(ka[i], a)
            hi = min(ka[i + 1], b)
            alpha = lo + (hi - lo) * u[1]
            r = kr[i] + (kr[i + 1] - kr[i]) * (alpha - ka[i]) / (ka[i + 1] - ka[i])
            env = max(kr[i], kr[i + 1]) ** p
            if u[2] * env > r**p:
                continue
        else:
            alpha = a + (b - a) * u[1]
            r, dr = _profile(fam, par, ka, kr, alpha)
            if fam == ROT_COSINE:
                env = (par[0] + par[1]) ** p * math.sqrt(1.0 + (par[1] * par[2]) ** 2)
                if u[2] * env > r**p * math.sqrt(1.0 + dr * dr):
                    continue
        _sphere_direction(u[3:], d - 1, dirn)
        out[0] = alpha
        for j in range(1, d):
            out[j] = r * dirn[j - 1]
        return att + 1
    return -1


# ---------------------------------------------------------------------------
# Python surface
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoundaryPoint:
    position: np.ndarray
    alpha: float
    normal_n: np.ndarray
    section_normal_r: np.ndarray
    kappa: float
    regular: bool


@dataclass(frozen=True)
class SectionInfo:
    alpha: float
    volume: float
    boundary_measure: float


def _req(params: Mapping[str, Any], key: str, family: str) -> float:
    if key not in params:
        raise InvalidParams(f"{family}: missing parameter '{key}'")
    return float(params[key])


def _check_keys(params: Mapping[str, Any], allowed: set[str], family: str) -> None:
    extra = set(params) - allowed
    if extra:
        raise InvalidParams(f"{family}: unknown parameter(s) {sorted(extra)}")


@dataclass(frozen=True, eq=False)
class TubeModel:
    """One realization of a random tube.

    Construct with :func:`build_tube`.  The object is immutable apart from the
    lazily extended knot cache of the Poisson-knot family, which is guarded by
    a lock and only ever grows; every query sees the same profile.
    """

    family: str
    dimension: int
    params: Mapping[str, Any]
    seed: int
    phase: float
    m_hat: float
    code: int
    par: np.ndarray = field(repr=False)
    outer: "TubeModel | None" = field(default=None, repr=False)
    inner_radius: float | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    # -- structure ---------------------------------------------------------

    @property
    def base(self) -> "TubeModel":
        """The tube the walk lives in (the outer tube for NestedPair)."""
        return self.outer if self.outer is not None else self

    @property
    def rotational(self) -> bool:
        return self.base.code != COSINE_STRIP

    @property
    def period(self) -> float | None:
        b = self.base
        if b.code in (COSINE_STRIP, ROT_COSINE):
            return 2.0 * math.pi / b.par[2]
        return None

    def arrays(self):
        """``(code, par, knot_alpha, knot_radius)`` for the numba kernels."""
        b = self.base
        if b.code == POISSON_KNOT:
            ka, kr = b._cache["knots"]
            return b.code, b.par, ka, kr
        return b.code, b.par, _EMPTY, _EMPTY

    def ensure_range(self, lo: float, hi: float) -> None:
        """Materialize Poisson knots so that [lo, hi] lies inside the knot range."""
        b = self.base
        if b.code != POISSON_KNOT:
            return
        with b._lock:
            ka, kr = b._cache["knots"]
            j_lo, j_hi = b._cache["windows"]
            while not (ka.shape[0] >= 2 and ka[0] <= lo and ka[-1] > hi):
                grow = max(1, (j_hi - j_lo + 1) // 2)
                if ka.shape[0] < 2 or ka[0] > lo:
                    j_lo -= grow
                if ka.shape[0] < 2 or ka[-1] <= hi:
                    j_hi += grow
                ka, kr = _realize_knots(b, j_lo, j_hi)
            b._cache["knots"] = (ka, kr)
            b._cache["windows"] = (j_lo, j_hi)

    # -- serialization ------------------------------------------------------

    def spec(self) -> dict:
        return {
            "family": self.family,
            "dimension": self.dimension,
            "params": _plain(self.params),
            "seed": self.seed,
        }

    def to_json(self, include_knots: bool = False) -> str:
        doc = self.spec()
        realized: dict[str, Any] = {"m_hat": self.m_hat}
        b = self.base
        if b.code in (COSINE_STRIP, ROT_COSINE):
            realized["phase"] = b.phase
        if b.code == POISSON_KNOT:
            ka, kr = _realize_knots(b, -_BASE_WINDOWS, _BASE_WINDOWS - 1)
            realized["window_width"] = b._cache["window_width"]
            realized["base_windows"] = [-_BASE_WINDOWS, _BASE_WINDOWS - 1]
            realized["knot_count"] = int(ka.shape[0])
            h = hashlib.sha256(ka.tobytes() + kr.tobytes()).hexdigest()
            realized["knot_sha256"] = h
            if include_knots:
                realized["knot_alpha"] = [float(v) for v in ka]
                realized["knot_radius"] = [float(v) for v in kr]
        doc["realized"] = realized
        return json.dumps(doc, sort_keys=True, separators=(",", ":"))


_EMPTY = np.zeros(2)


def _plain(obj):
    if isinstance(obj, Mapping):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _realize_knots(tube: TubeModel, j_lo: int, j_hi: int):
    """Knots of windows j_lo..j_hi; each window is a pure function of (seed, j)."""
    lam = tube.par[0]
    r_min, r_max = tube.par[1], tube.par[2]
    width = tube._cache["window_width"]
    k0, k1 = np.uint64(tube.seed & ((1 << 64) - 1)), np.uint64(TUBE_STREAM)
    mu = lam * width
    alphas, radii = [], []
    head = np.empty(1)
    for j in range(j_lo, j_hi + 1):
        ev = np.uint64(j + _WINDOW_EVENT_OFFSET)
        fill_uniforms(k0, k1, ev, np.uint64(0), np.uint64(PURPOSE_KNOTS), head)
        count = int(stats.poisson.ppf(head[0], mu))
        if count == 0:
            continue
        u = np.empty(1 + 2 * count)
        fill_uniforms(k0, k1, ev, np.uint64(0), np.uint64(PURPOSE_KNOTS), u)
        pos = j * width + width * u[1 : 1 + count]
        rad = r_min + (r_max - r_min) * u[1 + count :]
        order = np.argsort(pos, kind="stable")
        alphas.append(pos[order])
        radii.append(rad[order])
    if not alphas:
        return np.empty(0), np.empty(0)
    return np.concatenate(alphas), np.concatenate(radii)


def _tube_phase(seed: int) -> float:
    u = np.empty(1)
    fill_uniforms(
        np.uint64(seed & ((1 << 64) - 1)),
        np.uint64(TUBE_STREAM),
        np.uint64(0),
        np.uint64(0),
        np.uint64(PURPOSE_PHASE),
        u,
    )
    return 2.0 * math.pi * float(u[0])


def build_tube(spec: Mapping[str, Any], seed: int | None = None) -> TubeModel:
    """Build a tube realization from ``{family, dimension, params[, seed]}``.

    ``seed`` overrides ``spec["seed"]``.  The result is a deterministic
    function of the spec and the seed.
    """
    family = spec.get("family")
    if family not in FAMILIES:
        raise InvalidParams(f"unknown tube family {family!r}; expected one of {FAMILIES}")
    d = int(spec.get("dimension", 3))
    if not 2 <= d <= MAX_DIM:
        raise InvalidParams(f"dimension must satisfy 2 <= d <= {MAX_DIM}, got {d}")
    if seed is None:
        seed = spec.get("seed", 0)
    seed = int(seed)
    params = dict(spec.get("params", {}))

    if family == "NestedPair":
        _check_keys(params, {"outer", "inner_radius"}, family)
        if "outer" not in params:
            raise InvalidParams("NestedPair: missing parameter 'outer'")
        outer_spec = dict(params["outer"])
        outer_spec.setdefault("dimension", d)
        if int(outer_spec["dimension"]) != d:
            raise InvalidParams("NestedPair: outer dimension must match")
        if outer_spec.get("family") in ("CosineStrip2D", "NestedPair"):
            raise InvalidParams("NestedPair: outer tube must be rotational (cylinder, cosine or Poisson-knot)")
        outer = build_tube(outer_spec, seed)
        rho = _req(params, "inner_radius", family)
        if not rho > 0:
            raise InvalidParams("NestedPair: inner_radius > 0 required")
        floor = _min_radius(outer)
        if not rho < floor:
            raise InvalidParams(
                f"NestedPair: closure of the inner cylinder must lie inside the outer tube "
                f"(inner_radius {rho} >= minimal outer radius {floor})"
            )
        return TubeModel(
            family, d, params, seed, outer.phase, outer.m_hat, outer.code, outer.par,
            outer=outer, inner_radius=rho,
        )

    if family == "StraightCylinder":
        _check_keys(params, {"radius", "width"}, family)
        if "radius" in params:
            rho = float(params["radius"])
        elif "width" in params and d == 2:
            rho = float(params["width"]) / 2.0
        else:
            raise InvalidParams("StraightCylinder: missing parameter 'radius'")
        if not rho > 0:
            raise InvalidParams("StraightCylinder: radius > 0 required (r_min > 0)")
        par = np.array([rho, 0.0, 0.0, 0.0])
        return TubeModel(family, d, params, seed, 0.0, rho, CYLINDER, par)

    if family == "CosineStrip2D":
        _check_keys(params, {"width", "amplitude", "wavenumber"}, family)
        if d != 2:
            raise InvalidParams("CosineStrip2D: dimension must be 2")
        w = _req(params, "width", family)
        a = float(params.get("amplitude", 1.0))
        k = float(params.get("wavenumber", 1.0))
        if not w > 0:
            raise InvalidParams("CosineStrip2D: width > 0 required (r_min > 0)")
        if a < 0:
            raise InvalidParams("CosineStrip2D: amplitude >= 0 required")
        if not k > 0:
            raise InvalidParams("CosineStrip2D: wavenumber > 0 required")
        phi = _tube_phase(seed) if a > 0 else 0.0
        par = np.array([a, w, k, phi])
        return TubeModel(family, d, params, seed, phi, a + w, COSINE_STRIP, par)

    if family == "RotationalCosine":
        _check_keys(params, {"r0", "amplitude", "wavenumber"}, family)
        r0 = _req(params, "r0", family)
        a = _req(params, "amplitude", family)
        k = float(params.get("wavenumber", 1.0))
        if not r0 > 0:
            raise InvalidParams("RotationalCosine: r0 > 0 required")
        if not 0 <= a < r0:
            raise InvalidParams("RotationalCosine: amplitude a < r0 required (no pinch-off), and a >= 0")
        if not k > 0:
            raise InvalidParams("RotationalCosine: wavenumber > 0 required")
        phi = _tube_phase(seed)
        par = np.array([r0, a, k, phi])
        return TubeModel(family, d, params, seed, phi, r0 + a, ROT_COSINE, par)

    # RotationalPoissonKnot
    _check_keys(params, {"rate", "r_min", "r_max"}, family)
    lam = _req(params, "rate", family)
    r_min = _req(params, "r_min", family)
    r_max = _req(params, "r_max", family)
    if not lam > 0:
        raise InvalidParams("RotationalPoissonKnot: Poisson rate lambda > 0 required")
    if not 0 < r_min < r_max:
        raise InvalidParams("RotationalPoissonKnot: 0 < r_min < r_max required")
    par = np.array([lam, r_min, r_max, 0.0])
    tube = TubeModel(family, d, params, seed, 0.0, r_max, POISSON_KNOT, par)
    tube._cache["window_width"] = _KNOTS_PER_WINDOW / lam
    j_lo, j_hi = -_BASE_WINDOWS, _BASE_WINDOWS - 1
    ka, kr = _realize_knots(tube, j_lo, j_hi)
    tube._cache["knots"] = (ka, kr)
    tube._cache["windows"] = (j_lo, j_hi)
    return tube


def tube_from_json(doc: Mapping[str, Any] | str) -> TubeModel:
    if isinstance(doc, str):
        doc = json.loads(doc)
    return build_tube(doc, doc.get("seed", 0))


def _min_radius(tube: TubeModel) -> float:
    if tube.code == CYLINDER:
        return float(tube.par[0])
    if tube.code == ROT_COSINE:
        return float(tube.par[0] - tube.par[1])
    return float(tube.par[1])


def profile(tube: TubeModel, alpha: float) -> tuple[float, float]:
    """Radius and slope of a rotational tube at ``alpha``."""
    if not tube.rotational:
        raise InvalidParams("profile() needs a rotational tube")
    tube.ensure_range(alpha - 1.0, alpha + 1.0)
    code, par, ka, kr = tube.arrays()
    return _profile(code, par, ka, kr, float(alpha))


def contains(tube: TubeModel, x) -> bool:
    """True iff ``x`` lies in the open tube."""
    x = np.asarray(x, dtype=float)
    tube.ensure_range(x[0] - 1.0, x[0] + 1.0)
    code, par, ka, kr = tube.arrays()
    return bool(implicit_value(code, par, ka, kr, x) < 0.0)


def boundary_point_at(tube: TubeModel, x) -> BoundaryPoint:
    """Normals, kappa and regularity at a boundary point.

    Raises :class:`NotOnBoundary` when ``x`` is farther than
    ``1e-9 * m_hat`` from the boundary.
    """
    x = np.array(x, dtype=float)
    if x.shape != (tube.dimension,):
        raise NotOnBoundary(f"point must have shape ({tube.dimension},)")
    tube.ensure_range(x[0] - 1.0, x[0] + 1.0)
    code, par, ka, kr = tube.arrays()
    if code != COSINE_STRIP and _transverse_norm(x) == 0.0:
        raise NotOnBoundary("point on the tube axis")
    n = np.empty(tube.dimension)
    r = np.empty(tube.dimension)
    kappa, dist = boundary_frame(code, par, ka, kr, x, n, r)
    if not dist <= EPS_BND_REL * tube.m_hat:
        raise NotOnBoundary(f"distance to boundary {dist:.3e} exceeds tolerance")
    return BoundaryPoint(
        position=x,
        alpha=float(x[0]),
        normal_n=n,
        section_normal_r=r[1:].copy(),
        kappa=float(kappa),
        regular=bool(is_regular(code, ka, x, n)),
    )


def section_slice(tube: TubeModel, alpha: float) -> SectionInfo:
    d = tube.dimension
    if not tube.rotational:
        return SectionInfo(float(alpha), float(tube.par[1]), 2.0)
    r, _ = profile(tube, alpha)
    return SectionInfo(float(alpha), ball_volume(d - 1) * r ** (d - 1), sphere_area(d - 2) * r ** (d - 2))


def _knot_pieces(tube: TubeModel, a: float, b: float):
    """Yield (r_lo, r_hi, length, slope) for the profile segments covering [a, b]."""
    tube.ensure_range(a, b)
    _, _, ka, kr = tube.arrays()
    i0 = int(np.searchsorted(ka, a, side="right")) - 1
    i1 = int(np.searchsorted(ka, b, side="right")) - 1
    for i in range(i0, i1 + 1):
        lo = max(ka[i], a)
        hi = min(ka[i + 1], b)
        if hi <= lo:
            continue
        m = (kr[i + 1] - kr[i]) / (ka[i + 1] - ka[i])
        yield kr[i] + m * (lo - ka[i]), kr[i] + m * (hi - ka[i]), hi - lo, m


def _chunked_quad(f, a: float, b: float, chunk: float) -> float:
    n = max(1, int(math.ceil((b - a) / chunk)))
    edges = np.linspace(a, b, n + 1)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, lo, hi, epsabs=1e-11, epsrel=1e-12, limit=200)
        total += val
    return total


def slab_surface_area(tube: TubeModel, a: float, b: float) -> float:
    """Surface measure of the boundary part with ``a <= alpha <= b``."""
    if not a < b:
        raise ValueError("slab_surface_area needs a < b")
    d = tube.dimension
    base = tube.base
    if base.code == CYLINDER:
        return sphere_area(d - 2) * base.par[0] ** (d - 2) * (b - a)
    if base.code == POISSON_KNOT:
        total = 0.0
        for r_lo, r_hi, length, m in _knot_pieces(base, a, b):
            total += math.sqrt(1.0 + m * m) * _segment_power_integral(r_lo, r_hi, length, d - 2)
        return sphere_area(d - 2) * total
    chunk = tube.period / 4.0
    if base.code == COSINE_STRIP:
        def f(al):
            _, dl = _strip_lower(base.par, al)
            return 2.0 * math.sqrt(1.0 + dl * dl)
        return _chunked_quad(f, a, b, chunk)

    def g(al):
        r, dr = _profile(ROT_COSINE, base.par, _EMPTY, _EMPTY, al)
        return r ** (d - 2) * math.sqrt(1.0 + dr * dr)
    return sphere_area(d - 2) * _chunked_quad(g, a, b, chunk)


def slab_volume(tube: TubeModel, a: float, b: float) -> float:
    """d-dimensional volume of the tube part with ``a <= alpha <= b``."""
    if not a < b:
        raise ValueError("slab_volume needs a < b")
    d = tube.dimension
    base = tube.base
    if base.code == CYLINDER:
        return ball_volume(d - 1) * base.par[0] ** (d - 1) * (b - a)
    if base.code == COSINE_STRIP:
        return base.par[1] * (b - a)
    if base.code == POISSON_KNOT:
        total = sum(_segment_power_integral(r0, r1, ln, d - 1) for r0, r1, ln, _ in _knot_pieces(base, a, b))
        return ball_volume(d - 1) * total

    def g(al):
        r, _ = _profile(ROT_COSINE, base.par, _EMPTY, _EMPTY, al)
        return r ** (d - 1)
    return ball_volume(d - 1) * _chunked_quad(g, a, b, tube.period / 4.0)


def sample_boundary_uniform(tube: TubeModel, a: float, b: float, rng: Stream) -> BoundaryPoint:
    """Draw a boundary point from the normalized surface measure on the slab [a, b]."""
    if not a < b:
        raise ValueError("sample_boundary_uniform needs a < b")
    x = sample_boundary_positions(tube, a, b, rng, 1)[0]
    return boundary_point_at(tube, x)


def sample_boundary_positions(tube: TubeModel, a: float, b: float, rng: Stream, count: int) -> np.ndarray:
    """``count`` independent surface-uniform boundary positions, shape (count, d)."""
    tube.ensure_range(a - 1.0, b + 1.0)
    code, par, ka, kr = tube.arrays()
    out = np.empty((count, tube.dimension))
    k0, k1 = rng.key
    for i in range(count):
        used = sample_boundary_kernel(code, par, ka, kr, tube.dimension, a, b, k0, k1,
                                      np.uint64(rng.counter), out[i])
        if used < 0:
            raise RuntimeError("boundary sampler failed")
        rng.counter += used
    return out
