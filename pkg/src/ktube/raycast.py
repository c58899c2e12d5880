"""Next boundary hit along a ray inside a tube.

Straight cylinders and Poisson-knot profiles are solved exactly: the ray is
marched across profile segments in the order it meets them and, on each
segment, the quadratic ``|u + t w|^2 = R(alpha(t))^2`` is solved.

Smooth periodic profiles use a certified safe-step iteration.  With ``g`` the
boundary function along the ray (negative inside) and ``M`` an upper bound on
``g''``, the step to the positive root of ``g + g' h + M h^2 / 2`` can never
jump over a crossing; near a transversal crossing the iteration converges
quadratically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import MaxLengthExceeded, NotInterior
from .geometry import (
    COSINE_STRIP,
    CYLINDER,
    DELTA_KNOT,
    EPS_BND_REL,
    POISSON_KNOT,
    ROT_COSINE,
    BoundaryPoint,
    TubeModel,
    _knot_segment,
    _strip_lower,
    boundary_frame,
    boundary_point_at,
    implicit_value,
)

EPS_HIT_REL = 1e-9
L_MAX_REL = 1e6
TANGENCY = 1e-12
_MAX_ITER = 1_000_000

HIT_OK = 0
HIT_MAX_LENGTH = 1
HIT_KNOT_GRAZE = 2
HIT_NEED_WINDOW = 3
HIT_STALL = 4

ANOMALY_NAMES = {HIT_MAX_LENGTH: "MaxLengthExceeded", HIT_KNOT_GRAZE: "KnotGraze", HIT_STALL: "Stall"}


@njit(inline="always", cache=True)
def _safe_step(g, dg, m):
    ag = -g if g < 0.0 else 0.0
    if dg > 0.0:
        return 2.0 * ag / (dg + math.sqrt(dg * dg + 2.0 * m * ag))
    if m <= 0.0:
        return math.inf
    return (-dg + math.sqrt(dg * dg + 2.0 * m * ag)) / m


@njit(cache=True, nogil=True)
def _cast_cylinder(rho, x, v, eps_hit, lmax):
    a = 0.0
    b = 0.0
    c = -rho * rho
    for i in range(1, x.shape[0]):
        a += v[i] * v[i]
        b += x[i] * v[i]
        c += x[i] * x[i]
    if a <= 0.0:
        return lmax, HIT_MAX_LENGTH
    if c > 0.0:
        c = 0.0
    sq = math.sqrt(b * b - a * c)
    if b < 0.0:
        t = (-b + sq) / a
    elif b + sq > 0.0:
        t = -c / (b + sq)
    else:
        t = 0.0
    if t > lmax:
        return lmax, HIT_MAX_LENGTH
    if t <= eps_hit:
        return t, HIT_STALL
    return t, HIT_OK


@njit(cache=True, nogil=True)
def _cast_strip(par, x, v, eps_hit, lmax, tol):
    a, w, k = par[0], par[1], par[2]
    m = a * k * k * v[0] * v[0]
    t = 0.0
    for _ in range(_MAX_ITER):
        al = x[0] + t * v[0]
        lo, dlo = _strip_lower(par, al)
        y = x[1] + t * v[1]
        g1 = lo - y
        d1 = dlo * v[0] - v[1]
        g2 = y - lo - w
        d2 = -d1
        if t > eps_hit and max(g1, g2) > -tol:
            return t, HIT_OK
        h = min(_safe_step(g1, d1, m), _safe_step(g2, d2, m))
        if not h > 0.0:
            return t, HIT_STALL
        t += h
        if t > lmax:
            return lmax, HIT_MAX_LENGTH
    return t, HIT_STALL


@njit(cache=True, nogil=True)
def _cast_rot_cosine(par, x, v, eps_hit, lmax, tol):
    r0, a, k, phi = par[0], par[1], par[2], par[3]
    ww = 0.0
    for i in range(1, x.shape[0]):
        ww += v[i] * v[i]
    m = 2.0 * ww + 2.0 * v[0] * v[0] * a * k * k * (r0 + a)
    t = 0.0
    for _ in range(_MAX_ITER):
        s = k * (x[0] + t * v[0]) + phi
        r = r0 + a * math.cos(s)
        dr = -a * k * math.sin(s)
        uu = 0.0
        uw = 0.0
        for i in range(1, x.shape[0]):
            ui = x[i] + t * v[i]
            uu += ui * ui
            uw += ui * v[i]
        g = uu - r * r
        dg = 2.0 * uw - 2.0 * r * dr * v[0]
        if t > eps_hit and g > -tol:
            return t, HIT_OK
        h = _safe_step(g, dg, m)
        if not h > 0.0:
            return t, HIT_STALL
        t += h
        if t > lmax:
            return lmax, HIT_MAX_LENGTH
    return t, HIT_STALL


@njit(cache=True, nogil=True)
def _cast_knots(ka, kr, x, v, eps_hit, lmax):
    nk = ka.shape[0]
    i = _knot_segment(ka, x[0])
    ww = 0.0
    uw = 0.0
    uu = 0.0
    for j in range(1, x.shape[0]):
        ww += v[j] * v[j]
        uw += x[j] * v[j]
        uu += x[j] * x[j]
    va = v[0]
    t_lo = 0.0
    while True:
        if i < 0 or i >= nk - 1:
            return t_lo, HIT_NEED_WINDOW
        if va > 0.0:
            t_hi = (ka[i + 1] - x[0]) / va
        elif va < 0.0:
            t_hi = (ka[i] - x[0]) / va
        else:
            t_hi = math.inf
        slope = (kr[i + 1] - kr[i]) / (ka[i + 1] - ka[i])
        c0 = kr[i] + slope * (x[0] - ka[i])
        c1 = slope * va
        qa = ww - c1 * c1
        qb = uw - c0 * c1
        qc = uu - c0 * c0
        lo = max(t_lo, eps_hit)
        best = math.inf
        if qa == 0.0:
            if qb != 0.0:
                r = -qc / (2.0 * qb)
                if lo < r <= t_hi:
                    best = r
        else:
            disc = qb * qb - qa * qc
            if disc >= 0.0:
                sq = math.sqrt(disc)
                if 2.0 * sq / abs(qa) >= TANGENCY:
                    q = -(qb + math.copysign(sq, qb))
                    r1 = q / qa
                    r2 = qc / q if q != 0.0 else math.inf
                    if lo < r1 <= t_hi:
                        best = r1
                    if lo < r2 <= t_hi and r2 < best:
                        best = r2
        if best < math.inf:
            if best > lmax:
                return lmax, HIT_MAX_LENGTH
            al = x[0] + best * va
            if al - ka[i] < DELTA_KNOT or ka[i + 1] - al < DELTA_KNOT:
                return best, HIT_KNOT_GRAZE
            return best, HIT_OK
        if t_hi == math.inf or t_hi > lmax:
            return lmax, HIT_MAX_LENGTH
        t_lo = t_hi
        i += 1 if va > 0.0 else -1


@njit(cache=True, nogil=True)
def cast_ray(fam, par, ka, kr, x, v, eps_hit, lmax, tol):
    """Flight length from x along unit v to the next boundary hit, and a status code."""
    if fam == CYLINDER:
        return _cast_cylinder(par[0], x, v, eps_hit, lmax)
    if fam == COSINE_STRIP:
        return _cast_strip(par, x, v, eps_hit, lmax, tol)
    if fam == ROT_COSINE:
        return _cast_rot_cosine(par, x, v, eps_hit, lmax, tol * 2.0 * (par[0] + par[1]))
    return _cast_knots(ka, kr, x, v, eps_hit, lmax)


def cast_tolerances(tube: TubeModel) -> tuple[float, float, float]:
    """``(eps_hit, l_max, residual tolerance)`` scaled to the tube."""
    m = tube.m_hat
    return EPS_HIT_REL * m, L_MAX_REL * m, 1e-12 * m


@dataclass(frozen=True)
class RayHit:
    hit: BoundaryPoint
    flight_length: float
    anomaly: str | None = None


def next_hit(tube: TubeModel, x, v) -> RayHit:
    """The first boundary point met by the ray ``x + t v``, ``t > eps_hit``.

    ``x`` may be interior or on the boundary; in the latter case ``v`` must
    point into the tube.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(float(np.linalg.norm(v)) - 1.0) > 1e-12:
        raise ValueError("direction must be a unit vector")
    eps_hit, lmax, tol = cast_tolerances(tube)
    tube.ensure_range(x[0] - 2.0 * tube.m_hat, x[0] + 2.0 * tube.m_hat)
    code, par, ka, kr = tube.arrays()
    g = implicit_value(code, par, ka, kr, x)
    bnd = EPS_BND_REL * tube.m_hat
    if not np.isfinite(g) or g > bnd:
        raise NotInterior("ray origin is outside the tube")
    if g >= -bnd:
        n = np.empty(tube.dimension)
        r = np.empty(tube.dimension)
        _, dist = boundary_frame(code, par, ka, kr, x, n, r)
        if dist <= bnd and float(v @ n) <= 0.0:
            raise NotInterior("ray from a boundary point must point into the tube")
    while True:
        t, status = cast_ray(code, par, ka, kr, x, v, eps_hit, lmax, tol)
        if status != HIT_NEED_WINDOW:
            break
        span = max(t, 1.0) * 2.0 + 2.0 * tube.m_hat
        tube.ensure_range(x[0] - span, x[0] + span)
        code, par, ka, kr = tube.arrays()
    if status == HIT_MAX_LENGTH:
        raise MaxLengthExceeded(f"flight exceeds L_max = {lmax:g}")
    if status == HIT_STALL:
        raise NotInterior("ray makes no progress (tangential start)")
    y = x + t * v
    return RayHit(boundary_point_at(tube, y), float(t), ANOMALY_NAMES.get(status))
