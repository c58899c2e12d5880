"""Cosine (Knudsen) reflection law and the boundary-to-boundary kernel K."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import KtubeError
from .geometry import BoundaryPoint, TubeModel
from .raycast import next_hit
from .rng import PURPOSE_DRAW, Stream


def gamma_d(d: int) -> float:
    """Normalising constant of the cosine law, ``Gamma((d+1)/2) / pi^((d-1)/2)``."""
    if int(d) != d or d < 2:
        raise ValueError("gamma_d needs an integer d >= 2")
    return math.exp(math.lgamma((d + 1) / 2.0) - 0.5 * (d - 1) * math.log(math.pi))


def cosine_width(d: int) -> int:
    """Number of uniforms consumed by one cosine draw in dimension d."""
    return d + 1


@njit(cache=True, nogil=True)
def cosine_direction(u, n, out):
    """Write a cosine-law direction about unit normal ``n`` into ``out``.

    A point ``p`` uniform in the unit (d-1)-ball is lifted to the hemisphere,
    ``h = (p, sqrt(1 - |p|^2))``, and carried onto the half-space of ``n`` by
    a Householder reflection.  Returns ``h . n``.
    """
    d = n.shape[0]
    k = d - 1
    if k == 1:
        out[0] = 2.0 * u[0] - 1.0
        s = out[0] * out[0]
    elif k == 2:
        rad = math.sqrt(u[0])
        ang = 2.0 * math.pi * u[1]
        out[0] = rad * math.cos(ang)
        out[1] = rad * math.sin(ang)
        s = u[0]
    else:
        g = 0.0
        i = 0
        while i < k:
            rr = math.sqrt(-2.0 * math.log(u[i]))
            ang = 2.0 * math.pi * u[i + 1]
            out[i] = rr * math.cos(ang)
            g += out[i] * out[i]
            if i + 1 < k:
                out[i + 1] = rr * math.sin(ang)
                g += out[i + 1] * out[i + 1]
            i += 2
        rad = u[d] ** (1.0 / k) / math.sqrt(g)
        s = 0.0
        for i in range(k):
            out[i] *= rad
            s += out[i] * out[i]
    c = math.sqrt(max(1.0 - s, 0.0))
    out[k] = c
    # orthogonal map e_last -> n: s * (I - w w^T / wl), w = (-s n_perp, wl), |w|^2 = 2 wl >= 2
    if n[k] >= 0.0:
        sg = -1.0
        wl = 1.0 + n[k]
    else:
        sg = 1.0
        wl = 1.0 - n[k]
    wh = wl * c
    for i in range(k):
        wh -= sg * n[i] * out[i]
    f = wh / wl
    for i in range(k):
        out[i] = sg * (out[i] + f * sg * n[i])
    out[k] = sg * (c - f * wl)
    return c


@dataclass(frozen=True)
class DirectionSample:
    direction: np.ndarray
    cos_theta: float


def sample_cosine(normal, d: int, rng: Stream) -> DirectionSample:
    """One direction from the cosine law about ``normal`` (one stream event)."""
    n = np.asarray(normal, dtype=float)
    if n.shape != (d,) or abs(float(np.linalg.norm(n)) - 1.0) > 1e-12:
        raise ValueError("normal must be a unit vector of length d")
    out = np.empty(d)
    c = cosine_direction(rng.draw(cosine_width(d), PURPOSE_DRAW), n, out)
    return DirectionSample(out, float(c))


@njit(cache=True, nogil=True)
def _cosine_many(u, n, out, cos):
    for i in range(u.shape[0]):
        cos[i] = cosine_direction(u[i], n, out[i])


def sample_cosine_many(normal, d: int, rng: Stream, count: int) -> tuple[np.ndarray, np.ndarray]:
    """``count`` cosine-law directions, shape (count, d), and their cosines."""
    n = np.asarray(normal, dtype=float)
    if n.shape != (d,) or abs(float(np.linalg.norm(n)) - 1.0) > 1e-12:
        raise ValueError("normal must be a unit vector of length d")
    u = rng.draw_many(count, cosine_width(d), PURPOSE_DRAW)
    out = np.empty((count, d))
    cos = np.empty(count)
    _cosine_many(u, n, out, cos)
    return out, cos


def kernel_value(d: int, x, nx, y, ny) -> float:
    """The formula part of K without the visibility indicator."""
    diff = np.asarray(y, dtype=float) - np.asarray(x, dtype=float)
    r = float(np.sqrt(diff @ diff))
    a = float(diff @ nx)
    b = float(-diff @ ny)
    if a <= 0.0 or b <= 0.0:
        return 0.0
    return gamma_d(d) * (a * b) / r ** (d + 1)


def visible(tube: TubeModel, x: BoundaryPoint, y: BoundaryPoint, rtol: float = 1e-6) -> bool:
    """Whether the open segment from x to y stays inside the tube."""
    diff = y.position - x.position
    r = float(np.linalg.norm(diff))
    if r == 0.0 or float(diff @ x.normal_n) <= 0.0 or float(diff @ y.normal_n) >= 0.0:
        return False
    try:
        hit = next_hit(tube, x.position, diff / r)
    except KtubeError:
        return False
    return float(np.linalg.norm(hit.hit.position - y.position)) <= rtol * r


def eval_kernel(tube: TubeModel, x: BoundaryPoint, y: BoundaryPoint) -> float:
    """Transition density K(x, y) with respect to the surface measure."""
    if not (x.regular and y.regular):
        return 0.0
    val = kernel_value(tube.dimension, x.position, x.normal_n, y.position, y.normal_n)
    if val == 0.0:
        return 0.0
    # visibility is tested from the lexicographically smaller endpoint so K is symmetric
    a, b = (x, y) if tuple(x.position) <= tuple(y.position) else (y, x)
    return val if visible(tube, a, b) else 0.0
