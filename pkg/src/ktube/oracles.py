"""Deterministic quadrature oracles, independent of the Monte Carlo code paths."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate
from scipy.special import beta

from .cosine import gamma_d, kernel_value
from .errors import InvalidParams
from .geometry import CYLINDER, TubeModel, ball_volume, sphere_area

DIVERGENT = "Divergent"


def gamma_d_quadrature(d: int) -> float:
    """``1 / integral of h.e over the half-sphere``, by one-dimensional quadrature."""
    if d == 2:
        flux = integrate.quad(math.cos, -math.pi / 2, math.pi / 2)[0]
    else:
        # h.e = cos(t) with t the polar angle; the slice at t is a sphere of radius sin(t)
        flux = sphere_area(d - 2) * integrate.quad(
            lambda t: math.cos(t) * math.sin(t) ** (d - 2), 0.0, math.pi / 2, epsabs=1e-14)[0]
    return 1.0 / flux


def _cylinder_radius(tube: TubeModel) -> float:
    if tube.base.code != CYLINDER or tube.outer is not None:
        raise InvalidParams("oracle defined for straight cylinders only")
    return float(tube.par[0])


def b_quadrature(tube: TubeModel, epsrel: float = 1e-10):
    """``E[((xi_1 - xi_0).e)^2]`` for a straight cylinder, by nested quadrature.

    Directions are written ``h = (c, s w)`` with ``c = h.e``, ``s^2 = 1 - c^2``
    and ``w`` a unit vector of the section; ``phi`` is the angle between ``w``
    and the inward normal.  The flight length is ``2 rho cos(phi) / s``.
    Returns :data:`DIVERGENT` for d = 2, where the integral is infinite.
    """
    rho = _cylinder_radius(tube)
    d = tube.dimension
    if d == 2:
        return DIVERGENT

    def inner(c):
        def f(phi):
            # (h.n) (t c)^2 s with h.n = s cos(phi) and t s = 2 rho cos(phi)
            ts = 2.0 * rho * math.cos(phi)
            return math.cos(phi) * (ts * c) ** 2 * math.sin(phi) ** (d - 3)

        return integrate.quad(f, 0.0, math.pi / 2, epsabs=0.0, epsrel=epsrel)[0]

    # surface element (1 - c^2)^((d-3)/2) dc dw; the extra 1/s of the integrand joins the weight
    a = (d - 4) / 2.0
    val = integrate.quad(inner, -1.0, 1.0, weight="alg", wvar=(a, a), epsabs=0.0, epsrel=epsrel)[0]
    return gamma_d(d) * sphere_area(d - 3) * val


def b_closed_form(rho: float, d: int) -> float:
    """``4 rho^2 gamma_d B(3/2, (d-2)/2) |S^{d-3}| B(2, (d-2)/2) / 2`` (d >= 3)."""
    return 4.0 * rho**2 * gamma_d(d) * beta(1.5, (d - 2) / 2) * sphere_area(d - 3) * beta(2, (d - 2) / 2) / 2.0


def cylinder_mean_chord(rho: float, d: int) -> float:
    """Mean stationary chord of a straight cylinder, ``C_d |B^{d-1}| rho / |S^{d-2}|``."""
    from .estimators import chord_constant

    return chord_constant(d) * ball_volume(d - 1) * rho / sphere_area(d - 2)


def cylinder_landing_density(tube: TubeModel, x: np.ndarray, nx: np.ndarray, z: float) -> float:
    """Density in ``alpha`` of the landing point of one step from ``x`` (d = 3 cylinder)."""
    rho = _cylinder_radius(tube)
    if tube.dimension != 3:
        raise InvalidParams("landing density oracle implemented for d = 3")
    th0 = math.atan2(x[2], x[1])

    def f(th):
        y = np.array([x[0] + z, rho * math.cos(th0 + th), rho * math.sin(th0 + th)])
        ny = np.array([0.0, -math.cos(th0 + th), -math.sin(th0 + th)])
        return kernel_value(3, x, nx, y, ny) * rho

    return integrate.quad(f, 0.0, 2.0 * math.pi, points=[math.pi], epsabs=1e-13, limit=200)[0]


def cylinder_landing_probs(tube: TubeModel, x: np.ndarray, nx: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Probabilities of the alpha-displacement bins ``(-inf, e0), [e0, e1), ..., [e_k, inf)``."""
    f = lambda z: cylinder_landing_density(tube, x, nx, z)  # noqa: E731
    inner = np.array([integrate.quad(f, lo, hi, epsabs=1e-12, limit=200)[0]
                      for lo, hi in zip(edges[:-1], edges[1:])])
    left = integrate.quad(f, -np.inf, edges[0], epsabs=1e-12, limit=200)[0]
    right = integrate.quad(f, edges[-1], np.inf, epsabs=1e-12, limit=200)[0]
    return np.concatenate([[left], inner, [right]])


def cylinder_kernel_mass(tube: TubeModel, x: np.ndarray, nx: np.ndarray) -> float:
    """Integral of K(x, .) against the surface measure of a d = 3 cylinder."""
    f = lambda z: cylinder_landing_density(tube, x, nx, z)  # noqa: E731
    return 2.0 * integrate.quad(f, 0.0, np.inf, epsabs=1e-12, limit=200)[0]
