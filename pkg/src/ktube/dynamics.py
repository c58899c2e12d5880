"""Knudsen random walk (hit chain) and the unit-speed stochastic billiard.

Step ``s`` of trajectory ``m`` in a run seeded with ``seed`` draws its
uniforms from counter ``(s, retry, PURPOSE_STEP)`` under key ``(seed, m)``.
A trajectory is therefore a pure function of the tube, its starting point
and the key: it does not depend on the number of workers or on when the
lazily realized knot windows of a Poisson-knot tube are extended.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .cosine import cosine_direction
from .errors import InvalidParams, OutOfRange, StuckPoint
from .geometry import (
    BoundaryPoint,
    TubeModel,
    boundary_frame,
    boundary_point_at,
    is_regular,
    sample_boundary_uniform,
)
from .raycast import HIT_NEED_WINDOW, HIT_OK, cast_ray, cast_tolerances
from .rng import PURPOSE_STEP, Stream, fill_uniforms

MAX_RETRIES = 64
INIT_WINDOW = (-0.5, 0.5)

_DONE = 0
_NEED_WINDOW = 1
_STUCK = 2


@njit(cache=True, nogil=True)
def _walk(fam, par, ka, kr, k0, k1, step0, i_start, nsteps, x, eps_hit, lmax, tol,
          alpha_out, tau_out, pos_out, record_pos):
    """Advance the chain from step ``i_start`` to ``nsteps``.

    ``x`` holds the current hit and is updated in place.  Returns
    ``(next step, status, anomalies)``; on ``_NEED_WINDOW`` the caller extends
    the knot range and calls again from the returned step.
    """
    d = x.shape[0]
    u = np.empty(d + 1)
    n = np.empty(d)
    n2 = np.empty(d)
    r = np.empty(d)
    v = np.empty(d)
    y = np.empty(d)
    purpose = np.uint64(PURPOSE_STEP)
    anomalies = 0
    for i in range(i_start, nsteps):
        boundary_frame(fam, par, ka, kr, x, n, r)
        ok = False
        t = 0.0
        bad = 0
        for retry in range(MAX_RETRIES):
            fill_uniforms(k0, k1, step0 + np.uint64(i), np.uint64(retry), purpose, u)
            cosine_direction(u, n, v)
            t, st = cast_ray(fam, par, ka, kr, x, v, eps_hit, lmax, tol)
            if st == HIT_NEED_WINDOW:
                return i, _NEED_WINDOW, anomalies
            if st == HIT_OK:
                for j in range(d):
                    y[j] = x[j] + t * v[j]
                boundary_frame(fam, par, ka, kr, y, n2, r)
                if is_regular(fam, ka, y, n2):
                    ok = True
                    break
            bad += 1
        if not ok:
            return i, _STUCK, anomalies
        anomalies += bad
        for j in range(d):
            x[j] = y[j]
        alpha_out[i + 1] = y[0]
        tau_out[i + 1] = tau_out[i] + t
        if record_pos:
            for j in range(d):
                pos_out[i + 1, j] = y[j]
    return nsteps, _DONE, anomalies


def _run_walk(tube: TubeModel, key, step0: int, x: np.ndarray, nsteps: int,
              alpha: np.ndarray, tau: np.ndarray, pos: np.ndarray | None, index: int = 0) -> int:
    """Drive :func:`_walk`, extending knot windows on demand.  Returns anomalies."""
    eps_hit, lmax, tol = cast_tolerances(tube)
    k0, k1 = key
    record = pos is not None
    pos_buf = pos if record else np.empty((1, tube.dimension))
    i = 0
    anomalies = 0
    tube.ensure_range(x[0] - 4.0 * tube.m_hat, x[0] + 4.0 * tube.m_hat)
    while True:
        code, par, ka, kr = tube.arrays()
        i, status, a = _walk(code, par, ka, kr, k0, k1, np.uint64(step0), i, nsteps, x,
                             eps_hit, lmax, tol, alpha, tau, pos_buf, record)
        anomalies += a
        if status == _DONE:
            return anomalies
        if status == _STUCK:
            raise StuckPoint(
                f"trajectory {index}: no valid direction after {MAX_RETRIES} retries at step {i}",
                trajectory=index, step=i,
            )
        lo, hi = (ka[0], ka[-1]) if ka.shape[0] > 1 else (x[0], x[0])
        span = max(hi - lo, 1.0)
        tube.ensure_range(min(lo, x[0]) - span, max(hi, x[0]) + span)


@njit(cache=True, nogil=True)
def _landings(fam, par, ka, kr, k0, k1, step0, k_start, x0, eps_hit, lmax, tol, out):
    # row k of out: landing point of step step0 + k taken from x0
    d = x0.shape[0]
    x = np.empty(d)
    alpha = np.zeros(2)
    tau = np.zeros(2)
    pos = np.empty((2, d))
    anomalies = 0
    for k in range(k_start, out.shape[0]):
        for j in range(d):
            x[j] = x0[j]
        _, status, a = _walk(fam, par, ka, kr, k0, k1, step0 + np.uint64(k), 0, 1, x, eps_hit, lmax, tol,
                             alpha, tau, pos, False)
        if status != _DONE:
            return k, status, anomalies
        anomalies += a
        for j in range(d):
            out[k, j] = x[j]
    return out.shape[0], _DONE, anomalies


def landing_samples(tube: TubeModel, xi: BoundaryPoint, count: int, rng: Stream) -> np.ndarray:
    """Landing points of ``count`` independent steps from the fixed point ``xi``."""
    _check_start(xi)
    eps_hit, lmax, tol = cast_tolerances(tube)
    out = np.empty((count, tube.dimension))
    k0, k1 = rng.key
    k = 0
    while True:
        code, par, ka, kr = tube.arrays()
        k, status, _ = _landings(code, par, ka, kr, k0, k1, np.uint64(rng.counter), k, xi.position,
                                 eps_hit, lmax, tol, out)
        if status == _DONE:
            break
        if status == _STUCK:
            raise StuckPoint(f"no valid direction after {MAX_RETRIES} retries", step=rng.counter + k)
        span = max(ka[-1] - ka[0], 1.0)
        tube.ensure_range(ka[0] - span, ka[-1] + span)
    rng.counter += count
    return out


# ---------------------------------------------------------------------------
# single-trajectory API
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Chord:
    start: BoundaryPoint
    end: BoundaryPoint
    length: float
    horiz: float


@dataclass
class Trajectory:
    """Hit chain ``xi_0 .. xi_N`` with cumulative flight lengths ``tau``."""

    tube: TubeModel
    positions: np.ndarray
    tau: np.ndarray
    anomalies: int = 0
    _hits: list | None = field(default=None, repr=False)

    @property
    def n_steps(self) -> int:
        return self.tau.shape[0] - 1

    @property
    def alpha(self) -> np.ndarray:
        return self.positions[:, 0]

    @property
    def hits(self) -> list[BoundaryPoint]:
        if self._hits is None:
            self._hits = [boundary_point_at(self.tube, p) for p in self.positions]
        return self._hits

    def chord(self, k: int) -> Chord:
        a, b = self.positions[k], self.positions[k + 1]
        return Chord(boundary_point_at(self.tube, a), boundary_point_at(self.tube, b),
                     float(self.tau[k + 1] - self.tau[k]), float(b[0] - a[0]))

    def to_csv(self, path) -> None:
        """Debug dump with columns n, alpha, tau, horiz, length."""
        write_trajectory_csv(path, self.alpha, self.tau)


def write_trajectory_csv(path, alpha: np.ndarray, tau: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "alpha", "tau", "horiz", "length"])
        for k in range(alpha.shape[0]):
            h = alpha[k] - alpha[k - 1] if k else 0.0
            ln = tau[k] - tau[k - 1] if k else 0.0
            w.writerow([k, f"{alpha[k]:.17g}", f"{tau[k]:.17g}", f"{h:.17g}", f"{ln:.17g}"])


def _check_start(xi: BoundaryPoint) -> None:
    if not xi.regular:
        raise InvalidParams("starting point must be a regular boundary point")


def krw_trajectory(tube: TubeModel, xi0: BoundaryPoint, n: int, rng: Stream) -> Trajectory:
    """``n`` steps of the hit chain from ``xi0``.

    The stream counter is the index of the first step and advances by ``n``,
    so ``n`` calls of :func:`krw_step` reproduce one call with ``n`` steps.
    """
    _check_start(xi0)
    if n < 0:
        raise InvalidParams("n must be >= 0")
    d = tube.dimension
    pos = np.empty((n + 1, d))
    pos[0] = xi0.position
    alpha = np.empty(n + 1)
    tau = np.empty(n + 1)
    alpha[0] = xi0.position[0]
    tau[0] = 0.0
    x = np.array(xi0.position, dtype=float)
    anomalies = _run_walk(tube, rng.key, rng.counter, x, n, alpha, tau, pos, rng.index)
    rng.counter += n
    return Trajectory(tube, pos, tau, anomalies)


def krw_step(tube: TubeModel, xi: BoundaryPoint, rng: Stream) -> tuple[BoundaryPoint, Chord]:
    """One cosine-law flight from ``xi`` to the next regular boundary hit."""
    traj = krw_trajectory(tube, xi, 1, rng)
    y = boundary_point_at(tube, traj.positions[1])
    return y, Chord(xi, y, float(traj.tau[1]), float(y.position[0] - xi.position[0]))


def hits_up_to(traj: Trajectory, t: float) -> int:
    """``n(t) = max{n : tau_n <= t}``."""
    tau = traj.tau
    if not 0.0 <= t < tau[-1]:
        raise OutOfRange(f"t = {t} outside [0, tau_N = {tau[-1]})")
    return int(np.searchsorted(tau, t, side="right")) - 1


def ksb_position(traj: Trajectory, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Position ``X_t`` and direction ``V_t`` of the unit-speed billiard."""
    k = hits_up_to(traj, t)
    a, b = traj.positions[k], traj.positions[k + 1]
    ln = traj.tau[k + 1] - traj.tau[k]
    v = (b - a) / ln
    return a + v * (t - traj.tau[k]), v


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass
class Ensemble:
    """Independent trajectories of one tube realization, stored as arrays.

    ``alpha`` and ``tau`` have shape (M, N+1); ``positions`` (optional) has
    shape (M, N+1, d).  Row ``i`` is trajectory ``indices[i]`` of ``seed``.
    """

    tube: TubeModel
    seed: int
    indices: np.ndarray
    alpha: np.ndarray
    tau: np.ndarray
    anomalies: np.ndarray
    positions: np.ndarray | None = None

    @property
    def n_trajectories(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_steps(self) -> int:
        return self.alpha.shape[1] - 1

    @property
    def horiz(self) -> np.ndarray:
        return np.diff(self.alpha, axis=1)

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.tau, axis=1)

    def subset(self, rows) -> "Ensemble":
        rows = np.asarray(rows)
        return Ensemble(self.tube, self.seed, self.indices[rows], self.alpha[rows], self.tau[rows],
                        self.anomalies[rows], None if self.positions is None else self.positions[rows])

    def trajectory(self, i: int) -> Trajectory:
        if self.positions is None:
            raise InvalidParams("ensemble was simulated without positions")
        return Trajectory(self.tube, self.positions[i], self.tau[i], int(self.anomalies[i]))

    def ksb_alpha(self, t) -> np.ndarray:
        """``X_t . e`` of every trajectory (t measured from tau_0 = 0)."""
        t = np.broadcast_to(np.asarray(t, dtype=float), (self.n_trajectories,))
        if np.any(t < 0.0) or np.any(t >= self.tau[:, -1]):
            raise OutOfRange("t beyond the simulated horizon of some trajectory")
        return _interp_alpha(self.alpha, self.tau, np.ascontiguousarray(t))


@njit(cache=True)
def _interp_alpha(alpha, tau, t):
    out = np.empty(alpha.shape[0])
    for m in range(alpha.shape[0]):
        k = np.searchsorted(tau[m], t[m], side="right") - 1
        f = (t[m] - tau[m, k]) / (tau[m, k + 1] - tau[m, k])
        out[m] = alpha[m, k] + f * (alpha[m, k + 1] - alpha[m, k])
    return out


def start_point(tube: TubeModel, seed: int, index: int) -> BoundaryPoint:
    """Default start: surface-uniform on the slab ``-1/2 <= alpha <= 1/2``."""
    return sample_boundary_uniform(tube, *INIT_WINDOW, Stream(seed, index))


def simulate_ensemble(tube: TubeModel, n_trajectories: int, n_steps: int, seed: int,
                      workers: int = 1, record_positions: bool = False,
                      first_index: int = 0) -> Ensemble:
    """Simulate trajectories ``first_index .. first_index + M - 1`` of ``seed``.

    Trajectories are split into ``workers`` contiguous static chunks run on a
    thread pool; the output is identical for every worker count.
    """
    if n_trajectories < 1 or n_steps < 0:
        raise InvalidParams("need n_trajectories >= 1 and n_steps >= 0")
    d = tube.dimension
    m_tot = n_trajectories
    alpha = np.empty((m_tot, n_steps + 1))
    tau = np.zeros((m_tot, n_steps + 1))
    anomalies = np.zeros(m_tot, dtype=np.int64)
    pos = np.empty((m_tot, n_steps + 1, d)) if record_positions else None
    indices = np.arange(first_index, first_index + m_tot, dtype=np.int64)

    def run(rows):
        for i in rows:
            idx = int(indices[i])
            xi0 = start_point(tube, seed, idx)
            x = np.array(xi0.position)
            alpha[i, 0] = x[0]
            if pos is not None:
                pos[i, 0] = x
            anomalies[i] = _run_walk(tube, Stream(seed, idx).key, 0, x, n_steps, alpha[i], tau[i],
                                     None if pos is None else pos[i], idx)

    workers = max(1, int(workers))
    chunks = [c for c in np.array_split(np.arange(m_tot), workers) if c.size]
    if len(chunks) == 1:
        run(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            for f in [pool.submit(run, c) for c in chunks]:
                f.result()
    return Ensemble(tube, int(seed), indices, alpha, tau, anomalies, pos)
