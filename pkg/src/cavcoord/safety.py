"""Rear-end and lateral safety predicates over pairs of cubic trajectories.

Every constraint has the form ``max_t g(t) <= 0`` with ``g`` a cubic in
time, so it is checked exactly through the extremum of a cubic on an
interval rather than by sampling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .roadnet import ConflictPoint
from .trajectory import CubicTrajectory, time_at_position

SLACK_TOL = 1e-9


@dataclass(frozen=True)
class SafetyParams:
    gamma: float  # standstill distance (m)
    rho: float  # time headway (s)
    length: float  # vehicle length (m)

    def __post_init__(self):
        if self.gamma <= 0 or self.rho < 0 or self.length <= 0:
            raise ValueError(f"invalid safety parameters: {self}")


def safe_distance(params: SafetyParams, v: float) -> float:
    """Speed-dependent minimum gap ``gamma + rho * v``."""
    return params.gamma + params.rho * v


def _polyval(poly, t):
    c3, c2, c1, c0 = poly
    return ((c3 * t + c2) * t + c1) * t + c0


def _quadratic_roots(a, b, c):
    if a == 0.0:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    # cancellation-free pair
    q = -0.5 * (b + math.copysign(sq, b))
    if q == 0.0:
        return [0.0]
    return [q / a, c / q]


def extremum_on_interval(poly, t1: float, t2: float) -> tuple[float, float]:
    """Global maximum of a cubic over ``[t1, t2]``.

    Args:
        poly: coefficients ``(c3, c2, c1, c0)``, highest degree first.
        t1, t2: interval ends, ``t1 <= t2``.

    Returns:
        ``(t_star, value)``. Ties resolve to the earliest candidate.
    """
    if t2 < t1:
        raise ValueError(f"empty interval [{t1}, {t2}]")
    c3, c2, c1, _ = poly
    cands = [t1, t2]
    for r in _quadratic_roots(3.0 * c3, 2.0 * c2, c1):
        if t1 < r < t2:
            cands.append(r)
    best_t, best = t1, _polyval(poly, t1)
    for t in cands[1:]:
        val = _polyval(poly, t)
        if val > best:
            best_t, best = t, val
    return best_t, best


def taylor(traj: CubicTrajectory, origin: float):
    """Coefficients of ``p(origin + s)`` in ``s`` (highest first).

    The cubic is extended polynomially outside its horizon.
    """
    p, v, u = traj.local(origin - traj.t0)
    return (traj.a, 0.5 * u, v, p)


def _headway_poly(traj: CubicTrajectory, origin: float, params: SafetyParams):
    """Coefficients of ``delta(t) + p(t)`` around ``origin``."""
    c3, c2, c1, c0 = taylor(traj, origin)
    rho = params.rho
    return (c3, c2 + 3.0 * rho * c3, c1 + 2.0 * rho * c2, c0 + rho * c1 + params.gamma)


def rear_end_slack(
    traj_i: CubicTrajectory,
    traj_k: CubicTrajectory,
    params: SafetyParams,
    interval: tuple[float, float] | None = None,
    offset: float = 0.0,
) -> float:
    """Worst violation of the rear-end constraint of follower ``i`` behind ``k``.

    ``offset`` is the position of ``k``'s trajectory origin in ``i``'s frame.
    A non-positive result means the constraint holds. The interval defaults
    to the overlap of both horizons and is clipped to it otherwise.
    """
    lo = max(traj_i.t0, traj_k.t0)
    hi = min(traj_i.tf, traj_k.tf)
    if interval is not None:
        lo = max(lo, interval[0])
        hi = min(hi, interval[1])
    if hi < lo:
        raise ValueError("trajectory horizons do not overlap on the interval")
    hi_poly = _headway_poly(traj_i, lo, params)
    lead = taylor(traj_k, lo)
    poly = (
        hi_poly[0] - lead[0],
        hi_poly[1] - lead[1],
        hi_poly[2] - lead[2],
        hi_poly[3] - lead[3] - offset + params.length,
    )
    _, worst = extremum_on_interval(poly, 0.0, hi - lo)
    return worst


def rear_end_satisfied(traj_i, traj_k, params, interval=None, offset=0.0) -> bool:
    """``p_k - length - p_i >= gamma + rho v_i`` over the shared interval."""
    return rear_end_slack(traj_i, traj_k, params, interval, offset) <= SLACK_TOL


def _stay_behind(traj: CubicTrajectory, pos: float, until: float, params) -> float:
    """max of ``delta(t) + p(t) - pos`` over ``[t0, min(until, tf)]``.

    Returns ``-inf`` for an empty window.
    """
    hi = min(until, traj.tf)
    if hi < traj.t0:
        return -math.inf
    poly = _headway_poly(traj, traj.t0, params)
    poly = (poly[0], poly[1], poly[2], poly[3] - pos)
    _, worst = extremum_on_interval(poly, 0.0, hi - traj.t0)
    return worst


def lateral_slack(
    traj_i: CubicTrajectory,
    traj_j: CubicTrajectory,
    pos_i: float,
    pos_j: float,
    params: SafetyParams,
) -> float:
    """Min-of-maxes form of the lateral constraint at one conflict point.

    ``pos_i`` and ``pos_j`` are the conflict-point positions in each
    trajectory's own frame. Non-positive means safe: either ``i`` stays a
    safe distance short of the point until ``j`` reaches it, or the reverse.
    """
    t_jn = time_at_position(traj_j, pos_j)
    t_in = time_at_position(traj_i, pos_i)
    i_after_j = _stay_behind(traj_i, pos_i, t_jn, params)
    j_after_i = _stay_behind(traj_j, pos_j, t_in, params)
    return min(i_after_j, j_after_i)


def lateral_satisfied(
    traj_i: CubicTrajectory,
    traj_j: CubicTrajectory,
    cp: ConflictPoint,
    params: SafetyParams,
    origin_i: float = 0.0,
    origin_j: float = 0.0,
) -> bool:
    """Lateral safety at ``cp`` for ``traj_i`` on ``cp.path_i`` and ``traj_j`` on ``cp.path_j``.

    ``origin_*`` is the arc length at which each trajectory's ``p = 0`` sits.
    """
    pos_i = cp.pos_i - origin_i
    pos_j = cp.pos_j - origin_j
    if not (0.0 <= pos_i <= traj_i.S) or not (0.0 <= pos_j <= traj_j.S):
        raise ValueError(f"conflict point {cp.id} is not on both trajectories")
    return lateral_slack(traj_i, traj_j, pos_i, pos_j, params) <= SLACK_TOL
