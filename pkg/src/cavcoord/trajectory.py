"""Closed-form energy-optimal trajectories for a double integrator.

A vehicle entering a control zone at speed ``v0`` and leaving it after
travelling ``S`` metres follows the cubic

    p(t) = a t^3 + b t^2 + c t + d

with ``p(0) = 0``, ``v(0) = v0``, ``p(tf) = S`` and ``u(tf) = 0``. The
only free decision is the exit time ``tf``; this module gives the cubic for
a chosen ``tf``, the interval of exit times that keeps speed and control
within limits, and the inverse map from position to time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

# slack used by every limit comparison
FEAS_TOL = 1e-9


class InfeasibleEntry(ValueError):
    """Entry speed lies outside [v_min, v_max]."""


@dataclass(frozen=True)
class Limits:
    v_min: float
    v_max: float
    u_min: float
    u_max: float

    def __post_init__(self):
        if not (0.0 < self.v_min <= self.v_max):
            raise ValueError(f"need 0 < v_min <= v_max, got {self.v_min}, {self.v_max}")
        if not (self.u_min < 0.0 < self.u_max):
            raise ValueError(f"need u_min < 0 < u_max, got {self.u_min}, {self.u_max}")


@dataclass(frozen=True)
class CubicTrajectory:
    """Cubic position profile over ``[t0, tf]``.

    Coefficients are expressed in local time ``tau = t - t0`` so that
    ``d == 0`` and ``c == v0``. ``t0`` and ``tf`` are absolute; a freshly
    computed trajectory has ``t0 == 0``.
    """

    a: float
    b: float
    c: float
    d: float
    t0: float
    tf: float
    S: float
    v0: float

    @property
    def duration(self) -> float:
        return self.tf - self.t0

    def shifted(self, t0: float) -> "CubicTrajectory":
        """Same trajectory, starting at absolute time ``t0``."""
        return replace(self, t0=t0, tf=t0 + self.duration)

    def local(self, tau: float) -> tuple[float, float, float]:
        """(p, v, u) at local time ``tau`` without range checks."""
        a, b, c, d = self.a, self.b, self.c, self.d
        p = ((a * tau + b) * tau + c) * tau + d
        v = (3.0 * a * tau + 2.0 * b) * tau + c
        u = 6.0 * a * tau + 2.0 * b
        return p, v, u


@dataclass(frozen=True)
class ExitTimeBounds:
    t_lb: float
    t_ub: float
    # candidate exit times, kept for reporting
    t_umax: float
    t_vmax: float
    t_umin: float | None
    t_vmin: float


def coefficients(v0: float, S: float, tf: float) -> CubicTrajectory:
    """Cubic meeting ``p(0)=0, v(0)=v0, p(tf)=S, u(tf)=0``.

    Args:
        v0: entry speed (m/s).
        S: distance to travel (m).
        tf: travel time (s), measured from entry.
    """
    if v0 <= 0.0 or S <= 0.0 or tf <= 0.0:
        raise ValueError(f"v0, S and tf must be positive (got {v0}, {S}, {tf})")
    b = 3.0 * (S - v0 * tf) / (2.0 * tf * tf)
    a = -b / (3.0 * tf)
    return CubicTrajectory(a=a, b=b, c=v0, d=0.0, t0=0.0, tf=tf, S=S, v0=v0)


def evaluate(traj: CubicTrajectory, t: float) -> tuple[float, float, float]:
    """Position, speed and control at absolute time ``t``."""
    tau = t - traj.t0
    if tau < -FEAS_TOL or tau > traj.duration + FEAS_TOL:
        raise ValueError(f"t={t} outside horizon [{traj.t0}, {traj.tf}]")
    tau = min(max(tau, 0.0), traj.duration)
    return traj.local(tau)


def entry_control(v0: float, S: float, tf: float) -> float:
    """u(0) of the cubic with travel time ``tf``."""
    return 3.0 * (S - v0 * tf) / (tf * tf)


def exit_speed(v0: float, S: float, tf: float) -> float:
    """v(tf) of the cubic with travel time ``tf``."""
    return 1.5 * S / tf - 0.5 * v0


def is_state_control_feasible(traj: CubicTrajectory, limits: Limits) -> bool:
    """True iff the cubic keeps speed and control within ``limits``.

    Control is linear and vanishes at ``tf`` and speed is monotone, so the
    extremes sit at entry (control) and at exit (speed).
    """
    u0 = 2.0 * traj.b
    vf = exit_speed(traj.v0, traj.S, traj.duration)
    return (
        limits.u_min - FEAS_TOL <= u0 <= limits.u_max + FEAS_TOL
        and limits.v_min - FEAS_TOL <= vf <= limits.v_max + FEAS_TOL
    )


def exit_time_bounds(v0: float, S: float, limits: Limits) -> ExitTimeBounds:
    """Interval of travel times whose cubic respects speed and control limits.

    Both u(0) and v(tf) fall as tf grows (on the branch that matters), so the
    lower bound is the larger of the times at which u(0) = u_max and
    v(tf) = v_max. The upper bound is the time at which v(tf) = v_min,
    tightened by the smaller root of u(0) = u_min when that root exists.
    """
    if S <= 0.0:
        raise ValueError(f"S must be positive, got {S}")
    if not (limits.v_min - FEAS_TOL <= v0 <= limits.v_max + FEAS_TOL):
        raise InfeasibleEntry(
            f"entry speed {v0} outside [{limits.v_min}, {limits.v_max}]"
        )

    u_max, u_min = limits.u_max, limits.u_min
    t_umax = (math.sqrt(9.0 * v0 * v0 + 12.0 * S * u_max) - 3.0 * v0) / (2.0 * u_max)
    t_vmax = 3.0 * S / (v0 + 2.0 * limits.v_max)
    t_vmin = 3.0 * S / (v0 + 2.0 * limits.v_min)

    disc = 9.0 * v0 * v0 + 12.0 * S * u_min
    if disc < 0.0:
        # u(0) never reaches u_min
        t_umin = None
        t_ub = t_vmin
    else:
        # u_min < 0 so this is the smaller positive root
        t_umin = (math.sqrt(disc) - 3.0 * v0) / (2.0 * u_min)
        t_ub = min(t_umin, t_vmin)

    t_lb = max(t_umax, t_vmax)
    return ExitTimeBounds(
        t_lb=t_lb, t_ub=t_ub, t_umax=t_umax, t_vmax=t_vmax, t_umin=t_umin, t_vmin=t_vmin
    )


def time_at_position(
    traj: CubicTrajectory, p: float, tol: float = 1e-12, maxiter: int = 100
) -> float:
    """Absolute time at which ``traj`` reaches position ``p``.

    Safeguarded Newton on the monotone bracket ``[t0, tf]``: a Newton step
    that leaves the current bracket is replaced by bisection.
    """
    S = traj.S
    if p < -FEAS_TOL or p > S + FEAS_TOL:
        raise ValueError(f"position {p} outside [0, {S}]")
    if p <= 0.0:
        return traj.t0
    if p >= S:
        return traj.tf

    lo, hi = 0.0, traj.duration
    # constant-speed guess is exact for b == 0
    tau = min(max(p / traj.v0, lo), hi)
    for _ in range(maxiter):
        pos, vel, _ = traj.local(tau)
        f = pos - p
        if abs(f) <= tol:
            break
        if f > 0.0:
            hi = tau
        else:
            lo = tau
        if vel > 0.0:
            nxt = tau - f / vel
        else:
            nxt = lo - 1.0  # force bisection
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * max(1.0, hi):
            tau = nxt
            break
        tau = nxt
    return traj.t0 + tau
