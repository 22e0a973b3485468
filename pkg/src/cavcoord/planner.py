"""First-in-first-out coordination: each entering vehicle picks the earliest
exit time whose cubic stays clear of every trajectory already committed."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .roadnet import ConflictPoint, RoadNetwork
from .safety import SLACK_TOL, SafetyParams, lateral_slack, rear_end_slack
from .trajectory import (
    CubicTrajectory,
    ExitTimeBounds,
    InfeasibleEntry,
    Limits,
    coefficients,
    exit_time_bounds,
    time_at_position,
)

SCAN_STEP = 0.05
BISECT_TOL = 1e-4


class NoFeasibleExitTime(RuntimeError):
    def __init__(self, vehicle_id, binding: str, bounds: ExitTimeBounds):
        super().__init__(
            f"vehicle {vehicle_id}: no exit time in [{bounds.t_lb:.4f}, {bounds.t_ub:.4f}] "
            f"satisfies {binding}"
        )
        self.vehicle_id = vehicle_id
        self.binding = binding
        self.bounds = bounds


class StaleContext(RuntimeError):
    """The store changed between ``register_entry`` and ``store``."""


@dataclass(frozen=True)
class PlannedTrajectory:
    vehicle_id: str
    path_id: str
    traj: CubicTrajectory  # absolute time
    origin: float  # arc length on the path where p = 0
    bounds: ExitTimeBounds

    @property
    def t0(self) -> float:
        return self.traj.t0

    @property
    def tf(self) -> float:
        return self.traj.tf

    def position(self, t: float) -> float:
        """Arc length on the path at absolute time ``t`` (clamped to the horizon)."""
        tau = min(max(t - self.traj.t0, 0.0), self.traj.duration)
        return self.origin + self.traj.local(tau)[0]


@dataclass(frozen=True)
class PlanningContext:
    vehicle_id: str
    path_id: str
    t0: float
    v0: float
    origin: float
    S: float
    predecessor: PlannedTrajectory | None
    conflicts: tuple[tuple[ConflictPoint, PlannedTrajectory], ...]
    version: int


@dataclass
class Coordinator:
    """Roadside store of committed trajectories, in entry order."""

    network: RoadNetwork
    limits: Limits
    params: SafetyParams
    store: list[PlannedTrajectory] = field(default_factory=list)
    version: int = 0

    @staticmethod
    def sequence(entries):
        """Planning order for simultaneous entries: by time, then vehicle id.

        ``entries`` are ``(t0, vehicle_id, ...)`` tuples.
        """
        return sorted(entries, key=lambda e: (e[0], e[1]))

    def on_path(self, path_id: str) -> list[PlannedTrajectory]:
        return [pt for pt in self.store if pt.path_id == path_id]


def register_entry(
    coord: Coordinator,
    vehicle_id: str,
    path_id: str,
    t0: float,
    v0: float,
    position: float | None = None,
) -> PlanningContext:
    """Collect the committed trajectories a new entrant must respect.

    ``position`` is the entrant's arc length on its path (defaults to the
    control-zone start; later values are used when re-planning mid-zone).
    """
    limits = coord.limits
    if not (limits.v_min - 1e-9 <= v0 <= limits.v_max + 1e-9):
        raise InfeasibleEntry(f"vehicle {vehicle_id}: entry speed {v0:.4f} outside limits")
    v0 = min(max(v0, limits.v_min), limits.v_max)
    path = coord.network.paths[path_id]
    if not path.has_zone:
        raise ValueError(f"path {path_id} has no control zone")
    origin = path.cz_start if position is None else position
    S = path.cz_end - origin
    if S <= 0.0:
        raise ValueError(f"vehicle {vehicle_id} is already past the control zone")

    pred, best = None, math.inf
    for pt in coord.on_path(path_id):
        if pt.tf < t0 or pt.vehicle_id == vehicle_id:
            continue
        ahead = pt.position(t0)
        if ahead >= origin and ahead < best:
            pred, best = pt, ahead

    conflicts = []
    for cp in coord.network.conflicts_for(path_id):
        if cp.pos_i < origin:
            continue
        for pt in coord.on_path(cp.path_j):
            if pt.tf < t0 or pt.vehicle_id == vehicle_id:
                continue
            local_j = cp.pos_j - pt.origin
            if not (0.0 <= local_j <= pt.traj.S):
                continue
            if time_at_position(pt.traj, local_j) < t0:
                continue  # already through the point
            conflicts.append((cp, pt))
    return PlanningContext(
        vehicle_id=vehicle_id,
        path_id=path_id,
        t0=t0,
        v0=v0,
        origin=origin,
        S=S,
        predecessor=pred,
        conflicts=tuple(conflicts),
        version=coord.version,
    )


def violated_constraint(ctx: PlanningContext, traj: CubicTrajectory, params) -> str | None:
    """Name of the first safety constraint ``traj`` breaks, or None."""
    pred = ctx.predecessor
    if pred is not None and pred.tf >= traj.t0:
        slack = rear_end_slack(traj, pred.traj, params, offset=pred.origin - ctx.origin)
        if slack > SLACK_TOL:
            return f"rear-end behind {pred.vehicle_id}"
    for cp, other in ctx.conflicts:
        slack = lateral_slack(
            traj, other.traj, cp.pos_i - ctx.origin, cp.pos_j - other.origin, params
        )
        if slack > SLACK_TOL:
            return f"lateral at node {cp.id} with {other.vehicle_id}"
    return None


def plan(
    ctx: PlanningContext, limits: Limits, params: SafetyParams, S: float | None = None
) -> PlannedTrajectory:
    """Earliest feasible exit time and its trajectory.

    Feasibility in ``tf`` comes in bands, so the interval is scanned on a
    coarse grid and the first feasible band is located by bisection.
    """
    S = ctx.S if S is None else S
    bounds = exit_time_bounds(ctx.v0, S, limits)

    def check(tf):
        traj = coefficients(ctx.v0, S, tf).shifted(ctx.t0)
        return traj, violated_constraint(ctx, traj, params)

    def done(traj):
        return PlannedTrajectory(ctx.vehicle_id, ctx.path_id, traj, ctx.origin, bounds)

    traj, why = check(bounds.t_lb)
    if why is None:
        return done(traj)

    prev = bounds.t_lb
    k = 1
    while True:
        tf = min(bounds.t_lb + k * SCAN_STEP, bounds.t_ub)
        traj, reason = check(tf)
        if reason is None:
            lo, hi, best = prev, tf, traj
            while hi - lo > BISECT_TOL:
                mid = 0.5 * (lo + hi)
                t_mid, r_mid = check(mid)
                if r_mid is None:
                    hi, best = mid, t_mid
                else:
                    lo = mid
            return done(best)
        why = reason
        if tf >= bounds.t_ub:
            raise NoFeasibleExitTime(ctx.vehicle_id, why, bounds)
        prev = tf
        k += 1


def store(coord: Coordinator, planned: PlannedTrajectory, ctx: PlanningContext) -> Coordinator:
    """Commit ``planned``; the context must still be current."""
    if ctx.version != coord.version:
        raise StaleContext(
            f"vehicle {planned.vehicle_id}: store changed since entry, re-plan required"
        )
    fresh = register_entry(
        coord, ctx.vehicle_id, ctx.path_id, ctx.t0, ctx.v0, position=ctx.origin
    )
    why = violated_constraint(fresh, planned.traj, coord.params)
    if why is not None:
        raise ValueError(f"vehicle {planned.vehicle_id}: refusing unsafe plan ({why})")
    coord.store.append(planned)
    coord.store.sort(key=lambda pt: (pt.t0, pt.vehicle_id))
    coord.version += 1
    return coord


def purge_exited(coord: Coordinator, now: float) -> Coordinator:
    coord.store = [pt for pt in coord.store if pt.tf >= now]
    return coord
