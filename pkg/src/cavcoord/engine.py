"""Fixed-step simulation of vehicles on a road network.

Vehicles spawn on the first path of their route and drive under IDM. In
``optimal`` mode a vehicle crossing into a control zone runs one planning
transaction with the coordinator and then follows its cubic to the zone
exit. In ``baseline`` mode zones are ignored and junctions are governed by
yield and stop signs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import (
    STOP_HOLD,
    STOP_SPEED,
    Decision,
    IdmParams,
    StopQueue,
    idm_accel,
    stop_queue_step,
    yield_decision,
)
from .planner import (
    Coordinator,
    NoFeasibleExitTime,
    PlannedTrajectory,
    plan,
    purge_exited,
    register_entry,
    store,
)
from .scenario import ScenarioConfig
from .trajectory import InfeasibleEntry

MODES = ("optimal", "baseline")
TRACKING = ("exact", "lagged")
LOOKAHEAD = 8.0  # m
REPLAN_PERIOD = 0.5  # s
VIOLATION_TOL = 1e-6  # m


@dataclass
class VehicleState:
    id: str
    route: tuple[str, ...]
    ego: bool = False
    leg: int = 0
    p: float = 0.0
    v: float = 0.0
    u: float = 0.0
    s: float = math.inf
    mode: str = "baseline"
    plan: PlannedTrajectory | None = None
    route_base: float = 0.0
    zone_done: bool = False
    stopped_for: float = 0.0
    noise: float = 0.0  # current speed disturbance, lagged tracking only
    replan_at: float = math.inf
    committed: set = field(default_factory=set)
    queued: set = field(default_factory=set)
    released: set = field(default_factory=set)

    @property
    def path_id(self) -> str:
        return self.route[self.leg]


@dataclass
class PlanEvent:
    vehicle: str
    path: str
    t0: float
    v0: float
    S: float
    t_lb: float | None
    t_ub: float | None
    tf_planned: float | None
    tf_actual: float | None = None
    status: str = "planned"
    reason: str = ""


@dataclass
class VehicleSummary:
    ego: bool
    route: tuple[str, ...]
    spawn: float
    despawn: float | None = None
    distance: float = 0.0
    stops: int = 0


@dataclass
class SimLog:
    scenario: str
    mode: str
    tracking: str
    seed: int
    dt: float
    # (time, vehicle, path, s, route position, v, u, mode, in_zone)
    records: list[tuple] = field(default_factory=list)
    plans: list[PlanEvent] = field(default_factory=list)
    vehicles: dict[str, VehicleSummary] = field(default_factory=dict)
    rear_min_slack: float = math.inf
    lateral_min_slack: float = math.inf
    violations: list[str] = field(default_factory=list)
    # slack breaches under lagged tracking: tracking error, not a planning fault
    deviations: list[str] = field(default_factory=list)
    collisions: list[str] = field(default_factory=list)
    store_peak: int = 0


@dataclass
class Metrics:
    v_min_zone: float
    v_avg_zone: float
    v_min_all: float
    v_avg_all: float
    rmse_pct: float | None
    exits: list[tuple[str, float, float]]
    safety_violations: int
    collisions: int
    planning_failures: int
    vehicles: dict[str, dict]
    tracking_deviations: int = 0

    def ego(self) -> dict[str, dict]:
        return {k: v for k, v in self.vehicles.items() if v["ego"]}


class World:
    """Mutable simulation state; advance it with :func:`step`."""

    def __init__(self, cfg: ScenarioConfig, mode: str = "optimal", tracking: str | None = None,
                 seed: int | None = None):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        tracking = tracking or cfg.tracking
        if tracking not in TRACKING:
            raise ValueError(f"tracking must be one of {TRACKING}, got {tracking!r}")
        self.cfg = cfg
        self.mode = mode
        self.tracking = tracking
        self.seed = cfg.seed if seed is None else seed
        self.network = cfg.network()
        self.paths = self.network.paths
        self.coord = Coordinator(self.network, cfg.limits, cfg.safety)
        self.pending = sorted(cfg.vehicles, key=lambda v: (v.release, v.id))
        self.active: dict[str, VehicleState] = {}
        self.tick = 0
        self.rng = np.random.default_rng(self.seed)
        self.queues = {rule.id: StopQueue() for rule in cfg.stops}
        self.log = SimLog(cfg.name, mode, tracking, self.seed, cfg.dt)
        self._idm_cache: dict[float, IdmParams] = {}
        self._open_plans: dict[str, PlanEvent] = {}
        self._collision_keys: set = set()
        # per-vehicle (t, leg, p, v, mode) for the lateral monitor
        self.traces: dict[str, list[tuple]] = {}

    @property
    def t(self) -> float:
        return self.tick * self.cfg.dt

    def done(self) -> bool:
        return not self.pending and not self.active

    # -- helpers -----------------------------------------------------------

    def _idm(self, desired: float) -> IdmParams:
        par = self._idm_cache.get(desired)
        if par is None:
            par = self._idm_cache[desired] = replace(self.cfg.idm, desired_speed=desired)
        return par

    def _by_path(self):
        out: dict[str, list[VehicleState]] = {}
        for veh in self.active.values():
            out.setdefault(veh.path_id, []).append(veh)
        return out

    def leader(self, veh: VehicleState, by_path) -> tuple[VehicleState | None, float]:
        """Nearest vehicle ahead along ``veh``'s route and the distance to it."""
        base = -veh.p
        for k in range(veh.leg, len(veh.route)):
            pid = veh.route[k]
            best, best_d = None, math.inf
            for other in by_path.get(pid, ()):
                if other is veh:
                    continue
                d = base + other.p
                if k == veh.leg and (other.p < veh.p or (other.p == veh.p and other.id < veh.id)):
                    continue
                if d < best_d:
                    best, best_d = other, d
            if best is not None:
                return best, best_d
            base += self.paths[pid].length
            if base > LOOKAHEAD:
                break
        return None, math.inf

    def _desired_speed(self, veh: VehicleState) -> float:
        cfg = self.cfg
        path = self.paths[veh.path_id]
        speed = cfg.speed_limit
        if self.mode == "optimal" and cfg.outside_cap is not None and not path.in_zone(veh.p):
            speed = min(speed, cfg.outside_cap)
        cap = cfg.entry_caps.get(veh.path_id)
        if cap is not None and path.has_zone and veh.p < path.cz_start:
            speed = min(speed, cap)
        return speed

    def _obstacles(self, veh: VehicleState, by_path) -> list[float]:
        """Distances to virtual standing obstacles (yield and stop lines)."""
        if self.mode != "baseline":
            return self._degraded_holds(veh, by_path) if veh.mode == "degraded" else []
        out = []
        lim = self.cfg.limits
        for rule in self.cfg.yields:
            if rule.path != veh.path_id or rule.id in veh.committed or veh.p >= rule.zone[0]:
                continue
            mainline = [
                (o.p, z0, z1)
                for pid, z0, z1 in rule.mainline
                for o in by_path.get(pid, ())
            ]
            d_line = rule.zone[0] - veh.p
            if yield_decision(mainline) is Decision.YIELD:
                out.append(d_line)
            elif d_line <= veh.v * veh.v / (2.0 * abs(lim.u_min)) + self.cfg.safety.gamma:
                veh.committed.add(rule.id)  # too close to stop, go
        for rule in self.cfg.stops:
            for pid, _q, b0, _b1 in rule.approaches:
                if pid == veh.path_id and rule.id not in veh.released and veh.p < b0:
                    out.append(b0 - veh.p)
        return out

    def _degraded_holds(self, veh: VehicleState, by_path) -> list[float]:
        """Hold a degraded vehicle short of nodes that crossing traffic has not cleared.

        It gives way to planned vehicles, and to degraded ones nearer their side
        of the node (ties by id), so two degraded vehicles never wait on each other.
        """
        length = self.cfg.safety.length
        brake = veh.v * veh.v / (2.0 * abs(self.cfg.limits.u_min))
        out = []
        for cp in self.network.conflicts_for(veh.path_id):
            d_own = cp.pos_i - veh.p
            if d_own < brake:
                continue  # already committed to this node
            for o in by_path.get(cp.path_j, ()):
                if o.p >= cp.pos_j + length or o.mode not in ("planned", "degraded"):
                    continue
                d_other = cp.pos_j - o.p
                if o.mode == "planned" or (d_other, o.id) < (d_own, veh.id):
                    out.append(d_own)
                    break
        return out

    def _idm_control(self, veh: VehicleState, by_path) -> float:
        lim = self.cfg.limits
        length = self.cfg.safety.length
        par = self._idm(self._desired_speed(veh))
        lead, dist = self.leader(veh, by_path)
        if lead is None:
            acc = idm_accel(veh.v, 0.0, math.inf, par, lim.u_min, lim.u_max)
        else:
            acc = idm_accel(veh.v, veh.v - lead.v, dist - length, par, lim.u_min, lim.u_max)
        for d in self._obstacles(veh, by_path):
            acc = min(acc, idm_accel(veh.v, veh.v, d, par, lim.u_min, lim.u_max))
        return acc

    def _spawn(self):
        keep = []
        length = self.cfg.safety.length
        by_path = self._by_path()
        for spec in self.pending:
            if spec.release > self.t + 1e-9:
                keep.append(spec)
                continue
            first = spec.route[0]
            blocked = any(
                o.p - length < self.cfg.safety.gamma + self.cfg.safety.rho * spec.speed
                for o in by_path.get(first, ())
            )
            if blocked:
                keep.append(spec)
                continue
            veh = VehicleState(spec.id, spec.route, spec.ego, v=spec.speed)
            self.active[spec.id] = veh
            by_path.setdefault(first, []).append(veh)
            self.log.vehicles[spec.id] = VehicleSummary(spec.ego, spec.route, self.t)
            self.traces[spec.id] = []
        self.pending = keep

    # -- planning ------------------------------------------------------------

    def _try_plan(self, veh: VehicleState, t0: float, v0: float, position: float | None,
                  status: str) -> bool:
        coord = self.coord
        path = self.paths[veh.path_id]
        purge_exited(coord, t0)
        origin = path.cz_start if position is None else position
        S = path.cz_end - origin
        try:
            ctx = register_entry(coord, veh.id, veh.path_id, t0, v0, position=position)
            planned = plan(ctx, coord.limits, coord.params)
            store(coord, planned, ctx)
        except (InfeasibleEntry, NoFeasibleExitTime) as exc:
            bounds = getattr(exc, "bounds", None)
            self.log.plans.append(PlanEvent(
                veh.id, veh.path_id, t0, v0, S,
                bounds.t_lb + t0 if bounds else None,
                bounds.t_ub + t0 if bounds else None,
                None, status="failed", reason=str(exc),
            ))
            return False
        ev = PlanEvent(
            veh.id, veh.path_id, t0, v0, S,
            planned.bounds.t_lb + t0, planned.bounds.t_ub + t0, planned.tf, status=status,
        )
        self.log.plans.append(ev)
        self._open_plans[veh.id] = ev
        self.log.store_peak = max(self.log.store_peak, len(coord.store))
        veh.plan = planned
        veh.mode = "planned"
        veh.replan_at = math.inf
        return True

    def _set_from_plan(self, veh: VehicleState, t: float):
        pt = veh.plan
        tau = min(max(t - pt.t0, 0.0), pt.traj.duration)
        p, v, u = pt.traj.local(tau)
        veh.p, veh.v, veh.u = pt.origin + p, v, u

    # -- monitors ------------------------------------------------------------

    def _flag(self, key, text, collision=False):
        if key in self._collision_keys:
            return
        self._collision_keys.add(key)
        self._slack_list(collision).append(text)

    def _slack_list(self, collision=False) -> list[str]:
        if collision:
            return self.log.collisions
        return self.log.deviations if self.tracking == "lagged" else self.log.violations

    def _monitor(self, t: float, by_path):
        cfg = self.cfg
        length = cfg.safety.length
        gamma, rho = cfg.safety.gamma, cfg.safety.rho
        for vid in sorted(self.active):
            veh = self.active[vid]
            lead, dist = self.leader(veh, by_path)
            veh.s = dist - length if lead is not None else math.inf
            if lead is not None and veh.s <= 0.0:
                self._flag(("rear", vid, lead.id), f"t={t:.2f}: {vid} hit {lead.id}", True)
            if (self.mode == "optimal" and lead is not None and veh.mode == "planned"
                    and lead.mode == "planned" and lead.path_id == veh.path_id):
                slack = veh.s - (gamma + rho * veh.v)
                self.log.rear_min_slack = min(self.log.rear_min_slack, slack)
                if slack < -VIOLATION_TOL:
                    self._flag(("headway", vid, lead.id),
                               f"t={t:.2f}: rear-end slack {slack:.2e} m for {vid} behind {lead.id}")
        for cp in self.network.conflicts:
            inside_i = [o for o in by_path.get(cp.path_i, ()) if cp.pos_i <= o.p <= cp.pos_i + length]
            if not inside_i:
                continue
            inside_j = [o for o in by_path.get(cp.path_j, ()) if cp.pos_j <= o.p <= cp.pos_j + length]
            for a in inside_i:
                for b in inside_j:
                    self._flag(("lat", cp.id, a.id, b.id),
                               f"t={t:.2f}: {a.id} and {b.id} both on node {cp.id}", True)

    def lateral_monitor(self):
        """Tick-level lateral slack for every pair that crossed a node under plans.

        The vehicle that crossed second must have kept a safe distance short
        of the node, for as long as it was on its plan, until the first
        vehicle reached the node.
        """
        if self.mode != "optimal":
            return
        gamma, rho = self.cfg.safety.gamma, self.cfg.safety.rho
        crossings: dict[tuple[str, float], list] = {}
        for vid, trace in self.traces.items():
            route = self.log.vehicles[vid].route
            for cp in self.network.conflicts:
                for pid, pos in ((cp.path_i, cp.pos_i), (cp.path_j, cp.pos_j)):
                    if pid not in route:
                        continue
                    leg = route.index(pid)
                    prev = None
                    for rec in trace:
                        if rec[1] != leg:
                            continue
                        if prev is not None and prev[2] < pos <= rec[2]:
                            frac = (pos - prev[2]) / (rec[2] - prev[2])
                            tc = prev[0] + frac * (rec[0] - prev[0])
                            crossings.setdefault((cp.id, pid), []).append((tc, vid, leg, pos, prev[4]))
                            break
                        prev = rec
        for cp in self.network.conflicts:
            for ci in crossings.get((cp.id, cp.path_i), ()):
                for cj in crossings.get((cp.id, cp.path_j), ()):
                    first, second = (ci, cj) if ci[0] <= cj[0] else (cj, ci)
                    t_first = first[0]
                    _, vid, leg, pos, _ = second
                    worst = math.inf
                    for t, lg, p, v, mode in self.traces[vid]:
                        if t > t_first:
                            break
                        if lg == leg and mode == "planned":
                            worst = min(worst, pos - p - (gamma + rho * v))
                    if worst is math.inf:
                        continue
                    self.log.lateral_min_slack = min(self.log.lateral_min_slack, worst)
                    if worst < -VIOLATION_TOL:
                        self._slack_list().append(
                            f"lateral slack {worst:.2e} m at node {cp.id}: {vid} after {first[1]}"
                        )


def step(world: World, dt: float | None = None) -> World:
    """Advance ``world`` by one tick."""
    cfg = world.cfg
    dt = cfg.dt if dt is None else dt
    if dt <= 0:
        raise ValueError("dt must be positive")
    t = world.tick * dt
    t1 = (world.tick + 1) * dt
    world._spawn()
    by_path = world._by_path()
    lagged = world.tracking == "lagged"
    alpha = 1.0 - math.exp(-dt / cfg.lag) if lagged else 1.0
    # speed disturbance: Ornstein-Uhlenbeck with stationary std cfg.noise
    decay = math.exp(-dt / cfg.noise_corr)
    kick = cfg.noise * math.sqrt(1.0 - decay * decay)

    order = sorted(world.active)
    commands = {}
    for vid in order:
        veh = world.active[vid]
        if veh.mode == "planned":
            tau = min(max(t - veh.plan.t0, 0.0), veh.plan.traj.duration)
            commands[vid] = veh.plan.traj.local(tau)[2] if tau < veh.plan.traj.duration else 0.0
        else:
            commands[vid] = world._idm_control(veh, by_path)

    old = {}
    for vid in order:
        veh = world.active[vid]
        old[vid] = (veh.leg, veh.p, veh.v)
        if veh.mode == "planned" and not lagged:
            pt = veh.plan
            if t1 <= pt.tf:
                world._set_from_plan(veh, t1)
            else:
                world._set_from_plan(veh, pt.tf)
                veh.p += veh.v * (t1 - pt.tf)
                veh.u = 0.0
            continue
        u = veh.u + alpha * (commands[vid] - veh.u)
        v_new = veh.v + u * dt
        if v_new < 0.0:
            v_new, u = 0.0, -veh.v / dt
        step_len = v_new * dt
        if lagged and cfg.noise > 0.0:
            veh.noise = decay * veh.noise + kick * world.rng.standard_normal()
            step_len += veh.noise * dt
        veh.u, veh.v = u, v_new
        veh.p += max(step_len, 0.0)

    entries = []
    for vid in order:
        veh = world.active[vid]
        leg0, p_old, v_old = old[vid]
        path = world.paths[veh.path_id]
        if veh.mode == "planned" and veh.p >= path.cz_end:
            ev = world._open_plans.pop(vid, None)
            if ev is not None:
                # measured from the simulated positions in both tracking modes
                frac = (path.cz_end - p_old) / (veh.p - p_old) if veh.p > p_old else 1.0
                ev.tf_actual = t + frac * dt
            veh.mode, veh.plan = "baseline", None
            veh.zone_done = True
        if veh.mode == "degraded" and (not path.has_zone or veh.p >= path.cz_end):
            veh.mode, veh.zone_done = "baseline", True
        while veh.p >= world.paths[veh.path_id].length:
            L = world.paths[veh.path_id].length
            if veh.leg + 1 >= len(veh.route):
                break
            veh.p -= L
            p_old -= L
            veh.route_base += L
            veh.leg += 1
            veh.zone_done = False
        path = world.paths[veh.path_id]
        if (world.mode == "optimal" and veh.mode == "baseline" and not veh.zone_done
                and path.has_zone and p_old < path.cz_start <= veh.p):
            frac = (path.cz_start - p_old) / (veh.p - p_old)
            entries.append((t + frac * dt, vid, v_old + frac * (veh.v - v_old)))

    for t0, vid, v0 in Coordinator.sequence(entries):
        veh = world.active[vid]
        veh.zone_done = True
        if world._try_plan(veh, t0, v0, None, "planned"):
            if not lagged:
                world._set_from_plan(veh, t1)
        else:
            veh.mode = "degraded"
            veh.replan_at = t1 + REPLAN_PERIOD

    for vid in order:
        veh = world.active[vid]
        if veh.mode == "degraded" and t1 >= veh.replan_at - 1e-9:
            path = world.paths[veh.path_id]
            if path.cz_end - veh.p > 1e-3 and world._try_plan(veh, t1, veh.v, veh.p, "replanned"):
                continue
            veh.replan_at = t1 + REPLAN_PERIOD

    by_path = world._by_path()
    if world.mode == "baseline":
        _serve_stops(world, by_path)

    for vid in order:
        veh = world.active[vid]
        prev = veh.stopped_for
        veh.stopped_for = veh.stopped_for + dt if veh.v < STOP_SPEED else 0.0
        if prev < STOP_HOLD - 1e-9 <= veh.stopped_for:
            world.log.vehicles[vid].stops += 1

    world._monitor(t1, by_path)

    finished = []
    for vid in order:
        veh = world.active[vid]
        path = world.paths[veh.path_id]
        in_zone = path.in_zone(veh.p)
        world.log.records.append(
            (t1, vid, veh.path_id, veh.p, veh.route_base + veh.p, veh.v, veh.u, veh.mode, in_zone)
        )
        world.traces[vid].append((t1, veh.leg, veh.p, veh.v, veh.mode))
        if veh.leg + 1 >= len(veh.route) and veh.p >= path.length:
            finished.append(vid)
    for vid in finished:
        veh = world.active.pop(vid)
        summ = world.log.vehicles[vid]
        summ.despawn = t1
        summ.distance = veh.route_base + veh.p
    world.tick += 1
    return world


def _serve_stops(world: World, by_path):
    length = world.cfg.safety.length
    for rule in world.cfg.stops:
        queue = world.queues[rule.id]
        occupied = False
        for pid, q, b0, b1 in rule.approaches:
            for veh in by_path.get(pid, ()):
                if rule.id not in veh.queued and q <= veh.p < b0:
                    veh.queued.add(rule.id)
                    queue.arrive(veh.id)
                if b0 <= veh.p <= b1 + length:
                    occupied = True
                if veh.id == queue.crossing and veh.p > b1 + length:
                    queue.cleared(veh.id)
        if queue.crossing is not None and queue.crossing not in world.active:
            queue.cleared(queue.crossing)
        stopped = {vid: world.active[vid].stopped_for for vid in queue.order if vid in world.active}
        for vid in stop_queue_step(queue, stopped, occupied):
            world.active[vid].released.add(rule.id)


def run(cfg: ScenarioConfig, mode: str = "optimal", duration: float | None = None,
        seed: int | None = None, tracking: str | None = None) -> SimLog:
    """Simulate ``cfg`` until ``duration`` elapses or every vehicle has left."""
    world = World(cfg, mode, tracking, seed)
    duration = cfg.duration if duration is None else duration
    n_ticks = int(round(duration / cfg.dt))
    while world.tick < n_ticks and not world.done():
        step(world)
    world.lateral_monitor()
    return world.log


def compute_metrics(log: SimLog) -> Metrics:
    """Aggregate speed, exit-time and safety figures from a run."""
    if not log.records:
        raise ValueError("empty log")
    zone_v = [r[5] for r in log.records if r[8]]
    all_v = [r[5] for r in log.records]
    exits = [
        (ev.vehicle, ev.tf_planned, ev.tf_actual)
        for ev in log.plans
        if ev.status != "failed" and ev.tf_actual is not None
    ]
    rel = [
        (ev.tf_actual - ev.tf_planned) / (ev.tf_planned - ev.t0)
        for ev in log.plans
        if ev.status != "failed" and ev.tf_actual is not None
    ]
    rmse = 100.0 * math.sqrt(sum(x * x for x in rel) / len(rel)) if rel else None

    per_vehicle: dict[str, dict] = {}
    speeds: dict[str, list[float]] = {}
    for r in log.records:
        speeds.setdefault(r[1], []).append(r[5])
    for vid, summ in log.vehicles.items():
        vs = speeds.get(vid, [])
        travel = (summ.despawn - summ.spawn) if summ.despawn is not None else None
        per_vehicle[vid] = {
            "ego": summ.ego,
            "spawn_s": summ.spawn,
            "despawn_s": summ.despawn,
            "travel_time_s": travel,
            "avg_speed_mps": summ.distance / travel if travel else None,
            "min_speed_mps": min(vs) if vs else None,
            "stops": summ.stops,
        }
    return Metrics(
        v_min_zone=min(zone_v) if zone_v else math.nan,
        v_avg_zone=math.fsum(zone_v) / len(zone_v) if zone_v else math.nan,
        v_min_all=min(all_v),
        v_avg_all=math.fsum(all_v) / len(all_v),
        rmse_pct=rmse,
        exits=exits,
        safety_violations=len(log.violations) + len(log.collisions),
        collisions=len(log.collisions),
        planning_failures=sum(1 for ev in log.plans if ev.status == "failed"),
        vehicles=per_vehicle,
        tracking_deviations=len(log.deviations),
    )
