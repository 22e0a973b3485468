"""Regenerate the bundled scenario files.

Geometry is laid out here in code, conflict points are found by geometric
detection and then written out as declared points, and release times are
chosen so that vehicles on crossing paths would reach shared conflict
points together if nobody adjusted.

Usage: python3 scripts/build_scenarios.py [output dir]
"""

from __future__ import annotations

import math
import sys
from dataclasses import replace
from pathlib import Path as FsPath

from cavcoord.baseline import IdmParams
from cavcoord.engine import World, step
from cavcoord.roadnet import ConflictPoint, Path, RoadNetwork, Segment
from cavcoord.safety import SafetyParams
from cavcoord.scenario import ScenarioConfig, StopRule, VehicleSpec, YieldRule, dumps
from cavcoord.trajectory import Limits, coefficients, exit_time_bounds, time_at_position

LIMITS = Limits(v_min=0.15, v_max=0.5, u_min=-0.45, u_max=0.45)
SAFETY = SafetyParams(gamma=0.07, rho=1.0, length=0.1)
R_IN, R_OUT = 0.6, 0.9
YIELD_BEFORE, YIELD_AFTER = 0.35, 0.15  # merging region around a conflict point


def line(a, b):
    return Segment("line", a, b)


def arc(center, radius, th0, th1):
    r = abs(radius)
    p0 = (center[0] + r * math.cos(th0), center[1] + r * math.sin(th0))
    p1 = (center[0] + r * math.cos(th1), center[1] + r * math.sin(th1))
    return Segment("arc", p0, p1, center, radius)


def path(pid, segments, zone):
    return Path(pid, tuple(segments), *(zone if zone else (None, None)))


def detected(paths):
    return tuple(
        ConflictPoint(c.id, c.path_i, c.path_j, round(c.pos_i, 9), round(c.pos_j, 9))
        for c in RoadNetwork(paths).conflicts
    )


def arrival(p: Path, node: float, release: float, speed: float) -> float:
    """Time a vehicle reaches ``node`` if it cruises to the zone and then
    follows its unconstrained cubic."""
    t_in = release + p.cz_start / speed
    S = p.cz_end - p.cz_start
    tf = exit_time_bounds(speed, S, LIMITS).t_lb
    traj = coefficients(speed, S, tf)
    return t_in + time_at_position(traj, node - p.cz_start)


def release_for(p: Path, node: float, target: float, speed: float) -> float:
    return round(target - (arrival(p, node, 0.0, speed)), 2)


def roundabout() -> ScenarioConfig:
    pre = 1.5
    # path 1: north through the inner lane
    up1 = pre + 5.3 - 0.6 - R_IN * math.pi
    p1 = path("1", [
        line((0.0, -up1 - R_IN), (0.0, -R_IN)),
        arc((0.0, 0.0), R_IN, -math.pi / 2, math.pi / 2),
        line((0.0, R_IN), (0.0, R_IN + 1.6)),
    ], (pre, pre + 5.3))
    # path 2: east to west on the outer lane (upper half)
    up2 = pre + 5.8 - 0.3 - R_OUT * math.pi
    p2 = path("2", [
        line((R_OUT + up2, 0.0), (R_OUT, 0.0)),
        arc((0.0, 0.0), R_OUT, 0.0, math.pi),
        line((-R_OUT, 0.0), (-R_OUT - 1.3, 0.0)),
    ], (pre, pre + 5.8))
    # path 3: joins from the north-west, sharp turn onto the lower outer lane
    up3 = pre + 3.8 - 0.3 - R_OUT * math.pi / 2
    d = up3 / math.sqrt(2.0)
    th_out = 5.0 * math.pi / 3.0
    ex = (R_OUT * math.cos(th_out), R_OUT * math.sin(th_out))
    p3 = path("3", [
        line((-R_OUT - d, d), (-R_OUT, 0.0)),
        arc((0.0, 0.0), R_OUT, math.pi, th_out),
        line(ex, (ex[0] + math.cos(th_out), ex[1] + math.sin(th_out))),
    ], (pre, pre + 3.8))
    paths = {"1": p1, "2": p2, "3": p3}
    conflicts = detected(paths)
    assert len(conflicts) == 3, conflicts
    node = {frozenset((c.path_i, c.path_j)): c for c in conflicts}
    n12, n13, n23 = node[frozenset("12")], node[frozenset("13")], node[frozenset("23")]

    outside, cap3 = 0.35, 0.25
    vehicles = []
    for k in range(3):
        r1 = 6.0 * k
        t_n2 = arrival(p1, n12.pos_i, r1, outside)
        r2 = release_for(p2, n12.pos_j, t_n2, outside)
        t_n1 = arrival(p2, n23.pos_i, r2, outside)
        r3 = release_for(p3, n23.pos_j, t_n1, cap3)
        vehicles += [
            VehicleSpec(f"1.{k + 1}", ("1",), r1, outside),
            VehicleSpec(f"2.{k + 1}", ("2",), r2, outside),
            VehicleSpec(f"3.{k + 1}", ("3",), r3, cap3),
        ]
    shift = -min(v.release for v in vehicles)
    vehicles = [VehicleSpec(v.id, v.route, round(v.release + shift, 2), v.speed) for v in vehicles]

    def around(pos):
        return (round(pos - YIELD_BEFORE, 6), round(pos + YIELD_AFTER, 6))

    yields = (
        YieldRule("y3", "1", around(n13.pos_i), (("3", *around(n13.pos_j)),)),
        YieldRule("y2", "1", around(n12.pos_i), (("2", *around(n12.pos_j)),)),
        YieldRule("y1", "3", around(n23.pos_j), (("2", *around(n23.pos_i)),)),
    )
    return ScenarioConfig(
        name="roundabout",
        paths=paths,
        conflicts=conflicts,
        limits=LIMITS,
        safety=SAFETY,
        vehicles=tuple(sorted(vehicles, key=lambda v: (v.release, v.id))),
        idm=IdmParams(),
        speed_limit=0.5,
        outside_cap=outside,
        entry_caps={"3": cap3},
        yields=yields,
        duration=90.0,
        repetitions=5,
        seed=7,
    )


def _first_time(cfg, vid, path_id, pos):
    """Baseline-mode time at which ``vid`` first reaches ``pos`` on ``path_id``."""
    world = World(cfg, "baseline")
    while not world.done() and world.t < cfg.duration:
        step(world)
        veh = world.active.get(vid)
        if veh is not None and veh.path_id == path_id and veh.p >= pos:
            return world.t
    raise RuntimeError(f"{vid} never reached {pos} on {path_id}")


def _free_time(cfg, spec, path_id, pos):
    """Time for ``spec`` alone on the road to reach ``pos``, in baseline mode."""
    solo = replace(cfg, vehicles=(replace(spec, release=0.0),), yields=(), stops=())
    return _first_time(solo, spec.id, path_id, pos)


def corridor() -> ScenarioConfig:
    adjust = 3.0  # zone length ahead of the first conflict point
    cap = 0.3
    # roundabout section centred at the origin; the ego lane uses the outer circle
    up_a = 1.0 + adjust - R_OUT * math.pi / 2
    ego_a = path("ego_a", [
        line((R_OUT + up_a, 0.0), (R_OUT, 0.0)),
        arc((0.0, 0.0), R_OUT, 0.0, math.pi),
        line((-R_OUT, 0.0), (-R_OUT - 0.2, 0.0)),
    ], (1.0, 1.0 + adjust + 0.3))
    up_r = 1.5 + adjust + 0.3
    rb = path("rb", [
        line((0.0, R_IN + up_r), (0.0, R_IN)),
        arc((0.0, 0.0), R_IN, math.pi / 2, 3 * math.pi / 2),
        line((0.0, -R_IN), (0.0, -R_IN - 1.5)),
    ], (1.5, 1.5 + adjust + 0.3))
    # four-way stop: two crossing lanes 0.3 m apart
    pre = 0.3
    xb0 = -R_OUT - 0.2
    cB = xb0 - pre - adjust - 0.15
    ego_b = path("ego_b", [line((xb0, 0.0), (xb0 - pre - adjust - 0.6 - 0.2, 0.0))],
                 (pre, pre + adjust + 0.6))
    south = path("south", [line((cB + 0.15, 1.8 + adjust), (cB + 0.15, -2.0))], (1.8, 1.8 + adjust + 0.3))
    north = path("north", [line((cB - 0.15, -1.8 - adjust), (cB - 0.15, 2.0))], (1.8, 1.8 + adjust + 0.3))
    # merge: a ramp joins the ego lane at the end of both zones
    xc0 = ego_b.segments[-1].end[0]
    cC = xc0 - pre - adjust
    ego_c = path("ego_c", [line((xc0, 0.0), (cC, 0.0))], (pre, pre + adjust))
    ang = math.radians(30.0)
    L_ramp = 1.5 + adjust
    ramp = path("ramp", [line((cC + L_ramp * math.cos(ang), -L_ramp * math.sin(ang)), (cC, 0.0))],
                (1.5, L_ramp))
    tail = path("tail", [line((cC, 0.0), (cC - 1.0, 0.0))], None)

    paths = {p.id: p for p in (ego_a, rb, ego_b, south, north, ego_c, ramp, tail)}
    conflicts = detected(paths)
    assert len(conflicts) == 4, conflicts
    node = {frozenset((c.path_i, c.path_j)): c for c in conflicts}

    def oriented(a, b):
        c = node[frozenset((a, b))]
        return c if c.path_i == a else c.swapped()

    c_rb = oriented("ego_a", "rb")
    c_s = oriented("ego_b", "south")
    c_n = oriented("ego_b", "north")
    c_m = oriented("ego_c", "ramp")

    def around(pos, h=None):
        if h is None:
            return (round(pos - YIELD_BEFORE, 6), round(pos + YIELD_AFTER, 6))
        return (round(pos - h, 6), round(pos + h, 6))

    yields = (
        YieldRule("yield_rb", "ego_a", around(c_rb.pos_i), (("rb", *around(c_rb.pos_j)),)),
        YieldRule("yield_merge", "ramp", (round(c_m.pos_j - 0.2, 6), round(c_m.pos_j, 6)),
                  (("ego_c", round(c_m.pos_i - 0.2, 6), round(c_m.pos_i, 6)), ("tail", 0.0, 0.3))),
    )
    box_ego = (round(c_s.pos_i - 0.15, 6), round(c_n.pos_i + 0.15, 6))
    queue = {
        "ego_b": round(box_ego[0] - 1.0, 6),
        "south": round(c_s.pos_j - 0.3 - 1.0, 6),
        "north": round(c_n.pos_j - 0.3 - 1.0, 6),
    }
    stops = (StopRule("four_way", (
        ("ego_b", queue["ego_b"], *box_ego),
        ("south", queue["south"], *around(c_s.pos_j, 0.3)),
        ("north", queue["north"], *around(c_n.pos_j, 0.3)),
    )),)

    ego_route = ("ego_a", "ego_b", "ego_c", "tail")
    egos = [VehicleSpec(f"ego.{k + 1}", ego_route, 9.0 * k, cap, ego=True) for k in range(3)]
    cfg = ScenarioConfig(
        name="corridor",
        paths=paths,
        conflicts=conflicts,
        limits=LIMITS,
        safety=SAFETY,
        vehicles=tuple(egos),
        idm=IdmParams(),
        speed_limit=0.5,
        outside_cap=cap,
        yields=yields,
        stops=stops,
        duration=200.0,
        repetitions=1,
        seed=11,
    )

    # Release cross traffic so that, with baseline rules, each group reaches
    # its junction just ahead of an ego vehicle. Junctions are timed in
    # route order because earlier delays shift later arrivals.
    def add(specs):
        nonlocal cfg
        cfg = replace(cfg, vehicles=tuple(sorted(cfg.vehicles + tuple(specs),
                                                 key=lambda v: (v.release, v.id))))

    def timed(pid, route, target, pos, k, on=None):
        spec = VehicleSpec(f"{pid}.{k + 1}", route, 0.0, cap)
        return replace(spec, release=round(max(target - _free_time(cfg, spec, on or pid, pos), 0.0), 2))

    yield_line = yields[0].zone[0]
    add([timed("rb", ("rb",), _first_time(cfg, e.id, "ego_a", yield_line - 0.4) + 0.5,
               c_rb.pos_j - YIELD_BEFORE, k) for k, e in enumerate(egos)])
    t_q = [_first_time(cfg, e.id, "ego_b", queue["ego_b"]) for e in egos]
    add([timed("south", ("south",), t - 1.2, queue["south"], k) for k, t in enumerate(t_q)]
        + [timed("north", ("north",), t - 0.6, queue["north"], k) for k, t in enumerate(t_q)])
    t_m = [_first_time(cfg, e.id, "tail", 0.0) for e in egos]  # merge point
    add([timed("ramp", ("ramp", "tail"), t + 1.0, 0.0, k, on="tail") for k, t in enumerate(t_m)])
    return cfg


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    here = FsPath(__file__).resolve().parent.parent
    out = FsPath(argv[0]) if argv else here / "src" / "cavcoord" / "scenarios"
    out.mkdir(parents=True, exist_ok=True)
    for cfg in (roundabout(), corridor()):
        (out / f"{cfg.name}.json").write_text(dumps(cfg) + "\n")
        print(f"wrote {out / (cfg.name + '.json')} ({len(cfg.vehicles)} vehicles, "
              f"{len(cfg.conflicts)} conflict points)")


if __name__ == "__main__":
    main()
