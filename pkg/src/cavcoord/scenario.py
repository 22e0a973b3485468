"""Scenario files: JSON documents with units spelled out in field names."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path as FsPath

from .baseline import IdmParams
from .roadnet import ConflictPoint, Path, RoadNetwork, Segment
from .safety import SafetyParams
from .trajectory import Limits


class ScenarioError(ValueError):
    """Invalid scenario; ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class VehicleSpec:
    id: str
    route: tuple[str, ...]
    release: float
    speed: float
    ego: bool = False


@dataclass(frozen=True)
class YieldRule:
    """Baseline yield sign: ``path`` gives way to traffic on ``mainline`` paths."""

    id: str
    path: str
    zone: tuple[float, float]
    mainline: tuple[tuple[str, float, float], ...]  # (path, zone start, zone end)


@dataclass(frozen=True)
class StopRule:
    """Baseline all-way stop; per approach path: queue entry, box start, box end."""

    id: str
    approaches: tuple[tuple[str, float, float, float], ...]


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    paths: dict[str, Path]
    conflicts: tuple[ConflictPoint, ...] | None
    limits: Limits
    safety: SafetyParams
    vehicles: tuple[VehicleSpec, ...]
    idm: IdmParams = IdmParams()
    speed_limit: float = 0.5
    outside_cap: float | None = None
    entry_caps: dict[str, float] = field(default_factory=dict)
    yields: tuple[YieldRule, ...] = ()
    stops: tuple[StopRule, ...] = ()
    tracking: str = "exact"
    lag: float = 0.2
    noise: float = 0.01
    noise_corr: float = 3.0
    dt: float = 0.01
    duration: float = 120.0
    repetitions: int = 1
    seed: int = 0

    def network(self) -> RoadNetwork:
        declared = list(self.conflicts) if self.conflicts is not None else None
        return RoadNetwork(dict(self.paths), declared)

    def digest(self) -> str:
        text = json.dumps(to_dict(self), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _segment_to_dict(seg: Segment) -> dict:
    out = {"kind": seg.kind, "start_m": list(seg.start), "end_m": list(seg.end)}
    if seg.kind == "arc":
        out["center_m"] = list(seg.center)
        out["radius_m"] = seg.radius
    return out


def to_dict(cfg: ScenarioConfig) -> dict:
    doc = {
        "name": cfg.name,
        "paths": [
            {
                "id": p.id,
                "control_zone_m": [p.cz_start, p.cz_end] if p.has_zone else None,
                "segments": [_segment_to_dict(s) for s in p.segments],
            }
            for p in cfg.paths.values()
        ],
        "limits": {
            "v_min_mps": cfg.limits.v_min,
            "v_max_mps": cfg.limits.v_max,
            "u_min_mps2": cfg.limits.u_min,
            "u_max_mps2": cfg.limits.u_max,
        },
        "safety": {
            "standstill_m": cfg.safety.gamma,
            "headway_s": cfg.safety.rho,
            "vehicle_length_m": cfg.safety.length,
        },
        "idm": {
            "a_max_mps2": cfg.idm.a_max,
            "b_comf_mps2": cfg.idm.b_comf,
            "delta": cfg.idm.delta,
            "jam_distance_m": cfg.idm.s0,
            "headway_s": cfg.idm.T,
        },
        "speed_limit_mps": cfg.speed_limit,
        "outside_zone_cap_mps": cfg.outside_cap,
        "entry_speed_caps_mps": dict(cfg.entry_caps),
        "vehicles": [
            {
                "id": v.id,
                "route": list(v.route),
                "release_s": v.release,
                "speed_mps": v.speed,
                "ego": v.ego,
            }
            for v in cfg.vehicles
        ],
        "yield_signs": [
            {
                "id": y.id,
                "path": y.path,
                "zone_m": list(y.zone),
                "mainline": [
                    {"path": pid, "zone_m": [z0, z1]} for pid, z0, z1 in y.mainline
                ],
            }
            for y in cfg.yields
        ],
        "stop_signs": [
            {
                "id": s.id,
                "approaches": [
                    {"path": pid, "queue_m": q, "box_m": [b0, b1]}
                    for pid, q, b0, b1 in s.approaches
                ],
            }
            for s in cfg.stops
        ],
        "tracking": {"model": cfg.tracking, "lag_s": cfg.lag, "noise_mps": cfg.noise,
                     "noise_corr_s": cfg.noise_corr},
        "dt_s": cfg.dt,
        "duration_s": cfg.duration,
        "repetitions": cfg.repetitions,
        "seed": cfg.seed,
    }
    if cfg.conflicts is not None:
        doc["conflict_points"] = [
            {"id": c.id, "path_i": c.path_i, "path_j": c.path_j, "pos_i_m": c.pos_i, "pos_j_m": c.pos_j}
            for c in cfg.conflicts
        ]
    return doc


def dumps(cfg: ScenarioConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2)


class _Reader:
    """Pulls typed fields out of nested dicts, collecting errors instead of raising."""

    def __init__(self):
        self.errors = []

    def get(self, obj, key, kind, where, default=...):
        if not isinstance(obj, dict):
            self.errors.append(f"{where}: expected an object")
            return None if default is ... else default
        if key not in obj:
            if default is ...:
                self.errors.append(f"{where}.{key}: missing")
                return None
            return default
        val = obj[key]
        if kind is float:
            if isinstance(val, bool) or not isinstance(val, (int, float)):
                self.errors.append(f"{where}.{key}: expected a number, got {val!r}")
                return None
            return float(val)
        if kind is int:
            if isinstance(val, bool) or not isinstance(val, int):
                self.errors.append(f"{where}.{key}: expected an integer, got {val!r}")
                return None
            return val
        if not isinstance(val, kind):
            self.errors.append(f"{where}.{key}: expected {kind.__name__}, got {val!r}")
            return None
        return val

    def point(self, obj, key, where):
        val = self.get(obj, key, list, where)
        if val is None:
            return None
        if len(val) != 2 or not all(isinstance(x, (int, float)) for x in val):
            self.errors.append(f"{where}.{key}: expected [x, y]")
            return None
        return (float(val[0]), float(val[1]))

    def build(self, fn, where, *args, **kw):
        try:
            return fn(*args, **kw)
        except (ValueError, TypeError) as exc:
            self.errors.append(f"{where}: {exc}")
            return None


def from_dict(doc) -> ScenarioConfig:
    r = _Reader()
    if not isinstance(doc, dict):
        raise ScenarioError(["top level: expected an object"])

    name = r.get(doc, "name", str, "scenario", default="scenario")
    paths = {}
    for k, pd in enumerate(r.get(doc, "paths", list, "scenario") or []):
        where = f"paths[{k}]"
        pid = r.get(pd, "id", str, where)
        segs = []
        for m, sd in enumerate(r.get(pd, "segments", list, where) or []):
            sw = f"{where}.segments[{m}]"
            kind = r.get(sd, "kind", str, sw)
            start, end = r.point(sd, "start_m", sw), r.point(sd, "end_m", sw)
            center = radius = None
            if kind == "arc":
                center = r.point(sd, "center_m", sw)
                radius = r.get(sd, "radius_m", float, sw)
            if None in (kind, start, end) or (kind == "arc" and None in (center, radius)):
                continue
            seg = r.build(Segment, sw, kind, start, end, center, radius)
            if seg is not None:
                segs.append(seg)
        zone = None
        if isinstance(pd, dict) and pd.get("control_zone_m") is not None:
            zone = r.get(pd, "control_zone_m", list, where)
        if pid is None or not segs:
            continue
        if zone is None:
            zone = [None, None]  # plain link road, never coordinated
        elif len(zone) != 2 or not all(isinstance(x, (int, float)) for x in zone):
            r.errors.append(f"{where}.control_zone_m: expected [start, end]")
            continue
        if pid in paths:
            r.errors.append(f"{where}: duplicate path id {pid!r}")
            continue
        cz = [None if x is None else float(x) for x in zone]
        path = r.build(Path, where, pid, tuple(segs), cz[0], cz[1])
        if path is not None:
            paths[pid] = path

    conflicts = None
    if "conflict_points" in doc:
        conflicts = []
        for k, cd in enumerate(r.get(doc, "conflict_points", list, "scenario") or []):
            where = f"conflict_points[{k}]"
            vals = (
                r.get(cd, "id", int, where),
                r.get(cd, "path_i", str, where),
                r.get(cd, "path_j", str, where),
                r.get(cd, "pos_i_m", float, where),
                r.get(cd, "pos_j_m", float, where),
            )
            if None in vals:
                continue
            cp = ConflictPoint(*vals)
            bad = False
            for pid, pos in ((cp.path_i, cp.pos_i), (cp.path_j, cp.pos_j)):
                if pid not in paths:
                    r.errors.append(f"{where}: unknown path {pid!r}")
                    bad = True
                elif not paths[pid].in_zone(pos):
                    r.errors.append(f"{where}: position {pos} outside control zone of {pid!r}")
                    bad = True
            if cp.path_i == cp.path_j:
                r.errors.append(f"{where}: a path cannot conflict with itself")
                bad = True
            if not bad:
                conflicts.append(cp)
        conflicts = tuple(conflicts)

    ld = r.get(doc, "limits", dict, "scenario")
    limits = None
    if ld is not None:
        vals = [r.get(ld, k, float, "limits") for k in ("v_min_mps", "v_max_mps", "u_min_mps2", "u_max_mps2")]
        if None not in vals:
            limits = r.build(Limits, "limits", *vals)

    sd = r.get(doc, "safety", dict, "scenario")
    safety = None
    if sd is not None:
        vals = [r.get(sd, k, float, "safety") for k in ("standstill_m", "headway_s", "vehicle_length_m")]
        if None not in vals:
            safety = r.build(SafetyParams, "safety", *vals)

    speed_limit = r.get(doc, "speed_limit_mps", float, "scenario", default=0.5)
    idm = IdmParams(desired_speed=speed_limit or 0.5)
    if "idm" in doc:
        im = r.get(doc, "idm", dict, "scenario") or {}
        defaults = IdmParams()
        vals = dict(
            a_max=r.get(im, "a_max_mps2", float, "idm", default=defaults.a_max),
            b_comf=r.get(im, "b_comf_mps2", float, "idm", default=defaults.b_comf),
            delta=r.get(im, "delta", float, "idm", default=defaults.delta),
            s0=r.get(im, "jam_distance_m", float, "idm", default=defaults.s0),
            T=r.get(im, "headway_s", float, "idm", default=defaults.T),
        )
        if None not in vals.values():
            idm = r.build(IdmParams, "idm", desired_speed=speed_limit or 0.5, **vals) or idm

    outside_cap = doc.get("outside_zone_cap_mps")
    if outside_cap is not None:
        outside_cap = r.get(doc, "outside_zone_cap_mps", float, "scenario")
    entry_caps = {}
    for pid, cap in (r.get(doc, "entry_speed_caps_mps", dict, "scenario", default={}) or {}).items():
        if pid not in paths:
            r.errors.append(f"entry_speed_caps_mps: unknown path {pid!r}")
        elif isinstance(cap, bool) or not isinstance(cap, (int, float)) or cap <= 0:
            r.errors.append(f"entry_speed_caps_mps.{pid}: expected a positive number")
        else:
            entry_caps[pid] = float(cap)

    vehicles, seen = [], set()
    for k, vd in enumerate(r.get(doc, "vehicles", list, "scenario") or []):
        where = f"vehicles[{k}]"
        vid = r.get(vd, "id", str, where)
        route = r.get(vd, "route", list, where)
        release = r.get(vd, "release_s", float, where)
        speed = r.get(vd, "speed_mps", float, where)
        ego = r.get(vd, "ego", bool, where, default=False)
        if None in (vid, route, release, speed, ego):
            continue
        if vid in seen:
            r.errors.append(f"{where}: duplicate vehicle id {vid!r}")
        seen.add(vid)
        if not route:
            r.errors.append(f"{where}.route: empty")
        for pid in route:
            if pid not in paths:
                r.errors.append(f"{where}.route: unknown path {pid!r}")
        if release < 0:
            r.errors.append(f"{where}.release_s: must be >= 0")
        if speed <= 0:
            r.errors.append(f"{where}.speed_mps: must be > 0")
        vehicles.append(VehicleSpec(vid, tuple(route), release, speed, ego))

    yields = []
    for k, yd in enumerate(r.get(doc, "yield_signs", list, "scenario", default=[]) or []):
        where = f"yield_signs[{k}]"
        yid = r.get(yd, "id", str, where)
        pid = r.get(yd, "path", str, where)
        zone = r.get(yd, "zone_m", list, where)
        mains = []
        for m, md in enumerate(r.get(yd, "mainline", list, where) or []):
            mp = r.get(md, "path", str, f"{where}.mainline[{m}]")
            mz = r.get(md, "zone_m", list, f"{where}.mainline[{m}]")
            if mp is not None and mz is not None:
                if mp not in paths:
                    r.errors.append(f"{where}.mainline[{m}]: unknown path {mp!r}")
                mains.append((mp, float(mz[0]), float(mz[1])))
        if None in (yid, pid, zone):
            continue
        if pid not in paths:
            r.errors.append(f"{where}: unknown path {pid!r}")
        yields.append(YieldRule(yid, pid, (float(zone[0]), float(zone[1])), tuple(mains)))

    stops = []
    for k, sdoc in enumerate(r.get(doc, "stop_signs", list, "scenario", default=[]) or []):
        where = f"stop_signs[{k}]"
        sid = r.get(sdoc, "id", str, where)
        apps = []
        for m, ad in enumerate(r.get(sdoc, "approaches", list, where) or []):
            aw = f"{where}.approaches[{m}]"
            pid = r.get(ad, "path", str, aw)
            q = r.get(ad, "queue_m", float, aw)
            box = r.get(ad, "box_m", list, aw)
            if None in (pid, q, box):
                continue
            if pid not in paths:
                r.errors.append(f"{aw}: unknown path {pid!r}")
            elif not (q <= box[0] < box[1]):
                r.errors.append(f"{aw}: need queue_m <= box start < box end")
            apps.append((pid, q, float(box[0]), float(box[1])))
        if sid is not None:
            stops.append(StopRule(sid, tuple(apps)))

    td = r.get(doc, "tracking", dict, "scenario", default={}) or {}
    tracking = r.get(td, "model", str, "tracking", default="exact")
    if tracking not in ("exact", "lagged"):
        r.errors.append(f"tracking.model: expected 'exact' or 'lagged', got {tracking!r}")
    lag = r.get(td, "lag_s", float, "tracking", default=0.2)
    noise = r.get(td, "noise_mps", float, "tracking", default=0.01)
    noise_corr = r.get(td, "noise_corr_s", float, "tracking", default=3.0)
    dt = r.get(doc, "dt_s", float, "scenario", default=0.01)
    duration = r.get(doc, "duration_s", float, "scenario", default=120.0)
    reps = r.get(doc, "repetitions", int, "scenario", default=1)
    seed = r.get(doc, "seed", int, "scenario", default=0)
    if dt is not None and dt <= 0:
        r.errors.append("dt_s: must be > 0")
    if lag is not None and lag <= 0:
        r.errors.append("tracking.lag_s: must be > 0")
    if noise is not None and noise < 0:
        r.errors.append("tracking.noise_mps: must be >= 0")
    if noise_corr is not None and noise_corr <= 0:
        r.errors.append("tracking.noise_corr_s: must be > 0")
    if duration is not None and duration < 0:
        r.errors.append("duration_s: must be >= 0")
    if reps is not None and reps < 1:
        r.errors.append("repetitions: must be >= 1")

    if limits is not None and speed_limit is not None and speed_limit < limits.v_min:
        r.errors.append("speed_limit_mps: below v_min")

    if r.errors:
        raise ScenarioError(r.errors)
    return ScenarioConfig(
        name=name,
        paths=paths,
        conflicts=conflicts,
        limits=limits,
        safety=safety,
        vehicles=tuple(vehicles),
        idm=idm,
        speed_limit=speed_limit,
        outside_cap=outside_cap,
        entry_caps=entry_caps,
        yields=tuple(yields),
        stops=tuple(stops),
        tracking=tracking,
        lag=lag,
        noise=noise,
        noise_corr=noise_corr,
        dt=dt,
        duration=duration,
        repetitions=reps,
        seed=seed,
    )


def loads(text: str) -> ScenarioConfig:
    if not text.strip():
        raise ScenarioError(["parse error: empty document"])
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError([f"parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"])
    return from_dict(doc)


def load_scenario(path) -> ScenarioConfig:
    """Read and validate a scenario file.

    ``path`` may also name a bundled scenario (``roundabout``, ``corridor``).
    """
    fs = FsPath(path)
    if not fs.exists() and fs.suffix in ("", ".json") and fs.parent == FsPath("."):
        bundled = resources.files("cavcoord") / "scenarios" / f"{fs.stem}.json"
        if bundled.is_file():
            return loads(bundled.read_text())
    return loads(fs.read_text())


def bundled(name: str) -> ScenarioConfig:
    return loads((resources.files("cavcoord") / "scenarios" / f"{name}.json").read_text())
