"""Road geometry: paths made of line and arc segments, parameterised by arc length."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

GEOM_TOL = 1e-6
CONTINUITY_TOL = 1e-9
TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Segment:
    """A line, or a circular arc turning counter-clockwise for positive radius."""

    kind: str
    start: tuple[float, float]
    end: tuple[float, float]
    center: tuple[float, float] | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.kind == "line":
            if self.length <= 0.0:
                raise ValueError(f"degenerate line segment {self.start} -> {self.end}")
        elif self.kind == "arc":
            if self.center is None or not self.radius:
                raise ValueError("arc needs a center and a non-zero radius")
            r = abs(self.radius)
            for pt in (self.start, self.end):
                if abs(math.dist(pt, self.center) - r) > GEOM_TOL:
                    raise ValueError(f"arc endpoint {pt} is not on the circle")
            if self.sweep == 0.0:
                raise ValueError("arc with zero sweep")
        else:
            raise ValueError(f"unknown segment kind {self.kind!r}")

    @property
    def theta0(self) -> float:
        cx, cy = self.center
        return math.atan2(self.start[1] - cy, self.start[0] - cx)

    @property
    def sweep(self) -> float:
        """Signed angle swept by an arc (rad)."""
        cx, cy = self.center
        th1 = math.atan2(self.end[1] - cy, self.end[0] - cx)
        if self.radius > 0:
            return (th1 - self.theta0) % TWO_PI
        return -((self.theta0 - th1) % TWO_PI)

    @property
    def length(self) -> float:
        if self.kind == "line":
            return math.dist(self.start, self.end)
        return abs(self.radius) * abs(self.sweep)

    def point_at(self, s: float) -> tuple[float, float]:
        if self.kind == "line":
            f = s / self.length
            return (
                self.start[0] + f * (self.end[0] - self.start[0]),
                self.start[1] + f * (self.end[1] - self.start[1]),
            )
        r = abs(self.radius)
        th = self.theta0 + math.copysign(s / r, self.radius)
        return (self.center[0] + r * math.cos(th), self.center[1] + r * math.sin(th))

    def arc_position(self, pt) -> float | None:
        """Arc length along the segment of a point lying on its carrier, or None."""
        if self.kind == "line":
            dx, dy = self.end[0] - self.start[0], self.end[1] - self.start[1]
            L = self.length
            s = ((pt[0] - self.start[0]) * dx + (pt[1] - self.start[1]) * dy) / L
            if -GEOM_TOL <= s <= L + GEOM_TOL:
                return min(max(s, 0.0), L)
            return None
        cx, cy = self.center
        th = math.atan2(pt[1] - cy, pt[0] - cx)
        if self.radius > 0:
            ang = (th - self.theta0) % TWO_PI
        else:
            ang = (self.theta0 - th) % TWO_PI
        r = abs(self.radius)
        span = abs(self.sweep)
        # wrap-around just below the start
        if ang * r > TWO_PI * r - GEOM_TOL:
            ang -= TWO_PI
        if -GEOM_TOL <= ang * r <= span * r + GEOM_TOL:
            return min(max(ang * r, 0.0), span * r)
        return None


def _line_line(a: Segment, b: Segment):
    p, q = a.start, b.start
    r = (a.end[0] - p[0], a.end[1] - p[1])
    s = (b.end[0] - q[0], b.end[1] - q[1])
    den = r[0] * s[1] - r[1] * s[0]
    if abs(den) < 1e-14:
        return []  # parallel or collinear; overlaps are not conflict points
    qp = (q[0] - p[0], q[1] - p[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / den
    return [(p[0] + t * r[0], p[1] + t * r[1])]


def _line_circle(line: Segment, center, radius):
    p = line.start
    d = (line.end[0] - p[0], line.end[1] - p[1])
    f = (p[0] - center[0], p[1] - center[1])
    A = d[0] * d[0] + d[1] * d[1]
    B = 2.0 * (f[0] * d[0] + f[1] * d[1])
    C = f[0] * f[0] + f[1] * f[1] - radius * radius
    disc = B * B - 4.0 * A * C
    if disc < -1e-12:
        return []
    sq = math.sqrt(max(disc, 0.0))
    ts = {(-B - sq) / (2.0 * A), (-B + sq) / (2.0 * A)}
    return [(p[0] + t * d[0], p[1] + t * d[1]) for t in ts]


def _circle_circle(c0, r0, c1, r1):
    d = math.dist(c0, c1)
    if d < 1e-12 or d > r0 + r1 + GEOM_TOL or d < abs(r0 - r1) - GEOM_TOL:
        return []
    a = (r0 * r0 - r1 * r1 + d * d) / (2.0 * d)
    h = math.sqrt(max(r0 * r0 - a * a, 0.0))
    ex, ey = (c1[0] - c0[0]) / d, (c1[1] - c0[1]) / d
    mx, my = c0[0] + a * ex, c0[1] + a * ey
    return [(mx - h * ey, my + h * ex), (mx + h * ey, my - h * ex)]


def segment_intersections(a: Segment, b: Segment) -> list[tuple[float, float, tuple]]:
    """Crossings of two segments as ``(s_on_a, s_on_b, point)``."""
    if a.kind == "line" and b.kind == "line":
        cands = _line_line(a, b)
    elif a.kind == "line":
        cands = _line_circle(a, b.center, abs(b.radius))
    elif b.kind == "line":
        cands = _line_circle(b, a.center, abs(a.radius))
    else:
        cands = _circle_circle(a.center, abs(a.radius), b.center, abs(b.radius))
    out = []
    for pt in cands:
        sa, sb = a.arc_position(pt), b.arc_position(pt)
        if sa is not None and sb is not None:
            out.append((sa, sb, pt))
    return out


@dataclass(frozen=True)
class ConflictPoint:
    """A crossing of two paths, with the arc-length position on each side."""

    id: int
    path_i: str
    path_j: str
    pos_i: float
    pos_j: float

    def swapped(self) -> "ConflictPoint":
        return ConflictPoint(self.id, self.path_j, self.path_i, self.pos_j, self.pos_i)


@dataclass(frozen=True)
class Path:
    id: str
    segments: tuple[Segment, ...]
    cz_start: float | None
    cz_end: float | None
    _offsets: tuple[float, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.segments:
            raise ValueError(f"path {self.id} has no segments")
        for s0, s1 in zip(self.segments, self.segments[1:]):
            if math.dist(s0.end, s1.start) > CONTINUITY_TOL:
                raise ValueError(f"path {self.id}: gap between {s0.end} and {s1.start}")
        offs, acc = [], 0.0
        for seg in self.segments:
            offs.append(acc)
            acc += seg.length
        object.__setattr__(self, "_offsets", tuple(offs))
        if (self.cz_start is None) != (self.cz_end is None):
            raise ValueError(f"path {self.id}: control zone needs both ends or neither")
        if self.has_zone and not (
            0.0 <= self.cz_start < self.cz_end <= self.length + CONTINUITY_TOL
        ):
            raise ValueError(
                f"path {self.id}: control zone [{self.cz_start}, {self.cz_end}] "
                f"not inside [0, {self.length}]"
            )
        if self_intersections(self):
            raise ValueError(f"path {self.id} intersects itself")

    @property
    def length(self) -> float:
        return self._offsets[-1] + self.segments[-1].length

    @property
    def has_zone(self) -> bool:
        return self.cz_start is not None

    @property
    def cz_length(self) -> float:
        return self.cz_end - self.cz_start if self.has_zone else 0.0

    def in_zone(self, s: float) -> bool:
        return self.has_zone and self.cz_start <= s <= self.cz_end


def path_length(path: Path) -> float:
    return path.length


def point_at(path: Path, s: float) -> tuple[float, float]:
    """Centerline point at arc length ``s``."""
    L = path.length
    if s < -CONTINUITY_TOL or s > L + CONTINUITY_TOL:
        raise ValueError(f"s={s} outside [0, {L}] on path {path.id}")
    s = min(max(s, 0.0), L)
    for off, seg in zip(reversed(path._offsets), reversed(path.segments)):
        if s >= off:
            return seg.point_at(min(s - off, seg.length))
    raise AssertionError("unreachable")


def _raw_crossings(pa: Path, pb: Path, same: bool = False):
    found = []
    for ia, (oa, sa) in enumerate(zip(pa._offsets, pa.segments)):
        for ib, (ob, sb) in enumerate(zip(pb._offsets, pb.segments)):
            if same and ib <= ia:
                continue
            for ua, ub, pt in segment_intersections(sa, sb):
                if same and ib == ia + 1 and math.dist(pt, sa.end) < GEOM_TOL:
                    continue  # shared joint
                found.append((oa + ua, ob + ub, pt))
    found.sort()
    merged = []
    for item in found:
        if not any(math.dist(item[2], m[2]) < GEOM_TOL for m in merged):
            merged.append(item)
    return merged


def self_intersections(path: Path) -> list:
    return _raw_crossings(path, path, same=True)


@dataclass
class RoadNetwork:
    """Paths plus the registry of conflict points between them.

    Declared conflict points, when given, replace geometric detection.
    Detected points are kept only if they lie inside both control zones.
    """

    paths: dict[str, Path]
    declared: list[ConflictPoint] | None = None
    conflicts: list[ConflictPoint] = field(init=False)

    def __post_init__(self):
        if self.declared is not None:
            for cp in self.declared:
                for pid, pos in ((cp.path_i, cp.pos_i), (cp.path_j, cp.pos_j)):
                    if pid not in self.paths:
                        raise ValueError(f"conflict point {cp.id}: unknown path {pid!r}")
                    if not self.paths[pid].in_zone(pos):
                        raise ValueError(
                            f"conflict point {cp.id}: position {pos} outside control "
                            f"zone of path {pid}"
                        )
            self.conflicts = list(self.declared)
            return
        ids = sorted(self.paths)
        out = []
        for k, a in enumerate(ids):
            for b in ids[k + 1:]:
                for cp in detect_conflicts(self.paths[a], self.paths[b]):
                    if self.paths[a].in_zone(cp.pos_i) and self.paths[b].in_zone(cp.pos_j):
                        out.append(cp)
        self.conflicts = [
            ConflictPoint(n + 1, c.path_i, c.path_j, c.pos_i, c.pos_j) for n, c in enumerate(out)
        ]

    def conflicts_for(self, path_id: str) -> list[ConflictPoint]:
        """Registry entries touching ``path_id``, oriented with it on the i side."""
        out = []
        for cp in self.conflicts:
            if cp.path_i == path_id:
                out.append(cp)
            elif cp.path_j == path_id:
                out.append(cp.swapped())
        return sorted(out, key=lambda c: (c.pos_i, c.id))


def detect_conflicts(pa: Path, pb: Path) -> list[ConflictPoint]:
    """Geometric crossings of two distinct paths, ordered by position on ``pa``."""
    if pa.id == pb.id:
        return []
    return [
        ConflictPoint(n, pa.id, pb.id, sa, sb)
        for n, (sa, sb, _) in enumerate(_raw_crossings(pa, pb))
    ]


def conflict_points(network: RoadNetwork, path_a: str, path_b: str) -> list[ConflictPoint]:
    """Conflict points between two paths of ``network``, oriented ``a`` then ``b``."""
    for pid in (path_a, path_b):
        if pid not in network.paths:
            raise KeyError(pid)
    if path_a == path_b:
        return []
    if network.declared is not None:
        return [cp for cp in network.conflicts_for(path_a) if cp.path_j == path_b]
    return detect_conflicts(network.paths[path_a], network.paths[path_b])
