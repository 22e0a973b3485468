"""Human-style baseline controllers: IDM car following, yield signs and an
all-way stop served first-in-first-out."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

YIELD_DISTANCE = 0.4  # m
STOP_SPEED = 0.005  # m/s
STOP_HOLD = 0.2  # s


@dataclass(frozen=True)
class IdmParams:
    desired_speed: float = 0.5
    a_max: float = 0.3
    b_comf: float = 0.4
    delta: float = 4.0
    s0: float = 0.07
    T: float = 1.0

    def __post_init__(self):
        for name in ("desired_speed", "a_max", "b_comf", "delta", "s0", "T"):
            if getattr(self, name) <= 0:
                raise ValueError(f"IDM parameter {name} must be positive")


def idm_accel(
    v: float,
    dv: float,
    s: float,
    params: IdmParams,
    u_min: float = -math.inf,
    u_max: float = math.inf,
) -> float:
    """IDM acceleration clamped to ``[u_min, u_max]``.

    Args:
        v: own speed (m/s).
        dv: approach rate, own speed minus leader speed (m/s).
        s: bumper-to-bumper gap (m); ``math.inf`` for free road.
        params: IDM parameters.
        u_min, u_max: actuator limits (m/s^2).
    """
    if s <= 0.0:
        return u_min if math.isfinite(u_min) else -params.b_comf
    p = params
    free = 1.0 - (max(v, 0.0) / p.desired_speed) ** p.delta
    if math.isinf(s):
        interact = 0.0
    else:
        s_star = p.s0 + max(0.0, v * p.T + v * dv / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        ratio = s_star / s
        interact = ratio * ratio  # saturates to inf instead of raising
    acc = p.a_max * (free - interact)
    return min(max(acc, u_min), u_max)


class Decision(str, enum.Enum):
    PROCEED = "proceed"
    YIELD = "yield"


def yield_decision(mainline, threshold: float = YIELD_DISTANCE) -> Decision:
    """Yield if any mainline vehicle is inside, or within ``threshold`` of, the merging zone.

    ``mainline`` holds ``(position, zone_start, zone_end)`` triples, each in
    that vehicle's own path coordinates. Stateless by design.
    """
    for pos, z0, z1 in mainline:
        if z0 - threshold <= pos <= z1:
            return Decision.YIELD
    return Decision.PROCEED


@dataclass
class StopQueue:
    """FIFO service of an all-way stop."""

    order: list[str] = field(default_factory=list)
    crossing: str | None = None  # released vehicle still clearing the box
    released: list[str] = field(default_factory=list)

    def arrive(self, vehicle_id: str) -> None:
        if vehicle_id not in self.order and vehicle_id not in self.released:
            self.order.append(vehicle_id)

    def cleared(self, vehicle_id: str) -> None:
        if self.crossing == vehicle_id:
            self.crossing = None


def stop_queue_step(queue: StopQueue, stopped_for, zone_occupied: bool) -> list[str]:
    """Release the front vehicle if the box is empty and it has come to a full stop.

    ``stopped_for`` maps vehicle id to how long (s) it has been below the
    stop speed.
    """
    if zone_occupied or queue.crossing is not None or not queue.order:
        return []
    front = queue.order[0]
    if stopped_for.get(front, 0.0) < STOP_HOLD - 1e-9:
        return []
    queue.order.pop(0)
    queue.crossing = front
    queue.released.append(front)
    return [front]
