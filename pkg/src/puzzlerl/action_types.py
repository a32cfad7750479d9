"""Environment action value types, shared by the simulator and the codec."""

from dataclasses import dataclass

GRID_CELLS = 64
RADIUS_LEVELS = 8
TIME_STEP = 0.5
TIME_MAX = 10.0


@dataclass(frozen=True)
class GridPlace:
    """Place the agent ball at the center of a grid cell (1..64, row-major
    from the top-left) with a discrete radius level (1..8)."""

    cell: int
    radius: int


@dataclass(frozen=True)
class EventSeq:
    """Timed removals: ((body_id, time), ...) sorted by time, ties by id."""

    events: tuple = ()

    @staticmethod
    def make(pairs) -> "EventSeq":
        canon = tuple(sorted(((int(i), float(t)) for i, t in pairs), key=lambda p: (p[1], p[0])))
        return EventSeq(events=canon)

    def is_canonical(self) -> bool:
        return self.events == tuple(sorted(self.events, key=lambda p: (p[1], p[0])))


@dataclass(frozen=True)
class LaunchParams:
    """Projectile launch with an angle in degrees [0, 90] and a power
    fraction [0, 1]. Used by the perturbation machinery; no environment in
    this package consumes it directly."""

    theta_deg: float
    power: float


def on_time_lattice(t: float) -> bool:
    return abs(t * 2.0 - round(t * 2.0)) < 1e-9 and 0.0 <= t <= TIME_MAX
