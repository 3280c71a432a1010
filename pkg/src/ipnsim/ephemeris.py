"""Coplanar circular-orbit ephemeris and line-of-sight tests.

All positions are heliocentric ecliptic (x, y) in metres; time is seconds
since the scenario epoch.
"""

import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .units import AU, C

KINDS = ("fixed-point", "circular-heliocentric", "circular-planetocentric", "lagrangian")
LAGRANGE_POINTS = ("L1", "L2", "L3", "L4", "L5")
DEFAULT_SUN_EXCLUSION = 0.035 * AU


@dataclass(frozen=True)
class PhysicalConstants:
    c: float = C
    au: float = AU

    @property
    def au_light_time(self) -> float:
        return self.au / self.c


CONSTANTS = PhysicalConstants()


class EphemerisError(ValueError):
    pass


class UnknownBody(EphemerisError, KeyError):
    def __str__(self):
        return f"unknown body {self.args[0]!r}"


class Position(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class OrbitSpec:
    """Orbit of one body.

    ``fixed-point`` bodies sit at ``radius`` along ``phase`` from their parent
    (or the origin).  ``lagrangian`` bodies ride a Lagrange point of ``parent``
    relative to the parent's own orbital centre; ``mass_ratio`` on the
    *parent's* spec sets the L1/L2 Hill-radius offset.
    """

    kind: str
    radius: float = 0.0
    period: float = 0.0
    phase: float = 0.0
    parent: Optional[str] = None
    lagrange_point: Optional[str] = None
    mass_ratio: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise EphemerisError(f"unknown orbit kind {self.kind!r}")
        if self.kind.startswith("circular"):
            if not self.radius > 0 or not self.period > 0:
                raise EphemerisError(f"{self.kind} orbit needs radius > 0 and period > 0")
        if self.kind == "circular-planetocentric" and not self.parent:
            raise EphemerisError("planetocentric orbit needs a parent")
        if self.kind == "lagrangian":
            if not self.parent:
                raise EphemerisError("lagrangian orbit needs a parent")
            if self.lagrange_point not in LAGRANGE_POINTS:
                raise EphemerisError(f"lagrange point must be one of {LAGRANGE_POINTS}")
        if self.radius < 0 or self.mass_ratio < 0:
            raise EphemerisError("radius and mass_ratio must be non-negative")


_COS60 = 0.5
_SIN60 = math.sqrt(3.0) / 2.0


class Ephemeris:
    """Positions of every body in a scenario as pure functions of time."""

    def __init__(self, orbits: Mapping[str, OrbitSpec]):
        self.orbits = dict(orbits)

    def __contains__(self, body):
        return body in self.orbits

    def spec(self, body: str) -> OrbitSpec:
        try:
            return self.orbits[body]
        except KeyError:
            raise UnknownBody(body) from None

    def _xy(self, body, t, _chain=()):
        # t may be a float or a numpy array; returns matching x, y
        if body in _chain:
            raise EphemerisError("cyclic parent chain: " + " -> ".join(_chain + (body,)))
        spec = self.spec(body)
        chain = _chain + (body,)
        if spec.kind == "lagrangian":
            return self._lagrange_xy(spec, t, chain)
        if spec.kind == "fixed-point":
            ang = spec.phase
        else:
            ang = spec.phase + 2.0 * math.pi * (np.fmod(t, spec.period) / spec.period)
        x = spec.radius * np.cos(ang)
        y = spec.radius * np.sin(ang)
        if spec.parent is not None:
            px, py = self._xy(spec.parent, t, chain)
            x, y = x + px, y + py
        elif spec.kind == "fixed-point":
            # broadcast constants to the shape of t
            x, y = x + 0.0 * np.asarray(t), y + 0.0 * np.asarray(t)
        return x, y

    def _lagrange_xy(self, spec, t, chain):
        parent = self.spec(spec.parent)
        px, py = self._xy(spec.parent, t, chain)
        if parent.parent is not None:
            cx, cy = self._xy(parent.parent, t, chain + (spec.parent,))
        else:
            cx, cy = 0.0, 0.0
        rx, ry = px - cx, py - cy
        point = spec.lagrange_point
        if point in ("L1", "L2"):
            h = (parent.mass_ratio / 3.0) ** (1.0 / 3.0)
            s = 1.0 - h if point == "L1" else 1.0 + h
            return cx + s * rx, cy + s * ry
        if point == "L3":
            return cx - rx, cy - ry
        sin = _SIN60 if point == "L4" else -_SIN60
        return cx + _COS60 * rx - sin * ry, cy + sin * rx + _COS60 * ry

    def position_at(self, body: str, t: float) -> Position:
        if t < 0:
            raise ValueError("time must be non-negative")
        x, y = self._xy(body, float(t))
        return Position(float(x), float(y))

    def positions(self, body: str, times) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorised :meth:`position_at` over an array of times."""
        ts = np.asarray(times, dtype=float)
        x, y = self._xy(body, ts)
        return np.broadcast_to(x, ts.shape), np.broadcast_to(y, ts.shape)

    def distance(self, a: str, b: str, t: float) -> float:
        pa, pb = self.position_at(a, t), self.position_at(b, t)
        return math.hypot(pa.x - pb.x, pa.y - pb.y)

    def line_of_sight(self, a: str, b: str, t: float,
                      occluders: Sequence[Tuple[str, float]] = ()) -> bool:
        if a == b:
            raise ValueError("line of sight needs two distinct bodies")
        if b < a:
            a, b = b, a
        pa, pb = self.position_at(a, t), self.position_at(b, t)
        for body, radius in occluders:
            pc = self.position_at(body, t)
            if segment_blocked(pa, pb, pc, radius):
                return False
        return True

    def synodic_period(self, a: str, b: str) -> float:
        rates = []
        for body in (a, b):
            spec = self.spec(body)
            if spec.kind == "circular-heliocentric":
                rates.append(1.0 / spec.period)
            elif spec.kind == "fixed-point" and spec.parent is None:
                rates.append(0.0)
            else:
                raise EphemerisError(f"synodic period needs heliocentric bodies, {body!r} is {spec.kind}")
        diff = abs(rates[0] - rates[1])
        if diff == 0.0:
            raise EphemerisError(f"{a!r} and {b!r} have equal periods; synodic period undefined")
        return 1.0 / diff


def segment_blocked(pa, pb, pc, radius) -> bool:
    """True if the closest point of segment pa-pb to pc is strictly interior and within ``radius``."""
    dx, dy = pb[0] - pa[0], pb[1] - pa[1]
    length2 = dx * dx + dy * dy
    if length2 == 0.0:
        return False
    wx, wy = pc[0] - pa[0], pc[1] - pa[1]
    u = (wx * dx + wy * dy) / length2
    if not 0.0 < u < 1.0:
        return False
    perp = abs(wx * dy - wy * dx) / math.sqrt(length2)
    return perp < radius


def segment_blocked_mask(ax, ay, bx, by, cx, cy, radius) -> np.ndarray:
    """Array form of :func:`segment_blocked`."""
    dx, dy = bx - ax, by - ay
    length2 = dx * dx + dy * dy
    wx, wy = cx - ax, cy - ay
    with np.errstate(divide="ignore", invalid="ignore"):
        u = (wx * dx + wy * dy) / length2
        perp = np.abs(wx * dy - wy * dx) / np.sqrt(length2)
    return (length2 > 0.0) & (u > 0.0) & (u < 1.0) & (perp < radius)
