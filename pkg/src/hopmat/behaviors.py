"""Reference trajectories and terrain for the four hopping behaviors."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from . import _core


class BehaviorKind(str, Enum):
    STATIC = "static"
    FORWARD = "forward"
    RAMP = "ramp"
    CIRCULAR = "circular"


_KIND_CODE = {
    BehaviorKind.STATIC: _core.KIND_STATIC,
    BehaviorKind.FORWARD: _core.KIND_FORWARD,
    BehaviorKind.RAMP: _core.KIND_RAMP,
    BehaviorKind.CIRCULAR: _core.KIND_CIRCULAR,
}


class TerrainKind(str, Enum):
    FLAT = "flat"
    INCLINE = "incline"


@dataclass(frozen=True)
class Terrain:
    """A plane through the origin rising along +x with slope ``grade``."""

    kind: TerrainKind = TerrainKind.FLAT
    grade: float = 0.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if not math.isfinite(self.grade):
            raise ValueError("terrain grade must be finite")
        if self.kind is TerrainKind.FLAT and self.grade != 0.0:
            raise ValueError("flat terrain cannot have a grade")
        if tuple(self.origin) != (0.0, 0.0):
            # the compiled contact model assumes the incline passes through the origin
            raise ValueError("only terrain anchored at the origin is supported")

    @classmethod
    def incline(cls, grade: float) -> "Terrain":
        return cls(TerrainKind.INCLINE, float(grade))

    def height(self, x: float, y: float) -> float:
        return float(_core.terrain_height(self.grade, x, y))

    def normal(self) -> np.ndarray:
        return np.array(_core.terrain_normal(self.grade))


def terrain_height(terrain: Terrain, x: float, y: float) -> tuple[float, np.ndarray]:
    """Surface height at (x, y) and the unit upward normal there."""
    if not (math.isfinite(x) and math.isfinite(y)):
        raise ValueError("terrain query needs finite coordinates")
    return terrain.height(x, y), terrain.normal()


@dataclass(frozen=True)
class BehaviorSpec:
    kind: BehaviorKind = BehaviorKind.STATIC
    speed: float = 0.0  # m/s
    grade: float = 0.0
    radius: float = 0.5  # m
    duration: float = 60.0  # s
    transient: float = 20.0  # s
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "kind", BehaviorKind(self.kind))
        if not self.duration > self.transient >= 0:
            raise ValueError(
                f"need duration > transient >= 0, got duration={self.duration}, transient={self.transient}"
            )
        if self.speed < 0:
            raise ValueError("target speed must be non-negative")
        if self.kind is BehaviorKind.CIRCULAR and not self.radius > 0:
            raise ValueError("circle radius must be positive")
        if self.kind is not BehaviorKind.RAMP and self.grade != 0.0:
            raise ValueError("only the ramp behavior has a grade")

    @property
    def name(self) -> str:
        return self.kind.value

    def terrain(self) -> Terrain:
        if self.kind is BehaviorKind.RAMP:
            return Terrain.incline(self.grade)
        return Terrain()

    def with_duration(self, duration: float, transient: float | None = None) -> "BehaviorSpec":
        if transient is None:
            transient = min(self.transient, duration / 3.0)
        return BehaviorSpec(
            self.kind, self.speed, self.grade, self.radius, duration, transient, self.origin
        )

    def kernel_vector(self) -> np.ndarray:
        B = np.zeros(_core.N_BEHAVIOR)
        B[_core.B_KIND] = _KIND_CODE[self.kind]
        B[_core.B_SPEED] = self.speed
        B[_core.B_GRADE] = self.grade
        B[_core.B_RADIUS] = self.radius
        B[_core.B_OX], B[_core.B_OY] = self.origin
        return B

    @classmethod
    def from_config(cls, kind: str | BehaviorKind, section: Mapping) -> "BehaviorSpec":
        kind = BehaviorKind(kind)
        common = dict(
            duration=float(section.get("duration_s", 60.0)),
            transient=float(section.get("transient_s", 20.0)),
        )
        if kind is BehaviorKind.FORWARD:
            return cls(kind, speed=float(section["forward_speed_m_s"]), **common)
        if kind is BehaviorKind.RAMP:
            return cls(
                kind,
                speed=float(section["ramp_speed_m_s"]),
                grade=float(section["ramp_grade"]),
                **common,
            )
        if kind is BehaviorKind.CIRCULAR:
            return cls(
                kind,
                speed=float(section["circle_speed_m_s"]),
                radius=float(section["circle_radius_m"]),
                **common,
            )
        return cls(kind, **common)


def reference(spec: BehaviorSpec, t: float) -> tuple[np.ndarray, np.ndarray]:
    """Desired planar position and velocity at time ``t``.

    The circle is centred on the origin offset and starts at angle zero, so
    ``|X_d - origin|`` equals the radius throughout.
    """
    if not 0.0 <= t <= spec.duration:
        raise ValueError(f"t={t} outside [0, {spec.duration}]")
    x, y, vx, vy = _core.reference(spec.kernel_vector(), float(t))
    return np.array([x, y]), np.array([vx, vy])


def reference_path(spec: BehaviorSpec, t: np.ndarray) -> np.ndarray:
    """Vectorized reference positions, shape (len(t), 2). No range check."""
    t = np.asarray(t, dtype=float)
    ox, oy = spec.origin
    if spec.kind in (BehaviorKind.FORWARD, BehaviorKind.RAMP):
        return np.column_stack([ox + spec.speed * t, np.full_like(t, oy)])
    if spec.kind is BehaviorKind.CIRCULAR:
        ang = spec.speed * t / spec.radius
        return np.column_stack([ox + spec.radius * np.cos(ang), oy + spec.radius * np.sin(ang)])
    return np.column_stack([np.full_like(t, ox), np.full_like(t, oy)])
