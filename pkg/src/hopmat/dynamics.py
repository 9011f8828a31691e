"""Floating-base one-legged hopper with a spring-chain leg.

The configuration follows the usual Raibert layout: base position ``p``,
base orientation ``phi`` (roll, pitch, yaw), two hip angles, the prismatic
actuator extension ``l_s``, plus one axial deflection per flexible leg
segment. Orientation is carried internally as a unit quaternion and the
base angular velocity as a world-frame vector.

Sign convention for the hip: ``theta_x`` and ``theta_y`` are right-handed
rotations about the base x and y axes, so a positive ``theta_x`` swings the
foot toward +y and a positive ``theta_y`` swings it toward -x.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path

import numpy as np

from . import _core
from .behaviors import Terrain
from .materials import SegmentedLeg


class NumericalInstability(RuntimeError):
    """The integration produced non-finite values or broke the deflection cap."""

    def __init__(self, message: str, status: int = _core.NONFINITE, time: float | None = None):
        super().__init__(message)
        self.status = status
        self.time = time


class EmptyTrace(ValueError):
    pass


class Phase(IntEnum):
    FLIGHT = 0
    STANCE = 1


@dataclass(frozen=True)
class HopperModel:
    leg: SegmentedLeg
    base_mass: float = 10.0
    base_inertia: tuple[float, float, float] = (15.0, 15.0, 15.0)
    hip_offset: tuple[float, float, float] = (0.002, 0.002, 0.0)
    gravity: float = 9.81
    actuator_mass: float = 1.0
    leg_spring: float = 5000.0
    leg_spring_damping: float = 100.0
    actuator_rest: float = 0.3
    actuator_min: float = 0.05
    actuator_max: float = 0.45
    stop_stiffness: float = 2.0e4
    stop_damping: float = 200.0
    ground_stiffness: float = 1.0e5
    ground_damping: float = 1.0e3
    friction: float = 0.8
    friction_damping: float = 1.0e4
    terrain: Terrain = field(default_factory=Terrain)
    contact_enabled: bool = True

    def __post_init__(self):
        positive = {
            "base_mass": self.base_mass,
            "actuator_mass": self.actuator_mass,
            "leg_spring": self.leg_spring,
            "ground_stiffness": self.ground_stiffness,
        }
        for name, value in positive.items():
            if not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")
        if any(not i > 0 for i in self.base_inertia):
            raise ValueError("base inertia must be positive")
        if self.gravity < 0:
            raise ValueError("gravity must be non-negative")
        if self.friction < 0:
            raise ValueError("friction coefficient must be non-negative")
        if not self.actuator_min < self.actuator_max:
            raise ValueError("actuator travel range is empty")

    @property
    def n_flexible(self) -> int:
        return self.leg.n_flexible

    @property
    def nominal_leg_length(self) -> float:
        """Hip-to-foot distance with the actuator at rest and the chain unloaded."""
        return self.actuator_rest + self.leg.total_length

    def kernel_params(self) -> tuple[np.ndarray, ...]:
        P = np.zeros(_core.N_PARAMS)
        P[_core.P_BASE_MASS] = self.base_mass
        P[_core.P_IXX : _core.P_IZZ + 1] = self.base_inertia
        P[_core.P_HIP_X : _core.P_HIP_Z + 1] = self.hip_offset
        P[_core.P_GRAVITY] = self.gravity
        P[_core.P_ACT_MASS] = self.actuator_mass
        P[_core.P_LEG_K] = self.leg_spring
        P[_core.P_LEG_C] = self.leg_spring_damping
        P[_core.P_LS_REST] = self.actuator_rest
        P[_core.P_LS_MIN] = self.actuator_min
        P[_core.P_LS_MAX] = self.actuator_max
        P[_core.P_STOP_K] = self.stop_stiffness
        P[_core.P_STOP_C] = self.stop_damping
        P[_core.P_GROUND_K] = self.ground_stiffness
        P[_core.P_GROUND_C] = self.ground_damping
        P[_core.P_MU] = self.friction
        P[_core.P_FRICTION_C] = self.friction_damping
        P[_core.P_GRADE] = self.terrain.grade
        P[_core.P_CONTACT_ON] = 1.0 if self.contact_enabled else 0.0
        leg = self.leg
        seg_len = np.array(leg.lengths, dtype=float)
        seg_mass = np.array(leg.masses, dtype=float)
        if leg.rigid:
            seg_k = np.zeros(leg.n_segments)
            seg_c = np.zeros(leg.n_segments)
        else:
            seg_k = np.array(leg.stiffnesses, dtype=float)
            seg_c = np.array(leg.damping, dtype=float)
        dof = np.zeros(leg.n_segments, dtype=np.int64)
        idx = 0
        for j in range(leg.n_segments):
            if seg_k[j] > 0:
                dof[j] = idx
                idx += 1
        return P, seg_len, seg_mass, seg_k, seg_c, dof


def _quat_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


@dataclass(frozen=True)
class HopperState:
    """Generalized coordinates ``q`` and speeds ``v`` at time ``t``.

    ``q`` = (p[3], quaternion wxyz[4], theta_x, theta_y, l_s, delta[nf]);
    ``v`` = (p_dot[3], omega_world[3], theta_x_dot, theta_y_dot, l_s_dot, delta_dot[nf]).
    """

    q: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        q = np.array(self.q, dtype=float)
        v = np.array(self.v, dtype=float)
        if q.shape[0] != v.shape[0] + 1 or v.shape[0] < 9:
            raise ValueError(f"inconsistent state sizes q={q.shape} v={v.shape}")
        q.flags.writeable = False
        v.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "v", v)

    @classmethod
    def initial(
        cls,
        model: HopperModel,
        position=(0.0, 0.0, None),
        orientation=(0.0, 0.0, 0.0),
        velocity=(0.0, 0.0, 0.0),
        clearance: float = 0.3,
        leg_angles=(0.0, 0.0),
    ) -> "HopperState":
        """Leg at rest, foot ``clearance`` above the terrain unless z is given."""
        nf = model.n_flexible
        x, y, z = position
        if z is None:
            z = model.terrain.height(x, y) + model.nominal_leg_length + clearance
        q = np.zeros(10 + nf)
        q[0:3] = (x, y, z)
        q[3:7] = _quat_from_euler(*orientation)
        q[7:9] = leg_angles
        q[9] = model.actuator_rest
        v = np.zeros(9 + nf)
        v[0:3] = velocity
        return cls(q, v, 0.0)

    @property
    def nf(self) -> int:
        return self.v.shape[0] - 9

    @property
    def p(self) -> np.ndarray:
        return self.q[0:3]

    @property
    def quaternion(self) -> np.ndarray:
        return self.q[3:7]

    @property
    def rotation(self) -> np.ndarray:
        R = np.empty((3, 3))
        _core.quat_to_rot(np.ascontiguousarray(self.q), 3, R)
        return R

    @property
    def phi(self) -> np.ndarray:
        return np.array(_core.rot_to_euler(self.rotation))

    @property
    def theta(self) -> np.ndarray:
        return self.q[7:9]

    @property
    def ls(self) -> float:
        return float(self.q[9])

    @property
    def delta(self) -> np.ndarray:
        return self.q[10:]

    @property
    def p_dot(self) -> np.ndarray:
        return self.v[0:3]

    @property
    def omega(self) -> np.ndarray:
        return self.v[3:6]

    @property
    def phi_dot(self) -> np.ndarray:
        R = self.rotation
        wb = R.T @ self.omega
        roll, pitch, _ = _core.rot_to_euler(R)
        return np.array(_core.euler_rates(roll, pitch, wb[0], wb[1], wb[2]))

    @property
    def theta_dot(self) -> np.ndarray:
        return self.v[6:8]

    @property
    def ls_dot(self) -> float:
        return float(self.v[8])

    @property
    def delta_dot(self) -> np.ndarray:
        return self.v[9:]

    def replace(self, q=None, v=None, t=None) -> "HopperState":
        return HopperState(
            self.q if q is None else q, self.v if v is None else v, self.t if t is None else t
        )


@dataclass(frozen=True)
class ContactState:
    phase: Phase
    force: np.ndarray
    foot_position: np.ndarray
    penetration: float

    @property
    def fz(self) -> float:
        return float(self.force[2])


def _check_state(model: HopperModel, state: HopperState) -> None:
    if state.nf != model.n_flexible:
        raise ValueError(
            f"state carries {state.nf} deflections but the leg has {model.n_flexible} flexible segments"
        )


def contact_force(model: HopperModel, state: HopperState) -> ContactState:
    """Penalty ground contact at the foot for the given state."""
    _check_state(model, state)
    params = model.kernel_params()
    out = np.zeros(_core.N_CONTACT)
    _core.contact_state(np.array(state.q), np.array(state.v), *params, out)
    return ContactState(
        phase=Phase.STANCE if out[_core.K_STANCE] > 0 else Phase.FLIGHT,
        force=out[_core.K_FX : _core.K_FZ + 1].copy(),
        foot_position=out[_core.K_FOOT_X : _core.K_FOOT_Z + 1].copy(),
        penetration=float(out[_core.K_PEN]),
    )


_STATUS_TEXT = {
    _core.NONFINITE: "non-finite state",
    _core.DEFLECTION: "segment deflection exceeded half the segment length",
    _core.SINGULAR: "mass matrix lost positive definiteness",
    _core.APEX: "base rose beyond the apex limit",
}


def step(model: HopperModel, state: HopperState, inputs, dt: float) -> HopperState:
    """One semi-implicit Euler step under hip torques and actuator force ``inputs``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    _check_state(model, state)
    q = np.array(state.q)
    v = np.array(state.v)
    tau = np.asarray(inputs, dtype=float).reshape(3)
    contact = np.zeros(_core.N_CONTACT)
    status = _core.step(q, v, tau, dt, *model.kernel_params(), contact)
    if status != _core.OK:
        raise NumericalInstability(_STATUS_TEXT[status], status, state.t + dt)
    return HopperState(q, v, state.t + dt)


def mass_matrix(model: HopperModel, state: HopperState) -> np.ndarray:
    return _core.mass_matrix(np.array(state.q), *model.kernel_params())


def node_positions(model: HopperModel, state: HopperState) -> np.ndarray:
    """World positions of the actuator node and every segment end, hip first."""
    P, seg_len, _, seg_k, _, dof = model.kernel_params()
    s = np.empty(seg_len.shape[0] + 1)
    _core.node_positions(np.array(state.q), P, seg_len, seg_k, dof, s)
    d = np.empty(3)
    scratch = [np.empty(3) for _ in range(5)]
    _core.leg_direction(state.q[7], state.q[8], d, *scratch)
    R = state.rotation
    hip = R @ np.asarray(model.hip_offset, dtype=float)
    return state.p + hip + np.outer(s, R @ d)


def mechanical_energy(model: HopperModel, state: HopperState) -> float:
    """Kinetic plus gravitational and elastic potential energy.

    Contact and stop springs are included when engaged.
    """
    M = mass_matrix(model, state)
    kinetic = 0.5 * state.v @ M @ state.v
    nodes = node_positions(model, state)
    masses = np.array((model.actuator_mass,) + tuple(model.leg.masses))
    g = model.gravity
    potential = g * (model.base_mass * state.p[2] + masses @ nodes[:, 2])
    potential += 0.5 * model.leg_spring * (state.ls - model.actuator_rest) ** 2
    if state.ls < model.actuator_min:
        potential += 0.5 * model.stop_stiffness * (model.actuator_min - state.ls) ** 2
    elif state.ls > model.actuator_max:
        potential += 0.5 * model.stop_stiffness * (state.ls - model.actuator_max) ** 2
    if not model.leg.rigid:
        potential += 0.5 * np.sum(np.array(model.leg.stiffnesses) * state.delta**2)
    contact = contact_force(model, state)
    if model.contact_enabled and contact.penetration > 0:
        potential += 0.5 * model.ground_stiffness * contact.penetration**2
    return float(kinetic + potential)


def linear_momentum(model: HopperModel, state: HopperState) -> np.ndarray:
    M = mass_matrix(model, state)
    total = np.zeros(3)
    # rows 0..2 of M v are the linear momentum of all bodies
    total += (M @ state.v)[0:3]
    return total


# ------------------------------------------------------------------- traces


def trace_columns(nf: int) -> list[str]:
    deltas = [f"delta_{i}" for i in range(nf)]
    delta_dots = [f"delta_{i}_dot" for i in range(nf)]
    return (
        ["t", "p_x", "p_y", "p_z", "phi_x", "phi_y", "phi_z", "theta_x", "theta_y", "l_s"]
        + deltas
        + ["p_x_dot", "p_y_dot", "p_z_dot", "phi_x_dot", "phi_y_dot", "phi_z_dot"]
        + ["theta_x_dot", "theta_y_dot", "l_s_dot"]
        + delta_dots
        + ["tau_1", "tau_2", "tau_3", "F_x", "F_y", "F_z", "phase", "foot_x", "foot_y", "foot_z"]
    )


@dataclass(frozen=True)
class SimTrace:
    """Uniformly sampled record of a run; one row per sample."""

    data: np.ndarray
    columns: tuple[str, ...]
    sample_period: float

    def __post_init__(self):
        data = np.array(self.data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(self.columns):
            raise ValueError("trace data does not match its column list")
        data.flags.writeable = False
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "_index", {c: i for i, c in enumerate(self.columns)})
        if data.shape[0] > 1 and np.any(np.diff(data[:, 0]) <= 0):
            raise ValueError("trace timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.data.shape[0]

    def __getitem__(self, column: str) -> np.ndarray:
        return self.data[:, self._index[column]]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def phase(self) -> np.ndarray:
        return self["phase"].astype(int)

    def decimate(self, factor: int) -> "SimTrace":
        return SimTrace(self.data[::factor], self.columns, self.sample_period * factor)

    def window(self, t0: float, tf: float) -> "SimTrace":
        mask = (self.t >= t0) & (self.t < tf)
        return SimTrace(self.data[mask], self.columns, self.sample_period)

    @classmethod
    def from_columns(cls, sample_period: float, **columns) -> "SimTrace":
        names = tuple(columns)
        data = np.column_stack([np.asarray(columns[c], dtype=float) for c in names])
        return cls(data, names, sample_period)

    def to_csv(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(self.columns)
            for row in self.data:
                writer.writerow([repr(float(x)) for x in row])

    @classmethod
    def from_csv(cls, path: str | Path, sample_period: float | None = None) -> "SimTrace":
        with Path(path).open() as fh:
            reader = csv.reader(fh)
            header = tuple(next(reader))
            rows = [[float(x) for x in row] for row in reader]
        data = np.array(rows, dtype=float).reshape(-1, len(header))
        if sample_period is None:
            sample_period = float(data[1, 0] - data[0, 0]) if data.shape[0] > 1 else 0.0
        return cls(data, header, sample_period)


@dataclass(frozen=True)
class PhaseEvents:
    touchdowns: tuple[float, ...]
    liftoffs: tuple[float, ...]
    apexes: tuple[float, ...]


def detect_phase_events(trace: SimTrace) -> PhaseEvents:
    """Touchdown, liftoff and apex times from the phase and vertical velocity columns.

    A touchdown is the first stance sample after flight, a liftoff the first
    flight sample after stance, and an apex the first flight sample whose
    vertical velocity is non-positive after a positive one.
    """
    if len(trace) == 0:
        raise EmptyTrace("trace has no samples")
    t = trace.t
    phase = trace.phase
    vz = trace["p_z_dot"]
    change = np.diff(phase)
    touchdowns = tuple(float(x) for x in t[1:][change == 1])
    liftoffs = tuple(float(x) for x in t[1:][change == -1])
    in_flight = (phase[1:] == 0) & (phase[:-1] == 0)
    crossing = (vz[:-1] > 0) & (vz[1:] <= 0) & in_flight
    apexes = tuple(float(x) for x in t[1:][crossing])
    return PhaseEvents(touchdowns, liftoffs, apexes)
