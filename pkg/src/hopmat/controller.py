"""Raibert-style hopping controller: foot placement, attitude and hop height.

The individual laws are exposed as plain functions for testing; the closed
loop runs the compiled ``controller_step`` that chains them.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from typing import Mapping

import numpy as np

from . import _core

log = logging.getLogger(__name__)


class Unreachable(ValueError):
    """Foot target lies outside the leg's reach."""


@dataclass(frozen=True)
class ControllerGains:
    stance_time: float = 0.17  # s, initial stance duration estimate
    foot_velocity_gain: float = 0.01  # s
    position_gain: float = 0.75
    velocity_memory_gain: float = 0.5
    max_speed: float = 1.5  # m/s
    flight_kp: float = 300.0
    flight_kd: float = 40.0
    stance_kp: float = 400.0
    stance_kd: float = 60.0
    hop_gain: float = 200.0  # N/m
    hop_height: float = 1.0  # m
    initial_thrust: float = 350.0  # N
    max_hip_torque: float = 500.0  # N m
    max_thrust: float = 3000.0  # N
    stance_time_smoothing: float = 0.3
    stance_time_warmup_hops: int = 3
    reach_fraction: float = 0.95

    def __post_init__(self):
        for f in fields(self):
            value = getattr(self, f.name)
            if not (math.isfinite(value) and value >= 0):
                raise ValueError(f"gain {f.name} must be finite and non-negative, got {value}")
        if not self.hop_height > 0:
            raise ValueError("desired hop height must be positive")
        if not 0 < self.reach_fraction < 1:
            raise ValueError("reach fraction must lie in (0, 1)")
        if not 0 < self.stance_time_smoothing <= 1:
            raise ValueError("stance time smoothing must lie in (0, 1]")

    _CONFIG_KEYS = {
        "stance_time": "stance_time_s",
        "foot_velocity_gain": "foot_velocity_gain_s",
        "position_gain": "position_gain",
        "velocity_memory_gain": "velocity_memory_gain",
        "max_speed": "max_speed_m_s",
        "flight_kp": "flight_kp",
        "flight_kd": "flight_kd",
        "stance_kp": "stance_kp",
        "stance_kd": "stance_kd",
        "hop_gain": "hop_gain_n_m",
        "hop_height": "hop_height_m",
        "initial_thrust": "initial_thrust_n",
        "max_hip_torque": "max_hip_torque_n_m",
        "max_thrust": "max_thrust_n",
        "stance_time_smoothing": "stance_time_smoothing",
        "stance_time_warmup_hops": "stance_time_warmup_hops",
        "reach_fraction": "reach_fraction",
    }

    @classmethod
    def from_config(cls, section: Mapping) -> "ControllerGains":
        kwargs = {}
        for attr, key in cls._CONFIG_KEYS.items():
            if key in section:
                kwargs[attr] = type(getattr(cls, attr))(section[key])
        return cls(**kwargs)

    def kernel_vector(self) -> np.ndarray:
        G = np.zeros(_core.N_GAINS)
        G[_core.G_TST] = self.stance_time
        G[_core.G_K1] = self.foot_velocity_gain
        G[_core.G_K2] = self.position_gain
        G[_core.G_K3] = self.velocity_memory_gain
        G[_core.G_XMAX] = self.max_speed
        G[_core.G_KPF] = self.flight_kp
        G[_core.G_KDF] = self.flight_kd
        G[_core.G_KPS] = self.stance_kp
        G[_core.G_KDS] = self.stance_kd
        G[_core.G_KHOP] = self.hop_gain
        G[_core.G_HDES] = self.hop_height
        G[_core.G_F0] = self.initial_thrust
        G[_core.G_TAU_MAX] = self.max_hip_torque
        G[_core.G_F_MAX] = self.max_thrust
        G[_core.G_TST_ALPHA] = self.stance_time_smoothing
        G[_core.G_TST_WARMUP] = self.stance_time_warmup_hops
        G[_core.G_REACH] = self.reach_fraction
        return G


@dataclass(frozen=True)
class ControllerState:
    thrust: float = 0.0  # N, current hop force F_i
    last_hop_height: float = math.nan  # m, apex minus touchdown height of the last full cycle
    desired_velocity: tuple[float, float] = (0.0, 0.0)
    stance_time: float = 0.17
    in_stance: bool = False
    touchdown_time: float = 0.0
    touchdown_height: float = 0.0
    apex: float = 0.0
    thrust_latched: bool = False
    touchdowns: int = 0
    stance_count: int = 0
    saturations: int = 0

    def __post_init__(self):
        if self.thrust < 0:
            raise ValueError("hop force must be non-negative")

    @classmethod
    def initial(cls, gains: ControllerGains) -> "ControllerState":
        return cls(thrust=gains.initial_thrust, stance_time=gains.stance_time)

    def kernel_vector(self) -> np.ndarray:
        C = np.zeros(_core.N_CSTATE)
        C[_core.C_F] = self.thrust
        have = not math.isnan(self.last_hop_height)
        C[_core.C_HPREV] = self.last_hop_height if have else 0.0
        C[_core.C_HAVE_H] = 1.0 if have else 0.0
        C[_core.C_XDES_X], C[_core.C_XDES_Y] = self.desired_velocity
        C[_core.C_TST] = self.stance_time
        C[_core.C_PHASE] = 1.0 if self.in_stance else 0.0
        C[_core.C_T_TD] = self.touchdown_time
        C[_core.C_Z_TD] = self.touchdown_height
        C[_core.C_APEX] = self.apex
        C[_core.C_LATCH] = 1.0 if self.thrust_latched else 0.0
        C[_core.C_N_TD] = self.touchdowns
        C[_core.C_N_STANCE] = self.stance_count
        C[_core.C_N_SAT] = self.saturations
        return C

    @classmethod
    def from_kernel(cls, C: np.ndarray) -> "ControllerState":
        return cls(
            thrust=float(C[_core.C_F]),
            last_hop_height=float(C[_core.C_HPREV]) if C[_core.C_HAVE_H] > 0 else math.nan,
            desired_velocity=(float(C[_core.C_XDES_X]), float(C[_core.C_XDES_Y])),
            stance_time=float(C[_core.C_TST]),
            in_stance=bool(C[_core.C_PHASE] > 0),
            touchdown_time=float(C[_core.C_T_TD]),
            touchdown_height=float(C[_core.C_Z_TD]),
            apex=float(C[_core.C_APEX]),
            thrust_latched=bool(C[_core.C_LATCH] > 0),
            touchdowns=int(C[_core.C_N_TD]),
            stance_count=int(C[_core.C_N_STANCE]),
            saturations=int(C[_core.C_N_SAT]),
        )


def desired_velocity(gains: ControllerGains, position_error, previous) -> np.ndarray:
    ex, ey = position_error
    px, py = previous
    return np.array(
        _core.desired_velocity(
            gains.position_gain, gains.velocity_memory_gain, gains.max_speed, ex, ey, px, py
        )
    )


def foot_placement(gains: ControllerGains, velocity, desired, stance_time: float | None = None) -> np.ndarray:
    """Foot target relative to the hip in the heading frame."""
    t_st = gains.stance_time if stance_time is None else stance_time
    return np.array(
        _core.foot_placement(t_st, gains.foot_velocity_gain, velocity[0], velocity[1], desired[0], desired[1])
    )


def leg_inverse_kinematics(leg_length: float, foot) -> tuple[float, float]:
    """Hip angles that put a leg of ``leg_length`` at ``foot`` = (x, y) in the body frame.

    Sign convention: positive ``theta_x`` moves the foot toward +y, positive
    ``theta_y`` moves it toward -x.
    """
    tx, ty, ok = _core.leg_ik(leg_length, float(foot[0]), float(foot[1]))
    if not ok:
        raise Unreachable(f"foot target {tuple(foot)} is beyond leg length {leg_length}")
    return tx, ty


def leg_forward_kinematics(leg_length: float, theta_x: float, theta_y: float) -> np.ndarray:
    return np.array(_core.leg_fk(leg_length, theta_x, theta_y))


def flight_pd(gains: ControllerGains, angle_error, rate_error) -> np.ndarray:
    return np.array(
        _core.flight_pd(gains.flight_kp, gains.flight_kd, angle_error[0], angle_error[1], rate_error[0], rate_error[1])
    )


def stance_attitude_pd(gains: ControllerGains, attitude_error, rate_error) -> np.ndarray:
    return np.array(
        _core.stance_pd(
            gains.stance_kp, gains.stance_kd, attitude_error[0], attitude_error[1], rate_error[0], rate_error[1]
        )
    )


def hop_height_update(
    thrust: float,
    gains: ControllerGains,
    last_hop_height: float,
    normal_force: float,
    vertical_velocity: float,
    already_updated: bool = False,
) -> tuple[float, float]:
    """Return (F_i, tau_3) for one stance sample.

    The trigger is a loaded foot with the base rising. The force adapts only
    on the first trigger of a cycle (``already_updated`` False); afterwards
    the held value is reapplied. Without a trigger no thrust is commanded.
    """
    if not (normal_force > 0 and vertical_velocity > 0):
        return thrust, 0.0
    if not already_updated and not math.isnan(last_hop_height):
        thrust = _core.hop_force_update(thrust, gains.hop_gain, gains.hop_height, last_hop_height)
    return thrust, min(thrust, gains.max_thrust)


def controller_step(
    model,
    gains: ControllerGains,
    ctrl_state: ControllerState,
    hopper_state,
    behavior,
) -> tuple[np.ndarray, ControllerState]:
    """Torques (tau_1, tau_2, tau_3) for the current state, plus the advanced controller state."""
    from .dynamics import contact_force

    contact = contact_force(model, hopper_state)
    cvec = np.zeros(_core.N_CONTACT)
    cvec[_core.K_FX : _core.K_FZ + 1] = contact.force
    cvec[_core.K_STANCE] = float(contact.phase)
    C = ctrl_state.kernel_vector()
    tau = np.zeros(3)
    P = model.kernel_params()[0]
    _core.controller_step(
        float(hopper_state.t),
        np.array(hopper_state.q),
        np.array(hopper_state.v),
        cvec,
        gains.kernel_vector(),
        C,
        behavior.kernel_vector(),
        P,
        model.nominal_leg_length,
        tau,
    )
    new = ControllerState.from_kernel(C)
    if new.saturations > ctrl_state.saturations:
        log.debug("foot target saturated at %.0f%% of reach", 100 * gains.reach_fraction)
    return tau, new
