"""Closed-loop runs: hopper dynamics driven by the controller along a behavior."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .behaviors import BehaviorSpec
from .controller import ControllerGains, ControllerState
from .dynamics import HopperModel, HopperState, NumericalInstability, SimTrace, trace_columns, _STATUS_TEXT


@dataclass(frozen=True)
class SimResult:
    trace: SimTrace
    final_state: HopperState
    controller: ControllerState
    status: int
    steps: int
    dt: float

    @property
    def ok(self) -> bool:
        return self.status == _core.OK

    @property
    def failure(self) -> str | None:
        return None if self.ok else _STATUS_TEXT[self.status]

    def raise_on_failure(self) -> None:
        if not self.ok:
            raise NumericalInstability(self.failure, self.status, self.final_state.t)


def decimation_for(dt: float, sample_period: float) -> int:
    """Integration steps per recorded sample (at least one)."""
    return max(1, int(round(sample_period / dt)))


def quantize_dt(dt_limit: float, sample_period: float) -> float:
    """Largest ``sample_period / k`` (k integer) not above ``dt_limit``.

    Keeps the recorded trace on a uniform grid at ``sample_period`` whenever
    the integration step is finer than the sampling.
    """
    if not dt_limit > 0:
        raise ValueError("dt limit must be positive")
    if dt_limit >= sample_period:
        return sample_period
    k = math.ceil(sample_period / dt_limit * (1 - 1e-12))
    return sample_period / k


def initial_state_for(model: HopperModel, behavior: BehaviorSpec, clearance: float = 0.3) -> HopperState:
    """Hopper at rest above the behavior's starting reference point."""
    x0, y0, _, _ = _core.reference(behavior.kernel_vector(), 0.0)
    return HopperState.initial(model, position=(x0, y0, None), clearance=clearance)


def run(
    model: HopperModel,
    gains: ControllerGains,
    behavior: BehaviorSpec,
    dt: float,
    duration: float | None = None,
    sample_period: float = 1e-3,
    state: HopperState | None = None,
    ctrl: ControllerState | None = None,
    apex_limit: float = 0.0,
    record: bool = True,
) -> SimResult:
    """Integrate the closed loop for ``duration`` seconds at fixed ``dt``.

    The trace keeps every ``decimation``-th step. A run that hits a numerical
    fault stops early; its trace ends at the last good sample and ``status``
    says why.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    duration = behavior.duration if duration is None else duration
    if model.terrain.grade != behavior.terrain().grade:
        raise ValueError("model terrain does not match the behavior")
    if state is None:
        state = initial_state_for(model, behavior)
    if ctrl is None:
        ctrl = ControllerState.initial(gains)
    n_steps = int(round(duration / dt))
    decimation = decimation_for(dt, sample_period)
    nf = model.n_flexible
    rows = n_steps // decimation + 1 if record else 0
    out = np.zeros((rows, _core.trace_width(nf)))
    q = np.array(state.q)
    v = np.array(state.v)
    C = ctrl.kernel_vector()
    status, written, steps = _core.simulate(
        q,
        v,
        float(state.t),
        float(dt),
        n_steps,
        decimation,
        *model.kernel_params(),
        gains.kernel_vector(),
        C,
        behavior.kernel_vector(),
        model.nominal_leg_length,
        float(apex_limit),
        out,
    )
    trace = SimTrace(out[:written], tuple(trace_columns(nf)), dt * decimation)
    final = HopperState(q, v, state.t + steps * dt)
    return SimResult(trace, final, ControllerState.from_kernel(C), int(status), int(steps), dt)
