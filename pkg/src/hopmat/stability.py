"""Maximum stable integration timestep and the (density, modulus) stability grid."""

from __future__ import annotations

import csv
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import _core
from .behaviors import BehaviorSpec
from .controller import ControllerGains
from .dynamics import HopperModel, HopperState, NumericalInstability, step
from .materials import LegGeometry, MaterialSpec, SegmentedLeg, SegmentSpec, mono_leg

log = logging.getLogger(__name__)

Trial = Callable[[float], bool]


class AllUnstable(RuntimeError):
    """Even the smallest candidate timestep failed."""


@dataclass(frozen=True)
class ProbeConfig:
    ladder_top: float = 5e-2
    ladder_bottom: float = 1e-5
    ladder_factor: float = math.sqrt(10.0)
    relative_precision: float = 0.05
    trial_duration: float = 10.0
    apex_limit_factor: float = 10.0
    check_below: bool = True

    def __post_init__(self):
        if not self.ladder_top > self.ladder_bottom > 0:
            raise ValueError("ladder needs top > bottom > 0")
        if not self.ladder_factor > 1:
            raise ValueError("ladder factor must exceed 1")
        if not 0 < self.relative_precision < 1:
            raise ValueError("relative precision must lie in (0, 1)")
        if not self.trial_duration > 0:
            raise ValueError("trial duration must be positive")

    def ladder(self) -> tuple[float, ...]:
        """Geometric rungs from the top down to (and including) the bottom."""
        n = math.ceil(math.log(self.ladder_top / self.ladder_bottom) / math.log(self.ladder_factor) - 1e-9)
        rungs = [self.ladder_top / self.ladder_factor**i for i in range(n)]
        rungs.append(self.ladder_bottom)
        return tuple(rungs)

    @classmethod
    def from_config(cls, section) -> "ProbeConfig":
        return cls(
            ladder_top=float(section.get("ladder_top_s", 5e-2)),
            ladder_bottom=float(section.get("ladder_bottom_s", 1e-5)),
            ladder_factor=float(section.get("ladder_factor", math.sqrt(10.0))),
            relative_precision=float(section.get("relative_precision", 0.05)),
            trial_duration=float(section.get("trial_duration_s", 10.0)),
            apex_limit_factor=float(section.get("apex_limit_factor", 10.0)),
            check_below=bool(section.get("check_below", True)),
        )


@dataclass(frozen=True)
class StabilityProbe:
    """Outcome of one search: every tested dt with its verdict, in test order."""

    dt_max: float
    verdicts: tuple[tuple[float, bool], ...]
    anomalies: tuple[float, ...] = ()
    label: str = ""

    @property
    def monotone(self) -> bool:
        return not self.anomalies


def probe(trial: Trial, config: ProbeConfig = ProbeConfig(), label: str = "") -> StabilityProbe:
    """Walk the ladder down to the first stable rung, then log-bisect upward.

    Returns the largest dt confirmed stable, within ``relative_precision``
    of the boundary. With ``check_below`` the rung under the first stable
    one is also tried; a failure there is recorded as an anomaly.
    """
    verdicts: list[tuple[float, bool]] = []

    def test(dt: float) -> bool:
        ok = bool(trial(dt))
        verdicts.append((dt, ok))
        return ok

    ladder = config.ladder()
    unstable = None
    stable = None
    rung = -1
    for rung, dt in enumerate(ladder):
        if test(dt):
            stable = dt
            break
        unstable = dt
    if stable is None:
        raise AllUnstable(f"{label or 'trial'} unstable down to dt={ladder[-1]:.3g} s")
    anomalies = []
    if config.check_below and rung + 1 < len(ladder) and not test(ladder[rung + 1]):
        anomalies.append(ladder[rung + 1])
        log.warning("%s: stable at %.3g s but unstable at %.3g s", label or "trial", stable, ladder[rung + 1])
    if unstable is not None:
        lo, hi = stable, unstable
        while hi / lo > 1.0 + config.relative_precision:
            mid = math.sqrt(lo * hi)
            if test(mid):
                lo = mid
            else:
                hi = mid
        stable = lo
    return StabilityProbe(stable, tuple(verdicts), tuple(anomalies), label)


def max_stable_dt(trial: Trial, config: ProbeConfig = ProbeConfig(), label: str = "") -> float:
    return probe(trial, config, label).dt_max


def oscillator_trial(
    mass: float = 1.0, stiffness: float = 100.0, duration: float = 10.0, amplitude: float = 0.01
) -> Trial:
    """Undamped mass on a spring integrated by the hopper's own step.

    The spring is a single leg segment hanging from an effectively immovable
    base, so the chain mode is the only dynamics. Divergence shows up as the
    deflection cap being exceeded or a non-finite state.
    """
    seg = SegmentSpec(MaterialSpec("oscillator", 1.0, 1.0), 0.5, 0.02)
    leg = SegmentedLeg((seg,), (float(mass),), (float(stiffness),), (0.0,))
    big = 1e12
    model = HopperModel(
        leg,
        base_mass=big,
        base_inertia=(big, big, big),
        actuator_mass=big,
        gravity=0.0,
        leg_spring_damping=0.0,
        contact_enabled=False,
    )
    start = HopperState.initial(model, position=(0.0, 0.0, 5.0))
    q = np.array(start.q)
    q[9 + 1] = amplitude  # first chain deflection follows (x, y, z, quaternion, theta_x, theta_y, l_s)
    start = start.replace(q=q)

    def trial(dt: float) -> bool:
        state = start
        for _ in range(max(1, int(math.ceil(duration / dt)))):
            try:
                state = step(model, state, (0.0, 0.0, 0.0), dt)
            except NumericalInstability:
                return False
        return bool(np.all(np.isfinite(state.q)))

    return trial


def hopper_trial(
    model: HopperModel,
    gains: ControllerGains,
    duration: float = 10.0,
    apex_limit_factor: float = 10.0,
) -> Trial:
    """Static hopping for ``duration`` seconds with the given gains.

    Stable means no numerical fault, a finite final state and the base never
    rising more than ``apex_limit_factor`` times the desired hop height above
    its start.
    """
    from .simulation import run

    behavior = BehaviorSpec(duration=duration, transient=0.0)

    def trial(dt: float) -> bool:
        res = run(
            model,
            gains,
            behavior,
            dt,
            duration,
            apex_limit=apex_limit_factor * gains.hop_height,
            record=False,
        )
        finite = bool(np.all(np.isfinite(res.final_state.q)) and np.all(np.isfinite(res.final_state.v)))
        return res.status == _core.OK and finite

    return trial


@dataclass(frozen=True)
class CellSpec:
    """Everything needed to evaluate one grid cell in a worker process."""

    density: float
    modulus: float
    geometry: LegGeometry
    damping_ratio: float
    model_kwargs: dict = field(default_factory=dict)
    gains: ControllerGains = ControllerGains()
    probe: ProbeConfig = ProbeConfig()


def material_dt_max(cell: CellSpec) -> float:
    """Max stable dt for one (density, modulus) point, NaN if nothing on the ladder is stable."""
    material = MaterialSpec(f"rho={cell.density:.6g},E={cell.modulus:.6g}", cell.density, cell.modulus)
    leg = mono_leg(material, cell.geometry, cell.damping_ratio)
    model = HopperModel(leg, **cell.model_kwargs)
    trial = hopper_trial(model, cell.gains, cell.probe.trial_duration, cell.probe.apex_limit_factor)
    try:
        return probe(trial, cell.probe, material.name).dt_max
    except AllUnstable as exc:
        log.warning("%s", exc)
        return math.nan


@dataclass(frozen=True)
class StabilityGrid:
    densities: np.ndarray  # kg/m^3, ascending
    moduli: np.ndarray  # Pa, ascending
    dt_max: np.ndarray  # s, shape (len(densities), len(moduli)); NaN marks all-unstable cells

    def __post_init__(self):
        d = np.asarray(self.densities, dtype=float)
        e = np.asarray(self.moduli, dtype=float)
        g = np.asarray(self.dt_max, dtype=float)
        if g.shape != (d.size, e.size):
            raise ValueError("grid values do not match the axes")
        object.__setattr__(self, "densities", d)
        object.__setattr__(self, "moduli", e)
        object.__setattr__(self, "dt_max", g)

    def cells(self) -> Iterable[tuple[float, float, float]]:
        for i, rho in enumerate(self.densities):
            for j, e in enumerate(self.moduli):
                yield float(rho), float(e), float(self.dt_max[i, j])

    def loglinear_fit(self) -> tuple[float, float, float, float]:
        """Least-squares log dt = c + a log rho + b log E over finite cells: (c, a, b, R^2)."""
        rows = [(r, e, d) for r, e, d in self.cells() if math.isfinite(d)]
        if len(rows) < 4:
            raise ValueError("need at least four finite cells for a fit")
        arr = np.log10(np.array(rows))
        X = np.column_stack([np.ones(len(arr)), arr[:, 0], arr[:, 1]])
        y = arr[:, 2]
        coef, *_ = np.linalg.lstsq(X, y, rcond=None)
        resid = y - X @ coef
        ss_tot = float(np.sum((y - y.mean()) ** 2))
        r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
        return float(coef[0]), float(coef[1]), float(coef[2]), r2

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["rho_kg_m3", "modulus_pa", "dt_max_s"])
            for rho, e, d in self.cells():
                writer.writerow([repr(rho), repr(e), repr(d)])

    def write_sidecar(self, path: str | Path, extra: dict | None = None) -> None:
        meta = {
            "density_axis_kg_m3": [float(x) for x in self.densities],
            "modulus_axis_pa": [float(x) for x in self.moduli],
            "axis_scale": "log10",
            "missing_value": "nan",
            "columns": ["rho_kg_m3", "modulus_pa", "dt_max_s"],
        }
        meta.update(extra or {})
        Path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "StabilityGrid":
        with Path(path).open() as fh:
            rows = [tuple(float(x) for x in r) for r in list(csv.reader(fh))[1:]]
        densities = sorted({r[0] for r in rows})
        moduli = sorted({r[1] for r in rows})
        grid = np.full((len(densities), len(moduli)), np.nan)
        di = {v: i for i, v in enumerate(densities)}
        ei = {v: i for i, v in enumerate(moduli)}
        for rho, e, d in rows:
            grid[di[rho], ei[e]] = d
        return cls(np.array(densities), np.array(moduli), grid)


def log_axis(lo: float, hi: float, n: int) -> np.ndarray:
    if not 0 < lo <= hi:
        raise ValueError("axis bounds must be positive and ordered")
    if n < 1:
        raise ValueError("axis needs at least one point")
    if n == 1:
        return np.array([math.sqrt(lo * hi)])
    return np.logspace(math.log10(lo), math.log10(hi), n)


def evaluate_cells(cells: Sequence[CellSpec], workers: int = 1) -> list[float]:
    """Evaluate cells independently; order of results follows ``cells``."""
    if workers <= 1 or len(cells) <= 1:
        return [material_dt_max(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(material_dt_max, cells))


def sweep_grid(
    density_range: tuple[float, float],
    modulus_range: tuple[float, float],
    resolution: int | tuple[int, int],
    template: CellSpec,
    workers: int = 1,
) -> StabilityGrid:
    """Max stable dt on a log-spaced (density, modulus) grid."""
    nr, ne = (resolution, resolution) if isinstance(resolution, int) else resolution
    densities = log_axis(*density_range, nr)
    moduli = log_axis(*modulus_range, ne)
    cells = [
        CellSpec(float(r), float(e), template.geometry, template.damping_ratio, template.model_kwargs, template.gains, template.probe)
        for r in densities
        for e in moduli
    ]
    values = evaluate_cells(cells, workers)
    return StabilityGrid(densities, moduli, np.array(values).reshape(nr, ne))
