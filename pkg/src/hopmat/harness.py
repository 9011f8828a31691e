"""Experiment plans, batch execution and report assembly.

Every plan writes into one output directory::

    plan.json                  resolved plan, per-design dt and the config fingerprint
    records.json               per-run status and wall-clock time
    summary.csv                one row per run with metric means
    comparisons.csv            Mann-Whitney rows (when the plan has comparisons)
    trend.csv                  metric means against the swept property (sweeps only)
    runs/<design>_<behavior>/  trace.csv, metrics.csv, summary.json
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .behaviors import BehaviorKind, BehaviorSpec
from .config import ConfigError, fingerprint
from .controller import ControllerGains
from .dynamics import HopperModel
from .materials import (
    LegGeometry,
    MaterialCatalog,
    MaterialError,
    MaterialSpec,
    SegmentedLeg,
    build_leg,
    in_ashby_union,
    mono_leg,
)
from .metrics import METRIC_NAMES, CycleTooShort, MetricsReport, NoCycles, evaluate
from .simulation import quantize_dt, run
from .stability import AllUnstable, CellSpec, ProbeConfig, StabilityGrid, hopper_trial, log_axis, material_dt_max, probe
from .stats import mann_whitney_u

log = logging.getLogger(__name__)


class ExperimentKind(str, Enum):
    SINGLE = "simulate"
    MONO = "mono"
    DENSITY_SWEEP = "sweep-density"
    MODULUS_SWEEP = "sweep-modulus"
    GRADIENT = "gradient"
    HEATMAP = "heatmap"


@dataclass(frozen=True)
class Design:
    """A named leg: one material for a mono design, one per segment for a gradient."""

    name: str
    materials: tuple[MaterialSpec, ...]

    def leg(self, geometry: LegGeometry, damping_ratio: float) -> SegmentedLeg:
        if len(self.materials) == 1:
            return mono_leg(self.materials[0], geometry, damping_ratio)
        return build_leg(list(self.materials), geometry, damping_ratio)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "segments": [
                {"material": m.name, "density_kg_m3": m.density, "modulus_pa": m.modulus, "rigid": m.rigid}
                for m in self.materials
            ],
        }


@dataclass(frozen=True)
class Suite:
    """Everything a run needs, resolved from a config mapping."""

    cfg: Mapping

    @property
    def catalog(self) -> MaterialCatalog:
        return MaterialCatalog.from_config(self.cfg["materials"])

    @property
    def geometry(self) -> LegGeometry:
        leg = self.cfg["leg"]
        return LegGeometry.uniform(int(leg["n_segments"]), float(leg["total_length_m"]), float(leg["radius_m"]))

    @property
    def damping_ratio(self) -> float:
        return float(self.cfg["leg"]["damping_ratio"])

    @property
    def gains(self) -> ControllerGains:
        return ControllerGains.from_config(self.cfg["controller"])

    @property
    def probe_config(self) -> ProbeConfig:
        return ProbeConfig.from_config(self.cfg["stability"])

    @property
    def sample_period(self) -> float:
        return float(self.cfg["simulation"]["sample_period_s"])

    def model_kwargs(self) -> dict:
        h, c = self.cfg["hopper"], self.cfg["contact"]
        return dict(
            base_mass=float(h["base_mass_kg"]),
            base_inertia=tuple(float(x) for x in h["base_inertia_kg_m2"]),
            hip_offset=tuple(float(x) for x in h["hip_offset_m"]),
            gravity=float(h["gravity_m_s2"]),
            actuator_mass=float(h["actuator_mass_kg"]),
            leg_spring=float(h["leg_spring_n_m"]),
            leg_spring_damping=float(h["leg_spring_damping_n_s_m"]),
            actuator_rest=float(h["actuator_rest_m"]),
            actuator_min=float(h["actuator_min_m"]),
            actuator_max=float(h["actuator_max_m"]),
            stop_stiffness=float(h["stop_stiffness_n_m"]),
            stop_damping=float(h["stop_damping_n_s_m"]),
            ground_stiffness=float(c["ground_stiffness_n_m"]),
            ground_damping=float(c["ground_damping_n_s_m"]),
            friction=float(c["friction_coefficient"]),
            friction_damping=float(c["friction_damping_n_s_m"]),
        )

    def model(self, design: Design, behavior: BehaviorSpec | None = None) -> HopperModel:
        terrain = behavior.terrain() if behavior is not None else BehaviorSpec().terrain()
        return HopperModel(design.leg(self.geometry, self.damping_ratio), terrain=terrain, **self.model_kwargs())

    def behavior(self, kind: str, duration: float | None = None) -> BehaviorSpec:
        spec = BehaviorSpec.from_config(kind, self.cfg["behaviors"])
        return spec if duration is None else spec.with_duration(duration)

    def dt_max(self, design: Design) -> float:
        p = self.probe_config
        trial = hopper_trial(self.model(design), self.gains, p.trial_duration, p.apex_limit_factor)
        return probe(trial, p, design.name).dt_max

    def auto_dt(self, dt_max: float) -> float:
        factor = float(self.cfg["simulation"].get("safety_factor", 0.5))
        return quantize_dt(factor * dt_max, self.sample_period)

    def cell(self, density: float, modulus: float) -> CellSpec:
        return CellSpec(density, modulus, self.geometry, self.damping_ratio, self.model_kwargs(), self.gains, self.probe_config)


@dataclass(frozen=True)
class ExperimentPlan:
    kind: ExperimentKind
    designs: tuple[Design, ...]
    behaviors: tuple[str, ...]
    dt_policy: float | str  # "auto" or a fixed step in seconds
    out_dir: Path
    fingerprint: str
    duration: float | None = None
    comparisons: tuple[tuple[str, str], ...] = ()
    sweep: dict | None = None  # {"property": name, "values": {design: value}}
    workers: int = 1

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "designs": [d.to_dict() for d in self.designs],
            "behaviors": list(self.behaviors),
            "dt_policy": self.dt_policy,
            "duration_s": self.duration,
            "comparisons": [list(c) for c in self.comparisons],
            "sweep": self.sweep,
            "fingerprint": self.fingerprint,
        }


@dataclass(frozen=True)
class RunRecord:
    design: str
    behavior: str
    dt: float
    status: str  # "ok" or "failed"
    message: str = ""
    trace_path: str = ""
    metrics_path: str = ""
    wall_s: float = 0.0

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def run_dir_name(design: str, behavior: str) -> str:
    return f"{design}_{behavior}"


# plan construction


def _plan_fingerprint(cfg: Mapping, kind: ExperimentKind, designs, behaviors, dt_policy, duration, extra=None) -> str:
    return fingerprint(
        {
            "config": cfg,
            "plan": {
                "kind": kind.value,
                "designs": [d.to_dict() for d in designs],
                "behaviors": list(behaviors),
                "dt_policy": dt_policy,
                "duration_s": duration,
                "extra": extra,
            },
        }
    )


def _behaviors(cfg: Mapping, behaviors: Sequence[str] | None) -> tuple[str, ...]:
    names = tuple(behaviors or cfg["experiments"]["behaviors"])
    for b in names:
        try:
            BehaviorKind(b)
        except ValueError:
            raise ConfigError(f"unknown behavior {b!r}") from None
    return names


def _dt_policy(cfg: Mapping, dt: float | str | None) -> float | str:
    value = cfg["simulation"].get("dt", "auto") if dt is None else dt
    if isinstance(value, str) and value.strip().lower() == "auto":
        return "auto"
    try:
        value = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"dt must be 'auto' or a number, got {value!r}") from None
    if not value > 0:
        raise ConfigError("dt must be positive")
    return value


def _catalog_designs(suite: Suite, names: Sequence[str]) -> tuple[Design, ...]:
    cat = suite.catalog
    out = []
    for n in names:
        if n not in cat:
            raise ConfigError(f"unknown material {n!r}; known: {cat.names()}")
        out.append(Design(n, (cat[n],)))
    return tuple(out)


def make_plan(
    kind: ExperimentKind | str,
    cfg: Mapping,
    out_dir: str | Path,
    materials: Sequence[str] | None = None,
    behaviors: Sequence[str] | None = None,
    dt: float | str | None = None,
    duration: float | None = None,
    workers: int | None = None,
) -> ExperimentPlan:
    """Resolve a plan from config; raises ConfigError on anything unresolvable."""
    kind = ExperimentKind(kind)
    suite = Suite(cfg)
    exp = cfg["experiments"]
    behaviors = _behaviors(cfg, behaviors)
    dt_policy = _dt_policy(cfg, dt)
    workers = int(exp.get("workers", 1) if workers is None else workers)
    comparisons: list[tuple[str, str]] = []
    sweep = None
    try:
        if kind is ExperimentKind.SINGLE:
            if not materials or len(materials) != 1:
                raise ConfigError("simulate needs exactly one material")
            designs = _catalog_designs(suite, materials)
        elif kind is ExperimentKind.MONO:
            designs = _catalog_designs(suite, materials or exp["materials"])
            baseline = exp.get("baseline", "MD")
            names = [d.name for d in designs]
            if baseline in names:
                comparisons = [(n, baseline) for n in names if n != baseline]
        elif kind in (ExperimentKind.DENSITY_SWEEP, ExperimentKind.MODULUS_SWEEP):
            designs, sweep = _sweep_designs(suite, kind)
            names = [d.name for d in designs]
            comparisons = list(zip(names[1:], names[:-1]))
        elif kind is ExperimentKind.GRADIENT:
            designs, comparisons = _gradient_designs(suite, materials)
        else:
            raise ConfigError("heatmaps are planned with make_heatmap_plan")
    except (MaterialError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    fp = _plan_fingerprint(cfg, kind, designs, behaviors, dt_policy, duration)
    return ExperimentPlan(
        kind, designs, behaviors, dt_policy, Path(out_dir), fp, duration, tuple(comparisons), sweep, workers
    )


def _sweep_designs(suite: Suite, kind: ExperimentKind) -> tuple[tuple[Design, ...], dict]:
    exp = suite.cfg["experiments"]
    bounds = suite.catalog.bounds
    if kind is ExperimentKind.DENSITY_SWEEP:
        sec = exp["density_sweep"]
        e = float(sec["modulus_pa"])
        points = [(float(r), e) for r in sec["densities_kg_m3"]]
        prop = "density_kg_m3"
    else:
        sec = exp["modulus_sweep"]
        rho = float(sec["density_kg_m3"])
        points = [(rho, float(e)) for e in sec["moduli_pa"]]
        prop = "modulus_pa"
    designs, values = [], {}
    for rho, e in points:
        if not in_ashby_union(rho, e, bounds):
            raise ConfigError(f"sweep point ({rho} kg/m^3, {e} Pa) lies outside every Ashby class")
        name = f"rho{rho:g}_E{e:.3g}"
        designs.append(Design(name, (MaterialSpec(name, rho, e),)))
        values[name] = rho if prop == "density_kg_m3" else e
    return tuple(designs), {"property": prop, "values": values}


def _gradient_designs(suite: Suite, selected: Sequence[str] | None) -> tuple[tuple[Design, ...], list]:
    exp = suite.cfg["experiments"]
    cat = suite.catalog
    n_seg = len(suite.geometry.lengths)
    defs = exp["gradients"]
    names = list(selected) if selected else list(defs)
    designs = []
    for name in names:
        if name in defs:
            d = defs[name]
            if "materials" in d:
                mats = tuple(cat[m] for m in d["materials"])
            else:
                e = float(d["modulus_pa"])
                mats = tuple(MaterialSpec(f"rho{float(r):g}_E{e:.3g}", float(r), e) for r in d["densities_kg_m3"])
            if len(mats) != n_seg:
                raise ConfigError(f"gradient {name} lists {len(mats)} materials for {n_seg} segments")
        elif name in cat:
            mats = (cat[name],)
        else:
            raise ConfigError(f"unknown gradient or material {name!r}")
        designs.append(Design(name, mats))
    refs = [r for r in exp.get("gradient_references", []) if r not in names]
    designs.extend(_catalog_designs(suite, refs))
    comparisons = [(g, r) for g in names for r in refs]
    for a, b in exp.get("gradient_pairs", []):
        if a in names and b in names:
            comparisons.append((a, b))
    return tuple(designs), comparisons


# execution


@dataclass(frozen=True)
class _Task:
    cfg: Mapping
    design: Design
    behavior: str
    dt: float
    duration: float | None
    run_dir: str
    fingerprint: str


def _execute(task: _Task) -> RunRecord:
    suite = Suite(task.cfg)
    behavior = suite.behavior(task.behavior, task.duration)
    model = suite.model(task.design, behavior)
    run_dir = Path(task.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    trace_path = run_dir / "trace.csv"
    metrics_path = run_dir / "metrics.csv"
    sim = suite.cfg["simulation"]
    t0 = time.perf_counter()
    res = run(model, suite.gains, behavior, task.dt, sample_period=suite.sample_period)
    res.trace.decimate(int(sim.get("trace_export_decimation", 1))).to_csv(trace_path)
    base = dict(design=task.design.name, behavior=task.behavior, dt=task.dt, trace_path=str(trace_path))
    if not res.ok:
        return RunRecord(status="failed", message=res.failure, wall_s=time.perf_counter() - t0, **base)
    try:
        report = evaluate(res.trace, behavior, None, float(sim.get("jerk_cutoff_hz", 50.0)), task.fingerprint)
    except (NoCycles, CycleTooShort) as exc:
        return RunRecord(status="failed", message=str(exc), wall_s=time.perf_counter() - t0, **base)
    report.to_csv(metrics_path)
    report.write_summary(run_dir / "summary.json")
    return RunRecord(status="ok", metrics_path=str(metrics_path), wall_s=time.perf_counter() - t0, **base)


def _map(fn, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _design_dt_max(args: tuple[Mapping, Design]) -> float:
    cfg, design = args
    try:
        return Suite(cfg).dt_max(design)
    except AllUnstable:
        return math.nan


def resolve_dts(plan: ExperimentPlan, cfg: Mapping) -> dict[str, dict]:
    """Per-design step: measured dt_max (auto policy) and the step actually used."""
    suite = Suite(cfg)
    if plan.dt_policy != "auto":
        return {d.name: {"dt_s": float(plan.dt_policy), "dt_max_s": None} for d in plan.designs}
    limits = _map(_design_dt_max, [(cfg, d) for d in plan.designs], plan.workers)
    out = {}
    for d, lim in zip(plan.designs, limits):
        dt = suite.auto_dt(lim) if math.isfinite(lim) else math.nan
        out[d.name] = {"dt_s": dt, "dt_max_s": lim}
    return out


def execute(plan: ExperimentPlan, cfg: Mapping) -> list[RunRecord]:
    """Run every (design, behavior) pair of a plan and write all reports."""
    out = plan.out_dir
    out.mkdir(parents=True, exist_ok=True)
    dts = resolve_dts(plan, cfg)
    manifest = plan.to_dict()
    manifest["dt"] = dts
    manifest["config"] = cfg
    (out / "plan.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n")
    tasks, records = [], []
    for d in plan.designs:
        dt = dts[d.name]["dt_s"]
        for b in plan.behaviors:
            if not math.isfinite(dt):
                records.append(RunRecord(d.name, b, dt, "failed", "no stable timestep found"))
                continue
            run_dir = out / "runs" / run_dir_name(d.name, b)
            tasks.append(_Task(cfg, d, b, dt, plan.duration, str(run_dir), plan.fingerprint))
    records.extend(_map(_execute, tasks, plan.workers))
    order = {(d.name, b): i for i, (d, b) in enumerate((d, b) for d in plan.designs for b in plan.behaviors)}
    records.sort(key=lambda r: order[(r.design, r.behavior)])
    (out / "records.json").write_text(
        json.dumps([r.__dict__ for r in records], indent=2, sort_keys=True, default=str) + "\n"
    )
    for r in records:
        if not r.ok:
            log.warning("run %s/%s failed: %s", r.design, r.behavior, r.message)
    write_reports(out)
    return records


# reporting


def load_reports(out_dir: str | Path) -> tuple[dict, dict[tuple[str, str], MetricsReport]]:
    out = Path(out_dir)
    try:
        manifest = json.loads((out / "plan.json").read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"no readable plan.json in {out}: {exc}") from exc
    reports = {}
    for d in manifest["designs"]:
        for b in manifest["behaviors"]:
            path = out / "runs" / run_dir_name(d["name"], b) / "metrics.csv"
            if path.exists():
                reports[(d["name"], b)] = MetricsReport.from_csv(path)
    return manifest, reports


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def comparison_rows(
    manifest: Mapping, reports: Mapping[tuple[str, str], MetricsReport]
) -> tuple[list[str], list[list]]:
    header = ["behavior", "design", "reference"]
    for m in METRIC_NAMES:
        header += [f"{m}_design", f"{m}_reference", f"{m}_u", f"{m}_p", f"{m}_method", f"{m}_star"]
    rows = []
    for b in manifest["behaviors"]:
        for a, ref in manifest["comparisons"]:
            ra, rb = reports.get((a, b)), reports.get((ref, b))
            row = [b, a, ref]
            for m in METRIC_NAMES:
                if ra is None or rb is None:
                    row += ["nan", "nan", "nan", "nan", "missing", ""]
                    continue
                test = mann_whitney_u(ra.values(m), rb.values(m))
                row += [
                    ra.summary[m].mean,
                    rb.summary[m].mean,
                    test.u,
                    test.p,
                    test.method.value,
                    test.star,
                ]
            rows.append(row)
    return header, rows


def summary_rows(manifest: Mapping, reports: Mapping[tuple[str, str], MetricsReport]) -> tuple[list[str], list[list]]:
    header = ["design", "behavior", "dt_s", "status", "n_cycles"]
    for m in METRIC_NAMES:
        header += [f"{m}_mean", f"{m}_std", f"{m}_median", f"{m}_q1", f"{m}_q3"]
    rows = []
    for d in manifest["designs"]:
        dt = manifest["dt"][d["name"]]["dt_s"]
        for b in manifest["behaviors"]:
            rep = reports.get((d["name"], b))
            if rep is None:
                rows.append([d["name"], b, dt, "failed", 0] + ["nan"] * (5 * len(METRIC_NAMES)))
                continue
            row = [d["name"], b, dt, "ok", len(rep.metrics)]
            for m in METRIC_NAMES:
                s = rep.summary[m]
                row += [s.mean, s.std, s.median, s.q1, s.q3]
            rows.append(row)
    return header, rows


def trend_rows(manifest: Mapping, reports: Mapping[tuple[str, str], MetricsReport]) -> tuple[list[str], list[list]]:
    sweep = manifest["sweep"]
    prop = sweep["property"]
    header = [prop, "design", "behavior"] + [f"{m}_{s}" for m in METRIC_NAMES for s in ("mean", "std")]
    rows = []
    for b in manifest["behaviors"]:
        for d in manifest["designs"]:
            rep = reports.get((d["name"], b))
            row = [float(sweep["values"][d["name"]]), d["name"], b]
            for m in METRIC_NAMES:
                row += [rep.summary[m].mean, rep.summary[m].std] if rep else ["nan", "nan"]
            rows.append(row)
    return header, rows


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def write_reports(out_dir: str | Path) -> None:
    """(Re)build summary, comparison and trend tables from the per-run metrics on disk."""
    out = Path(out_dir)
    manifest, reports = load_reports(out)
    _write_csv(out / "summary.csv", *summary_rows(manifest, reports))
    if manifest["comparisons"]:
        _write_csv(out / "comparisons.csv", *comparison_rows(manifest, reports))
    if manifest.get("sweep"):
        _write_csv(out / "trend.csv", *trend_rows(manifest, reports))


# stability heatmap


@dataclass(frozen=True)
class HeatmapPlan:
    densities: np.ndarray
    moduli: np.ndarray
    out_dir: Path
    fingerprint: str
    quick: bool = False
    workers: int = 1


def make_heatmap_plan(
    cfg: Mapping, out_dir: str | Path, quick: bool = False, resolution: int | None = None, workers: int | None = None
) -> HeatmapPlan:
    """Full grid axes from config; quick mode keeps a 4x4 subset of the same axes."""
    grid = cfg["grid"]
    n = int(grid["resolution"] if resolution is None else resolution)
    rho_lo, rho_hi = (float(x) for x in grid["density_kg_m3"])
    e_lo, e_hi = (float(x) for x in grid["modulus_pa"])
    densities = log_axis(rho_lo, rho_hi, n)
    moduli = log_axis(e_lo, e_hi, n)
    if quick:
        k = min(int(grid.get("quick_resolution", 4)), n)
        keep = sorted({int(round(x)) for x in np.linspace(0, n - 1, k)})
        densities, moduli = densities[keep], moduli[keep]
    workers = int(cfg["experiments"].get("workers", 1) if workers is None else workers)
    fp = fingerprint(
        {
            "config": {k: cfg[k] for k in ("materials", "leg", "hopper", "contact", "controller", "stability")},
            "densities": [repr(float(x)) for x in densities],
            "moduli": [repr(float(x)) for x in moduli],
        }
    )
    return HeatmapPlan(densities, moduli, Path(out_dir), fp, quick, workers)


def _cell_key(rho: float, e: float) -> tuple[str, str]:
    return repr(float(rho)), repr(float(e))


def _load_partial(path: Path) -> dict[tuple[str, str], float]:
    done = {}
    if not path.exists():
        return done
    with path.open() as fh:
        for row in csv.reader(fh):
            if len(row) == 3 and row[0] != "rho_kg_m3":
                done[(row[0], row[1])] = float(row[2])
    return done


def run_heatmap(plan: HeatmapPlan, cfg: Mapping, cache_dir: str | Path | None = None) -> StabilityGrid:
    """Evaluate every cell not already on disk, then write the grid CSV and sidecar.

    Finished cells are appended to ``cells.csv`` as they complete, so an
    interrupted sweep resumes with only the missing cells. ``cache_dir`` may
    point at another heatmap directory (for example a full grid) whose cells
    are reused when the configs match.
    """
    out = plan.out_dir
    out.mkdir(parents=True, exist_ok=True)
    partial = out / "cells.csv"
    stamp = out / "cells.fingerprint"
    cell_fp = _cell_fingerprint(cfg)
    if stamp.exists() and stamp.read_text().strip() != cell_fp:
        partial.unlink(missing_ok=True)
    stamp.write_text(cell_fp + "\n")
    done = _load_partial(partial)
    if cache_dir is not None:
        other = Path(cache_dir)
        if (other / "cells.fingerprint").exists() and (other / "cells.fingerprint").read_text().strip() == cell_fp:
            done.update(_load_partial(other / "cells.csv"))
    suite = Suite(cfg)
    todo = [
        (float(r), float(e))
        for r in plan.densities
        for e in plan.moduli
        if _cell_key(r, e) not in done
    ]
    with partial.open("a", newline="") as fh:
        writer = csv.writer(fh)
        for (r, e), value in zip(todo, _iter_cells(suite, todo, plan.workers)):
            writer.writerow([repr(r), repr(e), repr(value)])
            fh.flush()
            done[_cell_key(r, e)] = value
    grid = np.array([[done[_cell_key(r, e)] for e in plan.moduli] for r in plan.densities])
    result = StabilityGrid(plan.densities, plan.moduli, grid)
    result.to_csv(out / "stability_grid.csv")
    extra = {"fingerprint": plan.fingerprint, "quick": plan.quick}
    try:
        c, a, b, r2 = result.loglinear_fit()
        extra["loglinear_fit"] = {"intercept": c, "log_density_coef": a, "log_modulus_coef": b, "r_squared": r2}
    except ValueError:
        extra["loglinear_fit"] = None
    extra["unstable_cells"] = int(np.isnan(grid).sum())
    result.write_sidecar(out / "stability_grid.json", extra)
    return result


def _cell_fingerprint(cfg: Mapping) -> str:
    return fingerprint({k: cfg[k] for k in ("leg", "hopper", "contact", "controller", "stability")})


def _iter_cells(suite: Suite, points: Sequence[tuple[float, float]], workers: int):
    specs = [suite.cell(r, e) for r, e in points]
    if workers <= 1:
        for s in specs:
            yield material_dt_max(s)
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield from pool.map(material_dt_max, specs)
