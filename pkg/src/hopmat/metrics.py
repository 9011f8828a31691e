"""Per-hop-cycle performance metrics: power, tracking error, jerk, hop height."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal

from .behaviors import BehaviorSpec, reference_path
from .dynamics import SimTrace

METRIC_NAMES = ("power_w", "tracking_error_m", "jerk_m_s3", "hop_height_m")
CSV_COLUMNS = ("cycle_index", "t0_s", "tf_s") + METRIC_NAMES
MIN_JERK_SAMPLES = 7


class NoCycles(ValueError):
    """Fewer than two touchdowns after the transient cutoff."""


class CycleTooShort(ValueError):
    """Cycle has too few samples for a third-difference stencil."""


class EmptyInput(ValueError):
    """Aggregation over zero cycles."""


@dataclass(frozen=True)
class HopCycle:
    index: int
    t0: float
    tf: float
    start: int  # first row in the trace
    stop: int  # one past the last row
    n_samples: int = field(init=False)

    def __post_init__(self):
        if not self.t0 < self.tf:
            raise ValueError(f"cycle bounds out of order: {self.t0} >= {self.tf}")
        if self.stop < self.start:
            raise ValueError("cycle row range is reversed")
        object.__setattr__(self, "n_samples", self.stop - self.start)

    def rows(self) -> slice:
        return slice(self.start, self.stop)


@dataclass(frozen=True)
class HopCycleMetrics:
    power: float
    tracking_error: float
    jerk: float
    hop_height: float

    def __post_init__(self):
        for name in ("power", "tracking_error", "jerk", "hop_height"):
            value = getattr(self, name)
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    def as_row(self) -> tuple[float, float, float, float]:
        return (self.power, self.tracking_error, self.jerk, self.hop_height)


def touchdown_rows(trace: SimTrace) -> np.ndarray:
    """Row indices of the first stance sample after each flight interval."""
    phase = trace.phase
    return np.flatnonzero(np.diff(phase) == 1) + 1


def segment_cycles(trace: SimTrace, transient_cutoff: float) -> list[HopCycle]:
    """Touchdown-to-touchdown cycles starting at the first touchdown at or after the cutoff."""
    if len(trace) == 0 or trace.t[-1] <= transient_cutoff:
        raise NoCycles(f"trace ends before the {transient_cutoff} s cutoff")
    rows = touchdown_rows(trace)
    rows = rows[trace.t[rows] >= transient_cutoff]
    if len(rows) < 2:
        raise NoCycles(f"{len(rows)} touchdown(s) after {transient_cutoff} s, need at least 2")
    t = trace.t
    return [
        HopCycle(i, float(t[a]), float(t[b]), int(a), int(b))
        for i, (a, b) in enumerate(zip(rows[:-1], rows[1:]))
    ]


def power(trace: SimTrace, cycle: HopCycle) -> float:
    """Mean norm of the per-actuator power (hip x, hip y, thrust) over the cycle."""
    s = cycle.rows()
    p = np.column_stack(
        [
            trace["tau_1"][s] * trace["theta_x_dot"][s],
            trace["tau_2"][s] * trace["theta_y_dot"][s],
            trace["tau_3"][s] * trace["l_s_dot"][s],
        ]
    )
    if p.shape[0] == 0:
        return 0.0
    return float(np.mean(np.linalg.norm(p, axis=1)))


def tracking_error(trace: SimTrace, cycle: HopCycle, behavior: BehaviorSpec) -> float:
    """Mean planar distance between the base and the reference over the cycle."""
    s = cycle.rows()
    if cycle.n_samples == 0:
        return 0.0
    actual = np.column_stack([trace["p_x"][s], trace["p_y"][s]])
    desired = reference_path(behavior, trace.t[s])
    return float(np.mean(np.linalg.norm(actual - desired, axis=1)))


def jerk_series(z: np.ndarray, sample_period: float, cutoff_hz: float = 50.0) -> np.ndarray:
    """Third derivative of a uniformly sampled signal after zero-phase low-pass filtering.

    A least-squares quadratic is removed before filtering and added back
    after, so polynomial trends of degree two carry no edge artifacts into
    the derivative. The result is NaN where the five-point stencil does not fit.
    """
    z = np.asarray(z, dtype=float)
    n = z.size
    out = np.full(n, np.nan)
    if n < 5:
        return out
    h = float(sample_period)
    x = np.arange(n) * h
    trend = np.polyval(np.polyfit(x, z, 2), x)
    resid = z - trend
    nyquist = 0.5 / h
    if cutoff_hz < nyquist:
        b, a = signal.butter(2, cutoff_hz / nyquist)
        # odd padding over three cutoff periods keeps the start-up transient out of the data
        padlen = min(max(3 * max(len(a), len(b)), int(np.ceil(3.0 / (cutoff_hz * h)))), n - 1)
        resid = signal.filtfilt(b, a, resid, padlen=padlen)
    zf = resid + trend
    out[2:-2] = (zf[4:] - 2.0 * zf[3:-1] + 2.0 * zf[1:-3] - zf[:-4]) / (2.0 * h**3)
    return out


def jerk(trace: SimTrace, cycle: HopCycle, cutoff_hz: float = 50.0, series: np.ndarray | None = None) -> float:
    """Mean absolute vertical jerk over the cycle.

    ``series`` may carry a precomputed ``jerk_series`` of the whole trace so
    filtering runs once per trace rather than once per cycle.
    """
    if cycle.n_samples < MIN_JERK_SAMPLES:
        raise CycleTooShort(f"cycle {cycle.index} has {cycle.n_samples} samples, need {MIN_JERK_SAMPLES}")
    if series is None:
        series = jerk_series(trace["p_z"], trace.sample_period, cutoff_hz)
    vals = np.abs(series[cycle.rows()])
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        # cycle sits at the trace edge; fall back to filtering the cycle alone
        local = jerk_series(trace["p_z"][cycle.rows()], trace.sample_period, cutoff_hz)
        vals = np.abs(local[np.isfinite(local)])
    return float(np.mean(vals))


def hop_height(trace: SimTrace, cycle: HopCycle) -> float:
    """Apex of the base over the cycle, measured from its height at the cycle start."""
    z = trace["p_z"][cycle.rows()]
    if z.size == 0:
        return 0.0
    return float(max(z.max() - z[0], 0.0))


def cycle_metrics(
    trace: SimTrace,
    behavior: BehaviorSpec,
    transient_cutoff: float,
    cutoff_hz: float = 50.0,
) -> list[tuple[HopCycle, HopCycleMetrics]]:
    cycles = segment_cycles(trace, transient_cutoff)
    series = jerk_series(trace["p_z"], trace.sample_period, cutoff_hz)
    return [
        (
            c,
            HopCycleMetrics(
                power(trace, c),
                tracking_error(trace, c, behavior),
                jerk(trace, c, cutoff_hz, series),
                hop_height(trace, c),
            ),
        )
        for c in cycles
    ]


@dataclass(frozen=True)
class Summary:
    mean: float
    std: float
    median: float
    q1: float
    q3: float
    min: float
    max: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "Summary":
        v = np.asarray(values, dtype=float)
        if v.size == 0:
            raise EmptyInput("no values to summarize")
        q1, med, q3 = np.percentile(v, [25, 50, 75], method="linear")
        std = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return cls(float(v.mean()), std, float(med), float(q1), float(q3), float(v.min()), float(v.max()), int(v.size))


@dataclass(frozen=True)
class MetricsReport:
    cycles: tuple[HopCycle, ...]
    metrics: tuple[HopCycleMetrics, ...]
    summary: dict[str, Summary]
    fingerprint: str = ""
    jerk_cutoff_hz: float = 50.0

    def values(self, name: str) -> np.ndarray:
        col = METRIC_NAMES.index(name)
        return np.array([m.as_row()[col] for m in self.metrics])

    def to_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            fh.write(f"# fingerprint={self.fingerprint} jerk_cutoff_hz={self.jerk_cutoff_hz!r}\n")
            writer = csv.writer(fh)
            writer.writerow(CSV_COLUMNS)
            for c, m in zip(self.cycles, self.metrics):
                writer.writerow([c.index, repr(c.t0), repr(c.tf)] + [repr(x) for x in m.as_row()])

    def summary_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "jerk_cutoff_hz": self.jerk_cutoff_hz,
            "n_cycles": len(self.metrics),
            "quartile_method": "linear",
            "metrics": {k: asdict(v) for k, v in self.summary.items()},
        }

    def write_summary(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary_dict(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path: str | Path) -> "MetricsReport":
        fingerprint, cutoff = "", 50.0
        cycles, metrics = [], []
        with Path(path).open() as fh:
            first = fh.readline()
            if first.startswith("#"):
                for token in first[1:].split():
                    key, _, value = token.partition("=")
                    if key == "fingerprint":
                        fingerprint = value
                    elif key == "jerk_cutoff_hz":
                        cutoff = float(value)
            else:
                fh.seek(0)
            for row in csv.DictReader(fh):
                t0, tf = float(row["t0_s"]), float(row["tf_s"])
                cycles.append(HopCycle(int(row["cycle_index"]), t0, tf, 0, 0))
                metrics.append(HopCycleMetrics(*(float(row[k]) for k in METRIC_NAMES)))
        return aggregate(metrics, cycles, fingerprint, cutoff)


def aggregate(
    metrics: Sequence[HopCycleMetrics],
    cycles: Sequence[HopCycle] | None = None,
    fingerprint: str = "",
    jerk_cutoff_hz: float = 50.0,
) -> MetricsReport:
    """Summary statistics per metric; quartiles by linear interpolation."""
    metrics = tuple(metrics)
    if not metrics:
        raise EmptyInput("cannot aggregate zero cycles")
    if cycles is None:
        cycles = tuple(HopCycle(i, float(i), float(i + 1), 0, 0) for i in range(len(metrics)))
    cycles = tuple(cycles)
    if len(cycles) != len(metrics):
        raise ValueError("one cycle per metrics row is required")
    table = np.array([m.as_row() for m in metrics])
    summary = {name: Summary.of(table[:, j]) for j, name in enumerate(METRIC_NAMES)}
    return MetricsReport(cycles, metrics, summary, fingerprint, jerk_cutoff_hz)


def evaluate(
    trace: SimTrace,
    behavior: BehaviorSpec,
    transient_cutoff: float | None = None,
    cutoff_hz: float = 50.0,
    fingerprint: str = "",
) -> MetricsReport:
    """Segment a trace and aggregate its per-cycle metrics."""
    cutoff = behavior.transient if transient_cutoff is None else transient_cutoff
    pairs = cycle_metrics(trace, behavior, cutoff, cutoff_hz)
    return aggregate([m for _, m in pairs], [c for c, _ in pairs], fingerprint, cutoff_hz)

