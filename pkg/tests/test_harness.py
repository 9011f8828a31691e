import csv
import json
import math
import random
from pathlib import Path

import numpy as np
import pytest
import yaml

from hopmat import harness
from hopmat.cli import EXIT_CONFIG, EXIT_OK, EXIT_PARTIAL, RandomnessUsed, main, no_rng
from hopmat.config import ConfigError, fingerprint, load_config
from hopmat.simulation import quantize_dt

from conftest import suite

SHORT = ["--duration", "8", "--dt", "0.001"]


def read_rows(path: Path) -> list[dict]:
    with path.open() as fh:
        return list(csv.DictReader(fh))


def csv_bytes(root: Path) -> dict[str, bytes]:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*.csv"))}


# config


def test_config_overlay_and_fingerprint(tmp_path):
    base = load_config()
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"controller": {"hop_height_m": 0.8}}))
    cfg = load_config(path)
    assert cfg["controller"]["hop_height_m"] == 0.8
    assert cfg["controller"]["stance_kp"] == base["controller"]["stance_kp"]
    assert fingerprint(cfg) != fingerprint(base)
    assert fingerprint(load_config()) == fingerprint(base)


def test_config_rejects_unknown_sections(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("controler: {}\n")
    with pytest.raises(ConfigError):
        load_config(path)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


# plans


def test_mono_plan_cardinality(cfg, tmp_path):
    plan = harness.make_plan("mono", cfg, tmp_path, ["MD", "SS"])
    assert len(plan.designs) * len(plan.behaviors) == 8
    assert plan.comparisons == (("SS", "MD"),)


def test_single_arm_plan_has_no_comparisons(cfg, tmp_path):
    plan = harness.make_plan("mono", cfg, tmp_path, ["MD"], ["static"])
    assert plan.comparisons == ()


def test_plan_rejects_unknown_names(cfg, tmp_path):
    with pytest.raises(ConfigError):
        harness.make_plan("mono", cfg, tmp_path, ["Unobtainium"])
    with pytest.raises(ConfigError):
        harness.make_plan("mono", cfg, tmp_path, ["SS"], ["moonwalk"])
    with pytest.raises(ConfigError):
        harness.make_plan("gradient", cfg, tmp_path, ["no-such-gradient"])
    with pytest.raises(ConfigError):
        harness.make_plan("mono", cfg, tmp_path, ["SS"], dt="fast")


def test_sweep_plans_stay_inside_ashby_classes(cfg, tmp_path):
    dens = harness.make_plan("sweep-density", cfg, tmp_path)
    mod = harness.make_plan("sweep-modulus", cfg, tmp_path)
    assert len(dens.designs) == len(cfg["experiments"]["density_sweep"]["densities_kg_m3"])
    assert dens.sweep["property"] == "density_kg_m3"
    assert len(dens.comparisons) == len(dens.designs) - 1
    assert mod.sweep["property"] == "modulus_pa"
    bad = load_config(overrides={"experiments": {"modulus_sweep": {"density_kg_m3": 100.0}}})
    with pytest.raises(ConfigError):
        harness.make_plan("sweep-modulus", bad, tmp_path)


def test_gradient_plan(cfg, tmp_path):
    plan = harness.make_plan("gradient", cfg, tmp_path)
    names = [d.name for d in plan.designs]
    assert names[:4] == ["rho-inc", "rho-dec", "PVC-Ti-SS", "SS-Ti-PVC"]
    assert set(names[4:]) == {"SS", "MD"}
    assert ("rho-inc", "rho-dec") in plan.comparisons
    assert ("PVC-Ti-SS", "SS-Ti-PVC") in plan.comparisons
    assert ("rho-inc", "SS") in plan.comparisons
    inc = plan.designs[0]
    assert [m.density for m in inc.materials] == [1390.0, 4430.0, 8000.0]


def test_auto_dt_respects_measured_limit():
    s = suite()
    for limit in (4.2e-2, 5.18e-3, 1.32e-3, 7.4e-4, 3.3e-5):
        dt = s.auto_dt(limit)
        assert dt <= 0.5 * limit
        # stays on a divisor of the sample period so traces are uniform
        ratio = s.sample_period / dt
        assert ratio == pytest.approx(round(ratio), abs=1e-9)


def test_quantize_dt():
    assert quantize_dt(2e-3, 1e-3) == 1e-3
    assert quantize_dt(6.6e-4, 1e-3) == 5e-4
    assert quantize_dt(5e-4, 1e-3) == 5e-4
    with pytest.raises(ValueError):
        quantize_dt(0.0, 1e-3)


# execution


@pytest.fixture(scope="module")
def mono_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("mono")
    code = main(["mono", "--materials", "MD", "SS", "--out", str(out), "--duration", "12", "--seedless"])
    assert code == EXIT_OK
    return out


def test_mono_outputs(mono_out):
    records = json.loads((mono_out / "records.json").read_text())
    assert len(records) == 8 and all(r["status"] == "ok" for r in records)
    for r in records:
        assert Path(r["trace_path"]).exists() and Path(r["metrics_path"]).exists()
    plan = json.loads((mono_out / "plan.json").read_text())
    # the automatic policy never exceeds half the measured limit
    for entry in plan["dt"].values():
        assert entry["dt_s"] <= 0.5 * entry["dt_max_s"]
    rows = read_rows(mono_out / "comparisons.csv")
    assert len(rows) == 4
    assert {r["behavior"] for r in rows} == {"static", "forward", "ramp", "circular"}
    assert all(r["design"] == "SS" and r["reference"] == "MD" for r in rows)
    for r in rows:
        assert 0.0 <= float(r["tracking_error_m_p"]) <= 1.0
        assert r["tracking_error_m_star"] in ("", "*")
    assert len(read_rows(mono_out / "summary.csv")) == 8


def test_trace_export_columns(mono_out):
    with (mono_out / "runs" / "SS_static" / "trace.csv").open() as fh:
        header = next(csv.reader(fh))
    for col in ("t", "p_x", "p_y", "p_z", "l_s", "tau_1", "tau_2", "tau_3", "F_z", "phase", "delta_0"):
        assert col in header


def test_report_subcommand_is_idempotent(mono_out):
    before = csv_bytes(mono_out)
    assert main(["report", "--out", str(mono_out)]) == EXIT_OK
    assert csv_bytes(mono_out) == before


def test_rerun_is_byte_identical(mono_out, tmp_path):
    again = tmp_path / "again"
    assert main(["mono", "--materials", "MD", "SS", "--out", str(again), "--duration", "12"]) == EXIT_OK
    assert csv_bytes(again) == csv_bytes(mono_out)


def test_parallel_workers_match_serial(tmp_path):
    args = ["mono", "--materials", "MD", "SS", "--behaviors", "static", "forward"] + SHORT
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b"), "--workers", "2"]) == EXIT_OK
    assert csv_bytes(tmp_path / "a") == csv_bytes(tmp_path / "b")


def test_single_material_gradient_matches_mono(tmp_path):
    assert main(["mono", "--materials", "SS", "--behaviors", "ramp", "--out", str(tmp_path / "m")] + SHORT) == 0
    assert main(["gradient", "--gradients", "SS", "--behaviors", "ramp", "--out", str(tmp_path / "g")] + SHORT) == 0

    def rows(root):
        # drop the provenance line; the plans differ but the measurements must not
        return (root / "runs" / "SS_ramp" / "metrics.csv").read_text().splitlines()[1:]

    assert rows(tmp_path / "m") == rows(tmp_path / "g")


def test_density_sweep_trend(tmp_path):
    out = tmp_path / "sweep"
    args = ["sweep-density", "--behaviors", "static", "--out", str(out), "--duration", "8", "--dt", "0.00025"]
    assert main(args) == EXIT_OK
    rows = read_rows(out / "trend.csv")
    assert len(rows) == 5
    densities = [float(r["density_kg_m3"]) for r in rows]
    assert densities == sorted(densities)
    assert len(read_rows(out / "comparisons.csv")) == 4


# exit codes and flags


def test_exit_code_config_error(tmp_path, capsys):
    assert main(["simulate", "--material", "Unobtainium", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "Unobtainium" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("nonsense: 1\n")
    assert main(["simulate", "--material", "SS", "--config", str(bad), "--out", str(tmp_path)]) == EXIT_CONFIG


def test_exit_code_partial_failure(tmp_path):
    # 5 ms is far beyond the steel leg's stable step
    code = main(["simulate", "--material", "SS", "--dt", "0.005", "--duration", "6", "--out", str(tmp_path)])
    assert code == EXIT_PARTIAL
    records = json.loads((tmp_path / "records.json").read_text())
    assert records[0]["status"] == "failed"
    assert (tmp_path / "summary.csv").exists()


def test_seedless_guard_trips_on_rng_use():
    with pytest.raises(RandomnessUsed):
        with no_rng():
            np.random.default_rng(0)
    with pytest.raises(RandomnessUsed):
        with no_rng():
            random.random()
    with no_rng():
        pass


# heatmap


def _narrow_cfg(resolution: int, quick: int):
    return load_config(
        overrides={
            "grid": {
                "resolution": resolution,
                "quick_resolution": quick,
                "density_kg_m3": [2000.0, 8000.0],
                "modulus_pa": [6.9e10, 2.0e11],
            }
        }
    )


def test_quick_heatmap_is_subset_of_full_grid(tmp_path):
    cfg = _narrow_cfg(4, 2)
    full = harness.run_heatmap(harness.make_heatmap_plan(cfg, tmp_path / "full"), cfg)
    quick = harness.run_heatmap(harness.make_heatmap_plan(cfg, tmp_path / "quick", quick=True), cfg)
    keep = [0, 3]
    np.testing.assert_array_equal(quick.densities, full.densities[keep])
    np.testing.assert_array_equal(quick.moduli, full.moduli[keep])
    np.testing.assert_array_equal(quick.dt_max, full.dt_max[np.ix_(keep, keep)])
    meta = json.loads((tmp_path / "full" / "stability_grid.json").read_text())
    assert meta["columns"] == ["rho_kg_m3", "modulus_pa", "dt_max_s"]
    assert meta["loglinear_fit"]["log_modulus_coef"] < 0


def test_heatmap_resume_recomputes_only_missing(tmp_path, monkeypatch):
    calls = []

    def fake(cell):
        calls.append((cell.density, cell.modulus))
        return 1e-3 * math.sqrt(cell.density / 1e3) / math.sqrt(cell.modulus / 1e10)

    monkeypatch.setattr(harness, "material_dt_max", fake)
    cfg = _narrow_cfg(3, 2)
    plan = harness.make_heatmap_plan(cfg, tmp_path)
    first = harness.run_heatmap(plan, cfg)
    assert len(calls) == 9
    grid_bytes = (tmp_path / "stability_grid.csv").read_bytes()
    # simulate an interruption that lost the last two cells
    lines = (tmp_path / "cells.csv").read_text().splitlines(keepends=True)
    (tmp_path / "cells.csv").write_text("".join(lines[:-2]))
    calls.clear()
    again = harness.run_heatmap(plan, cfg)
    assert len(calls) == 2
    np.testing.assert_array_equal(again.dt_max, first.dt_max)
    assert (tmp_path / "stability_grid.csv").read_bytes() == grid_bytes
    # a finished grid costs nothing to re-run
    calls.clear()
    harness.run_heatmap(plan, cfg)
    assert calls == []


def test_heatmap_reuses_cells_from_another_directory(tmp_path, monkeypatch):
    calls = []
    monkeypatch.setattr(harness, "material_dt_max", lambda c: calls.append(c) or 1e-3)
    cfg = _narrow_cfg(3, 2)
    harness.run_heatmap(harness.make_heatmap_plan(cfg, tmp_path / "full"), cfg)
    calls.clear()
    harness.run_heatmap(harness.make_heatmap_plan(cfg, tmp_path / "quick", quick=True), cfg, tmp_path / "full")
    assert calls == []


def test_heatmap_cli(tmp_path, monkeypatch):
    monkeypatch.setattr(harness, "material_dt_max", lambda c: 1e-3 * (c.density / c.modulus) ** 0.5 * 1e4)
    assert main(["heatmap", "--quick", "--out", str(tmp_path), "--seedless"]) == EXIT_OK
    rows = read_rows(tmp_path / "stability_grid.csv")
    assert len(rows) == 16
