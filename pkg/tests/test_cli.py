import csv
import json
from pathlib import Path

import numpy as np
import pytest

from funnelsim.cli import main

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"
PAPER = str(SCENARIOS / "bench_paper.json")
FEASIBLE = str(SCENARIOS / "bench_feasible.json")
COMPARE = str(SCENARIOS / "bench_compare.json")


def run_cli(*argv):
    return main(list(argv))


def fast_overrides():
    # short horizon keeps CLI tests quick; behavior is identical in kind
    return ["--set", "integrator.t_end=2.0"]


def test_simulate_paper_benchmark(tmp_path, capsys):
    code = run_cli(
        "simulate", "--config", PAPER, "--out-dir", str(tmp_path),
        "--dt", "2e-4", *fast_overrides(),
    )
    assert code == 0
    report = json.loads((tmp_path / "bench_paper_report.json").read_text())
    assert report["feasibility"]["feasible"] is False
    assert report["feasibility"]["margins"][1] == pytest.approx(-0.01, abs=1e-12)
    assert report["theorem_compliance"]["k_ok"] is True
    assert report["events"] == []
    for name in ("bench_paper.csv", "bench_paper_events.json", "plot_bench_paper.py"):
        assert (tmp_path / name).exists()


def test_simulate_csv_header_exact(tmp_path):
    run_cli("simulate", "--config", FEASIBLE, "--out-dir", str(tmp_path), *fast_overrides())
    with open(tmp_path / "bench_feasible.csv") as fh:
        header = next(csv.reader(fh))
    assert header == [
        "t", "z", "s", "zdot", "sdot", "y", "yref", "e", "psi", "norm_e",
        "xi1", "xi2", "xi3", "w", "gain", "u",
    ]


def test_simulate_feasible_benchmark(tmp_path):
    code = run_cli("simulate", "--config", FEASIBLE, "--out-dir", str(tmp_path), *fast_overrides())
    assert code == 0
    report = json.loads((tmp_path / "bench_feasible_report.json").read_text())
    assert report["feasibility"]["feasible"] is True
    assert report["monitor"]["funnel_violations"] == []


def test_simulate_small_k_warns_but_runs(tmp_path, capsys):
    code = run_cli(
        "simulate", "--config", FEASIBLE, "--out-dir", str(tmp_path),
        "--set", "controller.k=2", *fast_overrides(),
    )
    assert code == 0
    err = capsys.readouterr().err
    assert "below the gain bound" in err
    report = json.loads((tmp_path / "bench_feasible_report.json").read_text())
    assert report["theorem_compliance"]["k_ok"] is False


def test_simulate_unknown_key_is_config_error(tmp_path):
    bad = tmp_path / "bad.json"
    cfg = json.loads(Path(FEASIBLE).read_text())
    cfg["plant"]["ramp_length"] = 2.0
    bad.write_text(json.dumps(cfg))
    assert run_cli("simulate", "--config", str(bad)) == 1


def test_simulate_missing_config_file():
    assert run_cli("simulate", "--config", "no_such_file.json") == 1


def test_report_echoes_config_unchanged(tmp_path):
    code = run_cli("simulate", "--config", FEASIBLE, "--out-dir", str(tmp_path))
    assert code == 0
    report = json.loads((tmp_path / "bench_feasible_report.json").read_text())
    assert report["config"] == json.loads(Path(FEASIBLE).read_text())


def test_check_feasibility_paper(capsys):
    code = run_cli("check-feasibility", "--config", PAPER)
    assert code == 2
    payload = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(
        payload["feasibility"]["stage_norms"], [0.3, 0.11, 0.04], atol=1e-12
    )


def test_check_feasibility_feasible(capsys):
    code = run_cli("check-feasibility", "--config", FEASIBLE)
    assert code == 0
    payload = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(
        payload["feasibility"]["margins"], payload["feasibility"]["stage_bounds"]
    )


def test_check_feasibility_zero_rate_recomputes_stack(capsys):
    code = run_cli("check-feasibility", "--config", PAPER, "--set", "controller.k=0")
    assert code == 2
    payload = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose(
        payload["feasibility"]["stage_norms"], [0.3, 0.79, 2.0], atol=1e-12
    )


def test_compare_paper_benchmark(tmp_path, capsys):
    code = run_cli("compare", "--config", COMPARE, "--out-dir", str(tmp_path), "--jobs", "2")
    assert code == 0
    out = capsys.readouterr().out
    assert "new_fc" in out and "legacy_fc" in out
    report = json.loads((tmp_path / "bench_compare_compare.json").read_text())
    for label in ("new_fc", "legacy_fc"):
        assert report["controllers"][label]["monitor"]["funnel_violations"] == []
        assert "rms_error" in report["controllers"][label]["summary"]
    combined = tmp_path / "bench_compare_compare.csv"
    with open(combined) as fh:
        header = next(csv.reader(fh))
    assert header[:2] == ["t", "psi"]
    assert "new_fc_e" in header and "legacy_fc_u" in header


def test_compare_requires_two_controllers(tmp_path):
    cfg = json.loads(Path(COMPARE).read_text())
    cfg["controllers"] = cfg["controllers"][:1]
    single = tmp_path / "single.json"
    single.write_text(json.dumps(cfg))
    assert run_cli("compare", "--config", str(single)) == 1


def test_sweep_gain_values_all_clean(tmp_path):
    code = run_cli(
        "sweep", "--config", FEASIBLE, "--param", "k", "--values", "3,4,6,10",
        "--out-dir", str(tmp_path), "--jobs", "2",
    )
    assert code == 0
    with open(tmp_path / "bench_feasible_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["k"]) for r in rows] == [3.0, 4.0, 6.0, 10.0]
    assert all(int(r["exit_code"]) == 0 for r in rows)


def test_sweep_dt_convergence_column(tmp_path):
    code = run_cli(
        "sweep", "--config", FEASIBLE, "--param", "dt", "--values", "1e-3,1e-4",
        "--out-dir", str(tmp_path),
    )
    assert code == 0
    with open(tmp_path / "bench_feasible_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert float(rows[1]["sup_diff_norm_e"]) < 1e-6


def test_sweep_initial_state_component(tmp_path):
    # z_dot enters the chain linearly, so the margin column shows the
    # feasibility boundary; far outside it the run aborts at once but the
    # row is still emitted with its pre-run audit
    code = run_cli(
        "sweep", "--config", FEASIBLE, "--param", "initial_state.z_dot",
        "--values=-0.2,-0.01,0,0.01", "--out-dir", str(tmp_path), *fast_overrides(),
    )
    assert code == 3
    with open(tmp_path / "bench_feasible_sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    margins = [float(r["min_stage_margin"]) for r in rows]
    # dominated by the final stage, which picks up 2k * z_dot
    assert margins[0] == pytest.approx(0.1 - 1.2, abs=1e-12)
    assert margins[2] == max(margins)
    assert [int(r["exit_code"]) for r in rows] == [3, 0, 0, 0]
    assert [int(r["init_feasible"]) for r in rows] == [0, 1, 1, 1]


def test_sweep_unknown_parameter(tmp_path):
    assert (
        run_cli("sweep", "--config", FEASIBLE, "--param", "mass", "--values", "1,2") == 1
    )


def test_verify_funnel_ok(capsys):
    assert run_cli("verify-funnel", "--config", PAPER) == 0
    payload = json.loads(capsys.readouterr().out)
    assert payload["ok"] is True
    assert abs(payload["worst_residual"]) < 1e-12


def test_verify_funnel_failing_pair(capsys):
    code = run_cli("verify-funnel", "--config", PAPER, "--set", "funnel.alpha=0.5")
    assert code == 2
    payload = json.loads(capsys.readouterr().out)
    assert payload["worst_residual"] == pytest.approx(-1.55, abs=1e-9)
    assert payload["worst_t"] == 0.0


def test_simulate_legacy_controller(tmp_path):
    cfg = json.loads(Path(FEASIBLE).read_text())
    cfg["controller"] = {"controller": "legacy_fc", "stage_scale": 2.0}
    path = tmp_path / "legacy.json"
    path.write_text(json.dumps(cfg))
    code = run_cli("simulate", "--config", str(path), "--out-dir", str(tmp_path), *fast_overrides())
    assert code == 0
    report = json.loads((tmp_path / "legacy_report.json").read_text())
    assert report["theorem_compliance"]["k_ok"] is None
    assert report["monitor"]["funnel_violations"] == []


def test_plot_script_is_emitted_not_rendered(tmp_path):
    run_cli("simulate", "--config", FEASIBLE, "--out-dir", str(tmp_path), *fast_overrides())
    script = (tmp_path / "plot_bench_feasible.py").read_text()
    assert "matplotlib" in script
    assert not list(tmp_path.glob("*.png"))
