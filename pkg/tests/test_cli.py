import json
from pathlib import Path

import pytest
import yaml

from hjhom.cli import EXIT_CONFIG, EXIT_OK, EXIT_SOLVER, load_config, main


def write_config(tmp_path, name="cfg.yaml", **overrides):
    cfg = {
        "seed": 0,
        "space": {"type": "cycle", "n": 16, "length": 1.0},
        "form": {"type": "constant", "c": 2.0},
        "potential": {"type": "zero"},
        "final_condition": {"type": "zero"},
        "beta": 1.0,
        "grid": {"t_start": -0.5, "steps": 100},
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def read_summary(tmp_path, name):
    return json.loads((tmp_path / "out" / f"{name}.json").read_text())


def test_unknown_top_level_key_rejected(tmp_path):
    path = write_config(tmp_path, tolerances={"oops": 1})
    assert main(["check-form", str(path)]) == EXIT_CONFIG


def test_unknown_nested_key_rejected(tmp_path):
    path = write_config(tmp_path, solver={"methdo": "mol"})
    assert main(["solve-viscous", str(path)]) == EXIT_CONFIG


def test_missing_file_rejected(tmp_path):
    assert main(["check-form", str(tmp_path / "nope.yaml")]) == EXIT_CONFIG


def test_check_form_constant_cycle(tmp_path, capsys):
    path = write_config(tmp_path, form={"type": "constant", "c": 3.0})
    assert main(["check-form", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "check_form")
    assert payload["periods"] == [3.0]
    assert payload["harmonic"] is True
    assert payload["path_bound_constant"] == 3.0


def test_check_hypotheses_reports_bounds(tmp_path):
    path = write_config(tmp_path)
    assert main(["check-hypotheses", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "check_hypotheses")
    assert payload["gamma_hat_linf"] == pytest.approx(4.0)
    assert payload["mol_dt_bound"] > 0


def test_solve_inviscid_writes_csv(tmp_path):
    path = write_config(tmp_path)
    assert main(["solve-inviscid", str(path)]) == EXIT_OK
    csv_path = tmp_path / "out" / "value.csv"
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "time,vertex,value"
    first = lines[1].split(",")
    assert float(first[0]) == 0.0  # time descending from zero
    assert len(lines) == 1 + 101 * 16


def test_solve_viscous_methods_agree(tmp_path):
    out = {}
    for method in ("mol", "picard", "gradient-flow"):
        path = write_config(tmp_path, name=f"{method}.yaml",
                            cover={"h_max": 2},
                            grid={"t_start": -0.5, "steps": 500})
        assert main(["solve-viscous", str(path), "--method", method]) == EXIT_OK
        out[method] = read_summary(tmp_path, "solve_viscous")
    for method, payload in out.items():
        assert abs(payload["u_at_start_min"] - (-1.0)) < 2e-2, method
    assert out["mol"]["u_at_start_max"] == pytest.approx(
        out["picard"]["u_at_start_max"], abs=1e-5
    )


def test_solve_viscous_direct(tmp_path):
    path = write_config(tmp_path)
    assert main(["solve-viscous", str(path), "--method", "direct-hj"]) == EXIT_OK
    payload = read_summary(tmp_path, "solve_viscous")
    assert abs(payload["u_at_start_min"] - (-1.0)) < 1e-3


def test_solve_fp_mass(tmp_path):
    path = write_config(tmp_path, solver={"drift": "form"})
    assert main(["solve-fp", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "solve_fp")
    assert payload["mass_error"] <= 1e-10


def test_duality_gap_small(tmp_path):
    path = write_config(tmp_path, grid={"t_start": -1.0, "steps": 1000},
                        space={"type": "cycle", "n": 64, "length": 1.0})
    assert main(["duality", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "duality")
    assert abs(payload["gap"]) <= 5e-3
    assert payload["lhs"] == pytest.approx(-2.0, abs=1e-3)


def test_convergence_cole_hopf_order(tmp_path):
    path = write_config(
        tmp_path,
        form={"type": "constant", "c": 1.0},
        final_condition={"type": "cosine", "amplitude": 0.5, "mode": 1},
        grid={"t_start": -0.25, "steps": 20000},
        convergence={"study": "cole-hopf", "sizes": [16, 32, 64]},
    )
    assert main(["convergence", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "convergence")
    assert payload["monotone_decreasing"] is True
    assert payload["fitted_order"] >= 1.0


def test_convergence_inviscid_value(tmp_path):
    path = write_config(
        tmp_path,
        grid={"t_start": -1.0, "steps": 100},
        convergence={"study": "inviscid-value", "sizes": [32, 64, 128]},
    )
    assert main(["convergence", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "convergence")
    assert payload["exact"] == -2.0
    assert payload["monotone_nonincreasing"] is True
    assert payload["table"][-1]["error"] <= 0.05 * 2.0


def test_convergence_duality_dt(tmp_path):
    path = write_config(
        tmp_path,
        grid={"t_start": -0.5, "steps": 100},
        convergence={"study": "duality-dt", "dt_values": [1e-2, 1e-3]},
    )
    assert main(["convergence", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "convergence")
    assert payload["monotone_decreasing"] is True


def test_convergence_cover_identity_auto_doubles(tmp_path):
    path = write_config(
        tmp_path,
        form={"type": "constant", "c": 1.0},
        grid={"t_start": -0.5, "steps": 6},
        space={"type": "cycle", "n": 12, "length": 1.0},
        cover={"h_max": 1, "auto_double_limit": 16},
        convergence={"study": "cover-identity"},
    )
    assert main(["convergence", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "convergence")
    assert payload["discrepancy"] <= 1e-9
    statuses = [a["status"] for a in payload["attempts"]]
    assert statuses[:-1] == ["window exceeded"] * (len(statuses) - 1)
    assert payload["attempts"][-1]["h_max"] == 8  # doubled 1 -> 2 -> 4 -> 8


def test_convergence_cover_identity_respects_limit(tmp_path):
    path = write_config(
        tmp_path,
        form={"type": "constant", "c": 1.0},
        grid={"t_start": -0.5, "steps": 6},
        space={"type": "cycle", "n": 12, "length": 1.0},
        cover={"h_max": 1, "auto_double_limit": 4},
        convergence={"study": "cover-identity"},
    )
    assert main(["convergence", str(path)]) == EXIT_SOLVER


def test_repo_golden_configs_run_end_to_end(tmp_path):
    import time

    root = Path(__file__).resolve().parents[1] / "configs"
    runs = [
        ("duality", root / "constant_form.yaml"),
        ("check-form", root / "check_form_cycle.yaml"),
        ("convergence", root / "cosine_final.yaml"),
    ]
    for command, cfg in runs:
        start = time.perf_counter()
        assert main([command, str(cfg), "--output", str(tmp_path / cfg.stem)]) == EXIT_OK
        assert time.perf_counter() - start < 60.0


def test_determinism_byte_identical_summaries(tmp_path):
    path = write_config(tmp_path, grid={"t_start": -0.25, "steps": 50})
    assert main(["duality", str(path)]) == EXIT_OK
    first = (tmp_path / "out" / "duality.json").read_bytes()
    assert main(["duality", str(path)]) == EXIT_OK
    second = (tmp_path / "out" / "duality.json").read_bytes()
    assert first == second


def test_solver_failure_exit_code(tmp_path):
    # picard with a huge potential and auto-tuning disabled via tiny max_iterations
    path = write_config(
        tmp_path,
        potential={"type": "values", "values": [-40.0] * 16},
        solver={"method": "picard", "max_iterations": 2, "picard_window": 0.5},
    )
    assert main(["solve-viscous", str(path), "--method", "picard"]) == EXIT_SOLVER


def test_explicit_space_and_edge_form(tmp_path):
    cfg_space = {
        "type": "explicit",
        "vertices": 4,
        "edges": [[0, 1, 1.0, 1.0], [1, 2, 1.0, 1.0], [2, 3, 1.0, 1.0],
                  [3, 0, 1.0, 1.0]],
        "measure": "uniform",
    }
    path = write_config(
        tmp_path,
        space=cfg_space,
        form={"type": "edges", "values": [[0, 1, 0.25], [1, 2, 0.25],
                                          [2, 3, 0.25], [3, 0, 0.25]]},
    )
    assert main(["check-form", str(path)]) == EXIT_OK
    payload = read_summary(tmp_path, "check_form")
    assert payload["periods"] == [1.0]


def test_repo_configs_are_valid():
    for name in ("constant_form.yaml", "check_form_cycle.yaml",
                 "cosine_final.yaml"):
        cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / name)
        assert "space" in cfg
