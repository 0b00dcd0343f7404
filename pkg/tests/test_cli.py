import json

import pandas as pd
import pytest

from slv_cli import services
from slv_cli.app import run
from slv_cli.services import SERVICES, effective_workers, load_model
from slv_core.errors import NoReturn
from tests.conftest import MODELS_DIR, STANDARD_SEASON

STANDARD_MODEL = {"A": [[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]], **STANDARD_SEASON}


def _stderr_json(capsys):
    err = capsys.readouterr().err.strip().splitlines()
    return json.loads(err[-1])


def test_derive_reports_constants(write_model, capsys):
    code = run(["derive", "--model", str(write_model(STANDARD_MODEL))])
    assert code == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["constants"]["rho_hat"] == 0.25
    assert doc["constants"]["r"] == 0.25
    assert doc["diagnostics"]["admissible"] is True


def test_derive_document_round_trip(write_model, tmp_path, capsys):
    assert run(["derive", "--model", str(write_model(STANDARD_MODEL)), "--out", str(tmp_path / "a")]) == 0
    first = capsys.readouterr().out

    derived = tmp_path / "a" / "derive.json"
    assert derived.exists()
    assert run(["derive", "--model", str(derived)]) == 0
    assert json.loads(capsys.readouterr().out) == json.loads(first)


def test_tampered_constants_are_rejected(write_model, capsys):
    spec = load_model(write_model(STANDARD_MODEL))
    doc = {"model": spec.to_json_dict(),
           "constants": {"r": 0.25, "l": 0.7788, "rho_star": 0.5621765, "rho_hat": 0.25}}
    code = run(["derive", "--model", str(write_model(doc, "tampered.json"))])
    assert code == 1
    assert _stderr_json(capsys)["error"] == "constants_mismatch"


@pytest.mark.parametrize("payload,error", [
    ({**STANDARD_MODEL, "kappa": 1.0}, "invalid_input"),
    ({**STANDARD_MODEL, "mu": 1.0}, "r_nonpositive"),
    ({**STANDARD_MODEL, "A": [[1, 1, 1], [1, 1, 1], [1, 1, 1]]}, "degenerate_matrix"),
    ({**STANDARD_MODEL, "A": [[1, 0, 0.5], [0.5, 1, 0.5], [0.5, 0.5, 1]]}, "positivity_violation"),
])
def test_validation_errors_exit_1(write_model, capsys, payload, error):
    assert run(["derive", "--model", str(write_model(payload))]) == 1
    assert _stderr_json(capsys)["error"] == error


def test_unreadable_model_and_bad_flags(tmp_path, capsys):
    assert run(["derive", "--model", str(tmp_path / "missing.json")]) == 1
    assert _stderr_json(capsys)["error"] == "model_file"

    assert run(["derive"]) == 1
    assert _stderr_json(capsys)["error"] == "usage"

    assert run(["explode", "--model", "m.json"]) == 1


def test_numerical_failure_exits_2(write_model, monkeypatch, capsys):
    def failing(spec, cfg):
        raise NoReturn("no section crossing")

    monkeypatch.setitem(SERVICES, "derive", failing)
    assert run(["derive", "--model", str(write_model(STANDARD_MODEL))]) == 2
    assert _stderr_json(capsys) == {"error": "no_return", "detail": "no section crossing"}


def test_classify_fixture(capsys):
    assert run(["classify", "--model", str(MODELS_DIR / "mayleonard-1.2-0.5.json")]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["class"] == "27"
    assert doc["subcase"] == "a"


def test_fixed_points_writes_census(tmp_path, capsys):
    out = tmp_path / "fp"
    assert run(["fixed-points", "--model", str(MODELS_DIR / "mayleonard-1.2-0.5.json"), "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert [fp["label"] for fp in doc["fixed_points"]] == ["o", "q1", "q2", "q3", "p1"]
    census = pd.read_csv(out / "fixed_points.csv")
    assert census["label"].tolist() == ["o", "q1", "q2", "q3", "p1"]


def test_simulate_writes_trajectory(tmp_path, capsys):
    out = tmp_path / "sim"
    argv = ["simulate", "--model", str(MODELS_DIR / "mayleonard-1.2-0.5.json"), "--out", str(out),
            "--n", "3", "--k", "4", "--x0", "0.1", "0.2", "0.3"]
    assert run(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["n_seasons"] == 3
    assert doc["fate"] == "undecided"
    frame = pd.read_csv(out / "trajectory.csv")
    assert list(frame.columns) == ["t", "season", "phase", "x1", "x2", "x3"]
    assert frame["t"].iloc[-1] == pytest.approx(3.0)
    assert not list(out.glob(".*.tmp"))


def test_portrait_writes_fates(tmp_path, capsys):
    out = tmp_path / "portrait"
    argv = ["portrait", "--model", str(MODELS_DIR / "mayleonard-1.2-0.5.json"), "--out", str(out),
            "--n", "4", "--k", "3", "--seed", "11"]
    assert run(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    assert sum(row["count"] for row in doc["fates"]) == 4
    assert len(pd.read_csv(out / "portrait.csv")) == 4
    assert (out / "fate_counts.csv").exists()


def test_periodic_orbit_needs_positive_determinant(capsys):
    assert run(["periodic-orbit", "--model", str(MODELS_DIR / "saddle-detneg.json")]) == 1
    assert _stderr_json(capsys)["error"] == "det_nonpositive"


def test_periodic_orbit_outputs(tmp_path, capsys):
    out = tmp_path / "orbit"
    assert run(["periodic-orbit", "--model", str(MODELS_DIR / "mayleonard-1.5-0.5.json"), "--out", str(out)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["T_gamma"] == pytest.approx(21.7656, abs=0.3)
    # rho_hat = 0.25 is far from any small rational multiple of T_gamma
    assert doc["curve"]["kind"] == "dense_orbits"
    assert len(pd.read_csv(out / "orbit.csv")) == 256
    assert json.loads((out / "orbit.json").read_text())["n_points"] == 256


def test_verify_selected_groups(capsys):
    argv = ["verify", "--model", str(MODELS_DIR / "mayleonard-1.5-0.5.json"),
            "--only", "rho_hat", "--only", "conjugacy", "--only", "jacobian", "--only", "eigen"]
    assert run(argv) == 0
    table = capsys.readouterr().out
    assert "rho_hat_quadrature_error" in table
    assert "fail" not in table


def test_verify_skips_index_law_at_a_center(capsys):
    argv = ["verify", "--model", str(MODELS_DIR / "mayleonard-1.5-0.5.json"), "--only", "index"]
    assert run(argv) == 0
    assert "skipped" in capsys.readouterr().out


def test_verify_index_law_on_saddle(capsys):
    assert run(["verify", "--model", str(MODELS_DIR / "saddle-detneg.json"), "--only", "index"]) == 0
    assert "pass" in capsys.readouterr().out


@pytest.mark.slow
def test_verify_full_suite(tmp_path, capsys):
    out = tmp_path / "verify"
    argv = ["verify", "--model", str(MODELS_DIR / "mayleonard-1.5-0.5.json"), "--out", str(out)]
    assert run(argv) == 0
    table = pd.read_csv(out / "verify.csv")
    assert set(table["status"]) <= {"pass", "skipped"}
    assert (table.loc[table["group"] == "multiplicity", "status"] == "pass").all()


@pytest.mark.slow
def test_construct_multiplicity_command(tmp_path, capsys):
    out = tmp_path / "mult"
    argv = ["construct-multiplicity", "--model", str(MODELS_DIR / "mayleonard-1.5-0.5.json"), "--out", str(out)]
    assert run(argv) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["omega_star"] == pytest.approx(87.06, abs=1.5)
    assert doc["verification"]["fixed_curve_residual"] <= 1e-5
    assert doc["curve"]["kind"] == "fixed_curve"
    resonant = load_model(out / "resonant_model.json")
    assert resonant.omega == doc["omega_star"]


def test_thread_cap(monkeypatch):
    monkeypatch.setenv(services.THREADS_ENV, "2")
    assert effective_workers(8) == 2
    assert effective_workers(1) == 1
    monkeypatch.setenv(services.THREADS_ENV, "lots")
    assert effective_workers(3) == 3
    monkeypatch.delenv(services.THREADS_ENV)
    assert effective_workers(3) == 3
