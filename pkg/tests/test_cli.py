import json

import numpy as np
import pandas as pd
import pytest

from src.cli.commands import main
from src.core.kronalg import KronVector
from src.core.problem import PolyCost, PolyDynamics, ValueFunction
from src.data.storage import CoefficientStore
from src.models.loader import save_model
from src.sim.simulate import Trajectory


@pytest.fixture
def scalar_model(tmp_path):
    dyn = PolyDynamics(A=[[-1.0]], B=[[1.0]], F={2: [[1.0]]})
    return save_model(tmp_path / "scalar.json", dyn, PolyCost(Q=[[1.0]], R=[[1.0]]))


def _read(path):
    return json.loads(path.read_text())


def test_synthesize_simulate_verify_file_model(tmp_path, scalar_model):
    out = tmp_path / "run"
    assert main(["synthesize", "--model", str(scalar_model), "--degree", "3", "--out", str(out)]) == 0
    report = _read(out / "synthesis_report.json")
    assert report["controller_degree"] == 2
    assert report["linear_gain"][0][0] == pytest.approx(-(np.sqrt(2.0) - 1), abs=1e-12)
    assert report["lqr_gain_defect"] <= 1e-12
    assert all(d["hjb_residual"] <= 1e-9 for d in report["degrees"])
    manifest = _read(out / "synthesize_manifest.json")
    assert manifest["degree"] == 3 and manifest["command"] == "synthesize"
    assert str(out / "value.json") in manifest["outputs"]

    code = main(["simulate", "--model", str(scalar_model), "--controller", str(out / "controller.json"),
                 "--x0", "0.5", "--T", "10", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out / "trajectory.csv")
    assert list(df.columns) == ["t", "x1", "u1", "J"]
    summary = _read(out / "summary.json")
    assert not summary["diverged"]
    assert summary["final_state_norm"] < 1e-5

    assert main(["verify", "--model", str(scalar_model), "--value", str(out / "value.json"), "--out", str(out)]) == 0
    verified = _read(out / "verify_report.json")
    assert verified["passed"] and verified["model_matches"] is True


def test_verify_failure_exit_code(tmp_path, scalar_model):
    out = tmp_path / "run"
    main(["synthesize", "--model", str(scalar_model), "--degree", "3", "--out", str(out)])
    other = tmp_path / "other.json"
    save_model(other, PolyDynamics(A=[[-2.0]], B=[[1.0]]), PolyCost(Q=[[1.0]], R=[[1.0]]))
    code = main(["verify", "--model", str(other), "--value", str(out / "value.json"), "--out", str(out)])
    assert code == 5
    report = _read(out / "verify_report.json")
    assert not report["passed"] and 2 in report["failed_degrees"]
    assert report["model_matches"] is False


def test_verify_localizes_a_perturbed_degree(tmp_path, scalar_model):
    out = tmp_path / "run"
    assert main(["synthesize", "--model", str(scalar_model), "--degree", "4", "--out", str(out)]) == 0
    value = CoefficientStore.load_value_function(out / "value.json")
    v4 = value.coefficient(4).data.copy()
    v4[0] += 1e-3
    perturbed = ValueFunction(value.n, [*value.coeffs[:2], KronVector(v4, 1, 4)], value.stats)
    path = CoefficientStore.save_value_function(
        tmp_path / "perturbed.json", perturbed, meta=CoefficientStore.read_meta(out / "value.json")
    )

    code = main(["verify", "--model", str(scalar_model), "--value", str(path), "--out", str(out)])
    assert code == 5
    report = _read(out / "verify_report.json")
    assert report["failed_degrees"] == [4]
    assert report["model_matches"] is True
    assert report["residuals"]["4"] > 1e-6


def test_degree_below_two_is_usage_error(tmp_path, scalar_model):
    with pytest.raises(SystemExit) as exc:
        main(["synthesize", "--model", str(scalar_model), "--degree", "1", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_missing_model_file(tmp_path):
    code = main(["synthesize", "--model", str(tmp_path / "absent.json"), "--degree", "3", "--out", str(tmp_path)])
    assert code == 3


def test_simulate_needs_a_feedback_source(tmp_path, scalar_model):
    code = main(["simulate", "--model", str(scalar_model), "--x0", "0.5", "--T", "1", "--out", str(tmp_path)])
    assert code == 2


def test_wrong_initial_state_length(tmp_path, scalar_model):
    code = main(["simulate", "--model", str(scalar_model), "--open-loop", "--x0", "0.5", "0.1",
                 "--T", "1", "--out", str(tmp_path)])
    assert code == 2


def test_rerun_replays_manifest(tmp_path, scalar_model):
    out = tmp_path / "run"
    main(["synthesize", "--model", str(scalar_model), "--degree", "4", "--out", str(out)])
    first = _read(out / "synthesis_report.json")
    (out / "synthesis_report.json").unlink()
    assert main(["rerun", str(out / "synthesize_manifest.json")]) == 0
    second = _read(out / "synthesis_report.json")
    assert second["linear_gain"] == first["linear_gain"]


def test_aircraft_stall_simulation(tmp_path):
    out = tmp_path / "f8"
    assert main(["synthesize", "--model", "aircraft", "--degree", "4", "--out", str(out)]) == 0
    code = main(["simulate", "--model", "aircraft", "--controller", str(out / "controller.json"),
                 "--alpha0-deg", "25", "--T", "12", "--out", str(out)])
    assert code == 0
    df = pd.read_csv(out / "trajectory.csv")
    assert df["x1"].iloc[0] == pytest.approx(np.deg2rad(25.0))
    assert list(df.columns) == ["t", "x1", "x2", "x3", "u1", "J"]
    summary = _read(out / "summary.json")
    assert summary["total_cost"] == pytest.approx(0.044503, abs=2e-3)


def test_aircraft_table(tmp_path):
    out = tmp_path / "table"
    assert main(["table", "--bench", "aircraft", "--degrees", "1,3", "--alpha0-deg", "25", "--out", str(out)]) == 0
    df = pd.read_csv(out / "table.csv")
    assert df["controller"].tolist() == ["LQR", "Cubic PPR"]
    assert df["reference_cost"].tolist() == [0.053166, 0.044503]
    assert df["cost"].iloc[1] < df["cost"].iloc[0]
    assert df["recovered"].all()
    assert (out / "table_manifest.json").exists()



def test_table_blanks_cost_of_diverged_cells(tmp_path, monkeypatch):
    def blow_up(dyn, ctrl, x0, T, opts=None, cost=None):
        return Trajectory(
            times=np.array([0.0, 0.5]),
            states=np.array([x0, 1e6 * np.ones(3)]),
            inputs=np.zeros((2, 1)),
            accumulated_cost=np.array([0.0, 0.7]),
            diverged=True,
        )

    monkeypatch.setattr("src.cli.commands.simulate", blow_up)
    out = tmp_path / "table"
    assert main(["table", "--bench", "aircraft", "--degrees", "1", "--alpha0-deg", "25", "--out", str(out)]) == 0
    row = pd.read_csv(out / "table.csv").iloc[0]
    assert bool(row["diverged"]) and not bool(row["recovered"])
    assert np.isnan(row["cost"])
    assert np.isnan(row["delta_abs"]) and np.isnan(row["delta_rel"])
    assert row["reference_cost"] == 0.053166

def test_alpha0_preset_is_aircraft_only(tmp_path, scalar_model):
    code = main(["simulate", "--model", str(scalar_model), "--open-loop", "--alpha0-deg", "25",
                 "--T", "1", "--out", str(tmp_path)])
    assert code == 2
