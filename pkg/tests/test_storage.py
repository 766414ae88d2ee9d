import json
import threading

import numpy as np
import pytest

from src.core.control import extract_gains
from src.core.kronalg import KronVector
from src.core.problem import ValueFunction
from src.core.ppr_core import synthesize
from src.data.cache import ArtifactCache, artifact_cache
from src.data.results import ResultWriter
from src.data.storage import CoefficientStore
from src.sim.simulate import simulate
from src.utils.exceptions import AsymmetricCoefficientError, ModelError
from tests.oracles import random_problem


@pytest.fixture
def synthesized():
    dyn, cost = random_problem(7, n=3, m=2, ell=2, lam=4)
    value = synthesize(dyn, cost, d=4)
    return dyn, cost, value, extract_gains(value, dyn, cost.R)


def test_value_function_round_trip(tmp_path, synthesized):
    _, _, value, _ = synthesized
    path = CoefficientStore.save_value_function(tmp_path / "value.json", value, meta={"model": "random"})
    loaded = CoefficientStore.load_value_function(path)
    assert loaded.n == value.n and loaded.d == value.d
    for a, b in zip(loaded.coeffs, value.coeffs):
        assert a.k == b.k
        assert np.array_equal(a.data, b.data)
    assert [s.degree for s in loaded.stats] == [2, 3, 4]
    assert CoefficientStore.read_meta(path) == {"model": "random"}
    assert not (tmp_path / "value.bin").exists()


def test_controller_round_trip(tmp_path, synthesized):
    _, _, _, ctrl = synthesized
    path = CoefficientStore.save_controller(tmp_path / "controller.json", ctrl)
    loaded = CoefficientStore.load_controller(path)
    assert loaded.degree == 3 and loaded.m == 2
    for a, b in zip(loaded.gains, ctrl.gains):
        assert np.array_equal(a, b)


def test_large_arrays_go_to_sidecar(tmp_path, synthesized):
    _, _, value, _ = synthesized
    path = CoefficientStore.save_value_function(tmp_path / "value.json", value, sidecar_threshold=10)
    doc = json.loads(path.read_text())
    assert doc["sidecar"] == "value.bin"
    encodings = [r["encoding"] for r in doc["arrays"]]
    assert encodings == ["base64", "sidecar", "sidecar"]
    loaded = CoefficientStore.load_value_function(path)
    assert np.array_equal(loaded.coefficient(4).data, value.coefficient(4).data)


def test_missing_sidecar(tmp_path, synthesized):
    _, _, value, _ = synthesized
    path = CoefficientStore.save_value_function(tmp_path / "value.json", value, sidecar_threshold=0)
    (tmp_path / "value.bin").unlink()
    with pytest.raises(ModelError):
        CoefficientStore.load_value_function(path)


def test_kind_mismatch(tmp_path, synthesized):
    _, _, value, _ = synthesized
    path = CoefficientStore.save_value_function(tmp_path / "value.json", value)
    with pytest.raises(ModelError):
        CoefficientStore.load_controller(path)


def test_corrupt_payload(tmp_path, synthesized):
    _, _, value, _ = synthesized
    path = CoefficientStore.save_value_function(tmp_path / "value.json", value)
    doc = json.loads(path.read_text())
    doc["arrays"][1]["shape"] = [5]
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelError):
        CoefficientStore.load_value_function(path)
    path.write_text("{not json")
    with pytest.raises(ModelError):
        CoefficientStore.load_value_function(path)
    with pytest.raises(ModelError):
        CoefficientStore.load_value_function(tmp_path / "absent.json")



def test_asymmetric_coefficient_is_rejected_on_load(tmp_path, synthesized):
    _, _, value, _ = synthesized
    v3 = value.coefficient(3).data.copy()
    # entry (0, 0, 1) without its permutations (0, 1, 0) and (1, 0, 0)
    v3[1] += 1e-3
    skewed = ValueFunction(value.n, [value.coeffs[0], KronVector(v3, value.n, 3), value.coeffs[2]])
    path = CoefficientStore.save_value_function(tmp_path / "value.json", skewed)
    with pytest.raises(AsymmetricCoefficientError) as exc:
        CoefficientStore.load_value_function(path)
    assert exc.value.exit_code == 3
    assert "v3" in str(exc.value)


def test_trajectory_csv(tmp_path, scalar_lq):
    dyn, cost = scalar_lq
    ctrl = extract_gains(synthesize(dyn, cost, d=2), dyn, cost.R)
    traj = simulate(dyn, ctrl, [1.0], 2.0, cost=cost)
    path = ResultWriter.write_trajectory(tmp_path / "trajectory.csv", traj)
    df = ResultWriter.read_csv(path)
    assert list(df.columns) == ["t", "x1", "u1", "J"]
    assert np.array_equal(df["x1"].to_numpy(), traj.states[:, 0])
    assert np.array_equal(df["J"].to_numpy(), traj.accumulated_cost)


def test_table_csv(tmp_path):
    rows = [{"controller": "LQR", "cost": 0.1}, {"controller": "Cubic PPR", "cost": 0.05}]
    df = ResultWriter.read_csv(ResultWriter.write_table(tmp_path / "table.csv", rows))
    assert df["controller"].tolist() == ["LQR", "Cubic PPR"]


def test_cache_builds_once():
    calls = []

    def build():
        calls.append(1)
        return object()

    first = artifact_cache.get_or_build(("model", 1), build)
    assert artifact_cache.get_or_build(("model", 1), build) is first
    assert len(calls) == 1
    assert ArtifactCache() is artifact_cache
    assert artifact_cache.contains(("model", 1))
    artifact_cache.clear()
    assert artifact_cache.keys() == []


def test_cache_concurrent_builders():
    calls = []
    barrier = threading.Barrier(4)

    def build():
        calls.append(1)
        return len(calls)

    def worker(out):
        barrier.wait()
        out.append(artifact_cache.get_or_build("shared", build))

    out = []
    threads = [threading.Thread(target=worker, args=(out,)) for _ in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert out == [1, 1, 1, 1]
    assert len(calls) == 1
