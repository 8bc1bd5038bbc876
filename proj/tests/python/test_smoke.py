import math
from pathlib import Path

import pytest

import hvcl

ROOT = Path(__file__).resolve().parents[2]


def test_selftest_passes():
    results = hvcl.selftest(seed=5)
    assert len(results) == 8
    assert all(passed for _, passed, _ in results), results


def test_kl_matches_closed_form_by_hand():
    # one dimension: log(2/1) + (1 + 1) / 8 - 1/2
    expected = math.log(2.0) + 2.0 / 8.0 - 0.5
    assert hvcl.kl_diag_gaussian([0.0], [1.0], [1.0], [2.0]) == pytest.approx(expected, abs=1e-12)
    assert hvcl.kl_diag_gaussian([0.3, -1.0], [0.5, 2.0], [0.3, -1.0], [0.5, 2.0]) == pytest.approx(0.0, abs=1e-12)


def test_w2_and_kernel():
    assert hvcl.w2_diag_gaussian([0.0], [1.0], [3.0], [2.0]) == pytest.approx(10.0)
    assert hvcl.w2_exp_kernel(0.0, 1.0) == 1.0
    assert hvcl.w2_exp_kernel(2.0, 1.0) == pytest.approx(math.exp(-1.0))


def test_entropy_cost_bounds():
    r = hvcl.entropy_cost([[1.0, 0.0], [0.0, 1.0]])
    assert r["conditional"] == pytest.approx(0.0, abs=1e-12)
    assert r["marginal"] == pytest.approx(math.log(2.0))
    flipped = hvcl.entropy_cost([[1.0, 0.0], [0.0, 1.0]], sign="marginal_minus_conditional")
    assert flipped["cost"] == pytest.approx(-r["cost"])


def test_neg_log_det_identity():
    value, jitter, det = hvcl.neg_log_det([[1.0, 0.0], [0.0, 1.0]], jitter=0.0)
    assert value == pytest.approx(0.0, abs=1e-12)
    assert det == pytest.approx(1.0)


def test_forgetting_metrics():
    acc, forgetting = hvcl.forgetting_metrics([[1.0], [0.8, 0.9]])
    assert acc == pytest.approx(0.85)
    assert forgetting == pytest.approx(0.2)


def test_errors_are_typed():
    with pytest.raises(hvcl.ConfigError):
        hvcl.load_config(None, ["train.no_such_key=1"])
    with pytest.raises(hvcl.DomainError):
        hvcl.kl_diag_gaussian([0.0], [0.0], [0.0], [1.0])
    with pytest.raises(hvcl.CheckpointError):
        hvcl.evaluate("/nonexistent/model.ckpt")
    assert issubclass(hvcl.DataError, hvcl.Error)


def test_shipped_config_loads():
    cfg = hvcl.load_config(str(ROOT / "configs" / "synthetic.cfg"), ["train.epochs=2"])
    assert cfg["train.epochs"] == "2"
    assert cfg["scenario"] == "synthetic"


def test_synthetic_run_and_eval(tmp_path):
    out = tmp_path / "run"
    results = hvcl.run(
        str(ROOT / "configs" / "synthetic.cfg"),
        ["train.epochs=2", "data.synthetic_per_task=100", f"out={out}"],
    )
    assert len(results) == 1
    r = results[0]
    assert len(r["matrix"]) == 2
    assert 0.0 <= r["acc"] <= 1.0
    ckpt = Path(r["directory"]) / "model.ckpt"
    for name in ("summary.txt", "accuracy_matrix.csv", "train_log.csv", "model.ckpt"):
        assert (Path(r["directory"]) / name).exists()
    ev = hvcl.evaluate(str(ckpt))
    assert ev["matches"]
    assert ev["row"] == r["matrix"][-1]
