# SPDX-License-Identifier: Apache-2.0
import json
import math

import numpy as np
import pytest

import sgr


def test_verify_arch_totals():
    audit = sgr.verify_arch()
    assert audit["computed_total"] == 3060948
    assert audit["published_total"] == 3057876
    mismatched = [r["name"] for r in audit["rows"] if not r["params_match"]]
    assert mismatched == ["Bidirectional LSTM-1"]


@pytest.mark.parametrize(
    "p,r,expected",
    [(95, 93, 94.0), (91, 94, 92.5), (86, 82, 84.0), (89, 85, 87.0), (92, 89, 90.5)],
)
def test_f1_identities(p, r, expected):
    assert abs(sgr.round_tenth(sgr.f1(p, r)) - expected) <= 0.05


def test_latency_single_sample():
    s = sgr.summarize_latency([2.5])
    assert s["p50"] == s["p95"] == s["mean"] == 2.5


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("corpus")
    manifest = sgr.synth(out, classes=3, per_class=6, seed=4)
    return out, manifest


def test_synth_and_oracle(corpus):
    out, manifest = corpus
    assert manifest["classes"] == ["g00", "g01", "g02"]
    assert len(manifest["sequences"]) == 18
    assert sgr.separability_oracle(str(out / "manifest.json")) >= 0.95


def test_read_and_preprocess(corpus):
    out, manifest = corpus
    path = str(out / manifest["sequences"][0]["path"])
    t, xyz = sgr.read_sequence(path)
    assert xyz.shape == (len(t), 543, 3)
    assert np.all(np.diff(t) > 0)
    x = sgr.preprocess(path)
    assert x.shape == (30, 543, 3)
    assert np.isfinite(x).all()
    x16 = sgr.preprocess(path, json.dumps({"frames": 16}))
    assert x16.shape == (16, 543, 3)


def test_train_and_infer(corpus, tmp_path):
    out, manifest = corpus
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({
        "model": {"conv_filters": [2, 3], "lstm_units": 4, "lstm_proj_dim": 4, "input_selection": ["right_hand"]},
        "train": {"max_epochs": 2, "batch_size": 4},
        "preprocess": {"frames": 8},
    }))
    run = tmp_path / "run"
    sgr.cli("train", "--manifest", out / "manifest.json", "--out", run, "--config", cfg, "--seed", 1)
    assert (run / "best.sgkp").exists()
    model = sgr.Model.load(str(run / "best.sgkp"))
    assert model.classes == ["g00", "g01", "g02"]
    probs = model.predict(np.zeros((2, 8, 21, 3)))
    assert probs.shape == (2, 3)
    assert np.allclose(probs.sum(axis=1), 1.0)
    preds = model.infer(str(out / manifest["sequences"][0]["path"]), window=10, stride=5)
    assert preds and all(math.isclose(sum(p["probs"]), 1.0) for p in preds)


def test_errors_map_to_python():
    with pytest.raises(sgr.Error):
        sgr.Model.load("/nonexistent/model.sgkp")
    code, _, _ = sgr.run_cli(["--no-such-flag"])
    assert code == 2
