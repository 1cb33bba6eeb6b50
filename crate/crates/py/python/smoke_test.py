"""Smoke test for the `msl` extension module.

Build and run from the repository root:

    maturin build -m crates/py/Cargo.toml -o target/wheels
    pip install --force-reinstall target/wheels/msl-*.whl
    python crates/py/python/smoke_test.py
"""

import json
import math
import pathlib
import tempfile

import msl

FIXTURES = pathlib.Path(__file__).resolve().parents[2] / "core" / "tests" / "fixtures"


def check_model():
    model = msl.Model.load(FIXTURES / "tiny.mslw")
    assert model.class_names == ["mpox", "other_skin", "normal"]
    assert model.param_count == 631
    assert len(model.fingerprint) == 64
    assert model.input_shape == [1, 3, 32, 32]
    assert model.envelope()["params_in_range"] is False

    raw = (FIXTURES / "tiny.mslw").read_bytes()
    assert model.to_bytes() == raw
    assert msl.Model.from_bytes(raw).fingerprint == model.fingerprint

    image = (FIXTURES / "tiny_input.png").read_bytes()
    probs = model.predict(image)
    assert abs(sum(probs) - 1.0) < 1e-5
    assert probs == model.predict(image)

    result = model.screen(image)
    assert result["predicted"] == "normal"
    assert result["triage"] == "indeterminate_review"
    assert math.isclose(result["probabilities"]["mpox"], probs[0], rel_tol=1e-6)

    replay = msl.replay_golden(model, FIXTURES / "tiny.golden")
    assert len(replay["nodes"]) == 17
    assert replay["probabilities_max_abs_diff"] <= 1e-4
    print("model ok:", model)


def check_metrics():
    lo, hi = msl.wilson_interval(485, 500)
    assert 0.949 <= lo <= 0.953 and 0.980 <= hi <= 0.984
    counts = [[484, 10, 6], [23, 472, 5], [13, 5, 482]]
    report = msl.diagnostics_report(counts)
    mpox = report["per_class"][0]
    assert abs(mpox["precision"]["value"] - 0.9308) < 5e-5
    assert "93.1 (" in msl.report_table(counts)
    assert msl.triage([0.97, 0.02, 0.01]) == "screen_positive_isolate_and_confirm_pcr"
    assert msl.triage([0.05, 0.80, 0.15]) == "screen_negative_monitor"
    assert msl.triage([0.40, 0.35, 0.25]) == "indeterminate_review"
    print("metrics ok")


def check_datasets():
    image = (FIXTURES / "tiny_input.png").read_bytes()
    h = msl.dhash(image)
    assert len(h) == 16 and msl.hamming(h, h) == 0
    assert len(msl.sha256_hex(b"")) == 64
    with tempfile.TemporaryDirectory() as tmp:
        root = pathlib.Path(tmp) / "data"
        for label in ("mpox", "other_skin", "normal"):
            d = root / label / "real"
            d.mkdir(parents=True)
            (d / "a.png").write_bytes(image)
        manifest = pathlib.Path(tmp) / "m.jsonl"
        assert msl.ingest(root, manifest) == []
        report = msl.dedup_check(manifest, manifest)
        assert len(report["exact"]) == 9
        log = pathlib.Path(tmp) / "log.jsonl"
        model = msl.Model.load(FIXTURES / "tiny.mslw")
        entry = {"case_id": "c1", "result": model.screen(image), "operator_decision": "pending", "notes": ""}
        log.write_text(json.dumps(entry) + "\n")
        assert [c["case_id"] for c in msl.session_cases(log)] == ["c1"]
    print("datasets ok")


if __name__ == "__main__":
    check_model()
    check_metrics()
    check_datasets()
    print("smoke test passed")
