import csv
import json

import numpy as np
import pytest

from telemafuse.artifact import from_json, load_artifact, to_json
from telemafuse.cli import main
from telemafuse.errors import NumericError
from telemafuse.features import FEATURE_NAMES, read_feature_csv
from telemafuse.fusion import fuse_predict, member_probabilities

SMALL = ["--iterations", "5", "--max-features", "5", "--seed", "11"]


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "--out", str(d / "trips.csv"), "--drivers-per-class", "6",
                 "--duration", "600", "--seed", "11"]) == 0
    assert main(["extract", "--input", str(d / "trips.csv"), "--out", str(d / "feat.csv"),
                 "--seed", "11"]) == 0
    assert main(["train", "--features", str(d / "feat.csv"), "--out", str(d / "model.json"),
                 *SMALL]) == 0
    return d


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def err(capsys):
    return capsys.readouterr().err.strip()


def test_extract_output(work):
    fm = read_feature_csv(work / "feat.csv")
    assert len(fm) == 12 * 2
    assert fm.feature_names == list(FEATURE_NAMES)
    assert fm.labeled


def test_extract_is_repeatable(work, tmp_path):
    assert main(["extract", "--input", str(work / "trips.csv"), "--out", str(tmp_path / "f.csv"),
                 "--seed", "11"]) == 0
    assert (tmp_path / "f.csv").read_bytes() == (work / "feat.csv").read_bytes()


def test_extract_global_writes_report(work, tmp_path):
    out = tmp_path / "g.csv"
    assert main(["extract", "--input", str(work / "trips.csv"), "--out", str(out),
                 "--selection", "global", "--report", str(tmp_path / "sel.csv")]) == 0
    report = rows(tmp_path / "sel.csv")
    assert report and all(abs(float(r["correlation"])) >= 0.1 for r in report)


def test_train_produces_three_forests(work):
    art = load_artifact(work / "model.json")
    assert len(art.subsets) == 3 and len(art.ensemble.models) == 3
    assert all(len(s) == 5 for s in art.subsets)
    assert json.loads((work / "model.json").read_text())["format_version"] == 1


def test_reload_reproduces_probe_bits(work):
    text = (work / "model.json").read_text()
    art = from_json(text)
    assert to_json(art) == text
    x = {n: float(v) for n, v in art.probe["x"].items()}
    res = fuse_predict(art.ensemble, member_probabilities(art.ensemble, x))
    assert repr(float(res.integrals[0])) == art.probe["C0"]
    assert repr(float(res.score)) == art.probe["score"]


def test_tampered_model_is_refused(work, tmp_path, capsys):
    doc = json.loads((work / "model.json").read_text())
    doc["probe"]["C1"] = repr(float(doc["probe"]["C1"]) + 1e-9)
    with pytest.raises(NumericError):
        from_json(json.dumps(doc))
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = main(["predict", "--model", str(bad), "--features", str(work / "feat.csv"),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 4
    assert err(capsys).startswith("error code=NUMERIC")


def test_predict(work, tmp_path):
    out = tmp_path / "pred.csv"
    assert main(["predict", "--model", str(work / "model.json"),
                 "--features", str(work / "feat.csv"), "--out", str(out)]) == 0
    got = rows(out)
    assert len(got) == 24
    assert list(got[0]) == ["trip_id", "driver_id", "label", "score", "C0", "C1",
                            "forest_1", "forest_2", "forest_3"]
    for r in got:
        assert r["label"] in ("male", "female")
        assert 0.0 <= float(r["score"]) <= 1.0
        assert r["label"] == ("female" if float(r["C1"]) > float(r["C0"]) else "male")


def test_predict_missing_column(work, tmp_path, capsys):
    art = load_artifact(work / "model.json")
    gone = art.required_features[0]
    src = rows(work / "feat.csv")
    trimmed = tmp_path / "trim.csv"
    with open(trimmed, "w", newline="") as fh:
        w = csv.DictWriter(fh, [k for k in src[0] if k != gone], lineterminator="\n")
        w.writeheader()
        for r in src:
            r.pop(gone)
            w.writerow(r)
    code = main(["predict", "--model", str(work / "model.json"), "--features", str(trimmed),
                 "--out", str(tmp_path / "p.csv")])
    assert code == 3
    msg = err(capsys)
    assert msg.startswith("error code=SCHEMA") and gone in msg
    assert "\n" not in msg


def test_k_of_two_is_a_config_error(work, tmp_path, capsys):
    code = main(["train", "--features", str(work / "feat.csv"), "--out", str(tmp_path / "m.json"),
                 "--iterations", "2"])
    assert code == 2
    assert err(capsys).startswith("error code=CONFIG")


def test_bad_config_file(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[fusion]\nw9 = 1\n")
    code = main(["synth", "--config", str(cfg), "--out", str(tmp_path / "t.csv")])
    assert code == 2
    assert "w9" in err(capsys)


def test_malformed_trips_report_line(tmp_path, capsys):
    bad = tmp_path / "t.csv"
    bad.write_text("trip_id,driver_id,gender,t,speed,accel_x,accel_y,yaw_rate,pitch_rate,"
                   "roll_rate,heading\nA,D,M,0,1,0,0,0,0,0,361\n")
    assert main(["extract", "--input", str(bad), "--out", str(tmp_path / "f.csv")]) == 3
    msg = err(capsys)
    assert msg.startswith("error code=PARSE") and "line 2" in msg


def test_missing_input(tmp_path, capsys):
    assert main(["extract", "--input", str(tmp_path / "none.csv"),
                 "--out", str(tmp_path / "f.csv")]) == 3
    assert err(capsys).startswith("error code=IO")


def test_evaluate_on_features_is_repeatable(work, tmp_path):
    args = ["evaluate", "--input", str(work / "feat.csv"), *SMALL, "--split", "by-window"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "metrics.csv").read_bytes()
    assert a == (tmp_path / "b" / "metrics.csv").read_bytes()
    models = {r["model"] for r in rows(tmp_path / "a" / "metrics.csv")}
    assert models == {"fused", "forest_1", "forest_2", "forest_3", "baseline"}
    assert (tmp_path / "a" / "metrics.txt").read_text().startswith(" ")
