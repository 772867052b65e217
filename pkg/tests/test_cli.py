import json
import subprocess
import sys

import pytest

from flowcam.cli import main
from flowcam.features import read_csv
from pcapgen import FIXTURES


@pytest.fixture(scope="module")
def synth_csv(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli") / "s4.csv"
    assert main(["synth", "--n", "40", "--seed", "2", "-o", str(path)]) == 0
    return path


@pytest.fixture(scope="module")
def model_file(synth_csv):
    path = synth_csv.parent / "rf.json"
    assert main(["train", str(synth_csv), "--model", "RF", "--param", "n_estimators=10", "-o", str(path)]) == 0
    return path


def test_extract_matches_golden(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["extract", str(FIXTURES / "three_pkt.pcap"), "-o", str(out)]) == 0
    assert out.read_text() == (FIXTURES / "three_pkt.csv").read_text()


def test_extract_timeout_flag(tmp_path):
    out = tmp_path / "f.csv"
    assert main(["extract", str(FIXTURES / "udp_timeout.pcap"), "--flow-timeout", "1e6", "-o", str(out)]) == 0
    assert len(read_csv(out)) == 1
    assert main(["extract", str(FIXTURES / "udp_timeout.pcap"), "-o", str(out)]) == 0
    assert len(read_csv(out)) == 2


def test_exit_codes(tmp_path, synth_csv):
    assert main(["extract"]) == 1
    assert main(["nonsense"]) == 1
    assert main(["train", str(synth_csv), "--model", "RF", "--param", "k=3", "-o", str(tmp_path / "m")]) == 1
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"\x00" * 40)
    assert main(["extract", str(bad), "-o", str(tmp_path / "x.csv")]) == 2
    assert main(["extract", str(tmp_path / "missing.pcap"), "-o", str(tmp_path / "x.csv")]) == 2
    (tmp_path / "cfg.json").write_text(json.dumps({"data": {"source": "synth"}, "models": [{}]}))
    assert main(["report", str(tmp_path / "cfg.json"), "-o", str(tmp_path / "r")]) == 1


def test_train_eval_explain_faithful(tmp_path, synth_csv, model_file, capsys):
    assert main(["eval", str(synth_csv), "--model", str(model_file), "--seed", "0"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["macro"]["accuracy"] >= 0.9
    out = tmp_path / "ex"
    assert main(["explain", str(synth_csv), "--model", str(model_file), "--rows", "5", "--background", "10",
                 "--topk", "4", "-o", str(out)]) == 0
    docs = json.loads((out / "instances.json").read_text())
    assert len(docs) == 5 and all(len(d["features"]) == 4 for d in docs)
    phis = [abs(f["phi"]) for f in docs[0]["features"]]
    assert phis == sorted(phis, reverse=True)
    assert (out / "mean_abs.csv").read_text().startswith("class,rank,feature,mean_abs_phi\n")
    assert main(["explain", str(synth_csv), "--model", str(model_file), "--method", "lime", "--rows", "2",
                 "--samples", "500", "--class", "Conf", "-o", str(out)]) == 0
    lime = json.loads((out / "instances.json").read_text())
    assert len(lime[0]["conditions"]) == 10
    assert main(["faithful", str(synth_csv), "--model", str(model_file), "--rows", "30", "--background", "10",
                 "--runs", "2"]) == 0
    faith = json.loads(capsys.readouterr().out)
    assert faith["config"]["runs"] == 2 and 0 <= faith["sufficiency"] <= 1


def test_explain_tree_on_linear_model_is_invalid(tmp_path, synth_csv):
    lr = tmp_path / "lr.json"
    assert main(["train", str(synth_csv), "--model", "LR", "-o", str(lr)]) == 0
    assert main(["explain", str(synth_csv), "--model", str(lr), "-o", str(tmp_path / "e")]) == 1
    assert main(["explain", str(synth_csv), "--model", str(lr), "--method", "kernel", "--rows", "1",
                 "--samples", "200", "--background", "5", "-o", str(tmp_path / "e")]) == 0


def test_analyze(synth_csv, capsys):
    assert main(["analyze", str(synth_csv), "--variance", "0.9"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert len(doc["active_features"]) == 63
    assert sum(doc["pca"]["explained_ratio"]) >= 0.9


def test_pipeline_command(tmp_path):
    data = tmp_path / "combined.csv"
    assert main(["synth", "--n", "60", "--label-by", "component", "-o", str(data)]) == 0
    out = tmp_path / "pipe"
    assert main(["pipeline", str(data), "--model", "RF", "-o", str(out)]) == 0
    rep = json.loads((out / "metrics.json").read_text())
    assert rep["gating_violations"] == 0 and (out / "pipeline.json").exists()


def test_env_seed_and_report(tmp_path, monkeypatch):
    cfg = {"data": {"source": "synth", "n_per_class": 30}, "models": [{"kind": "DT"}]}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    monkeypatch.setenv("FLOWCAM_SEED", "11")
    assert main(["report", str(tmp_path / "c.json"), "-o", str(tmp_path / "r")]) == 0
    man = json.loads((tmp_path / "r" / "manifest.json").read_text())
    assert man["seeds"]["global"] == 11


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "flowcam.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "extract" in res.stdout
