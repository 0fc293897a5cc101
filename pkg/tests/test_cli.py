"""CLI exit codes, file round trips, determinism."""

import csv
import json

import pytest

from memcap.cli import main
from memcap.dataset import dataset_to_json, gen_vector_dataset, save_dataset


@pytest.fixture
def vector_file(tmp_path):
    ds = gen_vector_dataset(6, 3, 2, 3, seed=5)
    path = tmp_path / "data.json"
    save_dataset(path, ds)
    return path


def test_generate_synthesize_verify_roundtrip(tmp_path, vector_file):
    weights = tmp_path / "w.json"
    report = tmp_path / "r.json"
    code = main(["synthesize", "--input", str(vector_file), "--seed", "5",
                 "--out", str(weights), "--report", str(report)])
    assert code == 0
    assert weights.exists() and report.exists()
    rep = json.loads(report.read_text())
    assert rep["width"] == 14
    assert main(["verify", "--weights", str(weights),
                 "--input", str(vector_file)]) == 0


def test_synthesize_conflicting_labels_exit_2(tmp_path):
    doc = {
        "kind": "vector", "mode": "next_token", "d": 2, "n": 2, "N": 2,
        "sequences": [[["1", "0"], ["0", "1"]], [["1", "0"], ["0", "1"]]],
        "labels": [1, 2],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    code = main(["synthesize", "--input", str(path), "--out",
                 str(tmp_path / "w.json")])
    assert code == 2


def test_bits_budget_out_of_range_exit_1(tmp_path, vector_file):
    code = main(["synthesize", "--input", str(vector_file), "--variant",
                 "limited-bits", "--bits-budget", "9",
                 "--out", str(tmp_path / "w.json")])
    assert code == 1


def test_non_dyadic_token_rejected(tmp_path):
    doc = {
        "kind": "vector", "mode": "next_token", "d": 1, "n": 1, "N": 1,
        "sequences": [[["0.1"]]], "labels": [1],
    }
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["synthesize", "--input", str(path),
                 "--out", str(tmp_path / "w.json")]) == 1


def test_perturbed_weights_exit_4(tmp_path, vector_file):
    weights = tmp_path / "w.json"
    assert main(["synthesize", "--input", str(vector_file), "--seed", "5",
                 "--out", str(weights)]) == 0
    doc = json.loads(weights.read_text())
    doc["ff2"][-1]["bias"][0]["num"] = str(
        int(doc["ff2"][-1]["bias"][0]["num"]) + 1)
    weights.write_text(json.dumps(doc))
    assert main(["verify", "--weights", str(weights),
                 "--input", str(vector_file)]) == 4


def test_wrong_shape_dataset_exit_1(tmp_path, vector_file):
    weights = tmp_path / "w.json"
    assert main(["synthesize", "--input", str(vector_file), "--seed", "5",
                 "--out", str(weights)]) == 0
    other = gen_vector_dataset(4, 3, 3, 3, seed=9)   # d=3 vs model d=2
    other_path = tmp_path / "other.json"
    save_dataset(other_path, other)
    assert main(["verify", "--weights", str(weights),
                 "--input", str(other_path)]) in (1, 4)


def test_sweep_rows_and_status(tmp_path):
    out = tmp_path / "sweep.csv"
    code = main(["sweep", "--grid", "4,8", "--seeds", "0,1", "--n", "3",
                 "--d", "2", "--C", "2", "--check", "--out", str(out)])
    assert code == 0
    with out.open() as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 4
    assert all(row["status"] == "ok" for row in rows)
    assert {row["N"] for row in rows} == {"4", "8"}


def test_determinism_byte_identical(tmp_path, vector_file):
    w1, w2 = tmp_path / "w1.json", tmp_path / "w2.json"
    assert main(["synthesize", "--input", str(vector_file), "--seed", "5",
                 "--out", str(w1)]) == 0
    assert main(["synthesize", "--input", str(vector_file), "--seed", "5",
                 "--out", str(w2)]) == 0
    assert w1.read_bytes() == w2.read_bytes()


def test_synthesis_failure_exit_3(tmp_path, vector_file, monkeypatch):
    from memcap import cli
    from memcap.errors import SearchExhausted

    def boom(*args, **kwargs):
        raise SearchExhausted("injected")

    monkeypatch.setattr(cli, "_synthesize", boom)
    assert main(["synthesize", "--input", str(vector_file),
                 "--out", str(tmp_path / "w.json")]) == 3


def test_sweep_marks_failed_rows(tmp_path, monkeypatch):
    from memcap import cli
    from memcap.errors import SearchExhausted

    def boom(*args, **kwargs):
        raise SearchExhausted("injected")

    monkeypatch.setattr(cli, "_synthesize", boom)
    out = tmp_path / "sweep.csv"
    assert main(["sweep", "--grid", "4", "--seeds", "0", "--n", "2",
                 "--d", "2", "--C", "2", "--out", str(out)]) == 0
    with out.open() as handle:
        rows = list(csv.DictReader(handle))
    assert rows[0]["status"] == "retry_exhausted"


def test_shatter_command(tmp_path):
    data = tmp_path / "sh.json"
    assert main(["generate", "--N", "3", "--n", "2", "--d", "2", "--C", "2",
                 "--seed", "1", "--distinct-tokens", "--out", str(data)]) == 0
    out = tmp_path / "rows.csv"
    assert main(["shatter", "--input", str(data), "--seed", "1",
                 "--out", str(out)]) == 0
    with out.open() as handle:
        rows = list(csv.DictReader(handle))
    assert len(rows) == 8
    assert all(row["ok"] == "True" for row in rows)


def test_generate_command(tmp_path):
    out = tmp_path / "gen.json"
    assert main(["generate", "--N", "5", "--n", "3", "--d", "2", "--C", "2",
                 "--seed", "7", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["N"] == 5 and len(doc["sequences"]) == 5


def test_dataset_json_roundtrip(tmp_path):
    ds = gen_vector_dataset(4, 2, 2, 2, seed=11)
    doc = dataset_to_json(ds)
    from memcap.dataset import dataset_from_json
    ds2 = dataset_from_json(doc)
    assert dataset_to_json(ds2) == doc


def test_declared_separation_contradiction(tmp_path):
    ds = gen_vector_dataset(3, 2, 2, 2, seed=2)
    doc = dataset_to_json(ds)
    doc["r"] = "0.5"        # definitely below the measured max norm
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(doc))
    assert main(["synthesize", "--input", str(path),
                 "--out", str(tmp_path / "w.json")]) == 1
