import json
import subprocess
import sys

import pytest

from shopdial.cli import main
from shopdial.pipeline import REFERENCE_SEARCHES, REFERENCE_UTTERANCES, read_run, run_stats
from shopdial.synthetic import synthetic_records


def write_jsonl(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records))
    return path


def stats_episode(index, n_utterances, searches=2, status="ok", domain="Toy"):
    rec = {"type": "episode", "index": index, "domain": domain, "status": status}
    if status == "ok":
        rec["trace"] = [{}] * searches
        rec["conversation"] = {"domain": domain, "utterances": [{}] * n_utterances, "generation_meta": {}}
    else:
        rec["reason"] = "tracker deadlock"
    return rec


@pytest.fixture
def stats_file(tmp_path):
    return write_jsonl(tmp_path / "run.jsonl", [
        stats_episode(0, 10, 1), stats_episode(1, 20, 3), stats_episode(2, 0, status="failed")])


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run") / "run.jsonl"
    assert main(["generate", "--catalog", "synthetic:300:4", "--n", "20", "--seed", "5", "--out", str(out)]) == 0
    return out


# ingest

def test_ingest_writes_normalized_catalog(tmp_path, capsys):
    raw = write_jsonl(tmp_path / "raw.jsonl", synthetic_records(50, seed=2))
    out = tmp_path / "norm.jsonl"
    assert main(["ingest", "--catalog", str(raw), "--domain", "Syn", "--out", str(out)]) == 0
    assert "written to" in capsys.readouterr().out
    assert len(out.read_text().splitlines()) > 0


def test_ingest_missing_path(tmp_path, capsys):
    assert main(["ingest", "--catalog", str(tmp_path / "absent.jsonl"), "--out", str(tmp_path / "o")]) == 1
    assert "absent.jsonl" in capsys.readouterr().err


def test_ingest_empty_file(tmp_path, capsys):
    (tmp_path / "e.jsonl").write_text("")
    assert main(["ingest", "--catalog", str(tmp_path / "e.jsonl"), "--out", str(tmp_path / "o")]) == 1
    assert "no products" in capsys.readouterr().err


# sample / plan

def test_sample_and_plan_emit_one_record_per_episode(capsys):
    assert main(["sample", "--catalog", "synthetic:100:1", "--n", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(l)["index"] for l in lines] == [0, 1, 2]
    assert main(["plan", "--catalog", "synthetic:100:1", "--n", "3"]) == 0
    plans = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert all(p["status"] == "ok" and p["converged_ids"] for p in plans)
    # same seed, same preferences
    assert [p["preference"] for p in plans] == [json.loads(l)["preference"] for l in lines]


# generate

def test_generate_zero_episodes(tmp_path, capsys):
    out = tmp_path / "run.jsonl"
    assert main(["generate", "--n", "0", "--catalog", "synthetic:50:0", "--out", str(out)]) == 0
    records = [json.loads(l) for l in out.read_text().splitlines()]
    assert [r["type"] for r in records] == ["header", "summary"]
    assert records[1]["n"] == 0
    assert "episodes: 0" in capsys.readouterr().out


def test_generate_is_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.jsonl"
        assert main(["generate", "--catalog", "synthetic:200:1", "--n", "8", "--seed", "3", "--workers", "2",
                     "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_generate_single_pass(tmp_path):
    out = tmp_path / "sp.jsonl"
    assert main(["generate", "--catalog", "synthetic:200:1", "--n", "5", "--strategy", "single-pass",
                 "--out", str(out)]) == 0
    run = read_run(out)
    assert run.summary["ok"] == 5
    assert run.header["config"]["strategy"] == "single-pass"


def test_remote_backend_without_credential_fails_before_writing(tmp_path, monkeypatch, capsys):
    for var in ("SHOPDIAL_API_KEY", "SHOPDIAL_API_URL"):
        monkeypatch.delenv(var, raising=False)
    out = tmp_path / "run.jsonl"
    assert main(["generate", "--backend", "remote", "--n", "2", "--out", str(out)]) == 1
    assert not out.exists()
    assert "error" in capsys.readouterr().err


def test_bad_flag_values_exit_nonzero():
    with pytest.raises(SystemExit) as info:
        main(["generate", "--workers", "0", "--out", "x"])
    assert info.value.code != 0


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "shopdial", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "generate" in proc.stdout


# evaluate

def test_evaluate_reference_extractor(small_run, capsys):
    assert main(["evaluate", str(small_run)]) == 0
    record = json.loads(capsys.readouterr().out.splitlines()[0])
    assert record["type"] == "metrics" and record["n_examples"] == read_run(small_run).summary["ok"]
    assert record["exact_f1"] == 1.0 and record["rouge_l"] == 1.0
    assert 0 < record["mrr"] <= 1


def test_evaluate_baseline(small_run, capsys, tmp_path):
    out = tmp_path / "m.json"
    assert main(["evaluate", str(small_run), "--extractor", "baseline", "--gold", "target", "--out", str(out)]) == 0
    record = json.loads(out.read_text())
    assert record["exact_f1"] < 0.05
    assert record["gold"] == "target"


def test_evaluate_empty_file(tmp_path, capsys):
    (tmp_path / "e.jsonl").write_text("")
    assert main(["evaluate", str(tmp_path / "e.jsonl")]) == 1
    assert "no episode records" in capsys.readouterr().err


def test_evaluate_rejects_bad_schema(tmp_path, capsys):
    path = write_jsonl(tmp_path / "r.jsonl", [{"type": "header", "schema_version": 99}, stats_episode(0, 4)])
    assert main(["evaluate", str(path)]) == 1
    assert "schema version" in capsys.readouterr().err


# stats

def test_stats_means_exclude_failed(stats_file, capsys):
    assert main(["stats", str(stats_file), "--json"]) == 0
    out = capsys.readouterr().out.splitlines()
    toy = json.loads(out[0])["Toy"]
    assert toy["mean_utterances"] == 15.0
    assert toy["mean_searches"] == 2.0
    assert toy["conversations"] == 2 and toy["failed"] == 1
    assert toy["mean_generation_time_s"] is None
    table = "\n".join(out[1:])
    assert str(REFERENCE_UTTERANCES) in table and str(REFERENCE_SEARCHES) in table
    assert "n/a" in table


def test_stats_groups_by_domain():
    stats = run_stats([stats_episode(0, 4, domain="A"), stats_episode(1, 6, domain="B")])
    assert list(stats) == ["A", "B"]
    assert stats["B"]["mean_utterances"] == 6.0


def test_stats_on_generated_run(small_run, capsys):
    assert main(["stats", str(small_run)]) == 0
    assert "reference (published)" in capsys.readouterr().out
