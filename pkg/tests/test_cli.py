import json
import os

import pytest

from reality_forge.cli import SCHEMA_VERSION, main


def run(argv, capsys=None):
    code = main([str(a) for a in argv])
    return code


def report(path):
    doc = json.loads(path.read_text())
    doc.pop("timing")
    return doc


@pytest.fixture
def chain(tmp_path):
    """Synthetic log -> skeleton -> embedding on a small planted config."""
    log, sk, emb = tmp_path / "log.jsonl", tmp_path / "sk.json", tmp_path / "emb.csv"
    assert run(["synth", "--out", log, "--streams", 6, "--length", 8, "--seed", 3]) == 0
    assert run(["prespace", log, "--out", sk]) == 0
    assert run(["embed", sk, "--out", emb, "--lambda", 0, "--report", tmp_path / "embed.json"]) == 0
    return tmp_path


# -- exit codes --------------------------------------------------------------


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 2
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error():
    assert main(["probcheck", "bell", "--p-ab", "0.1"]) == 2


def test_accardi_nonclassical(tmp_path, capsys):
    rep = tmp_path / "r.json"
    assert run(["probcheck", "accardi", "--p", 0.25, "--q", 0.25, "--r", 0.25, "--report", rep, "--stdout"]) == 0
    out = capsys.readouterr()
    assert json.loads(out.out)["outputs"]["verdict"] == "nonclassical"
    assert "nonclassical" in out.err
    doc = json.loads(rep.read_text())
    assert doc["schema_version"] == SCHEMA_VERSION and doc["command"] == "probcheck accardi"
    assert set(doc) == {"schema_version", "command", "inputs", "outputs", "checks", "timing"}


def test_bell_violated(tmp_path):
    out = tmp_path / "bell.json"
    assert run(["probcheck", "bell", "--p-ab", 0.25, "--p-bc", 0.25, "--p-ac", 0.25, "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert doc == {"test": "bell", "inputs": {"p_ab": 0.25, "p_bc": 0.25, "p_ac": 0.25},
                   "value": 0.75, "verdict": "violated"}


def test_seq_gap_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.jsonl"
    rec = lambda seq: json.dumps({"stream_id": "s", "seq": seq, "timestamp_ms": seq,
                                  "query": "q", "response": "r"})
    bad.write_text(rec(0) + "\n" + rec(2) + "\n")
    assert run(["ingest", "--format", "jsonl", bad]) == 1
    err = capsys.readouterr().err
    assert "SequenceError" in err and "line 2" in err


def test_missing_file(tmp_path):
    assert run(["ingest", tmp_path / "nope.jsonl"]) == 1


def test_cycle_is_domain_error(tmp_path):
    dag = tmp_path / "dag.json"
    dag.write_text(json.dumps({"m": 2, "edges": [[0, 1], [1, 0]]}))
    assert run(["rota", "template", dag]) == 1


def test_bad_thread_env(tmp_path, monkeypatch):
    monkeypatch.setenv("REALITY_FORGE_THREADS", "many")
    assert run(["probcheck", "bell", "--p-ab", 1, "--p-bc", 1, "--p-ac", 1]) == 2


def test_thread_env_honored(tmp_path, monkeypatch):
    monkeypatch.setenv("REALITY_FORGE_THREADS", "1")
    assert run(["probcheck", "bell", "--p-ab", 1, "--p-bc", 1, "--p-ac", 1]) == 0


def test_pipeline_bad_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"input": {"synthetic": {"n": 0}}}))
    assert run(["pipeline", cfg]) == 1
    cfg.write_text(json.dumps({"embed": {"n": 0}, "input": {"synthetic": {"num_streams": 2, "stream_len": 3}}}))
    assert run(["pipeline", cfg]) == 1
    cfg.write_text("{oops")
    assert run(["pipeline", cfg]) == 1


def test_failure_leaves_no_partial_output(tmp_path):
    out = tmp_path / "t.json"
    dag = tmp_path / "dag.json"
    dag.write_text(json.dumps({"m": 2, "edges": [[0, 1]]}))
    W = tmp_path / "w.json"
    W.write_text("[[1, 0], [3, 1]]")
    assert run(["rota", "propagate", dag, "--weights", W, "--signal", "1,1", "--out", out]) == 1
    assert not out.exists()
    assert not [p for p in os.listdir(tmp_path) if p.startswith(".tmp-")]


def test_usage_error_after_parse(chain):
    assert run(["geodesic", chain / "emb.csv", chain / "sk.json", "--out", chain / "p.csv"]) == 2


# -- subcommands -------------------------------------------------------------


def test_ingest_normalizes(chain):
    tsv = chain / "plain.tsv"
    assert run(["synth", "--out", tsv, "--mode", "random", "--streams", 2, "--length", 3]) == 0
    out = chain / "norm.jsonl"
    assert run(["ingest", tsv, "--out", out, "--report", chain / "r.json"]) == 0
    doc = report(chain / "r.json")
    assert doc["outputs"]["clicks"] == 6 and doc["inputs"]["format"] == "tsv"
    assert len(out.read_text().splitlines()) == 6


def test_embed_outputs(chain):
    doc = report(chain / "embed.json")
    assert doc["checks"]["stress_nonincreasing"] is True
    assert doc["outputs"]["final_stress"] < 0.05
    assert (chain / "emb.csv.json").exists()
    assert (chain / "emb.csv").read_text().startswith("stream,seq,t,x1,x2\n")


def test_geodesic_and_predict(chain):
    path, metric, rep = chain / "path.csv", chain / "metric.json", chain / "g.json"
    assert run(["geodesic", chain / "emb.csv", chain / "sk.json", "--stream", 0, "--seq", 3,
                "--steps", 5, "--dt", 0.5, "--out", path, "--metric-out", metric, "--report", rep]) == 0
    assert len(path.read_text().splitlines()) == 7
    assert "tensors" in json.loads(metric.read_text())
    rep = chain / "p.json"
    assert run(["predict", chain / "emb.csv", chain / "sk.json", "--out", chain / "pred.csv", "--report", rep]) == 0
    doc = report(rep)
    assert doc["outputs"]["streams"] == 6
    assert doc["outputs"]["relative_error"] < 0.2


def test_probcheck_lp_and_invariant(tmp_path):
    fam = tmp_path / "fam.json"
    cond = [[None, [[0.5, 0.5], [0.5, 0.5]]], [None, None]]
    fam.write_text(json.dumps({"T": 2, "n": 2, "cond": cond, "marg": [[0.5, 0.5], [0.5, 0.5]]}))
    out = tmp_path / "lp.json"
    assert run(["probcheck", "lp", fam, "--out", out]) == 0
    assert json.loads(out.read_text())["verdict"] == "feasible"

    out = tmp_path / "inv.json"
    assert run(["probcheck", "invariant", "--px", 0.9, "--px-r", 0.8, "--px-notr", 0.2, "--pr", 0.5, "--out", out]) == 0
    doc = json.loads(out.read_text())
    assert doc["verdict"] == "nonclassical" and abs(doc["value"]["A"] - 7 / 6) < 1e-12
    assert run(["probcheck", "invariant", "--px", 0.9]) == 2


def test_melucci_counts_feed_probcheck(tmp_path):
    counts, rep = tmp_path / "counts.json", tmp_path / "m.json"
    assert run(["melucci", "--preset", "interference", "--N", 20000, "--out", counts, "--report", rep]) == 0
    assert report(rep)["outputs"]["verdict"] == "nonclassical"
    out = tmp_path / "inv.json"
    assert run(["probcheck", "invariant", "--counts", counts, "--out", out]) == 0
    assert json.loads(out.read_text())["verdict"] == "nonclassical"


def test_automaton_presets(tmp_path):
    out = tmp_path / "poset.json"
    assert run(["automaton", "--preset", "finkelstein", "--mode", "designated", "--verified", "miss",
                "--complementary", "1", "2", "--report", tmp_path / "r.json", "--out", out]) == 0
    doc = report(tmp_path / "r.json")
    assert doc["outputs"]["size"] == 6 and doc["outputs"]["complementary"] is True
    assert json.loads(out.read_text())["elements"][1] == ["1", "2", "3"]
    assert run(["automaton"]) == 2
    assert run(["automaton", "--preset", "toggler", "--mode", "designated"]) == 1


def test_automaton_file(tmp_path):
    from reality_forge.automaton import toggler

    f = tmp_path / "m.json"
    f.write_text(toggler().to_json())
    assert run(["automaton", "--file", f, "--report", tmp_path / "r.json"]) == 0
    assert report(tmp_path / "r.json")["outputs"]["size"] == 4


def test_rota_actions(tmp_path):
    dag = tmp_path / "dag.json"
    dag.write_text(json.dumps({"m": 3, "edges": [[0, 1], [1, 2]]}))
    out = tmp_path / "t.json"
    assert run(["rota", "template", dag, "--out", out]) == 0
    assert json.loads(out.read_text())["closed"] is False
    assert run(["rota", "closure", dag, "--out", out]) == 0
    assert json.loads(out.read_text())["template"]["pattern"][0] == ["*", "*", "*"]
    sub = tmp_path / "sub.json"
    sub.write_text(json.dumps([[[1, 1], [0, 1]]]))
    assert run(["rota", "spatialize", sub, "--out", out]) == 0
    assert json.loads(out.read_text())["dag"] == {"m": 2, "edges": [[0, 1]]}
    W = tmp_path / "w.json"
    W.write_text("[[1, 2, 0], [0, 1, 0], [0, 0, 1]]")
    assert run(["rota", "propagate", dag, "--weights", W, "--signal", "1,1,1", "--out", out]) == 0
    assert json.loads(out.read_text())["output"] == [3.0, 1.0, 1.0]


# -- determinism -------------------------------------------------------------


def _twice(tmp_path, build):
    """Run ``build(dir)`` in two fresh directories; return both directories."""
    dirs = []
    for name in ("a", "b"):
        d = tmp_path / name
        d.mkdir()
        build(d)
        dirs.append(d)
    return dirs


def assert_same_outputs(a, b):
    names = sorted(os.listdir(a))
    assert names == sorted(os.listdir(b))
    for name in names:
        if name.startswith("report"):
            ra, rb = report(a / name), report(b / name)
            # inputs echo file paths, which differ between the two directories
            ra.pop("inputs"), rb.pop("inputs")
            assert json.dumps(ra, sort_keys=True).replace(str(a), "") == \
                json.dumps(rb, sort_keys=True).replace(str(b), "")
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_seeded_chain_deterministic(tmp_path):
    def build(d):
        assert run(["synth", "--out", d / "log.jsonl", "--streams", 5, "--length", 7, "--seed", 11,
                    "--report", d / "report_synth.json"]) == 0
        assert run(["prespace", d / "log.jsonl", "--out", d / "sk.json", "--K", 4]) == 0
        assert run(["embed", d / "sk.json", "--out", d / "emb.csv", "--seed", 5,
                    "--report", d / "report_embed.json"]) == 0
        assert run(["geodesic", d / "emb.csv", d / "sk.json", "--x0", "1,0,0", "--v0", "1,0.01,0",
                    "--steps", 3, "--out", d / "path.csv", "--metric-out", d / "metric.json"]) == 0
        assert run(["predict", d / "emb.csv", d / "sk.json", "--out", d / "pred.csv",
                    "--report", d / "report_predict.json"]) == 0

    assert_same_outputs(*_twice(tmp_path, build))


def test_seeded_melucci_deterministic(tmp_path):
    def build(d):
        assert run(["melucci", "--seed", 4, "--N", 5000, "--out", d / "counts.json",
                    "--report", d / "report.json"]) == 0

    assert_same_outputs(*_twice(tmp_path, build))


def test_pipeline_report(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "seed": 2,
        "input": {"synthetic": {"num_streams": 6, "stream_len": 10}},
        "embed": {"temporal_stiffness": 0.0},
    }))

    def build(d):
        assert run(["pipeline", cfg, "--out", d / "report.json"]) == 0

    a, b = _twice(tmp_path, build)
    assert_same_outputs(a, b)
    doc = json.loads((a / "report.json").read_text())
    assert all(doc["checks"].values())
    assert set(doc["timing"]["stages_s"]) == {"input", "prespace", "embed", "geodesic"}
