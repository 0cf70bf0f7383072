import json
import stat
import time

import pytest

from satforge.cli import main
from satforge.cnf import read_cnf, write_cnf

from conftest import toy_formulas


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def corpus(tmp_path):
    d = tmp_path / "corpus"
    d.mkdir()
    for i, f in enumerate(toy_formulas(3)):
        write_cnf(d / f"t{i}.cnf", f)
    return d


def test_stats_prints_one_record_per_file(capsys, corpus):
    code, out, _ = run(capsys, "stats", corpus / "t0.cnf", corpus / "t1.cnf")
    assert code == 0
    recs = [json.loads(l) for l in out.splitlines()]
    assert len(recs) == 2
    assert {"clustering_vig", "modularity_vig", "modularity_vcg", "modularity_lcg",
            "alpha_v", "alpha_c", "num_vars", "num_clauses"} <= set(recs[0])


def test_validate_exit_codes(capsys, tmp_path, corpus):
    assert run(capsys, "validate", corpus / "t0.cnf")[0] == 0
    bad = tmp_path / "bad.cnf"
    bad.write_text("p cnf 2 1\n1 -1 0\n")
    code, out, _ = run(capsys, "validate", bad)
    assert code == 1 and "INVALID" in out


def test_usage_errors_exit_2(capsys):
    for argv in (["nonsense"], ["stats"], ["generate", "--model", "m"], ["train", "--bogus"]):
        with pytest.raises(SystemExit) as err:
            main(argv)
        assert err.value.code == 2


def test_popularity_similarity_stub_fails(capsys):
    code, _, err = run(capsys, "ps-gen")
    assert code == 1 and "Giraldez-Cru" in err


def test_ca_gen_writes_valid_formulas(capsys, tmp_path):
    out = tmp_path / "ca"
    code, _, _ = run(capsys, "ca-gen", "--n", 40, "--m", 160, "--c", 4, "--q", 0.5,
                     "--count", 3, "--out", out)
    assert code == 0
    files = sorted(out.glob("*.cnf"))
    assert len(files) == 3
    for f in files:
        read_cnf(f).validate()
    assert len((out / "manifest.jsonl").read_text().splitlines()) == 1


def test_pipeline_end_to_end(capsys, tmp_path, corpus):
    t0 = time.perf_counter()
    prep, model, gen = tmp_path / "prep", tmp_path / "model.ckpt", tmp_path / "gen"
    assert run(capsys, "prepare", "--in", corpus, "--reps", 6, "--seed", 1, "--out", prep)[0] == 0
    assert {p.name for p in prep.iterdir()} == {"dataset.npz", "templates.json", "manifest.jsonl"}
    code, out, _ = run(capsys, "train", "--data", prep, "--out", model, "--eval-every", 100,
                       "--max-batches", 300, "--seed", 1)
    assert code == 0 and "best_val_acc" in json.loads(out)
    assert (tmp_path / "model.ckpt.manifest.jsonl").exists()
    code, out, _ = run(capsys, "generate", "--model", model, "--templates", prep, "--count", 4,
                       "--o", 16, "--seed", 2, "--out", gen)
    assert code == 0 and json.loads(out)["generated"] == 4
    prov = json.loads((gen / "provenance.json").read_text())
    files = sorted(gen.glob("gen_*.cnf"))
    assert len(files) == 4 and all(e["ok"] for e in prov["formulas"])
    code, out, _ = run(capsys, "stats", *files)
    assert code == 0 and len(out.splitlines()) == 4
    assert time.perf_counter() - t0 < 300


def test_generate_is_deterministic_and_manifests_append(capsys, tmp_path, corpus):
    prep, model = tmp_path / "prep", tmp_path / "m.ckpt"
    run(capsys, "prepare", "--in", corpus, "--reps", 3, "--out", prep)
    run(capsys, "train", "--data", prep, "--out", model, "--eval-every", 20, "--max-batches", 40)
    outs = []
    for name in ("a", "b"):
        run(capsys, "generate", "--model", model, "--templates", prep, "--count", 3,
            "--o", 8, "--seed", 5, "--out", tmp_path / name)
        outs.append([p.read_bytes() for p in sorted((tmp_path / name).glob("gen_*.cnf"))])
    assert outs[0] == outs[1]
    run(capsys, "generate", "--model", model, "--templates", prep, "--count", 1,
        "--o", 8, "--seed", 6, "--out", tmp_path / "a")
    lines = (tmp_path / "a" / "manifest.jsonl").read_text().splitlines()
    assert len(lines) == 2
    rec = json.loads(lines[0])
    assert rec["subcommand"] == "generate" and rec["config"]["seed"] == 5
    assert str(model) in rec["inputs"] and rec["version"]


def test_generate_from_outside_templates(capsys, tmp_path, corpus):
    prep, model = tmp_path / "prep", tmp_path / "m.ckpt"
    run(capsys, "prepare", "--in", corpus / "t0.cnf", "--reps", 3, "--out", prep)
    run(capsys, "train", "--data", prep, "--out", model, "--eval-every", 20, "--max-batches", 20)
    code, _, _ = run(capsys, "generate", "--model", model, "--template-source", corpus / "t2.cnf",
                     "--count", 1, "--o", 4, "--out", tmp_path / "g")
    assert code == 0
    src, out = read_cnf(corpus / "t2.cnf"), read_cnf(tmp_path / "g" / "gen_0000.cnf")
    assert out.num_clauses == src.num_clauses


def test_report_writes_tables_and_figures(capsys, tmp_path, corpus):
    code, out, _ = run(capsys, "report", "--reference", corpus, "--generated", f"same={corpus}",
                       "--out", tmp_path / "rep")
    assert code == 0
    names = {p.name for p in (tmp_path / "rep").iterdir()}
    assert {"stats.csv", "summary.csv", "scatter.png", "histograms.png", "manifest.jsonl"} <= names
    rows = [json.loads(l) for l in out.splitlines()]
    assert rows[1]["modularity_vcg_relerr"] == 0.0


def _stub(path, body):
    path.write_text("#!/bin/sh\n" + body + "\n")
    path.chmod(path.stat().st_mode | stat.S_IEXEC)


def test_bench_rank_and_tune(capsys, tmp_path, corpus):
    _stub(tmp_path / "fast.sh", "exit 10")
    _stub(tmp_path / "slow.sh", "sleep 0.3; exit 20")
    _stub(tmp_path / "knob.sh", '[ "$1 $2" = "0.95 0.9" ] && exit 10; sleep 0.3; exit 10')
    reg = tmp_path / "reg.json"
    reg.write_text(json.dumps([
        {"name": "fast", "path": "fast.sh", "group": "Application"},
        {"name": "slow", "path": "slow.sh", "group": "Random"},
        {"name": "knob", "path": "knob.sh", "args": ["{vd}", "{cd}", "{formula}"]},
    ]))
    bench = tmp_path / "b"
    code, out, _ = run(capsys, "bench", "--solvers", reg, "--only", "fast", "slow",
                       "--formulas", corpus, "--timeout", 5, "--jobs", 2, "--out", bench)
    assert code == 0 and json.loads(out)["ranking"] == ["fast", "slow"]
    assert len((bench / "results.jsonl").read_text().splitlines()) == 6

    fig = tmp_path / "times.png"
    code, out, _ = run(capsys, "rank", "--results", bench / "results.jsonl", "--reference",
                       bench / "results.jsonl", "--solvers", reg, "--figure", fig)
    rec = json.loads(out)
    assert code == 0 and rec["accuracy"] == 1.0 and fig.exists()

    code, out, _ = run(capsys, "tune", "--solvers", reg, "--solver", "knob", "--formulas",
                       corpus / "t0.cnf", "--vd", 0.85, 0.95, "--cd", 0.9, 0.99,
                       "--timeout", 5, "--out", tmp_path / "t")
    rec = json.loads(out)
    assert code == 0 and rec["best"] == {"vd": 0.95, "cd": 0.9} and len(rec["grid"]) == 4


def test_missing_inputs_give_diagnostic(capsys, tmp_path):
    code, _, err = run(capsys, "stats", tmp_path / "absent.cnf")
    assert code == 1 and "absent.cnf" in err
