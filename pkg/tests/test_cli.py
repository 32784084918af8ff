import json

import pytest

from haggis import cli
from haggis.corpus_io import ingest_corpus


@pytest.fixture
def workdir(tmp_path, demo_sources):
    src = tmp_path / "src"
    for path, text in demo_sources:
        f = src / path
        f.parent.mkdir(parents=True, exist_ok=True)
        f.write_text(text)
    corpus = tmp_path / "corpus.jsonl"
    assert cli.main(["parse", str(src), "-o", str(corpus)]) == 0
    return tmp_path, corpus


def _mine(tmp, corpus, name="idioms.json", *extra):
    out = tmp / name
    code = cli.main(["mine", str(corpus), "-o", str(out), "--iters", "20", "--burn-in", "10",
                     "--nmin", "3", *extra])
    assert code == 0
    return out


class TestParse:
    def test_records(self, workdir):
        _, corpus = workdir
        trees = ingest_corpus(corpus)
        assert len(trees) == 8
        assert trees[0].path == "cursor/f0.demo"
        assert trees[0].imports == ["android.database.Cursor"]

    def test_missing_source(self, tmp_path):
        assert cli.main(["parse", str(tmp_path / "nope"), "-o", str(tmp_path / "x.jsonl")]) == 2

    def test_syntax_error(self, tmp_path, capsys):
        (tmp_path / "bad.demo").write_text("if (x {")
        assert cli.main(["parse", str(tmp_path / "bad.demo")]) == 1
        assert "bad.demo" in capsys.readouterr().err


class TestSplit:
    def test_by_project(self, workdir):
        tmp, corpus = workdir
        train, test = tmp / "train.jsonl", tmp / "test.jsonl"
        assert cli.main(["split", str(corpus), "--ratio", "0.5", "--train", str(train), "--test", str(test)]) == 0
        a, b = ingest_corpus(train), ingest_corpus(test)
        assert len(a) == 4 and len(b) == 4
        assert {t.path for t in a}.isdisjoint({t.path for t in b})
        for project in ("cursor", "loop"):
            assert sum(t.path.startswith(project) for t in a) == 2

    def test_bad_ratio(self, workdir):
        tmp, corpus = workdir
        assert cli.main(["split", str(corpus), "--ratio", "1.5", "--train", str(tmp / "a"), "--test", str(tmp / "b")]) == 1


class TestMine:
    def test_single_iteration(self, workdir):
        tmp, corpus = workdir
        out = tmp / "one.json"
        assert cli.main(["mine", str(corpus), "-o", str(out), "--iters", "1", "--burn-in", "0"]) == 0
        ckpt = json.loads((tmp / "one.ckpt.json").read_text())
        assert len(ckpt["samples"]) == 1

    def test_idiom_file_and_side_outputs(self, workdir):
        tmp, corpus = workdir
        out = _mine(tmp, corpus)
        data = json.loads(out.read_text())
        assert set(data["config"]) == {"alpha", "pstop", "cmin", "nmin", "seed"}
        assert data["idioms"], "expected at least one idiom on the repeated demo corpus"
        assert {"template", "fragment", "sampleCount", "fileCount"} <= set(data["idioms"][0])
        assert (tmp / "idioms.ckpt.json").exists() and (tmp / "idioms.grammar.json").exists()

    def test_same_seed_same_bytes(self, workdir):
        tmp, corpus = workdir
        a = _mine(tmp, corpus, "a.json", "--seed", "4")
        b = _mine(tmp, corpus, "b.json", "--seed", "4")
        assert a.read_bytes() == b.read_bytes()

    def test_config_file_and_overrides(self, workdir):
        tmp, corpus = workdir
        cfg = tmp / "cfg.json"
        cfg.write_text(json.dumps({"alpha": 2.0, "iterations": 5, "burnIn": 2, "seed": 9}))
        out = tmp / "c.json"
        assert cli.main(["mine", str(corpus), "-c", str(cfg), "--seed", "3", "-o", str(out)]) == 0
        assert json.loads(out.read_text())["config"] == {"alpha": 2.0, "pstop": 0.7, "cmin": 2, "nmin": 5, "seed": 3}

    def test_unknown_config_key(self, workdir):
        tmp, corpus = workdir
        cfg = tmp / "cfg.json"
        cfg.write_text(json.dumps({"alpah": 2.0}))
        assert cli.main(["mine", str(corpus), "-c", str(cfg), "-o", str(tmp / "x.json")]) == 1

    def test_bad_schedule(self, workdir):
        tmp, corpus = workdir
        assert cli.main(["mine", str(corpus), "--iters", "5", "--burn-in", "5", "-o", str(tmp / "x.json")]) == 1

    def test_missing_corpus(self, tmp_path):
        assert cli.main(["mine", str(tmp_path / "missing.jsonl"), "-o", str(tmp_path / "x.json")]) == 2

    def test_schema_error(self, tmp_path):
        bad = tmp_path / "bad.jsonl"
        bad.write_text('{"version": 1, "path": "a", "imports": [], "root": {}}\n')
        assert cli.main(["mine", str(bad), "-o", str(tmp_path / "x.json")]) == 1

    def test_resume_matches_single_run(self, workdir):
        tmp, corpus = workdir
        full = _mine(tmp, corpus, "full.json", "--seed", "2")
        short = tmp / "short.json"
        assert cli.main(["mine", str(corpus), "-o", str(short), "--iters", "12", "--burn-in", "10",
                         "--nmin", "3", "--seed", "2"]) == 0
        # same schedule as the full run, continued from iteration 12
        ckpt = json.loads((tmp / "short.ckpt.json").read_text())
        ckpt["config"]["iterations"] = 20
        (tmp / "short.ckpt.json").write_text(json.dumps(ckpt))
        resumed = tmp / "resumed.json"
        assert cli.main(["mine", "--resume", str(tmp / "short.ckpt.json"), "-o", str(resumed)]) == 0
        assert resumed.read_bytes() == full.read_bytes()

    def test_two_chains(self, workdir):
        tmp, corpus = workdir
        out = _mine(tmp, corpus, "two.json", "--chains", "2")
        ckpt = json.loads((tmp / "two.ckpt.json").read_text())
        assert len(ckpt["chains"]) == 2
        assert {r["chain"] for r in ckpt["samples"]} == {0, 1}
        assert json.loads(out.read_text())["idioms"]


class TestDownstream:
    def test_extract_thresholds(self, workdir):
        tmp, corpus = workdir
        _mine(tmp, corpus)
        loose, strict = tmp / "loose.json", tmp / "strict.json"
        assert cli.main(["extract", str(tmp / "idioms.ckpt.json"), "--nmin", "1", "-o", str(loose)]) == 0
        assert cli.main(["extract", str(tmp / "idioms.ckpt.json"), "--nmin", "12", "-o", str(strict)]) == 0
        n_loose = len(json.loads(loose.read_text())["idioms"])
        n_strict = len(json.loads(strict.read_text())["idioms"])
        assert n_loose >= n_strict

    def test_evaluate(self, workdir):
        tmp, corpus = workdir
        out = _mine(tmp, corpus)
        rep = tmp / "rep.json"
        assert cli.main(["evaluate", str(out), str(corpus), "-o", str(rep)]) == 0
        data = json.loads(rep.read_text())
        assert 0.0 < data["coverage"] <= 1.0
        assert data["precision"] == 1.0
        assert data["files"] == 8

    def test_evaluate_empty_idiom_file(self, workdir):
        tmp, corpus = workdir
        empty = tmp / "empty.json"
        empty.write_text(json.dumps({"config": {}, "idioms": []}))
        rep = tmp / "rep.json"
        assert cli.main(["evaluate", str(empty), str(corpus), "-o", str(rep)]) == 0
        assert json.loads(rep.read_text())["coverage"] == 0.0

    def test_lift_and_suggest(self, workdir, capsys):
        tmp, corpus = workdir
        out = _mine(tmp, corpus)
        lift = tmp / "lift.csv"
        assert cli.main(["lift", str(out), str(corpus), "-o", str(lift)]) == 0
        assert lift.read_text().startswith("idiom,android.database.Cursor,java.util.List")
        capsys.readouterr()
        assert cli.main(["suggest", str(out), str(lift), "android.database.Cursor", "--json"]) == 0
        rows = json.loads(capsys.readouterr().out)
        assert rows and all(r["score"] > 0 for r in rows)
        assert [r["score"] for r in rows] == sorted((r["score"] for r in rows), reverse=True)
        assert cli.main(["suggest", str(out), str(lift)]) == 0
        assert capsys.readouterr().out == ""
        assert cli.main(["suggest", str(out), str(lift), "java.util.List", "--sth", "1e9"]) == 0
        assert capsys.readouterr().out == ""

    def test_sample_from_checkpoint(self, workdir):
        tmp, corpus = workdir
        _mine(tmp, corpus)
        a, b = tmp / "a.txt", tmp / "b.txt"
        for p in (a, b):
            assert cli.main(["sample", "--checkpoint", str(tmp / "idioms.ckpt.json"), "-n", "3",
                             "--seed", "1", "-o", str(p)]) == 0
        assert a.read_text() == b.read_text()
        assert a.read_text().count("// sample/") == 3

    def test_sample_from_idioms(self, workdir):
        tmp, corpus = workdir
        out = _mine(tmp, corpus)
        res = tmp / "s.jsonl"
        assert cli.main(["sample", "--idioms", str(out), "--grammar", str(tmp / "idioms.grammar.json"),
                         "-n", "4", "--format", "jsonl", "-o", str(res)]) == 0
        rows = [json.loads(line) for line in res.read_text().splitlines()]
        assert len(rows) == 4 and all(r["tree"].startswith("(CompilationUnit") for r in rows)

    def test_sample_needs_a_source(self, capsys):
        assert cli.main(["sample"]) == 2


def test_verbose_flag_after_subcommand(workdir):
    tmp, corpus = workdir
    assert cli.main(["evaluate", "-v", str(tmp / "none.json"), str(corpus)]) == 2


def test_thread_env(monkeypatch):
    monkeypatch.setenv(cli.THREADS_ENV, "3")
    assert cli.thread_limit() == 3
    monkeypatch.setenv(cli.THREADS_ENV, "many")
    with pytest.raises(cli.CliError):
        cli.thread_limit()
