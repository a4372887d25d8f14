import json
import subprocess
import sys

import pytest

from kbc_abduction.cli import bench, build_parser, main
from kbc_abduction.complex_model import load_checkpoint
from kbc_abduction.prover import ProveConfig, load_problems

KB = """hike\thypernym\twalk
walk\thypernym\tmove
parent\tantonym\tchild
make\tsynonym\tbuild
dog\thypernym\tanimal
puppy\thypernym\tdog
"""

PROBLEMS = [
    {"id": "1", "premises": ["exists e x. man(x) & hike(e) & subj(e,x)"],
     "hypothesis": "exists e x. man(x) & walk(e) & subj(e,x)", "gold": "entailment"},
    {"id": "2", "premises": ["exists x. parent(x)"], "hypothesis": "exists x. child(x)",
     "gold": "contradiction"},
]


@pytest.fixture
def files(tmp_path):
    kb = tmp_path / "kb.tsv"
    kb.write_text(KB)
    probs = tmp_path / "p.jsonl"
    probs.write_text("".join(json.dumps(p) + "\n" for p in PROBLEMS))
    return tmp_path, kb, probs


def read_jsonl(path):
    return [json.loads(l) for l in path.read_text().splitlines()]


def test_train_writes_checkpoint(files):
    tmp, kb, _ = files
    out = tmp / "m.ckbc"
    assert main(["train", "--triplets", str(kb), "--dim", "50", "--batch", "128", "--seed", "7",
                 "--epochs", "2", "--out", str(out)]) == 0
    p = load_checkpoint(out)
    assert p.dim == 50 and p.n_entities == 10
    out2 = tmp / "m2.ckbc"
    main(["train", "--triplets", str(kb), "--dim", "50", "--batch", "128", "--seed", "7",
          "--epochs", "2", "--out", str(out2)])
    assert out.read_bytes() == out2.read_bytes()


def test_eval_prints_metrics(files, capsys):
    tmp, kb, _ = files
    ckpt = tmp / "m.ckbc"
    main(["train", "--triplets", str(kb), "--dim", "8", "--epochs", "1", "--out", str(ckpt)])
    capsys.readouterr()
    assert main(["eval", "--model", str(ckpt), "--dev", str(kb)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"mrr", "hits1", "hits3", "hits10", "count"}
    assert out["count"] == 6


def test_eval_unknown_entity(files, tmp_path):
    _, kb, _ = files
    ckpt = tmp_path / "m.ckbc"
    main(["train", "--triplets", str(kb), "--dim", "4", "--epochs", "0", "--out", str(ckpt)])
    dev = tmp_path / "d.tsv"
    dev.write_text("zebra\tsynonym\tdog\n")
    assert main(["eval", "--model", str(ckpt), "--dev", str(dev)]) == 1


def test_prove_report(files):
    tmp, kb, probs = files
    out = tmp / "r.jsonl"
    assert main(["prove", "--problems", str(probs), "--scorer", f"search:{kb}",
                 "--out", str(out)]) == 0
    recs = read_jsonl(out)
    assert [r["label"] for r in recs[:-1]] == ["entailment", "contradiction"]
    assert recs[-1]["summary"]["accuracy"] == 100.0
    out2 = tmp / "r2.jsonl"
    main(["prove", "--problems", str(probs), "--scorer", f"search:{kb}", "--out", str(out2)])
    strip = lambda rs: [{k: v for k, v in r.items() if k != "millis"} for r in rs[:-1]]
    assert strip(read_jsonl(out)) == strip(read_jsonl(out2))


def test_prove_without_scorer(files, capsys):
    _, _, probs = files
    assert main(["prove", "--problems", str(probs)]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [json.loads(l)["label"] for l in lines[:-1]] == ["unknown", "unknown"]


def test_bench_runs(files):
    tmp, kb, probs = files
    out = tmp / "b.jsonl"
    assert main(["bench", "--problems", str(probs), "--scorer", f"search:{kb}",
                 "--scorer", "none", "--runs", "3", "--out", str(out)]) == 0
    rows = read_jsonl(out)
    assert [r["scorer"] for r in rows] == [f"search:{kb}", "none"]
    for r in rows:
        assert len(r["run_seconds"]) == 3
        assert r["mean_seconds"] == pytest.approx(sum(r["run_seconds"]) / 3)
    assert rows[0]["accuracy"] == 100.0 and rows[1]["accuracy"] == 0.0


def test_bench_function_single_row(files):
    _, _, probs = files
    problems, _ = load_problems(probs)
    rows = bench(problems[:1], {"none": None}, 1, ProveConfig())
    assert len(rows) == 1 and rows[0]["count"] == 1


def test_score_tsv(files, capsys):
    _, kb, _ = files
    assert main(["score", "--scorer", f"search:{kb}", "--pair", "puppy", "animal"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 10
    assert "puppy\thypernym\tanimal\t1.000000" in lines


def test_build_kb(tmp_path):
    (tmp_path / "syn.tsv").write_text("s1\tdog,domestic_dog\ns2\tanimal\ns3\tpuppy\n")
    (tmp_path / "edges.tsv").write_text("s3\thypernym\ts1\ns1\thypernym\ts2\n")
    train, dev = tmp_path / "train.tsv", tmp_path / "dev.tsv"
    assert main(["build-kb", "--synsets", str(tmp_path / "syn.tsv"), "--synset-edges",
                 str(tmp_path / "edges.tsv"), "--dev-size", "2", "--out-train", str(train),
                 "--out-dev", str(dev)]) == 0
    lines = train.read_text().splitlines() + dev.read_text().splitlines()
    assert "puppy\thypernym\tanimal" in lines
    assert len(dev.read_text().splitlines()) == 2


def test_exit_codes(files, tmp_path):
    _, _, probs = files
    assert main([]) == 2
    assert main(["frobnicate"]) == 2
    assert main(["prove", "--problems", str(probs), "--theta", "1.5"]) == 2
    assert main(["score", "--scorer", "none"]) == 2
    assert main(["prove", "--problems", str(tmp_path / "missing.jsonl")]) == 1
    assert main(["prove", "--problems", str(probs), "--scorer", "kbc:/nonexistent"]) == 1
    assert main(["prove", "--problems", str(probs), "--scorer", "bogus:x"]) == 1


def test_help_documents_every_flag():
    ap = build_parser()
    sub = next(a for a in ap._actions if a.__class__.__name__ == "_SubParsersAction")
    assert set(sub.choices) == {"build-kb", "train", "eval", "score", "prove", "serve", "bench"}
    for name, p in sub.choices.items():
        text = p.format_help()
        for action in p._actions:
            if action.option_strings and action.dest != "help":
                assert action.help, f"{name} {action.option_strings} has no help"
                if action.default not in (None, False) and action.required is False:
                    assert "default" in action.help, f"{name} {action.option_strings}"
        assert text


@pytest.mark.parametrize("cmd", ["build-kb", "train", "eval", "score", "prove", "serve", "bench"])
def test_help_exits_zero(cmd):
    assert main([cmd, "--help"]) == 0


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "kbc_abduction.cli", "--help"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "build-kb" in r.stdout


def test_serve_subprocess_and_sigterm(files):
    import signal
    import socket
    import time
    _, kb, _ = files
    s = socket.socket()
    s.bind(("127.0.0.1", 0))
    port = s.getsockname()[1]
    s.close()
    proc = subprocess.Popen([sys.executable, "-m", "kbc_abduction.cli", "serve", "--scorer",
                             f"search:{kb}", "--port", str(port)], stderr=subprocess.PIPE)
    try:
        deadline = time.monotonic() + 10
        while True:
            try:
                conn = socket.create_connection(("127.0.0.1", port), timeout=5)
                break
            except OSError:
                assert time.monotonic() < deadline, "server did not start"
                time.sleep(0.05)
        with conn:
            conn.sendall(b'{"id":3,"pairs":[["hike","walk"]]}\n')
            reply = json.loads(conn.makefile("rb").readline())
        assert reply["id"] == 3 and reply["axioms"][0]["r"] == "hypernym"
        proc.send_signal(signal.SIGTERM)
        assert proc.wait(timeout=10) == 0
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()
