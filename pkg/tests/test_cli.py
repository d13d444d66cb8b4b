import json
import math
from pathlib import Path

import pytest

from regurgelab.cli import main
from regurgelab.corpus import load_parallel_corpus
from regurgelab.mitigation import load_schedule


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("cli")


@pytest.fixture(scope="module")
def tiny_config_path(workdir):
    cfg = {
        "name": "clitest",
        "seed": 0,
        "data": {
            "kind": "toy",
            "toy": {"n_pairs": 400, "lexicon_size": 30, "min_len": 3,
                    "max_len": 6, "zipf_a": 1.3, "corpus_seed": 0},
            "splits": {"train": 120, "pool": 200, "eval": 40, "heldout": 0},
        },
        "model": {"num_layers": 1, "num_heads": 2, "d_model": 16,
                  "d_ff": 32, "max_sequence_length": 10},
        "training": {"batch_size": 32, "learning_rate": 0.004,
                     "epochs_per_batch": 1},
        "regurgitative": {
            "num_batches": 2,
            "batch_size": 40,
            "arms": [
                {"name": "real", "kind": "proportion", "proportion": 0.0},
                {"name": "self", "kind": "proportion", "proportion": 1.0},
            ],
        },
        "evaluation": {"bleu_max_n": 2},
    }
    path = workdir / "config.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return path


class TestParsing:
    def test_no_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_command_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2

    def test_missing_required_flag_exits_2(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["evaluate", "--hypotheses", "x.txt"])
        assert exc.value.code == 2

    def test_mode_specific_requirements(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["score", "answer-entropy", "--start", "1"])
        assert exc.value.code == 2

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0


class TestMakeData:
    def test_writes_tsv(self, capsys, workdir):
        out = workdir / "toy.tsv"
        code, stdout, _ = run_cli(capsys, "--seed", "5", "make-data",
                                  "--out", str(out), "--pairs", "50")
        assert code == 0 and "50 pairs" in stdout
        corpus, skipped = load_parallel_corpus(out)
        assert len(corpus) == 50 and skipped == 0

    def test_seed_changes_data(self, capsys, workdir):
        a, b = workdir / "a.tsv", workdir / "b.tsv"
        run_cli(capsys, "--seed", "1", "make-data", "--out", str(a),
                "--pairs", "30")
        run_cli(capsys, "--seed", "2", "make-data", "--out", str(b),
                "--pairs", "30")
        assert a.read_text() != b.read_text()


class TestEvaluate:
    def test_prints_bleu(self, capsys, workdir):
        hyp = workdir / "hyp.txt"
        ref = workdir / "ref.txt"
        hyp.write_text("the cat sat\n", encoding="utf-8")
        ref.write_text("the cat sat on the mat\n", encoding="utf-8")
        code, stdout, _ = run_cli(capsys, "evaluate",
                                  "--hypotheses", str(hyp),
                                  "--references", str(ref),
                                  "--max-n", "2")
        assert code == 0
        assert stdout.startswith("BLEU ")
        value = float(stdout.split()[1])
        assert math.isclose(value, math.exp(-1.0), rel_tol=0, abs_tol=1e-12)

    def test_length_mismatch_is_runtime_error(self, capsys, workdir):
        hyp = workdir / "hyp2.txt"
        ref = workdir / "ref2.txt"
        hyp.write_text("a b\nc d\n", encoding="utf-8")
        ref.write_text("a b\n", encoding="utf-8")
        code, _, stderr = run_cli(capsys, "evaluate",
                                  "--hypotheses", str(hyp),
                                  "--references", str(ref))
        assert code == 1 and "error:" in stderr

    def test_missing_file_is_runtime_error(self, capsys, workdir):
        code, _, stderr = run_cli(capsys, "evaluate",
                                  "--hypotheses", str(workdir / "nope.txt"),
                                  "--references", str(workdir / "nope.txt"))
        assert code == 1 and "error:" in stderr


class TestScore:
    def test_answer_entropy(self, capsys):
        code, stdout, _ = run_cli(capsys, "score", "answer-entropy",
                                  "--start", "0.5,0.5", "--end", "0.5,0.5")
        assert code == 0
        assert math.isclose(float(stdout.strip()), math.log(2.0),
                            abs_tol=1e-12)

    def test_entropy_from_records(self, capsys, workdir):
        records = workdir / "records.jsonl"
        rows = [
            {"entropy": 0.25, "tokens": ["x"]},
            {"probs": [[0.5, 0.5], [1.0, 0.0]]},
        ]
        records.write_text(
            "\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
        code, stdout, _ = run_cli(capsys, "score", "entropy",
                                  "--records", str(records))
        assert code == 0
        values = [float(v) for v in stdout.split()]
        assert values[0] == 0.25
        assert math.isclose(values[1], math.log(2.0) / 2.0, abs_tol=1e-12)

    def test_detector_roundtrip(self, capsys, workdir):
        real = workdir / "real.tsv"
        gen = workdir / "gen.tsv"
        real_lines = [f"alpha beta w{i}\tgamma delta v{i}" for i in range(40)]
        gen_lines = [f"zz qq u{i}\tk{i} k{i} k{i} k{i} k{i}" for i in range(40)]
        real.write_text("\n".join(real_lines) + "\n", encoding="utf-8")
        gen.write_text("\n".join(gen_lines) + "\n", encoding="utf-8")
        model_path = workdir / "det.json"
        code, stdout, _ = run_cli(capsys, "score", "detector-train",
                                  "--real", str(real),
                                  "--generated", str(gen),
                                  "--out", str(model_path))
        assert code == 0 and model_path.exists()
        assert "accuracy" in stdout and "auc" in stdout
        code, stdout, _ = run_cli(capsys, "score", "detector",
                                  "--model", str(model_path),
                                  "--data", str(gen))
        assert code == 0
        probs = [float(v) for v in stdout.split()]
        assert len(probs) == 40
        assert all(0.0 <= p <= 1.0 for p in probs)

    def test_regressor_roundtrip(self, capsys, workdir):
        data = workdir / "pairs.tsv"
        lines = [f"a b c w{i}\td e f v{i}" for i in range(50)]
        data.write_text("\n".join(lines) + "\n", encoding="utf-8")
        scores = workdir / "scores.txt"
        scores.write_text("\n".join("0.5" for _ in range(50)) + "\n",
                          encoding="utf-8")
        model_path = workdir / "reg.json"
        code, stdout, _ = run_cli(capsys, "score", "regressor-train",
                                  "--data", str(data),
                                  "--scores", str(scores),
                                  "--out", str(model_path))
        assert code == 0 and "rmse" in stdout
        code, stdout, _ = run_cli(capsys, "score", "regressor",
                                  "--model", str(model_path),
                                  "--data", str(data))
        assert code == 0
        preds = [float(v) for v in stdout.split()]
        assert len(preds) == 50

    def test_score_count_mismatch(self, capsys, workdir):
        data = workdir / "pairs2.tsv"
        data.write_text("a\tb\nc\td\n", encoding="utf-8")
        scores = workdir / "scores2.txt"
        scores.write_text("0.5\n", encoding="utf-8")
        code, _, stderr = run_cli(capsys, "score", "regressor-train",
                                  "--data", str(data),
                                  "--scores", str(scores),
                                  "--out", str(workdir / "x.json"))
        assert code == 1 and "error:" in stderr


class TestSchedule:
    def test_rank(self, capsys, workdir):
        scores = workdir / "rank_scores.txt"
        scores.write_text("\n".join(str(v) for v in [3.0, 1.0, 2.0, 0.0]),
                          encoding="utf-8")
        out = workdir / "rank.json"
        code, stdout, _ = run_cli(capsys, "schedule", "rank",
                                  "--scores", str(scores),
                                  "--batch-size", "2", "--out", str(out))
        assert code == 0
        sched = load_schedule(out)
        assert sched.batches == ((3, 1), (2, 0))

    def test_proportion(self, capsys, workdir):
        out = workdir / "prop.json"
        code, _, _ = run_cli(capsys, "--seed", "3", "schedule", "proportion",
                             "--synthetic", "50", "--real", "50",
                             "--proportion", "0.5", "--batch-size", "10",
                             "--num-batches", "4", "--out", str(out))
        assert code == 0
        sched = load_schedule(out)
        assert sched.num_batches == 4 and sched.rationale == "proportion:0.5"

    def test_mix_union(self, capsys, workdir):
        out = workdir / "mix.json"
        code, _, _ = run_cli(capsys, "schedule", "mix",
                             "--first", "30", "--second", "30",
                             "--strategy", "union", "--batch-size", "10",
                             "--num-batches", "2", "--out", str(out))
        assert code == 0
        sched = load_schedule(out)
        assert all(len(b) == 20 for b in sched.batches)

    def test_oversubscribed_is_runtime_error(self, capsys, workdir):
        code, _, stderr = run_cli(capsys, "schedule", "proportion",
                                  "--synthetic", "5", "--real", "5",
                                  "--proportion", "0.5", "--batch-size", "4",
                                  "--num-batches", "10",
                                  "--out", str(workdir / "no.json"))
        assert code == 1 and "error:" in stderr


class TestPipeline:
    """End-to-end: train, generate, evaluate, run, report."""

    def test_train_generate_evaluate(self, capsys, workdir, tiny_config_path):
        ckpt = workdir / "baseline.ckpt"
        code, stdout, _ = run_cli(capsys, "train-baseline",
                                  "--config", str(tiny_config_path),
                                  "--out", str(ckpt))
        assert code == 0 and ckpt.exists()
        assert stdout.startswith("baseline,0,")

        sources = workdir / "sources.txt"
        sources.write_text("s0 s1 s2\ns3 s4 s5\n\n", encoding="utf-8")
        out_tsv = workdir / "generated.tsv"
        records = workdir / "records.jsonl"
        code, stdout, stderr = run_cli(
            capsys, "generate", "--model", str(ckpt),
            "--input", str(sources), "--output", str(out_tsv),
            "--records", str(records), "--include-probs")
        assert code == 0 and "2 pairs" in stdout
        assert "skipped 1" in stderr
        corpus, _ = load_parallel_corpus(out_tsv)
        assert len(corpus) == 2
        rows = [json.loads(line) for line in
                records.read_text().strip().splitlines()]
        assert all("entropy" in row and "probs" in row for row in rows)

        code, stdout, _ = run_cli(capsys, "score", "entropy",
                                  "--records", str(records))
        assert code == 0 and len(stdout.split()) == 2

    def test_run_and_report(self, capsys, workdir, tiny_config_path):
        out_a = workdir / "run_a"
        code, stdout, _ = run_cli(capsys, "run",
                                  "--config", str(tiny_config_path),
                                  "--seed", "7", "--out", str(out_a))
        assert code == 0
        assert "arm real final BLEU" in stdout
        assert (out_a / "clitest.csv").exists()
        assert (out_a / "clitest.json").exists()
        assert (out_a / "clitest.svg").exists()

        out_b = workdir / "run_b"
        code, _, _ = run_cli(capsys, "run",
                             "--config", str(tiny_config_path),
                             "--seed", "7", "--out", str(out_b))
        assert code == 0
        for name in ("clitest.csv", "clitest.json", "clitest.svg"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

        out_c = workdir / "rerender"
        code, stdout, _ = run_cli(capsys, "report",
                                  "--input", str(out_a / "clitest.json"),
                                  "--out", str(out_c))
        assert code == 0
        assert (out_c / "clitest.csv").read_bytes() == \
            (out_a / "clitest.csv").read_bytes()
        assert (out_c / "clitest.svg").read_bytes() == \
            (out_a / "clitest.svg").read_bytes()

    def test_run_bad_config_path(self, capsys, workdir):
        code, _, stderr = run_cli(capsys, "run",
                                  "--config", str(workdir / "missing.json"),
                                  "--out", str(workdir))
        assert code == 1 and "error:" in stderr
