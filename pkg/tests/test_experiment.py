import json
from pathlib import Path

import numpy as np
import pytest

from regurgelab.corpus import Corpus, SentencePair
from regurgelab.errors import ConfigError
from regurgelab.experiment import (
    CurvePoint,
    ExperimentConfig,
    build_arm_schedule,
    derive_seed,
    emit_report,
    materialize_batch,
    prepare_data,
    report_csv,
    report_json,
    report_svg,
    run_baseline_curve,
    run_experiment,
)
from regurgelab.mitigation import Schedule


def tiny_config(**overrides) -> dict:
    cfg = {
        "name": "tiny",
        "seed": 0,
        "data": {
            "kind": "toy",
            "toy": {"n_pairs": 400, "lexicon_size": 30, "min_len": 3,
                    "max_len": 6, "zipf_a": 1.3, "corpus_seed": 0},
            "splits": {"train": 120, "pool": 200, "eval": 40, "heldout": 0},
        },
        "model": {"num_layers": 1, "num_heads": 2, "d_model": 16, "d_ff": 32,
                  "max_sequence_length": 10, "dropout_rate": 0.0},
        "training": {"batch_size": 32, "learning_rate": 0.004,
                     "epochs_per_batch": 1, "reset_adam_per_batch": False},
        "regurgitative": {
            "num_batches": 2,
            "batch_size": 40,
            "arms": [
                {"name": "real", "kind": "proportion", "proportion": 0.0},
                {"name": "self", "kind": "proportion", "proportion": 1.0},
            ],
        },
        "evaluation": {"bleu_max_n": 2, "decode_batch_size": 64},
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            merged = dict(cfg[key])
            merged.update(value)
            cfg[key] = merged
        else:
            cfg[key] = value
    return cfg


class TestDeriveSeed:
    def test_deterministic(self):
        assert derive_seed(3, 1, 4) == derive_seed(3, 1, 4)

    def test_distinct_paths(self):
        assert derive_seed(3, 1) != derive_seed(3, 2)
        assert derive_seed(3, 1) != derive_seed(1, 3)

    def test_range(self):
        s = derive_seed(12345)
        assert 0 <= s < 2**31


class TestConfig:
    def test_defaults_applied(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        assert cfg.max_seconds == 1800.0
        assert cfg.evaluation.decode_batch_size == 64
        assert cfg.baseline.increments == (120,)
        assert cfg.baseline.checkpoints == {"low": 1}
        assert cfg.regurgitative.start_from == "low"
        assert cfg.record_timing is False

    def test_missing_required_section(self):
        raw = tiny_config()
        del raw["training"]  # optional, has defaults
        ExperimentConfig.from_dict(raw)
        del raw["data"]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_unknown_key_rejected(self):
        raw = tiny_config()
        raw["extra"] = 1
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_bad_arm_kind(self):
        raw = tiny_config()
        raw["regurgitative"]["arms"] = [{"name": "x", "kind": "bogus"}]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_proportion_arm_needs_proportion(self):
        raw = tiny_config()
        raw["regurgitative"]["arms"] = [{"name": "x", "kind": "proportion"}]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_duplicate_arm_names(self):
        raw = tiny_config()
        raw["regurgitative"]["arms"] = [
            {"name": "x", "kind": "proportion", "proportion": 0.0},
            {"name": "x", "kind": "proportion", "proportion": 1.0},
        ]
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_unknown_checkpoint_reference(self):
        raw = tiny_config()
        raw["regurgitative"]["start_from"] = "high"
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_checkpoint_index_out_of_range(self):
        raw = tiny_config()
        raw["baseline"] = {"increments": [120], "checkpoints": {"low": 2}}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_increments_exceed_train_split(self):
        raw = tiny_config()
        raw["baseline"] = {"increments": [80, 80]}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_tsv_requires_path(self):
        raw = tiny_config()
        raw["data"] = {"kind": "tsv", "splits": raw["data"]["splits"]}
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict(raw)

    def test_percent_batch_size(self):
        raw = tiny_config()
        raw["regurgitative"]["batch_size"] = {"percent_of_baseline": 25}
        cfg = ExperimentConfig.from_dict(raw)
        assert cfg.resolved_batch_size() == 30
        raw["regurgitative"]["batch_size"] = {"percent_of_baseline": 33}
        cfg = ExperimentConfig.from_dict(raw)
        assert cfg.resolved_batch_size() == 40  # ceil(0.33 * 120) = 40

    def test_checksum_stable_and_sensitive(self):
        a = ExperimentConfig.from_dict(tiny_config())
        b = ExperimentConfig.from_dict(tiny_config())
        c = ExperimentConfig.from_dict(tiny_config(seed=5))
        assert a.checksum() == b.checksum()
        assert a.checksum() != c.checksum()

    def test_from_file(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text(json.dumps(tiny_config()), encoding="utf-8")
        cfg = ExperimentConfig.from_file(path)
        assert cfg.name == "tiny"

    def test_from_file_bad_json(self, tmp_path):
        path = tmp_path / "c.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(path)

    def test_from_file_missing(self, tmp_path):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_file(tmp_path / "absent.json")


class TestPrepareData:
    def test_split_sizes(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        bundle = prepare_data(cfg, seed=0)
        assert (len(bundle.train), len(bundle.pool),
                len(bundle.eval), len(bundle.heldout)) == (120, 200, 40, 0)

    def test_vocab_covers_corpus(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        bundle = prepare_data(cfg, seed=0)
        for pair in bundle.train.pairs + bundle.eval.pairs:
            for tok in pair.source + pair.target:
                assert tok in bundle.vocab

    def test_fixed_split_seed_decouples_from_run_seed(self):
        raw = tiny_config()
        raw["data"]["split_seed"] = 99
        cfg = ExperimentConfig.from_dict(raw)
        a = prepare_data(cfg, seed=0)
        b = prepare_data(cfg, seed=1)
        assert a.train.pairs == b.train.pairs

    def test_run_seed_changes_split_by_default(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        a = prepare_data(cfg, seed=0)
        b = prepare_data(cfg, seed=1)
        assert a.train.pairs != b.train.pairs

    def test_tsv_kind(self, tmp_path):
        path = tmp_path / "data.tsv"
        lines = [f"w{i} w{i+1}\tv{i} v{i+1}" for i in range(30)]
        path.write_text("\n".join(lines), encoding="utf-8")
        raw = tiny_config()
        raw["data"] = {"kind": "tsv", "path": str(path),
                       "splits": {"train": 10, "pool": 10, "eval": 5,
                                  "heldout": 0}}
        cfg = ExperimentConfig.from_dict(raw)
        bundle = prepare_data(cfg, seed=0)
        assert len(bundle.train) == 10 and len(bundle.eval) == 5


class TestBaselineCurve:
    def test_curve_shape_and_checkpoints(self):
        raw = tiny_config()
        raw["baseline"] = {"increments": [60, 60],
                           "checkpoints": {"low": 1, "high": 2}}
        cfg = ExperimentConfig.from_dict(raw)
        bundle = prepare_data(cfg, seed=0)
        result = run_baseline_curve(cfg, 0, bundle)
        assert [p.batch for p in result.curve] == [0, 1, 2]
        assert set(result.checkpoints) == {"low", "high"}
        assert set(result.checkpoint_bleu) == {"low", "high"}
        low = result.checkpoints["low"]
        high = result.checkpoints["high"]
        assert any(not np.array_equal(low[k], high[k]) for k in low)

    def test_deterministic(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        bundle = prepare_data(cfg, seed=3)
        a = run_baseline_curve(cfg, 3, bundle)
        b = run_baseline_curve(cfg, 3, bundle)
        assert [p.bleu for p in a.curve] == [p.bleu for p in b.curve]
        assert all(np.array_equal(a.checkpoints["low"][k],
                                  b.checkpoints["low"][k])
                   for k in a.checkpoints["low"])


class TestSchedulesAndBatches:
    def test_build_proportion_schedule(self):
        from regurgelab.experiment import ArmSpec
        arm = ArmSpec(name="half", kind="proportion", proportion=0.5)
        sched = build_arm_schedule(arm, pool_size=100, batch_size=10,
                                   num_batches=3, seed=7)
        assert sched.num_batches == 3 and sched.batch_size == 10
        labels = {sched.resolve(i)[0] for b in sched.batches for i in b}
        assert labels == {"synthetic", "real"}

    def test_build_union_schedule(self):
        from regurgelab.experiment import ArmSpec
        arm = ArmSpec(name="u", kind="union")
        sched = build_arm_schedule(arm, pool_size=100, batch_size=10,
                                   num_batches=3, seed=7)
        assert sched.batch_size == 20
        assert all(len(b) == 20 for b in sched.batches)

    def test_materialize_mixes_provenance(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        bundle = prepare_data(cfg, seed=0)
        result = run_baseline_curve(cfg, 0, bundle)
        from regurgelab.experiment import ArmSpec
        arm = ArmSpec(name="half", kind="proportion", proportion=0.5)
        sched = build_arm_schedule(arm, len(bundle.pool), 10, 2, seed=7)
        pairs = materialize_batch(sched, 0, bundle.pool.pairs,
                                  result.model, cfg.evaluation)
        assert len(pairs) == 10
        provs = [p.provenance for p in pairs]
        assert provs.count("real") == 5
        assert sum(p.startswith("generated:") for p in provs) == 5

    def test_materialize_pure_real_never_generates(self):
        cfg = ExperimentConfig.from_dict(tiny_config())
        bundle = prepare_data(cfg, seed=0)
        from regurgelab.experiment import ArmSpec
        arm = ArmSpec(name="real", kind="proportion", proportion=0.0)
        sched = build_arm_schedule(arm, len(bundle.pool), 10, 2, seed=7)

        class Boom:
            def __getattr__(self, name):
                raise AssertionError("generator must not be touched")

        pairs = materialize_batch(sched, 0, bundle.pool.pairs,
                                  Boom(), cfg.evaluation)
        assert all(p.provenance == "real" for p in pairs)


@pytest.fixture(scope="module")
def tiny_report():
    cfg = ExperimentConfig.from_dict(tiny_config())
    return run_experiment(cfg, seed=2), cfg


class TestRunExperiment:
    def test_curves_complete(self, tiny_report):
        report, cfg = tiny_report
        assert not report.partial and report.failures == {}
        assert set(report.arm_curves) == {"real", "self"}
        for points in report.arm_curves.values():
            assert [p.batch for p in points] == [0, 1, 2]
        assert report.arm_curves["real"][0].bleu == report.arm_curves["self"][0].bleu

    def test_resolved_and_stamps(self, tiny_report):
        report, cfg = tiny_report
        assert report.seed == 2
        assert report.resolved["batch_size"] == 40
        assert report.resolved["pool_pairs"] == 200
        assert report.config_checksum == cfg.checksum()
        assert len(report.eval_checksum) == 64

    def test_schedules_recorded(self, tiny_report):
        report, _ = tiny_report
        sched = Schedule.from_dict(report.schedules["real"])
        assert sched.num_batches == 2

    def test_deterministic_repeat(self, tiny_report):
        report, cfg = tiny_report
        again = run_experiment(cfg, seed=2)
        for name in report.arm_curves:
            assert [p.bleu for p in report.arm_curves[name]] == \
                [p.bleu for p in again.arm_curves[name]]
        assert report_json(report) == report_json(again)
        assert report_csv(report) == report_csv(again)
        assert report_svg(report) == report_svg(again)

    def test_arm_failure_marks_partial(self):
        raw = tiny_config()
        # second arm asks for more pool data than exists
        raw["regurgitative"]["arms"] = [
            {"name": "ok", "kind": "proportion", "proportion": 0.0},
            {"name": "greedy", "kind": "proportion", "proportion": 1.0},
        ]
        raw["regurgitative"]["num_batches"] = 2
        raw["data"]["splits"] = {"train": 120, "pool": 3, "eval": 40,
                                 "heldout": 0}
        raw["regurgitative"]["batch_size"] = 2
        cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(cfg, seed=0)
        assert report.partial
        assert "greedy" in report.failures or "ok" in report.failures

    def test_budget_abort(self):
        raw = tiny_config()
        raw["max_seconds"] = 1e-6
        cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(cfg, seed=0)
        assert report.partial and report.failures


class TestEmission:
    def test_csv_layout(self, tiny_report):
        report, cfg = tiny_report
        lines = report_csv(report).splitlines()
        assert lines[0] == "arm,batch,bleu,seconds"
        # baseline has increments+1 rows, each arm num_batches+1
        assert len(lines) == 1 + 2 + 2 * 3
        assert all(line.endswith(",0.0") for line in lines[1:])

    def test_csv_timing_recorded_when_asked(self):
        raw = tiny_config(report={"record_timing": True})
        cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(cfg, seed=0)
        lines = report_csv(report).splitlines()
        trained = [l for l in lines[1:] if not l.endswith(",0.0")]
        assert trained, "training rows should carry nonzero seconds"

    def test_json_sorted_and_parseable(self, tiny_report):
        report, _ = tiny_report
        text = report_json(report)
        data = json.loads(text)
        assert list(data) == sorted(data)
        assert data["arms"]["real"][0]["seconds"] == 0.0
        assert data["record_timing"] is False

    def test_svg_wellformed(self, tiny_report):
        import xml.etree.ElementTree as ET
        report, _ = tiny_report
        svg = report_svg(report)
        root = ET.fromstring(svg)
        polylines = [e for e in root.iter()
                     if e.tag.endswith("polyline")]
        assert len(polylines) == 3  # baseline + two arms

    def test_emit_writes_files(self, tiny_report, tmp_path):
        report, _ = tiny_report
        paths = emit_report(report, tmp_path)
        assert set(paths) == {"csv", "json", "svg"}
        for path in paths.values():
            assert path.exists() and path.stat().st_size > 0

    def test_emit_unknown_format(self, tiny_report, tmp_path):
        report, _ = tiny_report
        with pytest.raises(ConfigError):
            emit_report(report, tmp_path, formats=("pdf",))

    def test_emit_byte_identical(self, tiny_report, tmp_path):
        report, cfg = tiny_report
        first = emit_report(report, tmp_path / "a")
        again = run_experiment(cfg, seed=2)
        second = emit_report(again, tmp_path / "b")
        for fmt in ("csv", "json", "svg"):
            assert first[fmt].read_bytes() == second[fmt].read_bytes()


class TestBitIdentityAcrossArms:
    def test_zero_proportion_equals_pure_real(self):
        raw = tiny_config()
        raw["regurgitative"]["arms"] = [
            {"name": "real", "kind": "proportion", "proportion": 0.0},
            {"name": "p0", "kind": "proportion", "proportion": 0.0},
        ]
        cfg = ExperimentConfig.from_dict(raw)
        report = run_experiment(cfg, seed=4)
        real = [(p.batch, p.bleu) for p in report.arm_curves["real"]]
        p0 = [(p.batch, p.bleu) for p in report.arm_curves["p0"]]
        assert real == p0
