"""End-to-end retraining studies: baselines, data arms, and report emission.

An experiment trains a baseline translator on real pairs, then continues
training under several data arms that draw batches from a shared pool.
An arm's batches can contain the pool pairs themselves, model rewrites of
the pool sources, or a fixed mixture of the two; every arm is evaluated
after each batch so the curves are directly comparable.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

try:
    import jsonschema
except ImportError:  # pragma: no cover
    jsonschema = None

from . import __version__
from .autodiff import AdamState
from .corpus import Corpus, SentencePair, Vocab, build_vocab, load_parallel_corpus, split_corpus
from .errors import ConfigError, SizeError
from .metrics import BleuConfig, corpus_bleu
from .mitigation import Schedule, mix_corpora, proportion_mix
from .model import (
    TransformerConfig,
    TranslationModel,
    generate_synthetic_corpus,
    train_batches,
    translate,
)
from .toylang import make_toy_corpus

# Fixed channel tags keep every rng stream in the run distinct while staying
# reproducible from the single run seed.
_CH_SPLIT = 11
_CH_MODEL = 12
_CH_BASELINE = 13
_CH_SCHEDULE = 14
_CH_ARM_TRAIN = 15

SYNTHETIC_MODEL_ID = "baseline"


def derive_seed(*parts: int) -> int:
    """Fold an integer key path into a fresh 31-bit seed."""
    rng = np.random.default_rng(list(int(p) for p in parts))
    return int(rng.integers(0, 2**31 - 1))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DataConfig:
    kind: str
    path: str | None
    toy: dict
    splits: dict
    split_seed: int | None
    vocab_max_size: int | None


@dataclass(frozen=True)
class TrainingConfig:
    batch_size: int
    learning_rate: float
    epochs_per_batch: int
    reset_adam_per_batch: bool


@dataclass(frozen=True)
class BaselineConfig:
    increments: tuple[int, ...]
    epochs: int
    checkpoints: dict


@dataclass(frozen=True)
class ArmSpec:
    name: str
    kind: str
    proportion: float | None = None


@dataclass(frozen=True)
class RegurgitativeConfig:
    num_batches: int
    batch_size: int | dict
    start_from: str
    generator: str
    arms: tuple[ArmSpec, ...]


@dataclass(frozen=True)
class EvaluationConfig:
    bleu_max_n: int
    decode_batch_size: int
    max_decode_len: int | None


def _schema() -> dict:
    text = resources.files("regurgelab.data").joinpath(
        "experiment_config.schema.json").read_text(encoding="utf-8")
    return json.loads(text)


def _merged(defaults: dict, override: dict) -> dict:
    out = dict(defaults)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merged(out[key], value)
        else:
            out[key] = value
    return out


_DEFAULTS = {
    "seed": 0,
    "max_seconds": 1800.0,
    "data": {
        "path": None,
        "toy": {"n_pairs": 20000, "lexicon_size": 110, "min_len": 3,
                "max_len": 9, "zipf_a": 1.3, "corpus_seed": 0},
        "splits": {"pool": 0, "heldout": 0},
        "split_seed": None,
        "vocab_max_size": None,
    },
    "model": {"num_layers": 2, "num_heads": 2, "d_model": 32, "d_ff": 64,
              "max_sequence_length": 16, "dropout_rate": 0.0},
    "training": {"batch_size": 64, "learning_rate": 0.002,
                 "epochs_per_batch": 2, "reset_adam_per_batch": False},
    "baseline": {},
    "regurgitative": {"start_from": "low", "generator": "low"},
    "evaluation": {"bleu_max_n": 4, "decode_batch_size": 64,
                   "max_decode_len": None},
    "report": {"record_timing": False},
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated, fully defaulted description of one experiment."""

    name: str
    seed: int
    max_seconds: float
    data: DataConfig
    model: dict
    training: TrainingConfig
    baseline: BaselineConfig
    regurgitative: RegurgitativeConfig
    evaluation: EvaluationConfig
    record_timing: bool
    resolved_raw: dict = field(repr=False)

    @staticmethod
    def from_dict(raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError("experiment config must be a JSON object")
        if jsonschema is not None:
            validator = jsonschema.Draft202012Validator(_schema())
            errors = sorted(validator.iter_errors(raw), key=lambda e: list(e.path))
            if errors:
                first = errors[0]
                where = "/".join(str(p) for p in first.path) or "<root>"
                raise ConfigError(f"config invalid at {where}: {first.message}")
        merged = _merged(_DEFAULTS, raw)

        data_raw = merged["data"]
        if data_raw["kind"] == "tsv" and not data_raw.get("path"):
            raise ConfigError("data.kind 'tsv' requires data.path")
        splits = dict(data_raw["splits"])
        data = DataConfig(
            kind=data_raw["kind"],
            path=data_raw.get("path"),
            toy=dict(data_raw["toy"]),
            splits=splits,
            split_seed=data_raw.get("split_seed"),
            vocab_max_size=data_raw.get("vocab_max_size"),
        )

        training = TrainingConfig(**merged["training"])

        base_raw = dict(merged["baseline"])
        increments = tuple(base_raw.get("increments") or (splits["train"],))
        if sum(increments) > splits["train"]:
            raise ConfigError(
                f"baseline increments use {sum(increments)} pairs but the "
                f"train split has {splits['train']}")
        checkpoints = dict(base_raw.get("checkpoints") or {"low": len(increments)})
        for label, idx in checkpoints.items():
            if not 0 <= idx <= len(increments):
                raise ConfigError(
                    f"checkpoint {label!r} index {idx} outside curve "
                    f"0..{len(increments)}")
        baseline = BaselineConfig(
            increments=increments,
            epochs=base_raw.get("epochs") or training.epochs_per_batch,
            checkpoints=checkpoints,
        )

        reg_raw = merged["regurgitative"]
        arms = []
        seen = set()
        for arm_raw in reg_raw["arms"]:
            spec = ArmSpec(name=arm_raw["name"], kind=arm_raw["kind"],
                           proportion=arm_raw.get("proportion"))
            if spec.kind == "proportion" and spec.proportion is None:
                raise ConfigError(f"arm {spec.name!r} needs a proportion")
            if spec.name in seen:
                raise ConfigError(f"duplicate arm name {spec.name!r}")
            seen.add(spec.name)
            arms.append(spec)
        for role in ("start_from", "generator"):
            label = reg_raw[role]
            if label not in checkpoints:
                raise ConfigError(
                    f"regurgitative.{role} {label!r} is not a baseline checkpoint")
        regurgitative = RegurgitativeConfig(
            num_batches=reg_raw["num_batches"],
            batch_size=reg_raw["batch_size"],
            start_from=reg_raw["start_from"],
            generator=reg_raw["generator"],
            arms=tuple(arms),
        )

        evaluation = EvaluationConfig(**merged["evaluation"])

        return ExperimentConfig(
            name=merged["name"],
            seed=merged["seed"],
            max_seconds=float(merged["max_seconds"]),
            data=data,
            model=dict(merged["model"]),
            training=training,
            baseline=baseline,
            regurgitative=regurgitative,
            evaluation=evaluation,
            record_timing=bool(merged["report"]["record_timing"]),
            resolved_raw=merged,
        )

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            raw = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return ExperimentConfig.from_dict(raw)

    def resolved_batch_size(self) -> int:
        spec = self.regurgitative.batch_size
        if isinstance(spec, int):
            return spec
        pct = float(spec["percent_of_baseline"])
        return int(math.ceil(pct / 100.0 * sum(self.baseline.increments)))

    def checksum(self) -> str:
        blob = json.dumps(self.resolved_raw, sort_keys=True,
                          separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


# ---------------------------------------------------------------------------
# data preparation


@dataclass(frozen=True)
class DataBundle:
    train: Corpus
    pool: Corpus
    eval: Corpus
    heldout: Corpus
    vocab: Vocab


def _corpus_checksum(pairs: Sequence[SentencePair]) -> str:
    digest = hashlib.sha256()
    for pair in pairs:
        digest.update(" ".join(pair.source).encode("utf-8"))
        digest.update(b"\t")
        digest.update(" ".join(pair.target).encode("utf-8"))
        digest.update(b"\n")
    return digest.hexdigest()


def prepare_data(config: ExperimentConfig, seed: int) -> DataBundle:
    """Load or synthesize the corpus and carve out the four working splits."""
    data = config.data
    if data.kind == "toy":
        toy = data.toy
        corpus = make_toy_corpus(
            toy["n_pairs"], seed=toy["corpus_seed"],
            lexicon_size=toy["lexicon_size"], min_len=toy["min_len"],
            max_len=toy["max_len"], zipf_a=toy["zipf_a"])
    else:
        corpus, _skipped = load_parallel_corpus(data.path, corpus_id="tsv")
    sizes = [data.splits["train"], data.splits["pool"],
             data.splits["eval"], data.splits["heldout"]]
    split_seed = data.split_seed
    if split_seed is None:
        split_seed = derive_seed(seed, _CH_SPLIT)
    train, pool, eval_split, heldout = split_corpus(corpus, split_seed, sizes)

    max_size = data.vocab_max_size
    if max_size is None:
        content = {tok for pair in corpus.pairs for tok in pair.source + pair.target}
        max_size = 5 + len(content)
    vocab = build_vocab(corpus, max_size=max_size)
    return DataBundle(train=train, pool=pool, eval=eval_split,
                      heldout=heldout, vocab=vocab)


# ---------------------------------------------------------------------------
# training stages


@dataclass(frozen=True)
class CurvePoint:
    arm: str
    batch: int
    bleu: float
    seconds: float

    def to_dict(self, record_timing: bool) -> dict:
        return {
            "arm": self.arm,
            "batch": self.batch,
            "bleu": float(self.bleu),
            "seconds": float(self.seconds) if record_timing else 0.0,
        }


@dataclass
class BaselineResult:
    curve: list[CurvePoint]
    checkpoints: dict[str, dict[str, np.ndarray]]
    checkpoint_bleu: dict[str, float]
    model: TranslationModel


def _steps_for(num_pairs: int, batch_size: int, epochs: int) -> int:
    return int(math.ceil(num_pairs / batch_size)) * epochs


def evaluate_model(model: TranslationModel, pairs: Sequence[SentencePair],
                   evaluation: EvaluationConfig) -> float:
    """Greedy-decode the sources and score against the paired targets."""
    records = translate(model, [p.source for p in pairs],
                        max_len=evaluation.max_decode_len,
                        batch_size=evaluation.decode_batch_size)
    report = corpus_bleu([r.tokens for r in records],
                         [p.target for p in pairs],
                         BleuConfig(max_n=evaluation.bleu_max_n))
    return float(report.bleu)


def _snapshot(model: TranslationModel) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in model.params.items()}


def restore_model(config: TransformerConfig, vocab: Vocab,
                         snapshot: dict[str, np.ndarray]) -> TranslationModel:
    model = TranslationModel(config, vocab)
    for name, param in model.params.items():
        param.data[...] = snapshot[name]
    return model


def run_baseline_curve(config: ExperimentConfig, seed: int,
                       bundle: DataBundle,
                       deadline: float | None = None) -> BaselineResult:
    """Train on successive real increments, snapshotting labelled checkpoints."""
    model_cfg = TransformerConfig(seed=derive_seed(seed, _CH_MODEL), **config.model)
    model = TranslationModel(model_cfg, bundle.vocab)
    adam = AdamState(model.param_list, lr=config.training.learning_rate)

    curve: list[CurvePoint] = []
    checkpoints: dict[str, dict[str, np.ndarray]] = {}
    checkpoint_bleu: dict[str, float] = {}
    by_index: dict[int, list[str]] = {}
    for label, idx in config.baseline.checkpoints.items():
        by_index.setdefault(idx, []).append(label)

    def mark(point_index: int, bleu: float) -> None:
        for label in by_index.get(point_index, ()):
            checkpoints[label] = _snapshot(model)
            checkpoint_bleu[label] = bleu

    t0 = time.perf_counter()
    bleu = evaluate_model(model, bundle.eval.pairs, config.evaluation)
    curve.append(CurvePoint("baseline", 0, bleu, time.perf_counter() - t0))
    mark(0, bleu)

    offset = 0
    for i, size in enumerate(config.baseline.increments, start=1):
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeoutError(
                f"wall-clock budget exhausted before baseline increment {i}")
        t0 = time.perf_counter()
        chunk = Corpus(bundle.train.pairs[offset:offset + size], id=f"train:{i}")
        offset += size
        steps = _steps_for(len(chunk), config.training.batch_size,
                           config.baseline.epochs)
        train_batches(model, chunk, config.training.batch_size, steps, adam,
                      seed=derive_seed(seed, _CH_BASELINE, i))
        bleu = evaluate_model(model, bundle.eval.pairs, config.evaluation)
        curve.append(CurvePoint("baseline", i, bleu, time.perf_counter() - t0))
        mark(i, bleu)
    return BaselineResult(curve=curve, checkpoints=checkpoints,
                          checkpoint_bleu=checkpoint_bleu, model=model)


def build_arm_schedule(arm: ArmSpec, pool_size: int, batch_size: int,
                       num_batches: int, seed: int) -> Schedule:
    """Schedule an arm's draws over the pool.

    Both index spaces address the same pool: a "synthetic" index means the
    pair's source is re-targeted by the generator model, a "real" index means
    the pool pair is used verbatim. The schedule seed is shared by all arms
    so arms differ only in what they draw, never in how they draw it.
    """
    if arm.kind == "proportion":
        return proportion_mix(pool_size, pool_size, arm.proportion,
                              batch_size, seed=seed, num_batches=num_batches)
    if arm.kind == "union":
        return mix_corpora(pool_size, pool_size, batch_size, strategy="union",
                           seed=seed, num_batches=num_batches,
                           labels=("synthetic", "real"))
    raise ConfigError(f"unknown arm kind {arm.kind!r}")


def materialize_batch(schedule: Schedule, batch_index: int,
                      pool: Sequence[SentencePair],
                      generator: TranslationModel,
                      evaluation: EvaluationConfig) -> list[SentencePair]:
    """Resolve one schedule batch into sentence pairs, generating on demand.

    Synthetic targets are produced lazily here, batch by batch, so the
    generator's outputs never need to be stored for the whole pool.
    """
    out: list[SentencePair | None] = []
    syn_sources: list[Sequence[str]] = []
    syn_positions: list[int] = []
    for pos, index in enumerate(schedule.batches[batch_index]):
        label, local = schedule.resolve(index)
        if label == "synthetic":
            syn_sources.append(pool[local].source)
            syn_positions.append(pos)
            out.append(None)
        else:
            out.append(pool[local])
    if syn_sources:
        corpus, _records = generate_synthetic_corpus(
            generator, syn_sources, SYNTHETIC_MODEL_ID,
            max_len=evaluation.max_decode_len,
            batch_size=evaluation.decode_batch_size)
        for pos, pair in zip(syn_positions, corpus.pairs):
            out[pos] = pair
    return out  # type: ignore[return-value]


def run_arm(config: ExperimentConfig, seed: int, bundle: DataBundle,
            arm: ArmSpec, schedule: Schedule,
            start: dict[str, np.ndarray], start_bleu: float,
            generator: TranslationModel,
            deadline: float | None = None) -> list[CurvePoint]:
    """Continue training from the starting snapshot along one arm's schedule."""
    model_cfg = TransformerConfig(seed=derive_seed(seed, _CH_MODEL), **config.model)
    model = restore_model(model_cfg, bundle.vocab, start)
    adam = AdamState(model.param_list, lr=config.training.learning_rate)
    curve = [CurvePoint(arm.name, 0, start_bleu, 0.0)]
    for b in range(schedule.num_batches):
        if deadline is not None and time.perf_counter() > deadline:
            raise TimeoutError(
                f"wall-clock budget exhausted before batch {b + 1} of arm {arm.name}")
        t0 = time.perf_counter()
        pairs = materialize_batch(schedule, b, bundle.pool.pairs, generator,
                                  config.evaluation)
        batch_corpus = Corpus(pairs, id=f"{arm.name}:{b}")
        steps = _steps_for(len(pairs), config.training.batch_size,
                           config.training.epochs_per_batch)
        if config.training.reset_adam_per_batch:
            adam = AdamState(model.param_list, lr=config.training.learning_rate)
        # The training seed depends only on the run seed and batch index, so
        # arms that happen to draw identical data produce identical models.
        train_batches(model, batch_corpus, config.training.batch_size, steps,
                      adam, seed=derive_seed(seed, _CH_ARM_TRAIN, b))
        bleu = evaluate_model(model, bundle.eval.pairs, config.evaluation)
        curve.append(CurvePoint(arm.name, b + 1, bleu, time.perf_counter() - t0))
    return curve


# ---------------------------------------------------------------------------
# full run and reporting


@dataclass
class RunReport:
    """Everything a finished (or aborted) run wants to say about itself."""

    name: str
    seed: int
    package_version: str
    config_checksum: str
    eval_checksum: str
    resolved: dict
    baseline_curve: list[CurvePoint]
    arm_curves: dict[str, list[CurvePoint]]
    schedules: dict[str, dict]
    partial: bool
    failures: dict[str, str]
    record_timing: bool

    def to_dict(self) -> dict:
        rt = self.record_timing
        return {
            "name": self.name,
            "seed": self.seed,
            "package_version": self.package_version,
            "config_checksum": self.config_checksum,
            "eval_checksum": self.eval_checksum,
            "resolved": self.resolved,
            "baseline_curve": [p.to_dict(rt) for p in self.baseline_curve],
            "arms": {name: [p.to_dict(rt) for p in pts]
                     for name, pts in self.arm_curves.items()},
            "schedules": self.schedules,
            "partial": self.partial,
            "failures": self.failures,
            "record_timing": rt,
        }

    @staticmethod
    def from_dict(data: dict) -> "RunReport":
        def points(rows):
            return [CurvePoint(r["arm"], r["batch"], r["bleu"], r["seconds"])
                    for r in rows]

        try:
            return RunReport(
                name=data["name"],
                seed=data["seed"],
                package_version=data["package_version"],
                config_checksum=data["config_checksum"],
                eval_checksum=data["eval_checksum"],
                resolved=data["resolved"],
                baseline_curve=points(data["baseline_curve"]),
                arm_curves={name: points(rows)
                            for name, rows in data["arms"].items()},
                schedules=data["schedules"],
                partial=data["partial"],
                failures=data["failures"],
                record_timing=data["record_timing"],
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed run report: {exc}") from exc


def run_experiment(config: ExperimentConfig, seed: int | None = None) -> RunReport:
    """Run baseline plus every configured arm and collect the curves.

    A failing arm is recorded and skipped so the survivors still report;
    exhausting the wall-clock budget aborts the remainder the same way.
    Either case marks the report as partial.
    """
    effective_seed = config.seed if seed is None else int(seed)
    started = time.perf_counter()
    deadline = started + config.max_seconds

    bundle = prepare_data(config, effective_seed)
    batch_size = config.resolved_batch_size()
    reg = config.regurgitative

    failures: dict[str, str] = {}
    partial = False
    baseline_curve: list[CurvePoint] = []
    arm_curves: dict[str, list[CurvePoint]] = {}
    schedules: dict[str, dict] = {}
    resolved = {
        "batch_size": batch_size,
        "num_batches": reg.num_batches,
        "baseline_pairs": sum(config.baseline.increments),
        "pool_pairs": len(bundle.pool),
        "eval_pairs": len(bundle.eval),
        "vocab_size": len(bundle.vocab),
    }

    try:
        baseline = run_baseline_curve(config, effective_seed, bundle, deadline)
        baseline_curve = baseline.curve
        resolved["num_parameters"] = baseline.model.num_parameters()
    except Exception as exc:
        failures["baseline"] = f"{type(exc).__name__}: {exc}"
        partial = True
        baseline = None

    if baseline is not None:
        if len(bundle.pool) == 0:
            failures["pool"] = "SizeError: the pool split is empty"
            partial = True
        else:
            start = baseline.checkpoints[reg.start_from]
            start_bleu = baseline.checkpoint_bleu[reg.start_from]
            model_cfg = TransformerConfig(
                seed=derive_seed(effective_seed, _CH_MODEL), **config.model)
            generator = restore_model(
                model_cfg, bundle.vocab, baseline.checkpoints[reg.generator])
            schedule_seed = derive_seed(effective_seed, _CH_SCHEDULE)
            for arm in reg.arms:
                try:
                    schedule = build_arm_schedule(
                        arm, len(bundle.pool), batch_size,
                        reg.num_batches, schedule_seed)
                    schedules[arm.name] = schedule.to_dict()
                    arm_curves[arm.name] = run_arm(
                        config, effective_seed, bundle, arm, schedule,
                        start, start_bleu, generator, deadline)
                except TimeoutError as exc:
                    failures[arm.name] = f"TimeoutError: {exc}"
                    partial = True
                    break
                except Exception as exc:
                    failures[arm.name] = f"{type(exc).__name__}: {exc}"
                    partial = True

    return RunReport(
        name=config.name,
        seed=effective_seed,
        package_version=__version__,
        config_checksum=config.checksum(),
        eval_checksum=_corpus_checksum(bundle.eval.pairs),
        resolved=resolved,
        baseline_curve=baseline_curve,
        arm_curves=arm_curves,
        schedules=schedules,
        partial=partial,
        failures=failures,
        record_timing=config.record_timing,
    )


# --- emission ---------------------------------------------------------------

_SVG_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def report_csv(report: RunReport) -> str:
    rows = ["arm,batch,bleu,seconds"]
    rt = report.record_timing
    for point in report.baseline_curve:
        rows.append(_csv_row(point, rt))
    for points in report.arm_curves.values():
        for point in points:
            rows.append(_csv_row(point, rt))
    return "\n".join(rows) + "\n"


def _csv_row(point: CurvePoint, record_timing: bool) -> str:
    seconds = float(point.seconds) if record_timing else 0.0
    return f"{point.arm},{point.batch},{point.bleu!r},{seconds!r}"


def report_json(report: RunReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def report_svg(report: RunReport) -> str:
    """A fixed-size line chart, one polyline per curve, no external assets."""
    width, height = 640.0, 400.0
    left, right, top, bottom = 56.0, 16.0, 40.0, 48.0
    plot_w, plot_h = width - left - right, height - top - bottom

    series: list[tuple[str, list[CurvePoint]]] = []
    if report.baseline_curve:
        series.append(("baseline", report.baseline_curve))
    series.extend(report.arm_curves.items())

    max_batch = max((p.batch for _, pts in series for p in pts), default=1) or 1
    max_bleu = max((p.bleu for _, pts in series for p in pts), default=0.0)
    y_top = max(0.1, max_bleu * 1.1)

    def sx(b: float) -> float:
        return left + (b / max_batch) * plot_w

    def sy(v: float) -> float:
        return top + (1.0 - v / y_top) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" '
        f'height="{height:.0f}" viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect width="{width:.0f}" height="{height:.0f}" fill="white"/>',
        f'<text x="{left:.1f}" y="22" font-family="sans-serif" font-size="14">'
        f'{_xml_escape(report.name)} (seed {report.seed})</text>',
    ]
    # axes and ticks
    parts.append(f'<line x1="{left:.1f}" y1="{top + plot_h:.1f}" '
                 f'x2="{left + plot_w:.1f}" y2="{top + plot_h:.1f}" '
                 f'stroke="black" stroke-width="1"/>')
    parts.append(f'<line x1="{left:.1f}" y1="{top:.1f}" x2="{left:.1f}" '
                 f'y2="{top + plot_h:.1f}" stroke="black" stroke-width="1"/>')
    x_step = max(1, int(math.ceil(max_batch / 10)))
    for b in range(0, max_batch + 1, x_step):
        x = sx(b)
        parts.append(f'<line x1="{x:.1f}" y1="{top + plot_h:.1f}" x2="{x:.1f}" '
                     f'y2="{top + plot_h + 4:.1f}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{top + plot_h + 18:.1f}" '
                     f'font-family="sans-serif" font-size="10" '
                     f'text-anchor="middle">{b}</text>')
    for i in range(5):
        v = y_top * i / 4
        y = sy(v)
        parts.append(f'<line x1="{left - 4:.1f}" y1="{y:.1f}" x2="{left:.1f}" '
                     f'y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8:.1f}" y="{y + 3:.1f}" '
                     f'font-family="sans-serif" font-size="10" '
                     f'text-anchor="end">{v:.2f}</text>')
    parts.append(f'<text x="{left + plot_w / 2:.1f}" y="{height - 8:.1f}" '
                 f'font-family="sans-serif" font-size="11" '
                 f'text-anchor="middle">training batch</text>')
    parts.append(f'<text x="14" y="{top + plot_h / 2:.1f}" '
                 f'font-family="sans-serif" font-size="11" text-anchor="middle" '
                 f'transform="rotate(-90 14 {top + plot_h / 2:.1f})">BLEU</text>')
    # curves and legend
    for i, (label, points) in enumerate(series):
        color = _SVG_PALETTE[i % len(_SVG_PALETTE)]
        coords = " ".join(f"{sx(p.batch):.2f},{sy(p.bleu):.2f}" for p in points)
        parts.append(f'<polyline points="{coords}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        for p in points:
            parts.append(f'<circle cx="{sx(p.batch):.2f}" cy="{sy(p.bleu):.2f}" '
                         f'r="2" fill="{color}"/>')
        lx = left + plot_w - 120
        ly = top + 10 + 16 * i
        parts.append(f'<rect x="{lx:.1f}" y="{ly - 8:.1f}" width="12" '
                     f'height="3" fill="{color}"/>')
        parts.append(f'<text x="{lx + 18:.1f}" y="{ly - 3:.1f}" '
                     f'font-family="sans-serif" font-size="11">'
                     f'{_xml_escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _xml_escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def emit_report(report: RunReport, out_dir: str | Path,
                basename: str | None = None,
                formats: Sequence[str] = ("csv", "json", "svg")) -> dict[str, Path]:
    """Write the report files, returning {format: path}. Output is
    byte-deterministic for a given report unless timing was recorded."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = basename or report.name
    renderers = {"csv": report_csv, "json": report_json, "svg": report_svg}
    paths: dict[str, Path] = {}
    for fmt in formats:
        if fmt not in renderers:
            raise ConfigError(f"unknown report format {fmt!r}")
        path = out / f"{base}.{fmt}"
        path.write_text(renderers[fmt](report), encoding="utf-8", newline="\n")
        paths[fmt] = path
    return paths
