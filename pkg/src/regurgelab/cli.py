"""Command-line front end.

Every subcommand is a thin wrapper over the library: load inputs, call one
pipeline function, print a small stable summary. Exit codes: 0 on success,
1 on a runtime failure (message on stderr), 2 on bad arguments.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__
from .corpus import load_parallel_corpus, save_corpus, tokenize
from .errors import RegurgelabError
from .experiment import (
    ExperimentConfig,
    RunReport,
    emit_report,
    prepare_data,
    run_baseline_curve,
    run_experiment,
)
from .metrics import BleuConfig, corpus_bleu
from .mitigation import (
    FeaturizerConfig,
    ScoredInstance,
    answer_entropy,
    build_schedule,
    featurize_pairs,
    load_linear_model,
    mix_corpora,
    proportion_mix,
    save_linear_model,
    save_schedule,
    train_bleu_regressor,
    train_detector,
)
from .model import (
    export_records_jsonl,
    generate_synthetic_corpus,
    load_model,
    save_model,
)
from .toylang import make_toy_corpus

DEFAULT_SEED = 1234


def _read_lines(path: str) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [line.rstrip("\n") for line in fh]


def _read_floats(path: str) -> list[float]:
    values = []
    for i, line in enumerate(_read_lines(path), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            values.append(float(line))
        except ValueError:
            raise ValueError(f"{path}:{i}: not a number: {line!r}")
    return values


def _parse_float_list(text: str) -> list[float]:
    return [float(part) for part in text.replace(",", " ").split()]


def _effective_seed(args: argparse.Namespace) -> int:
    return DEFAULT_SEED if args.seed is None else args.seed


# ---------------------------------------------------------------------------
# subcommand handlers


def _cmd_make_data(args: argparse.Namespace) -> int:
    corpus = make_toy_corpus(
        args.pairs, seed=_effective_seed(args), lexicon_size=args.lexicon,
        min_len=args.min_len, max_len=args.max_len, zipf_a=args.zipf_a)
    save_corpus(corpus, args.out)
    print(f"wrote {len(corpus)} pairs to {args.out}")
    return 0


def _cmd_train_baseline(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    seed = config.seed if args.seed is None else args.seed
    bundle = prepare_data(config, seed)
    result = run_baseline_curve(config, seed, bundle)
    for point in result.curve:
        print(f"baseline,{point.batch},{point.bleu!r}")
    if args.out:
        save_model(result.model, args.out,
                   extra_meta={"experiment": config.name, "seed": seed})
        print(f"saved model to {args.out}")
    return 0


def _cmd_generate(args: argparse.Namespace) -> int:
    model = load_model(args.model)
    sources = []
    skipped = 0
    for line in _read_lines(args.input):
        tokens = tokenize(line)
        if tokens:
            sources.append(tokens)
        else:
            skipped += 1
    if not sources:
        raise ValueError(f"no usable source lines in {args.input}")
    if skipped:
        print(f"skipped {skipped} empty line(s)", file=sys.stderr)
    corpus, records = generate_synthetic_corpus(
        model, sources, args.model_id, max_len=args.max_len,
        batch_size=args.batch_size)
    save_corpus(corpus, args.output)
    print(f"wrote {len(corpus)} pairs to {args.output}")
    if args.records:
        export_records_jsonl(records, args.records,
                             include_probs=args.include_probs)
        print(f"wrote generation records to {args.records}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    hyps = [tuple(line.split()) for line in _read_lines(args.hypotheses)]
    refs = [tuple(line.split()) for line in _read_lines(args.references)]
    report = corpus_bleu(hyps, refs, BleuConfig(max_n=args.max_n))
    if report.degenerate:
        print("warning: some n-gram order had zero matches", file=sys.stderr)
    print(f"BLEU {report.bleu!r}")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    if args.mode == "entropy":
        for i, line in enumerate(_read_lines(args.records)):
            if not line.strip():
                continue
            row = json.loads(line)
            if "entropy" in row:
                value = float(row["entropy"])
            elif "probs" in row:
                from .mitigation import translation_entropy
                value = translation_entropy(np.asarray(row["probs"]))
            else:
                raise ValueError(
                    f"{args.records}:{i + 1}: record has neither entropy nor probs")
            print(repr(value))
        return 0
    if args.mode == "answer-entropy":
        value = answer_entropy(_parse_float_list(args.start),
                               _parse_float_list(args.end))
        print(repr(value))
        return 0

    featurizer = FeaturizerConfig()
    if args.mode == "regressor-train":
        corpus, _ = load_parallel_corpus(args.data)
        scores = _read_floats(args.scores)
        if len(scores) != len(corpus):
            raise ValueError(
                f"{len(scores)} scores for {len(corpus)} pairs")
        features = featurize_pairs(corpus.pairs, featurizer)
        regressor, report = train_bleu_regressor(
            features, scores, l2=args.l2, seed=_effective_seed(args),
            config=featurizer)
        save_linear_model(regressor, args.out)
        print(f"rmse {report.rmse!r}")
        print(f"mae {report.mae!r}")
        print(f"saved model to {args.out}")
        return 0
    if args.mode == "regressor":
        model = load_linear_model(args.model)
        corpus, _ = load_parallel_corpus(args.data)
        for value in model.predict(featurize_pairs(corpus.pairs, featurizer)):
            print(repr(float(value)))
        return 0
    if args.mode == "detector-train":
        real, _ = load_parallel_corpus(args.real)
        generated, _ = load_parallel_corpus(args.generated)
        pairs = list(real.pairs) + list(generated.pairs)
        labels = [0] * len(real) + [1] * len(generated)
        features = featurize_pairs(pairs, featurizer)
        detector, report = train_detector(
            features, labels, method=args.method, seed=_effective_seed(args),
            config=featurizer)
        save_linear_model(detector, args.out)
        print(f"accuracy {report.accuracy!r}")
        print(f"auc {report.auc!r}")
        print(f"saved model to {args.out}")
        return 0
    if args.mode == "detector":
        model = load_linear_model(args.model)
        corpus, _ = load_parallel_corpus(args.data)
        for value in model.predict_proba(featurize_pairs(corpus.pairs, featurizer)):
            print(repr(float(value)))
        return 0
    raise ValueError(f"unknown score mode {args.mode!r}")


def _cmd_schedule(args: argparse.Namespace) -> int:
    seed = _effective_seed(args)
    if args.mode == "rank":
        scores = _read_floats(args.scores)
        instances = [ScoredInstance(index=i, score=s)
                     for i, s in enumerate(scores)]
        schedule = build_schedule(instances, args.batch_size,
                                  num_batches=args.num_batches,
                                  space_size=len(scores))
    elif args.mode == "proportion":
        schedule = proportion_mix(args.synthetic, args.real, args.proportion,
                                  args.batch_size, seed=seed,
                                  num_batches=args.num_batches)
    elif args.mode == "mix":
        schedule = mix_corpora(args.first, args.second, args.batch_size,
                               strategy=args.strategy, seed=seed,
                               num_batches=args.num_batches)
    else:
        raise ValueError(f"unknown schedule mode {args.mode!r}")
    save_schedule(schedule, args.out)
    print(f"wrote {schedule.num_batches} batches to {args.out}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = ExperimentConfig.from_file(args.config)
    report = run_experiment(config, seed=args.seed)
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    paths = emit_report(report, args.out, basename=args.basename,
                        formats=formats)
    for name, points in report.arm_curves.items():
        print(f"arm {name} final BLEU {points[-1].bleu!r}")
    if report.partial:
        for key, message in report.failures.items():
            print(f"partial: {key}: {message}", file=sys.stderr)
    for fmt in formats:
        print(f"wrote {paths[fmt]}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    with open(args.input, encoding="utf-8") as fh:
        report = RunReport.from_dict(json.load(fh))
    formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
    paths = emit_report(report, args.out, basename=args.basename,
                        formats=formats)
    for fmt in formats:
        print(f"wrote {paths[fmt]}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regurgelab",
        description="Train translators on real or self-generated data and "
                    "measure what repeated self-training does to quality.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    # --seed is declared both globally and per subcommand so it is accepted
    # on either side of the command word; the subcommand default must be
    # SUPPRESS or it would clobber a value parsed before the command.
    common = argparse.ArgumentParser(add_help=False)
    for target, default in ((parser, None), (common, argparse.SUPPRESS)):
        target.add_argument(
            "--seed", type=int, default=default, metavar="N",
            help="seed for stochastic steps "
                 "(default: 1234; run/train-baseline: the config's seed)")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("make-data", help="write a synthetic parallel corpus",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--out", required=True, help="output TSV path")
    p.add_argument("--pairs", type=int, default=20000)
    p.add_argument("--lexicon", type=int, default=110)
    p.add_argument("--min-len", type=int, default=3)
    p.add_argument("--max-len", type=int, default=9)
    p.add_argument("--zipf-a", type=float, default=1.3)
    p.set_defaults(func=_cmd_make_data)

    p = sub.add_parser("train-baseline",
                       help="train the baseline model from a config",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", help="checkpoint path for the final model")
    p.set_defaults(func=_cmd_train_baseline)

    p = sub.add_parser("generate",
                       help="translate sources with a saved model",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--model", required=True, help="model checkpoint")
    p.add_argument("--input", required=True,
                   help="text file, one source sentence per line")
    p.add_argument("--output", required=True, help="output TSV path")
    p.add_argument("--records", help="optional JSONL of generation records")
    p.add_argument("--include-probs", action="store_true",
                   help="embed per-step probability rows in the records")
    p.add_argument("--model-id", default="cli",
                   help="provenance tag for the generated pairs")
    p.add_argument("--max-len", type=int, default=None,
                   help="decode length cap (default: model limit)")
    p.add_argument("--batch-size", type=int, default=64)
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("evaluate", help="corpus BLEU of hypotheses vs references",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--hypotheses", required=True,
                   help="text file, one tokenized hypothesis per line")
    p.add_argument("--references", required=True,
                   help="text file, one tokenized reference per line")
    p.add_argument("--max-n", type=int, default=4)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("score", help="quality scores, regressors, detectors",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("mode", choices=["entropy", "answer-entropy",
                                    "regressor-train", "regressor",
                                    "detector-train", "detector"])
    p.add_argument("--records", help="JSONL generation records (entropy)")
    p.add_argument("--start", help="start probabilities, comma separated "
                                   "(answer-entropy)")
    p.add_argument("--end", help="end probabilities (answer-entropy)")
    p.add_argument("--data", help="TSV pairs to score or train on")
    p.add_argument("--scores", help="one target score per line (regressor-train)")
    p.add_argument("--real", help="TSV of real pairs (detector-train)")
    p.add_argument("--generated", help="TSV of generated pairs (detector-train)")
    p.add_argument("--model", help="saved regressor/detector JSON")
    p.add_argument("--out", help="where to save a trained model")
    p.add_argument("--method", choices=["logistic", "lda"], default="logistic")
    p.add_argument("--l2", type=float, default=1.0)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("schedule", help="build and save a batch schedule",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("mode", choices=["rank", "proportion", "mix"])
    p.add_argument("--out", required=True, help="output schedule JSON")
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--num-batches", type=int, default=None)
    p.add_argument("--scores", help="one score per line (rank)")
    p.add_argument("--synthetic", type=int, help="synthetic pool size (proportion)")
    p.add_argument("--real", type=int, help="real pool size (proportion)")
    p.add_argument("--proportion", type=float, help="synthetic share (proportion)")
    p.add_argument("--first", type=int, help="first corpus size (mix)")
    p.add_argument("--second", type=int, help="second corpus size (mix)")
    p.add_argument("--strategy", choices=["halfhalf", "union"],
                   default="halfhalf")
    p.set_defaults(func=_cmd_schedule)

    p = sub.add_parser("run", help="run a full experiment from a config",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--config", required=True, help="experiment config JSON")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--basename", default=None,
                   help="report file stem (default: experiment name)")
    p.add_argument("--formats", default="csv,json,svg",
                   help="comma separated report formats")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("report", help="re-render report files from a run JSON",
                       parents=[common],
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    p.add_argument("--input", required=True, help="report JSON from a run")
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--basename", default=None)
    p.add_argument("--formats", default="csv,svg")
    p.set_defaults(func=_cmd_report)

    return parser


_REQUIRED_BY_MODE = {
    "entropy": ("records",),
    "answer-entropy": ("start", "end"),
    "regressor-train": ("data", "scores", "out"),
    "regressor": ("model", "data"),
    "detector-train": ("real", "generated", "out"),
    "detector": ("model", "data"),
    "rank": ("scores",),
    "proportion": ("synthetic", "real", "proportion"),
    "mix": ("first", "second"),
}


def _check_mode_args(parser: argparse.ArgumentParser,
                     args: argparse.Namespace) -> None:
    mode = getattr(args, "mode", None)
    for name in _REQUIRED_BY_MODE.get(mode, ()):
        if getattr(args, name, None) is None:
            parser.error(f"{args.command} {mode} requires --{name}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _check_mode_args(parser, args)
    try:
        return args.func(args)
    except (RegurgelabError, OSError, ValueError, KeyError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
