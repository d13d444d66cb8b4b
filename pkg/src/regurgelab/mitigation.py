"""Scoring and scheduling tools for training on machine-generated data.

Three families of mitigations:

* quality scoring: per-generation entropy, and a ridge regressor that
  predicts sentence quality from hashed surface features;
* provenance detection: logistic-regression and linear-discriminant
  classifiers that separate real from generated pairs;
* data scheduling: rank-based batch schedules, half-and-half or union
  mixtures of two corpora, and proportioned synthetic/real mixtures.

Schedules are index plans over labelled corpus segments; the experiment
runner materializes them into actual training batches.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    ConfigError,
    DegenerateInputError,
    EmptyClassError,
    EmptyInputError,
    SingularMatrixError,
    SizeError,
)

Array = np.ndarray


def translation_entropy(generation) -> float:
    """Mean per-step entropy (natural log) of a generation's distributions.

    Accepts a generation record or a raw [T, V] array of probability rows.
    Zero probabilities contribute nothing (0 ln 0 = 0).
    """
    rows = np.asarray(getattr(generation, "prob_rows", generation), dtype=np.float64)
    if rows.ndim != 2 or rows.shape[0] == 0 or rows.shape[1] == 0:
        raise DegenerateInputError(f"need a non-empty [T, V] array, got shape {rows.shape}")
    if rows.min() < -1e-12 or np.abs(rows.sum(axis=-1) - 1.0).max() > 1e-6:
        raise ConfigError("rows must be probability distributions")
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(rows > 0.0, rows * np.log(rows), 0.0)
    return float(-plogp.sum(axis=-1).mean())


def answer_entropy(start_probs: Sequence[float], end_probs: Sequence[float]) -> float:
    """Entropy of the answer distribution induced by span boundary scores.

    Each candidate answer's probability is proportional to the product of
    its start and end probabilities; the products are normalized over the
    candidate set before the entropy is taken.
    """
    s = np.asarray(start_probs, dtype=np.float64)
    e = np.asarray(end_probs, dtype=np.float64)
    if s.shape != e.shape or s.ndim != 1 or s.size == 0:
        raise ConfigError(f"need matching 1-d score arrays, got {s.shape} and {e.shape}")
    if s.min() < 0 or e.min() < 0:
        raise ConfigError("boundary scores must be non-negative")
    products = s * e
    z = products.sum()
    if z <= 0.0:
        raise DegenerateInputError("all candidate answers have zero probability")
    p = products / z
    with np.errstate(divide="ignore", invalid="ignore"):
        plogp = np.where(p > 0.0, p * np.log(p), 0.0)
    return float(-plogp.sum())


@dataclass(frozen=True)
class FeaturizerConfig:
    """Hashed surface features: four count blocks (source words, source
    character trigrams, target words, target character trigrams) plus three
    length features. Hashing is crc32, stable across runs and platforms."""

    buckets_per_block: int = 64
    word_ngrams: tuple[int, ...] = (1, 2)
    char_ngram: int = 3

    def __post_init__(self):
        if self.buckets_per_block < 1 or self.char_ngram < 1 or not self.word_ngrams:
            raise ConfigError("featurizer sizes must be positive")
        object.__setattr__(self, "word_ngrams", tuple(self.word_ngrams))

    @property
    def dim(self) -> int:
        return 4 * self.buckets_per_block + 3

    def to_dict(self) -> dict:
        return {
            "buckets_per_block": self.buckets_per_block,
            "word_ngrams": list(self.word_ngrams),
            "char_ngram": self.char_ngram,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeaturizerConfig":
        return cls(
            buckets_per_block=d["buckets_per_block"],
            word_ngrams=tuple(d["word_ngrams"]),
            char_ngram=d["char_ngram"],
        )


def _bucket(key: str, buckets: int) -> int:
    return zlib.crc32(key.encode("utf-8")) % buckets


def _word_block(tokens: Sequence[str], config: FeaturizerConfig) -> Array:
    block = np.zeros(config.buckets_per_block, dtype=np.float64)
    for n in config.word_ngrams:
        for i in range(len(tokens) - n + 1):
            key = f"w{n}:" + "\x1f".join(tokens[i: i + n])
            block[_bucket(key, config.buckets_per_block)] += 1.0
    return block


def _char_block(tokens: Sequence[str], config: FeaturizerConfig) -> Array:
    block = np.zeros(config.buckets_per_block, dtype=np.float64)
    text = " ".join(tokens)
    n = config.char_ngram
    for i in range(len(text) - n + 1):
        block[_bucket(f"c{n}:" + text[i: i + n], config.buckets_per_block)] += 1.0
    return block


def featurize_pair(source: Sequence[str], target: Sequence[str],
                   config: FeaturizerConfig = FeaturizerConfig()) -> Array:
    lengths = np.array(
        [len(source), len(target), len(target) / max(len(source), 1)],
        dtype=np.float64,
    )
    return np.concatenate([
        _word_block(source, config),
        _char_block(source, config),
        _word_block(target, config),
        _char_block(target, config),
        lengths,
    ])


def featurize_pairs(pairs, config: FeaturizerConfig = FeaturizerConfig()) -> Array:
    """Feature matrix for an iterable of objects with source/target tokens."""
    rows = [featurize_pair(p.source, p.target, config) for p in pairs]
    if not rows:
        raise EmptyInputError("no pairs to featurize")
    return np.stack(rows)


def _seeded_split(n: int, train_fraction: float, seed: int) -> tuple[Array, Array]:
    order = np.random.default_rng(seed).permutation(n)
    cut = int(np.floor(n * train_fraction))
    return order[:cut], order[cut:]


@dataclass(frozen=True)
class BleuRegressor:
    config: FeaturizerConfig
    weights: Array
    bias: float
    feature_mean: Array
    feature_std: Array

    def predict(self, features: Array) -> Array:
        x = (np.atleast_2d(features) - self.feature_mean) / self.feature_std
        return np.clip(x @ self.weights + self.bias, 0.0, 1.0)


@dataclass(frozen=True)
class RegressionReport:
    mse: float
    rmse: float
    mae: float
    n_train: int
    n_test: int
    l2: float


def train_bleu_regressor(
    features: Array,
    scores: Sequence[float],
    l2: float = 1.0,
    seed: int = 0,
    train_fraction: float = 0.8,
    config: FeaturizerConfig = FeaturizerConfig(),
) -> tuple[BleuRegressor, RegressionReport]:
    """Closed-form ridge regression onto per-sentence quality scores.

    Features are standardized and the intercept is left unpenalized (fit by
    centering). Held-out error is measured on a seeded 20% split, with
    predictions clamped to the valid score range [0, 1].
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(scores, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"feature matrix {x.shape} does not match {y.shape[0]} scores")
    if x.shape[0] < 2:
        raise SizeError("need at least 2 examples to fit and evaluate")
    if l2 < 0:
        raise ConfigError("l2 must be non-negative")
    if y.min() < 0.0 or y.max() > 1.0:
        raise ConfigError("quality scores must lie in [0, 1]")
    train_idx, test_idx = _seeded_split(x.shape[0], train_fraction, seed)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise SizeError("split left one side empty; adjust train_fraction")
    xt, yt = x[train_idx], y[train_idx]
    mean = xt.mean(axis=0)
    std = xt.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (xt - mean) / std
    yc = yt - yt.mean()
    gram = xs.T @ xs + l2 * np.eye(xs.shape[1])
    try:
        weights = np.linalg.solve(gram, xs.T @ yc)
    except np.linalg.LinAlgError:
        raise SingularMatrixError(
            "normal equations are singular; use l2 > 0 to regularize"
        )
    model = BleuRegressor(
        config=config,
        weights=weights,
        bias=float(yt.mean()),
        feature_mean=mean,
        feature_std=std,
    )
    pred = model.predict(x[test_idx])
    err = pred - y[test_idx]
    report = RegressionReport(
        mse=float(np.mean(err ** 2)),
        rmse=float(np.sqrt(np.mean(err ** 2))),
        mae=float(np.mean(np.abs(err))),
        n_train=int(len(train_idx)),
        n_test=int(len(test_idx)),
        l2=l2,
    )
    return model, report


def _sigmoid(z: Array) -> Array:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def rank_auc(scores: Sequence[float], labels: Sequence[int]) -> float:
    """Area under the ROC curve from rank statistics, ties averaged."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels)
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise EmptyClassError("AUC needs both classes present")
    order = np.argsort(s, kind="stable")
    ranks = np.empty(len(s), dtype=np.float64)
    ranks[order] = np.arange(1, len(s) + 1)
    sorted_scores = s[order]
    # average the ranks of tied scores
    i = 0
    while i < len(s):
        j = i
        while j + 1 < len(s) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        if j > i:
            ranks[order[i: j + 1]] = (i + 1 + j + 1) / 2.0
        i = j + 1
    pos_rank_sum = ranks[y == 1].sum()
    return float((pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


@dataclass(frozen=True)
class Detector:
    method: str
    weights: Array
    bias: float
    feature_mean: Array
    feature_std: Array
    config: FeaturizerConfig

    def decision(self, features: Array) -> Array:
        x = (np.atleast_2d(features) - self.feature_mean) / self.feature_std
        return x @ self.weights + self.bias

    def predict_proba(self, features: Array) -> Array:
        """Probability that each row is machine-generated (class 1)."""
        return _sigmoid(self.decision(features))


@dataclass(frozen=True)
class DetectorReport:
    method: str
    accuracy: float
    auc: float
    precision: float
    recall: float
    n_train: int
    n_test: int


def _fit_logistic(x: Array, y: Array, l2: float = 1e-6, iterations: int = 30) -> tuple[Array, float]:
    """Newton / iteratively reweighted least squares; deterministic."""
    n, d = x.shape
    xb = np.hstack([x, np.ones((n, 1))])
    w = np.zeros(d + 1)
    reg = l2 * np.eye(d + 1)
    reg[-1, -1] = 0.0
    for _ in range(iterations):
        p = _sigmoid(xb @ w)
        r = np.clip(p * (1.0 - p), 1e-9, None)
        hess = (xb * r[:, None]).T @ xb + reg
        grad = xb.T @ (y - p) - reg @ w
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise SingularMatrixError("logistic Hessian is singular")
        w = w + step
        if np.abs(step).max() < 1e-10:
            break
    return w[:-1], float(w[-1])


def _fit_lda(x: Array, y: Array, ridge: float = 1e-6) -> tuple[Array, float]:
    """Linear discriminant with a ridge-stabilized pooled covariance."""
    x0, x1 = x[y == 0], x[y == 1]
    mu0, mu1 = x0.mean(axis=0), x1.mean(axis=0)
    n0, n1 = len(x0), len(x1)
    centered = np.vstack([x0 - mu0, x1 - mu1])
    cov = centered.T @ centered / max(n0 + n1 - 2, 1)
    cov += ridge * np.eye(x.shape[1])
    try:
        weights = np.linalg.solve(cov, mu1 - mu0)
    except np.linalg.LinAlgError:
        raise SingularMatrixError("pooled covariance is singular")
    bias = float(-0.5 * (mu0 + mu1) @ weights + np.log(n1 / n0))
    return weights, bias


def train_detector(
    features: Array,
    labels: Sequence[int],
    method: str = "logistic",
    seed: int = 0,
    train_fraction: float = 0.8,
    config: FeaturizerConfig = FeaturizerConfig(),
) -> tuple[Detector, DetectorReport]:
    """Fit a real-vs-generated classifier and score it on a held-out split.

    Classes are balanced first by seeded downsampling of the majority class.
    ``method`` is "logistic" (Newton-fitted) or "lda" (closed form); both
    yield a linear decision function reported through a sigmoid as the
    probability of being generated.
    """
    if method not in ("logistic", "lda"):
        raise ConfigError(f"unknown detector method {method!r}")
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ConfigError(f"feature matrix {x.shape} does not match {y.shape[0]} labels")
    if not set(np.unique(y)) <= {0, 1}:
        raise ConfigError("labels must be 0 (real) or 1 (generated)")
    idx0 = np.flatnonzero(y == 0)
    idx1 = np.flatnonzero(y == 1)
    if len(idx0) == 0 or len(idx1) == 0:
        raise EmptyClassError("need both real and generated examples")
    rng = np.random.default_rng([seed, 0])
    keep = min(len(idx0), len(idx1))
    idx0 = idx0[rng.permutation(len(idx0))[:keep]]
    idx1 = idx1[rng.permutation(len(idx1))[:keep]]
    subset = np.sort(np.concatenate([idx0, idx1]))
    x, y = x[subset], y[subset]

    train_idx, test_idx = _seeded_split(len(y), train_fraction, seed)
    if len(train_idx) == 0 or len(test_idx) == 0:
        raise SizeError("split left one side empty; adjust train_fraction")
    if len(set(y[train_idx].tolist())) < 2:
        raise EmptyClassError("training split lost one class; use more data")
    xt = x[train_idx]
    mean = xt.mean(axis=0)
    std = xt.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    xs = (xt - mean) / std
    if method == "logistic":
        weights, bias = _fit_logistic(xs, y[train_idx].astype(np.float64))
    else:
        weights, bias = _fit_lda(xs, y[train_idx])
    detector = Detector(
        method=method,
        weights=weights,
        bias=bias,
        feature_mean=mean,
        feature_std=std,
        config=config,
    )
    probs = detector.predict_proba(x[test_idx])
    yt = y[test_idx]
    pred = (probs >= 0.5).astype(np.int64)
    tp = int(((pred == 1) & (yt == 1)).sum())
    fp = int(((pred == 1) & (yt == 0)).sum())
    fn = int(((pred == 0) & (yt == 1)).sum())
    auc = rank_auc(probs, yt) if len(set(yt.tolist())) == 2 else float("nan")
    report = DetectorReport(
        method=method,
        accuracy=float((pred == yt).mean()),
        auc=auc,
        precision=tp / (tp + fp) if tp + fp else 0.0,
        recall=tp / (tp + fn) if tp + fn else 0.0,
        n_train=int(len(train_idx)),
        n_test=int(len(test_idx)),
    )
    return detector, report


def save_linear_model(model: BleuRegressor | Detector, path: str | Path) -> None:
    payload = {
        "kind": "regressor" if isinstance(model, BleuRegressor) else "detector",
        "featurizer": model.config.to_dict(),
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "feature_mean": model.feature_mean.tolist(),
        "feature_std": model.feature_std.tolist(),
    }
    if isinstance(model, Detector):
        payload["method"] = model.method
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def load_linear_model(path: str | Path) -> BleuRegressor | Detector:
    d = json.loads(Path(path).read_text(encoding="utf-8"))
    common = dict(
        weights=np.asarray(d["weights"], dtype=np.float64),
        bias=float(d["bias"]),
        feature_mean=np.asarray(d["feature_mean"], dtype=np.float64),
        feature_std=np.asarray(d["feature_std"], dtype=np.float64),
        config=FeaturizerConfig.from_dict(d["featurizer"]),
    )
    if d["kind"] == "regressor":
        return BleuRegressor(
            config=common["config"], weights=common["weights"], bias=common["bias"],
            feature_mean=common["feature_mean"], feature_std=common["feature_std"],
        )
    if d["kind"] == "detector":
        return Detector(method=d["method"], **common)
    raise ValueError(f"{path} holds an unknown model kind {d['kind']!r}")


@dataclass(frozen=True)
class ScoredInstance:
    index: int
    score: float
    kind: str = ""


@dataclass(frozen=True)
class Schedule:
    """An index plan: which corpus positions make up each training batch.

    ``space`` names the labelled segments the indices address; an index i
    falls in the segment whose cumulative range contains it. Segments make
    schedules over combined corpora unambiguous.
    """

    batches: tuple[tuple[int, ...], ...]
    batch_size: int
    rationale: str
    space: tuple[tuple[str, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "batches",
                           tuple(tuple(int(i) for i in b) for b in self.batches))
        object.__setattr__(self, "space",
                           tuple((str(l), int(n)) for l, n in self.space))
        total = sum(n for _, n in self.space)
        for b in self.batches:
            for i in b:
                if not 0 <= i < total:
                    raise ConfigError(f"schedule index {i} outside space of size {total}")

    @property
    def num_batches(self) -> int:
        return len(self.batches)

    def resolve(self, index: int) -> tuple[str, int]:
        """Map a combined index to (segment label, local index)."""
        offset = 0
        for label, size in self.space:
            if index < offset + size:
                return label, index - offset
            offset += size
        raise ConfigError(f"index {index} outside schedule space")

    def to_dict(self) -> dict:
        return {
            "batch_size": self.batch_size,
            "rationale": self.rationale,
            "space": [[label, size] for label, size in self.space],
            "batches": [list(b) for b in self.batches],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Schedule":
        return cls(
            batches=tuple(tuple(b) for b in d["batches"]),
            batch_size=int(d["batch_size"]),
            rationale=str(d["rationale"]),
            space=tuple((l, n) for l, n in d["space"]),
        )


def save_schedule(schedule: Schedule, path: str | Path) -> None:
    Path(path).write_text(json.dumps(schedule.to_dict(), sort_keys=True, indent=2) + "\n",
                          encoding="utf-8")


def load_schedule(path: str | Path) -> Schedule:
    return Schedule.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def build_schedule(
    instances: Sequence[ScoredInstance],
    batch_size: int,
    num_batches: int | None = None,
    rationale: str = "score-ranked",
    space_label: str = "pool",
    space_size: int | None = None,
) -> Schedule:
    """Batches in ascending score order (lower score = scheduled earlier).

    The sort is stable, so equal scores keep their original relative order.
    A trailing group smaller than ``batch_size`` is dropped unless
    ``num_batches`` demands it, in which case SizeError is raised.
    """
    if not instances:
        raise EmptyInputError("no scored instances to schedule")
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    ranked = sorted(instances, key=lambda s: s.score)
    available = len(ranked) // batch_size
    if num_batches is None:
        num_batches = available
        if num_batches == 0:
            raise SizeError(
                f"{len(ranked)} instances cannot fill a batch of {batch_size}"
            )
    elif num_batches > available:
        raise SizeError(
            f"want {num_batches} batches of {batch_size} but only {len(ranked)} instances"
        )
    batches = tuple(
        tuple(s.index for s in ranked[b * batch_size: (b + 1) * batch_size])
        for b in range(num_batches)
    )
    size = space_size if space_size is not None else max(s.index for s in instances) + 1
    return Schedule(
        batches=batches,
        batch_size=batch_size,
        rationale=rationale,
        space=((space_label, size),),
    )


def aggregate_group_scores(
    keys: Sequence[str],
    scores: Sequence[float],
    policy: str = "mean",
) -> list[tuple[str, float]]:
    """Collapse per-instance scores by key and order groups ascending.

    ``policy`` is "mean" or "min". Ties keep first-appearance order.
    """
    if policy not in ("mean", "min"):
        raise ConfigError(f"unknown aggregation policy {policy!r}")
    if len(keys) != len(scores):
        raise ConfigError(f"{len(keys)} keys vs {len(scores)} scores")
    if not keys:
        raise EmptyInputError("nothing to aggregate")
    grouped: dict[str, list[float]] = {}
    for k, s in zip(keys, scores):
        grouped.setdefault(k, []).append(float(s))
    reduce = np.mean if policy == "mean" else np.min
    items = [(k, float(reduce(v))) for k, v in grouped.items()]
    return sorted(items, key=lambda kv: kv[1])


def _drawn_without_reuse(rng, n: int, per_batch: int, num_batches: int) -> list[list[int]]:
    order = rng.permutation(n)
    return [
        order[b * per_batch: (b + 1) * per_batch].tolist()
        for b in range(num_batches)
    ]


def mix_corpora(
    first,
    second,
    batch_size: int,
    strategy: str = "halfhalf",
    seed: int = 0,
    num_batches: int | None = None,
    labels: tuple[str, str] = ("first", "second"),
) -> Schedule:
    """Interleave two corpora into batches without reusing any pair.

    "halfhalf" fills each batch with batch_size/2 pairs from each side
    (batch_size must be even); "union" puts batch_size pairs from each side
    into every batch, doubling the effective batch. Arguments may be corpora
    or plain sizes.
    """
    n_first = first if isinstance(first, int) else len(first)
    n_second = second if isinstance(second, int) else len(second)
    label_first = getattr(first, "id", "") or labels[0]
    label_second = getattr(second, "id", "") or labels[1]
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    if strategy == "halfhalf":
        if batch_size % 2 != 0:
            raise ConfigError("halfhalf needs an even batch_size")
        per_side = batch_size // 2
    elif strategy == "union":
        per_side = batch_size
    else:
        raise ConfigError(f"unknown mixing strategy {strategy!r}")
    available = min(n_first // per_side, n_second // per_side)
    if num_batches is None:
        num_batches = available
    if num_batches == 0 or num_batches > available:
        raise SizeError(
            f"cannot draw {num_batches or 1} batches of {per_side} per side "
            f"from corpora of {n_first} and {n_second}"
        )
    rng_first = np.random.default_rng([seed, 0])
    rng_second = np.random.default_rng([seed, 1])
    draws_first = _drawn_without_reuse(rng_first, n_first, per_side, num_batches)
    draws_second = _drawn_without_reuse(rng_second, n_second, per_side, num_batches)
    batches = tuple(
        tuple(a + [n_first + j for j in b])
        for a, b in zip(draws_first, draws_second)
    )
    return Schedule(
        batches=batches,
        batch_size=per_side * 2,
        rationale=f"mix:{strategy}",
        space=((label_first, n_first), (label_second, n_second)),
    )


def proportion_mix(
    synthetic,
    real,
    proportion: float,
    batch_size: int,
    seed: int = 0,
    num_batches: int | None = None,
) -> Schedule:
    """Batches with a fixed synthetic share, the rest drawn from real data.

    The synthetic count per batch is round-half-up of proportion*batch_size.
    Each side consumes its own seeded permutation, so the real-side draw for
    proportion 0 is identical to a pure-real schedule under the same seed.
    """
    n_syn = synthetic if isinstance(synthetic, int) else len(synthetic)
    n_real = real if isinstance(real, int) else len(real)
    if not 0.0 <= proportion <= 1.0:
        raise ConfigError(f"proportion must be in [0, 1], got {proportion}")
    if batch_size < 1:
        raise ConfigError("batch_size must be positive")
    k_syn = int(np.floor(proportion * batch_size + 0.5))
    k_real = batch_size - k_syn
    limits = []
    if k_syn > 0:
        limits.append(n_syn // k_syn)
    if k_real > 0:
        limits.append(n_real // k_real)
    available = min(limits)
    if num_batches is None:
        num_batches = available
    if num_batches == 0 or num_batches > available:
        raise SizeError(
            f"cannot draw {num_batches or 1} batches ({k_syn} synthetic + {k_real} real) "
            f"from pools of {n_syn} and {n_real}"
        )
    rng_syn = np.random.default_rng([seed, 0])
    rng_real = np.random.default_rng([seed, 1])
    draws_syn = (
        _drawn_without_reuse(rng_syn, n_syn, k_syn, num_batches)
        if k_syn > 0 else [[] for _ in range(num_batches)]
    )
    draws_real = (
        _drawn_without_reuse(rng_real, n_real, k_real, num_batches)
        if k_real > 0 else [[] for _ in range(num_batches)]
    )
    batches = tuple(
        tuple(s + [n_syn + j for j in r])
        for s, r in zip(draws_syn, draws_real)
    )
    return Schedule(
        batches=batches,
        batch_size=batch_size,
        rationale=f"proportion:{proportion}",
        space=(("synthetic", n_syn), ("real", n_real)),
    )
