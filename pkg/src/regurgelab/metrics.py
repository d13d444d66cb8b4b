"""Corpus similarity and quality metrics over token sequences.

BLEU is computed without smoothing: when any n-gram order has zero matches
(or no n-grams at all) the score is zero and the report is flagged
degenerate. Clipping uses the maximum reference count per n-gram, and the
effective reference length is the one closest to the hypothesis length,
ties resolved toward the shorter reference.
"""

from __future__ import annotations

import bisect
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    AlignmentError,
    ConfigError,
    DegenerateInputError,
    EmptyInputError,
    SizeError,
)

Tokens = Sequence[str]


def ngrams(tokens: Tokens, n: int) -> list[tuple[str, ...]]:
    if n < 1:
        raise ConfigError(f"n-gram order must be positive, got {n}")
    return [tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1)]


def _as_reference_sets(references) -> list[list[tuple[str, ...]]]:
    """Normalize each entry to a list of alternative references."""
    out = []
    for ref in references:
        ref = list(ref)
        if ref and not isinstance(ref[0], str):
            out.append([tuple(r) for r in ref])
        else:
            out.append([tuple(ref)])
    return out


def _max_reference_counts(refs: list[tuple[str, ...]], n: int) -> Counter:
    merged: Counter = Counter()
    for ref in refs:
        for g, c in Counter(ngrams(ref, n)).items():
            if c > merged[g]:
                merged[g] = c
    return merged


def modified_precision(hypotheses: Sequence[Tokens], references, n: int) -> tuple[float, int, int]:
    """Corpus-level clipped n-gram precision: (precision, matched, total).

    Counts are pooled over the whole corpus before dividing, so long
    sentences weigh more than short ones. A hypothesis n-gram is clipped at
    the largest count it reaches in any of its references.
    """
    if len(hypotheses) != len(references):
        raise AlignmentError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    matched = 0
    total = 0
    for hyp, refs in zip(hypotheses, _as_reference_sets(references)):
        hyp_counts = Counter(ngrams(hyp, n))
        if not hyp_counts:
            continue
        ref_counts = _max_reference_counts(refs, n)
        total += sum(hyp_counts.values())
        matched += sum(min(c, ref_counts[g]) for g, c in hyp_counts.items())
    return (matched / total if total else 0.0), matched, total


@dataclass(frozen=True)
class BleuConfig:
    max_n: int = 4
    weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.max_n < 1:
            raise ConfigError("max_n must be at least 1")
        if self.weights is not None:
            w = tuple(float(x) for x in self.weights)
            if len(w) != self.max_n:
                raise ConfigError(f"need {self.max_n} weights, got {len(w)}")
            if any(x < 0 for x in w) or abs(sum(w) - 1.0) > 1e-9:
                raise ConfigError("weights must be non-negative and sum to 1")
            object.__setattr__(self, "weights", w)

    @property
    def effective_weights(self) -> tuple[float, ...]:
        if self.weights is not None:
            return self.weights
        return tuple([1.0 / self.max_n] * self.max_n)


@dataclass(frozen=True)
class BleuReport:
    bleu: float
    brevity_penalty: float
    precisions: tuple[float, ...]
    matched: tuple[int, ...]
    total: tuple[int, ...]
    hyp_length: int
    ref_length: int
    degenerate: bool


def _closest_reference_length(ref_lengths: Sequence[int], hyp_length: int) -> int:
    """Reference length nearest the hypothesis; ties go to the shorter one."""
    best = ref_lengths[0]
    for length in ref_lengths[1:]:
        d, bd = abs(length - hyp_length), abs(best - hyp_length)
        if d < bd or (d == bd and length < best):
            best = length
    return best


def _combine(precisions: Sequence[float], weights: Sequence[float],
             bp: float) -> float:
    log_sum = sum(w * math.log(p) for w, p in zip(weights, precisions))
    return bp * math.exp(log_sum)


def corpus_bleu(hypotheses: Sequence[Tokens], references,
                config: BleuConfig = BleuConfig()) -> BleuReport:
    """Geometric-mean n-gram precision with a brevity penalty.

    ``references`` holds one reference per hypothesis, or a list of
    alternative references per hypothesis. No smoothing is applied: a zero
    precision at any order makes the score 0 and sets ``degenerate``.
    """
    if len(hypotheses) != len(references):
        raise AlignmentError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyInputError("need at least one hypothesis")
    ref_sets = _as_reference_sets(references)
    hyp_length = sum(len(h) for h in hypotheses)
    ref_length = sum(
        _closest_reference_length([len(r) for r in refs], len(h))
        for h, refs in zip(hypotheses, ref_sets)
    )
    precisions, matched, total = [], [], []
    for n in range(1, config.max_n + 1):
        p, m, t = modified_precision(hypotheses, ref_sets, n)
        precisions.append(p)
        matched.append(m)
        total.append(t)
    if hyp_length == 0:
        bp = 0.0
    else:
        bp = min(1.0, math.exp(1.0 - ref_length / hyp_length))
    degenerate = any(p == 0.0 for p in precisions)
    bleu = 0.0 if degenerate else _combine(precisions, config.effective_weights, bp)
    return BleuReport(
        bleu=bleu,
        brevity_penalty=bp,
        precisions=tuple(precisions),
        matched=tuple(matched),
        total=tuple(total),
        hyp_length=hyp_length,
        ref_length=ref_length,
        degenerate=degenerate,
    )


def sentence_bleu(hypothesis: Tokens, references,
                  config: BleuConfig = BleuConfig()) -> BleuReport:
    """BLEU of a single sentence against one or more references."""
    refs = _as_reference_sets([references])
    return corpus_bleu([hypothesis], refs, config)


@dataclass(frozen=True)
class SelfBleuReport:
    mean: float
    per_text: tuple[float, ...]


def self_bleu(texts: Sequence[Tokens], config: BleuConfig = BleuConfig()) -> SelfBleuReport:
    """Diversity measure: each text scored against all the others.

    Lower means more diverse. Equivalent to sentence_bleu(text_i, others_i)
    averaged over i, but computed with shared count tables: for every n-gram
    we track the two largest per-text counts, so the clip for text i is the
    best count achieved by any other text.
    """
    if len(texts) < 2:
        raise SizeError(f"self-BLEU needs at least 2 texts, got {len(texts)}")
    texts = [tuple(t) for t in texts]
    sorted_lengths = sorted(len(t) for t in texts)
    weights = config.effective_weights

    tables = []
    for n in range(1, config.max_n + 1):
        counters = [Counter(ngrams(t, n)) for t in texts]
        top: dict[tuple[str, ...], tuple[int, int, int]] = {}
        for i, cnt in enumerate(counters):
            for g, c in cnt.items():
                best, second, owner = top.get(g, (0, 0, -1))
                if c > best:
                    top[g] = (c, best, i)
                elif c > second:
                    top[g] = (best, c, owner)
        tables.append((counters, top))

    scores = []
    for i, text in enumerate(texts):
        c = len(text)
        r = _closest_other_length(sorted_lengths, c)
        precisions = []
        for counters, top in tables:
            cnt = counters[i]
            total = sum(cnt.values())
            if total == 0:
                precisions = None
                break
            m = 0
            for g, k in cnt.items():
                best, second, owner = top[g]
                clip = second if owner == i else best
                m += min(k, clip)
            if m == 0:
                precisions = None
                break
            precisions.append(m / total)
        if precisions is None:
            scores.append(0.0)
            continue
        bp = 0.0 if c == 0 else min(1.0, math.exp(1.0 - r / c))
        scores.append(_combine(precisions, weights, bp))
    return SelfBleuReport(mean=float(np.mean(scores)), per_text=tuple(scores))


def _closest_other_length(sorted_lengths: list[int], own: int) -> int:
    """Closest length among the other texts, after removing one instance of
    ``own`` from the sorted multiset; ties go to the shorter length."""
    lo = bisect.bisect_left(sorted_lengths, own)
    hi = bisect.bisect_right(sorted_lengths, own)
    if hi - lo >= 2:
        return own
    candidates = []
    if lo > 0:
        candidates.append(sorted_lengths[lo - 1])
    if hi < len(sorted_lengths):
        candidates.append(sorted_lengths[hi])
    return _closest_reference_length(candidates, own)


def unique_token_count(texts: Sequence[Tokens]) -> int:
    return len({tok for text in texts for tok in text})


def tfidf_embed(texts: Sequence[Tokens]) -> tuple[np.ndarray, list[str]]:
    """Bag-of-words tf-idf rows, L2-normalized; idf is smoothed so unseen
    document frequencies cannot blow up: idf = ln((1+D)/(1+df)) + 1.

    Returns (matrix of shape [len(texts), vocab], sorted vocabulary). Texts
    with no tokens become zero rows.
    """
    vocab = sorted({tok for text in texts for tok in text})
    if not vocab:
        raise DegenerateInputError("no tokens in any text")
    index = {w: i for i, w in enumerate(vocab)}
    counts = np.zeros((len(texts), len(vocab)), dtype=np.float64)
    for row, text in enumerate(texts):
        for tok in text:
            counts[row, index[tok]] += 1.0
    df = (counts > 0).sum(axis=0)
    idf = np.log((1.0 + len(texts)) / (1.0 + df)) + 1.0
    m = counts * idf
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return np.divide(m, norms, out=np.zeros_like(m), where=norms > 0), vocab


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise AlignmentError(f"vector sizes differ: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("cosine similarity of a zero vector is undefined")
    return float(np.dot(a, b) / (na * nb))


def aligned_cosine_similarity(hypotheses: Sequence[Tokens],
                              references: Sequence[Tokens]) -> float:
    """Mean cosine between aligned tf-idf rows, fitted on both sides jointly."""
    if len(hypotheses) != len(references):
        raise AlignmentError(
            f"{len(hypotheses)} hypotheses vs {len(references)} references"
        )
    if not hypotheses:
        raise EmptyInputError("need at least one pair")
    matrix, _ = tfidf_embed(list(hypotheses) + list(references))
    h, r = matrix[: len(hypotheses)], matrix[len(hypotheses):]
    return float(np.mean([cosine_similarity(a, b) for a, b in zip(h, r)]))


class SynonymTable:
    """Symmetric synonym lookup; every token is a synonym of itself."""

    def __init__(self, mapping: dict[str, set[str]] | None = None):
        self._syn: dict[str, set[str]] = {}
        for word, alts in (mapping or {}).items():
            for alt in alts:
                self._syn.setdefault(word, set()).add(alt)
                self._syn.setdefault(alt, set()).add(word)

    @classmethod
    def from_file(cls, path: str | Path) -> "SynonymTable":
        return cls(cls._parse(Path(path).read_text(encoding="utf-8")))

    @classmethod
    def packaged(cls) -> "SynonymTable":
        text = resources.files("regurgelab.data").joinpath("synonyms_en.tsv").read_text("utf-8")
        return cls(cls._parse(text))

    @staticmethod
    def _parse(text: str) -> dict[str, set[str]]:
        mapping: dict[str, set[str]] = {}
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            word, _, alts = line.partition("\t")
            mapping.setdefault(word.strip(), set()).update(
                a.strip() for a in alts.split(",") if a.strip()
            )
        return mapping

    def synonyms(self, token: str) -> frozenset[str]:
        return frozenset(self._syn.get(token, set()) | {token})

    def are_synonyms(self, a: str, b: str) -> bool:
        return a == b or b in self._syn.get(a, ())


def non_synonymous_deviations(hypothesis: Tokens, reference: Tokens,
                              table: SynonymTable) -> int:
    """Reference token occurrences with no match or synonym in the hypothesis."""
    hyp_set = set(hypothesis)
    count = 0
    for tok in reference:
        if tok in hyp_set:
            continue
        if table.synonyms(tok) & hyp_set:
            continue
        count += 1
    return count


def remove_deviations(hypothesis: Tokens, reference: Tokens,
                      table: SynonymTable) -> tuple[str, ...]:
    """Drop hypothesis tokens that neither appear in the reference nor have a
    synonym there; the surviving order is preserved."""
    ref_set = set(reference)
    return tuple(
        tok for tok in hypothesis
        if tok in ref_set or table.synonyms(tok) & ref_set
    )
