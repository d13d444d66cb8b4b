"""Parallel-corpus handling: loading, tokenization, preprocessing, vocab, splits.

File format is UTF-8 TSV, one "source<TAB>target" pair per line. Tokenization
is whitespace splitting after punctuation characters are separated into
standalone tokens.
"""

from __future__ import annotations

import string
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, EmptyCorpusError, SizeError

PAD, BOS, EOS, UNK, SEP = "<pad>", "<bos>", "<eos>", "<unk>", "<sep>"
SPECIAL_TOKENS = (PAD, BOS, EOS, UNK, SEP)

REAL = "real"

_PUNCT = set(string.punctuation)


@dataclass(frozen=True)
class SentencePair:
    """One aligned sentence pair with its provenance.

    Provenance is either ``"real"`` or ``"generated:<model-id>"``; it is set
    once at creation and never mutated.
    """

    source: tuple[str, ...]
    target: tuple[str, ...]
    provenance: str = REAL

    def __post_init__(self):
        if not self.source or not self.target:
            raise ValueError("sentence pair sides must be non-empty after tokenization")
        object.__setattr__(self, "source", tuple(self.source))
        object.__setattr__(self, "target", tuple(self.target))


def generated_by(model_id: str) -> str:
    """Provenance label for pairs whose target came from a model."""
    return f"generated:{model_id}"


@dataclass(frozen=True)
class Corpus:
    pairs: tuple[SentencePair, ...]
    id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @property
    def sources(self) -> list[tuple[str, ...]]:
        return [p.source for p in self.pairs]

    @property
    def targets(self) -> list[tuple[str, ...]]:
        return [p.target for p in self.pairs]


@dataclass(frozen=True)
class PreprocessOptions:
    """Which normalization steps to apply; all-false is the identity."""

    lowercase: bool = False
    strip_punctuation: bool = False
    remove_stopwords: bool = False
    stem: bool = False
    stopword_list: frozenset[str] = frozenset()


def tokenize(text: str) -> tuple[str, ...]:
    """Split on whitespace after isolating punctuation into standalone tokens."""
    out = []
    for ch in text:
        if ch in _PUNCT:
            out.append(f" {ch} ")
        else:
            out.append(ch)
    return tuple("".join(out).split())


def detokenize(tokens: Sequence[str]) -> str:
    return " ".join(tokens)


def load_stopwords(path: str | Path) -> frozenset[str]:
    """One token per line; blank lines ignored."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return frozenset(tok.strip() for tok in lines if tok.strip())


def packaged_stopwords(name: str = "en") -> frozenset[str]:
    text = resources.files("regurgelab.data").joinpath(f"stopwords_{name}.txt").read_text("utf-8")
    return frozenset(tok.strip() for tok in text.splitlines() if tok.strip())


class Stemmer:
    """Suffix-stripping stemmer driven by an ordered rule table.

    Rules are (suffix, replacement) pairs tried in order; the first matching
    rule is applied when its result keeps at least ``min_stem`` characters
    (otherwise the token is left alone), and application repeats until no
    rule changes the token. The fixpoint makes stemming idempotent, which
    the preprocessing contract requires.
    """

    def __init__(self, rules: Sequence[tuple[str, str]], min_stem: int = 3):
        self.rules = tuple(rules)
        self.min_stem = min_stem

    @classmethod
    def from_file(cls, path: str | Path) -> "Stemmer":
        rules = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            suffix, _, repl = line.partition("\t")
            rules.append((suffix, repl))
        return cls(rules)

    @classmethod
    def packaged(cls) -> "Stemmer":
        rules = []
        text = resources.files("regurgelab.data").joinpath("stemmer_rules.tsv").read_text("utf-8")
        for line in text.splitlines():
            if not line.strip() or line.startswith("#"):
                continue
            suffix, _, repl = line.partition("\t")
            rules.append((suffix, repl))
        return cls(rules)

    def stem(self, token: str) -> str:
        while True:
            new = self._step(token)
            if new == token:
                return token
            token = new

    def _step(self, token: str) -> str:
        for suffix, repl in self.rules:
            if token.endswith(suffix):
                candidate = token[: len(token) - len(suffix)] + repl
                if len(candidate) >= self.min_stem:
                    return candidate
                return token
        return token


_DEFAULT_STEMMER: Stemmer | None = None


def _default_stemmer() -> Stemmer:
    global _DEFAULT_STEMMER
    if _DEFAULT_STEMMER is None:
        _DEFAULT_STEMMER = Stemmer.packaged()
    return _DEFAULT_STEMMER


def preprocess_sentence(
    tokens: Sequence[str],
    opts: PreprocessOptions,
    stemmer: Stemmer | None = None,
) -> tuple[str, ...]:
    """Apply lowercase, punctuation removal, stopword removal, and stemming.

    The stopword filter runs again after stemming so that stemmed forms which
    land on a stopword are also dropped; without this second sweep the
    pipeline would not be idempotent. Output may be empty.
    """
    out = list(tokens)
    if opts.lowercase:
        out = [t.lower() for t in out]
    if opts.strip_punctuation:
        out = [t for t in out if not all(ch in _PUNCT for ch in t)]
    if opts.remove_stopwords:
        out = [t for t in out if t not in opts.stopword_list]
    if opts.stem:
        stemmer = stemmer or _default_stemmer()
        out = [stemmer.stem(t) for t in out]
        if opts.remove_stopwords:
            out = [t for t in out if t not in opts.stopword_list]
    return tuple(out)


def preprocess_corpus(
    texts: Iterable[Sequence[str]],
    opts: PreprocessOptions,
    stemmer: Stemmer | None = None,
) -> list[tuple[str, ...]]:
    return [preprocess_sentence(t, opts, stemmer) for t in texts]


def load_parallel_corpus(path: str | Path, corpus_id: str = "") -> tuple[Corpus, int]:
    """Load a TSV corpus; returns (corpus, skipped_line_count).

    A line is skipped (and counted) when it does not have exactly one tab or
    when either side tokenizes to nothing. Raises OSError for unreadable
    files and EmptyCorpusError when no valid line remains.
    """
    pairs = []
    skipped = 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            if line.count("\t") != 1:
                skipped += 1
                continue
            src_text, tgt_text = line.split("\t")
            src, tgt = tokenize(src_text), tokenize(tgt_text)
            if not src or not tgt:
                skipped += 1
                continue
            pairs.append(SentencePair(src, tgt))
    if not pairs:
        raise EmptyCorpusError(f"no valid sentence pairs in {path}")
    return Corpus(tuple(pairs), id=corpus_id or str(path)), skipped


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    """Write a corpus as UTF-8 TSV with LF line endings."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for pair in corpus.pairs:
            fh.write(f"{detokenize(pair.source)}\t{detokenize(pair.target)}\n")


class Vocab:
    """Token/index bijection with fixed special tokens at indices 0..4."""

    def __init__(self, content_tokens: Sequence[str]):
        tokens = list(SPECIAL_TOKENS) + [t for t in content_tokens if t not in SPECIAL_TOKENS]
        self._index = {tok: i for i, tok in enumerate(tokens)}
        if len(self._index) != len(tokens):
            raise ConfigError("duplicate tokens in vocabulary")
        self._tokens = tokens

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    @property
    def pad_id(self) -> int:
        return 0

    @property
    def bos_id(self) -> int:
        return 1

    @property
    def eos_id(self) -> int:
        return 2

    @property
    def unk_id(self) -> int:
        return 3

    @property
    def sep_id(self) -> int:
        return 4

    @property
    def tokens(self) -> tuple[str, ...]:
        return tuple(self._tokens)

    def encode(self, token: str) -> int:
        return self._index.get(token, self.unk_id)

    def decode(self, index: int) -> str:
        return self._tokens[index]

    def encode_sequence(self, tokens: Sequence[str]) -> list[int]:
        return [self.encode(t) for t in tokens]

    def decode_sequence(self, ids: Sequence[int], strip_specials: bool = True) -> tuple[str, ...]:
        toks = [self._tokens[i] for i in ids]
        if strip_specials:
            toks = [t for t in toks if t not in SPECIAL_TOKENS]
        return tuple(toks)

    def to_dict(self) -> dict:
        return {"content_tokens": self._tokens[len(SPECIAL_TOKENS):]}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocab":
        return cls(d["content_tokens"])


def build_vocab(corpus: Corpus, max_size: int, min_freq: int = 1) -> Vocab:
    """Keep the most frequent tokens, ties broken lexicographically.

    The five special tokens count against ``max_size``.
    """
    if max_size < len(SPECIAL_TOKENS):
        raise ConfigError(f"max_size must be at least {len(SPECIAL_TOKENS)}, got {max_size}")
    if len(corpus) == 0:
        raise EmptyCorpusError("cannot build a vocabulary from an empty corpus")
    counts: dict[str, int] = {}
    for pair in corpus.pairs:
        for tok in pair.source:
            counts[tok] = counts.get(tok, 0) + 1
        for tok in pair.target:
            counts[tok] = counts.get(tok, 0) + 1
    eligible = [(tok, c) for tok, c in counts.items() if c >= min_freq]
    eligible.sort(key=lambda tc: (-tc[1], tc[0]))
    budget = max_size - len(SPECIAL_TOKENS)
    return Vocab([tok for tok, _ in eligible[:budget]])


def split_corpus(corpus: Corpus, seed: int, sizes: Sequence[int]) -> list[Corpus]:
    """Disjoint random partitions of the requested sizes, deterministic in seed."""
    total = sum(sizes)
    if total > len(corpus):
        raise SizeError(f"requested {total} pairs from a corpus of {len(corpus)}")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus))
    parts = []
    start = 0
    for k, size in enumerate(sizes):
        picked = order[start: start + size]
        parts.append(Corpus(tuple(corpus.pairs[i] for i in picked), id=f"{corpus.id}/split{k}"))
        start += size
    return parts
