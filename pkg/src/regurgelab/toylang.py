"""A tiny synthetic parallel language for fast end-to-end studies.

Source words s0..s{K-1} map one-to-one onto target words t0..t{K-1}. A
sentence is a Zipf-weighted sample of source words; its translation maps
each word through the lexicon and then swaps adjacent pairs (positions 0 and
1, 2 and 3, ...), giving a deterministic local reordering that a small
encoder-decoder can learn but not trivially copy.
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, SentencePair, Vocab, build_vocab
from .errors import ConfigError


def swap_adjacent(tokens: tuple[str, ...]) -> tuple[str, ...]:
    out = list(tokens)
    for i in range(0, len(out) - 1, 2):
        out[i], out[i + 1] = out[i + 1], out[i]
    return tuple(out)


def toy_translation(source: tuple[str, ...]) -> tuple[str, ...]:
    """Reference translation under the toy lexicon and reorder rule."""
    mapped = tuple("t" + tok[1:] for tok in source)
    return swap_adjacent(mapped)


def make_toy_corpus(
    n_pairs: int = 20000,
    seed: int = 0,
    lexicon_size: int = 110,
    min_len: int = 3,
    max_len: int = 9,
    zipf_a: float = 1.3,
) -> Corpus:
    """Sample a parallel corpus from the toy language.

    Word ranks follow a truncated Zipf law with exponent ``zipf_a`` so the
    token frequency profile is skewed the way natural text is.
    """
    if n_pairs < 1 or lexicon_size < 2:
        raise ConfigError("need at least one pair and a two-word lexicon")
    if not 1 <= min_len <= max_len:
        raise ConfigError("sentence length bounds must satisfy 1 <= min <= max")
    rng = np.random.default_rng(seed)
    ranks = np.arange(1, lexicon_size + 1, dtype=np.float64)
    probs = ranks ** -zipf_a
    probs /= probs.sum()
    lengths = rng.integers(min_len, max_len + 1, size=n_pairs)
    pairs = []
    for n in lengths:
        idx = rng.choice(lexicon_size, size=int(n), p=probs)
        source = tuple(f"s{i}" for i in idx)
        pairs.append(SentencePair(source, toy_translation(source)))
    return Corpus(tuple(pairs), id=f"toy:{seed}")


def toy_vocab(lexicon_size: int = 110) -> Vocab:
    """The full toy vocabulary, independent of any sampled corpus."""
    words = [f"s{i}" for i in range(lexicon_size)] + [f"t{i}" for i in range(lexicon_size)]
    return Vocab(sorted(words))


def toy_vocab_from_corpus(corpus: Corpus) -> Vocab:
    return build_vocab(corpus, max_size=5 + 2 * 110 + 64)
