from collections import Counter

import pytest

from regurgelab.errors import ConfigError
from regurgelab.toylang import (
    make_toy_corpus,
    swap_adjacent,
    toy_translation,
    toy_vocab,
)


class TestSwap:
    def test_even_length(self):
        assert swap_adjacent(("a", "b", "c", "d")) == ("b", "a", "d", "c")

    def test_odd_length_keeps_last(self):
        assert swap_adjacent(("a", "b", "c")) == ("b", "a", "c")

    def test_involution(self):
        toks = ("a", "b", "c", "d", "e")
        assert swap_adjacent(swap_adjacent(toks)) == toks


class TestTranslation:
    def test_maps_and_reorders(self):
        assert toy_translation(("s3", "s7", "s1")) == ("t7", "t3", "t1")

    def test_deterministic_rule(self):
        src = ("s0", "s0", "s5")
        assert toy_translation(src) == toy_translation(src)


class TestCorpus:
    def test_deterministic(self):
        a = make_toy_corpus(50, seed=4)
        b = make_toy_corpus(50, seed=4)
        assert a.pairs == b.pairs

    def test_size_and_lengths(self):
        c = make_toy_corpus(200, seed=0, min_len=3, max_len=9)
        assert len(c) == 200
        assert all(3 <= len(p.source) <= 9 for p in c.pairs)
        assert all(len(p.target) == len(p.source) for p in c.pairs)

    def test_targets_follow_rule(self):
        c = make_toy_corpus(100, seed=1)
        assert all(p.target == toy_translation(p.source) for p in c.pairs)

    def test_provenance_real(self):
        c = make_toy_corpus(10, seed=2)
        assert {p.provenance for p in c.pairs} == {"real"}

    def test_zipf_skew(self):
        c = make_toy_corpus(2000, seed=3, lexicon_size=50)
        counts = Counter(tok for p in c.pairs for tok in p.source)
        assert counts["s0"] > 5 * counts.get("s40", 1)

    def test_bad_bounds(self):
        with pytest.raises(ConfigError):
            make_toy_corpus(10, seed=0, min_len=5, max_len=3)


class TestVocab:
    def test_covers_both_sides(self):
        v = toy_vocab(lexicon_size=30)
        assert "s29" in v and "t29" in v and len(v) == 5 + 60

    def test_corpus_tokens_in_vocab(self):
        v = toy_vocab()
        c = make_toy_corpus(100, seed=5)
        for p in c.pairs:
            assert all(tok in v for tok in p.source + p.target)
