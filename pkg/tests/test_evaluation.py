import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coregen.evaluation import (
    InputError, NgramLM, corpus_rouge, format_report, lead_baseline, metric_report, perplexity,
    quality_stats, rouge_n, train_lm,
)
from coregen.vocab import EOS, UNK


def brute_rouge_f(cand, ref, n):
    """List-based clipped matching: each reference n-gram can be used once."""
    cg = [tuple(cand[i: i + n]) for i in range(len(cand) - n + 1)]
    rg = [tuple(ref[i: i + n]) for i in range(len(ref) - n + 1)]
    pool = list(rg)
    overlap = 0
    for g in cg:
        if g in pool:
            pool.remove(g)
            overlap += 1
    total = len(cg) + len(rg)
    return 2 * overlap / total if total else 0.0


class TestRouge:
    def test_identity(self):
        assert rouge_n("a b c".split(), "a b c".split(), 2)[2] == 1.0

    def test_hand_case(self):
        assert rouge_n("a b c d".split(), "a b x d".split(), 2)[2] == pytest.approx(1 / 3, abs=1e-15)

    def test_disjoint(self):
        assert rouge_n(["a"], ["b"], 1) == (0.0, 0.0, 0.0)

    def test_clipping(self):
        p, r, f = rouge_n("a a a".split(), "a b".split(), 1)
        assert (p, r, f) == (1 / 3, 1 / 2, 2 / 5)

    def test_empty(self):
        assert rouge_n([], ["a"], 2)[2] == 0.0

    def test_matches_brute_force_on_1000_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            cand = [str(t) for t in rng.integers(0, 4, size=rng.integers(0, 8))]
            ref = [str(t) for t in rng.integers(0, 4, size=rng.integers(0, 8))]
            for n in (1, 2):
                assert rouge_n(cand, ref, n)[2] == brute_rouge_f(cand, ref, n)

    @given(st.lists(st.sampled_from("abc"), max_size=7), st.lists(st.sampled_from("abc"), max_size=7))
    def test_bounds_and_symmetry(self, c, r):
        f = rouge_n(c, r, 1)[2]
        assert 0 <= f <= 1
        assert f == rouge_n(r, c, 1)[2]
        if f == 1:
            assert sorted(c) == sorted(r)

    def test_corpus_mismatch(self):
        with pytest.raises(InputError):
            corpus_rouge([["a"]], [], 1)


class TestLM:
    def test_closed_form_repeated_word(self):
        lm = train_lm([["a", "a", "a"]])
        # counts: a x3, </s> x1; vocabulary {a, </s>, <unk>}; floor 1/30
        p1_a = (1 - 1 / 30) * 3 / 4
        assert lm.prob("a", ["a", "a"]) == pytest.approx(0.5 * 1 / 2 + 0.3 * 2 / 3 + 0.2 * p1_a, abs=1e-15)

    def test_closed_form_sentence_ppl(self):
        lm = train_lm([["a", "b"]])
        floor = 1 / 40           # vocabulary {a, b, </s>, <unk>}
        p1 = (1 - floor) / 3
        # every history was seen exactly once, so each ML estimate is 1
        per_token = 0.5 + 0.3 + 0.2 * p1
        assert perplexity(lm, [["a", "b"]]) == pytest.approx(1 / per_token, abs=1e-12)

    def test_unk_floor(self):
        lm = train_lm([["a"]])
        assert lm.p1("zzz") == lm.p1(UNK) == pytest.approx(1 / 30)

    @pytest.mark.parametrize("history", [[], ["a"], ["a", "b"], ["b", "zzz"], ["c", "c"], ["q", "r"]])
    def test_conditionals_normalized(self, history):
        lm = train_lm([["a", "b", "c"], ["b", "b", "a", "c"], ["c"]])
        total = sum(lm.prob(w, history) for w in lm.vocab)
        assert abs(total - 1) <= 1e-6

    def test_uniform_ppl(self):
        lm = NgramLM.uniform(["a", "b", "c"])
        assert perplexity(lm, [["a", "zzz"], ["c"]]) == pytest.approx(5.0)

    def test_training_sentence_is_minimal(self):
        sent = ["a", "b", "a"]
        lm = train_lm([sent])
        own = perplexity(lm, [sent])
        for other in itertools.product("ab", repeat=3):
            assert own <= perplexity(lm, [list(other)]) + 1e-12

    def test_order_invariant(self):
        lm = train_lm([["a", "b"], ["b", "c"]])
        texts = [["a", "b"], ["c"], ["b", "b", "a"]]
        assert perplexity(lm, texts) == pytest.approx(perplexity(lm, texts[::-1]), abs=1e-12)

    @pytest.mark.slow
    def test_shuffled_training_data_has_higher_ppl(self):
        rng = np.random.default_rng(0)
        words = [f"w{i}" for i in range(30)]
        # a noisy chain so word order carries information
        sents = []
        for _ in range(1000):
            i = int(rng.integers(0, 30))
            sent = []
            for _ in range(int(rng.integers(4, 10))):
                sent.append(words[i])
                i = (i + int(rng.integers(1, 3))) % 30
            sents.append(sent)
        lm = train_lm(sents)
        base = perplexity(lm, sents)
        for _ in range(5):
            shuffled = [list(rng.permutation(s)) for s in sents]
            assert base <= perplexity(lm, shuffled)

    def test_empty_corpus(self):
        with pytest.raises(InputError):
            train_lm([])

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            NgramLM([], weights=(0.5, 0.5, 0.5))


class TestQuality:
    def test_copy_case(self):
        q = quality_stats([["a", "b"]], [["a", "b"]])
        assert (q.copy, q.unk, q.length) == (100.0, 0.0, 2.0)

    def test_unk_case(self):
        q = quality_stats([["a", UNK]], [["a"]])
        assert (q.length, q.unk, q.copy) == (2, 50.0, 50.0)

    def test_counts_occurrences(self):
        assert quality_stats([["a", "a", "x"]], [["a"]]).copy == pytest.approx(200 / 3)

    def test_mismatch(self):
        with pytest.raises(InputError):
            quality_stats([["a"]], [])


class TestLead:
    def test_prefix(self):
        assert lead_baseline("a b c d".split(), 2) == ["a", "b"]

    def test_saturation(self):
        assert lead_baseline(["a"], 5) == ["a"]

    def test_default_k(self):
        assert len(lead_baseline([str(i) for i in range(40)])) == 20

    @given(st.lists(st.lists(st.sampled_from("abcdef"), min_size=1, max_size=30), min_size=1, max_size=5),
           st.integers(1, 25))
    def test_lead_copy_is_total(self, sources, k):
        assert quality_stats([lead_baseline(s, k) for s in sources], sources).copy == 100.0


def test_metric_report_rows():
    refs = [["a", "b"], ["c"]]
    rows = metric_report(refs, refs, refs, train_lm(refs))
    assert [name for name, _ in rows] == ["ROUGE-1", "ROUGE-2", "PPL", "Length", "UNK%", "Copy%"]
    text = format_report(rows)
    assert text.splitlines()[0] == "ROUGE-1\t1.000000"
    assert EOS not in text
