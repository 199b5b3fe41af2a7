import itertools
import math

import numpy as np
import pytest

from coregen import decoding
from coregen.alignment import AlignmentTable
from coregen.decoding import beam_decode, decode_corpus, format_outputs, greedy_decode
from coregen.model import CoReModel, ModelConfig
from coregen.ndmath import Tensor
from coregen.training import Resources
from coregen.vocab import BOS, EOS, PAD, UNK, Vocabulary

WORDS = [f"w{i}" for i in range(6)]


def resources(frequent=("r0", "r1")):
    source = Vocabulary([PAD, UNK, BOS, EOS, *WORDS])
    target = Vocabulary([PAD, UNK, BOS, EOS, *WORDS, "r0", "r1", "r2"])
    table = AlignmentTable({"w0": [("r2", 1.0)], "w1": [("r0", 0.5), ("r2", 0.5)]})
    return Resources(source, target, Vocabulary([UNK, *frequent]), table)


def random_model(res, seed, scale=0.8):
    model = CoReModel(ModelConfig(len(res.source), len(res.target), 4, 5), seed=seed)
    rng = np.random.default_rng(seed)
    for t in model.params.values():
        t.data[...] = rng.uniform(-scale, scale, size=t.shape)
    return model


def random_source(rng):
    return [WORDS[i] for i in rng.integers(0, len(WORDS), size=int(rng.integers(1, 5)))]


RES = resources()


def test_beam_one_equals_greedy():
    rng = np.random.default_rng(0)
    for i in range(100):
        model = random_model(RES, i % 10)
        src = random_source(rng)
        g = greedy_decode(model, RES, src, max_len=8)
        b = beam_decode(model, RES, src, beam_width=1, max_len=8)
        assert g.tokens == b.tokens


def test_score_bookkeeping():
    rng = np.random.default_rng(1)
    for i in range(10):
        model = random_model(RES, i)
        for h in (greedy_decode(model, RES, random_source(rng), 6),
                  beam_decode(model, RES, random_source(rng), 3, 6)):
            assert abs(h.score - sum(h.step_logprobs) / len(h.tokens)) <= 1e-9
            assert all(b <= a for a, b in itertools.pairwise(itertools.accumulate(h.step_logprobs)))


def test_union_support_closure():
    rng = np.random.default_rng(2)
    for i in range(20):
        model = random_model(RES, i)
        src = random_source(rng)
        allowed = set(src) | {EOS} | {RES.target.token(j) for j in RES.restricted(src).ids}
        for h in (greedy_decode(model, RES, src, 8), beam_decode(model, RES, src, 4, 8)):
            assert set(h.tokens) <= allowed


def test_max_len_one():
    h = greedy_decode(random_model(RES, 0), RES, ["w1", "w2"], max_len=1)
    assert len(h.tokens) == 1


def test_invalid_arguments():
    model = random_model(RES, 0)
    with pytest.raises(ValueError):
        greedy_decode(model, RES, ["w1"], max_len=0)
    with pytest.raises(ValueError):
        beam_decode(model, RES, ["w1"], beam_width=0)


def test_copy_only_regime_emits_source_words(monkeypatch):
    model = random_model(RES, 3)
    monkeypatch.setattr(model, "predict_mode", lambda s: Tensor(np.ones(s.shape[0])))
    src = ["w3", "w4", "w5"]
    h = greedy_decode(model, RES, src, 10)
    assert set(h.tokens) <= set(src) | {EOS}
    assert set(h.modes) == {"copy"}


def test_deterministic_and_trace():
    model = random_model(RES, 5)
    a = beam_decode(model, RES, ["w0", "w1"], 3, 6)
    b = beam_decode(model, RES, ["w0", "w1"], 3, 6)
    assert a.tokens == b.tokens and a.logprob == b.logprob
    lines = a.trace().splitlines()
    assert len(lines) == len(a.tokens)
    pos, tok, mode, lam = lines[0].split("\t")
    assert pos == "1" and tok == a.tokens[0] and mode in ("copy", "generate")
    assert 0 < float(lam) < 1


def test_format_outputs_drops_eos():
    hyps = decode_corpus(random_model(RES, 1), RES, [["w1"], ["w2", "w3"]], 1, 5)
    out = format_outputs(hyps).splitlines()
    assert len(out) == 2
    assert all(EOS not in line.split() for line in out)


def test_exhaustive_search_on_real_model():
    # support is {w0, </s>, <unk>, r2}: with beam 4 and two steps the search is exact
    res = resources(frequent=())
    rng = np.random.default_rng(7)
    for seed in range(10):
        model = random_model(res, seed, scale=1.5)
        src = ["w0"]
        sess = decoding._Session(model, res, src, True)
        best = -math.inf
        first, lam, s1 = sess.step(BOS, sess.s0)
        for w1, p1, _, _ in first:
            if w1 == EOS:
                best = max(best, math.log(p1))
                continue
            second, _, _ = sess.step(w1, s1)
            for w2, p2, _, _ in second:
                best = max(best, (math.log(p1) + math.log(p2)) / 2)
        h = beam_decode(model, res, src, beam_width=4, max_len=2)
        assert abs(h.score - best) <= 1e-12


class _TableSession:
    """Stands in for the network: next-word probabilities keyed by prefix."""

    TABLE = {
        (): {"a": 0.6, "b": 0.4},
        ("a",): {"x": 0.35, "y": 0.33, EOS: 0.32},
        ("b",): {EOS: 0.9, "x": 0.1},
    }

    def __init__(self, model, res, source, restrict):
        self.s0 = ()

    def step(self, prev, state):
        prefix = state if prev == BOS else state + (prev,)
        dist = self.TABLE.get(prefix, {EOS: 1.0})
        ranked = sorted(((w, p, p, 0.0) for w, p in dist.items()), key=decoding._rank_key)
        return ranked, 1.0, prefix


def test_beam_matches_exhaustive_on_hand_set_model(monkeypatch):
    monkeypatch.setattr(decoding, "_Session", _TableSession)
    table = _TableSession.TABLE
    candidates = []
    for w1, p1 in table[()].items():
        for w2, p2 in table[(w1,)].items():
            candidates.append(((math.log(p1) + math.log(p2)) / 2, [w1, w2]))
    best_score, best_tokens = max(candidates)
    h = beam_decode(None, None, [], beam_width=3, max_len=2)
    assert h.tokens == best_tokens == ["b", EOS]
    assert abs(h.score - best_score) <= 1e-12
    # greedy follows the locally best first word and misses it
    assert greedy_decode(None, None, [], max_len=2).tokens == ["a", "x"]


def test_ties_prefer_copy_then_lexicographic():
    ranked = sorted([("b", 0.5, 0.0, 0.5), ("c", 0.5, 0.5, 0.0), ("a", 0.5, 0.0, 0.5)],
                    key=decoding._rank_key)
    assert [w for w, *_ in ranked] == ["c", "a", "b"]
