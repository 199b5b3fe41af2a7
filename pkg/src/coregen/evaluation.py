"""ROUGE-n, a fixed-weight interpolated trigram LM for perplexity, output
statistics and the LEAD baseline."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

from .vocab import BOS, EOS, UNK

LM_WEIGHTS = (0.5, 0.3, 0.2)  # trigram, bigram, unigram
LEAD_SUMMARIZATION = 20
LEAD_SIMPLIFICATION = 25


class InputError(ValueError):
    pass


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i: i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int = 2) -> tuple[float, float, float]:
    """Clipped n-gram overlap: ``(precision, recall, f)`` with
    ``f = 2 * overlap / (|cand n-grams| + |ref n-grams|)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand, ref = ngrams(candidate, n), ngrams(reference, n)
    overlap = sum(min(c, ref[g]) for g, c in cand.items())
    nc, nr = sum(cand.values()), sum(ref.values())
    precision = overlap / nc if nc else 0.0
    recall = overlap / nr if nr else 0.0
    f = 2.0 * overlap / (nc + nr) if nc + nr else 0.0
    return precision, recall, f


def corpus_rouge(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], n: int) -> float:
    """Mean sentence-level ROUGE-n f-score."""
    if len(candidates) != len(references):
        raise InputError(f"{len(candidates)} candidates for {len(references)} references")
    if not candidates:
        return 0.0
    return sum(rouge_n(c, r, n)[2] for c, r in zip(candidates, references)) / len(candidates)


class NgramLM:
    """Interpolated trigram model over maximum-likelihood estimates.

    ``p(w | u v) = l3 * P3(w | u v) + l2 * P2(w | v) + l1 * P1(w)``. When a
    history was never seen, its order falls back to the interpolated
    lower-order estimate so every conditional stays normalized. ``P1``
    reserves ``floor = 1 / (10 * |vocab|)`` for UNK, which scores every
    unseen word.
    """

    order = 3

    def __init__(self, sentences: Iterable[Sequence[str]] = (), weights=LM_WEIGHTS):
        if len(weights) != 3 or abs(sum(weights) - 1.0) > 1e-12 or min(weights) < 0:
            raise ValueError("weights must be three non-negative numbers summing to 1")
        self.weights = tuple(weights)
        self.uni: Counter = Counter()
        self.bi: Counter = Counter()
        self.tri: Counter = Counter()
        self.bi_hist: Counter = Counter()
        self.tri_hist: Counter = Counter()
        for sent in sentences:
            padded = [BOS, BOS, *sent, EOS]
            for i in range(2, len(padded)):
                u, v, w = padded[i - 2], padded[i - 1], padded[i]
                self.uni[w] += 1
                self.bi[v, w] += 1
                self.bi_hist[v] += 1
                self.tri[u, v, w] += 1
                self.tri_hist[u, v] += 1
        self.total = sum(self.uni.values())
        self.vocab = set(self.uni) | {EOS, UNK}
        self.floor = 1.0 / (10 * len(self.vocab))
        self._uniform = None

    @classmethod
    def uniform(cls, tokens: Iterable[str]) -> "NgramLM":
        """A unigram-only model uniform over ``tokens`` ∪ {EOS, UNK}."""
        lm = cls(weights=(0.0, 0.0, 1.0))
        lm.vocab = set(tokens) | {EOS, UNK}
        lm._uniform = 1.0 / len(lm.vocab)
        return lm

    def _map(self, w: str) -> str:
        return w if w in self.vocab else UNK

    def p1(self, w: str) -> float:
        if self._uniform is not None:
            return self._uniform
        w = self._map(w)
        p = (1.0 - self.floor) * self.uni[w] / self.total
        return p + self.floor if w == UNK else p

    def prob(self, w: str, history: Sequence[str]) -> float:
        """``p(w | history)``; only the last two history words matter."""
        hist = [BOS, BOS, *history][-2:]
        u, v = (self._map(x) if x != BOS else BOS for x in hist)
        w = self._map(w)
        if self._uniform is not None:
            return self._uniform
        l3, l2, l1 = self.weights
        ml2 = self.bi[v, w] / self.bi_hist[v] if self.bi_hist[v] else self.p1(w)
        lower = (l2 * ml2 + l1 * self.p1(w)) / (l2 + l1) if l2 + l1 else ml2
        h = self.tri_hist[u, v]
        ml3 = self.tri[u, v, w] / h if h else lower
        return l3 * ml3 + l2 * ml2 + l1 * self.p1(w)

    def sentence_logprob(self, sent: Sequence[str]) -> tuple[float, int]:
        """Natural-log probability of ``sent`` + EOS and the number of scored tokens."""
        words = [*sent, EOS]
        lp = 0.0
        for i, w in enumerate(words):
            lp += math.log(self.prob(w, words[max(0, i - 2): i]))
        return lp, len(words)


def train_lm(target_sentences: Iterable[Sequence[str]], weights=LM_WEIGHTS) -> NgramLM:
    sentences = list(target_sentences)
    if not sentences:
        raise InputError("language model corpus is empty")
    return NgramLM(sentences, weights)


def perplexity(lm: NgramLM, texts: Sequence[Sequence[str]]) -> float:
    """``exp(-sum ln p / W)`` over all scored tokens, EOS included."""
    if not texts:
        raise InputError("no texts to score")
    total, count = 0.0, 0
    for sent in texts:
        lp, n = lm.sentence_logprob(sent)
        total += lp
        count += n
    return math.exp(-total / count)


@dataclass
class QualityReport:
    ppl: float | None
    length: float
    unk: float
    copy: float


def quality_stats(outputs: Sequence[Sequence[str]], sources: Sequence[Sequence[str]],
                  lm: NgramLM | None = None) -> QualityReport:
    """Mean output length, UNK% and Copy% over token occurrences, plus PPL
    when a language model is supplied."""
    if len(outputs) != len(sources):
        raise InputError(f"{len(outputs)} outputs for {len(sources)} sources")
    tokens = unk = copied = 0
    for out, src in zip(outputs, sources):
        present = set(src)
        tokens += len(out)
        unk += sum(1 for t in out if t == UNK)
        copied += sum(1 for t in out if t in present)
    ppl = perplexity(lm, outputs) if lm is not None and outputs else None
    if not tokens:
        return QualityReport(ppl, 0.0, 0.0, 0.0)
    return QualityReport(ppl, tokens / len(outputs), 100.0 * unk / tokens, 100.0 * copied / tokens)


def lead_baseline(source: Sequence[str], k: int = LEAD_SUMMARIZATION) -> list[str]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return list(source[:k])


def metric_report(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]],
                  sources: Sequence[Sequence[str]], lm: NgramLM) -> list[tuple[str, float]]:
    q = quality_stats(candidates, sources, lm)
    return [
        ("ROUGE-1", corpus_rouge(candidates, references, 1)),
        ("ROUGE-2", corpus_rouge(candidates, references, 2)),
        ("PPL", q.ppl),
        ("Length", q.length),
        ("UNK%", q.unk),
        ("Copy%", q.copy),
    ]


def format_report(rows: Sequence[tuple[str, float]]) -> str:
    return "".join(f"{name}\t{value:.6f}\n" for name, value in rows)
