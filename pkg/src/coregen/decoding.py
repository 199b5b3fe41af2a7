"""Greedy and beam search over the combined copy/generate distribution.

Scores are natural-log probabilities of the merged distribution, where a
word reachable both by copying and by generation carries the sum of the two
terms. Ties prefer the word whose copy term is larger, then the
lexicographically smaller word.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .model import CoReModel, combine_parts, copy_distribution, prepare_sources
from .ndmath import Tensor
from .training import Resources
from .vocab import BOS, EOS, RestrictedVocab, full_vocab

COPY, GENERATE = "copy", "generate"
DEFAULT_MAX_LEN = 50


@dataclass
class Hypothesis:
    tokens: list[str] = field(default_factory=list)
    logprob: float = 0.0
    step_logprobs: list[float] = field(default_factory=list)
    modes: list[str] = field(default_factory=list)
    lambdas: list[float] = field(default_factory=list)
    state: np.ndarray | None = None

    @property
    def finished(self) -> bool:
        return bool(self.tokens) and self.tokens[-1] == EOS

    @property
    def score(self) -> float:
        """Mean log-probability per emitted token (EOS included)."""
        return self.logprob / len(self.tokens) if self.tokens else 0.0

    def output(self) -> list[str]:
        return self.tokens[:-1] if self.finished else list(self.tokens)

    def trace(self) -> str:
        """TSV ``position, token, mode, lambda`` per emitted token."""
        return "".join(f"{i}\t{tok}\t{mode}\t{lam:.6f}\n"
                       for i, (tok, mode, lam) in enumerate(zip(self.tokens, self.modes, self.lambdas), 1))


class _Session:
    """Encoded source plus cached generator rows for repeated steps."""

    def __init__(self, model: CoReModel, res: Resources, source: Sequence[str], restrict: bool):
        self.model, self.res = model, res
        ids, mask, tokens = prepare_sources([source], res.source)
        self.enc = model.encode(ids, mask, tokens)
        self.tokens = tokens[0]
        self.vg: RestrictedVocab = res.restricted(source) if restrict else full_vocab(res.target)
        self.rows = model.output_rows(self.vg.ids)
        self.s0 = model.init_state(self.enc).data[0]

    def step(self, prev: str, state: np.ndarray) -> tuple[list[tuple], float, np.ndarray]:
        """Ranked candidates ``(word, prob, copy_term, gen_term)``, lambda, new state."""
        model, v = self.model, self.res.target
        y = [v.id(prev)]
        s_prev = Tensor(state[None, :])
        alpha, context = model.attend(s_prev, self.enc)
        s_t = model.decode_step(y, s_prev, context)
        p_gen = model.generate_distribution(y, s_t, context, self.vg.ids, rows=self.rows).data[0]
        lam = float(model.predict_mode(s_t).data[0])
        p_copy = copy_distribution(alpha.data[0], self.tokens)
        parts = combine_parts(lam, p_copy, p_gen, self.vg, v)
        ranked = sorted(((w, c + g, c, g) for w, (c, g) in parts.items()), key=_rank_key)
        return ranked, lam, s_t.data[0]


def _rank_key(cand):
    word, p, c, g = cand
    return (-p, -(c >= g), word)


def _extend(h: Hypothesis, cand, lam: float, state: np.ndarray) -> Hypothesis:
    word, p, c, g = cand
    lp = math.log(p) if p > 0 else -math.inf
    return Hypothesis(
        tokens=h.tokens + [word],
        logprob=h.logprob + lp,
        step_logprobs=h.step_logprobs + [lp],
        modes=h.modes + [COPY if c >= g else GENERATE],
        lambdas=h.lambdas + [lam],
        state=state,
    )


def greedy_decode(model: CoReModel, res: Resources, source: Sequence[str],
                  max_len: int = DEFAULT_MAX_LEN, restrict: bool = True) -> Hypothesis:
    """Emit the argmax word of the combined distribution until EOS or ``max_len``.

    ``restrict=False`` lets the generator softmax over the whole target
    vocabulary instead of the source's restricted vocabulary.
    """
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    sess = _Session(model, res, source, restrict)
    h = Hypothesis(state=sess.s0)
    prev = BOS
    for _ in range(max_len):
        ranked, lam, state = sess.step(prev, h.state)
        h = _extend(h, ranked[0], lam, state)
        prev = ranked[0][0]
        if prev == EOS:
            break
    return h


def beam_decode(model: CoReModel, res: Resources, source: Sequence[str], beam_width: int = 5,
                max_len: int = DEFAULT_MAX_LEN, restrict: bool = True) -> Hypothesis:
    """Beam search on cumulative log-probability; finished hypotheses are
    compared by mean log-probability per token."""
    if beam_width < 1:
        raise ValueError("beam_width must be >= 1")
    if max_len < 1:
        raise ValueError("max_len must be >= 1")
    sess = _Session(model, res, source, restrict)
    live = [Hypothesis(state=sess.s0)]
    finished: list[Hypothesis] = []
    for _ in range(max_len):
        pool = []
        for rank, h in enumerate(live):
            prev = h.tokens[-1] if h.tokens else BOS
            ranked, lam, state = sess.step(prev, h.state)
            for cand in ranked[:beam_width]:
                _, p, c, g = cand
                total = h.logprob + (math.log(p) if p > 0 else -math.inf)
                pool.append(((-total, rank) + _rank_key(cand), h, cand, lam, state))
        pool.sort(key=lambda item: item[0])
        live = []
        for _, h, cand, lam, state in pool[:beam_width]:
            nh = _extend(h, cand, lam, state)
            (finished if nh.finished else live).append(nh)
        if not live:
            break
    finished.extend(live)
    return min(finished, key=lambda h: (-h.score, h.tokens))


def decode_corpus(model: CoReModel, res: Resources, sources: Sequence[Sequence[str]],
                  beam_width: int = 1, max_len: int = DEFAULT_MAX_LEN) -> list[Hypothesis]:
    if beam_width == 1:
        return [greedy_decode(model, res, s, max_len) for s in sources]
    return [beam_decode(model, res, s, beam_width, max_len) for s in sources]


def format_outputs(hyps: Sequence[Hypothesis]) -> str:
    return "".join(" ".join(h.output()) + "\n" for h in hyps)
