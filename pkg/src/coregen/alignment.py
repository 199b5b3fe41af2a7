"""Lexical alignment table p(target | source) estimated with IBM Model 1 EM.

An optional fast_align-style diagonal prior replaces the uniform alignment
distribution with ``p(i | j) ∝ exp(-tension * |i/n - j/m|)`` over source
positions, with a fixed mass reserved for the NULL source word. The tension
is held fixed, so EM over the lexical table remains monotone.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

NULL = "<null>"
DEFAULT_ITERATIONS = 5
NULL_PROB = 0.08  # fast_align's default p0, used only with the diagonal prior
MIN_PROB = 1e-4

Pair = tuple[Sequence[str], Sequence[str]]


class CorpusError(ValueError):
    """Parallel corpus is empty or has an empty side."""


@dataclass
class AlignmentTable:
    """``entries[source]`` is a list of ``(target, p)`` sorted by descending p."""

    entries: dict[str, list[tuple[str, float]]] = field(default_factory=dict)
    k: int | None = None
    log_likelihoods: list[float] = field(default_factory=list)

    def prob(self, source: str, target: str) -> float:
        for t, p in self.entries.get(source, ()):
            if t == target:
                return p
        return 0.0

    def targets(self, source: str) -> list[str]:
        return [t for t, _ in self.entries.get(source, ())]

    def save(self, path) -> None:
        Path(path).write_text(dumps_table(self), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AlignmentTable":
        return loads_table(Path(path).read_text(encoding="utf-8"))


def _ranked(dist: dict[str, float]) -> list[tuple[str, float]]:
    return sorted(dist.items(), key=lambda tp: (-tp[1], tp[0]))


def check_corpus(corpus: Sequence[Pair]) -> None:
    if not corpus:
        raise CorpusError("corpus is empty")
    for i, (src, tgt) in enumerate(corpus):
        if not src or not tgt:
            raise CorpusError(f"pair {i} has an empty side")


def _position_prior(n: int, m: int, tension: float | None) -> list[list[float]]:
    """prior[j][i] for target position j and source slot i (slot 0 is NULL)."""
    if not tension:
        return [[1.0 / (n + 1)] * (n + 1) for _ in range(m)]
    rows = []
    for j in range(m):
        w = [math.exp(-tension * abs((i + 1) / n - (j + 1) / m)) for i in range(n)]
        z = sum(w)
        rows.append([NULL_PROB] + [(1.0 - NULL_PROB) * x / z for x in w])
    return rows


def train_alignment(
    corpus: Sequence[Pair],
    iterations: int = DEFAULT_ITERATIONS,
    diagonal_tension: float | None = None,
) -> AlignmentTable:
    """Estimate an unpruned lexical table by EM.

    Initialization is uniform over the target vocabulary, so the result is a
    deterministic function of the corpus.
    ``table.log_likelihoods[i]`` is the corpus log-likelihood under the
    parameters in force during iteration ``i`` (before its M-step).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    check_corpus(corpus)

    cooc: dict[str, set[str]] = defaultdict(set)
    for src, tgt in corpus:
        for s in (NULL, *src):
            cooc[s].update(tgt)
    n_targets = len(set().union(*cooc.values()))
    t = {s: {w: 1.0 / n_targets for w in ts} for s, ts in cooc.items()}

    priors = [_position_prior(len(src), len(tgt), diagonal_tension) for src, tgt in corpus]
    history = []
    for _ in range(iterations):
        counts: dict[str, dict[str, float]] = defaultdict(lambda: defaultdict(float))
        ll = 0.0
        for (src, tgt), prior in zip(corpus, priors):
            slots = (NULL, *src)
            for j, w in enumerate(tgt):
                scores = [prior[j][i] * t[s][w] for i, s in enumerate(slots)]
                z = math.fsum(scores)
                ll += math.log(z)
                for s, sc in zip(slots, scores):
                    counts[s][w] += sc / z
        history.append(ll)
        t = {}
        for s, row in counts.items():
            z = math.fsum(row.values())
            t[s] = {w: c / z for w, c in row.items()}
    entries = {s: _ranked(row) for s, row in t.items()}
    return AlignmentTable(entries=entries, k=None, log_likelihoods=history)


def corpus_log_likelihood(table: AlignmentTable, corpus: Sequence[Pair],
                          diagonal_tension: float | None = None) -> float:
    """Log-likelihood of ``corpus`` under the (unpruned) table."""
    ll = 0.0
    for src, tgt in corpus:
        prior = _position_prior(len(src), len(tgt), diagonal_tension)
        slots = (NULL, *src)
        for j, w in enumerate(tgt):
            ll += math.log(math.fsum(prior[j][i] * table.prob(s, w) for i, s in enumerate(slots)))
    return ll


def prune_top_k(table: AlignmentTable, k: int) -> AlignmentTable:
    """Keep the ``k`` most probable targets per source word.

    Entries under ``MIN_PROB`` are dropped first; ties go to the
    lexicographically smaller target.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    entries = {}
    for s, ranked in table.entries.items():
        kept = _ranked({t: p for t, p in ranked if p >= MIN_PROB})[:k]
        if kept:
            entries[s] = kept
    return AlignmentTable(entries=entries, k=k, log_likelihoods=list(table.log_likelihoods))


def expand(table: AlignmentTable, source_tokens: Iterable[str]) -> set[str]:
    """Union of aligned targets over the source words (NULL excluded)."""
    out: set[str] = set()
    for s in set(source_tokens):
        if s != NULL:
            out.update(table.targets(s))
    return out


def dumps_table(table: AlignmentTable) -> str:
    lines = []
    for s in sorted(table.entries):
        for t, p in _ranked(dict(table.entries[s])):
            lines.append(f"{s}\t{t}\t{p:.6f}")
    return "".join(line + "\n" for line in lines)


def loads_table(text: str) -> AlignmentTable:
    rows: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ValueError(f"alignment table line {lineno}: expected 3 tab-separated fields")
        rows[parts[0]][parts[1]] = float(parts[2])
    entries = {s: _ranked(r) for s, r in rows.items()}
    longest = max((len(r) for r in entries.values()), default=0)
    return AlignmentTable(entries=entries, k=longest or None)
