"""Vocabularies, the per-source restricted generation vocabulary, and
target-word coverage analysis."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .alignment import AlignmentTable, Pair, check_corpus, expand

PAD, UNK, BOS, EOS = "<pad>", "<unk>", "<s>", "</s>"
RESERVED = (PAD, UNK, BOS, EOS)
PAD_ID, UNK_ID, BOS_ID, EOS_ID = range(4)

DEFAULT_FREQUENT_SIZE = 2000
COVERAGE_SPECS = ("X", "X+A(X)", "X+A(X)+U", "top-N")


class Vocabulary:
    """Token <-> id mapping. Ids follow list order; UNK is always present."""

    def __init__(self, tokens: Iterable[str]):
        self.tokens: list[str] = list(dict.fromkeys(tokens))
        if UNK not in self.tokens:
            raise ValueError("vocabulary must contain the UNK token")
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.unk_id = self.index[UNK]

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __iter__(self):
        return iter(self.tokens)

    def __eq__(self, other):
        return isinstance(other, Vocabulary) and self.tokens == other.tokens

    def id(self, token: str) -> int:
        return self.index.get(token, self.unk_id)

    def ids(self, tokens: Iterable[str]) -> list[int]:
        return [self.index.get(t, self.unk_id) for t in tokens]

    def token(self, i: int) -> str:
        return self.tokens[i]

    def dumps(self) -> str:
        return "".join(t + "\n" for t in self.tokens)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(Path(path).read_text(encoding="utf-8").splitlines())


def _by_frequency(counts: Counter) -> list[str]:
    return [t for t, _ in sorted(counts.items(), key=lambda tc: (-tc[1], tc[0]))]


def _side(corpus: Sequence[Pair], side: str) -> Iterable[Sequence[str]]:
    if side not in ("source", "target"):
        raise ValueError(f"side must be 'source' or 'target', got {side!r}")
    k = 0 if side == "source" else 1
    return (pair[k] for pair in corpus)


def token_counts(corpus: Sequence[Pair], side: str = "target") -> Counter:
    counts: Counter = Counter()
    for seq in _side(corpus, side):
        counts.update(seq)
    for tok in RESERVED:
        counts.pop(tok, None)
    return counts


def build_vocab(corpus: Sequence[Pair], side: str = "target", min_count: int = 1) -> Vocabulary:
    """Reserved tokens, then every token seen ``min_count`` times or more,
    most frequent first (ties lexicographic)."""
    check_corpus(corpus)
    counts = token_counts(corpus, side)
    kept = [t for t in _by_frequency(counts) if counts[t] >= min_count]
    return Vocabulary([*RESERVED, *kept])


def frequent_table(corpus: Sequence[Pair], size: int = DEFAULT_FREQUENT_SIZE) -> Vocabulary:
    """UNK plus the ``size`` most frequent target tokens."""
    if size < 1:
        raise ValueError("size must be >= 1")
    ranked = _by_frequency(token_counts(corpus, "target"))
    return Vocabulary([UNK, *ranked[:size]])


def top_n(vocab: Vocabulary, n: int) -> set[str]:
    """The first ``n`` non-reserved tokens of a frequency-ordered vocabulary."""
    return set([t for t in vocab.tokens if t not in RESERVED][:n])


@dataclass(frozen=True)
class RestrictedVocab:
    """Sorted target-vocabulary ids available to the generator for one source."""

    ids: np.ndarray
    from_alignment: np.ndarray  # bool per id; False means it came from U / UNK only

    def __len__(self):
        return len(self.ids)

    def __contains__(self, i):
        j = np.searchsorted(self.ids, i)
        return bool(j < len(self.ids) and self.ids[j] == i)

    def position(self, i: int) -> int:
        """Index of id ``i`` within ``ids`` or -1."""
        j = int(np.searchsorted(self.ids, i))
        return j if j < len(self.ids) and self.ids[j] == i else -1


def restricted_vocab(
    source_tokens: Iterable[str],
    table: AlignmentTable,
    u: Vocabulary | Iterable[str],
    v: Vocabulary,
) -> RestrictedVocab:
    aligned = {v.index[t] for t in expand(table, source_tokens) if t in v.index}
    frequent = {v.index[t] for t in u if t in v.index}
    ids = np.array(sorted(aligned | frequent | {v.unk_id}), dtype=np.int64)
    flags = np.array([i in aligned for i in ids], dtype=bool)
    return RestrictedVocab(ids=ids, from_alignment=flags)


def full_vocab(v: Vocabulary) -> RestrictedVocab:
    """Unrestricted generation over all of V (the canonical decoder)."""
    ids = np.arange(len(v), dtype=np.int64)
    return RestrictedVocab(ids=ids, from_alignment=np.zeros(len(v), dtype=bool))


def coverage_ratio(
    test: Sequence[Pair],
    spec: str,
    table: AlignmentTable | None = None,
    u: Vocabulary | None = None,
    v: Vocabulary | None = None,
    n: int = 30000,
) -> float:
    """Percentage of test target tokens (by occurrence) inside the chosen set.

    ``spec`` is one of ``COVERAGE_SPECS``: the source words alone, plus their
    aligned targets, plus the frequent table, or the ``n`` most frequent words
    of ``v``. ``table``, ``u`` and ``v`` must come from the training split.
    """
    if spec not in COVERAGE_SPECS:
        raise ValueError(f"unknown coverage spec {spec!r}; expected one of {COVERAGE_SPECS}")
    if spec in ("X+A(X)", "X+A(X)+U") and table is None:
        raise ValueError(f"spec {spec!r} needs an alignment table")
    if spec == "X+A(X)+U" and u is None:
        raise ValueError("spec 'X+A(X)+U' needs the frequent table")
    if spec == "top-N" and v is None:
        raise ValueError("spec 'top-N' needs the target vocabulary")
    frequent = set(u) if u is not None else set()
    top = top_n(v, n) if spec == "top-N" else set()
    covered = total = 0
    for src, tgt in test:
        if spec == "top-N":
            allowed = top
        else:
            allowed = set(src)
            if spec != "X":
                allowed |= expand(table, src)
            if spec == "X+A(X)+U":
                allowed |= frequent
        total += len(tgt)
        covered += sum(1 for t in tgt if t in allowed)
    return 100.0 * covered / total if total else 0.0


def coverage_report(rows: Sequence[tuple[str, float]]) -> str:
    return "".join(f"{spec}\t{pct:.2f}\n" for spec, pct in rows)
