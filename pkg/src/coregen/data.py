"""Parallel-corpus files and small synthetic corpora with known properties."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .alignment import Pair


def parse_corpus(text: str) -> list[tuple[list[str], list[str]]]:
    """One pair per line, ``source<TAB>target``, tokens space-separated."""
    pairs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        src, sep, tgt = line.partition("\t")
        if not sep:
            raise ValueError(f"corpus line {lineno}: missing tab between source and target")
        pairs.append((src.split(), tgt.split()))
    return pairs


def read_corpus(path) -> list[tuple[list[str], list[str]]]:
    return parse_corpus(Path(path).read_text(encoding="utf-8"))


def read_sources(path) -> list[list[str]]:
    """Sources from a corpus file, or from a plain one-sentence-per-line file."""
    out = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            out.append(line.partition("\t")[0].split())
    return out


def read_sentences(path) -> list[list[str]]:
    return [line.split() for line in Path(path).read_text(encoding="utf-8").splitlines()]


def dumps_corpus(pairs: Sequence[Pair]) -> str:
    return "".join(" ".join(s) + "\t" + " ".join(t) + "\n" for s, t in pairs)


def write_corpus(path, pairs: Sequence[Pair]) -> None:
    Path(path).write_text(dumps_corpus(pairs), encoding="utf-8")


# ---------------------------------------------------------------- synthetic

def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def copy_corpus(n_pairs: int = 50, vocab_size: int = 20, min_len: int = 3, max_len: int = 6,
                seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """Targets identical to their sources."""
    rng = np.random.default_rng(seed)
    words = _words("w", vocab_size)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        src = [words[i] for i in rng.integers(0, vocab_size, size=length)]
        pairs.append((src, list(src)))
    return pairs


def rewrite(word: str) -> str:
    """The fixed 'paraphrase' of a source word used by the synthetic corpora."""
    return "r_" + word


def mixed_corpus(n_pairs: int = 50, vocab_size: int = 20, min_len: int = 4, max_len: int = 6,
                 seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """Even target positions copy the source word; odd positions carry its
    rewrite, which never occurs in any source."""
    rng = np.random.default_rng(seed)
    words = _words("w", vocab_size)
    pairs = []
    for _ in range(n_pairs):
        length = int(rng.integers(min_len, max_len + 1))
        src = [words[i] for i in rng.integers(0, vocab_size, size=length)]
        tgt = [w if i % 2 == 0 else rewrite(w) for i, w in enumerate(src)]
        pairs.append((src, tgt))
    return pairs


def coverage_corpus(n_pairs: int, copy_rate: float, align_rate: float, target_len: int = 20,
                    source_len: int = 20, vocab_size: int = 500, n_frequent: int = 50,
                    seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """Targets with exactly ``round(copy_rate * target_len)`` copied words,
    ``round(align_rate * target_len)`` rewrites of source words, and the rest
    split between a small set of frequent fillers and one-off rare words.

    Copied, rewritten, filler and rare words live in disjoint namespaces, so
    the copy rate of the corpus is known exactly.
    """
    if copy_rate + align_rate > 1:
        raise ValueError("copy_rate + align_rate must not exceed 1")
    rng = np.random.default_rng(seed)
    words = _words("w", vocab_size)
    fillers = _words("f", n_frequent)
    n_copy = round(copy_rate * target_len)
    n_align = round(align_rate * target_len)
    n_rest = target_len - n_copy - n_align
    pairs = []
    rare = 0
    for _ in range(n_pairs):
        src = [words[i] for i in rng.integers(0, vocab_size, size=source_len)]
        picks = rng.integers(0, source_len, size=n_copy + n_align)
        tgt = [src[i] for i in picks[:n_copy]]
        tgt += [rewrite(src[i]) for i in picks[n_copy:]]
        for j in range(n_rest):
            if j % 2 == 0:
                tgt.append(fillers[int(rng.integers(0, n_frequent))])
            else:
                tgt.append(f"z{rare}")
                rare += 1
        tgt = [tgt[i] for i in rng.permutation(len(tgt))]
        pairs.append((src, tgt))
    return pairs


def large_vocab_corpus(n_pairs: int = 2500, source_len: int = 12, target_len: int = 10,
                       vocab_size: int = 20000, seed: int = 0) -> list[tuple[list[str], list[str]]]:
    """A corpus whose target vocabulary has at least ``vocab_size`` words:
    each target copies half its words and rewrites the rest."""
    rng = np.random.default_rng(seed)
    words = _words("w", vocab_size)
    pairs = []
    for i in range(n_pairs):
        # walk the word list so every word appears as a source word at least once
        start = (i * source_len) % vocab_size
        base = [words[(start + j) % vocab_size] for j in range(source_len // 2)]
        extra = [words[j] for j in rng.integers(0, vocab_size, size=source_len - len(base))]
        src = base + extra
        half = target_len // 2
        tgt = src[:half] + [rewrite(w) for w in src[half: target_len]]
        pairs.append((src, tgt))
    return pairs
