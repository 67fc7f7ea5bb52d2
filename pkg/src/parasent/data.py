"""Readers for the tab-separated corpora and a synthetic paraphrase generator."""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import FormatError
from .numeric import RandomSource
from .vocab import EmbeddingTable

__all__ = [
    "SyntheticCorpus",
    "open_text",
    "read_pair_corpus",
    "read_scored_pairs",
    "rescale_gold",
    "synthetic_paraphrase_corpus",
    "synthetic_scored_pairs",
]


def open_text(path):
    return open(Path(path), encoding="utf-8")


def _split(line, ncols, lineno):
    parts = line.rstrip("\n").rstrip("\r").split("\t")
    if len(parts) != ncols:
        raise FormatError(f"expected {ncols} tab-separated columns, found {len(parts)}", lineno)
    if not parts[0].strip() or not parts[1].strip():
        raise FormatError("empty sentence", lineno)
    return parts


def read_pair_corpus(stream):
    """``sentence1 TAB sentence2`` lines; blank lines are skipped."""
    pairs = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        s1, s2 = _split(line, 2, lineno)
        pairs.append((s1.strip(), s2.strip()))
    return pairs


def read_scored_pairs(stream):
    """``sentence1 TAB sentence2 TAB score`` lines."""
    rows = []
    for lineno, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        s1, s2, score = _split(line, 3, lineno)
        try:
            y = float(score)
        except ValueError:
            raise FormatError(f"score {score!r} is not a number", lineno) from None
        if not np.isfinite(y):
            raise FormatError("score is not finite", lineno)
        rows.append((s1.strip(), s2.strip(), y))
    return rows


def rescale_gold(y, gold_min=0.0, gold_max=5.0, K=5):
    """Affinely map gold scores from ``[gold_min, gold_max]`` onto ``[1, K]``."""
    y = np.asarray(y, dtype=np.float64)
    return 1.0 + (y - gold_min) * (K - 1) / (gold_max - gold_min)


@dataclass
class SyntheticCorpus:
    """Toy paraphrase data: words grouped into synonym sets ("concepts")."""

    train: list
    held_out: list
    table: EmbeddingTable
    concepts: list = field(default_factory=list)

    def embedding_lines(self):
        tokens = self.table.tokens()
        return [" ".join([tokens[i]] + [repr(float(x)) for x in row])
                for i, row in enumerate(self.table.W_w[:-3])]


def _sentence(concepts, synonyms, rng):
    return " ".join(synonyms[c][rng.integer(len(synonyms[c]))] for c in concepts)


def synthetic_paraphrase_corpus(n_pairs=500, vocab_size=200, dim=16, seed=0, synonyms=6, n_held_out=100,
                                min_len=4, max_len=10, scale=0.01):
    """Generate paraphrase pairs that agree in meaning but rarely in surface form.

    The vocabulary is split into ``vocab_size // synonyms`` synonym sets. A
    pair draws one random concept sequence and realizes it twice, picking a
    random synonym for every position. Word vectors are independent Gaussian
    draws, so synonymy is not visible until training teaches it.
    """
    rng = RandomSource(seed)
    words = [f"w{i:03d}" for i in range(vocab_size)]
    n_concepts = vocab_size // synonyms
    sets = [words[c * synonyms:(c + 1) * synonyms] for c in range(n_concepts)]

    def make_pair():
        length = min_len + rng.integer(max_len - min_len + 1)
        concepts = [rng.integer(n_concepts) for _ in range(length)]
        return _sentence(concepts, sets, rng), _sentence(concepts, sets, rng)

    train = [make_pair() for _ in range(n_pairs)]
    held_out = [make_pair() for _ in range(n_held_out)]
    vectors = rng.normal(scale, size=(vocab_size, dim))
    table = EmbeddingTable.from_vectors(words, vectors, seed=seed)
    return SyntheticCorpus(train, held_out, table, sets)


def synthetic_scored_pairs(n_pairs=50, vocab_size=60, dim=8, seed=0, min_len=3, max_len=7, scale=0.3):
    """Pairs scored 0-5 by word overlap (5 = same bag of words)."""
    rng = RandomSource(seed)
    words = [f"t{i:02d}" for i in range(vocab_size)]
    rows = []
    for _ in range(n_pairs):
        length = min_len + rng.integer(max_len - min_len + 1)
        s1 = [words[rng.integer(vocab_size)] for _ in range(length)]
        keep = rng.integer(length + 1)
        s2 = s1[:keep] + [words[rng.integer(vocab_size)] for _ in range(length - keep)]
        overlap = len(set(s1) & set(s2)) / len(set(s1) | set(s2))
        rows.append((" ".join(s1), " ".join(s2), 5.0 * overlap))
    vectors = rng.normal(scale, size=(vocab_size, dim))
    table = EmbeddingTable.from_vectors(words, vectors, seed=seed)
    return rows, table
