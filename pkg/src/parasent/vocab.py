"""Vocabulary, word-vector ingestion and token encoding."""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigError, FormatError
from .numeric import RandomSource

__all__ = ["EmbeddingTable", "TokenSequence", "encode", "load_embeddings", "tokenize"]

UNK = "__UNK__"
SOS = "__SOS__"
EOS = "__EOS__"
RESERVED = (UNK, SOS, EOS)

# spread of the seeded perturbation that separates SOS/EOS from the mean vector
TAG_NOISE = 0.01


@dataclass(frozen=True)
class TokenSequence:
    indices: tuple
    tokens: tuple = ()

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    def reversed(self):
        return TokenSequence(self.indices[::-1], self.tokens[::-1])


@dataclass
class EmbeddingTable:
    """Vocabulary plus the trainable word-vector matrix.

    ``W_w_initial`` is a read-only snapshot taken at construction; the drift
    penalty anchors to it.
    """

    vocab: dict
    W_w: np.ndarray
    W_w_initial: np.ndarray = field(default=None)

    def __post_init__(self):
        self.W_w = np.asarray(self.W_w)
        if self.W_w.ndim != 2 or self.W_w.shape[0] != len(self.vocab):
            raise ConfigError(f"matrix shape {self.W_w.shape} does not match vocabulary of {len(self.vocab)}")
        for tok in RESERVED:
            if tok not in self.vocab:
                raise ConfigError(f"vocabulary is missing reserved token {tok}")
        if self.W_w_initial is None:
            self.W_w_initial = self.W_w.copy()
        else:
            self.W_w_initial = np.array(self.W_w_initial, copy=True)
        if self.W_w_initial.shape != self.W_w.shape:
            raise ConfigError("W_w and W_w_initial must have identical shapes")
        self.W_w_initial.flags.writeable = False

    @property
    def dim(self):
        return self.W_w.shape[1]

    @property
    def unk_index(self):
        return self.vocab[UNK]

    @property
    def sos_index(self):
        return self.vocab[SOS]

    @property
    def eos_index(self):
        return self.vocab[EOS]

    def __len__(self):
        return len(self.vocab)

    def tokens(self):
        """Tokens in index order."""
        out = [None] * len(self.vocab)
        for tok, i in self.vocab.items():
            out[i] = tok
        return out

    def with_matrix(self, W_w):
        """A table sharing this vocabulary and initial snapshot, with new vectors."""
        return EmbeddingTable(self.vocab, np.array(W_w, copy=True), self.W_w_initial)

    @classmethod
    def from_vectors(cls, tokens, vectors, seed=0, dtype=np.float32):
        """Build a table from parallel token/vector lists and append the reserved rows."""
        vectors = np.asarray(vectors, dtype=np.float64)
        if len(tokens) == 0:
            raise FormatError("no embeddings loaded")
        mean = vectors.mean(axis=0)
        rng = RandomSource(seed)
        sos = mean + rng.normal(TAG_NOISE, size=mean.shape)
        eos = mean + rng.normal(TAG_NOISE, size=mean.shape)
        vocab = {tok: i for i, tok in enumerate(tokens)}
        for tok in RESERVED:
            vocab[tok] = len(vocab)
        W = np.vstack([vectors, mean, sos, eos]).astype(dtype)
        return cls(vocab, W)


def load_embeddings(stream, seed=0, dtype=np.float32):
    """Read ``token f1 ... fd`` lines into an :class:`EmbeddingTable`.

    ``stream`` is any iterable of text lines (an open file works). Repeated
    tokens keep their last vector and trigger a ``UserWarning``. The UNK row
    is the mean of all loaded vectors; SOS/EOS rows are the mean plus small
    seeded noise.
    """
    rows = {}
    dim = None
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\n").rstrip("\r")
        if not line.strip():
            continue
        parts = line.split(" ")
        token, fields = parts[0], parts[1:]
        if not token:
            raise FormatError("line starts with a space; expected a token", lineno)
        if token in RESERVED:
            raise FormatError(f"token {token!r} is reserved", lineno)
        try:
            vec = [float(x) for x in fields]
        except ValueError:
            raise FormatError("non-numeric vector field", lineno) from None
        if not vec:
            raise FormatError(f"token {token!r} has no vector", lineno)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise FormatError(f"expected {dim} values, found {len(vec)}", lineno)
        if token in rows:
            warnings.warn(f"duplicate embedding for {token!r} at line {lineno}; keeping the last one",
                          UserWarning, stacklevel=2)
        rows[token] = vec
    if not rows:
        raise FormatError("no embeddings loaded")
    tokens = list(rows)
    return EmbeddingTable.from_vectors(tokens, [rows[t] for t in tokens], seed=seed, dtype=dtype)


def tokenize(sentence):
    """Split a pre-tokenized sentence on single spaces."""
    return [t for t in sentence.strip().split(" ") if t]


def encode(tokens, table, add_sos=False, add_eos=False):
    """Map surface tokens to a :class:`TokenSequence` without growing the vocabulary."""
    if isinstance(tokens, str):
        tokens = tokenize(tokens)
    if not tokens and not (add_sos or add_eos):
        raise ValueError("empty sentence")
    vocab = table.vocab
    unk = vocab[UNK]
    surface = [t.lower() for t in tokens]
    indices = [vocab.get(t, unk) for t in surface]
    if add_sos:
        indices.insert(0, vocab[SOS])
        surface.insert(0, SOS)
    if add_eos:
        indices.append(vocab[EOS])
        surface.append(EOS)
    return TokenSequence(tuple(indices), tuple(surface))
