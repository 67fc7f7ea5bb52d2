"""Stochastic regularizers applied during transfer and supervised training."""

import numpy as np

from .exceptions import ConfigError
from .numeric import seeded_permutation

__all__ = ["embedding_dropout", "scramble", "word_dropout"]


def _check_rate(rate, name):
    if not 0.0 <= rate <= 1.0:
        raise ConfigError(f"{name} must lie in [0, 1], got {rate}")


def word_dropout(seq, rate, rng):
    """Remove each token independently with probability ``rate``.

    If every token would be removed the sequence comes back unchanged.
    Accepts a :class:`~parasent.vocab.TokenSequence` or a plain list.
    """
    _check_rate(rate, "word dropout rate")
    if rate == 0 or len(seq) == 0:
        return seq
    keep = ~rng.bernoulli(rate, size=len(seq))
    if not keep.any():
        return seq
    if hasattr(seq, "indices"):
        tokens = seq.tokens
        return type(seq)(tuple(i for i, k in zip(seq.indices, keep) if k),
                         tuple(t for t, k in zip(tokens, keep) if k) if tokens else ())
    return [tok for tok, k in zip(seq, keep) if k]


def embedding_dropout(x, rate, rng, train=True):
    """Inverted dropout on embedding coordinates; identity when ``train`` is false."""
    if not 0.0 <= rate < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {rate}")
    if not train or rate == 0:
        return x
    dtype = getattr(x, "dtype", np.float64)
    keep = ~rng.bernoulli(rate, size=x.shape)
    return x * (keep.astype(dtype) / dtype.type(1.0 - rate))


def _permute(seq, perm):
    if hasattr(seq, "indices"):
        tokens = seq.tokens
        return type(seq)(tuple(seq.indices[j] for j in perm),
                         tuple(tokens[j] for j in perm) if tokens else ())
    return [seq[j] for j in perm]


def scramble(batch, rate, rng):
    """With probability ``rate`` per pair, shuffle the words of both sentences.

    Returns a new list of pairs; the input is not modified. Must run before
    negative selection.
    """
    _check_rate(rate, "scramble rate")
    if rate == 0:
        return list(batch)
    out = []
    for s1, s2 in batch:
        if rng.random() < rate:
            s1 = _permute(s1, seeded_permutation(len(s1), rng))
            s2 = _permute(s2, seeded_permutation(len(s2), rng))
        out.append((s1, s2))
    return out
