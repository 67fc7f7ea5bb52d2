"""Input checks shared by the estimators."""

import numpy as np


def _as_text(s, what):
    if isinstance(s, str):
        text = s.strip()
    elif isinstance(s, (list, tuple)) and all(isinstance(t, str) for t in s):
        text = " ".join(s).strip()
    else:
        raise TypeError(f"{what} must be a string or a list of tokens, got {type(s).__name__}")
    if not text:
        raise ValueError(f"{what} is empty")
    return text


def check_sentences(X):
    if isinstance(X, str):
        raise TypeError("expected a list of sentences, got a single string")
    out = [_as_text(s, f"sentence {i}") for i, s in enumerate(X)]
    if not out:
        raise ValueError("no sentences given")
    return out


def check_pairs(X, min_pairs=1):
    out = []
    for i, pair in enumerate(X):
        if isinstance(pair, str) or len(pair) < 2:
            raise ValueError(f"item {i} is not a sentence pair")
        out.append((_as_text(pair[0], f"pair {i}, first sentence"), _as_text(pair[1], f"pair {i}, second sentence")))
    if len(out) < min_pairs:
        raise ValueError(f"need at least {min_pairs} sentence pairs, got {len(out)}")
    return out


def check_scores(y, n):
    y = np.asarray(y, dtype=np.float64)
    if y.ndim != 1 or y.shape[0] != n:
        raise ValueError(f"expected {n} scores, got shape {y.shape}")
    if not np.all(np.isfinite(y)):
        raise ValueError("scores must be finite")
    return y
