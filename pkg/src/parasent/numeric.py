"""Dense kernels, activations and the seeded random source.

Everything here works on plain numpy arrays. The autodiff layer wraps the
same formulas for graph construction, so the two must stay in sync.
"""

import numpy as np
from scipy.special import expit

from .exceptions import DegenerateVectorError, DimensionError

__all__ = [
    "RandomSource",
    "affine",
    "cosine",
    "elementwise",
    "seeded_permutation",
    "sigmoid",
    "softmax",
    "tanh",
]


def affine(M, v, b):
    """Return ``M @ v + b`` after checking shapes."""
    M = np.asarray(M)
    v = np.asarray(v)
    b = np.asarray(b)
    if M.ndim != 2 or v.ndim != 1 or b.ndim != 1:
        raise DimensionError(f"affine expects matrix, vector, vector; got ndim {M.ndim}, {v.ndim}, {b.ndim}")
    if M.shape[1] != v.shape[0]:
        raise DimensionError(f"matrix has {M.shape[1]} columns but vector has length {v.shape[0]}")
    if M.shape[0] != b.shape[0]:
        raise DimensionError(f"matrix has {M.shape[0]} rows but bias has length {b.shape[0]}")
    return M @ v + b


def sigmoid(x):
    """Numerically stable logistic function."""
    x = np.asarray(x)
    if x.dtype.kind != "f":
        x = x.astype(np.float64)
    return expit(x)


def tanh(x):
    return np.tanh(np.asarray(x))


_ELEMENTWISE = {"sigmoid": sigmoid, "tanh": tanh}


def elementwise(f, v):
    """Apply ``f`` (``"sigmoid"``, ``"tanh"`` or a callable) per coordinate."""
    if callable(f):
        return f(np.asarray(v))
    try:
        return _ELEMENTWISE[f](v)
    except KeyError:
        raise ValueError(f"unknown activation {f!r}; expected one of {sorted(_ELEMENTWISE)}") from None


def softmax(v, axis=-1):
    v = np.asarray(v)
    if v.size == 0:
        raise DimensionError("softmax of an empty vector")
    z = v - np.max(v, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def cosine(u, v):
    """Cosine similarity. Zero-norm inputs raise instead of returning 0."""
    u = np.asarray(u)
    v = np.asarray(v)
    if u.shape != v.shape:
        raise DimensionError(f"cosine of shapes {u.shape} and {v.shape}")
    nu = np.sqrt(np.dot(u, u))
    nv = np.sqrt(np.dot(v, v))
    if nu == 0 or nv == 0:
        raise DegenerateVectorError("cosine of a zero-norm vector is undefined")
    return float(np.dot(u, v) / (nu * nv))


class RandomSource:
    """Seeded, single-owner random stream.

    Backed by numpy's PCG64 bit generator. Its raw stream for a given seed
    is the same on every platform; the derived draws (normal, integer) are
    reproducible for a fixed numpy version. Callers draw through the methods
    below only, so the stream position advances the same way on every run.
    """

    algorithm = "pcg64"

    def __init__(self, seed=0):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        self.seed = seed
        self._gen = np.random.Generator(np.random.PCG64(seed))

    def __repr__(self):
        return f"RandomSource(seed={self.seed})"

    @property
    def state(self):
        return self._gen.bit_generator.state

    @state.setter
    def state(self, value):
        self._gen.bit_generator.state = value

    def random(self, size=None):
        """Uniform floats in [0, 1)."""
        return self._gen.random(size)

    def integer(self, high):
        """One uniform integer in ``[0, high)``."""
        return int(self._gen.integers(0, high))

    def normal(self, scale=1.0, size=None):
        return self._gen.normal(0.0, scale, size)

    def uniform(self, low, high, size=None):
        return self._gen.uniform(low, high, size)

    def bernoulli(self, p, size=None):
        """Boolean draws that are True with probability ``p``."""
        return self._gen.random(size) < p


def seeded_permutation(n, rng):
    """Fisher-Yates shuffle of ``range(n)`` driven by ``rng``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = rng.integer(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    return perm
