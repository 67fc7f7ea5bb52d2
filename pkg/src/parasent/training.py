"""Margin-based paraphrase training with in-batch negatives."""

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .exceptions import ConfigError, DegenerateVectorError, NumericalError
from .numeric import RandomSource, seeded_permutation
from .regularization import scramble, word_dropout

__all__ = [
    "Adam",
    "PairBatch",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "compositional_names",
    "hinge_objective",
    "margin_loss",
    "negative_indices",
    "penalty",
    "select_negatives",
    "train_transfer",
]

log = logging.getLogger(__name__)

DELTA_GRID = (0.4, 0.6, 0.8)


@dataclass
class TrainConfig:
    delta: float = 0.4
    lambda_c: float = 0.0
    lambda_w: float = 0.0
    dropout: float = 0.0
    word_dropout: float = 0.0
    scramble: float = 0.0
    epochs: int = 5
    batch_size: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        for name in ("word_dropout", "scramble"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {rate}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.epochs < 0:
            raise ConfigError("epochs must be non-negative")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.lambda_c < 0 or self.lambda_w < 0:
            raise ConfigError("regularization weights must be non-negative")

    @classmethod
    def from_dict(cls, values):
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in values.items() if k in known})


class Adam:
    """Bias-corrected Adam; holds the optimizer state (moments and step count)."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {}
        self.v = {}
        self.t = 0

    def step(self, params, grads, lr=None):
        """Update ``params`` in place."""
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                bad = int(np.size(g) - np.count_nonzero(np.isfinite(g)))
                raise NumericalError(f"non-finite gradient for {name} ({bad} entries) at step {self.t + 1}")
        lr = self.lr if lr is None else lr
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            p = params[name]
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            update = (lr / bc1) * m / (np.sqrt(v / bc2) + self.eps)
            p -= update.astype(p.dtype, copy=False)
        return params


def adam_step(params, grads, state, lr=None):
    """Functional form: returns ``(params, state)`` after one update."""
    state.step(params, grads, lr)
    return params, state


@dataclass
class PairBatch:
    """Sentence pairs plus the chosen negatives.

    Sentences are addressed by flat index ``2 * pair + side``; the negatives
    ``t1[i]``/``t2[i]`` are flat indices of sentences from other pairs.
    """

    pairs: list
    t1: list = None
    t2: list = None

    def __len__(self):
        return len(self.pairs)

    def sentences(self):
        return [s for pair in self.pairs for s in pair]

    def negative(self, i, side):
        flat = (self.t1 if side == 0 else self.t2)[i]
        return self.pairs[flat // 2][flat % 2]


def _similarity_matrix(emb):
    emb = np.asarray(emb, dtype=np.float64)
    norms = np.sqrt((emb * emb).sum(axis=1))
    zero = np.flatnonzero(norms == 0)
    if zero.size:
        raise DegenerateVectorError(f"zero-norm embedding for batch sentence {int(zero[0])}")
    dots = (emb[:, None, :] * emb[None, :, :]).sum(axis=-1)
    return dots / (norms[:, None] * norms[None, :])


def negative_indices(emb):
    """Pick in-batch negatives from a ``(2n, d)`` matrix of sentence embeddings.

    Row ``2i + s`` is side ``s`` of pair ``i``. For each sentence the negative
    is the most cosine-similar sentence belonging to any other pair (either
    side); ties go to the lowest flat index. Returns ``(t1, t2)`` arrays.
    """
    emb = np.asarray(emb)
    if emb.shape[0] % 2:
        raise ValueError("embedding rows must come in pairs")
    n = emb.shape[0] // 2
    if n < 2:
        raise ValueError("no negative candidates: batch needs at least two pairs")
    sims = _similarity_matrix(emb)
    owner = np.arange(2 * n) // 2
    sims[owner[:, None] == owner[None, :]] = -np.inf
    best = np.argmax(sims, axis=1)
    return best[0::2], best[1::2]


def select_negatives(batch, encoder, params):
    """Encode ``batch`` (evaluation mode) and attach negatives."""
    if not isinstance(batch, PairBatch):
        batch = PairBatch(list(batch))
    if len(batch) < 2:
        raise ValueError("no negative candidates: batch needs at least two pairs")
    with ad.no_grad():
        emb = ad._data(encoder.encode(params, batch.sentences()))
    t1, t2 = negative_indices(emb)
    return PairBatch(batch.pairs, [int(i) for i in t1], [int(i) for i in t2])


def hinge_objective(emb, t1, t2, delta):
    """Mean over pairs of the two hinge terms, given flat-indexed embeddings."""
    t1 = np.asarray(t1)
    t2 = np.asarray(t2)
    n = len(t1)
    s1 = emb[0::2]
    s2 = emb[1::2]
    pos = ad.cosine_rows(s1, s2)
    neg1 = ad.cosine_rows(s1, emb[t1])
    neg2 = ad.cosine_rows(s2, emb[t2])
    loss = (ad.relu(delta - pos + neg1) + ad.relu(delta - pos + neg2)).sum()
    return loss / float(n)


def compositional_names(params):
    """Names of the encoder parameters (everything except word vectors and the head)."""
    return [k for k in params if k != "W_w" and not k.startswith("head.")]


def penalty(params, lambda_c=0.0, lambda_w=0.0, W_w_anchor=None, compositional_anchor=None):
    """``λ_c Σ‖W_c − anchor‖² + λ_w ‖W_w − W_w_anchor‖²``.

    Compositional parameters are pulled to zero unless
    ``compositional_anchor`` supplies reference values.
    """
    total = 0.0
    if lambda_c:
        for name in compositional_names(params):
            diff = params[name]
            if compositional_anchor is not None and name in compositional_anchor:
                diff = diff - compositional_anchor[name]
            total = total + lambda_c * (diff * diff).sum()
    if lambda_w:
        if W_w_anchor is None:
            raise ConfigError("the word-vector drift penalty needs W_w_initial")
        diff = W_w_anchor - params["W_w"]
        total = total + lambda_w * (diff * diff).sum()
    return total


def margin_loss(batch, delta, encoder, params, lambda_c=0.0, lambda_w=0.0, W_w_initial=None):
    """Full transfer objective for a batch whose negatives are already chosen."""
    if batch.t1 is None or batch.t2 is None:
        raise ValueError("select negatives before computing the margin loss")
    emb = encoder.encode(params, batch.sentences())
    loss = hinge_objective(emb, batch.t1, batch.t2, delta)
    return loss + penalty(params, lambda_c, lambda_w, W_w_initial)


@dataclass
class TrainResult:
    params: ParameterSet
    epoch_losses: list = field(default_factory=list)
    batch_losses: list = field(default_factory=list)


def iterate_batches(n, batch_size, rng, min_size=2):
    """Shuffled index batches; a short trailing batch is kept if it has ``min_size`` items."""
    order = seeded_permutation(n, rng)
    for start in range(0, n, batch_size):
        chunk = order[start:start + batch_size]
        if len(chunk) >= min_size:
            yield chunk


def perturb_pairs(pairs, config, rng):
    """Scramble, then word-dropout every sentence, in a fixed draw order."""
    pairs = scramble(pairs, config.scramble, rng)
    if config.word_dropout:
        pairs = [(word_dropout(a, config.word_dropout, rng), word_dropout(b, config.word_dropout, rng))
                 for a, b in pairs]
    return pairs


def train_transfer(corpus, config, table, encoder, params=None, init_seed=None):
    """Train ``encoder`` and the word vectors of ``table`` on paraphrase pairs.

    ``corpus`` is a list of ``(s1, s2)`` token sequences. Training runs in
    float32. Returns a :class:`TrainResult` whose ``params`` include ``W_w``.
    """
    corpus = list(corpus)
    if len(corpus) < 2:
        raise ValueError("training needs at least two pairs so negatives exist")
    rng = RandomSource(config.seed)
    if params is None:
        params = encoder.init_params(RandomSource(config.seed if init_seed is None else init_seed))
        params["W_w"] = np.array(table.W_w, dtype=np.float32)
    params = ParameterSet(params).astype(np.float32)
    anchor = np.asarray(table.W_w_initial, dtype=np.float32)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    result = TrainResult(params)

    for epoch in range(config.epochs):
        losses = []
        for chunk in iterate_batches(len(corpus), config.batch_size, rng):
            pairs = perturb_pairs([corpus[i] for i in chunk], config, rng)
            sentences = [s for pair in pairs for s in pair]

            def objective(P):
                emb = encoder.encode(P, sentences, dropout=config.dropout, rng=rng)
                t1, t2 = negative_indices(ad._data(emb))
                loss = hinge_objective(emb, t1, t2, config.delta)
                return loss + penalty(P, config.lambda_c, config.lambda_w, anchor)

            value, grads = ad.value_and_grad(objective, params)
            opt.step(params, grads)
            losses.append(value)
        mean = float(np.mean(losses)) if losses else math.nan
        result.batch_losses.extend(losses)
        result.epoch_losses.append(mean)
        log.info("epoch %d: mean loss %.6f over %d batches", epoch + 1, mean, len(losses))
    return result
