"""Supervised similarity regression with a KL objective over score classes.

Pairs carry a gold score ``y`` in ``[1, K]``. A small head turns the two
sentence embeddings into a distribution over the integers ``1..K``; training
minimizes the KL divergence to the two-point distribution whose mean is
``y``. The "universal" setting starts from a transfer checkpoint and pulls
parameters back towards it.
"""

import logging
import math
from dataclasses import dataclass, field, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .evaluation import pearson_r
from .exceptions import ConfigError, DimensionError
from .numeric import RandomSource
from .training import Adam, TrainConfig, compositional_names, iterate_batches, perturb_pairs

__all__ = [
    "ScoredPair",
    "SimilarityHeadParams",
    "SupervisedConfig",
    "SupervisedResult",
    "kl_divergence",
    "kl_loss",
    "predict_scores",
    "similarity_head",
    "target_distribution",
    "train_supervised",
]

log = logging.getLogger(__name__)

LOG_FLOOR = 1e-12


@dataclass
class ScoredPair:
    s1: object
    s2: object
    y: float


@dataclass
class SimilarityHeadParams:
    W_mul: object
    W_abs: object
    b_h: object
    W_p: object
    b_p: object

    @property
    def K(self):
        return self.W_p.shape[0]

    @property
    def r(self):
        return np.arange(1, self.K + 1, dtype=np.float64)

    @classmethod
    def from_mapping(cls, params, prefix="head."):
        return cls(**{f.name: params[prefix + f.name] for f in fields(cls)})

    def to_mapping(self, prefix="head."):
        return ParameterSet((prefix + f.name, getattr(self, f.name)) for f in fields(self))

    @staticmethod
    def shapes(dim, hidden=50, K=5):
        if K < 2:
            raise ConfigError("the score ceiling K must be at least 2")
        return {"W_mul": (hidden, dim), "W_abs": (hidden, dim), "b_h": (hidden,),
                "W_p": (K, hidden), "b_p": (K,)}

    @classmethod
    def zeros(cls, dim, hidden=50, K=5, dtype=np.float64):
        return cls(**{k: np.zeros(s, dtype=dtype) for k, s in cls.shapes(dim, hidden, K).items()})

    @classmethod
    def init(cls, dim, hidden=50, K=5, rng=0, dtype=np.float32):
        rng = rng if isinstance(rng, RandomSource) else RandomSource(rng)
        out = {}
        for k, shape in cls.shapes(dim, hidden, K).items():
            if len(shape) == 2:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                out[k] = rng.uniform(-limit, limit, size=shape).astype(dtype)
            else:
                out[k] = np.zeros(shape, dtype=dtype)
        return cls(**out)


def _lin(x, W):
    return x @ W.T


def _head_hidden(hL, hR, theta):
    if hL.shape != hR.shape:
        raise DimensionError(f"left and right embeddings differ in shape: {hL.shape} vs {hR.shape}")
    if hL.shape[-1] != theta.W_mul.shape[1]:
        raise DimensionError(f"embedding size {hL.shape[-1]} does not match head input {theta.W_mul.shape[1]}")
    h_mul = hL * hR
    h_abs = ad.absolute(hL - hR)
    return ad.sigmoid(_lin(h_mul, theta.W_mul) + _lin(h_abs, theta.W_abs) + theta.b_h)


def similarity_head(hL, hR, theta):
    """Return ``(p_hat, y_hat)`` for one pair or a batch of row pairs."""
    logits = _lin(_head_hidden(hL, hR, theta), theta.W_p) + theta.b_p
    p_hat = ad.softmax(logits, axis=-1)
    return p_hat, p_hat @ np.asarray(theta.r, dtype=ad._data(p_hat).dtype)


def target_distribution(y, K=5):
    """Two-point distribution over ``1..K`` whose expectation is ``y``."""
    y = float(y)
    if not 1.0 <= y <= K:
        raise ValueError(f"score {y} outside [1, {K}]")
    p = np.zeros(K, dtype=np.float64)
    lo = math.floor(y)
    if lo >= K:
        p[K - 1] = 1.0
    else:
        p[lo - 1] = lo - y + 1.0
        p[lo] = y - lo
    return p


def kl_divergence(p, p_hat):
    """Mean over rows of KL(p || p_hat); zero-probability targets contribute nothing."""
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    if isinstance(p_hat, ad.Tensor):
        dtype = p_hat.dtype
    else:
        p_hat = np.asarray(p_hat, dtype=np.float64)
        dtype = p_hat.dtype
    if p_hat.ndim == 1:
        p_hat = p_hat.reshape(1, -1)
    positive = p > 0
    # p log p on the support only; 0 log 0 := 0
    entropy_term = np.where(positive, p * np.log(np.where(positive, p, 1.0)), 0.0).sum()
    weights = p.astype(dtype)
    cross = (ad.log(p_hat + dtype.type(LOG_FLOOR)) * weights).sum()
    return (dtype.type(entropy_term) - cross) / float(p.shape[0])


def _targets(pairs, K):
    return np.stack([target_distribution(p.y, K) for p in pairs])


def kl_loss(pairs, encoder, params, K=None):
    """Mean KL between target and predicted score distributions over ``pairs``.

    ``params`` holds word vectors, encoder weights and ``head.*`` tensors.
    Regularization is added by the caller.
    """
    pairs = list(pairs)
    if not pairs:
        raise ValueError("kl_loss needs at least one pair")
    theta = SimilarityHeadParams.from_mapping(params)
    K = K or theta.K
    sentences = [s for p in pairs for s in (p.s1, p.s2)]
    emb = encoder.encode(params, sentences)
    p_hat, _ = similarity_head(emb[0::2], emb[1::2], theta)
    return kl_divergence(_targets(pairs, K), p_hat)


def predict_scores(encoder, params, pairs, chunk=512):
    """Expected score ``r·p_hat`` per pair, in ``[1, K]``."""
    theta = SimilarityHeadParams.from_mapping(params)
    out = []
    pairs = list(pairs)
    with ad.no_grad():
        for start in range(0, len(pairs), chunk):
            part = pairs[start:start + chunk]
            emb = ad._data(encoder.encode(params, [s for p in part for s in (p[0], p[1])]))
            _, y_hat = similarity_head(emb[0::2], emb[1::2], theta)
            out.append(np.asarray(y_hat, dtype=np.float64))
    return np.concatenate(out) if out else np.zeros(0)


@dataclass
class SupervisedConfig(TrainConfig):
    batch_size: int = 25
    K: int = 5
    head_hidden: int = 50

    def __post_init__(self):
        super().__post_init__()
        if self.K < 2:
            raise ConfigError("K must be at least 2")
        if self.head_hidden < 1:
            raise ConfigError("head_hidden must be positive")


@dataclass
class SupervisedResult:
    params: ParameterSet
    dev_log: list = field(default_factory=list)
    epoch_losses: list = field(default_factory=list)
    best_epoch: int = None
    best_dev: float = None


def _check_universal(encoder, universal, dim):
    expected = dict(encoder.param_shapes())
    expected["W_w"] = None
    missing = [k for k in expected if k not in universal]
    extra = [k for k in universal if k not in expected and not k.startswith("head.")]
    if missing or extra:
        raise ConfigError(f"checkpoint does not match the encoder (missing {missing}, unexpected {extra})")
    for k, shape in expected.items():
        if shape is not None and tuple(np.shape(universal[k])) != tuple(shape):
            raise ConfigError(f"checkpoint tensor {k} has shape {np.shape(universal[k])}, encoder expects {shape}")
    if np.shape(universal["W_w"])[1] != dim:
        raise ConfigError("checkpoint word vectors have a different dimension")


def supervised_penalty(P, config, W_w_anchor, compositional_anchor):
    total = 0.0
    if config.lambda_c:
        for name in compositional_names(P):
            diff = P[name]
            if compositional_anchor is not None:
                diff = diff - compositional_anchor[name]
            total = total + config.lambda_c * (diff * diff).sum()
        for name in P:
            if name.startswith("head."):
                total = total + config.lambda_c * (P[name] * P[name]).sum()
    if config.lambda_w:
        diff = P["W_w"] - W_w_anchor
        total = total + config.lambda_w * (diff * diff).sum()
    return total


def train_supervised(train, dev, config, encoder, table, universal=None):
    """Fit encoder, word vectors and head on scored pairs.

    ``train``/``dev`` are lists of :class:`ScoredPair` with token sequences
    and scores already in ``[1, K]``; ``dev`` may be empty. With
    ``universal`` (a parameter mapping loaded from a transfer checkpoint)
    the encoder and word vectors start from, and are regularized towards,
    those values; otherwise word vectors come from ``table`` and encoder
    weights are freshly initialized. The returned parameters are those of
    the epoch with the best dev Pearson's r (the last epoch without dev data).
    """
    train = list(train)
    dev = list(dev or [])
    if not train:
        raise ValueError("no training pairs")
    for p in train + dev:
        if not 1.0 <= p.y <= config.K:
            raise ValueError(f"score {p.y} outside [1, {config.K}]")

    init_rng = RandomSource(config.seed)
    if universal is not None:
        _check_universal(encoder, universal, encoder.dim)
        params = ParameterSet((k, np.array(universal[k], dtype=np.float32))
                              for k in list(encoder.param_shapes()) + ["W_w"])
        W_w_anchor = np.array(universal["W_w"], dtype=np.float32)
        comp_anchor = {k: np.array(universal[k], dtype=np.float32) for k in encoder.param_shapes()}
    else:
        params = encoder.init_params(init_rng)
        params["W_w"] = np.array(table.W_w, dtype=np.float32)
        W_w_anchor = np.asarray(table.W_w_initial, dtype=np.float32)
        comp_anchor = None
    head = SimilarityHeadParams.init(encoder.output_dim, config.head_hidden, config.K, init_rng)
    params.update(head.to_mapping())

    rng = RandomSource(config.seed + 1)
    opt = Adam(config.lr, config.beta1, config.beta2, config.eps)
    result = SupervisedResult(params)
    best = None
    dev_pairs = [(p.s1, p.s2) for p in dev]
    dev_gold = np.array([p.y for p in dev])

    for epoch in range(config.epochs):
        losses = []
        for chunk in iterate_batches(len(train), config.batch_size, rng, min_size=1):
            pairs = perturb_pairs([(train[i].s1, train[i].s2) for i in chunk], config, rng)
            targets = _targets([train[i] for i in chunk], config.K)
            sentences = [s for pair in pairs for s in pair]

            def objective(P):
                emb = encoder.encode(P, sentences, dropout=config.dropout, rng=rng)
                theta = SimilarityHeadParams.from_mapping(P)
                p_hat, _ = similarity_head(emb[0::2], emb[1::2], theta)
                return kl_divergence(targets, p_hat) + supervised_penalty(P, config, W_w_anchor, comp_anchor)

            value, grads = ad.value_and_grad(objective, params)
            opt.step(params, grads)
            losses.append(value)
        result.epoch_losses.append(float(np.mean(losses)))
        if dev:
            r = pearson_r(predict_scores(encoder, params, dev_pairs), dev_gold)
            result.dev_log.append((epoch + 1, r))
            log.info("epoch %d: loss %.6f dev r %.4f", epoch + 1, result.epoch_losses[-1], r)
            if best is None or r > best[1]:
                best = (epoch + 1, r, params.copy())
        else:
            log.info("epoch %d: loss %.6f", epoch + 1, result.epoch_losses[-1])
    if best is not None:
        result.best_epoch, result.best_dev, result.params = best
    else:
        result.best_epoch = config.epochs or None
    return result
