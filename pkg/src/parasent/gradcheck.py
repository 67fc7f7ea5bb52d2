"""Small random problems for finite-difference gradient checks."""

from dataclasses import dataclass

import numpy as np

from .autodiff import ParameterSet, fd_check
from .encoders import EncoderConfig, SentenceEncoder
from .numeric import RandomSource
from .supervised import ScoredPair, SimilarityHeadParams, kl_divergence, similarity_head, target_distribution
from .training import PairBatch, hinge_objective, negative_indices, penalty
from .vocab import TokenSequence

__all__ = ["CHECKED_ENCODERS", "LOSSES", "GradInstance", "check_instance", "random_instance"]

# name -> (kind, bidirectional)
CHECKED_ENCODERS = {
    "avg": ("avg", False),
    "lstm": ("lstm", False),
    "lstmavg": ("lstmavg", False),
    "gran1": ("gran1", False),
    "gran2": ("gran2", False),
    "gran3": ("gran3", False),
    "gran4": ("gran4", False),
    "gran5": ("gran5", False),
    "bilstmavg": ("lstmavg", True),
    "bigran": ("gran1", True),
}
LOSSES = ("margin", "kl")


@dataclass
class GradInstance:
    name: str
    loss: str
    loss_fn: object
    params: ParameterSet


def _sequences(n, vocab, max_len, rng):
    return [TokenSequence(tuple(rng.integer(vocab) for _ in range(1 + rng.integer(max_len)))) for _ in range(n)]


def random_instance(encoder, loss="margin", seed=0, dim=None, max_len=4, n_pairs=None, vocab=10, combine=None,
                    scale=0.7, word_scale=1.0, head_scale=1.5):
    """A float64 loss function and parameter set drawn from ``seed``.

    ``encoder`` is a key of :data:`CHECKED_ENCODERS` or an
    :class:`EncoderConfig`. Margin-loss negatives are selected once from the
    initial parameters and then held fixed, so the loss is a smooth function
    of the parameters away from hinge and absolute-value kinks.
    """
    rng = RandomSource(seed)
    dim = dim or 3 + rng.integer(2)
    n_pairs = n_pairs or 2 + rng.integer(2)
    if isinstance(encoder, EncoderConfig):
        config, name = encoder, encoder.kind
    else:
        kind, bi = CHECKED_ENCODERS[encoder]
        mode = combine or ("tanh" if bi and rng.random() < 0.5 else "sum")
        config, name = EncoderConfig(kind=kind, bidirectional=bi, combine=mode), encoder
    enc = SentenceEncoder(config, dim)
    params = ParameterSet((k, rng.normal(scale, size=s)) for k, s in enc.param_shapes().items())
    params["W_w"] = rng.normal(word_scale, size=(vocab, dim))
    sentences = _sequences(2 * n_pairs, vocab, max_len, rng)
    pairs = list(zip(sentences[0::2], sentences[1::2]))

    if loss == "margin":
        batch = PairBatch(pairs)
        batch.t1, batch.t2 = negative_indices(np.asarray(enc.encode(params, batch.sentences())))
        delta = 0.4
        lam_c, lam_w = 10.0 ** -(1 + rng.integer(3)), 10.0 ** -(1 + rng.integer(3))
        W_anchor = params["W_w"] + rng.normal(0.1, size=params["W_w"].shape)
        comp_anchor = {k: v + rng.normal(0.1, size=v.shape) for k, v in params.items() if k != "W_w"}

        def loss_fn(P):
            emb = enc.encode(P, batch.sentences())
            return hinge_objective(emb, batch.t1, batch.t2, delta) + penalty(P, lam_c, lam_w, W_anchor, comp_anchor)
    elif loss == "kl":
        head = SimilarityHeadParams.init(enc.output_dim, 4, 5, rng, dtype=np.float64)
        for k, v in head.to_mapping().items():
            params[k] = v + rng.normal(head_scale, size=v.shape)
        scored = [ScoredPair(a, b, rng.uniform(1.0, 5.0)) for a, b in pairs]
        targets = np.stack([target_distribution(p.y) for p in scored])

        def loss_fn(P):
            emb = enc.encode(P, sentences)
            p_hat, _ = similarity_head(emb[0::2], emb[1::2], SimilarityHeadParams.from_mapping(P))
            return kl_divergence(targets, p_hat)
    else:
        raise ValueError(f"loss must be one of {LOSSES}")
    return GradInstance(name, loss, loss_fn, params)


def check_instance(instance, h=1e-5, max_coords=2000, seed=0, order=2):
    return fd_check(instance.loss_fn, instance.params, h=h, max_coords=max_coords, rng=RandomSource(seed),
                    order=order)
