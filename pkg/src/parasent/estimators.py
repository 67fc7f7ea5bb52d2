"""scikit-learn style front ends.

``ParaphraseEmbedder`` learns sentence embeddings from paraphrase pairs and
transforms sentences into vectors. ``SimilarityRegressor`` learns to predict
graded similarity scores for sentence pairs. Both follow the usual
``fit``/``transform``/``predict`` and ``get_params``/``set_params`` contract,
so they work with ``clone``, pipelines and grid search.
"""

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_pairs, check_scores, check_sentences
from .data import open_text, rescale_gold
from .encoders import EncoderConfig, SentenceEncoder
from .evaluation import score_pairs
from .exceptions import ConfigError
from .model import ParaphraseModel
from .supervised import ScoredPair, SupervisedConfig, train_supervised
from .training import TrainConfig, train_transfer
from .vocab import EmbeddingTable, encode, load_embeddings

__all__ = ["ParaphraseEmbedder", "SimilarityRegressor"]


def _resolve_table(embeddings, seed):
    if isinstance(embeddings, EmbeddingTable):
        return embeddings
    if embeddings is None:
        raise ConfigError("an embedding table or embedding file path is required")
    with open_text(Path(embeddings)) as fh:
        return load_embeddings(fh, seed=seed)


class _EncoderParamsMixin:
    def _encoder(self, dim):
        config = EncoderConfig(kind=self.encoder, bidirectional=self.bidirectional, combine=self.combine,
                               hidden_size=self.hidden_size)
        return SentenceEncoder(config, dim)

    def _train_kwargs(self):
        return dict(lambda_c=self.lambda_c, lambda_w=self.lambda_w, dropout=self.dropout,
                    word_dropout=self.word_dropout, scramble=self.scramble, epochs=self.epochs,
                    batch_size=self.batch_size, lr=self.learning_rate, seed=self.random_state)


class ParaphraseEmbedder(_EncoderParamsMixin, TransformerMixin, BaseEstimator):
    """Train a sentence encoder with the margin objective; transform sentences to vectors.

    ``fit`` takes a list of ``(sentence1, sentence2)`` paraphrase pairs and
    ``embeddings`` (an :class:`EmbeddingTable` or a path to a word-vector
    file). After fitting, ``model_`` holds the trained
    :class:`ParaphraseModel` and ``loss_curve_`` the per-epoch mean loss.
    """

    def __init__(self, encoder="gran1", bidirectional=False, combine="sum", hidden_size=None, delta=0.4,
                 lambda_c=0.0, lambda_w=0.0, dropout=0.0, word_dropout=0.0, scramble=0.0, epochs=5,
                 batch_size=100, learning_rate=1e-3, add_sos=False, add_eos=False, embeddings=None,
                 random_state=0):
        self.encoder = encoder
        self.bidirectional = bidirectional
        self.combine = combine
        self.hidden_size = hidden_size
        self.delta = delta
        self.lambda_c = lambda_c
        self.lambda_w = lambda_w
        self.dropout = dropout
        self.word_dropout = word_dropout
        self.scramble = scramble
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.add_sos = add_sos
        self.add_eos = add_eos
        self.embeddings = embeddings
        self.random_state = random_state

    def fit(self, X, y=None):
        pairs = check_pairs(X, min_pairs=2)
        table = _resolve_table(self.embeddings, self.random_state)
        enc = self._encoder(table.dim)
        config = TrainConfig(delta=self.delta, **self._train_kwargs())
        corpus = [(encode(a, table, self.add_sos, self.add_eos), encode(b, table, self.add_sos, self.add_eos))
                  for a, b in pairs]
        result = train_transfer(corpus, config, table, enc)
        self.model_ = ParaphraseModel(table.with_matrix(result.params["W_w"]), enc, result.params,
                                      self.add_sos, self.add_eos)
        self.loss_curve_ = list(result.epoch_losses)
        self.n_features_out_ = enc.output_dim
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        return self.model_.embed(check_sentences(X))

    def similarity(self, X, scale_to_range=False):
        """Cosine similarity of each pair (mapped onto [0, 5] on request)."""
        check_is_fitted(self, "model_")
        return score_pairs(check_pairs(X), self.model_, scale_to_range)

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)

    @classmethod
    def from_checkpoint(cls, path):
        model = ParaphraseModel.load(path)
        cfg = model.encoder.config
        est = cls(encoder=cfg.kind, bidirectional=cfg.bidirectional, combine=cfg.combine,
                  hidden_size=cfg.hidden_size, add_sos=model.add_sos, add_eos=model.add_eos)
        est.model_ = model
        est.n_features_out_ = model.encoder.output_dim
        return est


class SimilarityRegressor(_EncoderParamsMixin, RegressorMixin, BaseEstimator):
    """Predict graded similarity for sentence pairs with a KL-trained similarity head.

    Gold scores in ``gold_range`` are mapped onto ``[1, K]`` for training and
    predictions are mapped back. With ``init_checkpoint`` set, the encoder
    and word vectors start from that transfer checkpoint and are regularized
    towards it ("universal" initialization); otherwise word vectors come
    from ``embeddings``.
    """

    def __init__(self, encoder="gran1", bidirectional=False, combine="sum", hidden_size=None, K=5,
                 head_hidden=50, gold_range=(0.0, 5.0), lambda_c=0.0, lambda_w=0.0, dropout=0.0,
                 word_dropout=0.0, scramble=0.0, epochs=10, batch_size=25, learning_rate=1e-3, add_sos=False,
                 add_eos=False, embeddings=None, init_checkpoint=None, random_state=0):
        self.encoder = encoder
        self.bidirectional = bidirectional
        self.combine = combine
        self.hidden_size = hidden_size
        self.K = K
        self.head_hidden = head_hidden
        self.gold_range = gold_range
        self.lambda_c = lambda_c
        self.lambda_w = lambda_w
        self.dropout = dropout
        self.word_dropout = word_dropout
        self.scramble = scramble
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.add_sos = add_sos
        self.add_eos = add_eos
        self.embeddings = embeddings
        self.init_checkpoint = init_checkpoint
        self.random_state = random_state

    def _scored(self, X, y, table):
        lo, hi = self.gold_range
        if np.any(y < lo) or np.any(y > hi):
            raise ValueError(f"gold scores must lie in [{lo}, {hi}]")
        target = np.clip(rescale_gold(y, lo, hi, self.K), 1.0, self.K)
        return [ScoredPair(encode(a, table, self.add_sos, self.add_eos), encode(b, table, self.add_sos, self.add_eos),
                           float(t)) for (a, b), t in zip(X, target)]

    def fit(self, X, y, X_dev=None, y_dev=None):
        pairs = check_pairs(X)
        y = check_scores(y, len(pairs))
        universal = None
        if self.init_checkpoint is not None:
            base = ParaphraseModel.load(self.init_checkpoint)
            table = base.table
            enc = self._encoder(table.dim)
            base.check_compatible(enc, self.add_sos, self.add_eos)
            universal = base.params
        else:
            table = _resolve_table(self.embeddings, self.random_state)
            enc = self._encoder(table.dim)
        train = self._scored(pairs, y, table)
        dev = []
        if X_dev is not None:
            dev_pairs = check_pairs(X_dev)
            dev = self._scored(dev_pairs, check_scores(y_dev, len(dev_pairs)), table)
        config = SupervisedConfig(K=self.K, head_hidden=self.head_hidden, **self._train_kwargs())
        result = train_supervised(train, dev, config, enc, table, universal=universal)
        lo, hi = self.gold_range
        self.model_ = ParaphraseModel(table.with_matrix(result.params["W_w"]), enc, result.params,
                                      self.add_sos, self.add_eos, float(lo), float(hi))
        self.loss_curve_ = list(result.epoch_losses)
        self.dev_log_ = list(result.dev_log)
        self.best_epoch_ = result.best_epoch
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        return self.model_.predict(check_pairs(X))

    def transform(self, X):
        """Sentence embeddings from the fine-tuned encoder."""
        check_is_fitted(self, "model_")
        return self.model_.embed(check_sentences(X))

    def save(self, path):
        check_is_fitted(self, "model_")
        self.model_.save(path)
