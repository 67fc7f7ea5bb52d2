"""A trained model bundle: vocabulary, encoder, parameters, and tagging flags."""

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .checkpoint import read_checkpoint, write_checkpoint
from .encoders import EncoderConfig, SentenceEncoder
from .exceptions import ConfigError, FormatError
from .supervised import SimilarityHeadParams, predict_scores
from .vocab import RESERVED, EmbeddingTable, encode

__all__ = ["ParaphraseModel"]


def _flag(value):
    return str(value).strip().lower() in ("1", "true", "yes", "on")


@dataclass
class ParaphraseModel:
    table: EmbeddingTable
    encoder: SentenceEncoder
    params: ParameterSet
    add_sos: bool = False
    add_eos: bool = False
    gold_min: float = 0.0
    gold_max: float = 5.0

    @property
    def has_head(self):
        return "head.W_p" in self.params

    @property
    def K(self):
        return self.params["head.W_p"].shape[0] if self.has_head else None

    def sequences(self, sentences):
        return [encode(s, self.table, self.add_sos, self.add_eos) for s in sentences]

    def embed(self, sentences, chunk=512):
        """``(n, d)`` float64 embeddings; never touches the random source."""
        sentences = list(sentences)
        out = []
        with ad.no_grad():
            for start in range(0, len(sentences), chunk):
                seqs = self.sequences(sentences[start:start + chunk])
                out.append(np.asarray(ad._data(self.encoder.encode(self.params, seqs)), dtype=np.float64))
        if not out:
            return np.zeros((0, self.encoder.output_dim))
        return np.concatenate(out)

    def predict(self, pairs):
        """Head predictions mapped back to the gold scale."""
        if not self.has_head:
            raise ConfigError("this model has no similarity head; train it with train-supervised")
        seq_pairs = [(self.sequences([a])[0], self.sequences([b])[0]) for a, b in pairs]
        y = predict_scores(self.encoder, self.params, seq_pairs)
        return self.gold_min + (y - 1.0) * (self.gold_max - self.gold_min) / (self.K - 1)

    def check_compatible(self, encoder, add_sos, add_eos):
        """Raise ``ConfigError`` unless ``encoder`` and the tag flags match this model."""
        mine, theirs = self.encoder.config, encoder.config
        if ((mine.kind, mine.bidirectional, mine.combine) != (theirs.kind, theirs.bidirectional, theirs.combine)
                or self.encoder.param_shapes() != encoder.param_shapes()):
            raise ConfigError(f"encoder settings {theirs} (dim {encoder.dim}) do not match the checkpoint's "
                              f"{mine} (dim {self.encoder.dim})")
        if (self.add_sos, self.add_eos) != (bool(add_sos), bool(add_eos)):
            raise ConfigError("add_sos/add_eos differ from the checkpoint")

    def shapes(self):
        shapes = dict(self.encoder.param_shapes())
        shapes["W_w"] = (len(self.table), self.encoder.dim)
        if self.has_head:
            hidden = self.params["head.W_mul"].shape[0]
            for k, s in SimilarityHeadParams.shapes(self.encoder.output_dim, hidden, self.K).items():
                shapes["head." + k] = s
        return shapes

    def meta(self):
        cfg = self.encoder.config
        meta = {
            "encoder": cfg.kind,
            "bidirectional": int(cfg.bidirectional),
            "combine": cfg.combine,
            "hidden_size": self.encoder.hidden,
            "dim": self.encoder.dim,
            "add_sos": int(self.add_sos),
            "add_eos": int(self.add_eos),
        }
        if self.has_head:
            meta.update({"K": self.K, "head_hidden": self.params["head.W_mul"].shape[0],
                         "gold_min": repr(float(self.gold_min)), "gold_max": repr(float(self.gold_max))})
        return meta

    def save(self, path):
        params = ParameterSet(self.params)
        params["W_w"] = np.asarray(self.params["W_w"])
        write_checkpoint(path, params, self.table.tokens(), self.meta())

    @classmethod
    def load(cls, path):
        ckpt = read_checkpoint(path)
        meta = ckpt.meta
        try:
            config = EncoderConfig(kind=meta["encoder"], bidirectional=_flag(meta.get("bidirectional", 0)),
                                   combine=meta.get("combine", "sum"),
                                   hidden_size=int(meta["hidden_size"]) if "hidden_size" in meta else None)
            dim = int(meta["dim"])
        except KeyError as exc:
            raise FormatError(f"checkpoint is missing meta entry {exc.args[0]}") from None
        encoder = SentenceEncoder(config, dim)
        if "W_w" not in ckpt.tensors:
            raise FormatError("checkpoint has no W_w tensor")
        vocab = {tok: i for i, tok in enumerate(ckpt.vocab)}
        if len(vocab) != len(ckpt.vocab):
            raise FormatError("checkpoint vocabulary has duplicate tokens")
        missing = [t for t in RESERVED if t not in vocab]
        if missing:
            raise FormatError(f"checkpoint vocabulary lacks reserved tokens {missing}")
        shapes = dict(encoder.param_shapes())
        shapes["W_w"] = (len(vocab), dim)
        if "K" in meta:
            for k, s in SimilarityHeadParams.shapes(encoder.output_dim, int(meta["head_hidden"]),
                                                    int(meta["K"])).items():
                shapes["head." + k] = s
        params = ckpt.reshaped(shapes)
        absent = [k for k in shapes if k not in params]
        if absent:
            raise FormatError(f"checkpoint lacks tensors {absent}")
        table = EmbeddingTable(vocab, params["W_w"])
        return cls(table, encoder, params, _flag(meta.get("add_sos", 0)), _flag(meta.get("add_eos", 0)),
                   float(meta.get("gold_min", 0.0)), float(meta.get("gold_max", 5.0)))
