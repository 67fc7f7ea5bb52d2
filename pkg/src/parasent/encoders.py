"""Sentence encoders: word averaging, peephole LSTM, and the gated averaging family.

All encoders run over a padded batch ``X`` of shape ``(B, T, d)`` with a
``(B, T)`` mask. Padded steps leave the recurrent state untouched, so each
row produces exactly what it would produce on its own. Parameters may be
numpy arrays (pure evaluation) or autodiff tensors (training).

Parameter names are flat strings. A unidirectional GRAN-1 model, for
example, owns ``lstm.W_xi`` ... ``lstm.b_o`` and ``gran.W_x``, ``gran.W_h``,
``gran.b``; bidirectional models prefix those with ``fwd.``/``bwd.`` and add
``comb.W``/``comb.b`` for the tanh combiner. Word vectors live under
``W_w`` and are shared by both directions.
"""

from dataclasses import dataclass, fields

import numpy as np

from . import autodiff as ad
from .autodiff import ParameterSet
from .exceptions import ConfigError, DimensionError
from .numeric import RandomSource
from .regularization import embedding_dropout

__all__ = [
    "EncoderConfig",
    "GranParams",
    "LstmParams",
    "SentenceEncoder",
    "encode_avg",
    "encode_bidirectional",
    "encode_gran",
    "encode_lstm",
    "gran_step",
    "lstm_step",
]

KINDS = ("avg", "lstm", "lstmavg", "gran1", "gran2", "gran3", "gran4", "gran5")
GRAN_KINDS = ("gran1", "gran2", "gran3", "gran4", "gran5")
COMBINE_MODES = ("sum", "tanh")

_ALIASES = {
    "lstm_final": "lstm",
    "lstm-final": "lstm",
    "lstm_avg": "lstmavg",
    "lstm-avg": "lstmavg",
    "gran": "gran1",
    "tanh_layer": "tanh",
}


def _canonical(name):
    name = str(name).lower().strip()
    return _ALIASES.get(name, name)


@dataclass
class EncoderConfig:
    kind: str = "avg"
    bidirectional: bool = False
    combine: str = "sum"
    hidden_size: int = None

    def __post_init__(self):
        self.kind = _canonical(self.kind)
        self.combine = _canonical(self.combine)
        if self.kind not in KINDS:
            raise ConfigError(f"unknown encoder {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.combine not in COMBINE_MODES:
            raise ConfigError(f"unknown combine mode {self.combine!r}; expected sum or tanh")
        if self.bidirectional and self.kind == "avg":
            raise ConfigError("bidirectional encoding requires a recurrent encoder")
        if self.hidden_size is not None and int(self.hidden_size) < 1:
            raise ConfigError("hidden_size must be positive")

    @property
    def recurrent(self):
        return self.kind != "avg"

    def hidden(self, dim):
        return int(self.hidden_size) if self.hidden_size else dim

    def output_dim(self, dim):
        if self.kind in ("lstm", "lstmavg", "gran2"):
            return self.hidden(dim)
        return dim


@dataclass
class LstmParams:
    """Peephole LSTM weights; matrices are ``(out, in)``, peepholes are vectors."""

    W_xi: object
    W_hi: object
    w_ci: object
    b_i: object
    W_xf: object
    W_hf: object
    w_cf: object
    b_f: object
    W_xc: object
    W_hc: object
    b_c: object
    W_xo: object
    W_ho: object
    w_co: object
    b_o: object

    @classmethod
    def from_mapping(cls, params, prefix="lstm."):
        return cls(**{name: params[prefix + name] for name in _LSTM_FIELDS})

    @classmethod
    def zeros(cls, dim, hidden, dtype=np.float64):
        shapes = _lstm_shapes(dim, hidden)
        return cls(**{k: np.zeros(s, dtype=dtype) for k, s in shapes.items()})

    @property
    def input_dim(self):
        return self.W_xi.shape[1]

    @property
    def hidden_size(self):
        return self.W_xi.shape[0]


@dataclass
class GranParams:
    """Gate weights for one GRAN variant plus the LSTM that feeds it.

    GRAN-1/2 use only the first gate (``W_x``, ``W_h``, ``b``). GRAN-3/4/5
    add a second gate (``W_x2``, ``W_h2``, ``b2``); GRAN-4 also reads the
    running state through ``W_a`` and ``W_a2``.
    """

    lstm: LstmParams
    W_x: object
    W_h: object
    b: object
    W_x2: object = None
    W_h2: object = None
    b2: object = None
    W_a: object = None
    W_a2: object = None

    @classmethod
    def from_mapping(cls, params, prefix=""):
        kw = {}
        for name in _GRAN_FIELDS:
            key = f"{prefix}gran.{name}"
            if key in params:
                kw[name] = params[key]
        return cls(lstm=LstmParams.from_mapping(params, prefix + "lstm."), **kw)

    @classmethod
    def zeros(cls, variant, dim, hidden, dtype=np.float64):
        lstm = LstmParams.zeros(dim, hidden, dtype)
        shapes = _gran_shapes(variant, dim, hidden)
        return cls(lstm=lstm, **{k: np.zeros(s, dtype=dtype) for k, s in shapes.items()})


_LSTM_FIELDS = tuple(f.name for f in fields(LstmParams))
_GRAN_FIELDS = tuple(f.name for f in fields(GranParams) if f.name != "lstm")


def _lstm_shapes(dim, hidden):
    shapes = {}
    for g in "ifco":
        shapes[f"W_x{g}"] = (hidden, dim)
        shapes[f"W_h{g}"] = (hidden, hidden)
        if g != "c":
            shapes[f"w_c{g}"] = (hidden,)
        shapes[f"b_{g}"] = (hidden,)
    return {f.name: shapes[f.name] for f in fields(LstmParams)}


def _gran_shapes(variant, dim, hidden):
    if variant == "gran1":
        return {"W_x": (dim, dim), "W_h": (dim, hidden), "b": (dim,)}
    if variant == "gran2":
        return {"W_x": (hidden, dim), "W_h": (hidden, hidden), "b": (hidden,)}
    if variant == "gran5":
        if hidden != dim:
            raise ConfigError("gran5 sums gated word vectors and hidden states; hidden_size must equal the embedding dimension")
        return {"W_x": (dim, dim), "W_h": (dim, hidden), "b": (dim,),
                "W_x2": (hidden, dim), "W_h2": (hidden, hidden), "b2": (hidden,)}
    shapes = {"W_x": (dim, dim), "W_h": (dim, hidden), "b": (dim,),
              "W_x2": (dim, dim), "W_h2": (dim, hidden), "b2": (dim,)}
    if variant == "gran4":
        shapes.update({"W_a": (dim, dim), "W_a2": (dim, dim)})
    return shapes


def _lin(x, W):
    return x @ W.T


def _check_last(v, size, what):
    if v.shape[-1] != size:
        raise DimensionError(f"{what} has size {v.shape[-1]}, expected {size}")


def lstm_step(x_t, h_prev, c_prev, p):
    """One peephole LSTM step; returns ``(h_t, c_t)``.

    The input and forget gates peek at ``c_prev``; the output gate peeks at
    the freshly computed ``c_t``. Works on single vectors or ``(B, ·)`` rows.
    """
    _check_last(x_t, p.input_dim, "input")
    _check_last(h_prev, p.hidden_size, "previous hidden state")
    _check_last(c_prev, p.hidden_size, "previous cell state")
    i = ad.sigmoid(_lin(x_t, p.W_xi) + _lin(h_prev, p.W_hi) + p.w_ci * c_prev + p.b_i)
    f = ad.sigmoid(_lin(x_t, p.W_xf) + _lin(h_prev, p.W_hf) + p.w_cf * c_prev + p.b_f)
    c_t = f * c_prev + i * ad.tanh(_lin(x_t, p.W_xc) + _lin(h_prev, p.W_hc) + p.b_c)
    o = ad.sigmoid(_lin(x_t, p.W_xo) + _lin(h_prev, p.W_ho) + p.w_co * c_t + p.b_o)
    return o * ad.tanh(c_t), c_t


def gran_gate(x_t, h_t, p, second=False, a_prev=None):
    """Pre-multiplication gate activation ``σ(W_x x_t + W_h h_t [+ W_a a_prev] + b)``."""
    if second:
        z = _lin(x_t, p.W_x2) + _lin(h_t, p.W_h2) + p.b2
        if p.W_a2 is not None:
            z = z + _lin(a_prev, p.W_a2)
    else:
        z = _lin(x_t, p.W_x) + _lin(h_t, p.W_h) + p.b
        if p.W_a is not None:
            z = z + _lin(a_prev, p.W_a)
    return ad.sigmoid(z)


def gran_step(x_t, h_t, p, variant, a_prev=None):
    """Gated vector ``a_t`` for one position.

    ``h_t`` is the LSTM state already computed for this position. GRAN-3 and
    GRAN-4 also need the previous running state ``a_prev``.
    """
    variant = _canonical(variant)
    _check_last(h_t, p.lstm.hidden_size, "hidden state")
    if variant == "gran1":
        return x_t * gran_gate(x_t, h_t, p)
    if variant == "gran2":
        return h_t * gran_gate(x_t, h_t, p)
    if variant == "gran5":
        return x_t * gran_gate(x_t, h_t, p) + h_t * gran_gate(x_t, h_t, p, second=True)
    if variant in ("gran3", "gran4"):
        if a_prev is None:
            raise ValueError(f"{variant} needs the previous running state")
        return x_t * gran_gate(x_t, h_t, p, a_prev=a_prev) + a_prev * gran_gate(x_t, h_t, p, second=True, a_prev=a_prev)
    raise ConfigError(f"unknown GRAN variant {variant!r}")


def _zeros_like_rows(X, size):
    data = X.data if isinstance(X, ad.Tensor) else X
    return np.zeros((data.shape[0], size), dtype=data.dtype)


def _blend(m, new, old, full):
    # padded rows keep their previous state
    if full:
        return new
    return m * new + (1.0 - m) * old


def _project(X, W, b):
    """``X @ W.T + b`` for every position of a ``(B, T, d)`` batch at once."""
    B, T, d = X.shape
    return (X.reshape((B * T, d)) @ W.T + b).reshape((B, T, W.shape[0]))


def _stack(*parts):
    return ad.concat(list(parts), axis=0)


def _run_direction(kind, params, prefix, X, mask, gates_out=None):
    """Encode a padded batch in one direction. ``X`` is ``(B, T, d)``.

    Same arithmetic as :func:`lstm_step` and :func:`gran_step`, but the
    input projections of all positions are computed up front and the four
    LSTM gates share one recurrent matrix product per step.
    """
    B, T = mask.shape
    dtype = (X.data if isinstance(X, ad.Tensor) else X).dtype
    lengths = mask.sum(axis=1, keepdims=True).astype(dtype)
    full_steps = mask.all(axis=0).tolist()
    mask = mask.astype(dtype)
    if kind == "avg":
        return (X * mask[:, :, None]).sum(axis=1) / lengths

    lp = LstmParams.from_mapping(params, prefix + "lstm.")
    _check_last(X, lp.input_dim, "input")
    dh = lp.hidden_size
    Xz = _project(X, _stack(lp.W_xi, lp.W_xf, lp.W_xc, lp.W_xo), _stack(lp.b_i, lp.b_f, lp.b_c, lp.b_o))
    W_h = _stack(lp.W_hi, lp.W_hf, lp.W_hc, lp.W_ho)
    gated = kind in GRAN_KINDS
    if gated:
        gp = GranParams.from_mapping(params, prefix)
        Xg = _project(X, gp.W_x, gp.b)
        Xg2 = _project(X, gp.W_x2, gp.b2) if gp.W_x2 is not None else None
    h = _zeros_like_rows(X, dh)
    c = _zeros_like_rows(X, dh)
    a = _zeros_like_rows(X, X.shape[2]) if kind in ("gran3", "gran4") else None
    total = None
    for t in range(T):
        m = mask[:, t:t + 1]
        full = full_steps[t]
        x_t = X[:, t, :]
        z = Xz[:, t, :] + _lin(h, W_h)
        i = ad.sigmoid(z[:, :dh] + lp.w_ci * c)
        f = ad.sigmoid(z[:, dh:2 * dh] + lp.w_cf * c)
        c_new = f * c + i * ad.tanh(z[:, 2 * dh:3 * dh])
        o = ad.sigmoid(z[:, 3 * dh:] + lp.w_co * c_new)
        h_new = o * ad.tanh(c_new)
        h = _blend(m, h_new, h, full)
        c = _blend(m, c_new, c, full)
        if kind == "lstm":
            continue
        if kind == "lstmavg":
            step = h_new
        else:
            z1 = Xg[:, t, :] + _lin(h_new, gp.W_h)
            if gp.W_a is not None:
                z1 = z1 + _lin(a, gp.W_a)
            g1 = ad.sigmoid(z1)
            if gates_out is not None:
                gates_out.append(ad._data(g1))
            if Xg2 is not None:
                z2 = Xg2[:, t, :] + _lin(h_new, gp.W_h2)
                if gp.W_a2 is not None:
                    z2 = z2 + _lin(a, gp.W_a2)
                g2 = ad.sigmoid(z2)
            if kind == "gran1":
                step = x_t * g1
            elif kind == "gran2":
                step = h_new * g1
            elif kind == "gran5":
                step = x_t * g1 + h_new * g2
            else:
                a = _blend(m, x_t * g1 + a * g2, a, full)
                continue
        step = step if full else m * step
        total = step if total is None else total + step
    if kind == "lstm":
        return h
    if kind in ("gran3", "gran4"):
        return a / lengths
    return total / lengths


def _pad(sequences):
    lengths = [len(s) for s in sequences]
    if not sequences:
        raise ValueError("no sequences to encode")
    if min(lengths) == 0:
        raise ValueError("cannot encode an empty sequence")
    T = max(lengths)
    idx = np.zeros((len(sequences), T), dtype=np.int64)
    mask = np.zeros((len(sequences), T), dtype=bool)
    for b, seq in enumerate(sequences):
        idx[b, :len(seq)] = list(seq)
        mask[b, :len(seq)] = True
    return idx, mask, np.asarray(lengths)


def _reverse_index(lengths, T):
    rev = np.tile(np.arange(T), (len(lengths), 1))
    for b, n in enumerate(lengths):
        rev[b, :n] = np.arange(n - 1, -1, -1)
    return rev


class SentenceEncoder:
    """Binds an :class:`EncoderConfig` to an embedding dimension.

    ``init_params`` creates the compositional parameters; ``encode`` maps a
    batch of token-index sequences to a ``(B, out_dim)`` matrix (a tensor
    when the parameters are tensors).
    """

    def __init__(self, config, dim):
        if not isinstance(config, EncoderConfig):
            config = EncoderConfig(**config)
        self.config = config
        self.dim = int(dim)
        self.hidden = config.hidden(self.dim)
        if config.kind in GRAN_KINDS:
            _gran_shapes(config.kind, self.dim, self.hidden)

    def __repr__(self):
        return f"SentenceEncoder({self.config}, dim={self.dim})"

    @property
    def kind(self):
        return self.config.kind

    @property
    def output_dim(self):
        return self.config.output_dim(self.dim)

    def directions(self):
        return ("fwd.", "bwd.") if self.config.bidirectional else ("",)

    def param_shapes(self):
        shapes = {}
        if not self.config.recurrent:
            return shapes
        for prefix in self.directions():
            for k, s in _lstm_shapes(self.dim, self.hidden).items():
                shapes[f"{prefix}lstm.{k}"] = s
            if self.kind in GRAN_KINDS:
                for k, s in _gran_shapes(self.kind, self.dim, self.hidden).items():
                    shapes[f"{prefix}gran.{k}"] = s
        if self.config.bidirectional and self.config.combine == "tanh":
            out = self.output_dim
            shapes["comb.W"] = (out, 2 * out)
            shapes["comb.b"] = (out,)
        return shapes

    def init_params(self, rng, dtype=np.float32):
        """Glorot-uniform matrices, small uniform peepholes, zero biases."""
        if not isinstance(rng, RandomSource):
            rng = RandomSource(rng)
        params = ParameterSet()
        for name, shape in self.param_shapes().items():
            leaf = name.rsplit(".", 1)[-1]
            if len(shape) == 2:
                limit = np.sqrt(6.0 / (shape[0] + shape[1]))
                params[name] = rng.uniform(-limit, limit, size=shape).astype(dtype)
            elif leaf.startswith("w_c"):
                params[name] = rng.uniform(-0.1, 0.1, size=shape).astype(dtype)
            else:
                params[name] = np.zeros(shape, dtype=dtype)
        return params

    def _embed(self, params, sequences, dropout, rng):
        idx, mask, lengths = _pad(sequences)
        W = params["W_w"]
        X = W[idx]
        if dropout > 0:
            if rng is None:
                raise ConfigError("embedding dropout needs a random source")
            X = embedding_dropout(X, dropout, rng)
        return X, mask, lengths

    def encode(self, params, sequences, dropout=0.0, rng=None):
        """Embed ``sequences`` (iterables of vocabulary indices)."""
        X, mask, lengths = self._embed(params, sequences, dropout, rng)
        if not self.config.bidirectional:
            return _run_direction(self.kind, params, "", X, mask)
        fwd = _run_direction(self.kind, params, "fwd.", X, mask)
        rows = np.arange(len(lengths))[:, None]
        X_rev = X[rows, _reverse_index(lengths, mask.shape[1])]
        bwd = _run_direction(self.kind, params, "bwd.", X_rev, mask)
        return combine(fwd, bwd, self.config.combine, params)

    def gates(self, params, sequences):
        """First-gate activations per token, one ``(T_i, d_gate)`` array per sequence."""
        if self.kind not in GRAN_KINDS:
            raise ConfigError(f"gate analysis needs a GRAN encoder, not {self.kind}")
        if self.config.bidirectional:
            raise ConfigError("gate analysis is defined for unidirectional GRAN models")
        params = {k: (v.data if isinstance(v, ad.Tensor) else v) for k, v in params.items()}
        X, mask, lengths = self._embed(params, sequences, 0.0, None)
        gates = []
        _run_direction(self.kind, params, "", X, mask, gates_out=gates)
        stacked = np.stack(gates, axis=1)
        return [stacked[b, :n] for b, n in enumerate(lengths)]


def combine(fwd, bwd, mode, params=None):
    if mode == "sum":
        return fwd + bwd
    if mode == "tanh":
        if params is None or "comb.W" not in params:
            raise ConfigError("tanh combination needs combiner parameters comb.W and comb.b")
        return ad.tanh(_lin(ad.concat([fwd, bwd], axis=-1), params["comb.W"]) + params["comb.b"])
    raise ConfigError(f"unknown combine mode {mode!r}")


# -- single-sentence helpers -------------------------------------------------

def _indices(seq):
    return list(seq.indices) if hasattr(seq, "indices") else list(seq)


def _matrix(table):
    return table.W_w if hasattr(table, "W_w") else np.asarray(table)


def encode_avg(seq, table):
    """Mean of the word vectors of ``seq``."""
    idx = _indices(seq)
    if not idx:
        raise ValueError("cannot encode an empty sequence")
    return _matrix(table)[idx].mean(axis=0)


def _lstm_mapping(p, prefix):
    return {f"{prefix}lstm.{f.name}": getattr(p, f.name) for f in fields(LstmParams)}


def _gran_mapping(p, prefix):
    out = _lstm_mapping(p.lstm, prefix)
    for f in fields(GranParams):
        value = getattr(p, f.name)
        if f.name != "lstm" and value is not None:
            out[f"{prefix}gran.{f.name}"] = value
    return out


def _single(kind, mapping, seq, table, prefix=""):
    idx = _indices(seq)
    if not idx:
        raise ValueError("cannot encode an empty sequence")
    X = _matrix(table)[np.asarray(idx)][None]
    mask = np.ones((1, len(idx)), dtype=bool)
    return _run_direction(kind, mapping, prefix, X, mask)[0]


def encode_lstm(seq, table, p, readout="final"):
    """LSTM embedding: last hidden state (``final``) or mean of all states (``average``)."""
    readout = readout.lower()
    if readout not in ("final", "average"):
        raise ConfigError("readout must be 'final' or 'average'")
    kind = "lstm" if readout == "final" else "lstmavg"
    return _single(kind, _lstm_mapping(p, ""), seq, table)


def encode_gran(seq, table, p, variant="gran1"):
    variant = _canonical(variant)
    if variant not in GRAN_KINDS:
        raise ConfigError(f"unknown GRAN variant {variant!r}")
    return _single(variant, _gran_mapping(p, ""), seq, table)


def encode_bidirectional(seq, table, fwd_params, bwd_params, combine_mode="sum", combiner_params=None,
                         kind=None):
    """Run an encoder over ``seq`` and its reverse and merge the two embeddings.

    ``fwd_params``/``bwd_params`` are :class:`LstmParams` (``kind`` defaults
    to ``lstmavg``) or :class:`GranParams` (``kind`` defaults to ``gran1``).
    ``combiner_params`` is ``(W, b)`` for the tanh combiner.
    """
    combine_mode = _canonical(combine_mode)
    if isinstance(fwd_params, GranParams):
        kind = _canonical(kind or "gran1")
        fwd_map, bwd_map = _gran_mapping(fwd_params, ""), _gran_mapping(bwd_params, "")
    else:
        kind = _canonical(kind or "lstmavg")
        fwd_map, bwd_map = _lstm_mapping(fwd_params, ""), _lstm_mapping(bwd_params, "")
    if kind == "avg":
        raise ConfigError("bidirectional encoding requires a recurrent encoder")
    comb = None
    if combine_mode == "tanh":
        if combiner_params is None:
            raise ConfigError("tanh combination needs combiner parameters")
        comb = {"comb.W": combiner_params[0], "comb.b": combiner_params[1]}
    idx = _indices(seq)
    fwd = _single(kind, fwd_map, idx, table)
    bwd = _single(kind, bwd_map, idx[::-1], table)
    return combine(fwd, bwd, combine_mode, comb)
