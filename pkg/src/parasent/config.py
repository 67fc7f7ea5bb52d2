"""Run configuration for the command-line tool.

Config files are UTF-8 text with one ``key = value`` per line; ``#`` starts
a comment. Command-line flags override file values. The effective
configuration can be written back out in the same format, and feeding that
text back in reproduces the run.
"""

import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .encoders import EncoderConfig
from .exceptions import ConfigError, FormatError
from .training import DELTA_GRID, TrainConfig

__all__ = ["RunConfig", "load_config", "parse_config"]

_TRUE = ("1", "true", "yes", "on")
_FALSE = ("0", "false", "no", "off")


@dataclass(frozen=True)
class RunConfig:
    # paths
    embeddings: str = None
    corpus: str = None
    train: str = None
    dev: str = None
    manifest: str = None
    checkpoint: tuple = ()
    init_checkpoint: str = None
    input: str = None
    output: str = None
    tagged: str = None
    # encoder
    encoder: str = "gran1"
    bidirectional: bool = False
    combine: str = "sum"
    hidden_size: int = None
    add_sos: bool = False
    add_eos: bool = False
    # training
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
    # supervised head
    K: int = 5
    head_hidden: int = 50
    gold_min: float = 0.0
    gold_max: float = 5.0
    # evaluation
    selection: str = None
    held_out_group: str = None
    # gradient check
    dim: int = 6
    loss: str = "both"
    instances: int = 1
    h: float = 1e-5
    tolerance: float = 1e-4
    # gate analysis
    group_by: str = "pos"
    top_k: int = 0
    token_cap: int = 15

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls)]

    def update(self, values, source="arguments"):
        """Return a copy with ``values`` (raw strings or typed values) applied."""
        valid = self.keys()
        unknown = sorted(k for k in values if k not in valid)
        if unknown:
            raise ConfigError(f"unknown config key(s) {', '.join(unknown)} in {source}; "
                              f"valid keys: {', '.join(valid)}")
        typed = {k: _coerce(k, v) for k, v in values.items() if v is not None}
        return replace(self, **typed)

    def to_text(self, keys=None):
        """``key = value`` lines (only ``keys`` when given), readable by :func:`load_config`."""
        lines = []
        for key, value in asdict(self).items():
            if (keys is not None and key not in keys) or value is None or value == ():
                continue
            if isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, tuple):
                value = ", ".join(value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    def train_config(self, cls=TrainConfig, **extra):
        values = {f.name: getattr(self, f.name) for f in fields(cls) if hasattr(self, f.name)}
        values.update(extra)
        return cls(**values)

    def encoder_config(self):
        return EncoderConfig(kind=self.encoder, bidirectional=self.bidirectional, combine=self.combine,
                             hidden_size=self.hidden_size)

    def warn_off_grid(self):
        """Warn (without failing) when delta is not one of the usual grid values."""
        if not any(abs(self.delta - g) < 1e-12 for g in DELTA_GRID):
            warnings.warn(f"delta={self.delta} is off the usual grid {DELTA_GRID}; continuing", stacklevel=2)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _coerce(key, value):
    kind = _TYPES[key]
    if kind == "tuple" or kind is tuple:
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",")]
        return tuple(str(v) for v in value if str(v))
    if not isinstance(value, str):
        return value
    text = value.strip()
    try:
        if kind in ("bool", bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError
        if kind in ("int", int):
            return int(text)
        if kind in ("float", float):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {value!r} as {getattr(kind, '__name__', kind)}") from None
    return text


def parse_config(lines, source="config"):
    """``key = value`` lines to a dict of raw strings; duplicates are an error."""
    values = {}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"{source}: expected 'key = value'", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if not key:
            raise FormatError(f"{source}: missing key", lineno)
        if key in values:
            raise FormatError(f"{source}: key {key!r} set twice", lineno)
        values[key] = value
    return values


def load_config(path, base=None):
    """Read a config file on top of ``base`` (defaults when omitted)."""
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        values = parse_config(fh, source=str(path))
    return (base or RunConfig()).update(values, source=str(path))
