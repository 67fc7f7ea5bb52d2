"""Plain-text checkpoints.

Layout::

    parasent-ckpt v1
    meta <key> <value>          # zero or more
    vocab <n>
    <token>                     # n lines, index order
    <name> <rows> <cols>        # one block per tensor
    <cols space-separated values>   # rows lines

Vectors are stored as a single row; :func:`read_checkpoint` restores the
original shapes when given the expected shapes.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import ParameterSet
from .exceptions import FormatError

__all__ = ["Checkpoint", "read_checkpoint", "write_checkpoint"]

HEADER = "parasent-ckpt v1"


@dataclass
class Checkpoint:
    meta: dict = field(default_factory=dict)
    vocab: list = field(default_factory=list)
    tensors: ParameterSet = field(default_factory=ParameterSet)

    def reshaped(self, shapes):
        """Tensors with 1-row blocks flattened back wherever ``shapes`` says so."""
        out = ParameterSet()
        for name, value in self.tensors.items():
            shape = shapes.get(name)
            if shape is not None:
                if int(np.prod(shape)) != value.size:
                    raise FormatError(f"tensor {name} has {value.size} values, expected shape {tuple(shape)}")
                value = value.reshape(shape)
            out[name] = value
        return out


def _fmt(dtype):
    return "%.17g" if dtype == np.float64 else "%.9g"


def write_checkpoint(path, tensors, vocab=(), meta=None):
    lines = [HEADER]
    for key, value in (meta or {}).items():
        if " " in str(key) or "\n" in str(value):
            raise ValueError(f"meta entry {key!r} cannot be serialized")
        lines.append(f"meta {key} {value}")
    lines.append(f"vocab {len(vocab)}")
    for tok in vocab:
        if not tok or any(c.isspace() for c in tok):
            raise ValueError(f"token {tok!r} cannot be serialized")
        lines.append(tok)
    for name, value in tensors.items():
        arr = np.asarray(value)
        mat = arr.reshape(1, -1) if arr.ndim <= 1 else arr
        if mat.ndim != 2:
            raise ValueError(f"tensor {name} has {arr.ndim} dimensions; only vectors and matrices are stored")
        fmt = _fmt(arr.dtype)
        lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
        lines.extend(" ".join(fmt % x for x in row) for row in mat)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_checkpoint(path, shapes=None, dtype=np.float32):
    """Parse a checkpoint file. ``shapes`` maps tensor names to expected shapes."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != HEADER:
        raise FormatError(f"not a checkpoint: expected header {HEADER!r}", 1)
    ckpt = Checkpoint()
    i = 1
    while i < len(lines) and lines[i].startswith("meta "):
        parts = lines[i].split(" ", 2)
        if len(parts) != 3:
            raise FormatError("meta line needs a key and a value", i + 1)
        ckpt.meta[parts[1]] = parts[2]
        i += 1
    if i >= len(lines) or not lines[i].startswith("vocab "):
        raise FormatError("expected 'vocab <n>'", i + 1)
    try:
        n = int(lines[i].split()[1])
    except (IndexError, ValueError):
        raise FormatError("bad vocabulary count", i + 1) from None
    ckpt.vocab = lines[i + 1:i + 1 + n]
    if len(ckpt.vocab) != n:
        raise FormatError("checkpoint ends inside the vocabulary", len(lines))
    i += 1 + n
    while i < len(lines):
        parts = lines[i].split()
        if len(parts) != 3:
            raise FormatError("expected '<name> <rows> <cols>'", i + 1)
        name = parts[0]
        try:
            rows, cols = int(parts[1]), int(parts[2])
        except ValueError:
            raise FormatError("tensor dimensions must be integers", i + 1) from None
        if name in ckpt.tensors:
            raise FormatError(f"tensor {name} appears twice", i + 1)
        block = lines[i + 1:i + 1 + rows]
        if len(block) != rows:
            raise FormatError(f"tensor {name} is truncated", len(lines))
        data = np.empty((rows, cols), dtype=dtype)
        for r, row in enumerate(block):
            values = row.split()
            if len(values) != cols:
                raise FormatError(f"tensor {name}: expected {cols} values", i + 2 + r)
            try:
                data[r] = [float(v) for v in values]
            except ValueError:
                raise FormatError(f"tensor {name}: non-numeric value", i + 2 + r) from None
        ckpt.tensors[name] = data
        i += 1 + rows
    if shapes:
        ckpt.tensors = ckpt.reshaped(shapes)
    return ckpt
