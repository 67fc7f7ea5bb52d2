"""A small reverse-mode differentiation engine and a finite-difference checker.

``Tensor`` records the operations applied to it; ``Tensor.backward`` walks
the recorded graph in reverse topological order. Every functional op in this
module also accepts plain numpy arrays and then simply computes the value,
which lets model code run unchanged in a pure-numpy fast path (inference,
finite differences).

Non-smooth ops (``relu``, ``absolute``) report their arguments to an active
``kink_probe`` so the checker can skip coordinates that straddle a kink.
"""

from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import numeric
from .exceptions import DegenerateVectorError, DimensionError, NumericalError

__all__ = [
    "GradReport",
    "ParameterSet",
    "Tensor",
    "absolute",
    "concat",
    "cosine_rows",
    "exp",
    "fd_check",
    "grad",
    "kink_probe",
    "log",
    "log_softmax",
    "no_grad",
    "relu",
    "sigmoid",
    "softmax",
    "sqrt",
    "tanh",
    "value_and_grad",
]

_GRAD_ENABLED = True
_KINK_PROBES = []


@contextmanager
def no_grad():
    """Build no graph inside the block; ops return constant tensors."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


@contextmanager
def kink_probe():
    """Collect the arguments of every non-smooth op evaluated in the block."""
    probe = []
    _KINK_PROBES.append(probe)
    try:
        yield probe
    finally:
        _KINK_PROBES.pop()


def _record_kink(values):
    if _KINK_PROBES:
        _KINK_PROBES[-1].append(np.array(values, dtype=np.float64).ravel())


def _data(x):
    return x.data if isinstance(x, Tensor) else x


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _is_basic(index):
    # slices and integers never repeat an element, so plain assignment suffices
    parts = index if isinstance(index, tuple) else (index,)
    return all(p is None or p is Ellipsis or isinstance(p, (slice, int, np.integer)) for p in parts)


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    # makes ``ndarray <op> Tensor`` defer to the Tensor's reflected method
    __array_ufunc__ = None

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data)
        self.requires_grad = requires_grad
        self.grad = None
        self.name = name
        self._parents = ()
        self._backward = None

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype})"

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self):
        return len(self.data)

    def numpy(self):
        return self.data

    def item(self):
        return self.data.item()

    # -- graph construction ------------------------------------------------

    def _const(self, other):
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=self.dtype))

    def __add__(self, other):
        other = self._const(other)
        a, b = self, other
        return _node(a.data + b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))

    __radd__ = __add__

    def __sub__(self, other):
        other = self._const(other)
        a, b = self, other
        return _node(a.data - b.data, (a, b),
                     lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))

    def __rsub__(self, other):
        return self._const(other) - self

    def __mul__(self, other):
        other = self._const(other)
        a, b = self, other
        return _node(a.data * b.data, (a, b),
                     lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._const(other)
        a, b = self, other
        return _node(a.data / b.data, (a, b),
                     lambda g: (_unbroadcast(g / b.data, a.shape),
                                _unbroadcast(-g * a.data / (b.data * b.data), b.shape)))

    def __rtruediv__(self, other):
        return self._const(other) / self

    def __neg__(self):
        return _node(-self.data, (self,), lambda g: (-g,))

    def __pow__(self, k):
        if not np.isscalar(k):
            raise TypeError("only scalar exponents are supported")
        a = self
        return _node(a.data ** k, (a,), lambda g: (g * k * a.data ** (k - 1),))

    def __matmul__(self, other):
        return _matmul(self, self._const(other))

    def __rmatmul__(self, other):
        return _matmul(self._const(other), self)

    def __getitem__(self, index):
        a = self
        basic = _is_basic(index)

        def back(g):
            out = np.zeros_like(a.data)
            if basic:
                out[index] = g
            else:
                np.add.at(out, index, g)
            return (out,)

        return _node(a.data[index], (a,), back)

    @property
    def T(self):
        if self.ndim != 2:
            raise DimensionError("transpose is defined for matrices only")
        return _node(self.data.T, (self,), lambda g: (g.T,))

    def reshape(self, *shape):
        a = self
        return _node(a.data.reshape(*shape), (a,), lambda g: (g.reshape(a.shape),))

    def sum(self, axis=None, keepdims=False):
        a = self

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, a.shape).copy(),)

        return _node(a.data.sum(axis=axis, keepdims=keepdims), (a,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / n

    # -- backpropagation ---------------------------------------------------

    def backward(self, seed=None):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every leaf."""
        if seed is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed needs a scalar output")
            seed = np.ones_like(self.data)
        order = _topological_order(self)
        grads = {id(self): np.asarray(seed, dtype=self.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _node(data, parents, backward):
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _topological_order(root):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in seen:
                stack.append((parent, False))
    return order


def _matmul(a, b):
    if a.ndim > 2 or b.ndim > 2:
        raise DimensionError("matmul supports vectors and matrices only")
    try:
        out = a.data @ b.data
    except ValueError as exc:
        raise DimensionError(str(exc)) from None

    def back(g):
        if a.ndim == 2 and b.ndim == 2:
            return g @ b.data.T, a.data.T @ g
        if a.ndim == 2:
            return np.outer(g, b.data), a.data.T @ g
        if b.ndim == 2:
            return b.data @ g, np.outer(a.data, g)
        return g * b.data, g * a.data

    return _node(out, (a, b), back)


# -- functional ops (Tensor or ndarray) -------------------------------------

def sigmoid(x):
    if not isinstance(x, Tensor):
        return numeric.sigmoid(x)
    s = numeric.sigmoid(x.data)
    return _node(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x):
    if not isinstance(x, Tensor):
        return np.tanh(x)
    t = np.tanh(x.data)
    return _node(t, (x,), lambda g: (g * (1.0 - t * t),))


def exp(x):
    if not isinstance(x, Tensor):
        return np.exp(x)
    e = np.exp(x.data)
    return _node(e, (x,), lambda g: (g * e,))


def log(x):
    if not isinstance(x, Tensor):
        return np.log(x)
    return _node(np.log(x.data), (x,), lambda g: (g / x.data,))


def sqrt(x):
    if not isinstance(x, Tensor):
        return np.sqrt(x)
    r = np.sqrt(x.data)
    return _node(r, (x,), lambda g: (g * 0.5 / r,))


def relu(x):
    """``max(0, x)`` with subgradient 0 at exactly 0."""
    _record_kink(_data(x))
    if not isinstance(x, Tensor):
        return np.maximum(x, 0)
    active = x.data > 0
    return _node(np.where(active, x.data, 0), (x,), lambda g: (g * active,))


def absolute(x):
    """``|x|`` with subgradient 0 at exactly 0."""
    _record_kink(_data(x))
    if not isinstance(x, Tensor):
        return np.abs(x)
    sign = np.sign(x.data)
    return _node(np.abs(x.data), (x,), lambda g: (g * sign,))


def softmax(x, axis=-1):
    if not isinstance(x, Tensor):
        return numeric.softmax(x, axis=axis)
    p = numeric.softmax(x.data, axis=axis)

    def back(g):
        return (p * (g - np.sum(g * p, axis=axis, keepdims=True)),)

    return _node(p, (x,), back)


def log_softmax(x, axis=-1):
    xd = _data(x)
    z = xd - np.max(xd, axis=axis, keepdims=True)
    lse = np.log(np.sum(np.exp(z), axis=axis, keepdims=True))
    out = z - lse
    if not isinstance(x, Tensor):
        return out
    p = np.exp(out)
    return _node(out, (x,), lambda g: (g - p * np.sum(g, axis=axis, keepdims=True),))


def concat(items, axis=-1):
    if not any(isinstance(t, Tensor) for t in items):
        return np.concatenate(items, axis=axis)
    dtype = next(t.dtype for t in items if isinstance(t, Tensor))
    items = [t if isinstance(t, Tensor) else Tensor(np.asarray(t, dtype=dtype)) for t in items]
    sizes = [t.shape[axis] for t in items]
    splits = np.cumsum(sizes)[:-1]
    return _node(np.concatenate([t.data for t in items], axis=axis), tuple(items),
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def cosine_rows(u, v):
    """Row-wise cosine of two ``(n, d)`` operands.

    Raises ``DegenerateVectorError`` naming the first zero-norm row.
    """
    uu = (u * u).sum(axis=-1)
    vv = (v * v).sum(axis=-1)
    for label, sq in (("first", _data(uu)), ("second", _data(vv))):
        bad = np.flatnonzero(np.atleast_1d(sq) == 0)
        if bad.size:
            raise DegenerateVectorError(f"zero-norm embedding in {label} operand at row {int(bad[0])}")
    return (u * v).sum(axis=-1) / sqrt(uu * vv)


# -- parameters, gradients, checking ----------------------------------------

class ParameterSet(dict):
    """Ordered mapping of unique names to numpy arrays."""

    def copy(self):
        return ParameterSet((k, np.array(v, copy=True)) for k, v in self.items())

    def astype(self, dtype):
        return ParameterSet((k, np.asarray(v, dtype=dtype).copy()) for k, v in self.items())

    def zeros_like(self):
        return ParameterSet((k, np.zeros_like(v)) for k, v in self.items())

    @property
    def size(self):
        return sum(v.size for v in self.values())

    def flatten(self):
        if not self:
            return np.zeros(0)
        return np.concatenate([np.ravel(v) for v in self.values()])

    def unflatten(self, vector):
        """Inverse of ``flatten`` using this set's names, shapes and dtypes."""
        vector = np.asarray(vector)
        if vector.size != self.size:
            raise DimensionError(f"expected {self.size} values, got {vector.size}")
        out, offset = ParameterSet(), 0
        for k, v in self.items():
            out[k] = vector[offset:offset + v.size].reshape(v.shape).astype(v.dtype)
            offset += v.size
        return out

    def locate(self, flat_index):
        """Map a flat coordinate to ``(name, index tuple)``."""
        offset = 0
        for k, v in self.items():
            if flat_index < offset + v.size:
                return k, np.unravel_index(flat_index - offset, v.shape)
            offset += v.size
        raise IndexError(flat_index)


def value_and_grad(loss_fn, params):
    """Evaluate ``loss_fn(tensors)`` and backpropagate.

    ``loss_fn`` receives a dict of leaf tensors keyed like ``params`` and must
    return a scalar ``Tensor``. Returns ``(loss, gradients)``; parameters the
    loss does not touch get zero gradients.
    """
    leaves = {k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()}
    loss = loss_fn(leaves)
    value = float(np.asarray(_data(loss)))
    if not np.isfinite(value):
        raise NumericalError(f"non-finite loss {value}")
    if isinstance(loss, Tensor) and loss.requires_grad:
        loss.backward()
    grads = ParameterSet()
    for k, leaf in leaves.items():
        grads[k] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return value, grads


def grad(loss_fn, params):
    return value_and_grad(loss_fn, params)[1]


def relative_error(analytic, numeric_):
    return abs(analytic - numeric_) / max(abs(analytic), abs(numeric_), 1e-8)


@dataclass
class TensorGradStats:
    name: str
    max_rel_error: float = 0.0
    worst_index: tuple = ()
    analytic: float = 0.0
    numeric: float = 0.0
    checked: int = 0
    excluded: int = 0


@dataclass
class GradReport:
    """Outcome of ``fd_check``: one row per parameter tensor."""

    tensors: dict = field(default_factory=dict)

    @property
    def max_rel_error(self):
        return max((s.max_rel_error for s in self.tensors.values()), default=0.0)

    @property
    def worst(self):
        if not self.tensors:
            return None
        return max(self.tensors.values(), key=lambda s: s.max_rel_error)

    @property
    def checked(self):
        return sum(s.checked for s in self.tensors.values())

    @property
    def excluded(self):
        return sum(s.excluded for s in self.tensors.values())

    def passed(self, tol=1e-4):
        return self.max_rel_error < tol

    def format(self):
        header = ("tensor", "checked", "kinked", "max_rel_err", "worst", "analytic", "numeric")
        rows = [header]
        for s in self.tensors.values():
            rows.append((s.name, str(s.checked), str(s.excluded), f"{s.max_rel_error:.3e}",
                         ",".join(str(int(i)) for i in s.worst_index) or "-",
                         f"{s.analytic:.8e}", f"{s.numeric:.8e}"))
        widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
        return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows)


def _evaluate(loss_fn, params):
    with no_grad(), kink_probe() as probe:
        value = float(np.asarray(_data(loss_fn(params))))
    args = np.concatenate(probe) if probe else np.zeros(0)
    return value, args


def fd_check(loss_fn, params, h=1e-5, max_coords=2000, rng=None, kink_tol=1e-6, order=2):
    """Compare reverse-mode gradients with central finite differences.

    Runs in float64 regardless of the input dtype. Models with more than
    ``max_coords`` coordinates (at least 200) are checked on a seeded random
    subsample. A coordinate is excluded when its finite-difference stencil
    comes within ``kink_tol`` of a relu/abs kink. ``order`` selects the
    two-point (2) or four-point (4) central stencil.
    """
    if order not in (2, 4):
        raise ValueError("order must be 2 or 4")
    offsets = (h, -h) if order == 2 else (h, -h, 2 * h, -2 * h)
    params = ParameterSet(params).astype(np.float64)
    _, analytic = value_and_grad(loss_fn, params)
    _, base_args = _evaluate(loss_fn, params)
    flat_analytic = analytic.flatten()
    work = params.copy()

    n = params.size
    max_coords = max(int(max_coords), 200)
    if n > max_coords:
        rng = rng if rng is not None else numeric.RandomSource(0)
        perm = numeric.seeded_permutation(n, rng)
        coords = sorted(perm[:max_coords])
    else:
        coords = range(n)

    report = GradReport({k: TensorGradStats(k) for k in params})
    for i in coords:
        name, index = params.locate(i)
        stats = report.tensors[name]
        # perturb one entry in place and restore it afterwards
        target = work[name]
        x = target[index]
        values, reach = [], np.zeros_like(base_args)
        for step in offsets:
            target[index] = x + step
            f, args = _evaluate(loss_fn, work)
            values.append(f)
            if base_args.size:
                reach = np.maximum(reach, np.abs(args - base_args))
        target[index] = x
        if base_args.size:
            moved = reach > 0
            near = np.abs(base_args) <= kink_tol + reach
            if np.any(moved & near):
                stats.excluded += 1
                continue
        if order == 2:
            fd = (values[0] - values[1]) / (2.0 * h)
        else:
            fd = (8.0 * (values[0] - values[1]) - (values[2] - values[3])) / (12.0 * h)
        err = relative_error(flat_analytic[i], fd)
        stats.checked += 1
        if err >= stats.max_rel_error:
            stats.max_rel_error = err
            stats.worst_index = tuple(int(j) for j in index)
            stats.analytic = float(flat_analytic[i])
            stats.numeric = float(fd)
    return report
