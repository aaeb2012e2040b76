"""Reverse-mode automatic differentiation over dense float64 arrays.

The graph is dynamic: every operation allocates a fresh ``Tensor`` that
records its parent tensors plus a closure computing the local
vector-Jacobian product. ``backward`` walks the recorded graph in exact
reverse topological order, accumulates per-node adjoints for the pass, and
then adds them into each node's ``grad`` accumulator (so repeated
``backward`` calls without ``zero_grad`` accumulate).

Conventions:

- double precision everywhere; an op whose output contains NaN/Inf raises
  ``NumericError`` immediately rather than propagating silently
- ``matmul`` is strictly 2-D
- broadcasting of binary elementwise ops is limited to equal shapes,
  scalars, trailing-suffix shapes (e.g. (B, n) with (n,)), and equal-rank
  shapes with size-1 axes (e.g. (B, 1) with (B, n)); anything richer is a
  ``DimensionError``
- tensors are treated as immutable after creation; optimizers replace them
"""

import hashlib
import math

import numpy as np

from .errors import DimensionError, NumericError

_grad_enabled = True


class no_grad:
    """Context manager disabling graph construction (pure forward passes)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _check_finite(arr, op):
    # one-pass screen: any NaN/Inf makes the sum non-finite; the exact
    # elementwise check only runs on suspicion (rules out sum overflow)
    if not math.isfinite(arr.sum()) and not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values produced by '{op}'")


class Tensor:
    """N-d float64 array node of the computation graph."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = bool(requires_grad) and _grad_enabled
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self):
        return float(self.data)

    def detach(self):
        """Constant view of this tensor's value, cut out of the graph."""
        return Tensor(self.data)

    def is_leaf(self):
        return self._vjp is None

    def zero_grad(self):
        self.grad = None

    def backward(self, leaves=None):
        return backward(self, leaves=leaves)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar; constants are lifted to graph-free tensors
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return narrow(self, key)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None):
        return mean(self, axis=axis)


def _lift(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data, parents, vjp, op):
    _check_finite(data, op)
    out = Tensor(data)
    if _grad_enabled:
        for p in parents:
            if p.requires_grad:
                out.requires_grad = True
                out._parents = tuple(parents)
                out._vjp = vjp
                break
    return out


def _broadcast_check(sa, sb, op):
    if sa == sb or sa == () or sb == ():
        return
    if len(sa) != len(sb):
        short, long_ = (sa, sb) if len(sa) < len(sb) else (sb, sa)
        if long_[len(long_) - len(short):] == short:
            return
        raise DimensionError(f"{op}: shapes {sa} and {sb} do not broadcast")
    for a, b in zip(sa, sb):
        if a != b and a != 1 and b != 1:
            raise DimensionError(f"{op}: shapes {sa} and {sb} do not broadcast")


def _unbroadcast(grad, shape):
    """Reduce ``grad`` back to ``shape`` by summing broadcast axes."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad.reshape(shape)


def add(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_check(a.shape, b.shape, "add")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _node(a.data + b.data, (a, b), vjp, "add")


def sub(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_check(a.shape, b.shape, "sub")

    def vjp(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _node(a.data - b.data, (a, b), vjp, "sub")


def mul(a, b):
    a, b = _lift(a), _lift(b)
    _broadcast_check(a.shape, b.shape, "mul")

    def vjp(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _node(a.data * b.data, (a, b), vjp, "mul")


def matmul(a, b):
    a, b = _lift(a), _lift(b)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return _node(a.data @ b.data, (a, b), vjp, "matmul")


def sigmoid(x):
    x = _lift(x)
    # stable two-sided evaluation avoids overflow in exp
    out_data = np.empty_like(x.data)
    pos = x.data >= 0
    out_data[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    ex = np.exp(x.data[~pos])
    out_data[~pos] = ex / (1.0 + ex)

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return _node(out_data, (x,), vjp, "sigmoid")


def tanh(x):
    x = _lift(x)
    out_data = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out_data * out_data),)

    return _node(out_data, (x,), vjp, "tanh")


def exp(x):
    x = _lift(x)
    out_data = np.exp(x.data)

    def vjp(g):
        return (g * out_data,)

    return _node(out_data, (x,), vjp, "exp")


def log(x):
    x = _lift(x)
    out_data = np.log(x.data)

    def vjp(g):
        return (g / x.data,)

    return _node(out_data, (x,), vjp, "log")


def square(x):
    x = _lift(x)

    def vjp(g):
        return (g * 2.0 * x.data,)

    return _node(x.data * x.data, (x,), vjp, "square")


def clip(x, lo, hi):
    """Clamp values to [lo, hi]; gradient is zero outside the interval."""
    x = _lift(x)
    out_data = np.clip(x.data, lo, hi)
    inside = (x.data > lo) & (x.data < hi)

    def vjp(g):
        return (g * inside,)

    return _node(out_data, (x,), vjp, "clip")


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis`` (max-subtraction)."""
    x = _lift(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / np.sum(e, axis=axis, keepdims=True)

    def vjp(g):
        inner = np.sum(g * out_data, axis=axis, keepdims=True)
        return (out_data * (g - inner),)

    return _node(out_data, (x,), vjp, "softmax")


def concat(tensors, axis=0):
    tensors = [_lift(t) for t in tensors]
    if not tensors:
        raise DimensionError("concat of an empty list")
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]

    def vjp(g):
        grads = []
        offset = 0
        for t, n in zip(tensors, sizes):
            index = [slice(None)] * g.ndim
            index[axis] = slice(offset, offset + n)
            grads.append(g[tuple(index)])
            offset += n
        return tuple(grads)

    return _node(out_data, tuple(tensors), vjp, "concat")


def narrow(x, key):
    """Basic (slice/int) indexing; backward scatters into a zero array."""
    x = _lift(x)
    out_data = np.asarray(x.data[key])

    def vjp(g):
        full = np.zeros_like(x.data)
        full[key] += g
        return (full,)

    return _node(out_data, (x,), vjp, "narrow")


def sum_(x, axis=None, keepdims=False):
    x = _lift(x)
    out_data = np.sum(x.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, x.shape).copy(),)
        g_exp = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(g_exp, x.shape).copy(),)

    return _node(out_data, (x,), vjp, "sum")


def mean(x, axis=None):
    x = _lift(x)
    out_data = np.mean(x.data, axis=axis)
    count = x.size if axis is None else x.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.full(x.shape, float(g) / count),)
        g_exp = np.expand_dims(g, axis) / count
        return (np.broadcast_to(g_exp, x.shape).copy(),)

    return _node(out_data, (x,), vjp, "mean")


def _topo_order(root):
    """Reverse-postorder DFS over the requires_grad subgraph."""
    order = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss, leaves=None):
    """Reverse-mode sweep from a scalar loss.

    Adjoints are computed fresh for this pass and then added into each
    visited node's ``grad``, so calling twice without ``zero_grad`` doubles
    leaf gradients. Returns a map {leaf Tensor: accumulated grad} over every
    requires_grad leaf reached from the loss; pass ``leaves`` to force
    entries (zeros) for leaves the loss does not depend on.
    """
    if loss.data.size != 1:
        raise DimensionError(f"backward needs a scalar loss, got shape {loss.shape}")
    result = {}
    if loss.requires_grad:
        order = _topo_order(loss)
        adjoint = {id(loss): np.ones_like(loss.data)}
        for node in reversed(order):
            g = adjoint.get(id(node))
            if g is None or node._vjp is None:
                continue
            for parent, pg in zip(node._parents, node._vjp(g)):
                if not parent.requires_grad or pg is None:
                    continue
                acc = adjoint.get(id(parent))
                adjoint[id(parent)] = pg if acc is None else acc + pg
        for node in order:
            g = adjoint.get(id(node))
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._vjp is None:
                result[node] = node.grad
    if leaves is not None:
        for leaf in leaves:
            if leaf not in result:
                result[leaf] = leaf.grad if leaf.grad is not None else np.zeros_like(leaf.data)
    return result


def zero_grads(tensors):
    for t in tensors:
        t.grad = None


def tensor_digest(arr):
    """SHA-256 over the raw little-endian float64 bytes of an array."""
    data = np.ascontiguousarray(arr, dtype="<f8")
    return hashlib.sha256(data.tobytes()).hexdigest()


class GradCheckReport:
    """Per-parameter-block comparison of analytic and numeric gradients."""

    def __init__(self, per_block, tol):
        self.per_block = dict(per_block)
        self.tol = tol
        self.max_rel_error = max(per_block.values()) if per_block else 0.0
        self.worst_block = (
            max(per_block, key=per_block.get) if per_block else None
        )

    @property
    def passed(self):
        return self.max_rel_error < self.tol

    def __str__(self):
        lines = [
            f"{name:40s} max rel err {err:.3e}"
            for name, err in self.per_block.items()
        ]
        verdict = "PASS" if self.passed else f"FAIL (worst: {self.worst_block})"
        lines.append(f"overall max {self.max_rel_error:.3e} vs tol {self.tol:.1e} -> {verdict}")
        return "\n".join(lines)


def grad_check(build_loss, params, eps=1e-5, tol=1e-4):
    """Compare analytic gradients against central finite differences.

    ``build_loss`` maps a {name: Tensor} dict to a scalar loss tensor and is
    re-invoked for every probe, so it must be a pure function of the params.
    Relative error uses denominator max(|analytic|, |numeric|, 1e-8).
    """
    if not 1e-7 <= eps <= 1e-3:
        raise ValueError(f"eps {eps} outside [1e-7, 1e-3]")
    zero_grads(params.values())
    loss = build_loss(params)
    grads = backward(loss, leaves=params.values())
    analytic = {name: np.asarray(grads[t]) for name, t in params.items()}

    per_block = {}
    for name, t in params.items():
        work = t.data.copy()
        numeric = np.zeros_like(work)
        probe = dict(params)
        with no_grad():
            for i in range(work.size):
                orig = work.flat[i]
                work.flat[i] = orig + eps
                probe[name] = Tensor(work)
                f_plus = float(build_loss(probe).data)
                work.flat[i] = orig - eps
                probe[name] = Tensor(work)
                f_minus = float(build_loss(probe).data)
                work.flat[i] = orig
                numeric.flat[i] = (f_plus - f_minus) / (2.0 * eps)
        a = analytic[name]
        denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
        per_block[name] = float(np.max(np.abs(a - numeric) / denom)) if work.size else 0.0
    return GradCheckReport(per_block, tol)
