"""Minimal reverse-mode autodiff over dense numpy arrays.

Covers exactly the operations the critic/actor architectures need:
affine maps, relu/tanh, elementwise arithmetic, square, reductions over
the last axis, full reductions, concatenation, negation and scaling.
Tensors are at most 2-D (batch x feature); no broadcasting beyond a bias
vector over the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    """Operands do not conform for the requested op."""


class NumericError(ArithmeticError):
    """Non-finite values fed into an op while debug checks are on."""


_DEBUG = False


def set_debug(flag):
    """Toggle non-finite input checks on every primitive op."""
    global _DEBUG
    _DEBUG = bool(flag)


def _check_finite(name, *arrays):
    if _DEBUG:
        for a in arrays:
            if not np.all(np.isfinite(a)):
                raise NumericError(f"non-finite input to op '{name}'")


def _require_same_shape(name, a, b):
    if a.shape != b.shape:
        raise ShapeError(f"op '{name}': shapes {a.shape} and {b.shape} do not match")


class OpNode:
    """One recorded primitive: inputs, output and the local backward rule."""

    __slots__ = ("name", "inputs", "backward_fn", "used")

    def __init__(self, name, inputs, backward_fn):
        self.name = name
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.used = False


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "op")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.op = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)

    # -- operator sugar -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def relu(self):
        return relu(self)

    def tanh(self):
        return tanh(self)

    def square(self):
        return square(self)

    def mean_last(self):
        return mean_last(self)

    def max_last(self):
        return max_last(self)

    def sum_last(self):
        return sum_last(self)

    def sum(self):
        return sum_all(self)

    def mean(self):
        return mean_all(self)

    def reshape(self, shape):
        return reshape(self, shape)


def _tracked(*tensors):
    return any(t.requires_grad or t.op is not None for t in tensors)


def _accumulate(t, g, own=False):
    """Add a gradient contribution; ``own=True`` promises g is a fresh
    array the caller will not reuse, letting the first contribution be
    adopted without a copy."""
    if t.requires_grad or t.op is not None:
        if t.grad is None:
            t.grad = g if own else g.copy()
        else:
            t.grad += g


def _make(name, value, inputs, backward_fn):
    out = Tensor(value, dtype=value.dtype)
    if _tracked(*inputs):
        out.requires_grad = True
        out.op = OpNode(name, inputs, backward_fn)
    return out


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def linear(x, w, b):
    """Affine map: x (B, n_in) @ w (n_in, n_out) + b (n_out,)."""
    if x.data.ndim != 2 or w.data.ndim != 2 or x.data.shape[1] != w.data.shape[0]:
        raise ShapeError(
            f"op 'linear': input {x.data.shape} does not chain with weight {w.data.shape}"
        )
    if b.data.shape != (w.data.shape[1],):
        raise ShapeError(
            f"op 'linear': bias {b.data.shape} does not match weight {w.data.shape}"
        )
    _check_finite("linear", x.data, w.data, b.data)
    value = x.data @ w.data
    value += b.data

    def back(g):
        _accumulate(x, g @ w.data.T, own=True)
        _accumulate(w, x.data.T @ g, own=True)
        _accumulate(b, g.sum(axis=0), own=True)

    return _make("linear", value, (x, w, b), back)


def relu(x):
    _check_finite("relu", x.data)
    value = np.maximum(x.data, 0)
    mask = x.data > 0

    def back(g):
        _accumulate(x, g * mask, own=True)

    return _make("relu", value, (x,), back)


def tanh(x):
    _check_finite("tanh", x.data)
    value = np.tanh(x.data)

    def back(g):
        _accumulate(x, g * (1.0 - value * value), own=True)

    return _make("tanh", value, (x,), back)


def add(a, b):
    _require_same_shape("add", a.data, b.data)
    _check_finite("add", a.data, b.data)

    def back(g):
        _accumulate(a, g)
        _accumulate(b, g)

    return _make("add", a.data + b.data, (a, b), back)


def sub(a, b):
    _require_same_shape("sub", a.data, b.data)
    _check_finite("sub", a.data, b.data)

    def back(g):
        _accumulate(a, g)
        _accumulate(b, -g, own=True)

    return _make("sub", a.data - b.data, (a, b), back)


def mul(a, b):
    _require_same_shape("mul", a.data, b.data)
    _check_finite("mul", a.data, b.data)

    def back(g):
        _accumulate(a, g * b.data, own=True)
        _accumulate(b, g * a.data, own=True)

    return _make("mul", a.data * b.data, (a, b), back)


def neg(x):
    def back(g):
        _accumulate(x, -g, own=True)

    return _make("neg", -x.data, (x,), back)


def scale(x, c):
    """Multiply by a python/numpy scalar constant."""
    c = x.data.dtype.type(c)
    _check_finite("scale", x.data)

    def back(g):
        _accumulate(x, g * c, own=True)

    return _make("scale", x.data * c, (x,), back)


def square(x):
    _check_finite("square", x.data)

    def back(g):
        _accumulate(x, g * (2.0 * x.data), own=True)

    return _make("square", x.data * x.data, (x,), back)


def sqrt(x):
    """Elementwise square root; the gradient at exactly 0 is taken to be 0
    (same convention as relu's kink)."""
    _check_finite("sqrt", x.data)
    value = np.sqrt(x.data)

    def back(g):
        denom = np.where(value > 0, 2.0 * value, np.inf)
        _accumulate(x, g / denom, own=True)

    return _make("sqrt", value, (x,), back)


def row_scale(x, row):
    """Multiply every batch row elementwise by a constant feature vector."""
    row = np.asarray(row, dtype=x.data.dtype)
    if row.shape != (x.data.shape[-1],):
        raise ShapeError(f"op 'row_scale': row {row.shape} vs input {x.data.shape}")
    _check_finite("row_scale", x.data, row)

    def back(g):
        _accumulate(x, g * row, own=True)

    return _make("row_scale", x.data * row, (x,), back)


def row_shift(x, row):
    """Add a constant feature vector to every batch row."""
    row = np.asarray(row, dtype=x.data.dtype)
    if row.shape != (x.data.shape[-1],):
        raise ShapeError(f"op 'row_shift': row {row.shape} vs input {x.data.shape}")
    _check_finite("row_shift", x.data, row)

    def back(g):
        _accumulate(x, g)

    return _make("row_shift", x.data + row, (x,), back)


def mean_last(x):
    if x.data.ndim < 1:
        raise ShapeError("op 'mean_last': needs at least one axis")
    _check_finite("mean_last", x.data)
    n = x.data.shape[-1]
    value = x.data.mean(axis=-1)

    def back(g):
        _accumulate(x, np.repeat(g[..., None], n, axis=-1) / n, own=True)

    return _make("mean_last", value, (x,), back)


def sum_last(x):
    if x.data.ndim < 1:
        raise ShapeError("op 'sum_last': needs at least one axis")
    _check_finite("sum_last", x.data)
    n = x.data.shape[-1]
    value = x.data.sum(axis=-1)

    def back(g):
        _accumulate(x, np.repeat(g[..., None], n, axis=-1), own=True)

    return _make("sum_last", value, (x,), back)


def max_last(x, return_argmax=False):
    """Max over the last axis; the backward pass routes all gradient to the
    recorded argmax (ties resolve to the lowest index)."""
    if x.data.ndim < 1:
        raise ShapeError("op 'max_last': needs at least one axis")
    _check_finite("max_last", x.data)
    idx = np.argmax(x.data, axis=-1)
    value = np.take_along_axis(x.data, idx[..., None], axis=-1)[..., 0]

    def back(g):
        gx = np.zeros_like(x.data)
        np.put_along_axis(gx, idx[..., None], g[..., None], axis=-1)
        _accumulate(x, gx, own=True)

    out = _make("max_last", value, (x,), back)
    if return_argmax:
        return out, idx
    return out


def sum_all(x):
    _check_finite("sum", x.data)
    value = np.asarray(x.data.sum())

    def back(g):
        _accumulate(x, np.full_like(x.data, g), own=True)

    return _make("sum", value, (x,), back)


def mean_all(x):
    _check_finite("mean", x.data)
    n = x.data.size
    value = np.asarray(x.data.mean())

    def back(g):
        _accumulate(x, np.full_like(x.data, g / n), own=True)

    return _make("mean", value, (x,), back)


def cat(tensors):
    """Concatenate along the last axis; all other dims must agree."""
    tensors = [t for t in tensors if t.data.shape[-1] > 0]
    if len(tensors) == 1:
        return tensors[0]
    lead = tensors[0].data.shape[:-1]
    for t in tensors[1:]:
        if t.data.shape[:-1] != lead:
            raise ShapeError(
                f"op 'cat': leading dims {t.data.shape} vs {tensors[0].data.shape}"
            )
    _check_finite("cat", *[t.data for t in tensors])
    value = np.concatenate([t.data for t in tensors], axis=-1)
    widths = [t.data.shape[-1] for t in tensors]

    def back(g):
        start = 0
        for t, w in zip(tensors, widths):
            _accumulate(t, g[..., start : start + w])
            start += w

    return _make("cat", value, tuple(tensors), back)


def reshape(x, shape):
    value = x.data.reshape(shape)

    def back(g):
        _accumulate(x, g.reshape(x.data.shape))

    return _make("reshape", value, (x,), back)


# ---------------------------------------------------------------------------
# backward pass
# ---------------------------------------------------------------------------

class Tape:
    """The ordered op record of one computation graph, inputs before users."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def trace(cls, root):
        order = []
        if root.op is None:
            return cls(order)
        seen = set()
        stack = [(root, False)]
        while stack:
            t, expanded = stack.pop()
            if expanded:
                order.append(t)
                continue
            if id(t) in seen:
                continue
            seen.add(id(t))
            stack.append((t, True))
            for inp in t.op.inputs:
                if inp.op is not None and id(inp) not in seen:
                    stack.append((inp, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)


def backward(loss):
    """Accumulate gradients of a scalar loss into every tracked tensor."""
    if loss.data.size != 1:
        raise ShapeError(
            f"backward requires a scalar loss, got shape {loss.data.shape}"
        )
    if loss.op is None and not loss.requires_grad:
        return
    tape = Tape.trace(loss)
    for t in tape.nodes:
        if t.op.used:
            raise RuntimeError(
                "backward already called on this graph; re-run the forward pass"
            )
    loss.grad = np.ones_like(loss.data)
    for t in reversed(tape.nodes):
        t.op.used = True
        if t.grad is None:
            continue
        t.op.backward_fn(t.grad)


# ---------------------------------------------------------------------------
# finite-difference gradient checking
# ---------------------------------------------------------------------------

@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    passed: bool
    n_checked: int
    worst_tensor: int = -1
    worst_index: int = -1
    note: str = ""

    def __str__(self):
        status = "PASS" if self.passed else "FAIL"
        return (
            f"gradcheck {status}: max rel err {self.max_rel_err:.3e} "
            f"(tol {self.tol:.1e}, {self.n_checked} elements){' ' + self.note if self.note else ''}"
        )


def grad_check(f, x, step=1e-5, tol=1e-4):
    """Compare backward gradients of the scalar function ``f`` against
    central finite differences at every element of ``x``.

    ``x`` may be a single tensor or a sequence of tensors; ``f`` is called
    with it as the sole argument and must build a fresh graph each call.
    """
    if not 1e-7 <= step <= 1e-4:
        raise ValueError(f"step {step} outside [1e-7, 1e-4]")
    xs = [x] if isinstance(x, Tensor) else list(x)
    for t in xs:
        if t.data.dtype != np.float64:
            raise ValueError("grad_check requires 64-bit tensors")
        t.requires_grad = True
        t.zero_grad()

    arg = xs[0] if isinstance(x, Tensor) else xs
    loss = f(arg)
    backward(loss)
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in xs]

    max_rel = 0.0
    worst_t = worst_i = -1
    n_checked = 0
    for ti, t in enumerate(xs):
        flat = t.data.reshape(-1)
        for i in range(flat.shape[0]):
            orig = flat[i]
            flat[i] = orig + step
            up = float(f(arg).data)
            flat[i] = orig - step
            dn = float(f(arg).data)
            flat[i] = orig
            quot = (up - dn) / (2.0 * step)
            if not np.isfinite(quot):
                return GradCheckReport(
                    max_rel_err=np.inf,
                    tol=tol,
                    passed=False,
                    n_checked=n_checked,
                    worst_tensor=ti,
                    worst_index=i,
                    note=f"non-finite finite-difference quotient at tensor {ti}, index {i}",
                )
            g = analytic[ti].reshape(-1)[i]
            rel = abs(g - quot) / max(abs(g), abs(quot), 1e-3)
            n_checked += 1
            if rel > max_rel:
                max_rel = rel
                worst_t, worst_i = ti, i
    return GradCheckReport(
        max_rel_err=max_rel,
        tol=tol,
        passed=max_rel <= tol,
        n_checked=n_checked,
        worst_tensor=worst_t,
        worst_index=worst_i,
    )
