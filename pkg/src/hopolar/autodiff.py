"""Minimal reverse-mode differentiation over dense float64 arrays.

A ``Tape`` records an append-only DAG of primitive operations. ``Var`` is a
lightweight handle (tape + node index) with the usual operator overloads.
Every math helper in this module dispatches on its argument type, so the same
formula code runs on plain numpy values (inference, oracles) and on ``Var``
nodes (training).

Conventions at kinks: relu'(0) = 0, d|x|/dx at 0 = 0, min over ties routes the
gradient to the smallest index. Non-finite forward values are hard errors.
"""

from __future__ import annotations

import numpy as np


class Node:
    __slots__ = ("value", "parents", "vjps")

    def __init__(self, value, parents, vjps):
        self.value = value
        self.parents = parents  # tuple of node indices
        self.vjps = vjps        # tuple of callables: out_grad -> parent grad


class Tape:
    """Single-writer record of forward computation."""

    def __init__(self):
        self.nodes: list[Node] = []

    def _push(self, value, parents=(), vjps=()):
        value = np.asarray(value, dtype=np.float64)
        if not np.all(np.isfinite(value)):
            raise FloatingPointError("non-finite value encountered on tape")
        self.nodes.append(Node(value, parents, vjps))
        return Var(self, len(self.nodes) - 1)

    def leaf(self, value):
        """Record an input/constant node."""
        return self._push(value)

    def custom(self, value, parents, vjps):
        """Record an externally computed op with caller-supplied vjps.

        ``parents`` is a sequence of Vars on this tape; ``vjps[i]`` maps the
        output cotangent to the cotangent of ``parents[i]``.
        """
        idx = tuple(p.idx for p in parents)
        return self._push(value, idx, tuple(vjps))


class Var:
    """Handle to a node on a tape."""

    __slots__ = ("tape", "idx")

    def __init__(self, tape, idx):
        self.tape = tape
        self.idx = idx

    @property
    def value(self):
        return self.tape.nodes[self.idx].value

    @property
    def shape(self):
        return self.value.shape

    def _wrap(self, other):
        if isinstance(other, Var):
            if other.tape is not self.tape:
                raise ValueError("operands live on different tapes")
            return other
        return self.tape.leaf(other)

    # -- arithmetic -------------------------------------------------------

    def __add__(self, other):
        o = self._wrap(other)
        a, b = self.value, o.value
        _check_broadcast(a, b)
        return self.tape._push(
            a + b, (self.idx, o.idx),
            (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(g, b.shape)),
        )

    __radd__ = __add__

    def __sub__(self, other):
        o = self._wrap(other)
        a, b = self.value, o.value
        _check_broadcast(a, b)
        return self.tape._push(
            a - b, (self.idx, o.idx),
            (lambda g: _unbroadcast(g, a.shape), lambda g: _unbroadcast(-g, b.shape)),
        )

    def __rsub__(self, other):
        return self._wrap(other).__sub__(self)

    def __mul__(self, other):
        o = self._wrap(other)
        a, b = self.value, o.value
        _check_broadcast(a, b)
        return self.tape._push(
            a * b, (self.idx, o.idx),
            (lambda g: _unbroadcast(g * b, a.shape), lambda g: _unbroadcast(g * a, b.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._wrap(other)
        a, b = self.value, o.value
        _check_broadcast(a, b)
        return self.tape._push(
            a / b, (self.idx, o.idx),
            (lambda g: _unbroadcast(g / b, a.shape),
             lambda g: _unbroadcast(-g * a / (b * b), b.shape)),
        )

    def __rtruediv__(self, other):
        return self._wrap(other).__truediv__(self)

    def __neg__(self):
        return self.tape._push(-self.value, (self.idx,), (lambda g: -g,))

    def __pow__(self, s):
        if isinstance(s, Var):
            raise TypeError("only scalar constant exponents are supported")
        s = float(s)
        a = self.value
        return self.tape._push(
            a ** s, (self.idx,), (lambda g: g * s * a ** (s - 1.0),))

    def __matmul__(self, other):
        o = self._wrap(other)
        return _matmul(self, o)

    def __rmatmul__(self, other):
        return _matmul(self._wrap(other), self)

    def __getitem__(self, key):
        a = self.value

        def vjp(g):
            out = np.zeros_like(a)
            out[key] = g
            return out

        return self.tape._push(a[key], (self.idx,), (vjp,))


def _check_broadcast(a, b):
    # Only same-shape elementwise or scalar-with-tensor is supported.
    if a.shape != b.shape and a.ndim != 0 and b.ndim != 0:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _unbroadcast(g, shape):
    if np.shape(g) != shape and shape == ():
        return np.sum(g)
    return g


def _matmul(x: Var, y: Var):
    a, b = x.value, y.value
    if a.ndim == 2 and b.ndim == 2:
        vjps = (lambda g: g @ b.T, lambda g: a.T @ g)
    elif a.ndim == 2 and b.ndim == 1:
        vjps = (lambda g: np.outer(g, b), lambda g: a.T @ g)
    elif a.ndim == 1 and b.ndim == 2:
        vjps = (lambda g: b @ g, lambda g: np.outer(a, g))
    else:
        raise ValueError("matmul expects 1-D/2-D operands; use dot for vectors")
    return x.tape._push(a @ b, (x.idx, y.idx), vjps)


# -- dispatching math helpers ---------------------------------------------

def _unary(x, fn, dfn, name):
    if isinstance(x, Var):
        v = fn(x.value)
        return x.tape._push(v, (x.idx,), (lambda g: g * dfn(x.value, v),))
    return fn(np.asarray(x, dtype=np.float64))


def sin(x):
    return _unary(x, np.sin, lambda a, v: np.cos(a), "sin")


def cos(x):
    return _unary(x, np.cos, lambda a, v: -np.sin(a), "cos")


def tan(x):
    return _unary(x, np.tan, lambda a, v: 1.0 + v * v, "tan")


def atan(x):
    return _unary(x, np.arctan, lambda a, v: 1.0 / (1.0 + a * a), "atan")


def exp(x):
    return _unary(x, np.exp, lambda a, v: v, "exp")


def log(x):
    return _unary(x, np.log, lambda a, v: 1.0 / a, "log")


def sqrt(x):
    return _unary(x, np.sqrt, lambda a, v: 0.5 / v, "sqrt")


def sigmoid(x):
    def fwd(a):
        return 1.0 / (1.0 + np.exp(-a))

    return _unary(x, fwd, lambda a, v: v * (1.0 - v), "sigmoid")


def tanh(x):
    return _unary(x, np.tanh, lambda a, v: 1.0 - v * v, "tanh")


def relu(x):
    return _unary(x, lambda a: np.maximum(a, 0.0),
                  lambda a, v: (a > 0.0).astype(np.float64), "relu")


def absolute(x):
    return _unary(x, np.abs, lambda a, v: np.sign(a), "abs")


def power(x, s):
    if isinstance(x, Var):
        return x ** s
    return np.asarray(x, dtype=np.float64) ** float(s)


def asum(x):
    if isinstance(x, Var):
        a = x.value
        return x.tape._push(np.sum(a), (x.idx,),
                            (lambda g: np.full_like(a, float(g)),))
    return np.sum(np.asarray(x, dtype=np.float64))


def mean(x):
    if isinstance(x, Var):
        a = x.value
        n = a.size
        return x.tape._push(np.mean(a), (x.idx,),
                            (lambda g: np.full_like(a, float(g) / n),))
    return np.mean(np.asarray(x, dtype=np.float64))


def dot(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        tape = x.tape if isinstance(x, Var) else y.tape
        xv = x if isinstance(x, Var) else tape.leaf(x)
        yv = y if isinstance(y, Var) else tape.leaf(y)
        a, b = xv.value, yv.value
        if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
            raise ValueError("dot expects equal-length vectors")
        return tape._push(np.dot(a, b), (xv.idx, yv.idx),
                          (lambda g: g * b, lambda g: g * a))
    return float(np.dot(x, y))


def l2norm(x):
    if isinstance(x, Var):
        a = x.value
        n = float(np.linalg.norm(a))

        def vjp(g):
            if n == 0.0:  # kink convention
                return np.zeros_like(a)
            return g * a / n

        return x.tape._push(n, (x.idx,), (vjp,))
    return float(np.linalg.norm(x))


def vmin(x):
    """Minimum over all elements; gradient routes to the smallest argmin index."""
    if isinstance(x, Var):
        a = x.value
        i = int(np.argmin(a))  # np.argmin already breaks ties low

        def vjp(g):
            out = np.zeros_like(a)
            out.flat[i] = g
            return out

        return x.tape._push(a.flat[i], (x.idx,), (vjp,))
    return float(np.min(x))


def minimum_const(x, c):
    """min(x, c) for scalar constant c, with gradient 0 on the clamped branch."""
    c = float(c)
    if isinstance(x, Var):
        a = x.value
        return x.tape._push(np.minimum(a, c), (x.idx,),
                            (lambda g: g * (a < c).astype(np.float64),))
    return np.minimum(np.asarray(x, dtype=np.float64), c)


def matmul(x, y):
    if isinstance(x, Var) or isinstance(y, Var):
        tape = x.tape if isinstance(x, Var) else y.tape
        xv = x if isinstance(x, Var) else tape.leaf(x)
        yv = y if isinstance(y, Var) else tape.leaf(y)
        return _matmul(xv, yv)
    return np.asarray(x) @ np.asarray(y)


def concat(parts, tape=None):
    """Concatenate 1-D pieces (Vars and/or scalars/arrays) into one vector."""
    var_parts = [p for p in parts if isinstance(p, Var)]
    if not var_parts:
        return np.concatenate([np.atleast_1d(np.asarray(p, dtype=np.float64))
                               for p in parts])
    tape = var_parts[0].tape
    vs = [p if isinstance(p, Var) else tape.leaf(p) for p in parts]
    arrs = [np.atleast_1d(v.value) for v in vs]
    sizes = [a.size for a in arrs]
    offsets = np.cumsum([0] + sizes)
    shapes = [v.value.shape for v in vs]

    def make_vjp(k):
        def vjp(g):
            seg = g[offsets[k]:offsets[k + 1]]
            return seg.reshape(shapes[k]) if shapes[k] != seg.shape else seg
        return vjp

    return tape._push(np.concatenate(arrs), tuple(v.idx for v in vs),
                      tuple(make_vjp(k) for k in range(len(vs))))


# -- reverse pass -----------------------------------------------------------

class Gradients:
    def __init__(self, table):
        self._table = table

    def wrt(self, var: Var):
        g = self._table.get(var.idx)
        if g is None:
            return np.zeros_like(var.value)
        return g


def backward(out: Var) -> Gradients:
    """Reverse accumulation from a scalar output node."""
    if out.value.shape != ():
        raise ValueError("backward requires a scalar output")
    nodes = out.tape.nodes
    grads: dict[int, np.ndarray] = {out.idx: np.ones(())}
    for i in range(out.idx, -1, -1):
        g = grads.get(i)
        if g is None:
            continue
        node = nodes[i]
        for parent, vjp in zip(node.parents, node.vjps):
            contrib = np.asarray(vjp(g), dtype=np.float64)
            if parent in grads:
                grads[parent] = grads[parent] + contrib
            else:
                grads[parent] = contrib
    return Gradients(grads)


def grad(f, x):
    """Gradient of scalar-valued f at vector x via the tape."""
    tape = Tape()
    xv = tape.leaf(np.asarray(x, dtype=np.float64))
    out = f(xv)
    return backward(out).wrt(xv)


def gradcheck(f, x, h=1e-5):
    """Max relative error between reverse-mode and central-difference gradients.

    f maps a Var (or array) vector to a scalar; x must be at least 10h away
    from any kink or tie of f.
    """
    x = np.asarray(x, dtype=np.float64)
    g_ad = grad(f, x)
    err = 0.0
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        fp = _scalar_eval(f, x + e)
        fm = _scalar_eval(f, x - e)
        fd = (fp - fm) / (2.0 * h)
        a = float(g_ad.flat[i])
        err = max(err, abs(a - fd) / max(1.0, abs(a), abs(fd)))
    return err


def _scalar_eval(f, x):
    tape = Tape()
    out = f(tape.leaf(x))
    return float(out.value) if isinstance(out, Var) else float(out)
