"""Reverse-mode automatic differentiation over dense float64 matrices.

Every value in the graph is a 2-D numpy array. ``Var`` wraps a value together
with a gradient buffer of the same shape; operations build the graph by
recording parents and a vector-Jacobian closure. ``backward`` walks the graph
in reverse topological order and *accumulates* gradients into ``.grad`` --
call :func:`zero_grads` (or an optimizer's ``zero_grad``) between steps.

Finiteness is enforced at the API boundaries (loss values, optimizer
updates, user-constructed leaves), not after every intermediate op.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np

BCE_EPS = 1e-7
LEAKY_SLOPE = 0.01


class DimensionError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class GraphError(RuntimeError):
    """The computation graph was used outside its contract."""


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise DimensionError(f"expected a scalar, vector or matrix, got ndim={arr.ndim}")
    return arr


_node_counter = itertools.count()


class Var:
    """A node in the computation graph: a matrix value plus its gradient."""

    __slots__ = ("value", "grad", "requires_grad", "node_id", "_parents", "_vjp")

    def __init__(
        self,
        value,
        requires_grad: bool = False,
        _parents: tuple["Var", ...] = (),
        _vjp: Callable[[np.ndarray], tuple] | None = None,
    ):
        self.value = _as_matrix(value)
        self.grad = np.zeros_like(self.value)
        self.requires_grad = requires_grad
        self.node_id = next(_node_counter)
        self._parents = _parents
        self._vjp = _vjp

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def detach(self) -> "Var":
        """A constant copy, cut off from the graph (safe against in-place updates)."""
        return Var(self.value.copy())

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def backward(self) -> None:
        backward(self)

    def item(self) -> float:
        if self.value.size != 1:
            raise GraphError(f"item() requires a 1x1 value, got shape {self.value.shape}")
        return float(self.value[0, 0])

    # Scalar arithmetic sugar used when combining loss terms.
    def __add__(self, other: "Var") -> "Var":
        return add(self, other)

    def __sub__(self, other: "Var") -> "Var":
        return add(self, scale(other, -1.0))

    def __mul__(self, c) -> "Var":
        return scale(self, float(c))

    __rmul__ = __mul__

    def __neg__(self) -> "Var":
        return scale(self, -1.0)

    def __repr__(self) -> str:  # pragma: no cover
        return f"Var(shape={self.value.shape}, requires_grad={self.requires_grad})"


def as_var(x) -> Var:
    """Wrap an array as a constant Var; pass Vars through unchanged."""
    return x if isinstance(x, Var) else Var(x)


def parameter(value) -> Var:
    """A leaf Var that participates in gradient computation."""
    v = Var(value, requires_grad=True)
    assert_finite(v.value, "parameter")
    return v


def assert_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise FloatingPointError(f"non-finite values in {what}")


def _make(value: np.ndarray, parents: tuple[Var, ...], vjp) -> Var:
    req = any(p.requires_grad for p in parents)
    return Var(value, requires_grad=req, _parents=parents, _vjp=vjp if req else None)


# ---------------------------------------------------------------------------
# Operations


def matmul(a: Var, b: Var) -> Var:
    a, b = as_var(a), as_var(b)
    if a.value.shape[1] != b.value.shape[0]:
        raise DimensionError(
            f"matmul: inner dimensions differ, {a.value.shape} x {b.value.shape}"
        )
    av, bv = a.value, b.value

    def vjp(g):
        return g @ bv.T, av.T @ g

    return _make(av @ bv, (a, b), vjp)


def add(a: Var, b: Var) -> Var:
    """Elementwise addition; a (1, d) operand broadcasts over rows."""
    a, b = as_var(a), as_var(b)
    sa, sb = a.value.shape, b.value.shape
    if sa != sb and not (sa[1] == sb[1] and (sa[0] == 1 or sb[0] == 1)):
        raise DimensionError(f"add: incompatible shapes {sa} + {sb}")

    def vjp(g):
        ga = g.sum(axis=0, keepdims=True) if sa[0] == 1 and g.shape[0] != 1 else g
        gb = g.sum(axis=0, keepdims=True) if sb[0] == 1 and g.shape[0] != 1 else g
        return ga, gb

    return _make(a.value + b.value, (a, b), vjp)


def scale(a: Var, c: float) -> Var:
    a = as_var(a)
    c = float(c)

    def vjp(g):
        return (g * c,)

    return _make(a.value * c, (a,), vjp)


def relu(a: Var) -> Var:
    a = as_var(a)
    mask = a.value > 0

    def vjp(g):
        return (g * mask,)

    return _make(np.maximum(a.value, 0.0), (a,), vjp)


def leaky_relu(a: Var, slope: float = LEAKY_SLOPE) -> Var:
    a = as_var(a)
    mask = a.value > 0

    def vjp(g):
        return (g * np.where(mask, 1.0, slope),)

    return _make(np.where(mask, a.value, slope * a.value), (a,), vjp)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid(a: Var) -> Var:
    a = as_var(a)
    s = _sigmoid(a.value)

    def vjp(g):
        return (g * s * (1.0 - s),)

    return _make(s, (a,), vjp)


def sum_all(a: Var) -> Var:
    a = as_var(a)
    shape = a.value.shape

    def vjp(g):
        return (np.full(shape, g[0, 0]),)

    return _make(np.array([[a.value.sum()]]), (a,), vjp)


def concat_cols(a: Var, b: Var) -> Var:
    """Column-wise concatenation [a | b] of two row-aligned matrices."""
    a, b = as_var(a), as_var(b)
    if a.value.shape[0] != b.value.shape[0]:
        raise DimensionError(
            f"concat_cols: row counts differ, {a.value.shape} | {b.value.shape}"
        )
    ca = a.value.shape[1]

    def vjp(g):
        return g[:, :ca], g[:, ca:]

    return _make(np.hstack([a.value, b.value]), (a, b), vjp)


def take_rows(a: Var, rows) -> Var:
    """Gather a subset of rows; the backward pass scatters gradients back."""
    a = as_var(a)
    idx = np.asarray(rows, dtype=np.intp)
    shape = a.value.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, idx, g)
        return (out,)

    return _make(a.value[idx], (a,), vjp)


# ---------------------------------------------------------------------------
# Losses


def bce_loss(predicted: Var, target) -> Var:
    """Mean binary cross-entropy -[t*log(p) + (1-t)*log(1-p)] over all entries.

    Predictions are clamped into [BCE_EPS, 1-BCE_EPS] before the log; the
    gradient is zero where the clamp is active.
    """
    predicted = as_var(predicted)
    t = _as_matrix(target)
    if predicted.value.shape != t.shape:
        raise DimensionError(
            f"bce_loss: prediction shape {predicted.value.shape} != target shape {t.shape}"
        )
    raw = predicted.value
    p = np.clip(raw, BCE_EPS, 1.0 - BCE_EPS)
    n = p.size
    value = float(-(t * np.log(p) + (1.0 - t) * np.log1p(-p)).mean())
    assert_finite(np.array(value), "bce_loss")
    inside = (raw > BCE_EPS) & (raw < 1.0 - BCE_EPS)

    def vjp(g):
        return (g[0, 0] * inside * (p - t) / (p * (1.0 - p)) / n,)

    return _make(np.array([[value]]), (predicted,), vjp)


def mse_loss(reconstruction: Var, target, root: bool = False) -> Var:
    """Sum of squared errors divided by the number of rows (batch size).

    With ``root=True`` the square root of that value is returned instead.
    """
    reconstruction = as_var(reconstruction)
    t = _as_matrix(target)
    if reconstruction.value.shape != t.shape:
        raise DimensionError(
            f"mse_loss: reconstruction shape {reconstruction.value.shape} "
            f"!= target shape {t.shape}"
        )
    diff = reconstruction.value - t
    n_rows = t.shape[0]
    base = float((diff * diff).sum() / n_rows)
    assert_finite(np.array(base), "mse_loss")
    if not root:

        def vjp(g):
            return (g[0, 0] * 2.0 * diff / n_rows,)

        return _make(np.array([[base]]), (reconstruction,), vjp)

    value = float(np.sqrt(base))

    def vjp_root(g):
        if value == 0.0:  # derivative undefined at the minimum; use 0
            return (np.zeros_like(diff),)
        return (g[0, 0] * diff / (n_rows * value),)

    return _make(np.array([[value]]), (reconstruction,), vjp_root)


# ---------------------------------------------------------------------------
# Backward pass


def backward(loss: Var) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every requires-grad node.

    Repeated calls without zeroing add up. Only nodes reachable from ``loss``
    through requires-grad parents are touched.
    """
    if not isinstance(loss, Var):
        raise GraphError("backward expects a Var")
    if loss.value.shape != (1, 1):
        raise GraphError(f"backward requires a 1x1 scalar loss, got shape {loss.value.shape}")

    topo: list[Var] = []
    seen: set[int] = set()
    stack: list[tuple[Var, bool]] = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if node.node_id in seen:
            continue
        seen.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.node_id not in seen:
                stack.append((p, False))

    # Per-pass gradient flow kept separate from .grad so that repeated
    # backward calls accumulate exactly (not compound through stale values).
    flow: dict[int, np.ndarray] = {loss.node_id: np.ones((1, 1))}
    for node in reversed(topo):
        g = flow.pop(node.node_id, None)
        if g is None:
            continue
        node.grad += g
        if node._vjp is None:
            continue
        for parent, pg in zip(node._parents, node._vjp(g)):
            if pg is None or not parent.requires_grad:
                continue
            acc = flow.get(parent.node_id)
            flow[parent.node_id] = pg if acc is None else acc + pg


def zero_grads(params: Sequence[Var]) -> None:
    for p in params:
        p.zero_grad()
