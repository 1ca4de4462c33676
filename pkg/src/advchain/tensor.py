"""Dense float64 tensors with reverse-mode gradients.

Just enough of an autograd engine for small feed-forward classifiers and for
gradients of a loss with respect to the *input*:

* every value is a float64 ndarray, row-major, frozen after construction;
* each operation validates shapes explicitly (no silent broadcasting except
  scalar-with-tensor) and checks its output for NaN/Inf;
* operations record vector-Jacobian-product closures; :func:`backward` walks
  the graph once in topological order and returns a leaf -> gradient map
  without mutating any node, so repeated backward passes are identical.

Conventions fixed here so degenerate inputs behave deterministically:
``sign(0) == 0`` and the relu subgradient at 0 is 0.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

__all__ = [
    "Tensor",
    "TensorError",
    "ShapeError",
    "DomainError",
    "NonFiniteError",
    "GraphError",
    "matmul",
    "add",
    "add_bias",
    "scale",
    "elementwise_mul",
    "elementwise_square",
    "sqrt",
    "abs_sum",
    "sign",
    "relu",
    "sum_all",
    "reshape",
    "softmax",
    "softmax_cross_entropy",
    "softmax_cross_entropy_rows",
    "backward",
    "softmax_nd",
]


class TensorError(Exception):
    """Base class for tensor contract violations."""


class ShapeError(TensorError):
    """Operand shapes do not satisfy the operation's contract."""


class DomainError(TensorError):
    """Operand values outside the operation's domain (e.g. sqrt of negative)."""


class NonFiniteError(TensorError):
    """An operation produced NaN or Inf."""


class GraphError(TensorError):
    """Gradient-graph contract violation (e.g. non-scalar backward root)."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Tensor:
    """Immutable float64 array, optionally a node in a gradient graph.

    Leaves (no parents) are what :func:`backward` reports gradients for.
    """

    __slots__ = ("data", "parents", "_vjps")

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="C")
        if arr.size and not np.isfinite(arr).all():
            raise NonFiniteError("tensor constructed with non-finite entries")
        self.data = _freeze(arr)
        self.parents: tuple[Tensor, ...] = ()
        self._vjps: tuple[Callable[[np.ndarray], np.ndarray], ...] = ()

    @staticmethod
    def _from_op(arr: np.ndarray, parents, vjps, what: str) -> "Tensor":
        out = object.__new__(Tensor)
        arr = np.asarray(arr, dtype=np.float64, order="C")  # keeps 0-d scalars 0-d
        if arr.size and not np.isfinite(arr).all():
            raise NonFiniteError(f"{what} produced non-finite values")
        out.data = _freeze(arr)
        out.parents = tuple(parents)
        out._vjps = tuple(vjps)
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(()))

    def tolist(self):
        return self.data.tolist()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"

    # light operator sugar; the functional API below is the contract
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return add(self, scale(other, -1.0))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return elementwise_mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return scale(self, -1.0)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of two 2-D tensors."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def vjp_a(g, bd=b.data):
        return g @ bd.T

    def vjp_b(g, ad=a.data):
        return ad.T @ g

    return Tensor._from_op(out, (a, b), (vjp_a, vjp_b), "matmul")


def _scalar_tensor_pair(a: Tensor, b: Tensor, opname: str):
    """Classify (a, b) as same-shape or scalar-with-tensor; else raise."""
    if a.shape == b.shape:
        return "same"
    if a.size == 1 and a.ndim == 0:
        return "a_scalar"
    if b.size == 1 and b.ndim == 0:
        return "b_scalar"
    raise ShapeError(
        f"{opname} requires equal shapes or scalar-with-tensor, got {a.shape} and {b.shape}"
    )


def add(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise sum; the only broadcast allowed is scalar-with-tensor."""
    a, b = _as_tensor(a), _as_tensor(b)
    kind = _scalar_tensor_pair(a, b, "add")
    out = a.data + b.data

    def vjp_full(g):
        return g

    def vjp_scalar(g):
        return np.asarray(g.sum())

    vjps = {
        "same": (vjp_full, vjp_full),
        "a_scalar": (vjp_scalar, vjp_full),
        "b_scalar": (vjp_full, vjp_scalar),
    }[kind]
    return Tensor._from_op(out, (a, b), vjps, "add")


def add_bias(m: Tensor, v: Tensor) -> Tensor:
    """Row-broadcast add of a length-n vector onto an (B, n) matrix."""
    m, v = _as_tensor(m), _as_tensor(v)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise ShapeError(f"add_bias needs (B,n)+(n,), got {m.shape} and {v.shape}")
    out = m.data + v.data

    def vjp_m(g):
        return g

    def vjp_v(g):
        return g.sum(axis=0)

    return Tensor._from_op(out, (m, v), (vjp_m, vjp_v), "add_bias")


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply every entry by the python scalar ``c``."""
    a = _as_tensor(a)
    c = float(c)
    out = a.data * c

    def vjp(g):
        return g * c

    return Tensor._from_op(out, (a,), (vjp,), "scale")


def elementwise_mul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    kind = _scalar_tensor_pair(a, b, "elementwise_mul")
    out = a.data * b.data

    def vjp_a(g, bd=b.data):
        return g * bd

    def vjp_b(g, ad=a.data):
        return g * ad

    def vjp_a_scalar(g, bd=b.data):
        return np.asarray((g * bd).sum())

    def vjp_b_scalar(g, ad=a.data):
        return np.asarray((g * ad).sum())

    vjps = {
        "same": (vjp_a, vjp_b),
        "a_scalar": (vjp_a_scalar, vjp_b),
        "b_scalar": (vjp_a, vjp_b_scalar),
    }[kind]
    return Tensor._from_op(out, (a, b), vjps, "elementwise_mul")


def elementwise_square(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = a.data * a.data

    def vjp(g, ad=a.data):
        return 2.0 * g * ad

    return Tensor._from_op(out, (a,), (vjp,), "elementwise_square")


def sqrt(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    if a.size and a.data.min() < 0.0:
        raise DomainError("sqrt of negative entry")
    out = np.sqrt(a.data)

    def vjp(g, od=out):
        # subgradient 0 where the input is exactly 0
        safe = np.where(od > 0.0, od, 1.0)
        return np.where(od > 0.0, g / (2.0 * safe), 0.0)

    return Tensor._from_op(out, (a,), (vjp,), "sqrt")


def sign(a: Tensor) -> Tensor:
    """Elementwise sign with sign(0) == 0; gradient is 0 everywhere."""
    a = _as_tensor(a)
    out = np.sign(a.data)

    def vjp(g):
        return np.zeros_like(g)

    return Tensor._from_op(out, (a,), (vjp,), "sign")


def relu(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = np.maximum(a.data, 0.0)

    def vjp(g, ad=a.data):
        return g * (ad > 0.0)

    return Tensor._from_op(out, (a,), (vjp,), "relu")


def abs_sum(a: Tensor) -> Tensor:
    """L1 norm as a scalar tensor."""
    a = _as_tensor(a)
    out = np.asarray(np.abs(a.data).sum())

    def vjp(g, ad=a.data):
        return g * np.sign(ad)

    return Tensor._from_op(out, (a,), (vjp,), "abs_sum")


def sum_all(a: Tensor) -> Tensor:
    """Sum of all entries as a scalar tensor."""
    a = _as_tensor(a)
    out = np.asarray(a.data.sum())

    def vjp(g, shape=a.shape):
        return np.broadcast_to(g, shape)

    return Tensor._from_op(out, (a,), (vjp,), "sum_all")


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None

    def vjp(g, old=a.shape):
        return g.reshape(old)

    return Tensor._from_op(out, (a,), (vjp,), "reshape")


def softmax_nd(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis of a plain ndarray (no graph)."""
    z = np.asarray(logits, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def softmax(logits: Tensor) -> Tensor:
    """Softmax over the last axis, max-subtraction stabilized."""
    logits = _as_tensor(logits)
    out = softmax_nd(logits.data)

    def vjp(g, s=out):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return s * (g - inner)

    return Tensor._from_op(out, (logits,), (vjp,), "softmax")


def _check_onehot(onehot: np.ndarray) -> None:
    rows = onehot.reshape(-1, onehot.shape[-1])
    ones = (rows == 1.0).sum(axis=-1)
    rest = rows.sum(axis=-1)
    if not ((ones == 1).all() and np.allclose(rest, 1.0)):
        raise DomainError("labels must be one-hot (exactly one entry 1, rest 0)")


def softmax_cross_entropy(logits: Tensor, onehot: Tensor) -> Tensor:
    """Cross entropy -log softmax(logits)[true] for a single length-C pair.

    The label is treated as a constant: gradients flow to the logits only,
    where the backward signal is exactly softmax(logits) - onehot.
    """
    logits = _as_tensor(logits)
    onehot = _as_tensor(onehot)
    if logits.ndim != 1 or logits.shape != onehot.shape:
        raise ShapeError(
            f"softmax_cross_entropy needs matching 1-D tensors, got {logits.shape} and {onehot.shape}"
        )
    _check_onehot(onehot.data)
    z = logits.data
    m = z.max()
    lse = m + np.log(np.exp(z - m).sum())
    out = np.asarray(lse - float(z @ onehot.data))

    def vjp(g, s=softmax_nd(z), y=onehot.data):
        return g * (s - y)

    return Tensor._from_op(out, (logits,), (vjp,), "softmax_cross_entropy")


def softmax_cross_entropy_rows(logits: Tensor, onehot: Tensor) -> Tensor:
    """Per-row cross entropy for (B, C) logits against (B, C) one-hot labels."""
    logits = _as_tensor(logits)
    onehot = _as_tensor(onehot)
    if logits.ndim != 2 or logits.shape != onehot.shape:
        raise ShapeError(
            f"softmax_cross_entropy_rows needs matching 2-D tensors, got {logits.shape} and {onehot.shape}"
        )
    _check_onehot(onehot.data)
    z = logits.data
    m = z.max(axis=1, keepdims=True)
    lse = m[:, 0] + np.log(np.exp(z - m).sum(axis=1))
    out = lse - (z * onehot.data).sum(axis=1)

    def vjp(g, s=softmax_nd(z), y=onehot.data):
        return g[:, None] * (s - y)

    return Tensor._from_op(out, (logits,), (vjp,), "softmax_cross_entropy_rows")


def _topological_order(root: Tensor) -> list[Tensor]:
    """Children-before-parents order, each node visited exactly once."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    order.reverse()  # root first
    return order


def backward(root: Tensor) -> dict[Tensor, Tensor]:
    """Gradients of a scalar ``root`` with respect to every leaf in its graph.

    Gradients accumulate by summation over all paths; leaves that contribute
    nothing get explicit zeros.  Nodes are never mutated, so calling this
    twice on the same graph gives identical results.
    """
    if root.data.shape != ():
        raise GraphError(f"backward root must be scalar, got shape {root.shape}")
    order = _topological_order(root)
    grads: dict[int, np.ndarray] = {id(root): np.ones(())}
    leaves: dict[Tensor, Tensor] = {}
    for node in order:
        g = grads.pop(id(node), None)
        if g is None:
            g = np.zeros(node.shape)
        if not node.parents:
            leaves[node] = Tensor(g)
            continue
        for parent, vjp in zip(node.parents, node._vjps):
            pg = vjp(g)
            acc = grads.get(id(parent))
            if acc is None:
                grads[id(parent)] = np.array(pg, dtype=np.float64)
            else:
                acc += pg
    return leaves
