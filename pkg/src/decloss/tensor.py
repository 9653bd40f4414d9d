"""Dense float64 tensors with a reverse-mode gradient tape.

Every differentiable operation is a :class:`Function` subclass. Applying one to
tensors that require gradients records a node carrying a monotonically
increasing index; :func:`backward` gathers the nodes reachable from a scalar
root into a :class:`Tape` and replays it in reverse recording order.

Only the operations needed by the loss pipeline and the toy upsampler are
provided. Binary elementwise operations require equal shapes; there is no
implicit broadcasting apart from the batch dimensions of :func:`matmul`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ContractError, DimensionError, DomainError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_node_counter = itertools.count()


class Node:
    """One recorded operation: the function instance plus its recording index."""

    __slots__ = ("index", "fn", "consumed")

    def __init__(self, fn: "Function"):
        self.index = next(_node_counter)
        self.fn = fn
        self.consumed = False

    def __repr__(self) -> str:
        return f"Node({self.index}, {type(self.fn).__name__})"


class Tensor:
    """Immutable float64 array; only ``grad`` changes after construction."""

    __array_priority__ = 1000

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data._data
        arr = np.array(data, dtype=np.float64)
        if any(s <= 0 for s in arr.shape):
            raise DimensionError(f"tensor extents must be positive, got shape {arr.shape}")
        arr.setflags(write=False)
        self._data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._node: Optional[Node] = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.setflags(write=False)
        t._data = arr
        t.requires_grad = False
        t.grad = None
        t._node = None
        return t

    # -- inspection -------------------------------------------------------

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple:
        return self._data.shape

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def is_leaf(self) -> bool:
        return self._node is None

    def numpy(self) -> np.ndarray:
        return self._data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self._data.reshape(()))

    def detach(self) -> "Tensor":
        return Tensor._wrap(self._data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})\n{self._data!r}"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators --------------------------------------------------------

    def __add__(self, other):
        if np.isscalar(other):
            return add(self, constant_like(self, float(other)))
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if np.isscalar(other):
            return add(self, constant_like(self, -float(other)))
        return sub(self, other)

    def __rsub__(self, other):
        return add(scale(self, -1.0), constant_like(self, float(other)))

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            if other == 0:
                raise DomainError("division by zero")
            return scale(self, 1.0 / float(other))
        return div(self, other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def exp(self) -> "Tensor":
        return Exp.apply(self)

    def log(self) -> "Tensor":
        return Log.apply(self)

    def sqrt(self) -> "Tensor":
        return Sqrt.apply(self)

    def abs(self) -> "Tensor":
        return Abs.apply(self)

    def relu(self) -> "Tensor":
        return Relu.apply(self)

    def clamp_min(self, lo: float) -> "Tensor":
        return ClampMin.apply(self, lo=float(lo))

    def sum(self, axes=None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axes, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=shape)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        return Transpose.apply(self, axes=axes)

    @property
    def T(self) -> "Tensor":
        if self.ndim != 2:
            raise DimensionError(f".T needs a 2-d tensor, got shape {self.shape}")
        return self.transpose(1, 0)


def as_tensor(x: ArrayLike) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant_like(t: Tensor, value: float) -> Tensor:
    return Tensor._wrap(np.full(t.shape, value))


# -- functions ---------------------------------------------------------------


class Function:
    """A differentiable operation.

    ``forward`` receives the input arrays and returns the output array.
    ``backward`` receives dL/d(output) and returns one array (or None) per
    input. Only inputs with ``requires_grad`` need a gradient.
    """

    def __init__(self, *inputs: Tensor):
        self.inputs = inputs

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple:
        raise NotImplementedError

    def needs_grad(self, i: int) -> bool:
        return self.inputs[i].requires_grad

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs) -> Tensor:
        inputs = tuple(as_tensor(t) for t in inputs)
        fn = cls(*inputs)
        with np.errstate(over="ignore", invalid="ignore"):
            out = fn.forward(*(t._data for t in inputs), **kwargs)
        if not np.all(np.isfinite(out)) and all(np.all(np.isfinite(t._data)) for t in inputs):
            raise DomainError(f"{cls.__name__} produced non-finite values from finite inputs")
        result = Tensor._wrap(out)
        if any(t.requires_grad for t in inputs):
            result.requires_grad = True
            result._node = Node(fn)
        return result


def _check_same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: operand shapes differ: {a.shape} vs {b.shape}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


class Add(Function):
    def forward(self, a, b):
        return a + b

    def backward(self, grad):
        return grad, grad


class Sub(Function):
    def forward(self, a, b):
        return a - b

    def backward(self, grad):
        return grad, -grad


class Mul(Function):
    def forward(self, a, b):
        return a * b

    def backward(self, grad):
        a, b = self.inputs
        return grad * b._data, grad * a._data


class Div(Function):
    def forward(self, a, b):
        if np.any(b == 0):
            raise DomainError("division by zero")
        return a / b

    def backward(self, grad):
        a, b = self.inputs
        gb = None
        if self.needs_grad(1):
            gb = -grad * a._data / (b._data * b._data)
        return grad / b._data, gb


class Exp(Function):
    def forward(self, x):
        self.out = np.exp(x)
        return self.out

    def backward(self, grad):
        return (grad * self.out,)


class Log(Function):
    def forward(self, x):
        if np.any(x <= 0):
            raise DomainError("log of a non-positive value")
        return np.log(x)

    def backward(self, grad):
        return (grad / self.inputs[0]._data,)


class Scale(Function):
    def forward(self, x, factor: float):
        self.factor = factor
        return x * factor

    def backward(self, grad):
        return (grad * self.factor,)


class Sqrt(Function):
    def forward(self, x):
        if np.any(x < 0):
            raise DomainError("sqrt of a negative value")
        self.out = np.sqrt(x)
        return self.out

    def backward(self, grad):
        # subgradient 0 at the origin
        safe = np.where(self.out > 0, self.out, 1.0)
        return (np.where(self.out > 0, grad / (2.0 * safe), 0.0),)


class Abs(Function):
    def forward(self, x):
        return np.abs(x)

    def backward(self, grad):
        return (grad * np.sign(self.inputs[0]._data),)


class Relu(Function):
    def forward(self, x):
        return np.maximum(x, 0.0)

    def backward(self, grad):
        return (grad * (self.inputs[0]._data > 0),)


class ClampMin(Function):
    def forward(self, x, lo: float):
        self.lo = lo
        return np.maximum(x, lo)

    def backward(self, grad):
        return (grad * (self.inputs[0]._data > self.lo),)


class Sum(Function):
    def forward(self, x, axes, keepdims):
        self.axes = axes
        return x.sum(axis=axes, keepdims=keepdims)

    def backward(self, grad):
        shape = self.inputs[0].shape
        kept = list(shape)
        for ax in (self.axes if self.axes is not None else range(len(shape))):
            kept[ax] = 1
        return (np.broadcast_to(np.reshape(grad, kept), shape).copy(),)


class MatMul(Function):
    def forward(self, a, b):
        return np.matmul(a, b)

    def backward(self, grad):
        a, b = self.inputs
        ga = gb = None
        if self.needs_grad(0):
            ga = _unbroadcast(np.matmul(grad, np.swapaxes(b._data, -1, -2)), a.shape)
        if self.needs_grad(1):
            gb = _unbroadcast(np.matmul(np.swapaxes(a._data, -1, -2), grad), b.shape)
        return ga, gb


class Reshape(Function):
    def forward(self, x, shape):
        try:
            return x.reshape(shape)
        except ValueError as exc:
            raise DimensionError(f"cannot reshape {x.shape} to {tuple(shape)}") from exc

    def backward(self, grad):
        return (grad.reshape(self.inputs[0].shape),)


class Transpose(Function):
    def forward(self, x, axes):
        if sorted(axes) != list(range(x.ndim)):
            raise DimensionError(f"axes {tuple(axes)} are not a permutation for shape {x.shape}")
        self.axes = tuple(axes)
        return np.transpose(x, self.axes)

    def backward(self, grad):
        return (np.transpose(grad, np.argsort(self.axes)),)


# -- functional surface ------------------------------------------------------


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("add", a, b)
    return Add.apply(a, b)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("sub", a, b)
    return Sub.apply(a, b)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("mul", a, b)
    return Mul.apply(a, b)


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_same_shape("div", a, b)
    return Div.apply(a, b)


def scale(x: ArrayLike, factor: float) -> Tensor:
    return Scale.apply(as_tensor(x), factor=float(factor))


def exp(x: ArrayLike) -> Tensor:
    return Exp.apply(as_tensor(x))


def log(x: ArrayLike) -> Tensor:
    return Log.apply(as_tensor(x))


_ELEMENTWISE = {"add": add, "sub": sub, "mul": mul, "div": div, "exp": exp, "log": log}


def map_elementwise(kind: str, *operands: ArrayLike, factor: Optional[float] = None) -> Tensor:
    """Dispatch an elementwise operation by name.

    ``kind`` is one of add, sub, mul, div (two operands), exp, log (one
    operand) or scale (one operand plus ``factor``).
    """
    if kind == "scale":
        if len(operands) != 1 or factor is None:
            raise ContractError("scale takes one operand and a factor")
        return scale(operands[0], factor)
    try:
        op = _ELEMENTWISE[kind]
    except KeyError:
        raise ContractError(f"unknown elementwise kind {kind!r}") from None
    arity = 2 if kind in ("add", "sub", "mul", "div") else 1
    if len(operands) != arity:
        raise ContractError(f"{kind} takes {arity} operand(s), got {len(operands)}")
    return op(*operands)


def _normalize_axes(axes, ndim: int) -> Optional[tuple]:
    if axes is None:
        return None
    if isinstance(axes, (int, np.integer)):
        axes = (int(axes),)
    out = []
    for ax in axes:
        if not -ndim <= ax < ndim:
            raise DimensionError(f"axis {ax} is out of range for a {ndim}-d tensor")
        out.append(ax % ndim)
    if len(set(out)) != len(out):
        raise DimensionError(f"repeated axis in {tuple(axes)}")
    return tuple(sorted(out))


def reduce_sum(x: ArrayLike, axes=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    return Sum.apply(x, axes=_normalize_axes(axes, x.ndim), keepdims=keepdims)


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast as in numpy."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents disagree: {a.shape} @ {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError(f"matmul batch extents disagree: {a.shape} @ {b.shape}") from None
    return MatMul.apply(a, b)


# -- tape --------------------------------------------------------------------


@dataclass
class Tape:
    """Nodes reachable from a root, in recording order.

    ``visited`` lists node indices in the order :meth:`replay` processed them.
    """

    entries: list = field(default_factory=list)
    visited: list = field(default_factory=list)

    @property
    def nodes(self) -> list:
        return [node for node, _ in self.entries]

    @classmethod
    def from_root(cls, root: Tensor) -> "Tape":
        seen = set()
        entries = []
        stack = [root]
        while stack:
            t = stack.pop()
            node = t._node
            if node is None or node.index in seen:
                continue
            seen.add(node.index)
            entries.append((node, t))
            stack.extend(node.fn.inputs)
        entries.sort(key=lambda e: e[0].index)
        return cls(entries)

    def replay(self, root: Tensor) -> None:
        if any(node.consumed for node in self.nodes):
            raise ContractError("backward already ran through this graph; run the forward pass again")
        grads = {}
        leaf_grads = {}
        seed = np.ones(root.shape)
        if root._node is None:
            leaf_grads[id(root)] = (root, seed)
        else:
            grads[root._node.index] = seed
        for node, _ in reversed(self.entries):
            self.visited.append(node.index)
            node.consumed = True
            g = grads.pop(node.index, None)
            if g is None:
                continue
            for inp, gi in zip(node.fn.inputs, node.fn.backward(g)):
                if gi is None or not inp.requires_grad:
                    continue
                if inp._node is not None:
                    key = inp._node.index
                    grads[key] = grads[key] + gi if key in grads else gi
                else:
                    prev = leaf_grads.get(id(inp))
                    leaf_grads[id(inp)] = (inp, gi if prev is None else prev[1] + gi)
        for leaf, g in leaf_grads.values():
            g = np.asarray(g, dtype=np.float64).reshape(leaf.shape)
            leaf.grad = g if leaf.grad is None else leaf.grad + g


def backward(root: Tensor) -> Tape:
    """Populate ``grad`` on every requires_grad leaf reachable from a scalar root."""
    if not isinstance(root, Tensor):
        raise ContractError("backward needs a Tensor root")
    if root.size != 1:
        raise ContractError(f"backward needs a scalar root, got shape {root.shape}")
    if not root.requires_grad:
        raise ContractError("root does not depend on any tensor that requires grad")
    tape = Tape.from_root(root)
    tape.replay(root)
    return tape


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: ArrayLike,
    h: float = 1e-4,
    coords: Optional[Iterable[int]] = None,
) -> float:
    """Largest relative gap between the taped gradient and central differences.

    The per-coordinate error is ``|a - c| / (|a| + |c| + 1e-12)``. ``coords``
    restricts the comparison to some flat indices of ``x``.
    """
    if h <= 0:
        raise ContractError(f"step must be positive, got {h}")
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    leaf = Tensor(x0, requires_grad=True)
    backward(f(leaf))
    analytic = leaf.grad.ravel()

    def evaluate(flat: np.ndarray, i: int) -> float:
        value = f(Tensor(flat.reshape(x0.shape))).item()
        if not np.isfinite(value):
            raise DomainError(f"function value is not finite at coordinate {i}")
        return value

    flat = x0.ravel()
    worst = 0.0
    for i in range(flat.size) if coords is None else coords:
        xp = flat.copy()
        xp[i] += h
        xm = flat.copy()
        xm[i] -= h
        central = (evaluate(xp, i) - evaluate(xm, i)) / (2.0 * h)
        a = analytic[i]
        worst = max(worst, abs(a - central) / (abs(a) + abs(central) + 1e-12))
    return worst
