"""Reverse-mode automatic differentiation over dense float64 arrays.

A ``Tape`` records every primitive applied to tensors it watches. ``backward``
walks the tape once in reverse from a scalar output and returns the gradient of
that output with respect to every recorded node. The tape is append-only, so
several backward passes from different scalar outputs of the same forward
computation are independent of each other.

Tensors that are not attached to a tape are plain constants: primitives still
compute their values but record nothing.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

logger = logging.getLogger(__name__)

VJP = Callable[[np.ndarray], Tuple[Optional[np.ndarray], ...]]


class ShapeError(ValueError):
    """Operand shapes are incompatible with a primitive."""


class TapeError(RuntimeError):
    """Tensors from different tapes were combined, or a tape was misused."""


class NonFiniteError(ValueError):
    """A value that must be finite was not."""


@dataclass(frozen=True)
class Node:
    """One recorded primitive. ``inputs`` holds node indices, -1 for constants."""
    index: int
    op: str
    inputs: Tuple[int, ...]
    vjp: Optional[VJP]


class Tensor:
    """Immutable float64 array, optionally attached to a tape."""

    __slots__ = ("_data", "_tape", "_node")
    __array_priority__ = 1000

    def __init__(self, data, *, _tape: Optional["Tape"] = None, _node: int = -1):
        if isinstance(data, Tensor):
            data = data._data
        arr = np.array(data, dtype=np.float64)
        arr.setflags(write=False)
        self._data = arr
        self._tape = _tape
        self._node = _node

    @classmethod
    def _wrap(cls, arr: np.ndarray, tape: Optional["Tape"] = None, node: int = -1) -> "Tensor":
        obj = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.float64)
        if arr.flags.writeable:
            arr.setflags(write=False)
        obj._data = arr
        obj._tape = tape
        obj._node = node
        return obj

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self._data.shape)

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return int(self._data.size)

    @property
    def tape(self) -> Optional["Tape"]:
        return self._tape

    @property
    def node(self) -> int:
        return self._node

    @property
    def tracked(self) -> bool:
        return self._tape is not None

    def numpy(self) -> np.ndarray:
        return np.array(self._data)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self._data.reshape(()))

    def __repr__(self) -> str:
        where = f", node={self._node}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{where})"

    def __len__(self) -> int:
        return self.shape[0]

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(self, other)

    def __rmul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return mul(other, self)

    def __truediv__(self, other):
        if not isinstance(other, (int, float)):
            raise TypeError("Tensors only support division by a Python scalar")
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return getitem(self, key)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Gradients:
    """Gradient map produced by one backward pass."""

    def __init__(self, tape: "Tape", grads: Dict[int, np.ndarray]):
        self._tape = tape
        self._grads = grads

    def __contains__(self, tensor: Tensor) -> bool:
        return tensor._tape is self._tape and tensor._node in self._grads

    def array(self, tensor: Tensor) -> np.ndarray:
        """Gradient as a numpy array; zeros when the output does not depend on ``tensor``."""
        if tensor._tape is not self._tape:
            raise TapeError("Tensor is not recorded on the tape this gradient map belongs to")
        grad = self._grads.get(tensor._node)
        if grad is None:
            return np.zeros(tensor.shape)
        return np.array(grad)

    def __getitem__(self, tensor: Tensor) -> Tensor:
        return Tensor._wrap(self.array(tensor))

    def nodes(self) -> List[int]:
        return sorted(self._grads)


class Tape:
    """Append-only record of primitive operations."""

    def __init__(self):
        self._nodes: List[Node] = []
        self._shapes: List[Tuple[int, ...]] = []

    def __len__(self) -> int:
        return len(self._nodes)

    @property
    def nodes(self) -> Tuple[Node, ...]:
        return tuple(self._nodes)

    def watch(self, value) -> Tensor:
        """Record ``value`` as a leaf whose gradient will be reported."""
        arr = value._data if isinstance(value, Tensor) else value
        arr = np.array(arr, dtype=np.float64)
        return self._append("leaf", (), arr, None)

    def record(self, op: str, inputs: Sequence[Tensor], value: np.ndarray, vjp: VJP) -> Tensor:
        indices = []
        for tensor in inputs:
            if tensor._tape is None:
                indices.append(-1)
            elif tensor._tape is self:
                indices.append(tensor._node)
            else:
                raise TapeError(f"{op}: operand belongs to another tape")
        return self._append(op, tuple(indices), value, vjp)

    def _append(self, op: str, inputs: Tuple[int, ...], value: np.ndarray, vjp: Optional[VJP]) -> Tensor:
        index = len(self._nodes)
        self._nodes.append(Node(index=index, op=op, inputs=inputs, vjp=vjp))
        self._shapes.append(tuple(np.shape(value)))
        return Tensor._wrap(value, tape=self, node=index)

    def backward(self, output: Tensor) -> Gradients:
        """Gradients of the scalar ``output`` with respect to every recorded node."""
        if output._tape is not self:
            raise TapeError("backward output is not recorded on this tape")
        if output.size != 1:
            raise ShapeError(f"backward needs a scalar output, got shape {output.shape}")

        grads: Dict[int, np.ndarray] = {output._node: np.ones(output.shape)}
        for index in range(output._node, -1, -1):
            grad = grads.get(index)
            if grad is None:
                continue
            node = self._nodes[index]
            if node.vjp is None:
                continue
            for source, input_grad in zip(node.inputs, node.vjp(grad)):
                if source < 0 or input_grad is None:
                    continue
                if source in grads:
                    grads[source] = grads[source] + input_grad
                else:
                    grads[source] = input_grad
        return Gradients(self, grads)


def backward(tape: Tape, output: Tensor) -> Gradients:
    return tape.backward(output)


# --------------------------------------------------------------------------
# recording helpers
# --------------------------------------------------------------------------

Operand = Union[Tensor, np.ndarray, float, int, Sequence[float]]


def as_tensor(value: Operand) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _tape_of(op: str, tensors: Sequence[Tensor]) -> Optional[Tape]:
    tape = None
    for tensor in tensors:
        if tensor._tape is None:
            continue
        if tape is None:
            tape = tensor._tape
        elif tensor._tape is not tape:
            raise TapeError(f"{op}: operands belong to different tapes")
    return tape


def _emit(op: str, inputs: Sequence[Tensor], value: np.ndarray, vjp: VJP) -> Tensor:
    tape = _tape_of(op, inputs)
    if tape is None:
        return Tensor._wrap(value)
    return tape.record(op, inputs, value, vjp)


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> Tuple[int, ...]:
    try:
        return tuple(np.broadcast_shapes(a.shape, b.shape))
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} are not compatible") from None


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def stable_softmax(values: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Softmax along the last axis of a plain array (z/τ, then max subtraction)."""
    scaled = np.asarray(values, dtype=np.float64) / temperature
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def stable_log_softmax(values: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    scaled = np.asarray(values, dtype=np.float64) / temperature
    shifted = scaled - scaled.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


# --------------------------------------------------------------------------
# primitives
# --------------------------------------------------------------------------

def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    value = a._data + b._data
    return _emit("add", (a, b), value,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("sub", a, b)
    value = a._data - b._data
    return _emit("sub", (a, b), value,
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    value = a._data * b._data
    return _emit("mul", (a, b), value,
                 lambda g: (_unbroadcast(g * b._data, a.shape), _unbroadcast(g * a._data, b.shape)))


def scale(x: Operand, factor: float) -> Tensor:
    x = as_tensor(x)
    factor = float(factor)
    return _emit("scale", (x,), x._data * factor, lambda g: (g * factor,))


def matmul(a: Operand, b: Operand) -> Tensor:
    """``a`` of shape (..., n) times ``b`` of shape (n, m)."""
    a, b = as_tensor(a), as_tensor(b)
    if b.ndim != 2 or a.ndim < 1:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}: right operand must be a matrix "
                         f"and left operand at least a vector")
    if a.shape[-1] != b.shape[0]:
        raise ShapeError(f"matmul: {a.shape} @ {b.shape}: inner dimensions "
                         f"{a.shape[-1]} and {b.shape[0]} differ")
    value = a._data @ b._data

    def vjp(g):
        grad_a = g @ b._data.T
        flat_a = a._data.reshape(-1, a.shape[-1])
        flat_g = g.reshape(-1, b.shape[1])
        return grad_a, flat_a.T @ flat_g

    return _emit("matmul", (a, b), value, vjp)


def relu(x: Operand) -> Tensor:
    x = as_tensor(x)
    mask = x._data > 0
    return _emit("relu", (x,), np.where(mask, x._data, 0.0), lambda g: (g * mask,))


def softmax(x: Operand, temperature: float = 1.0) -> Tensor:
    """softmax(x/τ) along the last axis."""
    x = as_tensor(x)
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    y = stable_softmax(x._data, temperature)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)) / temperature,)

    return _emit("softmax", (x,), y, vjp)


def log_softmax(x: Operand, temperature: float = 1.0) -> Tensor:
    """log softmax(x/τ) along the last axis."""
    x = as_tensor(x)
    if temperature <= 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    y = stable_log_softmax(x._data, temperature)
    probs = np.exp(y)

    def vjp(g):
        return ((g - probs * g.sum(axis=-1, keepdims=True)) / temperature,)

    return _emit("log_softmax", (x,), y, vjp)


def sum_(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    value = x._data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return _emit("sum", (x,), value, vjp)


def mean(x: Operand, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    value = x._data.mean(axis=axis, keepdims=keepdims)
    if axis is None:
        count = x.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.shape[ax] for ax in axes]))

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) / count,)

    return _emit("mean", (x,), value, vjp)


def l2_norm(x: Operand) -> Tensor:
    """Euclidean norm of all entries."""
    x = as_tensor(x)
    norm = float(np.sqrt((x._data ** 2).sum()))

    def vjp(g):
        if norm == 0.0:
            return (np.zeros(x.shape),)
        return (g * x._data / norm,)

    return _emit("l2_norm", (x,), np.array(norm), vjp)


def dot(a: Operand, b: Operand) -> Tensor:
    """Inner product along the last axis."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim == 0 or b.ndim == 0 or a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"dot: last dimensions of {a.shape} and {b.shape} differ")
    _broadcast_shape("dot", a, b)
    value = (a._data * b._data).sum(axis=-1)

    def vjp(g):
        g = np.expand_dims(g, -1)
        return _unbroadcast(g * b._data, a.shape), _unbroadcast(g * a._data, b.shape)

    return _emit("dot", (a, b), value, vjp)


def _check_index(op: str, x: Tensor, index: np.ndarray) -> np.ndarray:
    index = np.asarray(index)
    if not np.issubdtype(index.dtype, np.integer):
        raise ShapeError(f"{op}: index must be integer, got {index.dtype}")
    if x.ndim == 0 or index.shape != x.shape[:-1]:
        raise ShapeError(f"{op}: index shape {index.shape} does not match leading dimensions of {x.shape}")
    if index.size and (index.min() < 0 or index.max() >= x.shape[-1]):
        raise ShapeError(f"{op}: index out of range for last dimension {x.shape[-1]}")
    return index[..., None]


def select(x: Operand, index) -> Tensor:
    """Pick one entry of the last axis per row: ``out[...] = x[..., index[...]]``."""
    x = as_tensor(x)
    idx = _check_index("select", x, index)
    value = np.take_along_axis(x._data, idx, axis=-1)[..., 0]

    def vjp(g):
        grad = np.zeros(x.shape)
        np.put_along_axis(grad, idx, g[..., None], axis=-1)
        return (grad,)

    return _emit("select", (x,), value, vjp)


def scatter(x: Operand, index, values: Operand) -> Tensor:
    """Replace one entry of the last axis per row: ``out[..., index[...]] = values[...]``."""
    x, values = as_tensor(x), as_tensor(values)
    idx = _check_index("scatter", x, index)
    if values.shape != x.shape[:-1]:
        raise ShapeError(f"scatter: values shape {values.shape} does not match leading dimensions of {x.shape}")
    out = np.array(x._data)
    np.put_along_axis(out, idx, values._data[..., None], axis=-1)

    def vjp(g):
        grad_x = np.array(g)
        np.put_along_axis(grad_x, idx, 0.0, axis=-1)
        return grad_x, np.take_along_axis(g, idx, axis=-1)[..., 0]

    return _emit("scatter", (x, values), out, vjp)


def minimum(a: Operand, b: Operand) -> Tensor:
    """Elementwise min; on ties the subgradient is split evenly."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise ShapeError(f"minimum: shapes {a.shape} and {b.shape} differ")
    left = np.where(a._data < b._data, 1.0, np.where(a._data == b._data, 0.5, 0.0))
    value = np.minimum(a._data, b._data)
    return _emit("minimum", (a, b), value, lambda g: (g * left, g * (1.0 - left)))


def min_equalize(a: Operand, b: Operand) -> Tuple[Tensor, Tensor]:
    """Both operands replaced by their minimum."""
    m = minimum(a, b)
    return m, m


def stop_gradient(x: Operand) -> Tensor:
    """Same value; no gradient flows back through this node."""
    x = as_tensor(x)
    return _emit("stop_gradient", (x,), x._data, lambda g: (None,))


def spike(x: Operand, width: float = 1.0) -> Tensor:
    """Heaviside step at 0 (0 fires) with a rectangular surrogate derivative."""
    x = as_tensor(x)
    if width <= 0:
        raise ValueError(f"surrogate width must be positive, got {width}")
    window = (np.abs(x._data) < width / 2.0) / width
    value = (x._data >= 0.0).astype(np.float64)
    return _emit("spike", (x,), value, lambda g: (g * window,))


def stack(tensors: Sequence[Operand], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ShapeError("stack: nothing to stack")
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: operand shapes differ: {sorted(shapes)}")
    value = np.stack([t._data for t in tensors], axis=axis)

    def vjp(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _emit("stack", tensors, value, vjp)


def reshape(x: Operand, shape: Tuple[int, ...]) -> Tensor:
    x = as_tensor(x)
    try:
        value = x._data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None
    return _emit("reshape", (x,), value, lambda g: (g.reshape(x.shape),))


def getitem(x: Operand, key) -> Tensor:
    x = as_tensor(x)
    try:
        value = x._data[key]
    except IndexError as e:
        raise ShapeError(f"getitem: {e} for shape {x.shape}") from None

    def vjp(g):
        grad = np.zeros(x.shape)
        np.add.at(grad, key, g)
        return (grad,)

    return _emit("getitem", (x,), np.array(value), vjp)


PRIMITIVES: Dict[str, Callable[..., Tensor]] = {
    "add": add,
    "sub": sub,
    "mul": mul,
    "scale": scale,
    "matmul": matmul,
    "relu": relu,
    "softmax": softmax,
    "log_softmax": log_softmax,
    "sum": sum_,
    "mean": mean,
    "l2_norm": l2_norm,
    "dot": dot,
    "select": select,
    "scatter": scatter,
    "minimum": minimum,
    "stop_gradient": stop_gradient,
    "spike": spike,
    "stack": stack,
    "reshape": reshape,
    "getitem": getitem,
}


def forward_primitive(kind: str, *inputs, **params) -> Tensor:
    """Apply the primitive named ``kind``."""
    try:
        fn = PRIMITIVES[kind]
    except KeyError:
        raise ValueError(f"Unknown primitive '{kind}'. Available: {sorted(PRIMITIVES)}") from None
    return fn(*inputs, **params)


def grad_check(f: Callable[[Tensor], Tensor], x, step: float = 1e-5) -> float:
    """Largest relative error between autodiff and central differences.

    The denominator per coordinate is max(|analytic|, |numeric|, 1e-12).
    """
    x = np.array(x._data if isinstance(x, Tensor) else x, dtype=np.float64)
    base = f(Tensor(x)).item()
    if not np.isfinite(base):
        raise NonFiniteError(f"grad_check: f(x) is not finite ({base})")

    tape = Tape()
    leaf = tape.watch(x)
    analytic = tape.backward(f(leaf)).array(leaf)

    numeric = np.zeros_like(x)
    flat = numeric.reshape(-1)
    for i in range(x.size):
        shifted = x.copy().reshape(-1)
        shifted[i] += step
        plus = f(Tensor(shifted.reshape(x.shape))).item()
        shifted[i] -= 2 * step
        minus = f(Tensor(shifted.reshape(x.shape))).item()
        flat[i] = (plus - minus) / (2 * step)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-12)
    error = float(np.max(np.abs(analytic - numeric) / denom)) if x.size else 0.0
    logger.debug(f"grad_check over {x.size} coordinates: max relative error {error:.3e}")
    return error
