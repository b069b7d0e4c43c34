"""Dense tensors with tape-based reverse-mode differentiation.

Values live in row-major numpy buffers. Every public operation returns a new
``Tensor``; when a :class:`Tape` is active and an input requires gradients the
operation is appended to the tape together with a closure that maps the output
gradient to input gradients. :func:`backward` replays the tape in reverse.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

DTYPES = {"float32": np.float32, "float64": np.float64}


class ShapeError(ValueError):
    """Operand shapes do not conform for an operation."""


class NumericError(ArithmeticError):
    """A NaN or Inf appeared in a tensor or gradient."""


class Node:
    __slots__ = ("op", "inputs", "output", "grad_fn")

    def __init__(self, op: str, inputs: tuple, output: "Tensor", grad_fn: Callable):
        self.op = op
        self.inputs = inputs
        self.output = output
        self.grad_fn = grad_fn

    def __repr__(self):
        shapes = ", ".join(str(t.shape) for t in self.inputs)
        return f"Node({self.op}: ({shapes}) -> {self.output.shape})"


class Tape:
    """Ordered record of executed primitives.

    Execution order is a topological order of the computation graph, so the
    reversed list is a valid order for gradient propagation.
    """

    def __init__(self):
        self.nodes: list[Node] = []

    def record(self, op, inputs, output, grad_fn):
        self.nodes.append(Node(op, inputs, output, grad_fn))

    def __len__(self):
        return len(self.nodes)


_state = threading.local()


def _tape_stack() -> list:
    stack = getattr(_state, "stack", None)
    if stack is None:
        stack = _state.stack = []
    return stack


@contextlib.contextmanager
def trace():
    """Record operations on a fresh tape for the duration of the block."""
    tape = Tape()
    stack = _tape_stack()
    stack.append(tape)
    try:
        yield tape
    finally:
        stack.pop()


@contextlib.contextmanager
def no_trace():
    """Suspend recording (e.g. inside finite-difference probes)."""
    stack = _tape_stack()
    saved = list(stack)
    stack.clear()
    try:
        yield
    finally:
        stack.extend(saved)


def active_tape() -> Tape | None:
    stack = _tape_stack()
    return stack[-1] if stack else None


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        raise NumericError(f"{op}: produced non-finite values (shape {arr.shape})")


class Tensor:
    """Immutable n-dimensional float32/float64 array with optional gradient tracking."""

    __slots__ = ("data", "requires_grad", "_tape", "__weakref__")

    def __init__(self, data, dtype=None, requires_grad: bool = False):
        if dtype is None:
            if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
                dtype = data.dtype
            elif isinstance(data, Tensor):
                dtype = data.dtype
            else:
                dtype = np.float32
        if isinstance(dtype, str):
            dtype = DTYPES[dtype]
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype, copy=True)
        _check_finite("Tensor", arr)
        arr.flags.writeable = False
        self.data = arr
        self.requires_grad = requires_grad
        self._tape = None

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        t = cls.__new__(cls)
        if not isinstance(arr, np.ndarray):
            arr = np.array(arr)
        elif not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        arr.flags.writeable = False
        t.data = arr
        t.requires_grad = False
        t._tape = None
        return t

    # -- metadata ---------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self):
        flag = ", requires_grad" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}{flag})"

    # -- operators ----------------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_const(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def permute(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return permute(self, axes)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def primitive(op: str, out: np.ndarray, inputs: Sequence[Tensor], grad_fn: Callable) -> Tensor:
    """Wrap ``out`` as a Tensor and record it on the active tape.

    ``grad_fn(g)`` receives the gradient w.r.t. ``out`` and returns one gradient
    (or ``None``) per input, each shaped like that input.
    """
    _check_finite(op, out)
    t = Tensor._wrap(out)
    if any(x.requires_grad for x in inputs):
        tape = active_tape()
        if tape is not None:
            t.requires_grad = True
            t._tape = tape
            tape.record(op, tuple(inputs), t, grad_fn)
    return t


def _const(x, like: Tensor) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor._wrap(np.asarray(x, dtype=like.dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = _const(a, b)
    if not isinstance(b, Tensor):
        b = _const(b, a)
    if a.dtype != b.dtype:
        raise TypeError(f"dtype mismatch: {a.dtype.name} vs {b.dtype.name}")
    return a, b


def unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` over the axes that broadcasting expanded from ``shape``."""
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(op, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    return primitive("add", a.data + b.data, (a, b),
                     lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    return primitive("sub", a.data - b.data, (a, b),
                     lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("mul", a, b)
    return primitive("mul", a.data * b.data, (a, b),
                     lambda g: (unbroadcast(g * b.data, a.shape), unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("div", a, b)
    out = a.data / b.data

    def grad_fn(g):
        ga = g / b.data
        return unbroadcast(ga, a.shape), unbroadcast(-ga * out, b.shape)

    return primitive("div", out, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    return primitive("neg", -a.data, (a,), lambda g: (-g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return primitive("exp", out, (a,), lambda g: (g * out,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return primitive("tanh", out, (a,), lambda g: (g * (1.0 - out * out),))


def square(a: Tensor) -> Tensor:
    return primitive("square", a.data * a.data, (a,), lambda g: (2.0 * g * a.data,))


# -- linear algebra -------------------------------------------------------------

def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes, batch axes broadcast."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch axes of {a.shape} and {b.shape} do not broadcast") from None
    out = np.matmul(a.data, b.data)

    def grad_fn(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    return primitive("matmul", out, (a, b), grad_fn)


# -- shape manipulation ---------------------------------------------------------

def reshape(a: Tensor, shape) -> Tensor:
    shape = tuple(int(s) for s in shape)
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {a.shape} to {shape}") from None
    return primitive("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def permute(a: Tensor, axes) -> Tensor:
    axes = tuple(int(x) for x in axes)
    if sorted(axes) != list(range(a.ndim)):
        raise ShapeError(f"permute: axes {axes} invalid for shape {a.shape}")
    inverse = tuple(np.argsort(axes))
    return primitive("permute", np.transpose(a.data, axes), (a,),
                     lambda g: (np.transpose(g, inverse),))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise ShapeError("concat: no inputs")
    ref = tensors[0]
    axis = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(
            t.shape[i] != ref.shape[i] for i in range(ref.ndim) if i != axis
        ):
            raise ShapeError(f"concat(axis={axis}): shapes {ref.shape} and {t.shape} do not conform")
        if t.dtype != ref.dtype:
            raise TypeError(f"concat: dtype mismatch {ref.dtype.name} vs {t.dtype.name}")
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def grad_fn(g):
        return tuple(np.split(g, bounds, axis=axis))

    return primitive("concat", np.concatenate([t.data for t in tensors], axis=axis),
                     tensors, grad_fn)


def getitem(a: Tensor, index) -> Tensor:
    """Basic (slice/int) indexing."""
    out = a.data[index]

    def grad_fn(g):
        full = np.zeros(a.shape, dtype=g.dtype)
        full[index] = g
        return (full,)

    return primitive("slice", np.array(out), (a,), grad_fn)


def slice_axis(a: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = axis % a.ndim
    if not 0 <= start <= stop <= a.shape[axis]:
        raise ShapeError(f"slice: range [{start}, {stop}) out of bounds for axis {axis} of {a.shape}")
    index = (slice(None),) * axis + (slice(start, stop),)
    return getitem(a, index)


def split(a: Tensor, sections, axis: int = 0) -> list[Tensor]:
    """Split into ``sections`` equal parts (int) or parts of the given sizes (list)."""
    axis = axis % a.ndim
    n = a.shape[axis]
    if isinstance(sections, int):
        if sections <= 0 or n % sections:
            raise ShapeError(f"split: axis {axis} of {a.shape} not divisible into {sections} parts")
        sizes = [n // sections] * sections
    else:
        sizes = list(sections)
        if sum(sizes) != n:
            raise ShapeError(f"split: sizes {sizes} do not sum to axis {axis} extent of {a.shape}")
    parts, start = [], 0
    for s in sizes:
        parts.append(slice_axis(a, axis, start, start + s))
        start += s
    return parts


def broadcast_to(a: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(a.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast: cannot broadcast {a.shape} to {shape}") from None
    return primitive("broadcast", np.array(out), (a,), lambda g: (unbroadcast(g, a.shape),))


# -- reductions -----------------------------------------------------------------

def _norm_axes(axis, ndim) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(x % ndim for x in axis))


def sum_(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, a.shape).copy(),)

    return primitive("sum", np.asarray(out), (a,), grad_fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    count = int(np.prod([a.shape[i] for i in axes])) if axes else 1
    if count == 0:
        raise ShapeError(f"mean: empty reduction over axes {axes} of {a.shape}")
    out = a.data.mean(axis=axes, keepdims=keepdims)

    def grad_fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, a.shape).copy(),)

    return primitive("mean", np.asarray(out), (a,), grad_fn)


# -- gradients ------------------------------------------------------------------

def backward(loss: Tensor, params: Mapping[str, Tensor]) -> dict[str, np.ndarray]:
    """Gradients of a scalar traced ``loss`` w.r.t. each tensor in ``params``.

    Parameters that did not participate receive exact zeros. The tape is
    consumed: its nodes are released afterwards, so the graph cannot be
    replayed twice.
    """
    if loss.size != 1 or loss.ndim != 0:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.dtype)}
    tape = loss._tape
    if tape is not None:
        for node in reversed(tape.nodes):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for inp, gi in zip(node.inputs, node.grad_fn(g)):
                if gi is None or not inp.requires_grad:
                    continue
                key = id(inp)
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
        # tensors point at the tape and nodes point back at tensors; release the cycle
        tape.nodes.clear()
    out = {}
    for name, p in params.items():
        g = grads.get(id(p))
        if g is None:
            g = np.zeros(p.shape, dtype=p.dtype)
        else:
            g = np.asarray(g, dtype=p.dtype).reshape(p.shape)
            if not np.isfinite(g).all():
                raise NumericError(f"backward: non-finite gradient for parameter {name!r}")
        out[name] = g
    return out


def stack_last(tensors: Iterable[Tensor]) -> Tensor:
    """Stack along a new trailing axis."""
    return concat([reshape(t, t.shape + (1,)) for t in tensors], axis=-1)
