"""Dense tensors with tape-based reverse-mode automatic differentiation.

A :class:`Tensor` wraps a numpy array. Operations are :class:`Function`
subclasses; while a :class:`Tape` is active, every operation that touches a
tensor with ``requires_grad`` is appended to the tape, which therefore holds
the graph in topological order. :func:`backward` walks it once in reverse.

Outside a tape nothing is recorded, so inference builds no graph at all.
"""

from __future__ import annotations

import contextvars
from collections.abc import Sequence
from dataclasses import dataclass
from types import EllipsisType, TracebackType
from typing import TYPE_CHECKING, Any, ClassVar

if TYPE_CHECKING:
    from typing import Self

import numpy as np
import numpy.typing as npt

from uses_se.exceptions import ContractError, DimensionError, NumericError

Array = npt.NDArray[Any]
Index = int | slice | EllipsisType | None | tuple[int | slice | EllipsisType | None, ...]

DTYPES: dict[str, type[np.floating[Any]]] = {"f32": np.float32, "f64": np.float64}

_ACTIVE_TAPE: contextvars.ContextVar[Tape | None] = contextvars.ContextVar(
    "uses_active_tape", default=None
)


def _as_float_array(data: Any, dtype: Any = None) -> Array:
    arr = np.asarray(data, dtype=dtype)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    return arr


class Tensor:
    """N-dimensional float array that can take part in gradient tapes.

    Args:
        data: Array-like payload. Integer input is promoted to float64.
        requires_grad: Whether gradients should be accumulated into ``grad``.
        name: Optional label used in diagnostics.
        dtype: Optional dtype override (``np.float32`` or ``np.float64``).
    """

    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(
        self,
        data: Any,
        requires_grad: bool = False,
        name: str | None = None,
        dtype: Any = None,
    ) -> None:
        self.data: Array = _as_float_array(data, dtype)
        self.requires_grad = requires_grad
        self.grad: Array | None = None
        self.name = name

    # -- introspection -------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def size(self) -> int:
        return int(self.data.size)

    @property
    def dtype(self) -> np.dtype[Any]:
        return self.data.dtype

    def item(self) -> float:
        if self.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> Array:
        return self.data

    def detach(self) -> Tensor:
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def check_finite(self, where: str = "tensor") -> None:
        """Raise NumericError if any stored value is NaN or infinite."""
        if not np.all(np.isfinite(self.data)):
            label = f" '{self.name}'" if self.name else ""
            raise NumericError(f"non-finite values in {where}{label}")

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    def __len__(self) -> int:
        return self.shape[0]

    # -- operators -----------------------------------------------------

    def __add__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, Tensor):
            return Add.apply(self, other)
        return AddScalar.apply(self, value=float(other))

    __radd__ = __add__

    def __sub__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, Tensor):
            return Sub.apply(self, other)
        return AddScalar.apply(self, value=-float(other))

    def __rsub__(self, other: float) -> Tensor:
        return AddScalar.apply(Neg.apply(self), value=float(other))

    def __mul__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, Tensor):
            return Mul.apply(self, other)
        return MulScalar.apply(self, value=float(other))

    __rmul__ = __mul__

    def __truediv__(self, other: Tensor | float) -> Tensor:
        if isinstance(other, Tensor):
            return Div.apply(self, other)
        return MulScalar.apply(self, value=1.0 / float(other))

    def __rtruediv__(self, other: float) -> Tensor:
        return MulScalar.apply(PowScalar.apply(self, exponent=-1.0), value=float(other))

    def __neg__(self) -> Tensor:
        return Neg.apply(self)

    def __pow__(self, exponent: float) -> Tensor:
        return PowScalar.apply(self, exponent=float(exponent))

    def __matmul__(self, other: Tensor) -> Tensor:
        return MatMul.apply(self, other)

    def __getitem__(self, index: Index) -> Tensor:
        return Slice.apply(self, index=index)

    # -- methods -------------------------------------------------------

    def sum(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        return Sum.apply(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: int | tuple[int, ...] | None = None, keepdims: bool = False) -> Tensor:
        axes = _normalize_axes(axis, self.ndim)
        count = int(np.prod([self.shape[a] for a in axes])) if axes else 1
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape: int) -> Tensor:
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return Reshape.apply(self, shape=tuple(shape))

    def transpose(self, *axes: int) -> Tensor:
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return Transpose.apply(self, axes=tuple(axes) if axes else None)

    def swapaxes(self, a: int, b: int) -> Tensor:
        perm = list(range(self.ndim))
        perm[a], perm[b] = perm[b], perm[a]
        return self.transpose(*perm)

    def broadcast_to(self, shape: Sequence[int]) -> Tensor:
        return BroadcastTo.apply(self, shape=tuple(shape))

    def exp(self) -> Tensor:
        return Exp.apply(self)

    def log(self) -> Tensor:
        return Log.apply(self)

    def sqrt(self) -> Tensor:
        return Sqrt.apply(self)

    def abs(self) -> Tensor:
        return Abs.apply(self)

    def relu(self) -> Tensor:
        return Relu.apply(self)


def tensor(data: Any, requires_grad: bool = False, dtype: str = "f64") -> Tensor:
    """Build a tensor from array-like data with a named dtype ('f32' or 'f64')."""
    return Tensor(data, requires_grad=requires_grad, dtype=DTYPES[dtype])


# -- tape ---------------------------------------------------------------


@dataclass(eq=False)
class Node:
    """One recorded operation on a tape."""

    fn: Function
    inputs: tuple[Tensor, ...]
    output: Tensor
    index: int


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; a tape is single-owner and may be consumed by
    exactly one :meth:`backward` call.

    Example:
        with Tape() as tape:
            loss = (x * x).sum()
        tape.backward(loss)
    """

    def __init__(self) -> None:
        self.nodes: list[Node] = []
        self._token: contextvars.Token[Tape | None] | None = None
        self._consumed = False

    def __enter__(self) -> Self:
        if _ACTIVE_TAPE.get() is not None:
            raise ContractError("a tape is already recording in this context")
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(
        self,
        exc_type: type[BaseException] | None,
        exc_val: BaseException | None,
        exc_tb: TracebackType | None,
    ) -> None:
        if self._token is not None:
            _ACTIVE_TAPE.reset(self._token)
            self._token = None

    def record(self, fn: Function, inputs: tuple[Tensor, ...], output: Tensor) -> None:
        self.nodes.append(Node(fn, inputs, output, len(self.nodes)))

    def backward(self, loss: Tensor) -> None:
        backward(self, loss)


def is_recording() -> bool:
    return _ACTIVE_TAPE.get() is not None


def backward(tape: Tape, loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``grad`` of every requires_grad leaf.

    Raises:
        ContractError: If the loss is not scalar, does not depend on the tape,
            or the tape was already consumed.
        NumericError: If the loss or any intermediate gradient is non-finite.
    """
    if tape._consumed:
        raise ContractError("tape was already used for a backward pass")
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ContractError("loss does not depend on any tensor requiring gradients")
    loss.check_finite("loss")

    produced = {id(node.output) for node in tape.nodes}
    leaves: dict[int, Tensor] = {}
    grads: dict[int, Array] = {id(loss): np.ones_like(loss.data)}
    if id(loss) not in produced:
        leaves[id(loss)] = loss

    for node in reversed(tape.nodes):
        upstream = grads.pop(id(node.output), None)
        if upstream is None:
            continue
        input_grads = node.fn.backward(upstream)
        for inp, g in zip(node.inputs, input_grads, strict=True):
            if g is None or not inp.requires_grad:
                continue
            if g.shape != inp.shape:
                raise DimensionError(
                    f"{node.fn.name} (node {node.index}) produced gradient of shape "
                    f"{g.shape} for input of shape {inp.shape}"
                )
            if not np.all(np.isfinite(g)):
                raise NumericError(
                    f"non-finite gradient from {node.fn.name} (node {node.index})"
                )
            key = id(inp)
            grads[key] = grads[key] + g if key in grads else g
            if key not in produced:
                leaves[key] = inp

    for key, leaf in leaves.items():
        g = grads.get(key)
        if g is None:
            continue
        g = g.astype(leaf.dtype, copy=False)
        leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g

    tape._consumed = True
    tape.nodes.clear()


# -- function base ---------------------------------------------------------


class Function:
    """Base class for differentiable operations.

    ``forward`` receives the input arrays and returns the output array;
    ``backward`` receives d(loss)/d(output) and returns one gradient (or None)
    per input. Anything needed by ``backward`` is stashed on ``self``.
    """

    name: ClassVar[str] = "function"

    def forward(self, *arrays: Array, **kwargs: Any) -> Array:
        raise NotImplementedError

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Tensor, **kwargs: Any) -> Tensor:
        dtypes = {t.dtype for t in inputs}
        if len(dtypes) > 1:
            raise DimensionError(f"{cls.name}: mixed dtypes {sorted(str(d) for d in dtypes)}")
        fn = cls()
        out_data = fn.forward(*(t.data for t in inputs), **kwargs)
        out = Tensor(np.asarray(out_data, dtype=inputs[0].dtype))
        tape = _ACTIVE_TAPE.get()
        if tape is not None and any(t.requires_grad for t in inputs):
            out.requires_grad = True
            tape.record(fn, inputs, out)
        return out


def _require_same_shape(name: str, a: Array, b: Array) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} differ (broadcast explicitly)")


def _normalize_axes(axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    out = []
    for a in axes:
        if not -ndim <= a < ndim:
            raise DimensionError(f"axis {a} out of range for {ndim}-d tensor")
        out.append(a % ndim)
    return tuple(out)


# -- elementwise ---------------------------------------------------------


class Add(Function):
    name = "add"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _require_same_shape(self.name, a, b)
        return a + b

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return grad, grad


class Sub(Function):
    name = "sub"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _require_same_shape(self.name, a, b)
        return a - b

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return grad, -grad


class Mul(Function):
    name = "mul"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _require_same_shape(self.name, a, b)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return grad * self.b, grad * self.a


class Div(Function):
    name = "div"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        _require_same_shape(self.name, a, b)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return grad / self.b, -grad * self.a / (self.b * self.b)


class AddScalar(Function):
    name = "add_scalar"

    def forward(self, a: Array, value: float) -> Array:  # type: ignore[override]
        return a + value

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad,)


class MulScalar(Function):
    name = "mul_scalar"

    def forward(self, a: Array, value: float) -> Array:  # type: ignore[override]
        self.value = value
        return a * value

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * self.value,)


class PowScalar(Function):
    name = "pow_scalar"

    def forward(self, a: Array, exponent: float) -> Array:  # type: ignore[override]
        self.a, self.exponent = a, exponent
        return np.power(a, exponent)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * self.exponent * np.power(self.a, self.exponent - 1.0),)


class Neg(Function):
    name = "neg"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        return -a

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (-grad,)


class Exp(Function):
    name = "exp"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.out = np.exp(a)
        return self.out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * self.out,)


class Log(Function):
    name = "log"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.a = a
        return np.log(a)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad / self.a,)


class Sqrt(Function):
    name = "sqrt"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.out = np.sqrt(a)
        return self.out

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * 0.5 / self.out,)


class Abs(Function):
    name = "abs"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.sign = np.sign(a)
        return np.abs(a)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad * self.sign,)


class Relu(Function):
    name = "relu"

    def forward(self, a: Array) -> Array:  # type: ignore[override]
        self.mask = a > 0
        return np.where(self.mask, a, 0.0)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (np.where(self.mask, grad, 0.0),)


# -- reductions and shape ops ---------------------------------------------


class Sum(Function):
    name = "sum"

    def forward(  # type: ignore[override]
        self, a: Array, axis: int | tuple[int, ...] | None, keepdims: bool
    ) -> Array:
        self.shape = a.shape
        self.axes = _normalize_axes(axis, a.ndim)
        self.keepdims = keepdims
        return np.sum(a, axis=self.axes, keepdims=keepdims)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        if not self.keepdims:
            grad = np.expand_dims(grad, self.axes)
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):
    name = "reshape"

    def forward(self, a: Array, shape: tuple[int, ...]) -> Array:  # type: ignore[override]
        self.shape = a.shape
        try:
            return a.reshape(shape)
        except ValueError as e:
            raise DimensionError(f"cannot reshape {a.shape} into {shape}") from e

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (grad.reshape(self.shape),)


class Transpose(Function):
    name = "transpose"

    def forward(self, a: Array, axes: tuple[int, ...] | None) -> Array:  # type: ignore[override]
        perm = tuple(reversed(range(a.ndim))) if axes is None else axes
        if sorted(p % a.ndim for p in perm) != list(range(a.ndim)):
            raise DimensionError(f"invalid permutation {perm} for {a.ndim}-d tensor")
        self.inverse = tuple(np.argsort([p % a.ndim for p in perm]))
        return np.ascontiguousarray(np.transpose(a, perm))

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (np.ascontiguousarray(np.transpose(grad, self.inverse)),)


class BroadcastTo(Function):
    name = "broadcast_to"

    def forward(self, a: Array, shape: tuple[int, ...]) -> Array:  # type: ignore[override]
        self.shape = a.shape
        try:
            return np.broadcast_to(a, shape).copy()
        except ValueError as e:
            raise DimensionError(f"cannot broadcast {a.shape} to {shape}") from e

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        lead = grad.ndim - len(self.shape)
        g = grad.sum(axis=tuple(range(lead))) if lead else grad
        axes = tuple(i for i, n in enumerate(self.shape) if n == 1 and g.shape[i] != 1)
        if axes:
            g = g.sum(axis=axes, keepdims=True)
        return (g,)


class Slice(Function):
    name = "slice"

    def forward(self, a: Array, index: Index) -> Array:  # type: ignore[override]
        parts = index if isinstance(index, tuple) else (index,)
        for part in parts:
            if not (part is None or part is Ellipsis or isinstance(part, (int, slice))):
                raise ContractError("only basic indexing (ints, slices, ...) is differentiable")
        self.shape, self.index, self.dtype = a.shape, index, a.dtype
        return a[index].copy()

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        out = np.zeros(self.shape, dtype=self.dtype)
        out[self.index] = grad
        return (out,)


class Concat(Function):
    name = "concat"

    def forward(self, *arrays: Array, axis: int = 0) -> Array:  # type: ignore[override]
        if not arrays:
            raise ContractError("concat needs at least one tensor")
        ndim = arrays[0].ndim
        self.axis = _normalize_axes(axis, ndim)[0]
        for arr in arrays:
            other = [n for i, n in enumerate(arr.shape) if i != self.axis]
            first = [n for i, n in enumerate(arrays[0].shape) if i != self.axis]
            if arr.ndim != ndim or other != first:
                raise DimensionError(
                    f"concat: shape {arr.shape} incompatible with {arrays[0].shape} on axis {axis}"
                )
        self.splits = np.cumsum([arr.shape[self.axis] for arr in arrays])[:-1]
        return np.concatenate(arrays, axis=self.axis)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return tuple(np.split(grad, self.splits, axis=self.axis))


class MatMul(Function):
    name = "matmul"

    def forward(self, a: Array, b: Array) -> Array:  # type: ignore[override]
        if a.ndim < 2 or a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
            raise DimensionError(f"matmul: incompatible shapes {a.shape} @ {b.shape}")
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad: Array) -> tuple[Array | None, ...]:
        return (
            np.matmul(grad, np.swapaxes(self.b, -1, -2)),
            np.matmul(np.swapaxes(self.a, -1, -2), grad),
        )


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    return Concat.apply(*tensors, axis=axis)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    expanded = []
    for t in tensors:
        ax = axis % (t.ndim + 1)
        expanded.append(t.reshape(*t.shape[:ax], 1, *t.shape[ax:]))
    return concat(expanded, axis=axis)
