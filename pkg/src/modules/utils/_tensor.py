from typing import Callable, Optional, Sequence, Union

import numpy as np

from src import config
from src.modules.utils._errors import DimensionError, ParameterError

_DTYPES = {"float64": np.float64, "float32": np.float32}
_default_dtype = _DTYPES[config.PRECISION]


def set_default_dtype(name: str) -> None:
    """Switch the build-wide float precision ("float64" or "float32")."""
    global _default_dtype
    if name not in _DTYPES:
        raise ParameterError(f"unsupported precision {name!r}, expected one of {sorted(_DTYPES)}")
    _default_dtype = _DTYPES[name]


def get_default_dtype() -> type:
    return _default_dtype


ArrayLike = Union["Tensor", np.ndarray, Sequence, float, int]


class Tensor:
    """
    Dense n-dimensional value with an optional gradient.

    Ops record a closure that accumulates the output gradient into their
    inputs. ``backward`` replays those closures in reverse topological order.
    """

    __slots__ = ("data", "requires_grad", "grad", "_backward", "_prev", "_op")

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _children: tuple = (),
        _op: str = "",
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data
        array = np.array(data, dtype=get_default_dtype(), copy=True)
        if array.ndim == 0:
            array = array.reshape(())
        if any(extent <= 0 for extent in array.shape):
            raise DimensionError(f"tensor extents must be positive, got {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._backward: Callable[[], None] = lambda: None
        self._prev = _children
        self._op = _op

    @classmethod
    def _wrap(cls, data: np.ndarray, children: tuple, op: str) -> "Tensor":
        # op results own their array, no copy
        out = cls.__new__(cls)
        out.data = np.ascontiguousarray(data, dtype=get_default_dtype())
        out.requires_grad = any(child.requires_grad for child in children)
        out.grad = None
        out._backward = lambda: None
        out._prev = children if out.requires_grad else ()
        out._op = op
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def zero_grad(self) -> None:
        self.grad = None

    def topo(self) -> list:
        order, visited = [], set()
        stack: list = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for child in node._prev:
                if id(child) not in visited:
                    stack.append((child, False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        if not self.requires_grad:
            raise ParameterError("backward called on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise DimensionError(f"backward without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        self._accumulate(np.asarray(grad, dtype=self.data.dtype).reshape(self.shape))
        for node in reversed(self.topo()):
            node._backward()

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, op={self._op!r})"


class Parameter(Tensor):
    """Trainable tensor. ``name`` is assigned by the owning module tree."""

    __slots__ = ("name",)

    def __init__(self, data: ArrayLike, name: str = "") -> None:
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
