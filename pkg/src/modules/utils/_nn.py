from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

from src.modules.utils._ops import add, batch_norm, conv2d, linear, reshape
from src.modules.utils._tensor import Parameter, Tensor, get_default_dtype


class Module:
    """
    Parameter container with named parameters, buffers and child modules.

    Attributes holding a :class:`Parameter` or a :class:`Module` are registered
    automatically in assignment order, which fixes the parameter naming.
    """

    def __init__(self) -> None:
        object.__setattr__(self, "_parameters", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_modules", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name: str, value) -> None:
        if isinstance(value, Parameter):
            self._parameters[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, array: np.ndarray) -> None:
        self._buffers[name] = array
        object.__setattr__(self, name, array)

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, param in self._parameters.items():
            full = f"{prefix}{name}"
            param.name = full
            yield full, param
        for name, child in self._modules.items():
            yield from child.named_parameters(f"{prefix}{name}.")

    def parameters(self) -> list:
        return [param for _, param in self.named_parameters()]

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name, array in self._buffers.items():
            yield f"{prefix}{name}", array
        for name, child in self._modules.items():
            yield from child.named_buffers(f"{prefix}{name}.")

    def children(self) -> list:
        return list(self._modules.values())

    def train(self, mode: bool = True) -> "Module":
        object.__setattr__(self, "training", mode)
        for child in self._modules.values():
            child.train(mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for param in self.parameters():
            param.zero_grad()

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class ModuleList(Module):
    def __init__(self, modules: Sequence[Module] = ()) -> None:
        super().__init__()
        self._items: list = []
        for module in modules:
            self.append(module)

    def append(self, module: Module) -> None:
        setattr(self, str(len(self._items)), module)
        self._items.append(module)

    def __iter__(self):
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, index: int) -> Module:
        return self._items[index]


def fan_in_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(get_default_dtype())


class Conv2d(Module):
    """kt x kv convolution over (time, joint) with optional bias; stride on time only."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: Tuple[int, int] = (1, 1),
        stride_t: int = 1,
        pad_t: int = 0,
        pad_v: int = 0,
        bias: bool = True,
        rng: Optional[np.random.Generator] = None,
    ) -> None:
        super().__init__()
        rng = rng or np.random.default_rng(0)
        kt, kv = kernel
        fan_in = in_channels * kt * kv
        self.stride_t, self.pad_t, self.pad_v = stride_t, pad_t, pad_v
        self.weight = Parameter(fan_in_uniform(rng, (out_channels, in_channels, kt, kv), fan_in))
        self.bias = Parameter(fan_in_uniform(rng, (out_channels,), fan_in)) if bias else None

    @property
    def out_channels(self) -> int:
        return self.weight.shape[0]

    def output_time(self, t: int) -> int:
        return (t + 2 * self.pad_t - self.weight.shape[2]) // self.stride_t + 1

    def macs(self, t: int, v: int) -> int:
        c_out, c_in, kt, kv = self.weight.shape
        out_v = v + 2 * self.pad_v - kv + 1
        return c_out * c_in * kt * kv * self.output_time(t) * out_v

    def forward(self, x: Tensor) -> Tensor:
        out = conv2d(x, self.weight, self.stride_t, self.pad_t, self.pad_v)
        if self.bias is not None:
            out = add(out, reshape(self.bias, (self.out_channels, 1, 1)))
        return out


class BatchNorm2d(Module):
    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        super().__init__()
        self.momentum, self.eps = momentum, eps
        self.gamma = Parameter(np.ones(channels))
        self.beta = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=get_default_dtype()))
        self.register_buffer("running_var", np.ones(channels, dtype=get_default_dtype()))

    def forward(self, x: Tensor) -> Tensor:
        return batch_norm(
            x, self.gamma, self.beta, self.running_mean, self.running_var,
            training=self.training, momentum=self.momentum, eps=self.eps,
        )


class Linear(Module):
    def __init__(self, in_features: int, out_features: int, rng: Optional[np.random.Generator] = None) -> None:
        super().__init__()
        rng = rng or np.random.default_rng(0)
        self.weight = Parameter(fan_in_uniform(rng, (in_features, out_features), in_features))
        self.bias = Parameter(fan_in_uniform(rng, (out_features,), in_features))

    def macs(self) -> int:
        return int(np.prod(self.weight.shape))

    def forward(self, x: Tensor) -> Tensor:
        return linear(x, self.weight, self.bias)
