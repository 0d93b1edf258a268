"""
Differentiable operations over :class:`Tensor`.

Each op computes its forward value with numpy and attaches a closure that
accumulates gradients into its inputs. Inputs are never modified; the only
state an op may touch is the running statistics handed to ``batch_norm``.
"""

from typing import Sequence, Union

import numpy as np

from src.modules.utils._errors import DimensionError, LabelError, ParameterError
from src.modules.utils._tensor import ArrayLike, Tensor, as_tensor

Axis = Union[int, Sequence[int]]


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` back down to ``shape`` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(op: str, a: Tensor, b: Tensor) -> tuple:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("add", a, b)
    out = Tensor._wrap(a.data + b.data, (a, b), "add")

    def _backward() -> None:
        a._accumulate(_unbroadcast(out.grad, a.shape))
        b._accumulate(_unbroadcast(out.grad, b.shape))

    out._backward = _backward
    return out


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape("mul", a, b)
    out = Tensor._wrap(a.data * b.data, (a, b), "mul")

    def _backward() -> None:
        a._accumulate(_unbroadcast(out.grad * b.data, a.shape))
        b._accumulate(_unbroadcast(out.grad * a.data, b.shape))

    out._backward = _backward
    return out


def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    out = Tensor._wrap(a.data @ b.data, (a, b), "matmul")

    def _backward() -> None:
        a._accumulate(out.grad @ b.data.T)
        b._accumulate(a.data.T @ out.grad)

    out._backward = _backward
    return out


def reshape(x: ArrayLike, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise DimensionError(f"reshape: cannot view {x.shape} as {tuple(shape)}") from None
    out = Tensor._wrap(data, (x,), "reshape")

    def _backward() -> None:
        x._accumulate(out.grad.reshape(x.shape))

    out._backward = _backward
    return out


def transpose(x: ArrayLike, axes: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation of {x.ndim} axes")
    inverse = tuple(np.argsort(axes))
    out = Tensor._wrap(x.data.transpose(axes), (x,), "transpose")

    def _backward() -> None:
        x._accumulate(out.grad.transpose(inverse))

    out._backward = _backward
    return out


def mean(x: ArrayLike, axis: Axis) -> Tensor:
    x = as_tensor(x)
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    axes = tuple(a % x.ndim for a in axes)
    count = int(np.prod([x.shape[a] for a in axes]))
    out = Tensor._wrap(x.data.mean(axis=axes), (x,), "mean")

    def _backward() -> None:
        grad = np.expand_dims(out.grad, axes) / count
        x._accumulate(np.broadcast_to(grad, x.shape))

    out._backward = _backward
    return out


def relu(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    mask = x.data > 0
    out = Tensor._wrap(np.where(mask, x.data, 0.0), (x,), "relu")

    def _backward() -> None:
        x._accumulate(out.grad * mask)

    out._backward = _backward
    return out


def global_avg_pool(x: ArrayLike) -> Tensor:
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"global_avg_pool: expected N x C x T x V, got {x.shape}")
    return mean(x, axis=(2, 3))


def linear(x: ArrayLike, weight: ArrayLike, bias: ArrayLike) -> Tensor:
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if bias.shape != (weight.shape[-1],):
        raise DimensionError(f"linear: bias {bias.shape} does not match weight {weight.shape}")
    return add(matmul(x, weight), bias)


def node_mix(x: ArrayLike, adjacency: ArrayLike) -> Tensor:
    """out[..., i] = sum_j adjacency[i, j] * x[..., j]"""
    x, adjacency = as_tensor(x), as_tensor(adjacency)
    joints = x.shape[-1]
    if adjacency.shape != (joints, joints):
        raise DimensionError(f"node_mix: adjacency {adjacency.shape} does not match {joints} joints")
    flat = reshape(x, (-1, joints))
    mixed = matmul(flat, transpose(adjacency, (1, 0)))
    return reshape(mixed, x.shape)


def _im2col(padded: np.ndarray, kt: int, kv: int, stride_t: int, out_t: int, out_v: int) -> np.ndarray:
    n, c = padded.shape[:2]
    col = np.empty((n, c, kt, kv, out_t, out_v), dtype=padded.dtype)
    for i in range(kt):
        stop = i + stride_t * (out_t - 1) + 1
        for j in range(kv):
            col[:, :, i, j] = padded[:, :, i:stop:stride_t, j:j + out_v]
    return col.transpose(0, 4, 5, 1, 2, 3).reshape(n * out_t * out_v, -1)


def _col2im(
    dcol: np.ndarray, padded_shape: tuple, kt: int, kv: int, stride_t: int, out_t: int, out_v: int
) -> np.ndarray:
    n, c = padded_shape[:2]
    dcol = dcol.reshape(n, out_t, out_v, c, kt, kv).transpose(0, 3, 4, 5, 1, 2)
    dpadded = np.zeros(padded_shape, dtype=dcol.dtype)
    for i in range(kt):
        stop = i + stride_t * (out_t - 1) + 1
        for j in range(kv):
            dpadded[:, :, i:stop:stride_t, j:j + out_v] += dcol[:, :, i, j]
    return dpadded


def conv2d(x: ArrayLike, weight: ArrayLike, stride_t: int = 1, pad_t: int = 0, pad_v: int = 0) -> Tensor:
    """
    Cross-correlation over the (time, joint) plane of an N x C x T x V input.

    Stride applies to the time axis only; the joint axis always has stride 1.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d: expected 4-d input and kernel, got {x.shape} and {weight.shape}")
    if stride_t < 1 or pad_t < 0 or pad_v < 0:
        raise ParameterError(f"conv2d: invalid stride {stride_t} / padding ({pad_t}, {pad_v})")
    n, c, t, v = x.shape
    c_out, c_in, kt, kv = weight.shape
    if c_in != c:
        raise DimensionError(f"conv2d: kernel {weight.shape} expects {c_in} channels, input {x.shape} has {c}")
    if kt > t + 2 * pad_t or kv > v + 2 * pad_v:
        raise DimensionError(f"conv2d: kernel {weight.shape} larger than padded input {x.shape}")

    out_t = (t + 2 * pad_t - kt) // stride_t + 1
    out_v = v + 2 * pad_v - kv + 1
    padded = np.pad(x.data, ((0, 0), (0, 0), (pad_t, pad_t), (pad_v, pad_v)))
    col = _im2col(padded, kt, kv, stride_t, out_t, out_v)
    kernel = weight.data.reshape(c_out, -1)
    result = (col @ kernel.T).reshape(n, out_t, out_v, c_out).transpose(0, 3, 1, 2)
    out = Tensor._wrap(result, (x, weight), "conv2d")

    def _backward() -> None:
        grad = out.grad.transpose(0, 2, 3, 1).reshape(-1, c_out)
        if weight.requires_grad:
            weight._accumulate((grad.T @ col).reshape(weight.shape))
        if x.requires_grad:
            dpadded = _col2im(grad @ kernel, padded.shape, kt, kv, stride_t, out_t, out_v)
            x._accumulate(dpadded[:, :, pad_t:pad_t + t, pad_v:pad_v + v])

    out._backward = _backward
    return out


def batch_norm(
    x: ArrayLike,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """
    Per-channel normalization of an N x C x T x V tensor.

    Training mode normalizes with batch statistics and updates the running
    statistics in place (unbiased variance); eval mode uses the running ones.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise DimensionError(f"batch_norm: expected N x C x T x V, got {x.shape}")
    channels = x.shape[1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError(f"batch_norm: state width {gamma.shape} does not match input {x.shape}")

    axes = (0, 2, 3)
    count = x.size // channels
    if training:
        mu = x.data.mean(axis=axes)
        var = x.data.var(axis=axes)
        unbiased = var * count / (count - 1) if count > 1 else var
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * unbiased
    else:
        mu, var = running_mean, running_var

    invstd = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mu[None, :, None, None]) * invstd[None, :, None, None]
    result = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    out = Tensor._wrap(result, (x, gamma, beta), "batch_norm")

    def _backward() -> None:
        grad = out.grad
        gamma._accumulate((grad * xhat).sum(axis=axes))
        beta._accumulate(grad.sum(axis=axes))
        if not x.requires_grad:
            return
        dxhat = grad * gamma.data[None, :, None, None]
        scale = invstd[None, :, None, None]
        if training:
            sum_dxhat = dxhat.sum(axis=axes, keepdims=True)
            sum_dxhat_xhat = (dxhat * xhat).sum(axis=axes, keepdims=True)
            x._accumulate(scale / count * (count * dxhat - sum_dxhat - xhat * sum_dxhat_xhat))
        else:
            x._accumulate(dxhat * scale)

    out._backward = _backward
    return out


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(logits: ArrayLike, labels: ArrayLike) -> Tensor:
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise DimensionError(f"softmax_cross_entropy: expected N x K logits, got {logits.shape}")
    n, k = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise DimensionError(f"softmax_cross_entropy: labels {labels.shape} do not match logits {logits.shape}")
    if not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0 or labels.max() >= k:
        raise LabelError(f"softmax_cross_entropy: labels must be integers in [0, {k}), got {labels.tolist()}")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(n), labels]
    out = Tensor._wrap(np.asarray((log_norm - picked).mean()), (logits,), "cross_entropy")

    def _backward() -> None:
        grad = softmax(logits.data)
        grad[np.arange(n), labels] -= 1.0
        logits._accumulate(grad * (out.grad / n))

    out._backward = _backward
    return out
