from typing import Callable

import numpy as np
import pytest

from src.modules.utils import (
    ModelConfig,
    SkeletonDataset,
    SkeletonTopology,
    SyntheticSpec,
    ntu_topology,
    set_default_dtype,
    write_synthetic_corpus,
)
from src.modules.utils._ops import mean, mul
from src.modules.utils._tensor import Tensor


@pytest.fixture(autouse=True)
def float64():
    set_default_dtype("float64")
    yield
    set_default_dtype("float64")


def _numeric_grad(loss: Callable[[], float], tensor: Tensor, eps: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(tensor.data)
    it = np.nditer(tensor.data, flags=["multi_index"])
    for _ in it:
        index = it.multi_index
        original = tensor.data[index]
        tensor.data[index] = original + eps
        plus = loss()
        tensor.data[index] = original - eps
        minus = loss()
        tensor.data[index] = original
        grad[index] = (plus - minus) / (2 * eps)
    return grad


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(analytic) + np.abs(numeric))), 1e-8)
    return float(np.max(np.abs(analytic - numeric))) / scale


def scalarize(out: Tensor, weights: np.ndarray) -> Tensor:
    """Weighted mean of every element, so each output position gets a distinct gradient."""
    return mean(mul(out, Tensor(weights)), axis=tuple(range(out.ndim)))


@pytest.fixture
def weighted():
    return scalarize


@pytest.fixture
def grad_check():
    """
    ``grad_check(build, tensors)`` rebuilds the scalar loss with ``build()``,
    backpropagates once and compares every tensor's gradient with central
    differences. Returns the worst relative error.
    """

    def check(build: Callable[[], Tensor], tensors, eps: float = 1e-6) -> float:
        for tensor in tensors:
            tensor.zero_grad()
        build().backward()
        analytic = [tensor.grad.copy() for tensor in tensors]
        worst = 0.0
        for tensor, grad in zip(tensors, analytic):
            numeric = _numeric_grad(lambda: build().item(), tensor, eps)
            worst = max(worst, _relative_error(grad, numeric))
        return worst

    return check


@pytest.fixture
def path_topology() -> SkeletonTopology:
    """Five joints in a line, centred on the middle one."""
    return SkeletonTopology(
        joint_count=5,
        edges=((0, 1), (1, 2), (2, 3), (3, 4)),
        center_joint=2,
        roles={"spine": 2, "hip": 3, "left_shoulder": 0, "right_shoulder": 1},
    )


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(
        embed_channels=4,
        blocks=((4, 4, 1), (4, 6, 2), (6, 6, 1)),
        temporal_kernel=3,
        stcn_kernel=(3, 3),
        hops=2,
        joints=5,
        bodies=1,
    )


@pytest.fixture(scope="session")
def synthetic_corpus(tmp_path_factory):
    directory = tmp_path_factory.mktemp("corpus") / "synth"
    spec = SyntheticSpec(n_fall=6, n_other=24, seed=3)
    write_synthetic_corpus(spec, directory)
    return directory, spec


@pytest.fixture
def small_config() -> ModelConfig:
    """A narrow 25-joint, single-body network that trains in seconds."""
    return ModelConfig(
        embed_channels=4,
        blocks=((4, 4, 1), (4, 8, 2), (8, 8, 1)),
        temporal_kernel=3,
        stcn_kernel=(3, 3),
        hops=1,
        bodies=1,
    )


@pytest.fixture(scope="session")
def synthetic_dataset(synthetic_corpus):
    directory, _ = synthetic_corpus
    return SkeletonDataset.from_directory(directory, ntu_topology(), "ntu60", bodies=1)
