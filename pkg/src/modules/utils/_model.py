import hashlib
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.modules.utils._errors import ConfigurationError, DimensionError
from src.modules.utils._graph import AdjacencySet, EdgeImportance, SkeletonTopology, build_adjacency, effective_adjacency, ntu_topology
from src.modules.utils._nn import BatchNorm2d, Conv2d, Linear, Module, ModuleList
from src.modules.utils._ops import add, global_avg_pool, mean, node_mix, relu, reshape
from src.modules.utils._preprocess import ModelInput
from src.modules.utils._tensor import Parameter, Tensor

PARAM_BUDGET = (1_000_000, 1_600_000)

Array = Union[np.ndarray, Tensor]


@dataclass(frozen=True)
class ModelConfig:
    """
    Network shape. ``blocks`` lists (in_channels, out_channels, temporal stride)
    for each of the three basic blocks.
    """

    in_channels: int = 3
    embed_channels: int = 64
    blocks: Tuple[Tuple[int, int, int], ...] = ((64, 64, 1), (64, 128, 2), (128, 256, 2))
    temporal_kernel: int = 9
    stcn_kernel: Tuple[int, int] = (3, 3)
    hops: int = 3
    joints: int = 25
    bodies: int = 2
    num_classes: int = 2
    init_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "blocks", tuple(tuple(int(v) for v in block) for block in self.blocks))
        object.__setattr__(self, "stcn_kernel", tuple(int(v) for v in self.stcn_kernel))
        positive = ("in_channels", "embed_channels", "temporal_kernel", "hops", "joints", "bodies", "num_classes")
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigurationError(f"model.{name} must be positive, got {getattr(self, name)}")
        if len(self.blocks) != 3:
            raise ConfigurationError(f"the network has exactly 3 basic blocks, got {len(self.blocks)}")
        if self.temporal_kernel % 2 == 0 or any(k % 2 == 0 or k < 1 for k in self.stcn_kernel):
            raise ConfigurationError("temporal and spatio-temporal kernel sizes must be odd")
        channels = self.embed_channels
        for c_in, c_out, stride in self.blocks:
            if c_in != channels or c_out < 1 or stride < 1:
                raise ConfigurationError(f"block plan {self.blocks} does not chain from width {self.embed_channels}")
            channels = c_out

    @property
    def feature_channels(self) -> int:
        return self.blocks[-1][1]

    def to_dict(self) -> Dict:
        payload = asdict(self)
        payload["blocks"] = [list(block) for block in self.blocks]
        payload["stcn_kernel"] = list(self.stcn_kernel)
        return payload

    @classmethod
    def from_dict(cls, payload: Dict) -> "ModelConfig":
        return cls(**payload)


class EmbeddingStream(Module):
    """Batch norm then two 1x1 projections, each followed by ReLU."""

    def __init__(self, in_channels: int, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.bn = BatchNorm2d(in_channels)
        self.proj1 = Conv2d(in_channels, channels, rng=rng)
        self.proj2 = Conv2d(channels, channels, rng=rng)

    def macs(self, t: int, v: int) -> int:
        return self.proj1.macs(t, v) + self.proj2.macs(t, v)

    def forward(self, x: Array) -> Tensor:
        return relu(self.proj2(relu(self.proj1(self.bn(x)))))


class EmbeddingBlock(Module):
    def __init__(self, in_channels: int, channels: int, rng: np.random.Generator) -> None:
        super().__init__()
        self.joint = EmbeddingStream(in_channels, channels, rng)
        self.velocity = EmbeddingStream(in_channels, channels, rng)

    def macs(self, t: int, v: int) -> int:
        return self.joint.macs(t, v) + self.velocity.macs(t, v)

    def forward(self, joints: Array, velocity: Array) -> Tensor:
        if joints.shape != velocity.shape:
            raise DimensionError(f"joint stream {joints.shape} and velocity stream {velocity.shape} differ")
        return add(self.joint(joints), self.velocity(velocity))


class SpatialGraphConv(Module):
    """
    Per-partition 1x1 transform, node mixing by the edge-weighted adjacency,
    shared bias, batch norm, residual, ReLU.
    """

    def __init__(self, in_channels: int, out_channels: int, adjacency: AdjacencySet, rng: np.random.Generator) -> None:
        super().__init__()
        self.adjacency = adjacency
        self.transforms = ModuleList(
            [Conv2d(in_channels, out_channels, bias=False, rng=rng) for _ in range(len(adjacency.partitions))]
        )
        self.bias = Parameter(np.zeros(out_channels))
        self.importance = EdgeImportance(adjacency.joint_count)
        self.bn = BatchNorm2d(out_channels)
        if in_channels != out_channels:
            self.down = Conv2d(in_channels, out_channels, rng=rng)
            self.down_bn = BatchNorm2d(out_channels)
        else:
            self.down = None

    def macs(self, t: int, v: int) -> int:
        out_channels = self.bias.shape[0]
        total = sum(transform.macs(t, v) for transform in self.transforms)
        total += len(self.transforms) * out_channels * v * v * t
        if self.down is not None:
            total += self.down.macs(t, v)
        return total

    def forward(self, z: Tensor) -> Tensor:
        joints = self.adjacency.joint_count
        if z.shape[-1] != joints:
            raise DimensionError(f"input has {z.shape[-1]} joints, adjacency has {joints}")
        mixed = None
        for transform, a_hat in zip(self.transforms, effective_adjacency(self.adjacency, self.importance.thetas)):
            term = node_mix(transform(z), a_hat)
            mixed = term if mixed is None else add(mixed, term)
        mixed = add(mixed, reshape(self.bias, (self.bias.shape[0], 1, 1)))
        residual = z if self.down is None else self.down_bn(self.down(z))
        return relu(add(self.bn(mixed), residual))


class TemporalConv(Module):
    """kt x 1 convolution along time for each joint, then batch norm."""

    def __init__(self, channels: int, kernel: int, stride: int, rng: np.random.Generator) -> None:
        super().__init__()
        if kernel % 2 == 0:
            raise ConfigurationError(f"temporal kernel must be odd, got {kernel}")
        self.conv = Conv2d(channels, channels, (kernel, 1), stride_t=stride, pad_t=(kernel - 1) // 2, rng=rng)
        self.bn = BatchNorm2d(channels)

    def macs(self, t: int, v: int) -> int:
        return self.conv.macs(t, v)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))


class SpatioTemporalConv(Module):
    """kt x kv convolution over the (time, joint) grid, no adjacency, then batch norm."""

    def __init__(
        self, in_channels: int, out_channels: int, kernel: Tuple[int, int], stride: int, rng: np.random.Generator
    ) -> None:
        super().__init__()
        kt, kv = kernel
        if kt % 2 == 0 or kv % 2 == 0:
            raise ConfigurationError(f"spatio-temporal kernel must be odd, got {kernel}")
        self.conv = Conv2d(
            in_channels, out_channels, (kt, kv), stride_t=stride, pad_t=(kt - 1) // 2, pad_v=(kv - 1) // 2, rng=rng
        )
        self.bn = BatchNorm2d(out_channels)

    def macs(self, t: int, v: int) -> int:
        return self.conv.macs(t, v)

    def forward(self, x: Tensor) -> Tensor:
        return self.bn(self.conv(x))


class BasicBlock(Module):
    """ReLU(TGCN(SGCN(x)) + STCN(x) + residual(x))."""

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        stride: int,
        adjacency: AdjacencySet,
        config: ModelConfig,
        rng: np.random.Generator,
    ) -> None:
        super().__init__()
        self.sgcn = SpatialGraphConv(in_channels, out_channels, adjacency, rng)
        self.tgcn = TemporalConv(out_channels, config.temporal_kernel, stride, rng)
        self.stcn = SpatioTemporalConv(in_channels, out_channels, config.stcn_kernel, stride, rng)
        if in_channels != out_channels or stride != 1:
            self.residual = Conv2d(in_channels, out_channels, stride_t=stride, rng=rng)
            self.residual_bn = BatchNorm2d(out_channels)
        else:
            self.residual = None

    def output_time(self, t: int) -> int:
        return self.tgcn.conv.output_time(t)

    def macs(self, t: int, v: int) -> int:
        total = self.sgcn.macs(t, v) + self.tgcn.macs(t, v) + self.stcn.macs(t, v)
        if self.residual is not None:
            total += self.residual.macs(t, v)
        return total

    def forward(self, x: Tensor) -> Tensor:
        spatial = self.tgcn(self.sgcn(x))
        grid = self.stcn(x)
        if spatial.shape != grid.shape:
            raise DimensionError(f"pathway shapes differ: {spatial.shape} vs {grid.shape}")
        shortcut = x if self.residual is None else self.residual_bn(self.residual(x))
        return relu(add(add(spatial, grid), shortcut))


class FallDetectorNet(Module):
    """Embedding, three basic blocks, global average pooling and a linear head."""

    def __init__(self, config: Optional[ModelConfig] = None, topology: Optional[SkeletonTopology] = None) -> None:
        super().__init__()
        config = config or ModelConfig()
        topology = topology or ntu_topology()
        if topology.joint_count != config.joints:
            raise ConfigurationError(
                f"model expects {config.joints} joints, topology has {topology.joint_count}"
            )
        rng = np.random.default_rng(config.init_seed)
        self.config = config
        self.topology = topology
        self.adjacency = build_adjacency(topology, config.hops)
        self.embedding = EmbeddingBlock(config.in_channels, config.embed_channels, rng)
        self.blocks = ModuleList(
            [BasicBlock(c_in, c_out, stride, self.adjacency, config, rng) for c_in, c_out, stride in config.blocks]
        )
        self.head = Linear(config.feature_channels, config.num_classes, rng=rng)

        if config == ModelConfig():
            total = count_params(self)
            low, high = PARAM_BUDGET
            if not low <= total <= high:
                raise ConfigurationError(f"default network has {total} parameters, outside [{low}, {high}]")

    def forward(self, joints: Array, velocity: Array) -> Tensor:
        """
        :param joints: N x C x T x V x M joint coordinates.
        :param velocity: same shape, frame differences.
        :return: N x num_classes logits.
        """
        joints = joints.data if isinstance(joints, Tensor) else np.asarray(joints)
        velocity = velocity.data if isinstance(velocity, Tensor) else np.asarray(velocity)
        if joints.shape != velocity.shape:
            raise DimensionError(f"joint stream {joints.shape} and velocity stream {velocity.shape} differ")
        if joints.ndim != 5:
            raise DimensionError(f"expected N x C x T x V x M input, got {joints.shape}")
        n, c, t, v, m = joints.shape
        if v != self.config.joints or c != self.config.in_channels:
            raise DimensionError(f"input {joints.shape} does not match {self.config.in_channels} channels / {self.config.joints} joints")

        # bodies fold into the batch axis
        fold = (0, 4, 1, 2, 3)
        z = self.embedding(
            Tensor(joints.transpose(fold).reshape(n * m, c, t, v)),
            Tensor(velocity.transpose(fold).reshape(n * m, c, t, v)),
        )
        for block in self.blocks:
            z = block(z)
        pooled = reshape(global_avg_pool(z), (n, m, self.config.feature_channels))
        return self.head(mean(pooled, axis=1))


def forward(net: FallDetectorNet, batch: Sequence[ModelInput]) -> Tensor:
    joints = np.stack([sample.joints for sample in batch])
    velocity = np.stack([sample.velocity for sample in batch])
    return net(joints, velocity)


def count_params(net: Module) -> int:
    return int(sum(param.size for param in net.parameters()))


def estimate_flops(net: FallDetectorNet, window: int) -> int:
    """Two FLOPs per multiply-accumulate of convolutions, node mixing and the head, one sample."""
    v, m = net.config.joints, net.config.bodies
    per_body = net.embedding.macs(window, v)
    t = window
    for block in net.blocks:
        per_body += block.macs(t, v)
        t = block.output_time(t)
    return 2 * (m * per_body + net.head.macs())


def parameter_checksum(net: Module) -> str:
    digest = hashlib.sha256()
    for name, param in net.named_parameters():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(param.data).tobytes())
    for name, array in net.named_buffers():
        digest.update(name.encode())
        digest.update(np.ascontiguousarray(array).tobytes())
    return digest.hexdigest()
