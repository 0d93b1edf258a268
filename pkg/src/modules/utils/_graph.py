from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from src.modules.utils._errors import DimensionError, FormatError, MissingFileError, ParameterError, TopologyError
from src.modules.utils._files import atomic_write_text
from src.modules.utils._nn import Module
from src.modules.utils._ops import mul
from src.modules.utils._tensor import Parameter, Tensor

PARTITIONS = ("root", "centripetal", "centrifugal")
ROLES = ("spine", "hip", "left_shoulder", "right_shoulder")

# NTU RGB+D joint map, 1-based as published.
_NTU_BONES_1BASE = (
    (1, 2), (2, 21), (3, 21), (4, 3), (5, 21), (6, 5), (7, 6), (8, 7),
    (9, 21), (10, 9), (11, 10), (12, 11), (13, 1), (14, 13), (15, 14), (16, 15),
    (17, 1), (18, 17), (19, 18), (20, 19), (22, 23), (23, 8), (24, 25), (25, 12),
)

# OpenNI-style 15-joint skeleton: head, neck, torso, left arm, right arm, left leg, right leg.
_UWA_BONES = (
    (0, 1), (1, 2), (1, 3), (3, 4), (4, 5), (1, 6), (6, 7), (7, 8),
    (2, 9), (9, 10), (10, 11), (2, 12), (12, 13), (13, 14),
)


@dataclass(frozen=True)
class SkeletonTopology:
    """
    Joint graph. ``center_joint`` anchors the centripetal/centrifugal split;
    ``roles`` names the joints the view-invariant transform aligns on.
    """

    joint_count: int
    edges: Tuple[Tuple[int, int], ...]
    center_joint: int
    roles: Dict[str, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.joint_count
        if n < 1:
            raise TopologyError(f"joint count must be positive, got {n}")
        seen = set()
        for i, j in self.edges:
            if not (0 <= i < n and 0 <= j < n):
                raise TopologyError(f"edge ({i}, {j}) outside 0..{n - 1}")
            if i == j:
                raise TopologyError(f"self-loop on joint {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise TopologyError(f"duplicate edge ({i}, {j})")
            seen.add(key)
        if not 0 <= self.center_joint < n:
            raise TopologyError(f"center joint {self.center_joint} outside 0..{n - 1}")
        for role, joint in self.roles.items():
            if role not in ROLES or not 0 <= joint < n:
                raise TopologyError(f"invalid role {role}={joint}")

    @property
    def is_tree(self) -> bool:
        if len(self.edges) != self.joint_count - 1:
            return False
        try:
            hop_distance_matrix(self)
        except TopologyError:
            return False
        return True

    def degree(self, joint: int) -> int:
        return sum(joint in edge for edge in self.edges)


def ntu_topology() -> SkeletonTopology:
    """25-joint NTU RGB+D skeleton, centred on joint 21 ("spine", shoulder level)."""
    return SkeletonTopology(
        joint_count=25,
        edges=tuple((i - 1, j - 1) for i, j in _NTU_BONES_1BASE),
        center_joint=20,
        roles={"spine": 1, "hip": 0, "left_shoulder": 4, "right_shoulder": 8},
    )


def uwa3d_topology() -> SkeletonTopology:
    """15-joint skeleton; the torso-to-neck bone plays the hip-to-spine role."""
    return SkeletonTopology(
        joint_count=15,
        edges=_UWA_BONES,
        center_joint=1,
        roles={"spine": 1, "hip": 2, "left_shoulder": 3, "right_shoulder": 6},
    )


def load_topology(path: Union[str, Path]) -> SkeletonTopology:
    """
    Read an edge-list file: the joint count, then one ``i j`` pair per line.

    Optional keyword lines: ``center k``, ``spine k``, ``hip k``,
    ``shoulders l r``. Lines starting with ``#`` are ignored. Without a
    ``center`` line the joint of minimum eccentricity is used.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"topology file not found: {path}")

    joint_count = None
    edges: List[Tuple[int, int]] = []
    center = None
    roles: Dict[str, int] = {}
    for number, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if joint_count is None:
                if len(parts) != 1:
                    raise ValueError
                joint_count = int(parts[0])
            elif parts[0] == "center" and len(parts) == 2:
                center = int(parts[1])
            elif parts[0] in ("spine", "hip") and len(parts) == 2:
                roles[parts[0]] = int(parts[1])
            elif parts[0] == "shoulders" and len(parts) == 3:
                roles["left_shoulder"], roles["right_shoulder"] = int(parts[1]), int(parts[2])
            elif len(parts) == 2:
                edges.append((int(parts[0]), int(parts[1])))
            else:
                raise ValueError
        except ValueError:
            raise FormatError(f"cannot parse topology line {raw.strip()!r}", str(path), number) from None
    if joint_count is None:
        raise FormatError("empty topology file", str(path))

    provisional = SkeletonTopology(joint_count, tuple(edges), center if center is not None else 0, roles)
    if not provisional.is_tree:
        raise TopologyError(f"{path}: edges do not form a connected tree over {joint_count} joints")
    if center is None:
        center = int(np.argmin(hop_distance_matrix(provisional).max(axis=1)))
    return SkeletonTopology(joint_count, tuple(edges), center, roles)


def write_topology(path: Union[str, Path], topology: SkeletonTopology) -> Path:
    lines = [str(topology.joint_count), f"center {topology.center_joint}"]
    roles = topology.roles
    for role in ("spine", "hip"):
        if role in roles:
            lines.append(f"{role} {roles[role]}")
    if "left_shoulder" in roles and "right_shoulder" in roles:
        lines.append(f"shoulders {roles['left_shoulder']} {roles['right_shoulder']}")
    lines.extend(f"{i} {j}" for i, j in topology.edges)
    return atomic_write_text(path, "\n".join(lines) + "\n")


def hop_distance_matrix(topology: SkeletonTopology) -> np.ndarray:
    """Shortest-path edge counts between every pair of joints."""
    n = topology.joint_count
    if topology.edges:
        rows, cols = zip(*topology.edges)
    else:
        rows, cols = (), ()
    graph = csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    distance = shortest_path(graph, directed=False, unweighted=True)
    if np.isinf(distance).any():
        raise TopologyError(f"skeleton graph with {n} joints is disconnected")
    return distance.astype(np.int64)


@dataclass(frozen=True)
class AdjacencySet:
    """Normalized root / centripetal / centrifugal matrices, stacked as 3 x N x N."""

    partitions: np.ndarray
    hop_limit: int

    @property
    def joint_count(self) -> int:
        return self.partitions.shape[-1]

    @property
    def support(self) -> np.ndarray:
        return (self.partitions != 0).any(axis=0)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.partitions[PARTITIONS.index(name)]


def build_adjacency(topology: SkeletonTopology, hops: int = 3) -> AdjacencySet:
    if hops < 1:
        raise ParameterError(f"hop limit must be >= 1, got {hops}")
    hop = hop_distance_matrix(topology)
    n = topology.joint_count
    mask = (hop <= hops).astype(np.float64)
    off_diagonal = ~np.eye(n, dtype=bool)
    to_center = hop[:, topology.center_joint]
    closer = to_center[None, :] < to_center[:, None]

    root = np.eye(n)
    centripetal = mask * (off_diagonal & closer)
    centrifugal = mask * (off_diagonal & ~closer)

    # row sums of the masked off-diagonal matrix plus the self loop
    degree = mask.sum(axis=1)
    scale = np.zeros(n)
    np.divide(1.0, np.sqrt(degree), out=scale, where=degree > 0)
    partitions = np.stack([p * scale[:, None] * scale[None, :] for p in (root, centripetal, centrifugal)])
    partitions.setflags(write=False)
    return AdjacencySet(partitions=partitions, hop_limit=hops)


class EdgeImportance(Module):
    """One learnable N x N weight per partition, initialised to ones."""

    def __init__(self, joint_count: int) -> None:
        super().__init__()
        for name in PARTITIONS:
            setattr(self, name, Parameter(np.ones((joint_count, joint_count))))

    @property
    def thetas(self) -> List[Parameter]:
        return [getattr(self, name) for name in PARTITIONS]


def effective_adjacency(adjacency: AdjacencySet, thetas: Sequence[Tensor]) -> List[Tensor]:
    """Elementwise A_p * theta_p for every partition."""
    if len(thetas) != len(PARTITIONS):
        raise DimensionError(f"expected {len(PARTITIONS)} edge-importance matrices, got {len(thetas)}")
    result = []
    for static, theta in zip(adjacency.partitions, thetas):
        if theta.shape != static.shape:
            raise DimensionError(f"edge importance {theta.shape} does not match adjacency {static.shape}")
        result.append(mul(Tensor(static), theta))
    return result
