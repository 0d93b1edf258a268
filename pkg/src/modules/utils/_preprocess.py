from dataclasses import dataclass, replace
from typing import Dict, Iterable, Optional

import numpy as np

from src import LOGGER
from src.modules.utils._errors import EmptySampleError, ParameterError, TopologyError
from src.modules.utils._graph import ROLES, SkeletonTopology

STD_FLOOR = 1e-8
_DEGENERATE = 1e-6


@dataclass(frozen=True)
class SkeletonSequence:
    """C x T x V x M joint coordinates (meters). Absent bodies/joints are exactly zero."""

    data: np.ndarray
    valid_frames: np.ndarray
    aligned: bool = True

    @classmethod
    def from_array(cls, data: np.ndarray) -> "SkeletonSequence":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 4:
            raise ParameterError(f"expected C x T x V x M data, got shape {data.shape}")
        return cls(data=data, valid_frames=np.any(data != 0, axis=(0, 2, 3)))

    @property
    def frames(self) -> int:
        return self.data.shape[1]

    @property
    def joints(self) -> int:
        return self.data.shape[2]

    @property
    def bodies(self) -> int:
        return self.data.shape[3]

    def present(self) -> np.ndarray:
        """T x V x M mask, true for every joint of a body that appears in that frame."""
        bodies = np.any(self.data != 0, axis=(0, 2))
        return np.broadcast_to(bodies[:, None, :], self.data.shape[1:])


@dataclass(frozen=True)
class ModelInput:
    joints: np.ndarray
    velocity: np.ndarray
    label: int
    window: int


@dataclass(frozen=True)
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, channels: int = 3) -> "NormStats":
        return cls(mean=np.zeros(channels), std=np.ones(channels))

    def to_dict(self) -> Dict[str, list]:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, payload: Dict[str, list]) -> "NormStats":
        return cls(mean=np.asarray(payload["mean"], dtype=np.float64), std=np.asarray(payload["std"], dtype=np.float64))


def discard_empty_frames(seq: SkeletonSequence) -> SkeletonSequence:
    keep = np.any(seq.data != 0, axis=(0, 2, 3))
    if not keep.any():
        raise EmptySampleError("sample contains no skeleton in any frame")
    return SkeletonSequence(data=seq.data[:, keep], valid_frames=np.ones(int(keep.sum()), dtype=bool), aligned=seq.aligned)


def replay_to_length(seq: SkeletonSequence, max_frames: int = 300) -> SkeletonSequence:
    """Loop the sequence until ``max_frames`` frames; longer sequences are truncated."""
    if seq.frames == 0:
        raise EmptySampleError("cannot replay an empty sequence")
    index = np.arange(max_frames) % seq.frames
    return SkeletonSequence(data=seq.data[:, index], valid_frames=seq.valid_frames[index], aligned=seq.aligned)


def _reference_frame(seq: SkeletonSequence) -> int:
    body0 = np.any(seq.data[..., 0] != 0, axis=(0, 2))
    frames = np.flatnonzero(body0)
    if frames.size == 0:
        raise EmptySampleError("body 0 never appears")
    return int(frames[0])


def _rotation(shoulders: np.ndarray, hip_to_spine: np.ndarray) -> Optional[np.ndarray]:
    x_norm = np.linalg.norm(shoulders)
    if x_norm < _DEGENERATE:
        return None
    x_axis = shoulders / x_norm
    z_axis = hip_to_spine - hip_to_spine.dot(x_axis) * x_axis
    z_norm = np.linalg.norm(z_axis)
    if z_norm < _DEGENERATE:
        return None
    z_axis = z_axis / z_norm
    y_axis = np.cross(z_axis, x_axis)
    return np.stack([x_axis, y_axis, z_axis])


def view_invariant_transform(seq: SkeletonSequence, topology: SkeletonTopology) -> SkeletonSequence:
    """
    One rigid transform, computed from the first frame of body 0, applied to
    every frame and body: spine to the origin, shoulder bone along +x,
    hip-to-spine bone along +z. Missing joints stay exactly zero. Degenerate
    reference bones fall back to a translation and mark the result
    ``aligned=False``.
    """
    missing = [role for role in ROLES if role not in topology.roles]
    if missing:
        raise TopologyError(f"topology declares no reference joint for {', '.join(missing)}")
    roles = topology.roles
    frame = seq.data[:, _reference_frame(seq), :, 0]
    origin = frame[:, roles["spine"]]
    rotation = _rotation(
        frame[:, roles["right_shoulder"]] - frame[:, roles["left_shoulder"]],
        frame[:, roles["spine"]] - frame[:, roles["hip"]],
    )
    aligned = rotation is not None
    if not aligned:
        LOGGER.warning("degenerate reference bones, applying translation only")
        rotation = np.eye(3)

    present = np.any(seq.data != 0, axis=0)
    moved = np.einsum("ij,jtvm->itvm", rotation, seq.data - origin[:, None, None, None])
    data = np.where(present[None], moved, 0.0)
    return SkeletonSequence(data=data, valid_frames=seq.valid_frames.copy(), aligned=aligned)


def random_window(seq: SkeletonSequence, window: int = 250, rng: Optional[np.random.Generator] = None) -> SkeletonSequence:
    """Contiguous ``window``-frame slice; a random start under ``rng``, frame 0 without one."""
    if window < 1 or window > seq.frames:
        raise ParameterError(f"window {window} does not fit a {seq.frames}-frame sequence")
    start = 0 if rng is None else int(rng.integers(0, seq.frames - window + 1))
    return SkeletonSequence(
        data=seq.data[:, start:start + window], valid_frames=seq.valid_frames[start:start + window], aligned=seq.aligned
    )


def compute_norm_stats(sequences: Iterable[SkeletonSequence]) -> NormStats:
    """Per-channel mean/std over present joints only."""
    chunks = [seq.data[:, seq.present()] for seq in sequences]
    if not chunks:
        raise EmptySampleError("no sequences to compute normalization statistics from")
    values = np.concatenate(chunks, axis=1)
    if values.shape[1] == 0:
        raise EmptySampleError("no present joints to compute normalization statistics from")
    return NormStats(mean=values.mean(axis=1), std=values.std(axis=1))


def normalize_joints(seq: SkeletonSequence, stats: NormStats) -> SkeletonSequence:
    std = np.maximum(stats.std, STD_FLOOR)
    scaled = (seq.data - stats.mean[:, None, None, None]) / std[:, None, None, None]
    data = np.where(seq.present()[None], scaled, 0.0)
    return replace(seq, data=data)


def compute_velocity(joints: np.ndarray) -> np.ndarray:
    """Frame differences along axis 1 with an all-zero first frame."""
    joints = np.asarray(joints)
    velocity = np.zeros_like(joints)
    velocity[:, 1:] = joints[:, 1:] - joints[:, :-1]
    return velocity


def pad_bodies(seq: SkeletonSequence, bodies: int) -> SkeletonSequence:
    if seq.bodies >= bodies:
        return replace(seq, data=seq.data[..., :bodies])
    pad = np.zeros(seq.data.shape[:3] + (bodies - seq.bodies,), dtype=seq.data.dtype)
    return replace(seq, data=np.concatenate([seq.data, pad], axis=3))


def prepare_static(
    seq: SkeletonSequence, topology: SkeletonTopology, bodies: int = 2
) -> SkeletonSequence:
    """Deterministic stages: discard empty frames, view-invariant transform, body padding."""
    seq = discard_empty_frames(seq)
    seq = view_invariant_transform(seq, topology)
    return pad_bodies(seq, bodies)


def prepare_sample(
    seq: SkeletonSequence,
    stats: NormStats,
    label: int,
    max_frames: int = 300,
    window: int = 250,
    rng: Optional[np.random.Generator] = None,
) -> ModelInput:
    """Remaining stages on a :func:`prepare_static` sequence: replay, window, normalize, velocity."""
    seq = replay_to_length(seq, max_frames)
    seq = random_window(seq, window, rng)
    seq = normalize_joints(seq, stats)
    return ModelInput(joints=seq.data, velocity=compute_velocity(seq.data), label=int(label), window=window)


def sample_rng(seed: int, index: int, epoch: int) -> np.random.Generator:
    return np.random.default_rng([seed, index, epoch])
