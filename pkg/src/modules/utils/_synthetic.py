"""
Desk-scale stand-in for NTU RGB+D: single-body 25-joint sequences where
falls and slow lie-downs share the same stand-to-lie trajectory and differ
only in how fast it is traversed.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np

from src import LOGGER, config
from src.modules.utils._data import DATASETS, RawSample, SampleId, write_skeleton_file
from src.modules.utils._errors import ParameterError
from src.modules.utils._files import atomic_directory, atomic_write_json
from src.modules.utils._preprocess import SkeletonSequence

# Standing pose in meters, y up, feet on the floor. Rows follow NTU joint order.
STANDING_POSE = np.array([
    [0.00, 1.00, 0.00],   # base of spine
    [0.00, 1.25, 0.00],   # mid spine
    [0.00, 1.52, 0.00],   # neck
    [0.00, 1.68, 0.02],   # head
    [-0.20, 1.45, 0.00],  # left shoulder
    [-0.25, 1.20, 0.00],  # left elbow
    [-0.27, 0.98, 0.02],  # left wrist
    [-0.28, 0.92, 0.03],  # left hand
    [0.20, 1.45, 0.00],   # right shoulder
    [0.25, 1.20, 0.00],   # right elbow
    [0.27, 0.98, 0.02],   # right wrist
    [0.28, 0.92, 0.03],   # right hand
    [-0.10, 0.95, 0.00],  # left hip
    [-0.10, 0.52, 0.02],  # left knee
    [-0.10, 0.08, 0.00],  # left ankle
    [-0.10, 0.02, 0.10],  # left foot
    [0.10, 0.95, 0.00],   # right hip
    [0.10, 0.52, 0.02],   # right knee
    [0.10, 0.08, 0.00],   # right ankle
    [0.10, 0.02, 0.10],   # right foot
    [0.00, 1.45, 0.00],   # spine at shoulder level
    [-0.29, 0.85, 0.04],  # left hand tip
    [-0.25, 0.90, 0.06],  # left thumb
    [0.29, 0.85, 0.04],   # right hand tip
    [0.25, 0.90, 0.06],   # right thumb
])
_LEGS = np.arange(12, 20)
_UPPER = np.setdiff1d(np.arange(25), np.concatenate([[0], _LEGS]))


@dataclass(frozen=True)
class SyntheticSpec:
    """Speeds are the fraction of the posture transition covered per frame."""

    n_fall: int = 10
    n_other: int = 290
    fall_speed_range: Tuple[float, float] = (0.08, 0.2)
    other_speed_range: Tuple[float, float] = (0.005, 0.02)
    noise_std: float = 0.005
    seed: int = 0
    frame_range: Tuple[int, int] = (64, 80)
    onset_range: Tuple[int, int] = (20, 28)
    lying_fraction: float = 0.3

    def __post_init__(self) -> None:
        if self.n_fall < 0 or self.n_other < 0 or self.n_fall + self.n_other == 0:
            raise ParameterError(f"need a positive sample count, got {self.n_fall} falls / {self.n_other} others")
        for name in ("fall_speed_range", "other_speed_range", "frame_range", "onset_range"):
            low, high = getattr(self, name)
            if low <= 0 or high < low:
                raise ParameterError(f"{name} must be a positive (low, high) pair, got {(low, high)}")
        if self.fall_speed_range[0] <= self.other_speed_range[1]:
            raise ParameterError("falls must be strictly faster than every other transition")
        if self.onset_range[1] >= self.frame_range[0]:
            raise ParameterError("transition onset must fall inside the shortest sequence")
        if self.noise_std < 0 or not 0 <= self.lying_fraction <= 1:
            raise ParameterError("noise_std must be >= 0 and lying_fraction within [0, 1]")

    @property
    def total(self) -> int:
        return self.n_fall + self.n_other


def _rotate_x(points: np.ndarray, angle: np.ndarray, pivot: np.ndarray) -> np.ndarray:
    """Rotate T x V x 3 points about the x axis through ``pivot``, one angle per frame."""
    cos, sin = np.cos(angle)[:, None], np.sin(angle)[:, None]
    shifted = points - pivot
    y, z = shifted[..., 1], shifted[..., 2]
    out = shifted.copy()
    out[..., 1] = y * cos - z * sin
    out[..., 2] = y * sin + z * cos
    return out + pivot


def _trajectory(kind: str, frames: int, rng: np.random.Generator, spec: SyntheticSpec) -> np.ndarray:
    speed_range = spec.fall_speed_range if kind == "fall" else spec.other_speed_range
    speed = rng.uniform(*speed_range)
    onset = int(rng.integers(spec.onset_range[0], spec.onset_range[1] + 1))
    progress = np.clip((np.arange(frames) - onset) * speed, 0.0, 1.0)
    pose = np.repeat(STANDING_POSE[None], frames, axis=0)

    if kind in ("fall", "lie"):
        direction = rng.choice([-1.0, 1.0])
        return _rotate_x(pose, direction * progress * np.pi / 2, np.zeros(3))

    # perturbed standing: upper-body lean about the base of the spine plus a slow sway
    lean = rng.uniform(0.2, 0.6) * progress
    pose[:, _UPPER] = _rotate_x(pose[:, _UPPER], lean, STANDING_POSE[0])
    period = rng.uniform(30.0, 60.0)
    pose[..., 0] += 0.02 * np.sin(2 * np.pi * np.arange(frames) / period)[:, None]
    return pose


def _place(pose: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random yaw about the vertical axis and a random floor position in front of the camera."""
    yaw = rng.uniform(0.0, 2 * np.pi)
    rotation = np.array([[np.cos(yaw), 0.0, np.sin(yaw)], [0.0, 1.0, 0.0], [-np.sin(yaw), 0.0, np.cos(yaw)]])
    offset = np.array([rng.uniform(-1.0, 1.0), rng.uniform(-0.9, -0.7), rng.uniform(2.5, 4.0)])
    return pose @ rotation.T + offset


def synthetic_ids(labels: List[int], rng: np.random.Generator) -> List[SampleId]:
    """Sample ids cycling cameras fastest, then performers, replications and setups."""
    others = [a for a in range(1, DATASETS["ntu60"] + 1) if a != config.FALL_CLASS]
    ids = []
    for i, label in enumerate(labels):
        action = config.FALL_CLASS if label else int(rng.choice(others))
        ids.append(SampleId(
            setup=1 + (i // 240) % 32, camera=1 + i % 3, subject=1 + (i // 3) % 40,
            replication=1 + (i // 120) % 2, action=action,
        ))
    return ids


def synthetic_samples(spec: SyntheticSpec) -> List[RawSample]:
    rng = np.random.default_rng(spec.seed)
    # falls are spread evenly over the three cameras so every view protocol sees both classes
    slots = np.arange(spec.total)
    falls: List[int] = []
    for camera in range(3):
        share = spec.n_fall // 3 + int(camera < spec.n_fall % 3)
        candidates = slots[slots % 3 == camera]
        falls += rng.choice(candidates, size=min(share, candidates.size), replace=False).tolist()
    falls += rng.choice(np.setdiff1d(slots, falls), size=spec.n_fall - len(falls), replace=False).tolist()

    lying = int(round(spec.n_other * spec.lying_fraction))
    others = ["lie"] * lying + ["stand"] * (spec.n_other - lying)
    others = [others[i] for i in rng.permutation(len(others))]
    kinds, rest = [], iter(others)
    fall_set = set(falls)
    for i in range(spec.total):
        kinds.append("fall" if i in fall_set else next(rest))
    ids = synthetic_ids([int(kind == "fall") for kind in kinds], rng)

    samples = []
    for sample_id, kind in zip(ids, kinds):
        frames = int(rng.integers(spec.frame_range[0], spec.frame_range[1] + 1))
        pose = _place(_trajectory(kind, frames, rng, spec), rng)
        if spec.noise_std > 0:
            pose = pose + rng.normal(0.0, spec.noise_std, size=pose.shape)
        # T x V x 3 -> C x T x V x M
        samples.append(RawSample(id=sample_id, data=pose.transpose(2, 0, 1)[..., None]))
    return samples


def generate_synthetic(spec: SyntheticSpec) -> List[Tuple[SkeletonSequence, int]]:
    return [(sample.sequence(), int(sample.id.action == config.FALL_CLASS)) for sample in synthetic_samples(spec)]


def write_synthetic_corpus(spec: SyntheticSpec, directory: Union[str, Path]) -> Path:
    """Write one ``.skeleton`` file per sample plus ``synth.json`` describing the generator settings."""
    samples = synthetic_samples(spec)
    with atomic_directory(directory) as staging:
        for sample in samples:
            write_skeleton_file(staging / sample.id.filename, sample.data)
        atomic_write_json(staging / "synth.json", {"schema_version": 1, "synthetic": asdict(spec)})
    falls = sum(sample.id.action == config.FALL_CLASS for sample in samples)
    LOGGER.info(f"wrote {len(samples)} samples ({falls} falls) to {directory}")
    return Path(directory)
