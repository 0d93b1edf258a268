import json
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from src import LOGGER, config
from src.modules.utils._errors import EmptySampleError, FormatError, LabelError, MissingFileError, ParameterError
from src.modules.utils._files import atomic_write_text
from src.modules.utils._preprocess import SkeletonSequence

PathLike = Union[str, Path]

MAX_BODIES = 2
SKELETON_SUFFIX = ".skeleton"
_ID_PATTERN = re.compile(r"^S(\d{3})C(\d{3})P(\d{3})R(\d{3})A(\d{3})$")
_PROTOCOLS = Path(__file__).resolve().parents[2] / "data" / "ntu_protocols.json"

# number of action classes and the fall class of each supported corpus
DATASETS: Dict[str, int] = {"ntu60": 60, "ntu120": 120, "uwa3d": 30}
UWA3D_FALL_CLASS = 8

SPLITS = ("xsub60", "xview60", "xsub120", "xset120", "uwa_val3", "uwa_val4")

BODY_INFO_KEYS = (
    "bodyID", "clippedEdges", "handLeftConfidence", "handLeftState", "handRightConfidence",
    "handRightState", "isRestricted", "leanX", "leanY", "trackingState",
)
JOINT_INFO_KEYS = (
    "x", "y", "z", "depthX", "depthY", "colorX", "colorY",
    "orientationW", "orientationX", "orientationY", "orientationZ", "trackingState",
)


@dataclass(frozen=True, order=True)
class SampleId:
    """``SsssCcccPpppRrrrAaaa``: setup, camera, performer, replication, action."""

    setup: int
    camera: int
    subject: int
    replication: int
    action: int

    @classmethod
    def parse(cls, name: Union[str, "SampleId"]) -> "SampleId":
        if isinstance(name, SampleId):
            return name
        stem = Path(name).name
        if stem.endswith(SKELETON_SUFFIX):
            stem = stem[: -len(SKELETON_SUFFIX)]
        match = _ID_PATTERN.match(stem)
        if not match:
            raise FormatError(f"sample id {name!r} does not match SsssCcccPpppRrrrAaaa")
        return cls(*(int(group) for group in match.groups()))

    def __str__(self) -> str:
        return f"S{self.setup:03d}C{self.camera:03d}P{self.subject:03d}R{self.replication:03d}A{self.action:03d}"

    @property
    def filename(self) -> str:
        return f"{self}{SKELETON_SUFFIX}"


@dataclass(frozen=True)
class RawSample:
    """One parsed skeleton file; ``data`` is C x T x V x M in meters."""

    id: SampleId
    data: np.ndarray
    body_ids: Tuple[str, ...] = ()

    @property
    def action_class(self) -> int:
        return self.id.action

    @property
    def subject_id(self) -> int:
        return self.id.subject

    @property
    def camera_id(self) -> int:
        return self.id.camera

    @property
    def setup_id(self) -> int:
        return self.id.setup

    def sequence(self) -> SkeletonSequence:
        return SkeletonSequence.from_array(self.data)


class _Lines:
    """Numbered reader over the non-empty lines of a text file."""

    def __init__(self, path: Path) -> None:
        self.path = str(path)
        self._lines = path.read_text().splitlines()
        self.number = 0

    def next(self, what: str) -> List[str]:
        while self.number < len(self._lines):
            self.number += 1
            fields = self._lines[self.number - 1].split()
            if fields:
                return fields
        raise FormatError(f"unexpected end of file, expected {what}", self.path, self.number)

    def integer(self, what: str) -> int:
        fields = self.next(what)
        if len(fields) != 1:
            raise FormatError(f"expected a single integer {what}, got {' '.join(fields)!r}", self.path, self.number)
        try:
            return int(fields[0])
        except ValueError:
            raise FormatError(f"cannot parse {what} {fields[0]!r}", self.path, self.number) from None

    def floats(self, count: int, what: str) -> np.ndarray:
        fields = self.next(what)
        if len(fields) < count:
            raise FormatError(f"{what} has {len(fields)} fields, expected {count}", self.path, self.number)
        try:
            return np.asarray([float(value) for value in fields[:count]], dtype=np.float32)
        except ValueError:
            raise FormatError(f"unparsable number in {what}", self.path, self.number) from None


def _motion_energy(track: np.ndarray, seen: np.ndarray) -> float:
    """Summed joint displacement between consecutive frames where the body is tracked."""
    both = seen[1:] & seen[:-1]
    if not both.any():
        return 0.0
    steps = np.linalg.norm(track[1:] - track[:-1], axis=-1).sum(axis=-1)
    return float(steps[both].sum())


def parse_skeleton_file(path: PathLike, joints: int = 25) -> RawSample:
    """
    Read an NTU-format ``.skeleton`` text file.

    Bodies are tracked by ``bodyID``. When more than two appear, the two with
    the highest motion energy are kept, in order of first appearance.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"skeleton file not found: {path}")
    sample_id = SampleId.parse(path.name)
    lines = _Lines(path)
    frames = lines.integer("frame count")
    if frames < 1:
        raise EmptySampleError(f"declares {frames} frames", str(path), lines.number)

    tracks: Dict[str, np.ndarray] = {}
    seen: Dict[str, np.ndarray] = {}
    for t in range(frames):
        bodies = lines.integer(f"body count of frame {t}")
        if bodies < 0:
            raise FormatError(f"negative body count {bodies}", lines.path, lines.number)
        for _ in range(bodies):
            info = lines.next("body info line")
            if len(info) != len(BODY_INFO_KEYS):
                raise FormatError(
                    f"body info line has {len(info)} fields, expected {len(BODY_INFO_KEYS)}", lines.path, lines.number
                )
            body = info[0]
            count = lines.integer("joint count")
            if count != joints:
                raise FormatError(f"joint count {count}, expected {joints}", lines.path, lines.number)
            if body not in tracks:
                tracks[body] = np.zeros((frames, joints, 3), dtype=np.float32)
                seen[body] = np.zeros(frames, dtype=bool)
            for v in range(joints):
                tracks[body][t, v] = lines.floats(len(JOINT_INFO_KEYS), f"joint {v}")[:3]
            seen[body][t] = True

    order = list(tracks)
    if len(order) > MAX_BODIES:
        energy = {body: _motion_energy(tracks[body], seen[body]) for body in order}
        keep = set(sorted(order, key=lambda body: -energy[body])[:MAX_BODIES])
        LOGGER.debug(f"{path.name}: keeping 2 of {len(order)} bodies by motion energy")
        order = [body for body in order if body in keep]

    data = np.zeros((3, frames, joints, max(1, len(order))), dtype=np.float64)
    for m, body in enumerate(order):
        data[..., m] = tracks[body].transpose(2, 0, 1)
    return RawSample(id=sample_id, data=data, body_ids=tuple(order))


def write_skeleton_file(path: PathLike, data: np.ndarray, body_ids: Optional[Sequence[str]] = None) -> Path:
    """
    Serialize a C x T x V x M array in the NTU text format. Bodies whose
    coordinates are all zero in a frame are omitted from that frame.
    """
    data = np.asarray(data, dtype=np.float32)
    _, frames, joints, bodies = data.shape
    body_ids = list(body_ids) if body_ids is not None else [str(72057594037900000 + m) for m in range(bodies)]
    out = [str(frames)]
    for t in range(frames):
        present = [m for m in range(bodies) if np.any(data[:, t, :, m] != 0)]
        out.append(str(len(present)))
        for m in present:
            out.append(f"{body_ids[m]} 0 0 0 0 0 0 0 0 2")
            out.append(str(joints))
            for v in range(joints):
                x, y, z = (f"{value:.9g}" for value in data[:, t, v, m])
                out.append(f"{x} {y} {z} 0 0 0 0 0 0 0 0 2")
    return atomic_write_text(path, "\n".join(out) + "\n")


def fall_class(dataset: str) -> int:
    if dataset not in DATASETS:
        raise ParameterError(f"unknown dataset {dataset!r}, expected one of {sorted(DATASETS)}")
    return UWA3D_FALL_CLASS if dataset == "uwa3d" else config.FALL_CLASS


def binarize_label(action_class: int, dataset: str = "ntu60") -> int:
    """1 for the dataset's fall class, 0 for every other action."""
    target = fall_class(dataset)
    if not 1 <= action_class <= DATASETS[dataset]:
        raise LabelError(f"action class {action_class} outside 1..{DATASETS[dataset]} for {dataset}")
    return int(action_class == target)


@lru_cache(maxsize=1)
def _protocols() -> Dict[str, list]:
    if not _PROTOCOLS.is_file():
        raise MissingFileError(f"protocol definitions not found: {_PROTOCOLS}")
    return json.loads(_PROTOCOLS.read_text())


def _is_train(name: str, sample: SampleId) -> Optional[bool]:
    """True/False for train/test, None when the protocol leaves the sample out."""
    protocols = _protocols()
    if name == "xsub60":
        return sample.subject in protocols["xsub60_train_subjects"]
    if name == "xsub120":
        return sample.subject in protocols["xsub120_train_subjects"]
    if name == "xview60":
        return sample.camera in protocols["xview60_train_cameras"]
    if name == "xset120":
        return sample.setup % 2 == 0
    test_view = 3 if name == "uwa_val3" else 4
    if sample.camera in protocols["uwa_train_views"]:
        return True
    if sample.camera == test_view:
        return False
    return None


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    train_ids: Tuple[SampleId, ...]
    test_ids: Tuple[SampleId, ...]

    def export(self, directory: PathLike) -> Tuple[Path, Path]:
        """Write ``train.txt`` / ``test.txt`` with one sample id per line."""
        directory = Path(directory)
        return (
            atomic_write_text(directory / "train.txt", "".join(f"{i}\n" for i in self.train_ids)),
            atomic_write_text(directory / "test.txt", "".join(f"{i}\n" for i in self.test_ids)),
        )


def make_split(name: str, all_ids: Iterable[Union[str, SampleId]]) -> DatasetSplit:
    if name not in SPLITS:
        raise ParameterError(f"unknown split {name!r}, expected one of {', '.join(SPLITS)}")
    train, test = [], []
    for sample in sorted({SampleId.parse(i) for i in all_ids}):
        side = _is_train(name, sample)
        if side is True:
            train.append(sample)
        elif side is False:
            test.append(sample)
    return DatasetSplit(name=name, train_ids=tuple(train), test_ids=tuple(test))


def iter_corpus(directory: PathLike) -> Iterator[Path]:
    """Skeleton files of a corpus directory whose names are valid sample ids, sorted."""
    directory = Path(directory)
    if not directory.is_dir():
        raise MissingFileError(f"data directory not found: {directory}")
    for path in sorted(directory.glob(f"*{SKELETON_SUFFIX}")):
        if _ID_PATTERN.match(path.name[: -len(SKELETON_SUFFIX)]):
            yield path
        else:
            LOGGER.warning(f"skipping {path.name}: not a sample id")
