from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src import LOGGER, config
from src.modules.utils._data import RawSample, SampleId, binarize_label, iter_corpus, parse_skeleton_file
from src.modules.utils._errors import EmptySampleError, MissingFileError, ParameterError
from src.modules.utils._graph import SkeletonTopology, ntu_topology
from src.modules.utils._preprocess import (
    NormStats,
    SkeletonSequence,
    compute_norm_stats,
    prepare_sample,
    prepare_static,
    sample_rng,
)

Batch = Tuple[np.ndarray, np.ndarray, np.ndarray]


class SkeletonDataset:
    """
    Labelled skeleton sequences with the deterministic preprocessing stages
    (empty-frame removal, view alignment, body padding) applied once at load.
    """

    def __init__(
        self,
        samples: Sequence[RawSample],
        topology: Optional[SkeletonTopology] = None,
        dataset: str = "ntu60",
        bodies: int = 2,
    ) -> None:
        self.topology = topology or ntu_topology()
        self.dataset = dataset
        self.bodies = bodies
        self.ids: List[SampleId] = [sample.id for sample in samples]
        self.labels = np.asarray([binarize_label(sample.action_class, dataset) for sample in samples], dtype=np.int64)
        self._index = {sample_id: i for i, sample_id in enumerate(self.ids)}
        if len(self._index) != len(self.ids):
            raise ParameterError("duplicate sample ids in dataset")
        self._static: List[SkeletonSequence] = self._map(
            lambda sample: prepare_static(sample.sequence(), self.topology, bodies), samples
        )

    @staticmethod
    def _map(func, items: Sequence) -> list:
        if config.THREADS <= 1 or len(items) < 2:
            return [func(item) for item in items]
        with ThreadPoolExecutor(max_workers=config.THREADS) as pool:
            return list(pool.map(func, items))

    @classmethod
    def from_directory(
        cls,
        directory: Union[str, Path],
        topology: Optional[SkeletonTopology] = None,
        dataset: str = "ntu60",
        bodies: int = 2,
    ) -> "SkeletonDataset":
        topology = topology or ntu_topology()
        paths = list(iter_corpus(directory))
        if not paths:
            raise MissingFileError(f"no skeleton files in {directory}")

        def load(path: Path) -> Optional[RawSample]:
            try:
                return parse_skeleton_file(path, topology.joint_count)
            except EmptySampleError as exc:
                LOGGER.warning(f"skipping empty sample: {exc}")
                return None

        samples = [sample for sample in cls._map(load, paths) if sample is not None]
        LOGGER.info(f"loaded {len(samples)} samples from {directory}")
        return cls(samples, topology, dataset, bodies)

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def joint_count(self) -> int:
        return self.topology.joint_count

    def sequence(self, index: int) -> SkeletonSequence:
        return self._static[index]

    def indices(self, ids: Iterable[SampleId]) -> List[int]:
        try:
            return [self._index[sample_id] for sample_id in ids]
        except KeyError as exc:
            raise MissingFileError(f"sample {exc.args[0]} is not part of the dataset") from None

    def norm_stats(self, indices: Optional[Sequence[int]] = None) -> NormStats:
        indices = range(len(self)) if indices is None else indices
        return compute_norm_stats(self._static[i] for i in indices)

    def batch(
        self,
        indices: Sequence[int],
        stats: NormStats,
        max_frames: int = 300,
        window: int = 250,
        seed: int = 0,
        epoch: int = 0,
        training: bool = False,
    ) -> Batch:
        """
        Stack N x C x T x V x M joint and velocity arrays. Training batches draw
        a random window per sample from ``sample_rng(seed, index, epoch)``;
        evaluation batches always start at frame 0.
        """
        if window > max_frames:
            raise ParameterError(f"window {window} exceeds max_frames {max_frames}")
        inputs = [
            prepare_sample(
                self._static[i], stats, int(self.labels[i]), max_frames, window,
                sample_rng(seed, i, epoch) if training else None,
            )
            for i in indices
        ]
        return (
            np.stack([item.joints for item in inputs]),
            np.stack([item.velocity for item in inputs]),
            np.asarray([item.label for item in inputs], dtype=np.int64),
        )
