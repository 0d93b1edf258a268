__all__ = [
    "Command",
    "arg",
    "SkelFallError",
    "ConfigurationError",
    "DimensionError",
    "EmptySampleError",
    "FormatError",
    "LabelError",
    "MissingFileError",
    "ParameterError",
    "SchemaError",
    "TopologyError",
    "TopologyMismatchError",
    "TrainingAbortedError",
    "UndefinedMetricError",
    "Tensor",
    "Parameter",
    "set_default_dtype",
    "get_default_dtype",
    "SkeletonTopology",
    "AdjacencySet",
    "ntu_topology",
    "uwa3d_topology",
    "load_topology",
    "write_topology",
    "build_adjacency",
    "SkeletonSequence",
    "NormStats",
    "prepare_static",
    "prepare_sample",
    "ModelConfig",
    "FallDetectorNet",
    "count_params",
    "estimate_flops",
    "parameter_checksum",
    "Checkpoint",
    "save_checkpoint",
    "load_checkpoint",
    "SampleId",
    "DatasetSplit",
    "parse_skeleton_file",
    "write_skeleton_file",
    "binarize_label",
    "make_split",
    "SyntheticSpec",
    "generate_synthetic",
    "write_synthetic_corpus",
    "SkeletonDataset",
    "TrainConfig",
    "lr_at",
    "train",
    "MetricsReport",
    "evaluate",
    "ProfileReport",
    "profile",
    "RunConfig",
    "load_run_config",
    "apply_overrides",
    "resolve_topology",
    "atomic_write_json",
    "atomic_write_text",
]

from ._commands import Command, arg
from ._errors import (
    ConfigurationError,
    DimensionError,
    EmptySampleError,
    FormatError,
    LabelError,
    MissingFileError,
    ParameterError,
    SchemaError,
    SkelFallError,
    TopologyError,
    TopologyMismatchError,
    TrainingAbortedError,
    UndefinedMetricError,
)
from ._tensor import Parameter, Tensor, get_default_dtype, set_default_dtype
from ._graph import AdjacencySet, SkeletonTopology, build_adjacency, load_topology, ntu_topology, uwa3d_topology, write_topology
from ._preprocess import NormStats, SkeletonSequence, prepare_sample, prepare_static
from ._model import FallDetectorNet, ModelConfig, count_params, estimate_flops, parameter_checksum
from ._checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from ._data import DatasetSplit, SampleId, binarize_label, make_split, parse_skeleton_file, write_skeleton_file
from ._synthetic import SyntheticSpec, generate_synthetic, write_synthetic_corpus
from ._dataset import SkeletonDataset
from ._train import TrainConfig, lr_at, train
from ._metrics import MetricsReport, evaluate
from ._profile import ProfileReport, profile
from ._settings import RunConfig, apply_overrides, load_run_config, resolve_topology
from ._files import atomic_write_json, atomic_write_text
