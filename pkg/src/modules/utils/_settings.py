import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, Optional, Union

from src.modules.utils._data import DATASETS, SPLITS
from src.modules.utils._errors import ConfigurationError, MissingFileError, ParameterError, SchemaError
from src.modules.utils._graph import SkeletonTopology, load_topology, ntu_topology, uwa3d_topology
from src.modules.utils._model import ModelConfig
from src.modules.utils._train import TrainConfig

SCHEMA_VERSION = 1

# flag name -> (section, key)
OVERRIDES = {
    "seed": ("train", "seed"),
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "lr": ("train", "lr0"),
    "window": ("train", "window"),
    "hops": ("model", "hops"),
    "data_dir": ("data", "data_dir"),
    "split": ("data", "split"),
    "topology": ("data", "topology"),
    "dataset": ("data", "dataset"),
}


@dataclass(frozen=True)
class DataConfig:
    data_dir: Optional[str] = None
    dataset: str = "ntu60"
    split: str = "xview60"
    topology: Optional[str] = None

    def __post_init__(self) -> None:
        if self.dataset not in DATASETS:
            raise ParameterError(f"data.dataset must be one of {sorted(DATASETS)}, got {self.dataset!r}")
        if self.split not in SPLITS:
            raise ParameterError(f"data.split must be one of {', '.join(SPLITS)}, got {self.split!r}")


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "model": self.model.to_dict(),
            "train": self.train.to_dict(),
            "data": asdict(self.data),
        }

    def with_joints(self, joints: int) -> "RunConfig":
        """Match the model to a topology of ``joints`` joints."""
        if joints == self.model.joints:
            return self
        return replace(self, model=replace(self.model, joints=joints))

    @classmethod
    def from_dict(cls, payload: Dict[str, Any]) -> "RunConfig":
        if not isinstance(payload, dict):
            raise SchemaError("run configuration must be a JSON object")
        version = payload.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        unknown = set(payload) - {"schema_version", "model", "train", "data"}
        if unknown:
            raise SchemaError(f"unknown top-level keys: {', '.join(sorted(unknown))}")
        sections = {}
        for name, section_cls in (("model", ModelConfig), ("train", TrainConfig), ("data", DataConfig)):
            values = payload.get(name, {})
            if not isinstance(values, dict):
                raise SchemaError(f"section {name!r} must be an object")
            _check_section(name, values, section_cls())
            try:
                sections[name] = section_cls(**values)
            except (ParameterError, ConfigurationError) as exc:
                raise SchemaError(f"{name}: {exc.message}") from None
        return cls(**sections)


def _check_section(name: str, values: Dict[str, Any], defaults: Any) -> None:
    known = {f.name: getattr(defaults, f.name) for f in fields(defaults)}
    unknown = set(values) - set(known)
    if unknown:
        raise SchemaError(f"unknown keys in {name}: {', '.join(sorted(unknown))}")
    for key, value in values.items():
        default = known[key]
        where = f"{name}.{key}"
        if isinstance(default, bool):
            ok = isinstance(value, bool)
        elif isinstance(default, int):
            ok = isinstance(value, int) and not isinstance(value, bool)
        elif isinstance(default, float):
            ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        elif isinstance(default, tuple):
            ok = isinstance(value, list)
        else:
            ok = value is None or isinstance(value, str)
        if not ok:
            raise SchemaError(f"{where} has the wrong type ({type(value).__name__})")


def load_run_config(path: Union[str, Path]) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"config file not found: {path}")
    try:
        payload = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON: {exc}") from None
    return RunConfig.from_dict(payload)


def apply_overrides(cfg: RunConfig, **overrides: Any) -> RunConfig:
    """Command-line values win over the file; ``None`` means the flag was not given."""
    sections = {"model": {}, "train": {}, "data": {}}
    for flag, value in overrides.items():
        if value is None:
            continue
        if flag not in OVERRIDES:
            raise ParameterError(f"unknown override {flag!r}")
        section, key = OVERRIDES[flag]
        sections[section][key] = value
    return RunConfig(
        model=replace(cfg.model, **sections["model"]),
        train=replace(cfg.train, **sections["train"]),
        data=replace(cfg.data, **sections["data"]),
    )


def resolve_topology(path: Optional[str], dataset: str = "ntu60") -> SkeletonTopology:
    """An explicit edge-list file wins; otherwise the built-in skeleton of the dataset."""
    if path:
        return load_topology(path)
    return uwa3d_topology() if dataset == "uwa3d" else ntu_topology()
