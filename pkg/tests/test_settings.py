import json
from pathlib import Path

import pytest

from src.modules.utils import (
    MissingFileError,
    ModelConfig,
    ParameterError,
    RunConfig,
    SchemaError,
    TrainConfig,
    apply_overrides,
    load_run_config,
    resolve_topology,
    write_topology,
)
from src.modules.utils._graph import uwa3d_topology

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def write(tmp_path, payload):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(payload) if not isinstance(payload, str) else payload)
    return path


class TestRunConfig:
    def test_default_file_matches_defaults(self):
        cfg = load_run_config(CONFIGS / "default.json")
        assert cfg.model == ModelConfig()
        assert cfg.train == TrainConfig()
        assert cfg.data.split == "xsub60"

    def test_desk_file(self):
        cfg = load_run_config(CONFIGS / "desk.json")
        assert cfg.model.embed_channels == 8 and cfg.model.bodies == 1
        assert cfg.train.window == 48 and cfg.train.max_frames == 64
        assert cfg.train.lr0 == 0.05

    def test_round_trip(self):
        cfg = RunConfig()
        assert RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg

    def test_partial_sections(self, tmp_path):
        cfg = load_run_config(write(tmp_path, {"schema_version": 1, "train": {"epochs": 3}}))
        assert cfg.train.epochs == 3 and cfg.train.batch_size == 64

    @pytest.mark.parametrize(
        "payload",
        [
            {"train": {}},
            {"schema_version": 2},
            {"schema_version": 1, "optimizer": {}},
            {"schema_version": 1, "train": {"epochz": 3}},
            {"schema_version": 1, "train": {"epochs": "30"}},
            {"schema_version": 1, "train": {"balanced": 1}},
            {"schema_version": 1, "model": {"blocks": 3}},
            {"schema_version": 1, "model": "wide"},
            {"schema_version": 1, "train": {"epochs": 0}},
            {"schema_version": 1, "model": {"temporal_kernel": 4}},
            {"schema_version": 1, "data": {"split": "xsub"}},
            [1, 2],
        ],
    )
    def test_schema_errors(self, tmp_path, payload):
        with pytest.raises(SchemaError):
            load_run_config(write(tmp_path, payload))

    def test_invalid_json(self, tmp_path):
        with pytest.raises(SchemaError):
            load_run_config(write(tmp_path, "{not json"))

    def test_missing(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_run_config(tmp_path / "absent.json")

    def test_float_accepts_integers(self, tmp_path):
        cfg = load_run_config(write(tmp_path, {"schema_version": 1, "train": {"lr0": 1}}))
        assert cfg.train.lr0 == 1


class TestOverrides:
    def test_flags_win(self):
        cfg = apply_overrides(RunConfig(), seed=7, epochs=2, lr=0.01, hops=2, split="xsub60", window=None)
        assert (cfg.train.seed, cfg.train.epochs, cfg.train.lr0) == (7, 2, 0.01)
        assert cfg.model.hops == 2
        assert cfg.data.split == "xsub60"
        assert cfg.train.window == 250

    def test_unknown_flag(self):
        with pytest.raises(ParameterError):
            apply_overrides(RunConfig(), momentum=0.5)

    def test_validated(self):
        with pytest.raises(ParameterError):
            apply_overrides(RunConfig(), window=400)

    def test_with_joints(self):
        cfg = RunConfig().with_joints(15)
        assert cfg.model.joints == 15
        assert RunConfig().with_joints(25) == RunConfig()


class TestResolveTopology:
    def test_builtin(self):
        assert resolve_topology(None).joint_count == 25
        assert resolve_topology(None, "uwa3d").joint_count == 15

    def test_file_wins(self, tmp_path):
        path = tmp_path / "uwa.txt"
        write_topology(path, uwa3d_topology())
        assert resolve_topology(str(path), "ntu60") == uwa3d_topology()
