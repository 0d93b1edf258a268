import struct

import numpy as np
import pytest

from src.modules.utils import FallDetectorNet, FormatError, MissingFileError, NormStats, load_checkpoint, parameter_checksum, save_checkpoint
from src.modules.utils._checkpoint import MAGIC, read_header


@pytest.fixture
def trained(tiny_config, path_topology):
    net = FallDetectorNet(tiny_config, path_topology)
    rng = np.random.default_rng(0)
    shape = (4, 3, 8, 5, 1)
    net(rng.standard_normal(shape), rng.standard_normal(shape))
    for param in net.parameters():
        param.data += rng.normal(0, 0.01, param.shape)
    return net.eval()


@pytest.fixture
def stats():
    return NormStats(mean=np.array([0.1, -0.2, 0.3]), std=np.array([1.5, 0.5, 2.0]))


class TestCheckpoint:
    def test_logits_bit_identical(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats, {"seed": 3}, epoch=4)
        restored = load_checkpoint(path)
        rng = np.random.default_rng(1)
        joints, velocity = rng.standard_normal((2, 2, 3, 8, 5, 1))
        assert np.array_equal(trained(joints, velocity).data, restored.net(joints, velocity).data)
        assert parameter_checksum(trained) == parameter_checksum(restored.net)

    def test_metadata(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats, {"seed": 3}, epoch=4)
        restored = load_checkpoint(path)
        assert np.array_equal(restored.norm_stats.mean, stats.mean)
        assert np.array_equal(restored.norm_stats.std, stats.std)
        assert restored.config == {"seed": 3}
        assert restored.epoch == 4
        assert restored.topology == trained.topology
        assert restored.net.config == trained.config
        assert not restored.net.training

    def test_layout(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats)
        blob = path.read_bytes()
        magic, version, length = struct.unpack_from("<8sIQ", blob)
        assert magic == MAGIC and version == 1
        header = read_header(path)
        kinds = [entry["kind"] for entry in header["tensors"]]
        assert kinds == sorted(kinds, key=lambda kind: kind != "parameter")
        last = header["tensors"][-1]
        itemsize = np.dtype(header["dtype"]).itemsize
        assert len(blob) == 20 + length + last["offset"] + last["count"] * itemsize

    def test_missing(self, tmp_path):
        with pytest.raises(MissingFileError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_bad_magic(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats)
        path.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
        with pytest.raises(FormatError, match="magic"):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats)
        blob = bytearray(path.read_bytes())
        struct.pack_into("<I", blob, 8, 99)
        path.write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="version"):
            load_checkpoint(path)

    def test_tensor_name_mismatch(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats)
        path.write_bytes(path.read_bytes().replace(b'"head.weight"', b'"head.weighx"', 1))
        with pytest.raises(FormatError, match="do not match"):
            load_checkpoint(path)

    def test_truncated_payload(self, tmp_path, trained, stats):
        path = save_checkpoint(tmp_path / "net.ckpt", trained, stats)
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(FormatError, match="truncated"):
            load_checkpoint(path)
