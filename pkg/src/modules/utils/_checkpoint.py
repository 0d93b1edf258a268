import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from src import LOGGER
from src.modules.utils._errors import FormatError, MissingFileError
from src.modules.utils._files import atomic_write_bytes
from src.modules.utils._graph import SkeletonTopology
from src.modules.utils._model import FallDetectorNet, ModelConfig
from src.modules.utils._preprocess import NormStats

MAGIC = b"SKFLCKPT"
VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    net: FallDetectorNet
    norm_stats: NormStats
    config: Dict[str, Any] = field(default_factory=dict)
    epoch: Optional[int] = None

    @property
    def topology(self) -> SkeletonTopology:
        return self.net.topology


def _topology_to_dict(topology: SkeletonTopology) -> Dict[str, Any]:
    return {
        "joint_count": topology.joint_count,
        "edges": [list(edge) for edge in topology.edges],
        "center_joint": topology.center_joint,
        "roles": dict(topology.roles),
    }


def _topology_from_dict(payload: Dict[str, Any]) -> SkeletonTopology:
    return SkeletonTopology(
        joint_count=int(payload["joint_count"]),
        edges=tuple((int(i), int(j)) for i, j in payload["edges"]),
        center_joint=int(payload["center_joint"]),
        roles={k: int(v) for k, v in payload.get("roles", {}).items()},
    )


def save_checkpoint(
    path: Union[str, Path],
    net: FallDetectorNet,
    norm_stats: NormStats,
    config: Optional[Dict[str, Any]] = None,
    epoch: Optional[int] = None,
) -> Path:
    """
    Write parameters, batch-norm running statistics, normalization statistics
    and the effective run configuration into one binary file.

    Layout: magic, u32 version, u64 header length, UTF-8 JSON header, then the
    raw little-endian arrays back to back in header order.
    """
    arrays = [(name, "parameter", param.data) for name, param in net.named_parameters()]
    arrays += [(name, "buffer", array) for name, array in net.named_buffers()]
    dtype = np.dtype(arrays[0][2].dtype).newbyteorder("<")

    tensors: List[Dict[str, Any]] = []
    chunks: List[bytes] = []
    offset = 0
    for name, kind, array in arrays:
        raw = np.ascontiguousarray(array, dtype=dtype).tobytes()
        tensors.append({"name": name, "kind": kind, "shape": list(array.shape), "offset": offset, "count": int(array.size)})
        chunks.append(raw)
        offset += len(raw)

    header = {
        "model": net.config.to_dict(),
        "topology": _topology_to_dict(net.topology),
        "norm_stats": norm_stats.to_dict(),
        "config": config or {},
        "epoch": epoch,
        "dtype": dtype.str,
        "tensors": tensors,
    }
    encoded = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = _PREAMBLE.pack(MAGIC, VERSION, len(encoded)) + encoded + b"".join(chunks)
    path = atomic_write_bytes(path, payload)
    LOGGER.debug(f"checkpoint written to {path} ({len(tensors)} tensors, {len(payload)} bytes)")
    return path


def read_header(path: Union[str, Path]) -> Dict[str, Any]:
    header, _ = _read(path)
    return header


def _read(path: Union[str, Path]):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"checkpoint not found: {path}")
    blob = path.read_bytes()
    if len(blob) < _PREAMBLE.size:
        raise FormatError("truncated checkpoint preamble", str(path))
    magic, version, length = _PREAMBLE.unpack_from(blob)
    if magic != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)", str(path))
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}", str(path))
    start = _PREAMBLE.size
    try:
        header = json.loads(blob[start:start + length].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint header: {exc}", str(path)) from None
    return header, memoryview(blob)[start + length:]


def load_checkpoint(path: Union[str, Path]) -> Checkpoint:
    header, payload = _read(path)
    dtype = np.dtype(header["dtype"])
    net = FallDetectorNet(ModelConfig.from_dict(header["model"]), _topology_from_dict(header["topology"]))
    params = dict(net.named_parameters())
    buffers = dict(net.named_buffers())
    expected = set(params) | set(buffers)
    stored = {entry["name"] for entry in header["tensors"]}
    if stored != expected:
        raise FormatError(f"checkpoint tensors do not match the network: {sorted(stored ^ expected)[:5]}", str(path))

    for entry in header["tensors"]:
        nbytes = entry["count"] * dtype.itemsize
        raw = payload[entry["offset"]:entry["offset"] + nbytes]
        if len(raw) != nbytes:
            raise FormatError(f"truncated payload for {entry['name']}", str(path))
        array = np.frombuffer(raw, dtype=dtype).reshape(entry["shape"])
        target = params[entry["name"]].data if entry["kind"] == "parameter" else buffers[entry["name"]]
        if target.shape != array.shape:
            raise FormatError(f"{entry['name']}: stored shape {array.shape}, network expects {target.shape}", str(path))
        target[...] = array

    return Checkpoint(
        net=net.eval(),
        norm_stats=NormStats.from_dict(header["norm_stats"]),
        config=header.get("config", {}),
        epoch=header.get("epoch"),
    )
