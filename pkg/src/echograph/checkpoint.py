"""Self-describing binary checkpoints.

Layout: magic ``EGCP`` | u32 format version | u64 header length | UTF-8 JSON
header | raw little-endian float64 payload. The header carries the training
config snapshot, normalization stats, the relation vocabulary, the step
counter, and one (name, shape, offset) record per parameter; the payload is
the parameters' flat data concatenated in header order. Saves are atomic
(write to a temp file, then rename), and loads verify magic, version, and
total size before touching any state.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .layout import NormStats
from .model import SceneModel
from .scene_graph import RelationVocab

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "checkpoint_hash", "Checkpoint"]

_MAGIC = b"EGCP"
_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    model: SceneModel
    stats: NormStats
    step: int
    path: Path

    @property
    def config(self) -> TrainConfig:
        return self.model.config


def save_checkpoint(
    path: str | Path,
    model: SceneModel,
    stats: NormStats,
    step: int,
) -> Path:
    path = Path(path)
    values = model.parameter_values()
    records = []
    offset = 0
    for name in sorted(values):
        arr = values[name]
        records.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format_version": _VERSION,
        "config": model.config.to_dict(),
        "norm_stats": json.loads(stats.to_json()),
        "vocab": {
            "names": list(model.vocab.names),
            "inverses": dict(model.vocab.inverses),
        },
        "step": int(step),
        "params": records,
        "payload_bytes": offset,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", _VERSION))
        f.write(struct.pack("<Q", len(header_bytes)))
        f.write(header_bytes)
        for name in sorted(values):
            f.write(values[name].astype("<f8", copy=False).tobytes(order="C"))
    os.replace(tmp, path)
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"cannot read checkpoint: {e}") from e
    if len(blob) < 16 or blob[:4] != _MAGIC:
        raise CheckpointError("corrupt checkpoint: bad magic")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != _VERSION:
        raise CheckpointError(f"checkpoint format v{version} not supported")
    (header_len,) = struct.unpack_from("<Q", blob, 8)
    header_end = 16 + header_len
    if len(blob) < header_end:
        raise CheckpointError("corrupt checkpoint: truncated header")
    try:
        header = json.loads(blob[16:header_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"corrupt checkpoint: unreadable header ({e})") from e
    expected = header_end + header["payload_bytes"]
    if len(blob) != expected:
        raise CheckpointError(
            f"corrupt checkpoint: {len(blob)} bytes, expected {expected}"
        )

    config = TrainConfig.from_dict(header["config"])
    vocab = RelationVocab(
        names=tuple(header["vocab"]["names"]),
        inverses=dict(header["vocab"]["inverses"]),
    )
    model = SceneModel(config, vocab=vocab)
    values = {}
    for rec in header["params"]:
        shape = tuple(rec["shape"])
        size = int(np.prod(shape)) if shape else 1
        start = header_end + rec["offset"]
        arr = np.frombuffer(blob, dtype="<f8", count=size, offset=start)
        values[rec["name"]] = arr.reshape(shape).copy()
    model.load_parameter_values(values)
    stats = NormStats.from_json(json.dumps(header["norm_stats"]))
    return Checkpoint(model=model, stats=stats, step=int(header["step"]), path=path)


def checkpoint_hash(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
