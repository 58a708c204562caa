"""Binary checkpoint: magic line, one-line JSON header, raw float32 arrays.

Layout::

    MCAF1\\n
    {"config": ..., "n_nodes": ..., "params": [{"name", "shape", "offset"}, ...], ...}\\n
    <little-endian float32 arrays, concatenated in header order>

Offsets are byte offsets into the array section. The vocabulary and the
miner settings used to build the training corpus travel in the header so a
checkpoint alone is enough to encode and explain new functions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .model import ModelConfig, ModelParams, parameter_shapes
from .paths import (DEFAULT_MAX_CONTEXTS, DEFAULT_MAX_PATH_LENGTH, DEFAULT_MAX_PATH_WIDTH,
                    Vocab)

MAGIC = b"MCAF1\n"
_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    params: ModelParams
    vocab: Vocab
    threshold: float = 0.5
    miner: dict = field(default_factory=lambda: {
        "max_path_length": DEFAULT_MAX_PATH_LENGTH,
        "max_path_width": DEFAULT_MAX_PATH_WIDTH,
        "max_contexts": DEFAULT_MAX_CONTEXTS,
        "subsample_seed": 0,
    })

    def to_bytes(self) -> bytes:
        p = self.params
        if p.n_nodes != self.vocab.n_nodes or p.n_paths != self.vocab.n_paths:
            raise CheckpointError("embedding tables and vocabulary sizes disagree")
        entries, chunks, offset = [], [], 0
        for name, arr in p.arrays.items():
            raw = np.ascontiguousarray(arr, dtype=_DTYPE).tobytes()
            entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
            chunks.append(raw)
            offset += len(raw)
        header = {
            "format": 1,
            "config": p.config.to_dict(),
            "n_nodes": p.n_nodes,
            "n_paths": p.n_paths,
            "threshold": float(self.threshold),
            "miner": dict(self.miner),
            "params": entries,
            "data_bytes": offset,
            "vocab": json.loads(self.vocab.to_json()),
        }
        text = json.dumps(header, ensure_ascii=False, separators=(",", ":"), sort_keys=True)
        return MAGIC + text.encode("utf-8") + b"\n" + b"".join(chunks)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Checkpoint":
        if not data.startswith(MAGIC):
            raise CheckpointError("not a checkpoint (bad magic bytes)")
        end = data.find(b"\n", len(MAGIC))
        if end < 0:
            raise CheckpointError("truncated header")
        try:
            header = json.loads(data[len(MAGIC):end].decode("utf-8"))
            config = ModelConfig(**header["config"])
            vocab = Vocab.from_dict(header["vocab"])
            n_nodes, n_paths = int(header["n_nodes"]), int(header["n_paths"])
        except (ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"malformed header: {exc}") from exc
        if (vocab.n_nodes, vocab.n_paths) != (n_nodes, n_paths):
            raise CheckpointError("header vocabulary sizes disagree with the stored vocabulary")
        body = memoryview(data)[end + 1:]
        if len(body) != header.get("data_bytes", -1):
            raise CheckpointError(f"array section is {len(body)} bytes, header says "
                                  f"{header.get('data_bytes')}")
        expected = parameter_shapes(config, n_nodes, n_paths)
        names = [e["name"] for e in header["params"]]
        if names != list(expected):
            raise CheckpointError("parameter list does not match the configured architecture")
        arrays = {}
        for entry in header["params"]:
            name, shape = entry["name"], tuple(entry["shape"])
            if shape != expected[name]:
                raise CheckpointError(f"{name}: stored shape {shape}, config implies {expected[name]}")
            size = int(np.prod(shape)) * _DTYPE.itemsize
            start = entry["offset"]
            if start < 0 or start + size > len(body):
                raise CheckpointError(f"{name}: offset outside the array section")
            arrays[name] = np.frombuffer(body[start:start + size], dtype=_DTYPE) \
                .reshape(shape).astype(np.float32)
        return cls(ModelParams(config, arrays), vocab, float(header.get("threshold", 0.5)),
                   dict(header.get("miner", {})))


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    Path(path).write_bytes(ckpt.to_bytes())


def load_checkpoint(path) -> Checkpoint:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read {path}: {exc}") from exc
    return Checkpoint.from_bytes(data)
