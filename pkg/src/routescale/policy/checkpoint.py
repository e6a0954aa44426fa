"""Checkpoint format: ``<stem>.json`` manifest plus ``<stem>.bin`` raw float32 (little-endian).

The manifest holds the model config and an ordered tensor list with shapes
and byte offsets; spectral power-iteration blocks are stored alongside the
weights so a resumed run continues the same estimate.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .config import ModelConfig
from .model import RoutingPolicy

FORMAT = "routescale-checkpoint/1"


class CheckpointError(ValueError):
    pass


def _paths(path):
    path = Path(path)
    stem = path.with_suffix("") if path.suffix in (".json", ".bin") else path
    return stem.with_suffix(".json"), stem.with_suffix(".bin")


def save_checkpoint(policy: RoutingPolicy, path, extra: dict | None = None) -> Path:
    manifest_path, blob_path = _paths(path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    tensors, offset, chunks = [], 0, []
    for name, t in policy.state_dict().items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        tensors.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    manifest = {"format": FORMAT, "config": policy.config.to_dict(), "tensors": tensors,
                "bytes": offset, "extra": extra or {}}
    blob_path.write_bytes(b"".join(chunks))
    manifest_path.write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest_path


def load_checkpoint(path, dtype=torch.float32) -> RoutingPolicy:
    manifest_path, blob_path = _paths(path)
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != FORMAT:
        raise CheckpointError(f"unsupported checkpoint format {manifest.get('format')!r}")
    config = ModelConfig.from_dict(manifest["config"])
    policy = RoutingPolicy(config)
    expected = {k: tuple(v.shape) for k, v in policy.state_dict().items()}
    blob = blob_path.read_bytes()
    if len(blob) != manifest["bytes"]:
        raise CheckpointError(f"tensor buffer has {len(blob)} bytes, manifest says {manifest['bytes']}")
    state = {}
    for entry in manifest["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected:
            raise CheckpointError(f"unexpected tensor {name}")
        if shape != expected[name]:
            raise CheckpointError(f"tensor {name} has shape {shape}, config implies {expected[name]}")
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=entry["offset"]).reshape(shape)
        state[name] = torch.from_numpy(arr.copy())
    missing = set(expected) - set(state)
    if missing:
        raise CheckpointError(f"missing tensors: {', '.join(sorted(missing))}")
    policy.load_state_dict(state)
    return policy.to(dtype)


def read_manifest(path) -> dict:
    return json.loads(_paths(path)[0].read_text())
