"""JSON (one instance) and JSONL (dataset) serialisation."""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .types import ProblemInstance, VariantFlags


class InstanceParseError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def to_dict(inst: ProblemInstance) -> dict:
    doc = {
        "scale": int(inst.scale),
        "coords": inst.coords.tolist(),
        "demands": inst.demands.tolist(),
        "raw_capacity": int(inst.raw_capacity),
        "backhaul_mask": [bool(b) for b in inst.backhaul_mask],
        "service_times": inst.service_times.tolist(),
        "horizon": float(inst.horizon),
        "variant": inst.variant.to_dict(),
        "seed": int(inst.seed),
        "distribution": inst.distribution,
    }
    if inst.time_windows is not None:
        doc["time_windows"] = inst.time_windows.tolist()
    if inst.distance_limit is not None:
        doc["distance_limit"] = float(inst.distance_limit)
    return doc


def dumps(inst: ProblemInstance) -> str:
    return json.dumps(to_dict(inst), separators=(",", ":"))


def instance_hash(inst: ProblemInstance) -> str:
    return hashlib.sha256(dumps(inst).encode()).hexdigest()[:16]


def _require(doc, key):
    if key not in doc:
        raise InstanceParseError(key, "missing")
    return doc[key]


def _array(doc, key, shape_tail=(), dtype=np.float64):
    raw = _require(doc, key)
    try:
        arr = np.asarray(raw, dtype=dtype)
    except (TypeError, ValueError) as exc:
        raise InstanceParseError(key, f"not a numeric array ({exc})") from None
    if arr.ndim != 1 + len(shape_tail) or arr.shape[1:] != shape_tail:
        raise InstanceParseError(key, f"bad shape {arr.shape}")
    return arr


def from_dict(doc: dict) -> ProblemInstance:
    if not isinstance(doc, dict):
        raise InstanceParseError("<root>", "expected a JSON object")
    scale = _require(doc, "scale")
    if not isinstance(scale, int) or scale < 1:
        raise InstanceParseError("scale", f"expected a positive integer, got {scale!r}")
    n = scale + 1
    coords = _array(doc, "coords", (2,))
    demands = _array(doc, "demands")
    service = _array(doc, "service_times")
    mask = _require(doc, "backhaul_mask")
    if not isinstance(mask, list) or not all(isinstance(b, bool) for b in mask):
        raise InstanceParseError("backhaul_mask", "expected a list of booleans")
    for key, arr, want in (("coords", coords, n), ("demands", demands, n), ("service_times", service, n), ("backhaul_mask", mask, scale)):
        if len(arr) != want:
            raise InstanceParseError(key, f"expected {want} entries, got {len(arr)}")
    vdoc = _require(doc, "variant")
    try:
        variant = VariantFlags(**{k: bool(vdoc[k]) for k in ("open_route", "backhaul", "duration_limit", "time_window")})
    except (KeyError, TypeError) as exc:
        raise InstanceParseError("variant", f"malformed ({exc})") from None
    windows = None
    if variant.time_window:
        windows = _array(doc, "time_windows", (2,))
        if len(windows) != n:
            raise InstanceParseError("time_windows", f"expected {n} rows, got {len(windows)}")
    elif "time_windows" in doc:
        raise InstanceParseError("time_windows", "present but variant has no time windows")
    limit = None
    if variant.duration_limit:
        limit = _require(doc, "distance_limit")
        if not isinstance(limit, (int, float)):
            raise InstanceParseError("distance_limit", "expected a number")
        limit = float(limit)
    elif "distance_limit" in doc:
        raise InstanceParseError("distance_limit", "present but variant has no duration limit")
    capacity = _require(doc, "raw_capacity")
    if not isinstance(capacity, int):
        raise InstanceParseError("raw_capacity", "expected an integer")
    return ProblemInstance(
        scale=scale,
        coords=coords,
        demands=demands,
        raw_capacity=capacity,
        backhaul_mask=np.asarray(mask, dtype=bool),
        service_times=service,
        variant=variant,
        time_windows=windows,
        distance_limit=limit,
        horizon=float(doc.get("horizon", 4.6)),
        seed=int(doc.get("seed", 0)),
        distribution=str(doc.get("distribution", "uniform")),
    )


def loads(text: str) -> ProblemInstance:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceParseError("<json>", str(exc)) from None
    return from_dict(doc)


def save_instance(inst: ProblemInstance, path) -> None:
    Path(path).write_text(dumps(inst) + "\n")


def load_instance(path) -> ProblemInstance:
    return loads(Path(path).read_text())


def save_dataset(instances: Iterable[ProblemInstance], path) -> int:
    count = 0
    with open(path, "w") as fh:
        for inst in instances:
            fh.write(dumps(inst) + "\n")
            count += 1
    return count


def iter_dataset(path) -> Iterator[ProblemInstance]:
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                yield loads(line)
            except InstanceParseError as exc:
                raise InstanceParseError(exc.field, f"line {lineno}: {exc}") from None


def load_dataset(path) -> list[ProblemInstance]:
    return list(iter_dataset(path))
