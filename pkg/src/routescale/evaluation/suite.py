"""Deterministic test suites: in-distribution (uniform) and out-of-distribution (mutated)."""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from ..instances.generate import make_instance
from ..instances.io import instance_hash, save_dataset
from ..instances.types import (
    OOD_DISTRIBUTIONS,
    VARIANT_NAMES,
    Distribution,
    GeneratorConfig,
    VariantFlags,
)

SUITES = ("uniform", "ood")
REFERENCE_KINDS = ("builtin_heuristic", "exact_tiny", "imported_file")


@dataclass(frozen=True)
class EvalConfig:
    suite: str = "uniform"
    scales: tuple = (50,)
    variants: tuple = VARIANT_NAMES
    instances_per_cell: int = 100
    m_starts: int | None = None
    aug: bool = False
    reference: str = "builtin_heuristic"
    seed: int = 1234

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        object.__setattr__(self, "variants", tuple(self.variants))
        if self.suite not in SUITES:
            raise ValueError(f"suite must be one of {SUITES}, got {self.suite!r}")
        if self.reference not in REFERENCE_KINDS:
            raise ValueError(f"reference must be one of {REFERENCE_KINDS}, got {self.reference!r}")
        if self.instances_per_cell < 1 or not self.scales:
            raise ValueError("need at least one scale and one instance per cell")
        for v in self.variants:
            VariantFlags.from_name(v)

    @property
    def distributions(self) -> tuple:
        return (Distribution(),) if self.suite == "uniform" else OOD_DISTRIBUTIONS

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["scales"], doc["variants"] = list(self.scales), list(self.variants)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalConfig":
        unknown = sorted(set(doc) - {f.name for f in fields(cls)})
        if unknown:
            raise KeyError(f"unknown eval config key(s): {', '.join(unknown)}")
        return cls(**doc)


def suite_name(suite: str, scale: int) -> str:
    return f"{'Uniform' if suite == 'uniform' else 'OOD'}{scale}"


def cell_seed(base: int, scale: int, variant: str, distribution: str, index: int) -> int:
    key = (scale, VARIANT_NAMES.index(variant), _dist_index(distribution), index)
    return int(np.random.SeedSequence(base, spawn_key=key).generate_state(1, np.uint64)[0] >> 1)


def _dist_index(label: str) -> int:
    if label == "uniform":
        return 0
    return 1 + [d.label for d in OOD_DISTRIBUTIONS].index(label)


def suite_instances(config: EvalConfig, scale: int):
    """Yields ``(variant, distribution label, instance)`` in cell order."""
    for variant in config.variants:
        flags = VariantFlags.from_name(variant)
        for dist in config.distributions:
            for i in range(config.instances_per_cell):
                seed = cell_seed(config.seed, scale, variant, dist.label, i)
                yield variant, dist.label, make_instance(GeneratorConfig(scale, flags, dist, seed))


def build_suite(config: EvalConfig, out_dir) -> dict:
    """Write one JSONL dataset per scale plus ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    datasets = []
    for scale in config.scales:
        name = suite_name(config.suite, scale)
        cells, hashes, insts = {}, [], []
        for variant, dist, inst in suite_instances(config, scale):
            insts.append(inst)
            h = instance_hash(inst)
            hashes.append(h)
            cell = cells.setdefault((variant, dist), {"variant": variant, "distribution": dist,
                                                      "count": 0, "seeds": []})
            cell["count"] += 1
            cell["seeds"].append(inst.seed)
        path = out / f"{name}.jsonl"
        save_dataset(insts, path)
        datasets.append({"name": name, "scale": scale, "file": path.name, "count": len(insts),
                         "cells": list(cells.values()), "hashes": hashes})
    manifest = {"config": config.to_dict(), "datasets": datasets,
                "total": sum(d["count"] for d in datasets)}
    manifest["manifest_hash"] = manifest_hash(manifest)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))
    return manifest


def manifest_hash(manifest: dict) -> str:
    body = {k: v for k, v in manifest.items() if k != "manifest_hash"}
    return hashlib.sha256(json.dumps(body, sort_keys=True, separators=(",", ":")).encode()).hexdigest()[:16]
