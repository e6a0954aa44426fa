"""Greedy multi-start evaluation with optional x8 augmentation, and gap reports."""
from __future__ import annotations

import csv
import math
import time
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np
import torch

from ..env.augment import augment_coords_x8
from ..env.batch import InstanceBatch
from ..env.rollout import start_nodes
from ..instances.io import instance_hash
from ..instances.types import ProblemInstance
from ..policy.accounting import flops_estimate
from .reference import reference_objective

REPORT_COLUMNS = ("suite", "variant", "distribution", "scale", "m", "aug", "T", "gflops",
                  "mean_obj", "mean_ref", "gap_pct", "sec_per_instance")


@dataclass
class InstanceResult:
    hash: str
    variant: str
    distribution: str
    scale: int
    objective: float
    tour: list
    trajectories: int  # executed (feasible-start) trajectories
    gflops: float
    seconds: float


@dataclass
class GapRow:
    suite: str
    variant: str
    distribution: str
    scale: int
    m: int
    aug: bool
    T: float
    gflops: float
    mean_obj: float
    mean_ref: float
    gap_pct: float
    sec_per_instance: float


@dataclass
class GapReport:
    rows: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # (cell key, message)
    results: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
            w.writeheader()
            for row in self.rows:
                d = asdict(row)
                d["aug"] = int(d["aug"])
                w.writerow(d)

    def write_errors(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["suite", "variant", "distribution", "scale", "error"])
            for key, msg in self.errors:
                w.writerow([*key, msg])


def gap_pct(objective, reference):
    return (np.asarray(objective) - np.asarray(reference)) / np.asarray(reference) * 100.0


def _policy_flops(policy, scale, per_view, aug):
    config = getattr(policy, "config", None)
    if config is None:
        return 0.0
    return flops_estimate(config, scale, per_view, aug)


def decode_instances(instances: Sequence[ProblemInstance], policy, m: Optional[int] = None,
                     aug: bool = False, chunk: int = 64) -> list:
    """Best greedy objective over m starts (x8 views when ``aug``) for every instance.

    Instances are grouped by scale; ties go to the earliest view, then the lowest start.
    """
    by_scale = defaultdict(list)
    for i, inst in enumerate(instances):
        by_scale[inst.scale].append(i)
    out = [None] * len(instances)
    if hasattr(policy, "eval"):
        policy.eval()
    for scale, idx in by_scale.items():
        mm = min(m or scale, scale)
        for lo in range(0, len(idx), chunk):
            part = [instances[i] for i in idx[lo:lo + chunk]]
            t0 = time.perf_counter()
            batch = InstanceBatch.from_instances(part)
            views = augment_coords_x8(batch.coords) if aug else batch.coords[None]
            # one rollout per view, so the identity view decodes exactly as without aug
            runs = []
            with torch.no_grad():
                for k, coords in enumerate(views):
                    view = batch if k == 0 else batch.with_coords(coords)
                    runs.append(policy.rollout(view, start_nodes(view, mm), greedy=True))
            elapsed = (time.perf_counter() - t0) / batch.size
            cost = np.stack([np.where(r.valid, r.cost, np.inf) for r in runs])  # (V, B, m)
            valid = np.stack([r.valid for r in runs])
            for b, inst in enumerate(part):
                flat = cost[:, b, :].reshape(-1)
                k = int(np.argmin(flat))
                v, p = divmod(k, mm)
                per_view = int(valid[0, b].sum())
                tour = runs[v].tour(b, p, inst.variant.open_route)
                out[idx[lo + b]] = InstanceResult(
                    instance_hash(inst), inst.variant.name, inst.distribution, scale,
                    float(flat[k]), tour, int(valid[:, b].sum()),
                    _policy_flops(policy, scale, max(per_view, 1), aug), elapsed)
    return out


def evaluate(instances: Sequence[ProblemInstance], policy, m: Optional[int] = None,
             aug: bool = False, references: Optional[Mapping[str, float]] = None,
             suite: str = "", chunk: int = 64) -> GapReport:
    """Decode every instance and aggregate per (variant, distribution, scale) cell.

    ``references`` maps instance hash to reference objective; a cell with any
    missing reference is reported in ``errors`` and left out of ``rows``.
    """
    references = references or {}
    results = decode_instances(instances, policy, m, aug, chunk)
    cells = defaultdict(list)
    for r in results:
        cells[(r.variant, r.distribution, r.scale)].append(r)
    report = GapReport(results=results)
    for (variant, dist, scale), rs in sorted(cells.items(), key=lambda kv: (kv[0][2], kv[0][0], kv[0][1])):
        key = (suite, variant, dist, scale)
        missing = [r.hash for r in rs if r.hash not in references]
        if missing:
            report.errors.append((key, f"missing reference for {len(missing)} instance(s), first {missing[0]}"))
            continue
        obj = np.array([r.objective for r in rs])
        ref = np.array([references[r.hash] for r in rs])
        if not (np.isfinite(obj).all() and np.isfinite(ref).all() and (ref > 0).all()):
            report.errors.append((key, "non-finite objective or reference"))
            continue
        report.rows.append(GapRow(
            suite, variant, dist, scale, min(m or scale, scale), aug,
            float(np.mean([r.trajectories for r in rs])), float(np.mean([r.gflops for r in rs])),
            float(obj.mean()), float(ref.mean()), float(gap_pct(obj, ref).mean()),
            float(np.mean([r.seconds for r in rs]))))
    return report


def compute_references(instances: Sequence[ProblemInstance], method: str = "auto") -> dict:
    return {instance_hash(inst): reference_objective(inst, method) for inst in instances}


def export_references(references: Mapping[str, float], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["hash", "objective"])
        for h in sorted(references):
            w.writerow([h, repr(float(references[h]))])


def import_reference(path, known_hashes=None):
    """Read ``hash,objective`` rows.  Returns ``(references, rejects)``.

    Rows whose hash is not in ``known_hashes`` (when given) or whose objective
    does not parse as a positive finite number are rejected with a reason.
    """
    known = set(known_hashes) if known_hashes is not None else None
    refs, rejects = {}, []
    path = Path(path)
    text = path.read_text() if path.exists() else ""
    if not text.strip():
        return refs, rejects
    reader = csv.DictReader(text.splitlines())
    if reader.fieldnames is None or not {"hash", "objective"} <= set(reader.fieldnames):
        raise ValueError(f"{path}: expected columns hash,objective")
    for row in reader:
        h = (row.get("hash") or "").strip()
        if known is not None and h not in known:
            rejects.append({"hash": h, "reason": "unknown hash"})
            continue
        try:
            val = float(row["objective"])
        except (TypeError, ValueError):
            rejects.append({"hash": h, "reason": f"unparseable objective {row['objective']!r}"})
            continue
        if not math.isfinite(val) or val <= 0:
            rejects.append({"hash": h, "reason": f"objective {val} not positive and finite"})
            continue
        refs[h] = val
    return refs, rejects
