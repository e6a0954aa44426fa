"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error.  Failures print a
single JSON line on stderr: ``{"error": <kind>, "message": <text>}``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "routescale-out"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _fail("usage", message)
        sys.exit(EXIT_USAGE)


def _fail(kind: str, message: str) -> None:
    print(json.dumps({"error": kind, "message": str(message)}), file=sys.stderr)


def _canonical(doc) -> str:
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str)


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _versions() -> dict:
    import numba
    import torch

    return {"routescale": __version__, "python": platform.python_version(),
            "numpy": np.__version__, "numba": numba.__version__, "torch": torch.__version__}


def write_manifest(out_dir: Path, command: str, config: dict, seed, outputs, extra=None) -> Path:
    """Record config hash, seed, library versions and output digests."""
    files = {}
    for p in outputs:
        p = Path(p)
        files[p.name] = _sha256(p)
    manifest = {
        "command": command,
        "config": config,
        "config_hash": hashlib.sha256(_canonical(config).encode()).hexdigest()[:16],
        "seed": seed,
        "versions": _versions(),
        "outputs": files,
    }
    if extra:
        manifest.update(extra)
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load_config(path, allowed) -> dict:
    """Strict JSON object; unknown keys are a usage error naming the key."""
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    for key in doc:
        if key not in allowed:
            raise UsageError(f"unknown config key '{key}'")
    return doc


def _merge(doc: dict, args, mapping: dict) -> dict:
    """Flags (when given) override file values; ``mapping`` is flag dest -> config key."""
    out = dict(doc)
    for dest, key in mapping.items():
        val = getattr(args, dest, None)
        if val is not None:
            out[key] = val
    return out


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _instance_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=(index,)).generate_state(1, np.uint64)[0] >> 1)


# -- subcommands -------------------------------------------------------------

GENERATE_KEYS = {"variant", "scale", "dist", "count", "seed"}


def cmd_generate(args) -> int:
    from .instances import Distribution, GeneratorConfig, VariantFlags, make_instance, save_dataset

    cfg = _merge(load_config(args.config, GENERATE_KEYS), args,
                 {"variant": "variant", "scale": "scale", "dist": "dist", "count": "count",
                  "seed": "seed"})
    cfg = {"variant": "CVRP", "scale": 50, "dist": "uniform", "count": 10, "seed": 0, **cfg}
    try:
        variants = [VariantFlags.from_name(v) for v in str(cfg["variant"]).split(",")]
        dist = Distribution.parse(cfg["dist"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    scale, count, seed = int(cfg["scale"]), int(cfg["count"]), int(cfg["seed"])
    if scale < 1 or count < 1:
        raise UsageError("scale and count must be >= 1")
    insts = [make_instance(GeneratorConfig(scale, variants[i % len(variants)], dist, _instance_seed(seed, i)))
             for i in range(count)]
    out = _out_dir(args)
    path = out / "instances.jsonl"
    save_dataset(insts, path)
    write_manifest(out, "generate", cfg, seed, [path], {"count": count})
    print(path)
    return EXIT_OK


TRAIN_KEYS = {"preset", "model", "epochs", "steps_per_epoch", "lr", "weight_decay", "grad_clip_norm",
              "scale_set", "variant_set", "distribution_set", "seed", "n_starts", "batch_size"}


def cmd_train(args) -> int:
    from .policy import ModelConfig, preset
    from .train import TrainConfig, train

    cfg = _merge(load_config(args.config, TRAIN_KEYS), args,
                 {"epochs": "epochs", "steps_per_epoch": "steps_per_epoch", "seed": "seed",
                  "preset": "preset", "lr": "lr"})
    try:
        model_doc = cfg.get("model")
        if model_doc is not None and "preset" in cfg:
            raise UsageError("give either 'model' or 'preset', not both")
        model = ModelConfig.from_dict(model_doc) if model_doc is not None else preset(cfg.get("preset", "1M"))
        tcfg = TrainConfig.from_dict({k: v for k, v in cfg.items() if k not in ("model", "preset")})
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(exc.args[0] if exc.args else str(exc)) from None
    out = _out_dir(args)

    def report(m):
        if args.verbose:
            print(f"epoch {m.epoch} loss {m.loss:.6g} mean_obj {m.mean_obj:.6g} "
                  f"grad_norm {m.grad_norm:.6g}", file=sys.stderr)

    train(tcfg, model, out, callback=report)
    outputs = sorted(out.glob("checkpoint_*.*")) + [out / "train_log.csv"]
    full = {"model": model.to_dict(), "train": tcfg.to_dict()}
    write_manifest(out, "train", full, tcfg.seed, outputs)
    print(out / "train_log.csv")
    return EXIT_OK


def _load_policy(spec: str):
    from .env.rollout import NearestNeighbourPolicy
    from .policy import load_checkpoint

    if spec == "nearest":
        return NearestNeighbourPolicy()
    path = Path(spec)
    if not path.with_suffix(".json").exists() and not path.exists():
        raise UsageError(f"checkpoint not found: {spec}")
    return load_checkpoint(path)


def _strip_timing(path: Path) -> str:
    """Digest of a gap report with the wall-clock column blanked (timings are not reproducible)."""
    with open(path, newline="") as fh:
        rows = [{**r, "sec_per_instance": ""} for r in csv.DictReader(fh)]
    return hashlib.sha256(_canonical(rows).encode()).hexdigest()


def cmd_eval(args) -> int:
    from .evaluation import compute_references, evaluate, export_references, import_reference
    from .instances import instance_hash, load_dataset
    from .instances.io import InstanceParseError

    try:
        insts = load_dataset(args.dataset)
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {args.dataset}") from None
    except InstanceParseError as exc:
        raise UsageError(f"dataset {args.dataset}: {exc}") from None
    policy = _load_policy(args.checkpoint)
    out = _out_dir(args)
    hashes = [instance_hash(i) for i in insts]
    rejects = []
    if args.reference == "builtin_heuristic":
        refs = compute_references(insts, "heuristic")
    elif args.reference == "exact_tiny":
        refs = compute_references(insts, "exact")
    else:
        refs, rejects = import_reference(args.reference, hashes)
    report = evaluate(insts, policy, args.m, args.aug, refs, suite=Path(args.dataset).stem)
    paths = [out / "gap_report.csv", out / "references.csv"]
    report.write_csv(paths[0])
    export_references(refs, paths[1])
    if report.errors:
        report.write_errors(out / "eval_errors.csv")
        paths.append(out / "eval_errors.csv")
    if rejects:
        with open(out / "reference_rejects.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["hash", "reason"])
            w.writeheader()
            w.writerows(rejects)
        paths.append(out / "reference_rejects.csv")
    cfg = {"dataset": str(args.dataset), "checkpoint": str(args.checkpoint), "m": args.m,
           "aug": bool(args.aug), "reference": args.reference}
    write_manifest(out, "eval", cfg, None, paths,
                   {"gap_report_digest_without_timing": _strip_timing(paths[0])})
    print(paths[0])
    return EXIT_OK


def cmd_validate(args) -> int:
    from .env import validate_solution
    from .instances import instance_hash
    from .instances.io import iter_dataset
    from .instances.io import InstanceParseError

    out = _out_dir(args)
    try:
        insts = {instance_hash(i): i for i in iter_dataset(args.dataset)}
    except FileNotFoundError:
        raise UsageError(f"dataset not found: {args.dataset}") from None
    except InstanceParseError as exc:
        _fail("invalid_instance", f"{args.dataset}: {exc}")
        return EXIT_RUNTIME
    rows, bad = [], 0
    if args.solutions:
        with open(args.solutions, newline="") as fh:
            for r in csv.DictReader(fh):
                h = r["hash"]
                tour = [int(t) for t in r["tour"].split()]
                if h not in insts:
                    rows.append({"hash": h, "feasible": 0, "objective": "", "note": "unknown hash"})
                    bad += 1
                    continue
                ok, obj = validate_solution(tour, insts[h])
                bad += not ok
                rows.append({"hash": h, "feasible": int(ok), "objective": repr(obj), "note": ""})
    else:
        rows = [{"hash": h, "feasible": 1, "objective": "", "note": "parsed"} for h in insts]
    path = out / "validation.csv"
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["hash", "feasible", "objective", "note"])
        w.writeheader()
        w.writerows(rows)
    write_manifest(out, "validate", {"dataset": str(args.dataset), "solutions": args.solutions},
                   None, [path], {"invalid": bad})
    print(path)
    if bad:
        _fail("infeasible", f"{bad} solution(s) failed validation")
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_fit(args) -> int:
    from .scaling import compute_frontier, fit_series, read_points, write_fits, write_plot_data

    try:
        points = read_points(args.input, args.law)
    except FileNotFoundError:
        raise UsageError(f"input not found: {args.input}") from None
    except (KeyError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    if args.frontier:
        points = compute_frontier(points)
    fits = fit_series(points)
    out = _out_dir(args)
    fits_path = Path(args.out) if args.out else out / "fits.csv"
    fits_path.parent.mkdir(parents=True, exist_ok=True)
    write_fits(fits, fits_path, args.law)
    plot_path = out / "plot_data.csv"
    write_plot_data(points, fits, plot_path)
    cfg = {"law": args.law, "input": str(args.input), "frontier": bool(args.frontier)}
    write_manifest(out, "fit", cfg, None, [fits_path, plot_path],
                   {"mean_exponent": float(np.mean([f.exponent for f in fits]))})
    for f in fits:
        print(f"{f.label},{f.exponent:.6f},{f.r_squared:.6f}")
    return EXIT_OK


def cmd_flops(args) -> int:
    from .policy import flops_estimate, param_count, preset

    try:
        cfg = preset(args.preset)
    except KeyError as exc:
        raise UsageError(exc.args[0]) from None
    if args.scale < 1 or args.m < 1:
        raise UsageError("scale and m must be >= 1")
    g = flops_estimate(cfg, args.scale, args.m, args.aug)
    out = _out_dir(args)
    path = out / "flops.json"
    path.write_text(json.dumps({"preset": args.preset, "scale": args.scale, "m": args.m,
                                "aug": bool(args.aug), "gflops": g,
                                "params": param_count(cfg)}, sort_keys=True) + "\n")
    write_manifest(out, "flops", {"preset": args.preset, "scale": args.scale, "m": args.m,
                                  "aug": bool(args.aug)}, None, [path])
    print(f"{g:.6g}")
    return EXIT_OK


SUITE_KEYS = {"suite", "scales", "variants", "instances_per_cell", "seed", "m_starts", "aug", "reference"}


def cmd_suite(args) -> int:
    from .evaluation import EvalConfig, build_suite

    cfg = _merge(load_config(args.config, SUITE_KEYS), args,
                 {"suite": "suite", "scales": "scales", "per_cell": "instances_per_cell",
                  "seed": "seed", "variants": "variants"})
    try:
        ecfg = EvalConfig.from_dict(cfg)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(exc.args[0] if exc.args else str(exc)) from None
    out = _out_dir(args)
    manifest = build_suite(ecfg, out)
    # build_suite writes its own manifest.json; keep it and add the run record next to it
    (out / "suite_manifest.json").write_text((out / "manifest.json").read_text())
    files = [out / d["file"] for d in manifest["datasets"]] + [out / "suite_manifest.json"]
    write_manifest(out, "suite", ecfg.to_dict(), ecfg.seed, files,
                   {"manifest_hash": manifest["manifest_hash"], "total": manifest["total"]})
    print(out / "suite_manifest.json")
    return EXIT_OK


# -- parser --------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="routescale", description="Multi-variant VRP policy toolkit.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def common(sp, seed=True):
        sp.add_argument("--out-dir", default=DEFAULT_OUT)
        sp.add_argument("--config", default=None, help="JSON file of config keys")
        sp.add_argument("-v", "--verbose", action="store_true")
        if seed:
            sp.add_argument("--seed", type=int, default=None)

    g = sub.add_parser("generate", help="generate an instance dataset")
    common(g)
    g.add_argument("--variant", default=None, help="variant name(s), comma separated")
    g.add_argument("--scale", type=int, default=None)
    g.add_argument("--dist", default=None)
    g.add_argument("--count", type=int, default=None)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a policy")
    common(t)
    t.add_argument("--preset", default=None)
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--steps-per-epoch", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a policy on a dataset")
    common(e, seed=False)
    e.add_argument("--dataset", required=True)
    e.add_argument("--checkpoint", required=True, help="checkpoint path, or 'nearest' for the baseline")
    e.add_argument("--m", type=int, default=None, help="starts per instance (default: all)")
    e.add_argument("--aug", action="store_true")
    e.add_argument("--reference", default="builtin_heuristic",
                   help="builtin_heuristic, exact_tiny, or a CSV of hash,objective")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("validate", help="parse a dataset and check solutions")
    common(v, seed=False)
    v.add_argument("--dataset", required=True)
    v.add_argument("--solutions", default=None, help="CSV with columns hash,tour")
    v.set_defaults(func=cmd_validate)

    f = sub.add_parser("fit", help="fit a power law to a scaling table")
    common(f, seed=False)
    f.add_argument("--law", choices=("N", "T", "C"), required=True)
    f.add_argument("--in", dest="input", required=True)
    f.add_argument("--out", default=None)
    f.add_argument("--frontier", action="store_true", help="fit the cheapest-so-far frontier only")
    f.set_defaults(func=cmd_fit)

    fl = sub.add_parser("flops", help="GFLOPs per instance for a preset")
    common(fl, seed=False)
    fl.add_argument("--preset", required=True)
    fl.add_argument("--scale", type=int, required=True)
    fl.add_argument("--m", type=int, required=True)
    fl.add_argument("--aug", action="store_true")
    fl.set_defaults(func=cmd_flops)

    s = sub.add_parser("suite", help="build a deterministic test suite")
    common(s)
    s.add_argument("--suite", choices=("uniform", "ood"), default=None)
    s.add_argument("--scales", type=int, nargs="+", default=None)
    s.add_argument("--variants", nargs="+", default=None)
    s.add_argument("--per-cell", type=int, default=None)
    s.set_defaults(func=cmd_suite)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        _fail("usage", str(exc))
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - top-level boundary
        _fail(type(exc).__name__, str(exc))
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
