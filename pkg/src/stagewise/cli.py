"""Command-line entry point: ``stagewise analyze | synth | validate``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import PipelineError, StagewiseError
from .ingest import load_dataset, write_csv
from .psr import PSRConfig
from .segment import SegmenterConfig, divide_stages
from .ssa import SSAConfig
from .synth import SynthSpec, generate, recovery_angles

log = logging.getLogger("stagewise")

EXIT_OK, EXIT_INPUT, EXIT_PIPELINE, EXIT_FAILED = 0, 2, 3, 1

RECOVERY_DIMS = [(1, 1), (1, 2), (2, 1), (2, 2), (1, 3), (3, 1), (2, 3), (3, 2), (3, 3), (1, 5), (2, 4)]


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump_json(obj, path: Path):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")


def _config_from_args(args) -> SegmenterConfig:
    psr = PSRConfig(max_lag=args.max_lag, max_r=args.max_r, tau=args.tau, r=args.r)
    ssa = SSAConfig(n_restarts=args.restarts, seed=args.seed)
    return SegmenterConfig(window=args.window, alpha=args.alpha, variance_target=args.variance,
                           consecutive_required=args.consecutive, psr=psr, ssa=ssa)


def cmd_analyze(args) -> int:
    started = time.time()
    out = Path(args.output_dir)
    try:
        config = _config_from_args(args)
        if args.input == "-":
            with tempfile.NamedTemporaryFile("w", suffix=".csv", delete=False, encoding="utf-8") as fh:
                shutil.copyfileobj(sys.stdin, fh)
            src = Path(fh.name)
            try:
                dataset = load_dataset(src, name=args.name or "stdin")
            finally:
                src.unlink()
        else:
            dataset = load_dataset(args.input, name=args.name)
    except (StagewiseError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    try:
        seg = divide_stages(dataset, config)
    except PipelineError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    except StagewiseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out.mkdir(parents=True, exist_ok=True)
    artifacts = [seg.write_json(out / "segmentation.json"), seg.write_scores_csv(out / "scores.csv")]
    manifest = {
        "input": str(args.input),
        "config": config.to_dict(),
        "seed": args.seed,
        "output_dir": str(out),
        "tool_version": __version__,
        "started_at": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "wall_clock_s": round(time.time() - started, 3),
        "artifacts": [{"path": p.name, "sha256": _sha256(p)} for p in artifacts],
    }
    _dump_json(manifest, out / "manifest.json")
    for a in manifest["artifacts"]:
        if _sha256(out / a["path"]) != a["sha256"]:
            print(f"error: artifact {a['path']} changed after writing", file=sys.stderr)
            return EXIT_FAILED
    print(seg.table())
    return EXIT_OK


def _parse_changes(values) -> tuple[int, ...]:
    out = []
    for v in values or []:
        out.extend(int(x) for x in str(v).split(",") if x.strip())
    return tuple(out)


def cmd_synth(args) -> int:
    try:
        changes = _parse_changes(args.change)
        spec = SynthSpec(n_cycles=args.cycles, samples_per_cycle=args.samples, d_true=args.stationary,
                         n_nonstationary=args.nonstationary, change_cycles=changes,
                         noise_sigma=args.noise)
        if spec.n_sources != 3:
            raise StagewiseError("the CSV schema carries three channels: "
                                 "--stationary + --nonstationary must equal 3")
        dataset, truth = generate(spec, args.seed, name=args.name)
    except (StagewiseError, ValueError) as exc:
        print(f"invalid synth settings: {exc}", file=sys.stderr)
        return EXIT_INPUT

    out = Path(args.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    truth_path = truth.write_json(out / f"{args.name}_truth.json")
    if args.csv == "-":
        with tempfile.TemporaryDirectory() as tmp:
            p = write_csv(dataset, Path(tmp) / "synth.csv")
            sys.stdout.write(p.read_text(encoding="utf-8"))
    else:
        csv_path = write_csv(dataset, Path(args.csv) if args.csv else out / f"{args.name}.csv")
        print(f"wrote {csv_path} and {truth_path}")
    return EXIT_OK


def _boundary_error(boundaries, truth: int, n_cycles: int) -> int:
    if not boundaries:
        return n_cycles
    return min(abs(b - truth) for b in boundaries)


def cmd_validate(args) -> int:
    seeds = list(range(args.seed, args.seed + args.seeds))
    ssa_cfg = SSAConfig(n_restarts=args.restarts, seed=args.seed)
    t0 = time.time()
    angles = np.array(recovery_angles(RECOVERY_DIMS, seeds, config=ssa_cfg))
    t_rec = time.time() - t0

    change, n_cycles = 40, 80
    errors, n_stages = [], []
    t0 = time.time()
    cfg = SegmenterConfig(ssa=ssa_cfg)
    for s in seeds:
        ds, _ = generate(SynthSpec(n_cycles=n_cycles, change_cycles=(change,)), s)
        seg = divide_stages(ds, cfg)
        errors.append(_boundary_error(seg.boundaries(), change, n_cycles))
        n_stages.append(len(seg.stages))
    t_seg = time.time() - t0
    errors = np.array(errors)
    n_stages = np.array(n_stages)

    angle_rate = float(np.mean(angles <= args.angle_tol))
    mae = float(errors.mean())
    hit_rate = float(np.mean((errors <= args.boundary_tol) & (n_stages == 2)))
    ok_angle = angle_rate >= 0.9
    ok_boundary = mae <= args.boundary_tol

    print(f"seeds: {len(seeds)}")
    print(f"subspace recovery: median angle {np.median(angles):.2f} deg, max {angles.max():.2f} deg, "
          f"{100 * angle_rate:.0f}% within {args.angle_tol:g} deg ({t_rec:.1f} s) "
          f"[{'PASS' if ok_angle else 'FAIL'}]")
    print(f"change point (cycle {change} of {n_cycles}): boundary MAE {mae:.2f} cycles, "
          f"{100 * hit_rate:.0f}% two-stage runs within +/-{args.boundary_tol:g}, "
          f"median stage count {np.median(n_stages):g} ({t_seg:.1f} s) "
          f"[{'PASS' if ok_boundary else 'FAIL'}]")
    verdict = ok_angle and ok_boundary
    print("validation " + ("passed" if verdict else "FAILED"))
    return EXIT_OK if verdict else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stagewise", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="segment a cycling CSV into degradation stages")
    a.add_argument("--input", required=True, help="CSV path, or - for stdin")
    a.add_argument("--output-dir", default="stagewise_out")
    a.add_argument("--name", default=None, help="dataset name (default: file stem)")
    a.add_argument("--window", type=int, default=15)
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--variance", type=float, default=0.85)
    a.add_argument("--consecutive", type=int, default=2)
    a.add_argument("--max-lag", type=int, default=50)
    a.add_argument("--max-r", type=int, default=10)
    a.add_argument("--tau", type=int, default=None, help="pin the embedding lag")
    a.add_argument("--r", type=int, default=None, help="pin the embedding dimension")
    a.add_argument("--seed", type=int, default=42)
    a.add_argument("--restarts", type=int, default=5)
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("synth", help="write a synthetic dataset with known change cycles")
    s.add_argument("--cycles", type=int, default=80)
    s.add_argument("--samples", type=int, default=200)
    s.add_argument("--stationary", type=int, default=1)
    s.add_argument("--nonstationary", type=int, default=2)
    s.add_argument("--change", action="append", help="change cycle(s); repeat or comma-separate")
    s.add_argument("--noise", type=float, default=0.1)
    s.add_argument("--seed", type=int, default=42)
    s.add_argument("--name", default="synthetic")
    s.add_argument("--output-dir", default=".")
    s.add_argument("--csv", default=None, help="CSV path, or - for stdout")
    s.set_defaults(func=cmd_synth)

    v = sub.add_parser("validate", help="run the synthetic acceptance battery")
    v.add_argument("--seeds", type=int, default=10)
    v.add_argument("--seed", type=int, default=0, help="first seed")
    v.add_argument("--angle-tol", type=float, default=5.0)
    v.add_argument("--boundary-tol", type=float, default=2.0)
    v.add_argument("--restarts", type=int, default=5)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("STAGEWISE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
