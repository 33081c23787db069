"""``geomeval`` command line: evaluate | register | synth | report."""
from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numba
import numpy as np

from .core import AxisAlignedBox, PointCloud, SimilarityTransform
from .errors import GeomEvalError
from .geomio import SceneManifest, read_manifest, read_mesh, read_ply_pointcloud, write_ply_pointcloud
from .metrics import MetricsResult, ToleranceSpec, distance_profile, metrics_from_profile
from .preprocess import mesh_to_cloud_vertices, prepare, sample_mesh_surface
from .register import CorrespondenceSet, RegistrationResult, estimate_similarity, place_ground_truth, register_cloud
from .report import BenchmarkRun, ErrorColormap, aggregate_runs, export_error_cloud, write_csv, write_markdown
from .synth import DegradationSpec, SynthConfig, write_scene

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    manifests: list[Path]
    method: str = "method"
    out_dir: Path = Path("results")
    taus_mm: tuple[float, ...] | None = None
    # None: vertex extraction; otherwise surface samples per object
    gt_surface_samples: int | None = None
    export_colored: bool = False
    threads: int | None = None
    seed: int = 0
    cmap: ErrorColormap = field(default_factory=ErrorColormap)


@dataclass
class SceneOutcome:
    scene_id: str
    metrics: MetricsResult
    transform: SimilarityTransform
    registration: RegistrationResult | None


def _dump_json(data, path: Path) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _set_threads(n: int | None) -> None:
    if n is None:
        return
    if n < 1:
        raise UsageError("--threads must be >= 1")
    numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))


def registration_for(m: SceneManifest) -> RegistrationResult | None:
    if m.marker_correspondences is None:
        return None
    return estimate_similarity(CorrespondenceSet.from_pairs(m.marker_correspondences))


def ground_truth_cloud(m: SceneManifest, surface_samples: int | None = None, seed: int = 0) -> PointCloud:
    """All objects of a scene, placed in the world frame, as one cloud."""
    parts = []
    for i, obj in enumerate(m.objects):
        mesh = place_ground_truth(read_mesh(obj.mesh_path), obj.pose)
        if surface_samples is None:
            parts.append(mesh_to_cloud_vertices(mesh).points)
        else:
            parts.append(sample_mesh_surface(mesh, surface_samples, seed + i).points)
    return PointCloud(np.concatenate(parts))


def evaluate_scene(m: SceneManifest, cfg: RunConfig):
    recon = read_ply_pointcloud(m.reconstruction_path)
    reg = registration_for(m)
    transform = SimilarityTransform.identity()
    if reg is not None:
        transform = reg.transform
        recon = register_cloud(recon, transform)
    gt = ground_truth_cloud(m, cfg.gt_surface_samples, cfg.seed)

    p = prepare(recon, m.crop_box, m.table_height)
    g = prepare(gt, m.crop_box, m.table_height)
    tol = ToleranceSpec(cfg.taus_mm if cfg.taus_mm is not None else m.tolerances_mm)
    profile = distance_profile(p, g)
    metrics = metrics_from_profile(profile, tol)
    return SceneOutcome(m.scene_id, metrics, transform, reg), p, profile


def scene_record(outcome: SceneOutcome, method: str) -> dict:
    return {
        "scene_id": outcome.scene_id,
        "method": method,
        "metrics": outcome.metrics.to_dict(),
        "transform": outcome.transform.to_dict(),
        "registration": None if outcome.registration is None else {
            "rms_residual_m": outcome.registration.rms_residual,
            "per_pair_residuals_m": outcome.registration.per_pair_residuals.tolist(),
        },
    }


def cmd_evaluate(cfg: RunConfig) -> int:
    if not cfg.manifests:
        raise UsageError("at least one --manifest is required")
    if cfg.taus_mm is not None:
        try:
            ToleranceSpec(cfg.taus_mm)
        except ValueError as e:
            raise UsageError(str(e)) from None
    _set_threads(cfg.threads)
    try:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise UsageError(f"cannot create output directory: {e}") from None

    # numba already parallelises each NN batch across the thread budget,
    # so scenes are processed one after another
    results: dict[str, MetricsResult] = {}
    failures = []
    for path in cfg.manifests:
        try:
            m = read_manifest(path)
            if m.scene_id in results:
                raise GeomEvalError(f"duplicate scene_id {m.scene_id!r}")
            outcome, p, profile = evaluate_scene(m, cfg)
            _dump_json(scene_record(outcome, cfg.method), cfg.out_dir / f"{m.scene_id}.json")
            if cfg.export_colored:
                export_error_cloud(p, profile.forward, cfg.cmap, cfg.out_dir / f"{m.scene_id}_error.ply")
            results[m.scene_id] = outcome.metrics
        except (GeomEvalError, OSError, ValueError) as e:
            failures.append({"manifest": str(path), "error": type(e).__name__, "message": str(e)})

    if results:
        table = aggregate_runs([BenchmarkRun(cfg.method, results)])
        write_csv(table, cfg.out_dir / "results.csv")
        write_markdown(table, cfg.out_dir / "results.md")
    if failures:
        print(json.dumps({"failed_scenes": failures}), file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_register(manifest: Path, out_dir: Path) -> int:
    try:
        m = read_manifest(manifest)
        if m.marker_correspondences is None:
            raise UsageError(f"{manifest}: manifest has no marker_correspondences")
        reg = registration_for(m)
        cloud = register_cloud(read_ply_pointcloud(m.reconstruction_path), reg.transform)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_ply_pointcloud(cloud, out_dir / f"{m.scene_id}_registered.ply",
                             "binary_little_endian", dtype="double")
        _dump_json({"scene_id": m.scene_id, **reg.to_dict()},
                   out_dir / f"{m.scene_id}_registration.json")
    except (GeomEvalError, OSError, ValueError) as e:
        # DegenerateConfiguration and TooFewPairs land here as well
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def cmd_synth(cfg: SynthConfig, out_dir: Path) -> int:
    try:
        cfg.validate()
    except ValueError as e:
        raise UsageError(str(e)) from None
    path = write_scene(cfg, out_dir)
    print(path)
    return EXIT_OK


def load_scene_records(paths) -> list[dict]:
    files: list[Path] = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(q for q in p.glob("*.json"))
        else:
            files.append(p)
    records = []
    for f in files:
        data = json.loads(f.read_text(encoding="utf-8"))
        if isinstance(data, dict) and "metrics" in data and "scene_id" in data:
            records.append(data)
    return records


def cmd_report(result_paths, out_dir: Path) -> int:
    """Re-render tables from stored per-scene JSON, grouped by method."""
    records = load_scene_records(result_paths)
    if not records:
        raise UsageError("no per-scene result files found")
    by_method: dict[str, dict[str, MetricsResult]] = {}
    for r in records:
        by_method.setdefault(r["method"], {})[r["scene_id"]] = MetricsResult.from_dict(r["metrics"])
    runs = [BenchmarkRun(name, scenes) for name, scenes in by_method.items()]
    try:
        table = aggregate_runs(runs)
    except GeomEvalError as e:
        raise UsageError(str(e)) from None
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(table, out_dir / "comparison.csv")
    write_markdown(table, out_dir / "comparison.md")
    return EXIT_OK


def _gt_sampling(value: str) -> int | None:
    if value == "vertices":
        return None
    if value.startswith("surface:"):
        try:
            n = int(value.split(":", 1)[1])
        except ValueError:
            n = 0
        if n >= 1:
            return n
    raise argparse.ArgumentTypeError("expected 'vertices' or 'surface:<n>'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="geomeval", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    ev = sub.add_parser("evaluate", help="evaluate reconstructions against ground truth")
    ev.add_argument("--manifest", nargs="+", required=True, type=Path)
    ev.add_argument("--method", default="method")
    ev.add_argument("--out", required=True, type=Path)
    ev.add_argument("--tau", action="append", type=float, help="tolerance in mm (repeatable)")
    ev.add_argument("--gt-sampling", type=_gt_sampling, default=None, metavar="vertices|surface:<n>")
    ev.add_argument("--export-colored", action="store_true")
    ev.add_argument("--threads", type=int, default=None)
    ev.add_argument("--seed", type=int, default=0, help="seed for surface sampling")

    rg = sub.add_parser("register", help="register a reconstruction using marker correspondences")
    rg.add_argument("--manifest", required=True, type=Path)
    rg.add_argument("--out", required=True, type=Path)

    sy = sub.add_parser("synth", help="write a synthetic scene (PLY pair + manifest)")
    sy.add_argument("shape", choices=["sphere", "box"])
    sy.add_argument("--out", required=True, type=Path)
    sy.add_argument("--n", type=int, default=100_000)
    sy.add_argument("--gt-n", type=int, default=None)
    sy.add_argument("--seed", type=int, default=0)
    sy.add_argument("--radius", type=float, default=0.05)
    sy.add_argument("--size", type=float, nargs=3, default=(0.08, 0.06, 0.12))
    sy.add_argument("--noise-sigma", type=float, default=0.0, help="meters, along the normal")
    sy.add_argument("--normal-offset", type=float, default=0.0, help="meters, along the normal")
    sy.add_argument("--dropout", type=float, default=0.0)
    sy.add_argument("--outliers", type=int, default=0)
    sy.add_argument("--offset-x", type=float, default=0.0)
    sy.add_argument("--offset-y", type=float, default=0.0)
    sy.add_argument("--offset-z", type=float, default=0.0)
    sy.add_argument("--unregistered", action="store_true",
                    help="store the reconstruction in a random similarity frame with markers")
    sy.add_argument("--scene-id", default="synthetic")

    rp = sub.add_parser("report", help="re-render tables from per-scene JSON results")
    rp.add_argument("results", nargs="+", help="result JSON files or directories")
    rp.add_argument("--out", required=True, type=Path)
    return parser


def _synth_config(args) -> SynthConfig:
    outlier_box = None
    if args.outliers:
        r = args.radius if args.shape == "sphere" else max(args.size) / 2
        outlier_box = AxisAlignedBox([-r, -r, 0.0], [r, r, 2 * r])
    deg = DegradationSpec(
        normal_noise_sigma=args.noise_sigma,
        dropout_fraction=args.dropout,
        outlier_count=args.outliers,
        outlier_box=outlier_box,
        uniform_offset=(args.offset_x, args.offset_y, args.offset_z),
        normal_offset=args.normal_offset,
        seed=args.seed,
    )
    return SynthConfig(shape=args.shape, n=args.n, gt_n=args.gt_n, radius=args.radius,
                       box_size=tuple(args.size), seed=args.seed, degradation=deg,
                       unregistered=args.unregistered, scene_id=args.scene_id)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    try:
        if args.command == "evaluate":
            cfg = RunConfig(
                manifests=list(args.manifest), method=args.method, out_dir=args.out,
                taus_mm=tuple(args.tau) if args.tau else None,
                gt_surface_samples=args.gt_sampling, export_colored=args.export_colored,
                threads=args.threads if args.threads is not None else os.cpu_count(),
                seed=args.seed,
            )
            return cmd_evaluate(cfg)
        if args.command == "register":
            return cmd_register(args.manifest, args.out)
        if args.command == "synth":
            try:
                cfg = _synth_config(args)
            except ValueError as e:
                raise UsageError(str(e)) from None
            return cmd_synth(cfg, args.out)
        return cmd_report(args.results, args.out)
    except UsageError as e:
        print(f"geomeval: error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
