"""Cross-scene aggregation, comparison tables and error-coloured clouds."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import PointCloud
from .errors import IoFailure, LengthMismatch, SceneSetMismatch, ToleranceMismatch
from .geomio import write_ply_pointcloud
from .metrics import MetricsResult

UNDEFINED_MD = "—"


def tau_label(tau_mm: float) -> str:
    return f"{tau_mm:g}"


def columns_for(taus_mm) -> list[str]:
    """Column keys in table order: Chamfer/Std block, then P/R/F1 per tolerance."""
    cols = ["cd_p2g_mm"] + [f"std{tau_label(t)}_mm" for t in taus_mm] + ["cd_g2p_mm"]
    for t in taus_mm:
        lab = tau_label(t)
        cols += [f"prec{lab}", f"rec{lab}", f"f1_{lab}"]
    return cols


def _lower_is_better(col: str) -> bool:
    return col.startswith(("cd_", "std"))


def _mean(values):
    return float(np.mean(values)) if values else None


@dataclass
class BenchmarkRun:
    """Per-scene results of one method; the aggregate is an unweighted scene mean."""

    method_name: str
    scenes: dict[str, MetricsResult]
    aggregate: dict[str, float | None] = field(init=False)
    # number of scenes whose Std@tau was undefined, per std column
    std_excluded: dict[str, int] = field(init=False)

    def __post_init__(self):
        if not self.scenes:
            raise ValueError("a benchmark run needs at least one scene")
        taus = self.taus_mm
        for sid, r in self.scenes.items():
            if r.taus_mm != taus:
                raise ToleranceMismatch(f"scene {sid!r} uses tolerances {r.taus_mm}, expected {taus}")
        results = list(self.scenes.values())
        agg: dict[str, float | None] = {
            "cd_p2g_mm": _mean([r.cd_p_to_g_mm for r in results]),
            "cd_g2p_mm": _mean([r.cd_g_to_p_mm for r in results]),
        }
        excluded = {}
        for t in taus:
            lab = tau_label(t)
            per = [r.at(t) for r in results]
            stds = [m.std_mm for m in per if m.std_mm is not None]
            agg[f"std{lab}_mm"] = _mean(stds)
            excluded[f"std{lab}_mm"] = len(per) - len(stds)
            agg[f"prec{lab}"] = _mean([m.precision for m in per])
            agg[f"rec{lab}"] = _mean([m.recall for m in per])
            # F1 is averaged per scene, not recomputed from mean P and R
            agg[f"f1_{lab}"] = _mean([m.f1 for m in per])
        self.aggregate = agg
        self.std_excluded = excluded

    @property
    def taus_mm(self) -> tuple[float, ...]:
        return next(iter(self.scenes.values())).taus_mm


@dataclass
class ComparisonTable:
    taus_mm: tuple[float, ...]
    columns: list[str]
    # (method, {column: value or None}) in insertion order
    rows: list[tuple[str, dict[str, float | None]]]
    best: dict[str, set[str]]


def aggregate_runs(runs: list[BenchmarkRun], taus_mm=None) -> ComparisonTable:
    if not runs:
        taus = tuple(taus_mm) if taus_mm is not None else (2.0, 5.0)
        cols = columns_for(taus)
        return ComparisonTable(taus, cols, [], {c: set() for c in cols})
    taus = runs[0].taus_mm
    scene_ids = set(runs[0].scenes)
    for run in runs[1:]:
        if run.taus_mm != taus:
            raise ToleranceMismatch(f"{run.method_name!r} uses {run.taus_mm}, expected {taus}")
        if set(run.scenes) != scene_ids:
            raise SceneSetMismatch(f"{run.method_name!r} covers a different scene set")
    cols = columns_for(taus)
    rows = [(run.method_name, {c: run.aggregate[c] for c in cols}) for run in runs]
    best = {}
    for c in cols:
        vals = [(m, v[c]) for m, v in rows if v[c] is not None]
        if not vals:
            best[c] = set()
            continue
        target = (min if _lower_is_better(c) else max)(v for _, v in vals)
        best[c] = {m for m, v in vals if v == target}
    return ComparisonTable(taus, cols, rows, best)


def fmt2(value: float | None) -> str:
    # str.format rounds the exact binary value, half-to-even on exact ties
    return "" if value is None else f"{value:.2f}"


def render_csv(table: ComparisonTable) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["method"] + table.columns)
    for method, vals in table.rows:
        w.writerow([method] + [fmt2(vals[c]) for c in table.columns])
    return buf.getvalue()


def _md_header(col: str) -> str:
    if col == "cd_p2g_mm":
        return "CD P→G [mm]"
    if col == "cd_g2p_mm":
        return "CD G→P [mm]"
    if col.startswith("std"):
        return f"Std@{col[3:-3]}mm"
    for prefix, name in (("prec", "Prec"), ("rec", "Rec"), ("f1_", "F1")):
        if col.startswith(prefix):
            return f"{name}@{col[len(prefix):]}mm"
    return col


def render_markdown(table: ComparisonTable) -> str:
    lines = ["| Method | " + " | ".join(_md_header(c) for c in table.columns) + " |",
             "|---|" + "---:|" * len(table.columns)]
    for method, vals in table.rows:
        cells = []
        for c in table.columns:
            v = vals[c]
            if v is None:
                cells.append(UNDEFINED_MD)
            elif method in table.best[c]:
                cells.append(f"**{fmt2(v)}**")
            else:
                cells.append(fmt2(v))
        lines.append(f"| {method} | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def _write_text(path, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="")
    except OSError as e:
        raise IoFailure(str(e)) from e


def write_csv(table: ComparisonTable, path) -> None:
    _write_text(path, render_csv(table))


def write_markdown(table: ComparisonTable, path) -> None:
    _write_text(path, render_markdown(table))


@dataclass(frozen=True)
class ErrorColormap:
    """Piecewise-linear three-colour ramp over [0, cap_mm]."""

    cap_mm: float = 5.0
    ramp: tuple[tuple[int, int, int], ...] = ((0, 0, 255), (0, 255, 0), (255, 0, 0))

    def __post_init__(self):
        if not self.cap_mm > 0:
            raise ValueError("cap_mm must be positive")
        if len(self.ramp) != 3:
            raise ValueError("ramp needs exactly three anchor colours")

    def __call__(self, errors_mm) -> np.ndarray:
        t = np.clip(np.asarray(errors_mm, dtype=np.float64) / self.cap_mm, 0.0, 1.0)[:, None]
        low, mid, high = (np.asarray(c, dtype=np.float64) for c in self.ramp)
        lower = low + (mid - low) * (2.0 * t)
        upper = mid + (high - mid) * (2.0 * t - 1.0)
        rgb = np.where(t <= 0.5, lower, upper)
        return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def export_error_cloud(p: PointCloud, profile_forward, cmap: ErrorColormap, path) -> None:
    """Write ``p`` as PLY coloured by each point's distance to the ground truth."""
    d = np.asarray(profile_forward, dtype=np.float64)
    if d.shape != (len(p),):
        raise LengthMismatch(f"{len(d)} distances for {len(p)} points")
    colored = PointCloud(p.points, cmap(d * 1000.0))
    write_ply_pointcloud(colored, path, "binary_little_endian", dtype="double")
