"""Point-cloud accuracy metrics: directional Chamfer, Std@tau and P/R/F1.

Clouds are in meters. Reported distances are in millimeters; precision,
recall and F1 are fractions. Thresholds use a strict ``d < tau``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import PointCloud
from .errors import EmptyCloud
from .spatial import build

DEFAULT_TAUS_MM = (2.0, 5.0)


@dataclass(frozen=True)
class ToleranceSpec:
    taus_mm: tuple[float, ...] = DEFAULT_TAUS_MM

    def __post_init__(self):
        taus = tuple(float(t) for t in self.taus_mm)
        if not taus:
            raise ValueError("at least one tolerance is required")
        if any(not math.isfinite(t) or t <= 0 for t in taus):
            raise ValueError(f"tolerances must be positive, got {taus}")
        if any(b <= a for a, b in zip(taus, taus[1:])):
            raise ValueError(f"tolerances must be strictly increasing, got {taus}")
        object.__setattr__(self, "taus_mm", taus)


@dataclass(frozen=True, eq=False)
class DistanceProfile:
    """Nearest-neighbour distances in meters, P->G (forward) and G->P (backward)."""

    forward: np.ndarray
    backward: np.ndarray
    # nearest ground-truth index for each reconstructed point
    forward_index: np.ndarray | None = None


def _mm_threshold(tau_mm: float) -> float:
    if not tau_mm > 0:
        raise ValueError(f"tolerance must be positive, got {tau_mm}")
    return tau_mm / 1000.0


def distance_profile(p: PointCloud, g: PointCloud) -> DistanceProfile:
    if len(p) == 0:
        raise EmptyCloud("reconstruction cloud is empty", side="reconstruction")
    if len(g) == 0:
        raise EmptyCloud("ground-truth cloud is empty", side="ground_truth")
    fwd, fwd_idx = build(g).query(p.points)
    bwd, _ = build(p).query(g.points)
    return DistanceProfile(fwd, bwd, fwd_idx)


def chamfer(profile: DistanceProfile) -> tuple[float, float]:
    """Mean unsquared NN distance in each direction, in mm."""
    return float(np.mean(profile.forward)) * 1000.0, float(np.mean(profile.backward)) * 1000.0


def std_at_tau(profile: DistanceProfile, tau_mm: float) -> float | None:
    """Population std (mm) of forward distances below tau; None if fewer than 2 qualify."""
    fwd = profile.forward
    sel = fwd[fwd < _mm_threshold(tau_mm)]
    if len(sel) < 2:
        return None
    return float(np.std(sel * 1000.0))


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(profile: DistanceProfile, tau_mm: float) -> tuple[float, float, float]:
    thr = _mm_threshold(tau_mm)
    precision = np.count_nonzero(profile.forward < thr) / len(profile.forward)
    recall = np.count_nonzero(profile.backward < thr) / len(profile.backward)
    return float(precision), float(recall), f1_score(precision, recall)


@dataclass(frozen=True)
class ToleranceMetrics:
    tau_mm: float
    std_mm: float | None
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsResult:
    cd_p_to_g_mm: float
    cd_g_to_p_mm: float
    per_tau: tuple[ToleranceMetrics, ...]
    n_p: int
    n_g: int

    @property
    def taus_mm(self) -> tuple[float, ...]:
        return tuple(m.tau_mm for m in self.per_tau)

    def at(self, tau_mm: float) -> ToleranceMetrics:
        for m in self.per_tau:
            if m.tau_mm == tau_mm:
                return m
        raise KeyError(tau_mm)

    def to_dict(self) -> dict:
        return {
            "cd_p_to_g_mm": self.cd_p_to_g_mm,
            "cd_g_to_p_mm": self.cd_g_to_p_mm,
            "n_p": self.n_p,
            "n_g": self.n_g,
            "tolerances": [
                {"tau_mm": m.tau_mm, "std_mm": m.std_mm, "precision": m.precision,
                 "recall": m.recall, "f1": m.f1}
                for m in self.per_tau
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetricsResult:
        per_tau = tuple(
            ToleranceMetrics(float(t["tau_mm"]), None if t["std_mm"] is None else float(t["std_mm"]),
                             float(t["precision"]), float(t["recall"]), float(t["f1"]))
            for t in d["tolerances"]
        )
        return cls(float(d["cd_p_to_g_mm"]), float(d["cd_g_to_p_mm"]), per_tau,
                   int(d["n_p"]), int(d["n_g"]))


def metrics_from_profile(profile: DistanceProfile, tol: ToleranceSpec = ToleranceSpec()) -> MetricsResult:
    cd_pg, cd_gp = chamfer(profile)
    per_tau = []
    for tau in tol.taus_mm:
        prec, rec, f1 = precision_recall_f1(profile, tau)
        per_tau.append(ToleranceMetrics(tau, std_at_tau(profile, tau), prec, rec, f1))
    return MetricsResult(cd_pg, cd_gp, tuple(per_tau), len(profile.forward), len(profile.backward))


def evaluate_pair(p: PointCloud, g: PointCloud, tol: ToleranceSpec = ToleranceSpec()) -> MetricsResult:
    return metrics_from_profile(distance_profile(p, g), tol)
