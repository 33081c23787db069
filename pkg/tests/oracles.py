"""Independent brute-force reference implementations used by the tests."""
import math
import statistics

import numpy as np


def brute_nn(points, queries, chunk=256):
    """Exhaustive nearest neighbour: (distances, lowest index attaining the min)."""
    P = np.asarray(points, dtype=np.float64)
    Q = np.asarray(queries, dtype=np.float64)
    dist = np.empty(len(Q))
    idx = np.empty(len(Q), dtype=np.int64)
    for s in range(0, len(Q), chunk):
        q = Q[s:s + chunk]
        dx = q[:, None, 0] - P[None, :, 0]
        dy = q[:, None, 1] - P[None, :, 1]
        dz = q[:, None, 2] - P[None, :, 2]
        d2 = dx * dx + dy * dy + dz * dz
        k = np.argmin(d2, axis=1)  # first occurrence == lowest index
        idx[s:s + chunk] = k
        dist[s:s + chunk] = np.sqrt(d2[np.arange(len(q)), k])
    return dist, idx


def brute_metrics(p, g, taus_mm):
    """Every metric recomputed with plain Python reductions."""
    fwd, _ = brute_nn(g, p)
    bwd, _ = brute_nn(p, g)
    out = {
        "cd_p_to_g_mm": math.fsum(fwd.tolist()) / len(fwd) * 1000.0,
        "cd_g_to_p_mm": math.fsum(bwd.tolist()) / len(bwd) * 1000.0,
    }
    for tau in taus_mm:
        thr = tau / 1000.0
        below = [d * 1000.0 for d in fwd.tolist() if d < thr]
        prec = len(below) / len(fwd)
        rec = sum(1 for d in bwd.tolist() if d < thr) / len(bwd)
        f1 = 0.0 if prec + rec == 0 else 2 * prec * rec / (prec + rec)
        out[tau] = {
            "std_mm": statistics.pstdev(below) if len(below) >= 2 else None,
            "precision": prec,
            "recall": rec,
            "f1": f1,
        }
    return out


def barycentric(p, a, b, c):
    """Barycentric coordinates of p in triangle abc (least squares)."""
    m = np.column_stack([b - a, c - a])
    uv, *_ = np.linalg.lstsq(m, p - a, rcond=None)
    return np.array([1.0 - uv.sum(), uv[0], uv[1]])


def rel_close(a, b, rtol):
    if a is None or b is None:
        return a is None and b is None
    return abs(a - b) <= rtol * max(abs(a), abs(b)) or a == b
