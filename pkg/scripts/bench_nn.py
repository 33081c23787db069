"""Time KD-tree build and batch nearest-neighbour queries."""
import argparse
import time

import numba
import numpy as np

from geomeval.spatial import build, nearest_batch
from geomeval.synth import make_sphere_cloud


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1_000_000, help="index size")
    ap.add_argument("--m", type=int, default=1_000_000, help="number of queries")
    ap.add_argument("--data", choices=["uniform", "sphere"], default="uniform")
    ap.add_argument("--threads", type=int, default=None)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if args.threads:
        numba.set_num_threads(args.threads)

    rng = np.random.default_rng(args.seed)
    if args.data == "uniform":
        pts, queries = rng.random((args.n, 3)), rng.random((args.m, 3))
    else:
        # queries sit 3 mm outside a 5 cm sphere, the awkward case for pruning
        pts = make_sphere_cloud(0.05, args.n, args.seed).points
        queries = make_sphere_cloud(0.053, args.m, args.seed + 1).points

    build(pts[:1000]).query(queries[:10])  # JIT warm-up
    t0 = time.perf_counter()
    index = build(pts)
    t1 = time.perf_counter()
    d = nearest_batch(index, queries)
    t2 = time.perf_counter()
    print(f"threads={numba.get_num_threads()} data={args.data} n={args.n} m={args.m}")
    print(f"build {t1 - t0:.3f}s  query {t2 - t1:.3f}s  mean dist {d.mean():.6g}")


if __name__ == "__main__":
    main()
