"""Exact GED runtime against graph size on seeded random bipartite pairs."""

import argparse
import random
import statistics
import time

from hiersym.dataset import perturb, random_bipartite
from hiersym.ged import ged_exact


def pair(rng, n, edits):
    """A random graph and a copy with ``edits`` random edits, or an unrelated
    graph of the same size when ``edits`` is None."""
    k = n // 2
    g1 = random_bipartite(rng, k, n - k)
    if edits is None:
        return g1, random_bipartite(rng, k, n - k)
    return g1, perturb(g1, edits, rng.randrange(2**31), ops=("edge_move", "vertex_relabel"))[0]


def measure(n, pairs, seed, edits=None):
    rng = random.Random(seed * 1000 + n)
    times, nodes = [], []
    for _ in range(pairs):
        g1, g2 = pair(rng, n, edits)
        t0 = time.perf_counter()
        res = ged_exact(g1, g2)
        times.append(time.perf_counter() - t0)
        nodes.append(res.expanded)
    return statistics.median(times), statistics.median(nodes)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--sizes", type=int, nargs="+", default=[6, 10, 14])
    ap.add_argument("--pairs", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--edits", type=int, help="pair each graph with a perturbed copy instead of an unrelated graph")
    args = ap.parse_args()
    print("vertices  median_s  median_expanded")
    for n in args.sizes:
        t, e = measure(n, args.pairs, args.seed, args.edits)
        print(f"{n:8d}  {t:8.4f}  {e:15.0f}")


if __name__ == "__main__":
    main()
