"""Regenerate the frozen corpora shipped in hiersym/data.

Labelling runs exact GED on every pair, so the training corpus takes several
minutes to build.
"""

import argparse
import collections
import time
from pathlib import Path

from hiersym.dataset import LABEL_SWAP_CORPUS, TRAINING_CORPUS

DATA = Path(__file__).resolve().parents[1] / "src" / "hiersym" / "data"
RECIPES = {"training": TRAINING_CORPUS, "label_swap": LABEL_SWAP_CORPUS}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("names", nargs="*", default=sorted(RECIPES), choices=sorted(RECIPES))
    ap.add_argument("--out-dir", type=Path, default=DATA)
    args = ap.parse_args()
    for name in args.names:
        t0 = time.perf_counter()
        corpus = RECIPES[name].build()
        path = args.out_dir / f"{name}_corpus.jsonl"
        corpus.write(path)
        hist = sorted(collections.Counter(r.gs for r in corpus.records).items())
        print(f"{name}: {len(corpus.train)} train / {len(corpus.test)} test pairs in "
              f"{time.perf_counter() - t0:.0f} s -> {path}; similarity histogram {hist}")


if __name__ == "__main__":
    main()
