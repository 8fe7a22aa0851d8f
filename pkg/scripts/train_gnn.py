"""Train the similarity model on a corpus and report held-out error against
the untrained model.  Defaults to the frozen training corpus and its preset."""

import argparse
import time
from dataclasses import replace
from pathlib import Path

from hiersym.dataset import Corpus, frozen_corpus
from hiersym.gnn import CORPUS_TRAINING, GedModel, graph_tensors, loss_window_violations, mse, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("corpus", nargs="?", help="corpus JSONL (default: bundled training corpus)")
    ap.add_argument("--lr", type=float, default=CORPUS_TRAINING.lr)
    ap.add_argument("--epochs", type=int, default=CORPUS_TRAINING.epochs)
    ap.add_argument("--seed", type=int, default=CORPUS_TRAINING.seed)
    ap.add_argument("--no-edge-labels", action="store_true")
    ap.add_argument("-o", "--output", type=Path, help="write the trained model here")
    ap.add_argument("--log", type=Path, help="write the per-epoch CSV log here")
    args = ap.parse_args()

    corpus = Corpus.read(args.corpus) if args.corpus else frozen_corpus("training")
    graphs, tr, te = corpus.training_set()
    cfg = replace(CORPUS_TRAINING, lr=args.lr, epochs=args.epochs, seed=args.seed,
                  use_edge_labels=not args.no_edge_labels)
    model = GedModel.init(cfg.seed, cfg.use_edge_labels)
    tensors = [graph_tensors(g) for g in graphs]
    baseline = mse(model, tensors, te)

    t0 = time.perf_counter()
    trained, log = train(model, graphs, tr, te, cfg)
    elapsed = time.perf_counter() - t0
    final = mse(trained, tensors, te)
    bad = loss_window_violations(log.train_loss, 10)

    print(f"{len(tr)} train / {len(te)} test pairs, lr {cfg.lr}, {cfg.epochs} epochs, {elapsed:.0f} s")
    print(f"held-out MSE {final:.5f} vs untrained {baseline:.5f} (ratio {final / baseline:.3f})")
    print(f"10-epoch windows whose mean loss did not fall: {len(bad)}"
          + (f", first at epoch {bad[0]}" if bad else ""))
    if args.output:
        trained.save(args.output)
    if args.log:
        args.log.write_text(log.to_csv())


if __name__ == "__main__":
    main()
