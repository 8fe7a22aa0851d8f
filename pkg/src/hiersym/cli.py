"""Command-line entry point: ``hiersym <subcommand> ...``.

Exit codes: 0 success, 2 constraint inconsistency (verify), 3 stale
constraint references (verify), 64 usage error, 65 malformed input
(netlist, library, corpus or model file), 66 missing input file, 70 internal
failure such as diverged training.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import SCHEMA_VERSION, __version__
from . import constraints as C

EX_USAGE = 64
EX_DATAERR = 65
EX_NOINPUT = 66
EX_SOFTWARE = 70

log = logging.getLogger("hiersym")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EX_USAGE, f"{self.prog}: error: {message}\n")


def _version_text() -> str:
    from .dataset import CORPUS_SCHEMA
    from .gnn import MODEL_FORMAT
    from .primitives import LIBRARY_VERSION

    return (f"hiersym {__version__} (constraints schema {SCHEMA_VERSION}, model format {MODEL_FORMAT}, "
            f"corpus schema {CORPUS_SCHEMA}, library version {LIBRARY_VERSION})")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="hiersym", description="Hierarchical symmetry constraint extraction for analog netlists.")
    p.add_argument("--version", action="version", version=_version_text())
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="extract symmetry constraints from a netlist")
    d.add_argument("netlist")
    d.add_argument("--library", help="primitive library JSON (default: built-in)")
    d.add_argument("--approx", choices=("off", "gnn", "exact"), default="exact",
                   help="approximate matching of composite blocks (default: exact GED)")
    d.add_argument("--bound", type=float, default=0.75, help="minimum similarity for an approximate match")
    d.add_argument("--model", help="trained model JSON, required with --approx gnn")
    d.add_argument("--supply", action="append", default=[], help="extra supply/ground net name (repeatable)")
    d.add_argument("--threads", type=int, default=1)
    d.add_argument("--seed", type=int, default=0, help="accepted for uniformity; detection is deterministic")
    d.add_argument("-o", "--output", help="constraint file (default: stdout)")

    g = sub.add_parser("ged", help="exact graph edit distance between two netlists")
    g.add_argument("netlist_a")
    g.add_argument("netlist_b")
    g.add_argument("--subckt-a")
    g.add_argument("--subckt-b")
    g.add_argument("--budget", type=int, help="cap on search nodes; result may then be inexact")
    g.add_argument("--path", action="store_true", help="include the edit path")
    g.add_argument("-o", "--output")

    t = sub.add_parser("train", help="train the similarity model on a corpus file")
    t.add_argument("corpus")
    t.add_argument("-o", "--output", required=True, help="model JSON")
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--epochs", type=int, default=300)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--no-edge-labels", action="store_true")
    t.add_argument("--log", help="CSV training log (epoch,train_loss,test_loss)")

    s = sub.add_parser("gen-dataset", help="generate a labelled synthetic pair corpus")
    s.add_argument("netlists", nargs="*", help="base netlists (default: bundled fixtures + random graphs)")
    s.add_argument("--pairs", type=int, default=79)
    s.add_argument("--max-edits", type=int, default=6)
    s.add_argument("--ops", help="comma-separated edit kinds")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("-o", "--output", required=True)

    e = sub.add_parser("embed", help="compute (and cache) graph embeddings of netlists")
    e.add_argument("model")
    e.add_argument("netlists", nargs="+")
    e.add_argument("--cache-dir", help="default: $HIERSYM_CACHE_DIR")
    e.add_argument("-o", "--output")

    c = sub.add_parser("score", help="predicted similarity of two netlists")
    c.add_argument("model")
    c.add_argument("netlist_a")
    c.add_argument("netlist_b")
    c.add_argument("--cache-dir")

    v = sub.add_parser("verify", help="re-check a constraint file against its netlist")
    v.add_argument("netlist")
    v.add_argument("constraints")
    v.add_argument("--library")
    v.add_argument("--supply", action="append", default=[])

    dg = sub.add_parser("dump-graph", help="print the circuit graph of one subcircuit as JSON")
    dg.add_argument("netlist")
    dg.add_argument("--subckt", help="default: top level")
    dg.add_argument("--collapsed", action="store_true", help="after dummy removal and primitive collapse")
    dg.add_argument("--library")
    return p


# ---------------------------------------------------------------- helpers

def _read(path: str) -> str:
    try:
        return Path(path).read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"no such file: {path}") from None


def _design(path: str):
    from .netlist import parse_netlist

    return parse_netlist(_read(path))


def _library(path: str | None):
    from .primitives import builtin_library, load_library

    if path is None:
        return builtin_library()
    _read(path)
    return load_library(path)


def _write(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text if text.endswith("\n") else text + "\n")
    else:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")


def _flat_labeled(path: str, subckt: str | None):
    from .ged import from_circuit_graph
    from .graph import build_flat_graph, remove_inert_dummies

    design = _design(path)
    name = subckt or design.top
    if name not in design.subckts:
        raise UsageError(f"{path}: no subcircuit {name!r}")
    return from_circuit_graph(remove_inert_dummies(build_flat_graph(design, name)))


# ---------------------------------------------------------------- commands

def cmd_detect(args) -> int:
    from .symmetry import DetectOptions, run_detection

    model = None
    if args.approx == "gnn":
        from .gnn import GedModel

        model = GedModel.load(args.model)
    if args.threads < 1:
        raise UsageError("--threads must be at least 1")
    opts = DetectOptions(approx=args.approx, bound=args.bound, model=model, threads=args.threads,
                         supply_overrides=tuple(args.supply))
    if opts.approx == "gnn":
        from .gnn import EmbeddingCache

        opts.cache = EmbeddingCache()
    res = run_detection(_design(args.netlist), _library(args.library), opts)
    _write(res.dumps(), args.output)
    return 0


def cmd_ged(args) -> int:
    from .ged import GedSizeError, ged_exact

    g1 = _flat_labeled(args.netlist_a, args.subckt_a)
    g2 = _flat_labeled(args.netlist_b, args.subckt_b)
    try:
        res = ged_exact(g1, g2, budget=args.budget)
    except GedSizeError as exc:
        raise UsageError(str(exc)) from None
    _write(json.dumps(res.to_dict(with_path=args.path), sort_keys=True), args.output)
    return 0


def cmd_train(args) -> int:
    from .dataset import Corpus
    from .gnn import GedModel, TrainConfig, train

    corpus = Corpus.read(args.corpus) if Path(args.corpus).exists() else None
    if corpus is None:
        raise FileNotFoundError(f"no such file: {args.corpus}")
    graphs, tr, te = corpus.training_set()
    cfg = TrainConfig(lr=args.lr, epochs=args.epochs, seed=args.seed, use_edge_labels=not args.no_edge_labels)
    model = GedModel.init(cfg.seed, use_edge_labels=cfg.use_edge_labels)
    trained, history = train(model, graphs, tr, te, cfg)
    trained.save(args.output)
    if args.log:
        Path(args.log).write_text(history.to_csv())
    log.info("model %s written to %s", trained.version, args.output)
    return 0


def cmd_gen_dataset(args) -> int:
    from .dataset import ALL_OPS, build_corpus, default_base_graphs, design_base_graphs

    if args.pairs < 0 or args.max_edits < 0:
        raise UsageError("--pairs and --max-edits must be non-negative")
    ops = ALL_OPS
    if args.ops:
        ops = tuple(o.strip() for o in args.ops.split(",") if o.strip())
        known = set(ALL_OPS) | {"label_swap"}
        bad = [o for o in ops if o not in known]
        if bad or not ops:
            raise UsageError(f"unknown edit kinds: {', '.join(bad) or '(none given)'}")
    if args.netlists:
        bases = []
        for path in args.netlists:
            bases += [(f"{Path(path).stem}:{n}", g) for n, g in design_base_graphs(_design(path))]
    else:
        bases = default_base_graphs(args.seed)
    corpus = build_corpus(bases, args.pairs, args.seed, max_edits=args.max_edits, ops=ops)
    corpus.write(args.output)
    log.info("%d pairs (%d train / %d test) written to %s", len(corpus.records), len(corpus.train),
             len(corpus.test), args.output)
    return 0


def cmd_embed(args) -> int:
    from .gnn import EmbeddingCache, GedModel, embed_subblock

    model = GedModel.load(args.model)
    cache = EmbeddingCache(args.cache_dir)
    out = []
    for path in args.netlists:
        emb = embed_subblock(_flat_labeled(path, None), model, cache)
        out.append({"netlist": path, "graph": emb.graph_id, "model_version": emb.model_version,
                    "embedding": [float(x) for x in emb.h]})
    _write(json.dumps(out, sort_keys=True), args.output)
    log.info("cache %s", cache.stats)
    return 0


def cmd_score(args) -> int:
    from .gnn import EmbeddingCache, GedModel, embed_subblock, score_embeddings

    model = GedModel.load(args.model)
    cache = EmbeddingCache(args.cache_dir)
    a = embed_subblock(_flat_labeled(args.netlist_a, None), model, cache)
    b = embed_subblock(_flat_labeled(args.netlist_b, None), model, cache)
    ps = score_embeddings(a, b, model)
    _write(json.dumps({"similarity": ps, "model_version": model.version}, sort_keys=True), None)
    return 0


def cmd_verify(args) -> int:
    from .symmetry import DetectOptions

    design = _design(args.netlist)
    cons = C.loads(_read(args.constraints))
    report = C.verify(cons, design, _library(args.library), DetectOptions(supply_overrides=tuple(args.supply)))
    print(report.summary())
    return report.exit_code


def cmd_dump_graph(args) -> int:
    from .graph import build_graph
    from .netlist import identify_supply_nets
    from .symmetry import prepare_scope

    design = _design(args.netlist)
    name = args.subckt or design.top
    if name not in design.subckts:
        raise UsageError(f"no subcircuit {name!r}")
    if args.collapsed:
        g = prepare_scope(design, name, _library(args.library)).graph
    else:
        g = build_graph(design.subckts[name], design, identify_supply_nets(design))
    _write(g.dump(), None)
    return 0


COMMANDS = {
    "detect": cmd_detect,
    "ged": cmd_ged,
    "train": cmd_train,
    "gen-dataset": cmd_gen_dataset,
    "embed": cmd_embed,
    "score": cmd_score,
    "verify": cmd_verify,
    "dump-graph": cmd_dump_graph,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if args.command == "detect" and args.approx == "gnn" and not args.model:
        parser.print_usage(sys.stderr)
        print("hiersym: error: --approx gnn requires --model", file=sys.stderr)
        return EX_USAGE

    from .gnn import TrainingDiverged
    from .netlist import NetlistError
    from .primitives import LibraryError

    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"hiersym: error: {exc}", file=sys.stderr)
        return EX_USAGE
    except FileNotFoundError as exc:
        print(f"hiersym: {exc}", file=sys.stderr)
        return EX_NOINPUT
    except (NetlistError, LibraryError, ValueError, json.JSONDecodeError, KeyError) as exc:
        print(f"hiersym: invalid input: {exc}", file=sys.stderr)
        return EX_DATAERR
    except TrainingDiverged as exc:
        print(f"hiersym: {exc}", file=sys.stderr)
        return EX_SOFTWARE


if __name__ == "__main__":
    sys.exit(main())
