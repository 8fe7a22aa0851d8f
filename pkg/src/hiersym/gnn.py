"""Learned graph-similarity predictor.

Pipeline per graph: three GCN layers (128 -> 64 -> 32 -> 16) give node
embeddings, a tanh global context drives sigmoid attention pooling into a
16-dim graph embedding.  Per pair: an 8-slice neural tensor network followed
by an 8 -> 8 -> 1 fully connected head with a final sigmoid.

All gradients are written out by hand (float64 numpy); tests compare them to
central finite differences.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ged import DEFAULT_BINS, LabeledGraph, SimilarityBins

log = logging.getLogger(__name__)

MODEL_FORMAT = 1
IN_DIM = 128
FEATURE_SCALE = 0.4  # one-hot magnitude; smaller inputs keep first-layer curvature near the rest
LAYER_DIMS = (128, 64, 32, 16)
NTN_SLICES = 8
FC_HIDDEN = 8
LABEL_BITS = (4, 2, 1)  # gate, source, drain

_CATEGORIES = [
    ("NET", "NET"),
    ("ELEMENT", "NMOS"),
    ("ELEMENT", "PMOS"),
    ("ELEMENT", "RES"),
    ("ELEMENT", "CAP"),
    ("ELEMENT", "IND"),
    ("ELEMENT", "SUBCKT_INSTANCE"),
    ("ELEMENT", "PRIMITIVE"),
]
_CAT_INDEX = {c: i for i, c in enumerate(_CATEGORIES)}


def category(label) -> int:
    label = tuple(label) if isinstance(label, (list, tuple)) else label
    if label in _CAT_INDEX:
        return _CAT_INDEX[label]
    spare = IN_DIM - len(_CATEGORIES)
    return len(_CATEGORIES) + zlib.crc32(repr(label).encode()) % spare


def _edge_bits(lab) -> int:
    if isinstance(lab, tuple) and lab and isinstance(lab[0], int):
        return lab[0]
    return lab if isinstance(lab, int) else 0


@dataclass
class GraphTensors:
    """Per-graph inputs in canonical vertex order: one-hot features and
    sparse normalized propagators."""

    x: np.ndarray  # N x 128
    norm: object  # D^-1/2 (A + I) D^-1/2, scipy CSR
    label_norms: list  # one per terminal bit, same scaling

    @property
    def n(self) -> int:
        return self.x.shape[0]


def canonical_order(g: LabeledGraph) -> list[int]:
    """Vertices sorted by stable colour refinement over labels and edge bits.

    Vertices sharing a final colour receive bit-identical values in every
    layer, so summing in this order makes embeddings exactly invariant to
    the input numbering.
    """
    colour = [category(lab) for lab in g.labels]
    n_classes = len(set(colour))
    for _ in range(g.n):
        sig = [(colour[v], tuple(sorted((_edge_bits(lab), colour[u]) for u, lab in g.adj[v].items())))
               for v in range(g.n)]
        rank = {s: i for i, s in enumerate(sorted(set(sig)))}
        colour = [rank[s] for s in sig]
        if len(rank) == n_classes:
            break
        n_classes = len(rank)
    return sorted(range(g.n), key=lambda v: colour[v])


def graph_tensors(g: LabeledGraph) -> GraphTensors:
    from scipy import sparse

    order = canonical_order(g)
    pos = {v: i for i, v in enumerate(order)}
    n = g.n
    x = np.zeros((n, IN_DIM))
    for v, lab in enumerate(g.labels):
        x[pos[v], category(lab)] = FEATURE_SCALE
    deg = np.ones(n)
    for a, b in g.edges:
        deg[pos[a]] += 1
        deg[pos[b]] += 1
    dinv = 1.0 / np.sqrt(deg)
    rows, cols, vals = list(range(n)), list(range(n)), list(dinv * dinv)
    bit_entries = [([], [], []) for _ in LABEL_BITS]
    for (a, b), lab in g.edges.items():
        i, j = pos[a], pos[b]
        w = dinv[i] * dinv[j]
        rows += [i, j]
        cols += [j, i]
        vals += [w, w]
        bits = _edge_bits(lab)
        for k, bit in enumerate(LABEL_BITS):
            if bits & bit:
                r, c, v = bit_entries[k]
                r += [i, j]
                c += [j, i]
                v += [w, w]

    def csr(r, c, v):
        m = sparse.csr_matrix((v, (r, c)), shape=(n, n))
        m.sort_indices()
        return m

    return GraphTensors(x, csr(rows, cols, vals), [csr(*e) for e in bit_entries])


# ---------------------------------------------------------------- model


def _glorot(rng, shape):
    fan_in, fan_out = shape[0], shape[1]
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape)


@dataclass
class GedModel:
    params: dict[str, np.ndarray]
    use_edge_labels: bool = True
    bins: SimilarityBins = DEFAULT_BINS
    hyper: dict = field(default_factory=dict)

    @classmethod
    def init(cls, seed: int = 0, use_edge_labels: bool = True, bins: SimilarityBins = DEFAULT_BINS) -> "GedModel":
        rng = np.random.default_rng(seed)
        p: dict[str, np.ndarray] = {}
        for l in range(3):
            shape = (LAYER_DIMS[l], LAYER_DIMS[l + 1])
            p[f"W1_{l}"] = _glorot(rng, shape)
            if use_edge_labels:
                for t in range(len(LABEL_BITS)):
                    p[f"U1_{l}_{t}"] = _glorot(rng, shape)
        d = LAYER_DIMS[-1]
        p["W2"] = _glorot(rng, (d, d))
        lim = np.sqrt(6.0 / (2 * d))
        p["W3"] = rng.uniform(-lim, lim, size=(d, d, NTN_SLICES))
        p["V"] = _glorot(rng, (NTN_SLICES, 2 * d))
        p["b"] = np.full(NTN_SLICES, 0.1)
        p["F1"] = _glorot(rng, (NTN_SLICES, FC_HIDDEN))
        p["f1"] = np.full(FC_HIDDEN, 0.1)
        p["F2"] = _glorot(rng, (FC_HIDDEN, 1))[:, 0]
        p["f2"] = np.zeros(1)
        return cls(p, use_edge_labels, bins)

    def copy(self) -> "GedModel":
        return GedModel({k: v.copy() for k, v in self.params.items()}, self.use_edge_labels, self.bins, dict(self.hyper))

    @property
    def version(self) -> str:
        """Content hash; reading it freezes the tensors so it cannot go stale."""
        cached = self.__dict__.get("_version")
        if cached is not None and all(not v.flags.writeable for v in self.params.values()):
            return cached
        for v in self.params.values():
            v.flags.writeable = False
        h = hashlib.sha256()
        h.update(json.dumps({"labels": self.use_edge_labels, "bins": self.bins.to_dict()}, sort_keys=True).encode())
        for k in sorted(self.params):
            h.update(k.encode())
            h.update(np.ascontiguousarray(self.params[k]).tobytes())
        self._version = h.hexdigest()[:16]
        return self._version

    def to_dict(self) -> dict:
        return {
            "format": MODEL_FORMAT,
            "version": self.version,
            "use_edge_labels": self.use_edge_labels,
            "bins": self.bins.to_dict(),
            "hyper": self.hyper,
            "shapes": {k: list(v.shape) for k, v in sorted(self.params.items())},
            "tensors": {k: v.ravel().tolist() for k, v in sorted(self.params.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GedModel":
        if d.get("format") != MODEL_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        params = {k: np.asarray(v, dtype=float).reshape(d["shapes"][k]) for k, v in d["tensors"].items()}
        for k, v in params.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite values in {k}")
        m = cls(params, d["use_edge_labels"], SimilarityBins.from_dict(d["bins"]), d.get("hyper", {}))
        if d.get("version") and d["version"] != m.version:
            raise ValueError("model file version hash does not match its tensors")
        return m

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path: str | Path) -> "GedModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------- forward pieces


def gcn_forward(gt: GraphTensors, model: GedModel):
    """Node embeddings X^3 and the per-layer cache used by the backward pass."""
    p = model.params
    xs = [gt.x]
    zs = []
    x = gt.x
    for l in range(3):
        z = gt.norm @ x @ p[f"W1_{l}"]
        if model.use_edge_labels:
            for t, m in enumerate(gt.label_norms):
                z = z + m @ x @ p[f"U1_{l}_{t}"]
        x = np.maximum(z, 0.0)
        zs.append(z)
        xs.append(x)
    return x, (xs, zs)


def graph_context(x3: np.ndarray, w2: np.ndarray) -> np.ndarray:
    return np.tanh(x3.mean(axis=0) @ w2)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def graph_embed(x3: np.ndarray, c: np.ndarray) -> np.ndarray:
    return _sigmoid(x3 @ c) @ x3


def ntn_score(hi: np.ndarray, hj: np.ndarray, model: GedModel) -> np.ndarray:
    p = model.params
    z = np.einsum("i,ijk,j->k", hi, p["W3"], hj) + p["V"] @ np.concatenate([hi, hj]) + p["b"]
    return np.maximum(z, 0.0)


def _score_one(hi, hj, model):
    p = model.params
    z = np.einsum("i,ijk,j->k", hi, p["W3"], hj) + p["V"] @ np.concatenate([hi, hj]) + p["b"]
    g = np.maximum(z, 0.0)
    a1 = g @ p["F1"] + p["f1"]
    r = np.maximum(a1, 0.0)
    o = r @ p["F2"] + p["f2"][0]
    ps = float(_sigmoid(o))
    return ps, (hi, hj, z, g, a1, r, ps)


def predict_similarity(hi, hj, model: GedModel, symmetric: bool = True) -> float:
    if not symmetric:
        return _score_one(hi, hj, model)[0]
    ps, _ = _batch_score(np.stack([hi, hj]), np.stack([hj, hi]), model)
    return float(0.5 * (ps[0] + ps[1]))


def embed_graph(gt: GraphTensors, model: GedModel):
    x3, gcache = gcn_forward(gt, model)
    c = graph_context(x3, model.params["W2"])
    att = _sigmoid(x3 @ c)
    h = att @ x3
    return h, (gt, gcache, x3, c, att)


# ---------------------------------------------------------------- backward pieces


def _zeros_like(params):
    return {k: np.zeros_like(v) for k, v in params.items()}


@dataclass
class GraphBatch:
    """Many graphs stacked into one block-diagonal problem (training path)."""

    x: np.ndarray
    norm: object  # scipy.sparse matrix
    label_norms: list
    seg: np.ndarray  # graph index of every node
    starts: np.ndarray
    sizes: np.ndarray
    ax0: np.ndarray  # norm @ x, constant across epochs
    lx0: list

    @property
    def num_graphs(self) -> int:
        return len(self.sizes)


def batch_graphs(tensors: list[GraphTensors]) -> GraphBatch:
    from scipy import sparse

    if any(t.n == 0 for t in tensors):
        raise ValueError("cannot embed a graph with no vertices")
    sizes = np.array([t.n for t in tensors], dtype=int)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    x = np.vstack([t.x for t in tensors])
    norm = sparse.block_diag([t.norm for t in tensors], format="csr")
    label_norms = [sparse.block_diag([t.label_norms[k] for t in tensors], format="csr")
                   for k in range(len(LABEL_BITS))]
    seg = np.repeat(np.arange(len(tensors)), sizes)
    xs = sparse.csr_matrix(x)  # one-hot rows, so the first propagation stays sparse
    return GraphBatch(x, norm, label_norms, seg, starts, sizes, norm @ xs, [m @ xs for m in label_norms])


def _segsum(v: np.ndarray, b: GraphBatch) -> np.ndarray:
    return np.add.reduceat(v, b.starts, axis=0)


def batch_embed(b: GraphBatch, model: GedModel):
    """Graph embeddings (G x 16) for every graph of the batch, plus a cache."""
    p = model.params
    xs, zs, axs, lxs = [b.x], [], [], []
    x = b.x
    for l in range(3):
        a = b.ax0 if l == 0 else b.norm @ x
        z = a @ p[f"W1_{l}"]
        lx = []
        if model.use_edge_labels:
            for t, m in enumerate(b.label_norms):
                mx = b.lx0[t] if l == 0 else m @ x
                z = z + mx @ p[f"U1_{l}_{t}"]
                lx.append(mx)
        x = np.maximum(z, 0.0)
        axs.append(a)
        lxs.append(lx)
        zs.append(z)
        xs.append(x)
    mean = _segsum(x, b) / b.sizes[:, None]
    c = np.tanh(mean @ p["W2"])
    att = _sigmoid(np.sum(x * c[b.seg], axis=1))
    h = _segsum(att[:, None] * x, b)
    return h, (zs, axs, lxs, x, mean, c, att)


def _batch_embed_backward(model: GedModel, b: GraphBatch, cache, dh: np.ndarray, grads) -> None:
    p = model.params
    zs, axs, lxs, x3, mean, c, att = cache
    dhn = dh[b.seg]
    dx = att[:, None] * dhn
    ds = np.sum(x3 * dhn, axis=1) * att * (1.0 - att)
    dx += ds[:, None] * c[b.seg]
    dc = _segsum(ds[:, None] * x3, b)
    du = dc * (1.0 - c * c)
    grads["W2"] += mean.T @ du
    dx += (du @ p["W2"].T)[b.seg] / b.sizes[b.seg][:, None]
    for l in (2, 1, 0):
        dz = dx * (zs[l] > 0)
        grads[f"W1_{l}"] += np.asarray(axs[l].T @ dz)
        if l:
            dx = b.norm.T @ (dz @ p[f"W1_{l}"].T)
        if model.use_edge_labels:
            for t, m in enumerate(b.label_norms):
                grads[f"U1_{l}_{t}"] += np.asarray(lxs[l][t].T @ dz)
                if l:
                    dx += m.T @ (dz @ p[f"U1_{l}_{t}"].T)


def _batch_score(hi: np.ndarray, hj: np.ndarray, model: GedModel):
    p = model.params
    d = hi.shape[1]
    k = p["W3"].shape[2]
    hw = (hi @ p["W3"].reshape(d, d * k)).reshape(-1, d, k)  # h_i^T W3 per slice
    z = np.einsum("pjk,pj->pk", hw, hj) + hi @ p["V"][:, :d].T + hj @ p["V"][:, d:].T + p["b"]
    g = np.maximum(z, 0.0)
    a1 = g @ p["F1"] + p["f1"]
    r = np.maximum(a1, 0.0)
    ps = _sigmoid(r @ p["F2"] + p["f2"][0])
    return ps, (hi, hj, z, g, a1, r, ps)


def _batch_score_backward(model: GedModel, cache, dps: np.ndarray, grads):
    p = model.params
    hi, hj, z, g, a1, r, ps = cache
    d = hi.shape[1]
    do = dps * ps * (1.0 - ps)
    grads["F2"] += r.T @ do
    grads["f2"] += do.sum()
    da1 = np.outer(do, p["F2"]) * (a1 > 0)
    grads["F1"] += g.T @ da1
    grads["f1"] += da1.sum(axis=0)
    dz = (da1 @ p["F1"].T) * (z > 0)
    k = dz.shape[1]
    grads["W3"] += (hi.T @ (hj[:, :, None] * dz[:, None, :]).reshape(len(hi), d * k)).reshape(d, d, k)
    grads["V"] += dz.T @ np.hstack([hi, hj])
    grads["b"] += dz.sum(axis=0)
    outer_j = (hj[:, :, None] * dz[:, None, :]).reshape(len(hj), d * k)
    outer_i = (hi[:, :, None] * dz[:, None, :]).reshape(len(hi), d * k)
    dhi = outer_j @ p["W3"].transpose(1, 2, 0).reshape(d * k, d) + dz @ p["V"][:, :d]
    dhj = outer_i @ p["W3"].transpose(0, 2, 1).reshape(d * k, d) + dz @ p["V"][:, d:]
    return dhi, dhj


def _as_batch(graphs, pairs):
    """Batch plus index arrays; a plain tensor list is batched on the fly."""
    pairs = list(pairs)
    if isinstance(graphs, GraphBatch):
        idx = {i: i for i in range(graphs.num_graphs)}
        b = graphs
    else:
        used = sorted({i for i, _, _ in pairs} | {j for _, j, _ in pairs})
        idx = {g: k for k, g in enumerate(used)}
        b = batch_graphs([graphs[g] for g in used])
    I = np.array([idx[i] for i, _, _ in pairs], dtype=int)
    J = np.array([idx[j] for _, j, _ in pairs], dtype=int)
    gs = np.array([t for _, _, t in pairs], dtype=float)
    return b, I, J, gs


def loss_and_grads(model: GedModel, graphs, pairs, symmetric: bool = True):
    """Mean squared error over ``pairs`` of (i, j, gs) and its gradient.

    ``graphs`` is a list of :class:`GraphTensors` or a prepared :class:`GraphBatch`.
    """
    grads = _zeros_like(model.params)
    pairs = list(pairs)
    if not pairs:
        return 0.0, grads
    b, I, J, gs = _as_batch(graphs, pairs)
    h, cache = batch_embed(b, model)
    p1, c1 = _batch_score(h[I], h[J], model)
    if symmetric:
        p2, c2 = _batch_score(h[J], h[I], model)
        ps = 0.5 * (p1 + p2)
    else:
        ps = p1
    err = ps - gs
    n = len(pairs)
    dps = 2.0 * err / n
    dh = np.zeros_like(h)
    if symmetric:
        for cache_k, (a, bb) in ((c1, (I, J)), (c2, (J, I))):
            da, db = _batch_score_backward(model, cache_k, 0.5 * dps, grads)
            np.add.at(dh, a, da)
            np.add.at(dh, bb, db)
    else:
        da, db = _batch_score_backward(model, c1, dps, grads)
        np.add.at(dh, I, da)
        np.add.at(dh, J, db)
    _batch_embed_backward(model, b, cache, dh, grads)
    return float(np.mean(err * err)), grads


def predict_pairs(model: GedModel, graphs, pairs) -> np.ndarray:
    b, I, J, _ = _as_batch(graphs, pairs)
    h, _ = batch_embed(b, model)
    return 0.5 * (_batch_score(h[I], h[J], model)[0] + _batch_score(h[J], h[I], model)[0])


def mse(model: GedModel, graphs, pairs) -> float:
    pairs = list(pairs)
    if not pairs:
        return float("nan")
    gs = np.array([t for _, _, t in pairs], dtype=float)
    return float(np.mean((predict_pairs(model, graphs, pairs) - gs) ** 2))


# ---------------------------------------------------------------- training


@dataclass
class TrainConfig:
    lr: float = 1e-3
    epochs: int = 300
    seed: int = 0
    use_edge_labels: bool = True

    def to_dict(self) -> dict:
        return {"lr": self.lr, "epochs": self.epochs, "seed": self.seed, "use_edge_labels": self.use_edge_labels}


@dataclass
class TrainLog:
    train_loss: list[float] = field(default_factory=list)
    test_loss: list[float] = field(default_factory=list)

    def to_csv(self) -> str:
        rows = ["epoch,train_loss,test_loss"]
        for e, (a, b) in enumerate(zip(self.train_loss, self.test_loss)):
            rows.append(f"{e},{a!r},{b!r}")
        return "\n".join(rows) + "\n"


# Settings for the two frozen corpora in hiersym/data.
CORPUS_TRAINING = TrainConfig(lr=0.25, epochs=2500)
LABEL_SWAP_TRAINING = TrainConfig(lr=0.25, epochs=1500)


def loss_window_violations(losses, width: int = 10) -> list[int]:
    """Start epochs of consecutive ``width``-epoch windows whose mean loss is
    not strictly below the mean of the window before."""
    n = len(losses) // width
    means = np.asarray(losses[: n * width], dtype=float).reshape(n, width).mean(axis=1)
    return [int(k * width) for k in range(1, n) if means[k] >= means[k - 1]]


class TrainingDiverged(RuntimeError):
    pass


def train(model: GedModel, graphs: list[LabeledGraph], train_pairs, test_pairs=(), config: TrainConfig | None = None):
    """Full-batch gradient descent on the squared error.

    ``graphs`` is the graph table; pairs are (i, j, gs) index triples.  Returns
    the trained copy and a per-epoch log.  ``train_loss[e]`` is the loss before
    update ``e``.
    """
    config = config or TrainConfig()
    model = model.copy()
    model.hyper = config.to_dict()
    batch = batch_graphs([graph_tensors(g) for g in graphs])
    train_pairs, test_pairs = list(train_pairs), list(test_pairs)
    history = TrainLog()
    for epoch in range(config.epochs):
        loss, grads = loss_and_grads(model, batch, train_pairs)
        if not np.isfinite(loss):
            raise TrainingDiverged(f"non-finite training loss at epoch {epoch} (lr={config.lr})")
        history.train_loss.append(loss)
        history.test_loss.append(mse(model, batch, test_pairs) if test_pairs else float("nan"))
        for k, gk in grads.items():
            model.params[k] -= config.lr * gk
    log.info("trained %d epochs, final train loss %.5f", config.epochs, history.train_loss[-1] if history.train_loss else float("nan"))
    return model, history


# ---------------------------------------------------------------- embedding cache


def graph_hash(g: LabeledGraph) -> str:
    return hashlib.sha256(json.dumps(g.to_dict(), sort_keys=True).encode()).hexdigest()[:20]


@dataclass
class GraphEmbedding:
    h: np.ndarray
    graph_id: str
    model_version: str


class EmbeddingCache:
    """Per-(graph, model version) embedding store, optionally on disk.

    The directory defaults to ``$HIERSYM_CACHE_DIR`` when set.
    """

    def __init__(self, directory: str | Path | None = None):
        directory = directory or os.environ.get("HIERSYM_CACHE_DIR")
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)
        self._mem: dict[tuple[str, str], GraphEmbedding] = {}
        self.hits = 0
        self.misses = 0

    def _path(self, key):
        return self.directory / f"{key[1]}_{key[0]}.json"

    def get(self, g: LabeledGraph, model: GedModel) -> GraphEmbedding:
        key = (graph_hash(g), model.version)
        emb = self._mem.get(key)
        if emb is None and self.directory and self._path(key).exists():
            try:
                data = json.loads(self._path(key).read_text())
                h = np.asarray(data["h"], dtype=float)
                if h.shape != (LAYER_DIMS[-1],) or data["model_version"] != key[1]:
                    raise ValueError("shape or version mismatch")
                emb = GraphEmbedding(h, key[0], key[1])
                self._mem[key] = emb
            except (ValueError, KeyError, json.JSONDecodeError) as exc:
                log.warning("corrupt embedding cache entry %s (%s); recomputing", self._path(key), exc)
                emb = None
        if emb is not None:
            self.hits += 1
            return emb
        self.misses += 1
        h, _ = embed_graph(graph_tensors(g), model)
        emb = GraphEmbedding(h, key[0], key[1])
        self._mem[key] = emb
        if self.directory:
            self._path(key).write_text(json.dumps({"h": h.tolist(), "model_version": key[1], "graph": key[0]}))
        return emb

    @property
    def stats(self) -> dict:
        return {"hits": self.hits, "misses": self.misses, "entries": len(self._mem)}


def embed_subblock(g: LabeledGraph, model: GedModel, cache: EmbeddingCache | None = None) -> GraphEmbedding:
    if cache is None:
        h, _ = embed_graph(graph_tensors(g), model)
        return GraphEmbedding(h, graph_hash(g), model.version)
    return cache.get(g, model)


def score_embeddings(a: GraphEmbedding, b: GraphEmbedding, model: GedModel) -> float:
    if a.model_version != model.version or b.model_version != model.version:
        raise ValueError("embedding was produced by a different model version")
    return predict_similarity(a.h, b.h, model)
