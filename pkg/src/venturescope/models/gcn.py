"""Startup-investor bipartite graph and a two-layer graph convolutional network.

The forward pass is ``Z = softmax(Â ReLU(Â X W0) W1)`` with
``Â = D^-1/2 A D^-1/2``, where ``A`` carries edge multiplicities and a
self-loop on every node.
"""
from __future__ import annotations

import datetime as dt
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from ..ingest import EntityStore, Sample
from .forest import ModelFormatError

MAGIC = b"VSGC1"
DENSE_LIMIT = 4000


class NonFiniteError(FloatingPointError):
    pass


@dataclass
class BipartiteGraph:
    """Startup and investor nodes with a symmetric multigraph adjacency.

    ``adjacency`` excludes self-loops; :func:`normalize_adjacency` adds them.
    ``mask`` marks labelled startup nodes, ``labels`` is 0/1 per node
    (meaningful only where ``mask`` is set).
    """

    node_ids: list[tuple[str, str]]  # (kind, entity id), kind in {"startup", "investor"}
    adjacency: sp.csr_matrix
    X: np.ndarray
    mask: np.ndarray
    labels: np.ndarray
    sample_index: dict[tuple[str, dt.date], int] = field(default_factory=dict)

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    def index(self, kind: str, entity_id: str) -> int:
        return self.node_ids.index((kind, entity_id))


def node_type_columns(kind: str) -> np.ndarray:
    return np.array([1.0, 0.0]) if kind == "startup" else np.array([0.0, 1.0])


def build_bipartite_graph(store: EntityStore, samples: Sequence[Sample], as_of: dt.date,
                          features: Callable[[str], np.ndarray] | Mapping[str, np.ndarray] | None = None,
                          n_features: int = 0) -> BipartiteGraph:
    """Graph of every startup founded by ``as_of`` and every investor active by then.

    Each (round, investor) incidence adds one startup-investor edge, so
    repeated backers accumulate multiplicity. Companies that also invest get
    a separate investor node. Startup rows of ``X`` hold ``features(id)``
    followed by the two node-type indicators; investor rows are zero apart
    from their indicator.
    """
    if any(s.as_of != as_of for s in samples):
        raise ValueError("all samples must share the graph's as_of date")
    startups = sorted(c.id for c in store.companies.values() if c.founded_on <= as_of)
    counts: dict[tuple[str, str], int] = {}
    investors = set()
    for r in store.rounds:
        if r.announced_on > as_of:
            break
        for inv in r.investor_ids:
            investors.add(inv)
            counts[(r.company_id, inv)] = counts.get((r.company_id, inv), 0) + 1
    investors = sorted(investors)
    node_ids = [("startup", c) for c in startups] + [("investor", i) for i in investors]
    s_index = {c: k for k, c in enumerate(startups)}
    i_index = {i: len(startups) + k for k, i in enumerate(investors)}
    n = len(node_ids)

    rows, cols, vals = [], [], []
    for (c, inv), m in counts.items():
        a, b = s_index[c], i_index[inv]
        rows += [a, b]
        cols += [b, a]
        vals += [m, m]
    adjacency = sp.csr_matrix((np.array(vals, dtype=np.float64), (rows, cols)), shape=(n, n))

    lookup = features.__getitem__ if isinstance(features, Mapping) else features
    rows_x = {c: np.asarray(lookup(c), dtype=np.float64) for c in startups} if lookup else {}
    if rows_x and not n_features:
        n_features = len(next(iter(rows_x.values())))
    X = np.zeros((n, n_features + 2))
    for c, k in s_index.items():
        if rows_x:
            X[k, :n_features] = rows_x[c]
        X[k, n_features:] = node_type_columns("startup")
    for k in i_index.values():
        X[k, n_features:] = node_type_columns("investor")

    mask = np.zeros(n, dtype=bool)
    labels = np.zeros(n, dtype=np.int64)
    sample_index = {}
    for s in samples:
        k = s_index[s.company_id]
        mask[k] = True
        labels[k] = int(s.label)
        sample_index[(s.company_id, s.as_of)] = k
    return BipartiteGraph(node_ids, adjacency, X, mask, labels, sample_index)


def union_graphs(graphs: Sequence[BipartiteGraph]) -> BipartiteGraph:
    """Disjoint union (block-diagonal adjacency) of several snapshot graphs."""
    offsets = np.cumsum([0] + [g.n_nodes for g in graphs])
    sample_index = {}
    for off, g in zip(offsets, graphs):
        sample_index.update({k: v + off for k, v in g.sample_index.items()})
    return BipartiteGraph(
        [nid for g in graphs for nid in g.node_ids],
        sp.block_diag([g.adjacency for g in graphs], format="csr"),
        np.vstack([g.X for g in graphs]),
        np.concatenate([g.mask for g in graphs]),
        np.concatenate([g.labels for g in graphs]),
        sample_index,
    )


def normalize_adjacency(graph_or_adjacency, dense: bool | None = None):
    """D^-1/2 (A + I) D^-1/2 as a dense array or CSR matrix.

    ``dense=None`` picks dense storage up to :data:`DENSE_LIMIT` nodes.
    """
    A = graph_or_adjacency.adjacency if isinstance(graph_or_adjacency, BipartiteGraph) else graph_or_adjacency
    A = sp.csr_matrix(A, dtype=np.float64)
    n = A.shape[0]
    A = A + sp.identity(n, format="csr")
    deg = np.asarray(A.sum(axis=1)).ravel()
    d = 1.0 / np.sqrt(deg)
    scale = sp.diags(d)
    A_hat = (scale @ A @ scale).tocsr()
    if dense is None:
        dense = n <= DENSE_LIMIT
    return A_hat.toarray() if dense else A_hat


@dataclass
class GcnModel:
    W0: np.ndarray
    W1: np.ndarray

    @property
    def hidden(self) -> int:
        return self.W0.shape[1]

    def copy(self) -> "GcnModel":
        return GcnModel(self.W0.copy(), self.W1.copy())


def glorot(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    r = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-r, r, size=(fan_in, fan_out))


def init_gcn(n_in: int, hidden: int = 64, n_classes: int = 2, seed: int = 0) -> GcnModel:
    rng = np.random.default_rng(seed)
    return GcnModel(glorot(n_in, hidden, rng), glorot(hidden, n_classes, rng))


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _check(name, arr):
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values in {name}")
    return arr


def gcn_forward(model: GcnModel, A_hat, X, relu: bool = True, cache: dict | None = None) -> np.ndarray:
    """Row-stochastic class probabilities for every node."""
    AX = cache["AX"] if cache is not None and "AX" in cache else _check("layer 0 propagation", A_hat @ X)
    pre = _check("layer 0 pre-activation", AX @ model.W0)
    H = np.maximum(pre, 0.0) if relu else pre
    AH = _check("layer 1 propagation", A_hat @ H)
    logits = _check("layer 1 output", AH @ model.W1)
    Z = softmax(logits)
    if cache is not None:
        cache.update(AX=AX, pre=pre, H=H, AH=AH, Z=Z)
    return Z


def masked_loss(Z: np.ndarray, labels: np.ndarray, mask: np.ndarray) -> float:
    idx = np.flatnonzero(mask)
    return float(-np.mean(np.log(np.clip(Z[idx, labels[idx]], 1e-300, None))))


def loss_and_grads(model: GcnModel, A_hat, X, labels, mask, weight_decay: float = 0.0,
                   relu: bool = True, cache: dict | None = None):
    """Masked mean cross-entropy (+ L2 on W0) and its gradients."""
    cache = {} if cache is None else cache
    Z = gcn_forward(model, A_hat, X, relu, cache)
    idx = np.flatnonzero(mask)
    loss = masked_loss(Z, labels, mask) + 0.5 * weight_decay * float(np.sum(model.W0 ** 2))
    G = np.zeros_like(Z)
    G[idx] = Z[idx]
    G[idx, labels[idx]] -= 1.0
    G /= len(idx)
    dW1 = cache["AH"].T @ G
    dH = A_hat.T @ (G @ model.W1.T)
    if relu:
        dH = dH * (cache["pre"] > 0)
    dW0 = cache["AX"].T @ dH + weight_decay * model.W0
    return loss, dW0, dW1


@dataclass
class TrainResult:
    model: GcnModel
    losses: list[float]
    best_epoch: int


def gcn_train(graph: BipartiteGraph, hidden: int = 64, epochs: int = 300, lr: float = 0.01,
              seed: int = 0, *, weight_decay: float = 5e-4, train_mask=None, val_mask=None,
              A_hat=None, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> TrainResult:
    """Full-batch Adam on the masked cross-entropy.

    Returns the weights with the lowest validation loss when ``val_mask``
    selects any node, otherwise the weights after the last epoch.
    """
    mask = graph.mask if train_mask is None else np.asarray(train_mask, dtype=bool)
    if not mask.any():
        raise ValueError("training mask is empty")
    if len(np.unique(graph.labels[mask])) < 2:
        raise ValueError("training mask holds a single class")
    if A_hat is None:
        A_hat = normalize_adjacency(graph)
    model = init_gcn(graph.X.shape[1], hidden, 2, seed)
    cache = {"AX": A_hat @ graph.X}
    m = [np.zeros_like(model.W0), np.zeros_like(model.W1)]
    v = [np.zeros_like(model.W0), np.zeros_like(model.W1)]
    use_val = val_mask is not None and np.asarray(val_mask).any()
    best = (np.inf, model.copy(), 0)
    losses = []
    for t in range(1, epochs + 1):
        loss, g0, g1 = loss_and_grads(model, A_hat, graph.X, graph.labels, mask, weight_decay, cache=cache)
        losses.append(loss)
        for k, (W, g) in enumerate(((model.W0, g0), (model.W1, g1))):
            m[k] = beta1 * m[k] + (1 - beta1) * g
            v[k] = beta2 * v[k] + (1 - beta2) * g * g
            m_hat = m[k] / (1 - beta1 ** t)
            v_hat = v[k] / (1 - beta2 ** t)
            W -= lr * m_hat / (np.sqrt(v_hat) + eps)
        if use_val:
            Z = gcn_forward(model, A_hat, graph.X, cache=cache)
            val = masked_loss(Z, graph.labels, val_mask)
            if val < best[0]:
                best = (val, model.copy(), t)
    if use_val:
        return TrainResult(best[1], losses, best[2])
    return TrainResult(model, losses, epochs)


def gradient_check(model: GcnModel, graph: BipartiteGraph, eps: float = 1e-5, *, relu: bool = True,
                   weight_decay: float = 0.0, mask=None, A_hat=None) -> float:
    """Largest relative gap between analytic and central-difference gradients.

    Weight entries whose +/- eps perturbation flips any ReLU are skipped.
    """
    mask = graph.mask if mask is None else mask
    if A_hat is None:
        A_hat = normalize_adjacency(graph, dense=True)
    X, y = graph.X, graph.labels
    _, g0, g1 = loss_and_grads(model, A_hat, X, y, mask, weight_decay, relu)
    worst = 0.0
    for k, (W, G) in enumerate(((model.W0, g0), (model.W1, g1))):
        for idx in np.ndindex(W.shape):
            orig = W[idx]
            W[idx] = orig + eps
            c_plus = {}
            lp, _, _ = loss_and_grads(model, A_hat, X, y, mask, weight_decay, relu, c_plus)
            W[idx] = orig - eps
            c_minus = {}
            lm, _, _ = loss_and_grads(model, A_hat, X, y, mask, weight_decay, relu, c_minus)
            W[idx] = orig
            if relu and np.any((c_plus["pre"] > 0) != (c_minus["pre"] > 0)):
                continue
            num = (lp - lm) / (2 * eps)
            denom = max(abs(num), abs(G[idx]), 1e-8)
            worst = max(worst, abs(num - G[idx]) / denom)
    return worst


# -- VSGC1 file format ---------------------------------------------------------
# magic | u32 rows(W0) | u32 hidden | u32 n_classes | W0 f64 row-major | W1 f64 row-major

def save_gcn(model: GcnModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", model.W0.shape[0], model.W0.shape[1], model.W1.shape[1]))
        fh.write(np.ascontiguousarray(model.W0, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(model.W1, dtype="<f8").tobytes())


def load_gcn(path) -> GcnModel:
    data = Path(path).read_bytes()
    if data[:5] != MAGIC:
        raise ModelFormatError(f"{path}: bad magic bytes {data[:5]!r}, expected {MAGIC!r}")
    if len(data) < 17:
        raise ModelFormatError(f"{path}: truncated header")
    d, h, c = struct.unpack_from("<III", data, 5)
    expected = 17 + 8 * (d * h + h * c)
    if len(data) != expected:
        raise ModelFormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    W0 = np.frombuffer(data, "<f8", d * h, 17).reshape(d, h).copy()
    W1 = np.frombuffer(data, "<f8", h * c, 17 + 8 * d * h).reshape(h, c).copy()
    return GcnModel(W0, W1)
