"""Cluster-induced edges, their hypergraph-walk weights, sampling and merging."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import Graph, SparseSymMatrix
from .rng import ADD_STREAM
from .sampling import DropConfig, apply_drop, draw_mask, kth_smallest
from .spectral import ClusterAssignment


class AddVariant(str, enum.Enum):
    TWO_TIER = "two_tier"    # epsilon below tau, rho at/above
    KEEP_HIGH = "keep_high"  # rho below tau, 1 at/above


class MergeMode(str, enum.Enum):
    UNION = "union"
    MIXUP = "mixup"


@dataclass(frozen=True)
class AddConfig:
    beta: float = 0.5
    epsilon: float = 0.1
    rho: float = 0.5
    variant: AddVariant = AddVariant.TWO_TIER
    merge: MergeMode = MergeMode.UNION
    eta: float = 0.5
    seed: int = 0
    epoch: int = 0
    enabled: bool = True

    def __post_init__(self):
        object.__setattr__(self, "variant", AddVariant(self.variant))
        object.__setattr__(self, "merge", MergeMode(self.merge))
        for name in ("beta", "epsilon", "rho", "eta"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.epsilon > self.rho:
            raise ValueError("epsilon must not exceed rho")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")


def incidence_matrix(assignment: ClusterAssignment) -> np.ndarray:
    """``n x K`` 0/1 matrix with ``B[i, c] = 1`` iff node ``i`` is in cluster ``c``."""
    b = np.zeros((assignment.num_nodes, assignment.K))
    b[np.arange(assignment.num_nodes), assignment.labels] = 1.0
    return b


def _labels_from_incidence(b):
    b = np.asarray(b)
    if b.ndim != 2 or np.any(b.sum(axis=1) != 1):
        raise ValueError("incidence matrix needs exactly one 1 per row")
    return np.argmax(b, axis=1), b.shape[1]


def _within_cluster_pairs(labels):
    """All ``i < j`` pairs sharing a cluster, in canonical order."""
    order = np.argsort(labels, kind="stable")
    sorted_labels = labels[order]
    bounds = np.flatnonzero(np.diff(sorted_labels)) + 1
    rows, cols = [], []
    for members in np.split(order, bounds):
        if members.size < 2:
            continue
        members = np.sort(members)
        i, j = np.triu_indices(members.size, k=1)
        rows.append(members[i])
        cols.append(members[j])
    if not rows:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    r, c = np.concatenate(rows), np.concatenate(cols)
    o = np.lexsort((c, r))
    return r[o], c[o]


def cluster_graph(b) -> SparseSymMatrix:
    """``sign(B B^T)`` without its diagonal: each cluster becomes a clique."""
    labels, _ = _labels_from_incidence(b)
    r, c = _within_cluster_pairs(labels)
    return SparseSymMatrix(labels.size, r, c, np.ones(r.size))


def cluster_edge_weights(b) -> SparseSymMatrix:
    """``B D_e^{-1} B^T``: ``1/|c|`` for every pair (diagonal included) inside cluster ``c``."""
    labels, K = _labels_from_incidence(b)
    sizes = np.bincount(labels, minlength=K)
    if np.any(sizes == 0):
        raise ValueError(f"empty cluster(s): {np.flatnonzero(sizes == 0).tolist()}")
    r, c = _within_cluster_pairs(labels)
    n = labels.size
    idx = np.arange(n)
    return SparseSymMatrix.from_pairs(
        n,
        np.concatenate([idx, r]),
        np.concatenate([idx, c]),
        np.concatenate([1.0 / sizes[labels], 1.0 / sizes[labels[r]]]),
    )


def add_threshold(weights, beta):
    """Add threshold: the ``floor(beta*|E|) + 1``-th largest weight."""
    weights = np.asarray(weights, dtype=np.float64)
    k = int(np.floor(beta * weights.size)) + 1
    return -kth_smallest(-weights, k)


def add_probabilities(pg: SparseSymMatrix, config: AddConfig) -> SparseSymMatrix:
    """Per-edge add probability over the off-diagonal support of ``pg``."""
    off = pg.offdiag()
    if off.nnz_pairs == 0:
        return off
    tau = add_threshold(off.values, config.beta)
    high = off.values >= tau
    if config.variant is AddVariant.TWO_TIER:
        probs = np.where(high, config.rho, config.epsilon)
    else:
        probs = np.where(high, 1.0, config.rho)
    return off.with_values(probs)


def sample_cluster_edges(g: Graph, assignment: ClusterAssignment, config: AddConfig) -> Graph:
    """Bernoulli-sampled cluster graph over ``g``'s nodes, features and labels."""
    if assignment.num_nodes != g.num_nodes:
        raise ValueError("assignment does not cover the graph's nodes")
    b = incidence_matrix(assignment.compact())
    probs = add_probabilities(cluster_edge_weights(b), config)
    keep = draw_mask(probs.values, config.seed, config.epoch, stream=ADD_STREAM)
    edges = np.column_stack([probs.rows[keep], probs.cols[keep]])
    return Graph(g.num_nodes, edges, np.ones(edges.shape[0]), g.features, g.labels, g.domain_tag)


def _check_dims(a, b):
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} != {b.dim}")


def merge_union(ac: SparseSymMatrix, ad: SparseSymMatrix) -> SparseSymMatrix:
    """``sign(A^C + A^D)``: unit weight on the union of the supports."""
    _check_dims(ac, ad)
    r = np.concatenate([ac.rows[ac.values != 0], ad.rows[ad.values != 0]])
    c = np.concatenate([ac.cols[ac.values != 0], ad.cols[ad.values != 0]])
    return SparseSymMatrix.from_pairs(ac.dim, r, c, np.ones(r.size))


def merge_mixup(ac: SparseSymMatrix, ad: SparseSymMatrix, eta: float) -> SparseSymMatrix:
    """``eta * A^C + (1 - eta) * A^D``; exact zeros are dropped from the support."""
    _check_dims(ac, ad)
    if not 0.0 <= eta <= 1.0:
        raise ValueError(f"eta must be in [0, 1], got {eta}")
    m = SparseSymMatrix.from_pairs(
        ac.dim,
        np.concatenate([ac.rows, ad.rows]),
        np.concatenate([ac.cols, ad.cols]),
        np.concatenate([eta * ac.values, (1.0 - eta) * ad.values]),
        reduce="sum",
    )
    keep = m.values != 0
    return SparseSymMatrix(m.dim, m.rows[keep], m.cols[keep], m.values[keep])


def _graph_from_matrix(g, m):
    edges = np.column_stack([m.rows, m.cols])
    return Graph(g.num_nodes, edges, m.values, g.features, g.labels, g.domain_tag)


def merge_graphs(gc: Graph, gd: Graph, config: AddConfig) -> Graph:
    if config.merge is MergeMode.UNION:
        m = merge_union(gc.adjacency(), gd.adjacency())
    else:
        m = merge_mixup(gc.adjacency(), gd.adjacency(), config.eta)
    return _graph_from_matrix(gd, m)


def augment(g: Graph, assignment: ClusterAssignment, drop: DropConfig, add: AddConfig) -> Graph:
    """Low-weight edge dropping followed by cluster-edge adding.

    ``add.enabled = False`` skips the second step and returns the dropped graph.
    """
    gd = apply_drop(g, drop)
    if not add.enabled:
        return gd
    gc = sample_cluster_edges(g, assignment, add)
    return merge_graphs(gc, gd, add)
