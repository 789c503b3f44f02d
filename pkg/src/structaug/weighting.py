"""Normalized Laplacian, symmetric edge weights and total variation."""

import numpy as np

from .graph import Graph, SparseSymMatrix, degree_vector, inv_sqrt


def edge_weight_matrix(g: Graph) -> SparseSymMatrix:
    """``P = D^{-1/2} A D^{-1/2}`` restricted to the edge set.

    ``P_ij = w_ij / sqrt(d_i d_j)``, so low-degree endpoints give heavy edges.
    Values are aligned with ``g.edges``.
    """
    s = inv_sqrt(degree_vector(g))
    i, j = g.edges[:, 0], g.edges[:, 1]
    return SparseSymMatrix(g.num_nodes, i, j, g.weights * s[i] * s[j])


def laplacian(g: Graph) -> SparseSymMatrix:
    """``L = I - D^{-1/2} A D^{-1/2}`` with a zero diagonal entry for isolated nodes."""
    d = degree_vector(g)
    p = edge_weight_matrix(g)
    idx = np.arange(g.num_nodes)
    diag = (d > 0).astype(np.float64)
    return SparseSymMatrix.from_pairs(
        g.num_nodes,
        np.concatenate([idx, p.rows]),
        np.concatenate([idx, p.cols]),
        np.concatenate([diag, -p.values]),
        reduce="sum",
    )


def total_variation(g: Graph, x) -> float:
    """Quadratic form ``x^T L x`` through a sparse matrix-vector product."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != g.num_nodes:
        raise ValueError(f"signal length {x.shape[0]} != num_nodes {g.num_nodes}")
    return float(x @ laplacian(g).matvec(x))


def total_variation_edgesum(g: Graph, x) -> float:
    """Edge-sum form ``sum_(i,j) w_ij (x_i/sqrt(d_i) - x_j/sqrt(d_j))^2``.

    Equals :func:`total_variation` for unweighted graphs and, more generally,
    whenever ``d_i = sum_j w_ij``; kept as an independent check.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != g.num_nodes:
        raise ValueError(f"signal length {x.shape[0]} != num_nodes {g.num_nodes}")
    y = x * inv_sqrt(degree_vector(g))
    i, j = g.edges[:, 0], g.edges[:, 1]
    return float(np.sum(g.weights * (y[i] - y[j]) ** 2))
