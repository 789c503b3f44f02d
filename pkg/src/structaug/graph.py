"""Graph containers, canonicalization and plain-text I/O.

Graphs are simple and undirected. Edges are stored once per unordered pair
as ``(i, j)`` with ``i < j``, sorted lexicographically; every per-edge array
in the package (weights, probabilities, masks) follows that order.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)


class GraphFormatError(ValueError):
    """A graph, feature or label file could not be parsed."""

    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class GraphShapeError(ValueError):
    """Feature or label rows disagree with the node count."""


def _frozen(a):
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


def canonical_pairs(rows, cols, values, reduce="max"):
    """Fold index pairs onto ``i <= j``, merge duplicates and sort.

    Duplicates are merged with ``reduce`` ("max" or "sum").
    Returns ``(rows, cols, values)``.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=np.float64).ravel()
    lo = np.minimum(rows, cols)
    hi = np.maximum(rows, cols)
    if lo.size == 0:
        return lo, hi, values
    order = np.lexsort((hi, lo))
    lo, hi, values = lo[order], hi[order], values[order]
    start = np.ones(lo.size, dtype=bool)
    start[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
    if start.all():
        return lo, hi, values
    idx = np.flatnonzero(start)
    if reduce == "max":
        merged = np.maximum.reduceat(values, idx)
    elif reduce == "sum":
        merged = np.add.reduceat(values, idx)
    else:
        raise ValueError(f"unknown reduce {reduce!r}")
    return lo[idx], hi[idx], merged


@dataclass(frozen=True, eq=False)
class SparseSymMatrix:
    """Symmetric sparse matrix holding one value per unordered index pair.

    ``rows[k] <= cols[k]`` and pairs are in ascending lexicographic order.
    Diagonal entries are allowed.
    """

    dim: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(np.asarray(self.rows, dtype=np.int64)))
        object.__setattr__(self, "cols", _frozen(np.asarray(self.cols, dtype=np.int64)))
        object.__setattr__(self, "values", _frozen(np.asarray(self.values, dtype=np.float64)))
        if not (self.rows.shape == self.cols.shape == self.values.shape):
            raise ValueError("rows, cols and values must have equal length")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("matrix values must be finite")
        if self.rows.size:
            if np.any(self.rows > self.cols):
                raise ValueError("pairs must satisfy row <= col")
            if self.rows.min() < 0 or self.cols.max() >= self.dim:
                raise IndexError("index out of range for dimension %d" % self.dim)

    @classmethod
    def from_pairs(cls, dim, rows, cols, values, reduce="max"):
        r, c, v = canonical_pairs(rows, cols, values, reduce=reduce)
        return cls(int(dim), r, c, v)

    @classmethod
    def from_dense(cls, a, tol=0.0):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("expected a square matrix")
        if not np.allclose(a, a.T, rtol=0, atol=1e-12):
            raise ValueError("matrix is not symmetric")
        r, c = np.triu_indices(a.shape[0])
        v = a[r, c]
        keep = np.abs(v) > tol
        return cls(a.shape[0], r[keep], c[keep], v[keep])

    @classmethod
    def empty(cls, dim):
        return cls(int(dim), np.empty(0, np.int64), np.empty(0, np.int64), np.empty(0))

    @property
    def nnz_pairs(self):
        return int(self.values.size)

    def offdiag(self):
        """Strictly off-diagonal part as a new matrix."""
        keep = self.rows != self.cols
        return SparseSymMatrix(self.dim, self.rows[keep], self.cols[keep], self.values[keep])

    def diagonal(self):
        d = np.zeros(self.dim)
        on = self.rows == self.cols
        d[self.rows[on]] = self.values[on]
        return d

    def with_values(self, values):
        """Same support, new values."""
        return SparseSymMatrix(self.dim, self.rows, self.cols, values)

    def support(self):
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    def to_dict(self):
        return {(int(i), int(j)): float(v) for i, j, v in zip(self.rows, self.cols, self.values)}

    def get(self, i, j):
        i, j = (i, j) if i <= j else (j, i)
        lo = np.searchsorted(self.rows, i, side="left")
        hi = np.searchsorted(self.rows, i, side="right")
        k = lo + np.searchsorted(self.cols[lo:hi], j)
        if k < hi and self.cols[k] == j:
            return float(self.values[k])
        return 0.0

    def to_scipy(self):
        """Full symmetric CSR matrix (both triangles)."""
        off = self.rows != self.cols
        r = np.concatenate([self.rows, self.cols[off]])
        c = np.concatenate([self.cols, self.rows[off]])
        v = np.concatenate([self.values, self.values[off]])
        return sp.csr_matrix((v, (r, c)), shape=(self.dim, self.dim))

    def to_dense(self):
        a = np.zeros((self.dim, self.dim))
        a[self.rows, self.cols] = self.values
        a[self.cols, self.rows] = self.values
        return a

    def matvec(self, x):
        return self.to_scipy() @ np.asarray(x, dtype=np.float64)

    def frobenius_norm(self):
        off = self.rows != self.cols
        return float(np.sqrt(np.sum(self.values[~off] ** 2) + 2.0 * np.sum(self.values[off] ** 2)))


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple undirected graph with node features and optional labels.

    Build through :meth:`from_edges` unless the edge arrays are already
    canonical; the plain constructor only validates.
    """

    num_nodes: int
    edges: np.ndarray
    weights: np.ndarray
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    domain_tag: str = ""
    self_loops_removed: int = field(default=0, compare=False)

    def __post_init__(self):
        n = int(self.num_nodes)
        object.__setattr__(self, "num_nodes", n)
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = np.asarray(self.weights, dtype=np.float64).ravel()
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(n, -1) if n else features.reshape(0, 0)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "weights", _frozen(weights))
        object.__setattr__(self, "features", _frozen(features))
        if self.labels is not None:
            object.__setattr__(self, "labels", _frozen(np.asarray(self.labels, dtype=np.int64).ravel()))
        self._validate()

    def _validate(self):
        n, e, w = self.num_nodes, self.edges, self.weights
        if e.shape[0] != w.shape[0]:
            raise ValueError("one weight per edge required")
        if e.size:
            if e.min() < 0 or e.max() >= n:
                raise IndexError(f"edge endpoint out of range for {n} nodes")
            if np.any(e[:, 0] >= e[:, 1]):
                raise ValueError("edges must be canonical (i < j, no self-loops)")
            same = (e[1:, 0] == e[:-1, 0]) & (e[1:, 1] <= e[:-1, 1])
            if np.any(e[1:, 0] < e[:-1, 0]) or np.any(same):
                raise ValueError("edges must be sorted and unique")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("edge weights must be finite and >= 0")
        if self.features.shape[0] != n:
            raise GraphShapeError(f"feature rows {self.features.shape[0]} != num_nodes {n}")
        if self.labels is not None and self.labels.shape[0] != n:
            raise GraphShapeError(f"label rows {self.labels.shape[0]} != num_nodes {n}")

    @classmethod
    def from_edges(cls, num_nodes, edges, weights=None, features=None, labels=None, domain_tag=""):
        """Canonicalize raw edges: symmetrize, drop self-loops, keep max weight of duplicates.

        Zero-weight edges are discarded.
        """
        edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(edges.shape[0])
        weights = np.asarray(weights, dtype=np.float64).ravel()
        if edges.size and (edges.min() < 0 or edges.max() >= num_nodes):
            raise IndexError(f"edge endpoint out of range for {num_nodes} nodes")
        loops = edges[:, 0] == edges[:, 1]
        n_loops = int(loops.sum())
        if n_loops:
            log.warning("removed %d self-loop(s)", n_loops)
        keep = ~loops & (weights != 0)
        lo, hi, w = canonical_pairs(edges[keep, 0], edges[keep, 1], weights[keep], reduce="max")
        if features is None:
            features = np.zeros((num_nodes, 0))
        return cls(num_nodes, np.column_stack([lo, hi]), w, features, labels, domain_tag, n_loops)

    @property
    def num_edges(self):
        return int(self.edges.shape[0])

    @property
    def is_weighted(self):
        return bool(np.any(self.weights != 1.0))

    def edge_set(self):
        return set(map(tuple, self.edges.tolist()))

    def adjacency(self):
        """Adjacency as a :class:`SparseSymMatrix` (zero diagonal)."""
        return SparseSymMatrix(self.num_nodes, self.edges[:, 0], self.edges[:, 1], self.weights)

    def with_edges(self, edges, weights=None):
        """Same nodes, features and labels over a new edge set."""
        return Graph.from_edges(self.num_nodes, edges, weights, self.features, self.labels, self.domain_tag)

    def subgraph_mask(self, keep):
        """Keep the edges selected by a boolean mask in canonical order."""
        keep = np.asarray(keep, dtype=bool)
        return Graph(self.num_nodes, self.edges[keep], self.weights[keep], self.features,
                     self.labels, self.domain_tag)


def degree_vector(g: Graph) -> np.ndarray:
    """Weighted degree of every node (neighbour count when unweighted)."""
    d = np.zeros(g.num_nodes)
    np.add.at(d, g.edges[:, 0], g.weights)
    np.add.at(d, g.edges[:, 1], g.weights)
    return d


def inv_sqrt(d):
    """Elementwise ``1/sqrt(d)`` with 0 for zero entries."""
    d = np.asarray(d, dtype=np.float64)
    out = np.zeros_like(d)
    pos = d > 0
    out[pos] = 1.0 / np.sqrt(d[pos])
    return out


def normalized_adjacency(g: Graph, add_self_loops: bool = True) -> SparseSymMatrix:
    """``D~^{-1/2}(A+I)D~^{-1/2}`` or, without self-loops, ``D^{-1/2} A D^{-1/2}``.

    Isolated nodes get an all-zero row when self-loops are off.
    """
    d = degree_vector(g)
    r, c, w = g.edges[:, 0], g.edges[:, 1], g.weights
    if add_self_loops:
        d = d + 1.0
        idx = np.arange(g.num_nodes)
        r = np.concatenate([idx, r])
        c = np.concatenate([idx, c])
        w = np.concatenate([np.ones(g.num_nodes), w])
    s = inv_sqrt(d)
    return SparseSymMatrix.from_pairs(g.num_nodes, r, c, w * s[r] * s[c])


def normalized_adjacency_csr(num_nodes, edges, weights, add_self_loops=True):
    """CSR form of :func:`normalized_adjacency` from raw canonical arrays.

    Hot path for training loops; skips graph validation.
    """
    d = np.bincount(edges[:, 0], weights, minlength=num_nodes) + np.bincount(
        edges[:, 1], weights, minlength=num_nodes)
    r = np.concatenate([edges[:, 0], edges[:, 1]])
    c = np.concatenate([edges[:, 1], edges[:, 0]])
    w = np.concatenate([weights, weights])
    if add_self_loops:
        d = d + 1.0
        idx = np.arange(num_nodes)
        r = np.concatenate([r, idx])
        c = np.concatenate([c, idx])
        w = np.concatenate([w, np.ones(num_nodes)])
    s = inv_sqrt(d)
    return sp.csr_matrix((w * s[r] * s[c], (r, c)), shape=(num_nodes, num_nodes))


# ---------------------------------------------------------------------------
# file I/O
# ---------------------------------------------------------------------------

def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if line:
                yield lineno, line


def read_edge_list(path):
    """Parse an edge file. Returns ``(declared_nodes or None, edges, weights)``."""
    declared = None
    src, dst, wts = [], [], []
    seen_edge = False
    for lineno, line in _data_lines(path):
        if line.startswith("#"):
            parts = line[1:].split()
            if not seen_edge and declared is None and len(parts) == 2 and parts[0] == "nodes":
                try:
                    declared = int(parts[1])
                except ValueError:
                    raise GraphFormatError(path, lineno, f"bad node count {parts[1]!r}") from None
                if declared < 0:
                    raise GraphFormatError(path, lineno, "negative node count")
            continue
        parts = line.split("\t") if "\t" in line else line.split()
        if len(parts) not in (2, 3):
            raise GraphFormatError(path, lineno, f"expected 2 or 3 fields, got {len(parts)}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError:
            raise GraphFormatError(path, lineno, f"cannot parse {line!r}") from None
        if i < 0 or j < 0:
            raise GraphFormatError(path, lineno, "negative node id")
        if not np.isfinite(w) or w < 0:
            raise GraphFormatError(path, lineno, f"invalid weight {parts[2]!r}")
        src.append(i)
        dst.append(j)
        wts.append(w)
        seen_edge = True
    edges = np.column_stack([np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64)])
    return declared, edges, np.array(wts, dtype=np.float64)


def read_features(path):
    rows = []
    width = None
    for lineno, line in _data_lines(path):
        if line.startswith("#"):
            continue
        try:
            row = [float(t) for t in line.split("\t" if "\t" in line else None)]
        except ValueError:
            raise GraphFormatError(path, lineno, "non-numeric feature value") from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise GraphFormatError(path, lineno, f"expected {width} values, got {len(row)}")
        if not all(np.isfinite(row)):
            raise GraphFormatError(path, lineno, "non-finite feature value")
        rows.append(row)
    if not rows:
        return np.zeros((0, 0))
    return np.array(rows, dtype=np.float64)


def read_labels(path):
    out = []
    for lineno, line in _data_lines(path):
        if line.startswith("#"):
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise GraphFormatError(path, lineno, f"bad label {line!r}") from None
        if out[-1] < 0:
            raise GraphFormatError(path, lineno, "negative label")
    return np.array(out, dtype=np.int64)


def load_graph(edge_path, feature_path=None, label_path=None, domain_tag="") -> Graph:
    """Load and canonicalize a graph from the plain-text edge/feature/label files.

    The node count is the largest of: the ``#nodes N`` declaration, the
    feature row count, and ``max endpoint + 1``. An endpoint beyond a
    declared or feature-implied count raises ``IndexError``.
    """
    declared, edges, weights = read_edge_list(edge_path)
    features = read_features(feature_path) if feature_path is not None else None
    labels = read_labels(label_path) if label_path is not None else None
    max_id = int(edges.max()) + 1 if edges.size else 0
    if declared is not None:
        n = declared
    elif features is not None:
        n = features.shape[0]
    elif labels is not None:
        n = labels.shape[0]
    else:
        n = max_id
    if max_id > n:
        raise IndexError(f"{edge_path}: endpoint {max_id - 1} >= num_nodes {n}")
    if features is not None and features.shape[0] != n:
        raise GraphShapeError(f"{feature_path}: {features.shape[0]} feature rows for {n} nodes")
    if labels is not None and labels.shape[0] != n:
        raise GraphShapeError(f"{label_path}: {labels.shape[0]} labels for {n} nodes")
    if not domain_tag:
        domain_tag = os.path.splitext(os.path.basename(str(edge_path)))[0]
    return Graph.from_edges(n, edges, weights, features, labels, domain_tag)


def format_real(x):
    """Shortest decimal that round-trips to the same float."""
    return repr(float(x))


def edge_list_text(g: Graph, header=()):
    lines = [f"# {h}" for h in header]
    lines.append(f"#nodes {g.num_nodes}")
    for (i, j), w in zip(g.edges.tolist(), g.weights.tolist()):
        if w == 1.0:
            lines.append(f"{i}\t{j}")
        else:
            lines.append(f"{i}\t{j}\t{format_real(w)}")
    return "\n".join(lines) + "\n"


def save_graph(g: Graph, edge_path, header=()):
    """Write the canonical edge list; unit weights are left implicit."""
    with open(edge_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(edge_list_text(g, header))


def save_features(features, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in np.asarray(features):
            fh.write("\t".join(format_real(v) for v in row) + "\n")


def save_labels(labels, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for v in np.asarray(labels, dtype=np.int64):
            fh.write(f"{int(v)}\n")
