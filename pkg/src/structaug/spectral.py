"""Spectral clustering of node features.

RBF affinity -> normalized affinity Laplacian -> K smallest eigenpairs ->
unit-length row embedding -> k-means (k-means++ seeding).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist, pdist

from .graph import SparseSymMatrix

log = logging.getLogger(__name__)

DENSE_LIMIT = 2000
MEDIAN_SAMPLE = 2000


class EigenConvergenceError(RuntimeError):
    """Eigensolver stopped before all requested pairs met the residual tolerance."""

    def __init__(self, message, best_residual):
        super().__init__(f"{message} (best relative residual {best_residual:.3e})")
        self.best_residual = best_residual


@dataclass(frozen=True)
class AffinityConfig:
    zeta: Union[float, str] = "median"
    knn: Optional[int] = None
    eig_tol: float = 1e-10
    eig_max_iter: int = 5000
    row_normalize: bool = True

    def __post_init__(self):
        if isinstance(self.zeta, str):
            if self.zeta != "median":
                raise ValueError(f"zeta must be a positive number or 'median', got {self.zeta!r}")
        elif not self.zeta > 0:
            raise ValueError(f"zeta must be > 0, got {self.zeta}")
        if self.knn is not None and self.knn < 1:
            raise ValueError("knn must be >= 1")
        if not self.eig_tol > 0:
            raise ValueError("eig_tol must be > 0")


@dataclass(frozen=True, eq=False)
class ClusterAssignment:
    labels: np.ndarray
    K: int
    inertia_trace: tuple = field(default=(), compare=False)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64).ravel()
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if labels.size and (labels.min() < 0 or labels.max() >= self.K):
            raise ValueError(f"cluster ids must lie in [0, {self.K})")

    @property
    def num_nodes(self):
        return int(self.labels.size)

    def sizes(self):
        return np.bincount(self.labels, minlength=self.K)

    def compact(self):
        """Drop empty clusters, relabelling by first occurrence."""
        labels = canonical_labels(self.labels)
        return ClusterAssignment(labels, int(labels.max()) + 1 if labels.size else 1)


def canonical_labels(labels):
    """Relabel so clusters are numbered in order of first appearance."""
    labels = np.asarray(labels, dtype=np.int64)
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(labels.max() + 1 if labels.size else 0, dtype=np.int64)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    return remap[labels]


# ---------------------------------------------------------------------------
# affinity
# ---------------------------------------------------------------------------

def median_bandwidth(features, max_points=MEDIAN_SAMPLE, seed=0):
    """Median pairwise Euclidean distance (subsampled above ``max_points`` rows)."""
    x = np.asarray(features, dtype=np.float64)
    if x.shape[0] > max_points:
        idx = np.sort(np.random.default_rng(seed).choice(x.shape[0], max_points, replace=False))
        x = x[idx]
    if x.shape[0] < 2:
        return 1.0
    d = pdist(x)
    med = float(np.median(d))
    if med > 0:
        return med
    pos = d[d > 0]
    return float(pos.mean()) if pos.size else 1.0


def _resolve_zeta(features, zeta):
    if isinstance(zeta, str):
        if zeta != "median":
            raise ValueError(f"unknown bandwidth rule {zeta!r}")
        return median_bandwidth(features)
    if not zeta > 0:
        raise ValueError("zeta must be > 0")
    return float(zeta)


def rbf_affinity_dense(features, zeta, knn=None):
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError("features must be a 2-D array")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    zeta = _resolve_zeta(x, zeta)
    d2 = cdist(x, x, "sqeuclidean")
    s = np.exp(-d2 / (2.0 * zeta * zeta))
    np.fill_diagonal(s, 1.0)
    if knn is not None and knn < x.shape[0] - 1:
        # symmetric kNN: keep (i, j) if either is among the other's nearest
        np.fill_diagonal(d2, np.inf)
        nn = np.argpartition(d2, knn - 1, axis=1)[:, :knn]
        keep = np.zeros_like(s, dtype=bool)
        keep[np.repeat(np.arange(x.shape[0]), knn), nn.ravel()] = True
        keep |= keep.T
        np.fill_diagonal(keep, True)
        s = np.where(keep, s, 0.0)
    return s


def rbf_affinity(features, zeta, knn=None) -> SparseSymMatrix:
    """Gaussian affinity ``exp(-||x_i - x_j||^2 / (2 zeta^2))``; ``zeta`` may be ``"median"``."""
    return SparseSymMatrix.from_dense(rbf_affinity_dense(features, zeta, knn))


def affinity_laplacian_dense(s):
    s = np.asarray(s, dtype=np.float64)
    deg = s.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("affinity matrix has a zero row sum")
    inv = 1.0 / np.sqrt(deg)
    lap = -(inv[:, None] * s * inv[None, :])
    lap[np.diag_indices_from(lap)] += 1.0
    return 0.5 * (lap + lap.T)


def affinity_laplacian(s) -> SparseSymMatrix:
    """``I - D_s^{-1/2} S D_s^{-1/2}``; eigenvalues lie in ``[0, 2]``."""
    dense = s.to_dense() if isinstance(s, SparseSymMatrix) else s
    return SparseSymMatrix.from_dense(affinity_laplacian_dense(dense))


# ---------------------------------------------------------------------------
# eigensolvers
# ---------------------------------------------------------------------------

def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi eigendecomposition of a dense symmetric matrix.

    Returns ascending eigenvalues and the matching orthonormal eigenvectors
    as columns. Slow (O(n^3) per sweep); meant for n up to a few hundred and
    as an independent check on the LAPACK path.
    """
    a = np.array(a, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    scale = np.linalg.norm(a)
    if n < 2 or scale == 0:
        w = np.diag(a).copy()
        order = np.argsort(w, kind="stable")
        return w[order], v[:, order]
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off <= tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta != 0 else 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise EigenConvergenceError("Jacobi sweeps exhausted", off / scale)
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def lanczos_smallest(matvec, n, k, tol, max_iter, norm, seed=0):
    """``k`` smallest eigenpairs via Lanczos with full reorthogonalization.

    The Krylov basis grows until every Ritz pair satisfies
    ``||A u - lambda u|| <= tol * norm`` or ``max_iter`` basis vectors are
    reached. On breakdown a fresh random direction orthogonal to the basis
    is injected, which recovers repeated eigenvalues.
    """
    rng = np.random.default_rng(seed)
    limit = min(n, max(int(max_iter), k))
    basis = np.zeros((n, limit))
    alphas, betas = [], []
    q = rng.standard_normal(n)
    q /= np.linalg.norm(q)
    beta = 0.0
    target = min(limit, max(2 * k + 10, 30))
    best = np.inf
    m = 0
    while True:
        while m < target:
            basis[:, m] = q
            u = matvec(q)
            alpha = float(q @ u)
            r = u - alpha * q
            if m > 0:
                r -= beta * basis[:, m - 1]
            for _ in range(2):
                r -= basis[:, : m + 1] @ (basis[:, : m + 1].T @ r)
            alphas.append(alpha)
            m += 1
            beta = float(np.linalg.norm(r))
            if m < limit and beta <= 1e-10 * max(norm, 1.0):
                r = rng.standard_normal(n)
                for _ in range(2):
                    r -= basis[:, :m] @ (basis[:, :m].T @ r)
                q = r / np.linalg.norm(r)
                beta = 0.0
            elif m < limit:
                q = r / beta
            betas.append(beta)
        if m == 1:
            theta, s = np.array(alphas), np.ones((1, 1))
        else:
            theta, s = sla.eigh_tridiagonal(np.array(alphas), np.array(betas[: m - 1]))
        vecs = basis[:, :m] @ s[:, :k]
        vals = theta[:k]
        res = np.array([np.linalg.norm(matvec(vecs[:, i]) - vals[i] * vecs[:, i]) for i in range(k)])
        rel = float(res.max() / max(norm, 1e-300))
        best = min(best, rel)
        if rel <= tol:
            return vals, vecs
        if m >= limit:
            raise EigenConvergenceError(f"Lanczos did not converge in {m} steps", best)
        target = min(limit, 2 * m)


def smallest_eigenpairs(l, k, tol=1e-10, max_iter=5000):
    """``k`` smallest eigenpairs of a symmetric matrix, ascending.

    Dense LAPACK (``eigh``) up to ``DENSE_LIMIT`` rows, Lanczos above.
    Raises :class:`EigenConvergenceError` when the relative residual
    ``||L u - lambda u|| / ||L||_F`` exceeds ``tol`` for any pair.
    """
    sparse_in = isinstance(l, SparseSymMatrix)
    n = l.dim if sparse_in else np.asarray(l).shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    if sparse_in:
        norm = l.frobenius_norm()
    else:
        l = np.asarray(l, dtype=np.float64)
        norm = float(np.linalg.norm(l))
    if n <= DENSE_LIMIT:
        a = l.to_dense() if sparse_in else l
        vals, vecs = sla.eigh(a, subset_by_index=[0, k - 1])
        res = np.linalg.norm(a @ vecs - vecs * vals, axis=0)
        rel = float(res.max() / norm) if norm > 0 else float(res.max())
        if rel > tol:
            raise EigenConvergenceError("dense eigensolver residual above tolerance", rel)
        return vals, vecs
    op = l.to_scipy() if sparse_in else l
    return lanczos_smallest(lambda v: op @ v, n, k, tol, max_iter, norm)


# ---------------------------------------------------------------------------
# k-means
# ---------------------------------------------------------------------------

def _kmeanspp(x, K, rng):
    n = x.shape[0]
    centers = np.empty((K, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for c in range(1, K):
        total = d2.sum()
        idx = rng.integers(n) if total <= 0 else int(rng.choice(n, p=d2 / total))
        centers[c] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[c]) ** 2, axis=1))
    return centers


def _lloyd(x, K, rng, max_iter):
    n = x.shape[0]
    centers = _kmeanspp(x, K, rng)
    labels = None
    trace = []
    for _ in range(max_iter):
        d2 = cdist(x, centers, "sqeuclidean")
        new = np.argmin(d2, axis=1)
        own = d2[np.arange(n), new]
        trace.append(float(own.sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        counts = np.bincount(labels, minlength=K)
        for c in np.flatnonzero(counts == 0):
            # farthest point whose own cluster keeps at least one other member
            movable = np.where(counts[labels] > 1, own, -1.0)
            far = int(np.argmax(movable))
            counts[labels[far]] -= 1
            labels[far] = c
            counts[c] = 1
            own[far] = 0.0
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, x)
        centers = sums / counts[:, None]
    return labels if labels is not None else np.zeros(n, np.int64), trace


def kmeans(rows, K, seed=0, max_iter=300, n_init=10) -> ClusterAssignment:
    """Lloyd's algorithm with k-means++ seeding, best of ``n_init`` starts.

    Each start stops at an assignment fixed point or after ``max_iter``
    iterations; the start with the lowest final inertia wins (earliest on
    ties). Empty clusters are reseeded at the point farthest from its
    centroid. Labels are renumbered by first occurrence; the winning start's
    per-iteration inertia is kept in ``inertia_trace``.
    """
    x = np.asarray(rows, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if K < 1 or K > n:
        raise ValueError(f"K must lie in [1, {n}], got {K}")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        labels, trace = _lloyd(x, K, rng, max_iter)
        if best is None or trace[-1] < best[1][-1]:
            best = (labels, trace)
    return ClusterAssignment(canonical_labels(best[0]), K, tuple(best[1]))


def kmeans_inertia(rows, labels):
    x = np.asarray(rows, dtype=np.float64)
    total = 0.0
    for c in np.unique(labels):
        pts = x[labels == c]
        total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
    return total


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def spectral_embedding(features, K, config=AffinityConfig()):
    """Row embedding fed to k-means and the count of zero rows left unnormalized."""
    s = rbf_affinity_dense(features, config.zeta, config.knn)
    lap = affinity_laplacian_dense(s)
    _, u = smallest_eigenpairs(lap, K, config.eig_tol, config.eig_max_iter)
    zero_rows = 0
    if config.row_normalize:
        norms = np.linalg.norm(u, axis=1)
        zero = norms <= 1e-300
        zero_rows = int(zero.sum())
        if zero_rows:
            log.warning("%d embedding row(s) have zero norm and were left unnormalized", zero_rows)
        u = u / np.where(zero, 1.0, norms)[:, None]
    return u, zero_rows


def spectral_cluster(features, K, config=AffinityConfig(), seed=0) -> ClusterAssignment:
    """Cluster rows of ``features`` into ``K >= 2`` groups."""
    x = np.asarray(features, dtype=np.float64)
    if K < 2:
        raise ValueError("spectral clustering needs K >= 2")
    if K > x.shape[0]:
        raise ValueError(f"K={K} exceeds the number of points {x.shape[0]}")
    u, _ = spectral_embedding(x, K, config)
    return kmeans(u, K, seed)
