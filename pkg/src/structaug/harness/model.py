"""Propagation + multinomial logistic regression trained with per-epoch augmentation."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..cluster_augment import AddConfig, MergeMode, add_probabilities, cluster_edge_weights, incidence_matrix
from ..graph import Graph, canonical_pairs, normalized_adjacency_csr
from ..rng import ADD_STREAM, DROP_STREAM, derive_seed
from ..sampling import DropConfig, draw_mask, drop_probabilities
from ..spectral import AffinityConfig, ClusterAssignment, spectral_cluster
from ..weighting import edge_weight_matrix

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AugmentSpec:
    """What the training-time augmenter does to each source graph.

    ``drop=None`` keeps the original edges; ``add=None`` adds no cluster
    edges; ``keep_original=False`` starts from an empty edge set, so only
    cluster edges remain.
    """

    drop: Optional[DropConfig] = None
    add: Optional[AddConfig] = None
    num_clusters: int = 100
    affinity: AffinityConfig = AffinityConfig()
    keep_original: bool = True
    cluster_seed: int = 0

    def __post_init__(self):
        if self.add is not None and self.num_clusters < 2:
            raise ValueError("num_clusters must be >= 2")


@dataclass(frozen=True)
class TrainConfig:
    propagation_k: int = 2
    learning_rate: float = 0.001
    epochs: int = 200
    l2: float = 0.0
    augment: Optional[AugmentSpec] = None
    seed: int = 0
    holdout: float = 0.0
    backoff_retries: int = 30

    def __post_init__(self):
        if self.propagation_k < 0:
            raise ValueError("propagation_k must be >= 0")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0 or self.l2 < 0:
            raise ValueError("epochs and l2 must be non-negative")
        if not 0.0 <= self.holdout < 1.0:
            raise ValueError("holdout must be in [0, 1)")


@dataclass(eq=False)
class LinearModel:
    weight: np.ndarray
    bias: np.ndarray
    loss_trace: List[float] = field(default_factory=list)
    learning_rate: float = 0.0

    @classmethod
    def zeros(cls, d, C):
        return cls(np.zeros((d, C)), np.zeros(C))

    def scores(self, h):
        return h @ self.weight + self.bias


# ---------------------------------------------------------------------------
# propagation
# ---------------------------------------------------------------------------

def propagate_matrix(a_hat, x, k):
    h = np.asarray(x, dtype=np.float64)
    for _ in range(k):
        h = a_hat @ h
    return h


def propagate_features(g: Graph, k: int) -> np.ndarray:
    """``A_hat^k X`` with the self-loop normalized adjacency (weighted degrees)."""
    if k == 0:
        return np.array(g.features, dtype=np.float64)
    a_hat = normalized_adjacency_csr(g.num_nodes, g.edges, g.weights, add_self_loops=True)
    return propagate_matrix(a_hat, g.features, k)


# ---------------------------------------------------------------------------
# augmentation, precomputed per graph
# ---------------------------------------------------------------------------

class PreparedAugmenter:
    """Per-graph augmenter with weights, thresholds and clusters computed once.

    ``edges(epoch)`` returns the same edge set as
    :func:`structaug.cluster_augment.augment` for that epoch and seed.
    """

    def __init__(self, g: Graph, spec: AugmentSpec, seed: int, assignment: Optional[ClusterAssignment] = None):
        self.g = g
        self.spec = spec
        self.seed = int(seed)
        if spec.keep_original and spec.drop is not None and g.num_edges:
            self.drop_probs = drop_probabilities(edge_weight_matrix(g), spec.drop).values
        else:
            self.drop_probs = None
        self.add_rows = self.add_cols = self.add_probs = None
        self.assignment = None
        if spec.add is not None and spec.add.enabled:
            if assignment is None:
                assignment = spectral_cluster(g.features, spec.num_clusters, spec.affinity, spec.cluster_seed)
            self.assignment = assignment
            probs = add_probabilities(cluster_edge_weights(incidence_matrix(assignment.compact())), spec.add)
            self.add_rows, self.add_cols, self.add_probs = probs.rows, probs.cols, probs.values

    def edges(self, epoch):
        spec, g = self.spec, self.g
        if not spec.keep_original:
            d_edges, d_w = np.empty((0, 2), np.int64), np.empty(0)
        elif self.drop_probs is None:
            d_edges, d_w = g.edges, g.weights
        else:
            keep = draw_mask(self.drop_probs, self.seed, epoch, DROP_STREAM)
            d_edges, d_w = g.edges[keep], g.weights[keep]
        if self.add_probs is None:
            return d_edges, d_w
        keep = draw_mask(self.add_probs, self.seed, epoch, ADD_STREAM)
        c_r, c_c = self.add_rows[keep], self.add_cols[keep]
        if spec.add.merge is MergeMode.UNION:
            r, c, w = canonical_pairs(np.concatenate([c_r, d_edges[:, 0]]),
                                      np.concatenate([c_c, d_edges[:, 1]]),
                                      np.ones(c_r.size + d_w.size))
        else:
            eta = spec.add.eta
            r, c, w = canonical_pairs(np.concatenate([c_r, d_edges[:, 0]]),
                                      np.concatenate([c_c, d_edges[:, 1]]),
                                      np.concatenate([np.full(c_r.size, eta), (1.0 - eta) * d_w]),
                                      reduce="sum")
            nz = w != 0
            r, c, w = r[nz], c[nz], w[nz]
        return np.column_stack([r, c]), w

    def graph(self, epoch) -> Graph:
        e, w = self.edges(epoch)
        return Graph(self.g.num_nodes, e, w, self.g.features, self.g.labels, self.g.domain_tag)

    def propagate(self, epoch, k):
        if k == 0:
            return np.array(self.g.features, dtype=np.float64)
        e, w = self.edges(epoch)
        return propagate_matrix(normalized_adjacency_csr(self.g.num_nodes, e, w), self.g.features, k)


def augment_seed(train_seed, domain_index):
    return derive_seed(train_seed, domain_index, 0xA06)


# ---------------------------------------------------------------------------
# loss
# ---------------------------------------------------------------------------

def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def loss_and_grad(weight, bias, feats: Sequence[np.ndarray], labels: Sequence[np.ndarray], l2=0.0,
                  masks: Optional[Sequence[np.ndarray]] = None):
    """Cross-entropy summed over nodes, averaged over graphs, plus ``l2/2 ||W||^2``.

    Returns ``(loss, grad_weight, grad_bias)``.
    """
    D = len(feats)
    loss = 0.0
    gw = np.zeros_like(weight)
    gb = np.zeros_like(bias)
    for i, (h, y) in enumerate(zip(feats, labels)):
        if masks is not None:
            h, y = h[masks[i]], y[masks[i]]
        z = h @ weight + bias
        zmax = z.max(axis=1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
        loss += float(np.sum(lse - z[np.arange(y.size), y]))
        r = softmax(z)
        r[np.arange(y.size), y] -= 1.0
        gw += h.T @ r
        gb += r.sum(axis=0)
    loss /= D
    gw /= D
    gb /= D
    if l2:
        loss += 0.5 * l2 * float(np.sum(weight * weight))
        gw += l2 * weight
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite loss {loss}; max |W| = {np.abs(weight).max():.3e}")
    return loss, gw, gb


def _check_labels(y, C):
    if y is None:
        raise ValueError("training graph has no labels")
    if y.size and (y.min() < 0 or y.max() >= C):
        raise ValueError(f"label outside [0, {C})")


def train(datasets: Sequence[Tuple[Graph, np.ndarray]], config: TrainConfig, num_classes=None,
          assignments: Optional[Sequence[ClusterAssignment]] = None) -> LinearModel:
    """Full-batch gradient descent on the augmented source graphs.

    Each epoch re-augments every source graph with a fresh epoch index,
    re-propagates its features and takes one gradient step. Without an
    augmenter the features are fixed and any step that raises the loss is
    undone and retried at half the learning rate.
    """
    if not datasets:
        raise ValueError("need at least one source graph")
    labels = [np.asarray(y, dtype=np.int64) for _, y in datasets]
    C = num_classes or int(max(y.max() for y in labels if y.size)) + 1
    for y in labels:
        _check_labels(y, C)
    d = datasets[0][0].features.shape[1]
    model = LinearModel.zeros(d, C)
    model.learning_rate = config.learning_rate
    k = config.propagation_k

    masks = None
    if config.holdout > 0:
        masks = []
        for i, (g, _) in enumerate(datasets):
            r = np.random.default_rng(derive_seed(config.seed, i, 0x401D))
            masks.append(r.random(g.num_nodes) >= config.holdout)

    spec = config.augment
    if spec is None:
        feats = [propagate_features(g, k) for g, _ in datasets]
        _descend_fixed(model, feats, labels, masks, config)
        return model

    augs = [PreparedAugmenter(g, spec, augment_seed(config.seed, i),
                              assignments[i] if assignments is not None else None)
            for i, (g, _) in enumerate(datasets)]
    lr = config.learning_rate
    for t in range(config.epochs):
        feats = [a.propagate(t, k) for a in augs]
        loss, gw, gb = loss_and_grad(model.weight, model.bias, feats, labels, config.l2, masks)
        model.loss_trace.append(loss)
        model.weight = model.weight - lr * gw
        model.bias = model.bias - lr * gb
    return model


def _descend_fixed(model, feats, labels, masks, config):
    lr = config.learning_rate
    if config.epochs == 0:
        return
    loss, gw, gb = loss_and_grad(model.weight, model.bias, feats, labels, config.l2, masks)
    model.loss_trace.append(loss)
    for _ in range(config.epochs):
        for _ in range(config.backoff_retries + 1):
            w_new = model.weight - lr * gw
            b_new = model.bias - lr * gb
            try:
                new_loss, new_gw, new_gb = loss_and_grad(w_new, b_new, feats, labels, config.l2, masks)
            except TrainingError:
                new_loss = np.inf
            if new_loss <= loss:
                break
            lr *= 0.5
        else:
            log.info("no descent step found at lr=%g; stopping", lr)
            break
        model.weight, model.bias = w_new, b_new
        loss, gw, gb = new_loss, new_gw, new_gb
        model.loss_trace.append(loss)
    model.learning_rate = lr


def predict(model: LinearModel, g: Graph, k: int) -> np.ndarray:
    """Class with the highest score; ties go to the lowest class id."""
    if g.features.shape[1] != model.weight.shape[0]:
        raise ValueError(f"feature dimension {g.features.shape[1]} != model input {model.weight.shape[0]}")
    return np.argmax(model.scores(propagate_features(g, k)), axis=1)
