"""Keep-probabilities for low-weight edge dropping and Bernoulli edge masks."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .graph import Graph, SparseSymMatrix
from .rng import DROP_STREAM, uniforms
from .weighting import edge_weight_matrix


class DropStrategy(str, enum.Enum):
    THRESHOLD = "threshold"
    DIVISION = "division"
    CDF = "cdf"
    # uniform DropEdge baseline: every edge kept with probability rho
    RANDOM = "random"


@dataclass(frozen=True)
class DropConfig:
    strategy: DropStrategy = DropStrategy.THRESHOLD
    alpha: float = 0.5
    rho: float = 0.5
    tau_param: float = 1.0
    seed: int = 0
    epoch: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", DropStrategy(self.strategy))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must be in [0, 1], got {self.rho}")
        if not self.tau_param > 0.0:
            raise ValueError(f"tau_param must be > 0, got {self.tau_param}")
        if self.epoch < 0:
            raise ValueError("epoch must be non-negative")


def kth_smallest(values, k):
    """``k``-th smallest (1-based) value, ``k`` clamped to ``[1, len]``."""
    values = np.asarray(values, dtype=np.float64).ravel()
    if values.size == 0:
        raise ValueError("empty weight multiset")
    k = min(max(int(k), 1), values.size)
    return float(np.partition(values, k - 1)[k - 1])


def threshold_tau(weights, alpha: float) -> float:
    """Drop threshold: the ``floor(alpha*|E|) + 1``-th smallest weight.

    With distinct weights exactly ``floor(alpha*|E|)`` weights lie strictly below it.
    """
    weights = np.asarray(weights, dtype=np.float64).ravel()
    if weights.size == 0:
        raise ValueError("empty weight multiset")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return kth_smallest(weights, int(np.floor(alpha * weights.size)) + 1)


def drop_probabilities_threshold(p: SparseSymMatrix, tau: float, rho: float) -> SparseSymMatrix:
    """``rho`` for weights strictly below ``tau``, 1 otherwise."""
    return p.with_values(np.where(p.values < tau, float(rho), 1.0))


def drop_probabilities_division(p: SparseSymMatrix, tau_param: float) -> SparseSymMatrix:
    """``1 - (1 - P) * tau / (tau + P)``, with the edge's own weight as the offset."""
    if not tau_param > 0:
        raise ValueError("tau_param must be > 0")
    w = p.values
    return p.with_values(1.0 - (1.0 - w) * tau_param / (tau_param + w))


def empirical_cdf(values):
    """Right-continuous empirical CDF of ``values`` evaluated at each value."""
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    s = np.sort(values)
    return np.searchsorted(s, values, side="right") / values.size


def drop_probabilities_cdf(p: SparseSymMatrix) -> SparseSymMatrix:
    """``P + (1 - P) * F(P)`` with ``F`` the empirical CDF of this graph's weights."""
    w = p.values
    return p.with_values(w + (1.0 - w) * empirical_cdf(w))


def drop_probabilities(p: SparseSymMatrix, config: DropConfig) -> SparseSymMatrix:
    s = config.strategy
    if s is DropStrategy.THRESHOLD:
        if p.nnz_pairs == 0:
            return p
        return drop_probabilities_threshold(p, threshold_tau(p.values, config.alpha), config.rho)
    if s is DropStrategy.DIVISION:
        return drop_probabilities_division(p, config.tau_param)
    if s is DropStrategy.CDF:
        return drop_probabilities_cdf(p)
    return p.with_values(np.full(p.nnz_pairs, float(config.rho)))


def draw_mask(probs, seed, epoch, stream=DROP_STREAM):
    """Boolean keep-mask, one draw per entry of ``probs`` in canonical order."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size and (np.any(probs < 0) | np.any(probs > 1) | np.any(np.isnan(probs))):
        raise ValueError("probabilities must lie in [0, 1]")
    return uniforms(seed, epoch, probs.size, stream=stream) < probs


def bernoulli_mask(probs: SparseSymMatrix, seed: int, epoch: int, stream=DROP_STREAM) -> SparseSymMatrix:
    """0/1 mask over the support of ``probs``; one draw per unordered pair."""
    keep = draw_mask(probs.values, seed, epoch, stream)
    return probs.with_values(keep.astype(np.float64))


def apply_drop(g: Graph, config: DropConfig) -> Graph:
    """Low-weight edge dropping: weight, keep-probability, mask, filter."""
    if g.num_edges == 0:
        return g
    probs = drop_probabilities(edge_weight_matrix(g), config)
    mask = bernoulli_mask(probs, config.seed, config.epoch)
    return g.subgraph_mask(mask.values > 0)
