"""Synthetic multi-domain benchmark with structure-only distribution shift.

Every domain draws node features from the same class-conditional Gaussians;
only the graph changes between domains. Stochastic-block-model edge
probabilities are perturbed per domain, and a share of edges is rewired into
domain-specific heterophilous wiring (see ``_rewire_to_hubs``).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from ..graph import Graph, load_graph, save_features, save_graph, save_labels
from ..rng import derive_seed

MANIFEST_VERSION = 1


@dataclass(frozen=True, eq=False)
class DomainDataset:
    graphs: List[Graph]
    num_classes: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.graphs:
            raise ValueError("dataset has no graphs")
        d = {g.features.shape[1] for g in self.graphs}
        if len(d) != 1:
            raise ValueError(f"graphs disagree on feature dimension: {sorted(d)}")
        tags = [g.domain_tag for g in self.graphs]
        if len(set(tags)) != len(tags):
            raise ValueError("domain tags must be distinct")
        for g in self.graphs:
            if g.labels is None:
                raise ValueError(f"domain {g.domain_tag!r} has no labels")
            if g.labels.size and g.labels.max() >= self.num_classes:
                raise ValueError(f"domain {g.domain_tag!r} has a label >= {self.num_classes}")

    @property
    def feature_dim(self):
        return self.graphs[0].features.shape[1]

    @property
    def domain_tags(self):
        return [g.domain_tag for g in self.graphs]


def _sbm_edges(labels, p_in, p_out, rng):
    n = labels.size
    i, j = np.triu_indices(n, k=1)
    p = np.where(labels[i] == labels[j], p_in, p_out)
    keep = rng.random(i.size) < p
    return np.column_stack([i[keep], j[keep]])


def _derangement(C, rng):
    if C < 2:
        return np.zeros(C, dtype=np.int64)
    while True:
        p = rng.permutation(C)
        if np.all(p != np.arange(C)):
            return p


def _rewire_to_hubs(edges, labels, C, hub_fraction, rewire_fraction, rng, mode="pair"):
    """Move a random share of edges into domain-specific noise wiring.

    ``mode="pair"``: a random set of ``hub_fraction * n`` active nodes plus a
    class derangement ``perm`` drawn per domain; each moved edge becomes
    (active node of class c, active node of class perm[c]).
    ``mode="class"``: one endpoint of each moved edge is replaced by a hub
    drawn from a single class picked per domain.
    """
    n = labels.size
    n_hubs = int(round(hub_fraction * n))
    if n_hubs == 0 or rewire_fraction == 0 or edges.size == 0:
        return edges, None
    edges = edges.copy()
    moved = np.flatnonzero(rng.random(edges.shape[0]) < rewire_fraction)
    if mode == "class":
        hub_class = int(rng.integers(C))
        pool = np.flatnonzero(labels == hub_class)
        hubs = rng.choice(pool, size=min(n_hubs, pool.size), replace=False)
        side = rng.integers(2, size=moved.size)
        edges[moved, side] = hubs[rng.integers(hubs.size, size=moved.size)]
        return edges, hub_class
    perm = _derangement(C, rng)
    active = rng.choice(n, size=n_hubs, replace=False)
    by_class = [active[labels[active] == c] for c in range(C)]
    a = active[rng.integers(active.size, size=moved.size)]
    u = rng.random(moved.size)
    for e, src, t in zip(moved, a, u):
        pool = by_class[perm[labels[src]]]
        if pool.size:
            edges[e] = (src, pool[int(t * pool.size)])
    return edges, perm


def synthesize_ood_benchmark(
    num_domains: int = 3,
    nodes_per_domain: int = 300,
    num_classes: int = 5,
    d: int = 16,
    intra_p: float = 0.04,
    inter_p: float = 0.003,
    structure_jitter: Optional[Sequence[float]] = None,
    seed: int = 0,
    feature_noise: float = 3.0,
    feature_offset: float = 0.0,
    center_scale: float = 1.0,
    hub_fraction: float = 0.4,
    rewire_fraction: float = 0.5,
    rewire_mode: str = "pair",
) -> DomainDataset:
    """Generate ``num_domains`` labelled graphs sharing one feature distribution.

    Domain ``k`` uses block probabilities ``intra_p * (1 + j_k)`` (same class)
    and ``inter_p * (1 - j_k)`` (different class), clipped to [0, 1], then
    rewires each edge with probability ``rewire_fraction`` as described in
    ``_rewire_to_hubs``. Defaults describe the benchmark used by the trend
    checks: noisy features, so structure matters, and heavy per-domain
    heterophilous rewiring, so source structure does not transfer.
    """
    if structure_jitter is None:
        structure_jitter = [0.0] * num_domains
    structure_jitter = [float(j) for j in structure_jitter]
    if len(structure_jitter) != num_domains:
        raise ValueError("structure_jitter needs one entry per domain")
    for name, v in (("intra_p", intra_p), ("inter_p", inter_p),
                    ("hub_fraction", hub_fraction), ("rewire_fraction", rewire_fraction)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} must be in [0, 1], got {v}")
    if rewire_mode not in ("pair", "class"):
        raise ValueError(f"rewire_mode must be 'pair' or 'class', got {rewire_mode!r}")
    if num_domains < 1 or nodes_per_domain < num_classes or num_classes < 1 or d < 1:
        raise ValueError("need >= 1 domain, >= 1 class, d >= 1 and at least one node per class")

    centers = np.random.default_rng(derive_seed(seed, 0)).normal(0.0, center_scale, (num_classes, d))
    graphs = []
    for k in range(num_domains):
        rng = np.random.default_rng(derive_seed(seed, k + 1))
        n = nodes_per_domain
        labels = rng.permutation(np.arange(n) % num_classes)
        x = feature_offset + centers[labels] + feature_noise * rng.standard_normal((n, d))
        jit = structure_jitter[k]
        p_in = float(np.clip(intra_p * (1.0 + jit), 0.0, 1.0))
        p_out = float(np.clip(inter_p * (1.0 - jit), 0.0, 1.0))
        edges = _sbm_edges(labels, p_in, p_out, rng)
        edges, _ = _rewire_to_hubs(edges, labels, num_classes, hub_fraction, rewire_fraction, rng, rewire_mode)
        graphs.append(Graph.from_edges(n, edges, None, x, labels, f"D{k}"))
    meta = dict(num_domains=num_domains, nodes_per_domain=nodes_per_domain, num_classes=num_classes,
                d=d, intra_p=intra_p, inter_p=inter_p, structure_jitter=structure_jitter, seed=seed,
                feature_noise=feature_noise, feature_offset=feature_offset, center_scale=center_scale, hub_fraction=hub_fraction,
                rewire_fraction=rewire_fraction, rewire_mode=rewire_mode)
    return DomainDataset(graphs, num_classes, meta)


def save_dataset(ds: DomainDataset, out_dir, header=()):
    """Write per-domain edge/feature/label files and ``manifest.json``."""
    os.makedirs(out_dir, exist_ok=True)
    domains = []
    for g in ds.graphs:
        files = {k: f"{g.domain_tag}.{k}.tsv" for k in ("edges", "features", "labels")}
        save_graph(g, os.path.join(out_dir, files["edges"]), header)
        save_features(g.features, os.path.join(out_dir, files["features"]))
        save_labels(g.labels, os.path.join(out_dir, files["labels"]))
        domains.append(dict(tag=g.domain_tag, **files))
    manifest = dict(version=MANIFEST_VERSION, num_classes=ds.num_classes,
                    feature_dim=ds.feature_dim, domains=domains, generator=ds.meta)
    path = os.path.join(out_dir, "manifest.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_dataset(manifest_path) -> DomainDataset:
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    base = os.path.dirname(os.path.abspath(manifest_path))
    graphs = []
    for dom in manifest["domains"]:
        graphs.append(load_graph(os.path.join(base, dom["edges"]),
                                 os.path.join(base, dom["features"]),
                                 os.path.join(base, dom["labels"]),
                                 dom["tag"]))
    return DomainDataset(graphs, int(manifest["num_classes"]), manifest.get("generator", {}))
