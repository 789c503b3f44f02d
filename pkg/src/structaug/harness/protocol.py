"""Leave-one-domain-out evaluation and the augmentation comparison experiments."""

from __future__ import annotations

import dataclasses
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..cluster_augment import AddConfig
from ..sampling import DropConfig, DropStrategy
from ..spectral import spectral_cluster
from .metrics import micro_macro_f1
from .model import AugmentSpec, TrainConfig, predict, train
from .synth import DomainDataset


@dataclass
class TaskResult:
    target: str
    sources: List[str]
    seeds: List[int]
    micro_f1: List[float]
    macro_f1: List[float]
    accuracy: List[float]

    def summary(self):
        out = {}
        for name in ("micro_f1", "macro_f1", "accuracy"):
            v = np.array(getattr(self, name))
            out[name] = {"mean": float(v.mean()), "std": float(v.std())}
        return out

    @property
    def name(self):
        return "".join(self.sources) + "->" + self.target


@dataclass
class MetricsReport:
    tasks: List[TaskResult]
    meta: Dict = field(default_factory=dict)

    def mean(self, metric="macro_f1"):
        """Mean over tasks and seeds."""
        return float(np.mean([np.mean(getattr(t, metric)) for t in self.tasks]))

    def per_seed(self, metric="macro_f1"):
        """Task-averaged metric for each seed."""
        return np.mean([getattr(t, metric) for t in self.tasks], axis=0)

    def to_dict(self):
        return {
            "meta": self.meta,
            "tasks": [dict(task=t.name, **dataclasses.asdict(t), summary=t.summary()) for t in self.tasks],
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def config_to_dict(obj):
    """Plain-data view of a (nested) config dataclass."""
    if dataclasses.is_dataclass(obj):
        return {f.name: config_to_dict(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [config_to_dict(v) for v in obj]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def cluster_cache(dataset: DomainDataset, spec: Optional[AugmentSpec]):
    """Spectral clusters of every domain, computed once before any training."""
    if spec is None or spec.add is None or not spec.add.enabled:
        return None
    return {g.domain_tag: spectral_cluster(g.features, spec.num_clusters, spec.affinity, spec.cluster_seed)
            for g in dataset.graphs}


def _run_task(dataset: DomainDataset, config: TrainConfig, t_idx: int, seed: int, clusters):
    target = dataset.graphs[t_idx]
    sources = [g for i, g in enumerate(dataset.graphs) if i != t_idx]
    cfg = dataclasses.replace(config, seed=int(seed))
    assign = [clusters[g.domain_tag] for g in sources] if clusters else None
    model = train([(g, g.labels) for g in sources], cfg, dataset.num_classes, assign)
    pred = predict(model, target, cfg.propagation_k)
    return micro_macro_f1(pred, target.labels, dataset.num_classes)


def leave_one_domain_out(dataset: DomainDataset, config: TrainConfig, seeds: Sequence[int] = (0,),
                         clusters=None, jobs: int = 1) -> MetricsReport:
    """Hold out each domain in turn, train on the rest, score the held-out graph.

    ``jobs > 1`` spreads the (task, seed) runs over worker processes; results
    are collected in submission order, so the report does not depend on it.
    """
    if len(dataset.graphs) < 2:
        raise ValueError("leave-one-domain-out needs at least 2 domains")
    if jobs < 1:
        raise ValueError("jobs must be >= 1")
    if clusters is None:
        clusters = cluster_cache(dataset, config.augment)
    seeds = [int(s) for s in seeds]
    work = [(t, s) for t in range(len(dataset.graphs)) for s in seeds]
    if jobs == 1:
        scores = [_run_task(dataset, config, t, s, clusters) for t, s in work]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_run_task, dataset, config, t, s, clusters) for t, s in work]
            scores = [f.result() for f in futures]
    tasks = []
    for t_idx, target in enumerate(dataset.graphs):
        sources = [g.domain_tag for i, g in enumerate(dataset.graphs) if i != t_idx]
        res = TaskResult(target.domain_tag, sources, list(seeds), [], [], [])
        for (t, _), (mi, ma, acc) in zip(work, scores):
            if t == t_idx:
                res.micro_f1.append(mi)
                res.macro_f1.append(ma)
                res.accuracy.append(acc)
        tasks.append(res)
    meta = {"config": config_to_dict(config), "seeds": list(seeds),
            "domains": dataset.domain_tags, "num_classes": dataset.num_classes, "dataset": dataset.meta}
    return MetricsReport(tasks, meta)


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7)


def low_weight_spec(ratio, rho=0.0, base: Optional[AugmentSpec] = None):
    """Threshold-cutoff dropping with ``ratio`` of the edges in the droppable band."""
    drop = DropConfig(DropStrategy.THRESHOLD, alpha=ratio, rho=rho)
    return dataclasses.replace(base, drop=drop) if base else AugmentSpec(drop=drop)


def random_drop_spec(ratio):
    """Uniform edge dropping at rate ``ratio``."""
    return AugmentSpec(drop=DropConfig(DropStrategy.RANDOM, rho=1.0 - ratio))


def drop_ratio_sweep(dataset, config: TrainConfig, ratios=DEFAULT_RATIOS, seeds=range(10), rho=0.0, jobs=1):
    """Held-out macro/micro-F1 of low-weight vs random dropping across drop ratios.

    Returns a list of row dicts, one per (method, ratio), plus a baseline row
    with ``ratio = 0``.
    """
    seeds = list(seeds)
    rows = []
    base = leave_one_domain_out(dataset, dataclasses.replace(config, augment=None), seeds, jobs=jobs)
    rows.append(_row("baseline", 0.0, base))
    for r in ratios:
        for method, spec in (("low_weight", low_weight_spec(r, rho)), ("random", random_drop_spec(r))):
            rep = leave_one_domain_out(dataset, dataclasses.replace(config, augment=spec), seeds, jobs=jobs)
            rows.append(_row(method, r, rep))
    return rows


def ablation_specs(alpha, rho, add: AddConfig, num_clusters, affinity=None):
    kw = {"num_clusters": num_clusters}
    if affinity is not None:
        kw["affinity"] = affinity
    drop = DropConfig(DropStrategy.THRESHOLD, alpha=alpha, rho=rho)
    return {
        "baseline": None,
        "only_clustering_edge": AugmentSpec(add=add, keep_original=False, **kw),
        "low_weight_only": AugmentSpec(drop=drop, **kw),
        "clustering_without_dropping": AugmentSpec(add=add, **kw),
        "low_weight_plus_clustering": AugmentSpec(drop=drop, add=add, **kw),
    }


def component_ablation(dataset, config: TrainConfig, alpha, rho, add: AddConfig, num_clusters,
                       seeds=range(10), affinity=None, jobs=1):
    """Rows for each augmenter combination."""
    seeds = list(seeds)
    specs = ablation_specs(alpha, rho, add, num_clusters, affinity)
    clusters = cluster_cache(dataset, specs["low_weight_plus_clustering"])
    rows = []
    for name, spec in specs.items():
        rep = leave_one_domain_out(dataset, dataclasses.replace(config, augment=spec), seeds, clusters, jobs)
        rows.append(_row(name, alpha if spec and spec.drop else 0.0, rep))
    return rows


def _row(method, ratio, rep: MetricsReport):
    ma = rep.per_seed("macro_f1")
    mi = rep.per_seed("micro_f1")
    acc = rep.per_seed("accuracy")
    return {"method": method, "ratio": float(ratio),
            "macro_f1_mean": float(ma.mean()), "macro_f1_std": float(ma.std()),
            "micro_f1_mean": float(mi.mean()), "micro_f1_std": float(mi.std()),
            "accuracy_mean": float(acc.mean()), "accuracy_std": float(acc.std()),
            "macro_f1_per_seed": [float(v) for v in ma]}
