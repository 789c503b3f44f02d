"""``structaug`` command line.

Every subcommand takes ``--config FILE`` (a JSON object) whose keys are the
long option names with dashes replaced by underscores; flags given on the
command line override file values. Nested objects are flattened: a key
``k`` inside section ``s`` becomes ``s_k`` when that is an option name and
``k`` otherwise, so ``{"add": {"rho": 0.3}}`` sets ``--add-rho``.

Exit status: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from typing import Callable, Dict, List, Optional

import numpy as np

from . import __version__
from .cluster_augment import AddConfig, AddVariant, MergeMode, augment, sample_cluster_edges
from .graph import (
    Graph,
    GraphFormatError,
    GraphShapeError,
    degree_vector,
    edge_list_text,
    format_real,
    load_graph,
    read_features,
)
from .harness.model import AugmentSpec, TrainConfig, TrainingError
from .harness.protocol import DEFAULT_RATIOS, component_ablation, drop_ratio_sweep, leave_one_domain_out
from .harness.synth import load_dataset, save_dataset, synthesize_ood_benchmark
from .sampling import DropConfig, DropStrategy, apply_drop
from .spectral import AffinityConfig, ClusterAssignment, EigenConvergenceError, spectral_cluster
from .weighting import edge_weight_matrix

log = logging.getLogger("structaug")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

# keys that name where results go rather than what is computed; kept out of provenance
NON_SEMANTIC = {"config", "output", "plot", "out", "jobs"}


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage().strip()}")


# ---------------------------------------------------------------------------
# option table
# ---------------------------------------------------------------------------

def _int_list(v):
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    out = []
    for part in str(v).split(","):
        part = part.strip()
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def _float_list(v):
    if isinstance(v, (list, tuple)):
        return [float(x) for x in v]
    return [float(x) for x in str(v).split(",") if x.strip()]


def _bool(v):
    if isinstance(v, bool):
        return v
    if str(v).lower() in ("1", "true", "yes", "on"):
        return True
    if str(v).lower() in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _zeta(v):
    return v if v == "median" else float(v)


def _opt_int(v):
    return None if v in (None, "none", "None", "") else int(v)


@dataclasses.dataclass(frozen=True)
class Opt:
    dest: str
    conv: Callable
    default: object
    help: str
    choices: Optional[tuple] = None
    flag: bool = False


OPTS: Dict[str, Opt] = {o.dest: o for o in [
    Opt("output", str, None, "output file (default: stdout)"),
    Opt("edges", str, None, "edge list file"),
    Opt("features", str, None, "feature matrix file (tab-separated rows)"),
    Opt("labels", str, None, "label file (one integer per line)"),
    Opt("clusters", str, None, "precomputed cluster file (node<TAB>cluster); computed when absent"),
    Opt("manifest", str, None, "dataset manifest written by `synth`"),
    Opt("plot", str, None, "also render a PNG figure to this path"),
    Opt("seed", int, 0, "random seed"),
    Opt("epoch", int, 0, "epoch index for the per-epoch Bernoulli draws"),
    # dropping
    Opt("strategy", str, "threshold", "edge-dropping strategy",
        ("none", "threshold", "division", "cdf", "random")),
    Opt("alpha", float, 0.5, "threshold cutoff: fraction of edges in the droppable band"),
    Opt("rho", float, 0.5, "threshold cutoff: keep probability of droppable edges"),
    Opt("tau", float, 1.0, "division normalization parameter"),
    # clustering
    Opt("num_clusters", int, 20, "number of spectral clusters K"),
    Opt("zeta", _zeta, "median", "RBF bandwidth, or 'median'"),
    Opt("knn", _opt_int, None, "sparsify the affinity to a symmetric k-nearest-neighbour graph"),
    Opt("cluster_seed", int, 0, "k-means seed"),
    # adding
    Opt("add_edges", _bool, False, "add sampled cluster edges during training", flag=True),
    Opt("beta", float, 0.5, "add threshold ratio"),
    Opt("epsilon", float, 0.1, "add probability below the add threshold (two_tier)"),
    Opt("add_rho", float, 0.5, "add probability of the upper (two_tier) or lower (keep_high) band"),
    Opt("variant", str, "two_tier", "add-probability variant", tuple(v.value for v in AddVariant)),
    Opt("merge", str, "union", "how cluster edges join the kept edges", tuple(m.value for m in MergeMode)),
    Opt("eta", float, 0.5, "mixup weight of the cluster edges"),
    Opt("no_add", _bool, False, "augment: skip the cluster-edge step", flag=True),
    # training
    Opt("k", int, 3, "propagation depth"),
    Opt("lr", float, 0.001, "learning rate"),
    Opt("epochs", int, 100, "training epochs"),
    Opt("l2", float, 0.0, "L2 penalty on the weight matrix"),
    Opt("holdout", float, 0.0, "fraction of source nodes left out of the loss"),
    Opt("seeds", _int_list, [0], "training seeds, e.g. 0,1,2 or 0-9"),
    Opt("jobs", int, 1, "worker processes for independent runs"),
    Opt("ratios", _float_list, list(DEFAULT_RATIOS), "drop ratios for the sweep"),
    Opt("sweep_rho", float, 0.0, "keep probability of the droppable band in the sweep"),
    # synthesis
    Opt("out", str, None, "output directory"),
    Opt("num_domains", int, 3, "domains"),
    Opt("nodes_per_domain", int, 300, "nodes per domain"),
    Opt("num_classes", int, 5, "classes"),
    Opt("dim", int, 16, "feature dimension"),
    Opt("intra_p", float, 0.04, "same-class edge probability"),
    Opt("inter_p", float, 0.003, "cross-class edge probability"),
    Opt("jitter", _float_list, [-0.3, 0.0, 0.3], "per-domain structure jitter"),
    Opt("feature_noise", float, 3.0, "feature noise std"),
    Opt("hub_fraction", float, 0.4, "share of nodes taking rewired edges"),
    Opt("rewire_fraction", float, 0.5, "share of edges rewired per domain"),
    Opt("rewire_mode", str, "pair", "rewiring scheme", ("pair", "class")),
]}

SOURCE = ["config", "output"]
DROP = ["strategy", "alpha", "rho", "tau", "seed", "epoch"]
CLUSTER = ["num_clusters", "zeta", "knn", "cluster_seed"]
ADD = ["beta", "epsilon", "add_rho", "variant", "seed", "epoch"]
TRAIN = ["k", "lr", "epochs", "l2", "holdout", "seeds", "jobs"]

COMMANDS = {
    "weights": ("normalized edge weights 1/sqrt(d_i d_j) as i<TAB>j<TAB>w", ["edges"]),
    "drop": ("one epoch of edge dropping", ["edges"] + DROP),
    "cluster": ("spectral clustering of node features", ["features"] + CLUSTER),
    "add": ("sampled cluster-induced edges", ["edges", "features", "clusters"] + CLUSTER + ADD),
    "augment": ("drop low-weight edges, then add cluster edges",
                ["edges", "features", "clusters"] + DROP + CLUSTER + ["beta", "epsilon", "add_rho", "variant",
                                                                     "merge", "eta", "no_add"]),
    "synth": ("write the synthetic multi-domain benchmark",
              ["out", "num_domains", "nodes_per_domain", "num_classes", "dim", "intra_p", "inter_p", "jitter",
               "feature_noise", "hub_fraction", "rewire_fraction", "rewire_mode", "seed"]),
    "eval": ("leave-one-domain-out evaluation report (JSON)",
             ["manifest", "plot"] + TRAIN + ["strategy", "alpha", "rho", "tau", "add_edges"] + CLUSTER
             + ["beta", "epsilon", "add_rho", "variant", "merge", "eta"]),
    "stats": ("node/edge counts, degree summary and edge-weight quantiles", ["edges", "plot"]),
    "sweep": ("low-weight vs random dropping over drop ratios (TSV)",
              ["manifest", "plot", "ratios", "sweep_rho"] + TRAIN),
    "ablation": ("augmenter component ablation (TSV)",
                 ["manifest", "plot", "alpha", "rho"] + CLUSTER + ["beta", "epsilon", "add_rho", "variant",
                                                                  "merge", "eta"] + TRAIN),
}

REQUIRED = {
    "weights": ["edges"], "drop": ["edges"], "cluster": ["features"], "add": ["edges", "features"],
    "augment": ["edges", "features"], "synth": ["out"], "eval": ["manifest"], "stats": ["edges"],
    "sweep": ["manifest"], "ablation": ["manifest"],
}


def build_parser():
    parser = _Parser(prog="structaug", description="Structure augmentation for cross-graph node classification.")
    parser.add_argument("--version", action="version", version=f"structaug {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (help_text, dests) in COMMANDS.items():
        p = sub.add_parser(name, help=help_text, description=help_text)
        p.add_argument("--config", default=argparse.SUPPRESS, help="JSON config file; flags override it")
        seen = set()
        for dest in SOURCE[1:] + dests:
            if dest in seen:
                continue
            seen.add(dest)
            o = OPTS[dest]
            flag = "--" + dest.replace("_", "-")
            names = [flag, "-o"] if dest == "output" else [flag]
            if o.flag:
                p.add_argument(*names, dest=dest, action="store_true", default=argparse.SUPPRESS, help=o.help)
            else:
                p.add_argument(*names, dest=dest, default=argparse.SUPPRESS, choices=o.choices,
                               type=str, help=f"{o.help} (default: {o.default})")
    return parser


def _flatten(cfg, allowed):
    out = {}
    for key, value in cfg.items():
        if isinstance(value, dict):
            for k, v in value.items():
                out[f"{key}_{k}" if f"{key}_{k}" in allowed else k] = v
        else:
            out[key] = value
    return out


def resolve(command, ns) -> dict:
    """Defaults, then the config file, then command-line flags."""
    dests = ["output"] + COMMANDS[command][1]
    allowed = set(dests)
    values = {d: OPTS[d].default for d in dests}
    given = vars(ns)
    if "config" in given:
        try:
            with open(given["config"], "r", encoding="utf-8") as fh:
                cfg = json.load(fh)
        except OSError as exc:
            raise DataError(f"cannot read config: {exc}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {given['config']}: invalid JSON ({exc})") from None
        if not isinstance(cfg, dict):
            raise UsageError("config must be a JSON object")
        cfg = _flatten(cfg, allowed)
        unknown = sorted(set(cfg) - allowed)
        if unknown:
            raise UsageError(f"unknown config key(s) for {command!r}: {', '.join(unknown)}")
        values.update(cfg)
    values.update({k: v for k, v in given.items() if k in allowed})
    for d in dests:
        v = values[d]
        if v is None:
            continue
        o = OPTS[d]
        try:
            values[d] = o.conv(v)
        except (TypeError, ValueError):
            raise UsageError(f"--{d.replace('_', '-')}: invalid value {v!r}") from None
        if o.choices and values[d] not in o.choices:
            raise UsageError(f"--{d.replace('_', '-')}: {v!r} not in {{{', '.join(o.choices)}}}")
    missing = [d for d in REQUIRED[command] if values.get(d) is None]
    if missing:
        raise UsageError(f"{command}: missing required " + ", ".join("--" + m.replace("_", "-") for m in missing))
    inputs = {os.path.abspath(values[d]) for d in ("edges", "features", "labels", "clusters", "manifest")
              if values.get(d)}
    for d in ("output", "plot"):
        if values.get(d) and os.path.abspath(values[d]) in inputs:
            raise UsageError(f"--{d} would overwrite an input file")
    return values


def provenance(command, values) -> dict:
    cfg = {k: v for k, v in sorted(values.items()) if k not in NON_SEMANTIC}
    seeds = {k: cfg[k] for k in ("seed", "seeds", "cluster_seed") if k in cfg}
    return {"tool": "structaug", "version": __version__, "command": command, "config": cfg, "seeds": seeds}


def header_lines(prov) -> List[str]:
    return [f"{prov['tool']} {prov['version']} {prov['command']}",
            "config " + json.dumps(prov["config"], sort_keys=True, separators=(",", ":")),
            "seeds " + json.dumps(prov["seeds"], sort_keys=True, separators=(",", ":"))]


def _commented(prov):
    return "".join(f"# {h}\n" for h in header_lines(prov))


def _emit(text, path):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# config builders (usage errors) and loaders (data errors)
# ---------------------------------------------------------------------------

def _configs(build):
    try:
        return build()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def drop_config(v) -> Optional[DropConfig]:
    if v["strategy"] == "none":
        return None
    return _configs(lambda: DropConfig(DropStrategy(v["strategy"]), v["alpha"], v["rho"], v["tau"],
                                       v["seed"], v["epoch"]))


def add_config(v, **extra) -> AddConfig:
    kw = dict(beta=v["beta"], epsilon=v["epsilon"], rho=v["add_rho"], variant=v["variant"])
    for key in ("merge", "eta", "seed", "epoch"):
        if key in v:
            kw[key] = v[key]
    kw.update(extra)
    return _configs(lambda: AddConfig(**kw))


def affinity_config(v) -> AffinityConfig:
    return _configs(lambda: AffinityConfig(zeta=v["zeta"], knn=v["knn"]))


def train_config(v, augment=None) -> TrainConfig:
    if v["jobs"] < 1:
        raise UsageError("--jobs must be >= 1")
    if not v["seeds"]:
        raise UsageError("--seeds is empty")
    return _configs(lambda: TrainConfig(propagation_k=v["k"], learning_rate=v["lr"], epochs=v["epochs"],
                                        l2=v["l2"], augment=augment, holdout=v["holdout"]))


def _load(v, labels=False) -> Graph:
    return load_graph(v["edges"], v.get("features"), v.get("labels") if labels else None)


def _load_clusters(path, n) -> ClusterAssignment:
    ids = {}
    for lineno, line in enumerate(open(path, "r", encoding="utf-8"), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GraphFormatError(path, lineno, "expected node<TAB>cluster")
        try:
            ids[int(parts[0])] = int(parts[1])
        except ValueError:
            raise GraphFormatError(path, lineno, "non-integer field") from None
    if sorted(ids) != list(range(n)):
        raise GraphShapeError(f"{path}: cluster ids must cover nodes 0..{n - 1} exactly once")
    labels = np.array([ids[i] for i in range(n)])
    if labels.min() < 0:
        raise GraphShapeError(f"{path}: negative cluster id")
    return ClusterAssignment(labels, int(labels.max()) + 1)


def _assignment(v, g: Graph) -> ClusterAssignment:
    if v.get("clusters"):
        return _load_clusters(v["clusters"], g.num_nodes)
    if not 2 <= v["num_clusters"] <= g.num_nodes:
        raise UsageError(f"--num-clusters must lie in [2, {g.num_nodes}]")
    return spectral_cluster(g.features, v["num_clusters"], affinity_config(v), v["cluster_seed"])


def _load_dataset(path):
    try:
        return load_dataset(path)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: malformed manifest ({exc})") from None


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_weights(v, prov):
    g = _load(v)
    p = edge_weight_matrix(g)
    lines = [f"{i}\t{j}\t{format_real(w)}" for i, j, w in zip(p.rows.tolist(), p.cols.tolist(), p.values.tolist())]
    _emit(_commented(prov) + f"#nodes {g.num_nodes}\n" + "".join(l + "\n" for l in lines), v["output"])


def cmd_drop(v, prov):
    cfg = drop_config(v)
    if cfg is None:
        raise UsageError("drop: --strategy none does nothing")
    g = _load(v)
    _emit(edge_list_text(apply_drop(g, cfg), header_lines(prov)), v["output"])


def _cluster_text(prov, a: ClusterAssignment):
    return _commented(prov) + "".join(f"{i}\t{c}\n" for i, c in enumerate(a.labels.tolist()))


def cmd_cluster(v, prov):
    x = read_features(v["features"])
    if not 2 <= v["num_clusters"] <= x.shape[0]:
        raise UsageError(f"--num-clusters must lie in [2, {x.shape[0]}]")
    a = spectral_cluster(x, v["num_clusters"], affinity_config(v), v["cluster_seed"])
    _emit(_cluster_text(prov, a), v["output"])


def cmd_add(v, prov):
    cfg = add_config(v)
    g = _load(v)
    gc = sample_cluster_edges(g, _assignment(v, g), cfg)
    _emit(edge_list_text(gc, header_lines(prov)), v["output"])


def cmd_augment(v, prov):
    drop = drop_config(v) or DropConfig(DropStrategy.THRESHOLD, alpha=0.0, rho=1.0)
    add = add_config(v, enabled=not v["no_add"])
    g = _load(v)
    a = _assignment(v, g) if add.enabled else ClusterAssignment(np.zeros(g.num_nodes, np.int64), 1)
    _emit(edge_list_text(augment(g, a, drop, add), header_lines(prov)), v["output"])


def cmd_synth(v, prov):
    try:
        ds = synthesize_ood_benchmark(
            num_domains=v["num_domains"], nodes_per_domain=v["nodes_per_domain"], num_classes=v["num_classes"],
            d=v["dim"], intra_p=v["intra_p"], inter_p=v["inter_p"], structure_jitter=v["jitter"], seed=v["seed"],
            feature_noise=v["feature_noise"], hub_fraction=v["hub_fraction"],
            rewire_fraction=v["rewire_fraction"], rewire_mode=v["rewire_mode"])
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    path = save_dataset(ds, v["out"], header_lines(prov)[:1])
    sys.stdout.write(path + "\n")


def _augment_spec(v) -> Optional[AugmentSpec]:
    drop = drop_config(dict(v, seed=0, epoch=0))
    add = add_config(dict(v, seed=0, epoch=0)) if v["add_edges"] else None
    if drop is None and add is None:
        return None
    return _configs(lambda: AugmentSpec(drop=drop, add=add, num_clusters=v["num_clusters"],
                                        affinity=affinity_config(v), cluster_seed=v["cluster_seed"]))


def cmd_eval(v, prov):
    cfg = train_config(v, _augment_spec(v))
    ds = _load_dataset(v["manifest"])
    rep = leave_one_domain_out(ds, cfg, v["seeds"], jobs=v["jobs"])
    out = rep.to_dict()
    out["provenance"] = prov
    out["mean"] = {m: rep.mean(m) for m in ("micro_f1", "macro_f1", "accuracy")}
    _emit(json.dumps(out, indent=2, sort_keys=True) + "\n", v["output"])
    if v["plot"]:
        from .plots import plot_bars
        s = [t.summary()["macro_f1"] for t in rep.tasks]
        plot_bars([t.name for t in rep.tasks], [x["mean"] for x in s], [x["std"] for x in s], v["plot"])


def cmd_stats(v, prov):
    g = _load(v)
    deg = degree_vector(g)
    p = edge_weight_matrix(g).values
    rows = [("nodes", g.num_nodes), ("edges", g.num_edges), ("self_loops_removed", g.self_loops_removed),
            ("isolated_nodes", int(np.sum(deg == 0)))]
    if g.num_nodes:
        rows += [("degree_min", deg.min()), ("degree_mean", deg.mean()), ("degree_median", np.median(deg)),
                 ("degree_max", deg.max())]
    if p.size:
        for q in (0, 10, 25, 50, 75, 90, 100):
            rows.append((f"weight_q{q}", np.quantile(p, q / 100.0)))
    text = "".join(f"{k}\t{format_real(val) if isinstance(val, (float, np.floating)) else val}\n" for k, val in rows)
    _emit(_commented(prov) + text, v["output"])
    if v["plot"]:
        from .plots import plot_degree_histogram
        plot_degree_histogram(deg, v["plot"])


TSV_COLUMNS = ["method", "ratio", "macro_f1_mean", "macro_f1_std", "micro_f1_mean", "micro_f1_std",
               "accuracy_mean", "accuracy_std"]


def _rows_tsv(prov, rows):
    lines = ["\t".join(TSV_COLUMNS)]
    for r in rows:
        lines.append("\t".join(r[c] if isinstance(r[c], str) else format_real(r[c]) for c in TSV_COLUMNS))
    return _commented(prov) + "\n".join(lines) + "\n"


def cmd_sweep(v, prov):
    cfg = train_config(v)
    if any(not 0 <= r <= 1 for r in v["ratios"]):
        raise UsageError("--ratios must lie in [0, 1]")
    ds = _load_dataset(v["manifest"])
    rows = drop_ratio_sweep(ds, cfg, v["ratios"], v["seeds"], v["sweep_rho"], jobs=v["jobs"])
    _emit(_rows_tsv(prov, rows), v["output"])
    if v["plot"]:
        from .plots import plot_drop_sweep
        plot_drop_sweep(rows, v["plot"])


def cmd_ablation(v, prov):
    cfg = train_config(v)
    add = add_config(v)
    _configs(lambda: DropConfig(DropStrategy.THRESHOLD, alpha=v["alpha"], rho=v["rho"]))
    ds = _load_dataset(v["manifest"])
    rows = component_ablation(ds, cfg, v["alpha"], v["rho"], add, v["num_clusters"], v["seeds"],
                              affinity_config(v), jobs=v["jobs"])
    _emit(_rows_tsv(prov, rows), v["output"])
    if v["plot"]:
        from .plots import plot_bars
        plot_bars([r["method"] for r in rows], [r["macro_f1_mean"] for r in rows],
                  [r["macro_f1_std"] for r in rows], v["plot"])


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}

DATA_ERRORS = (GraphFormatError, GraphShapeError, IndexError, OSError, EigenConvergenceError, TrainingError,
               DataError)


def run(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        values = resolve(ns.command, argparse.Namespace(**{k: v for k, v in vars(ns).items() if k != "command"}))
        prov = provenance(ns.command, values)
        HANDLERS[ns.command](values, prov)
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        # remaining validation failures come from the input data
        sys.stderr.write(f"data error: {exc}\n")
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
