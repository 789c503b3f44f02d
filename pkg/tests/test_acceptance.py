"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line, repeated in the terminal summary.
"""

import hashlib
import os
import time

import numpy as np
import pytest
from scipy import stats
from scipy.sparse.csgraph import connected_components

from structaug.cli import run
from structaug.cluster_augment import (
    AddConfig,
    cluster_edge_weights,
    cluster_graph,
    incidence_matrix,
    merge_mixup,
    merge_union,
)
from structaug.graph import SparseSymMatrix, degree_vector
from structaug.harness import loss_and_grad, micro_macro_f1, synthesize_ood_benchmark
from structaug.harness.model import TrainConfig
from structaug.harness.protocol import DEFAULT_RATIOS, component_ablation, drop_ratio_sweep
from structaug.sampling import DropConfig, DropStrategy, apply_drop, threshold_tau
from structaug.spectral import (
    ClusterAssignment,
    affinity_laplacian_dense,
    jacobi_eigh,
    rbf_affinity_dense,
    smallest_eigenpairs,
    spectral_cluster,
)
from structaug.weighting import edge_weight_matrix, total_variation

from conftest import adjusted_rand_index, blobs, erdos_renyi

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

# benchmark and protocol shared by the two trend criteria
BENCH = dict(num_domains=3, nodes_per_domain=300, num_classes=5, structure_jitter=[-0.3, 0.0, 0.3], seed=0)
TRAIN = TrainConfig(propagation_k=3, epochs=100)
SEEDS = range(10)
ABLATION = dict(alpha=0.4, rho=0.0, add=AddConfig(), num_clusters=20)


def test_c01_edge_weight_exactness(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 51))
        g = erdos_renyi(n, float(rng.uniform(0.02, 0.6)), rng, weighted=bool(rng.integers(2)))
        a = np.zeros((n, n))
        a[g.edges[:, 0], g.edges[:, 1]] = g.weights
        a[g.edges[:, 1], g.edges[:, 0]] = g.weights
        d = a.sum(axis=1)
        inv = np.where(d > 0, 1 / np.sqrt(np.where(d > 0, d, 1)), 0.0)
        oracle = inv[:, None] * a * inv[None, :]
        worst = max(worst, float(np.max(np.abs(edge_weight_matrix(g).to_dense() - oracle), initial=0.0)))
    ok = acceptance(1, "edge-weight exactness", worst <= 1e-12, f"max |err| = {worst:.2e} over 200 graphs",
                    time.perf_counter() - t0, 5)
    assert ok


def test_c02_total_variation_identity(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 40))
        g = erdos_renyi(n, float(rng.uniform(0.05, 0.7)), rng, weighted=bool(rng.integers(2)))
        x = rng.standard_normal(n)
        d = degree_vector(g)
        s = np.where(d > 0, x / np.sqrt(np.where(d > 0, d, 1)), 0.0)
        ref = float(np.sum(g.weights * (s[g.edges[:, 0]] - s[g.edges[:, 1]]) ** 2))
        tv = total_variation(g, x)
        worst = max(worst, abs(tv - ref) / max(abs(ref), 1e-300) if ref else abs(tv))
    ok = acceptance(2, "total-variation identity", worst <= 1e-9, f"max rel err = {worst:.2e} over 100 pairs",
                    time.perf_counter() - t0, 2)
    assert ok


def test_c03_threshold_hard_guarantee(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    rho, alpha = 0.3, 0.5
    violations = kept = trials = 0
    for gi in range(50):
        g = erdos_renyi(int(rng.integers(20, 60)), 0.15, rng, weighted=bool(gi % 2))
        p = edge_weight_matrix(g)
        tau = threshold_tau(p.values, alpha)
        heavy = {e for e, w in p.to_dict().items() if w >= tau}
        light = {e for e, w in p.to_dict().items() if w < tau}
        for epoch in range(100):
            out = apply_drop(g, DropConfig(DropStrategy.THRESHOLD, alpha=alpha, rho=rho, seed=gi, epoch=epoch))
            es = out.edge_set()
            violations += len(heavy - es)
            kept += len(light & es)
            trials += len(light)
    lo, hi = stats.binom.interval(0.9999, trials, rho)
    rate = kept / trials
    passed = violations == 0 and lo <= kept <= hi
    ok = acceptance(3, "threshold-cutoff hard guarantee", passed,
                    f"heavy drops = {violations}; keep rate {rate:.4f} in [{lo / trials:.4f}, {hi / trials:.4f}]",
                    time.perf_counter() - t0, 10)
    assert ok


def test_c04_spectral_recovery(acceptance):
    t0 = time.perf_counter()
    two = []
    for seed in range(10):
        x, y = blobs(100, [[0.0, 0.0], [10.0, 0.0]], 1.0, np.random.default_rng(seed))
        two.append(adjusted_rand_index(spectral_cluster(x, 2, seed=seed).labels, y))
    three = []
    for seed in range(10):
        x, y = blobs(150, [[0.0, 0.0], [10.0, 0.0], [5.0, 8.66]], 1.0, np.random.default_rng(50 + seed))
        three.append(adjusted_rand_index(spectral_cluster(x, 3, seed=seed).labels, y))
    worst_val = worst_res = 0.0
    rng = np.random.default_rng(404)
    for n in (50, 120, 200):
        lap = affinity_laplacian_dense(rbf_affinity_dense(rng.standard_normal((n, 3)), "median"))
        vals, vecs = smallest_eigenpairs(lap, 5)
        ref, _ = jacobi_eigh(lap)
        worst_val = max(worst_val, float(np.max(np.abs(vals - ref[:5]))))
        worst_res = max(worst_res, float(np.max(np.linalg.norm(lap @ vecs - vecs * vals, axis=0))))
    passed = all(a == 1.0 for a in two) and np.mean(three) >= 0.99 and max(worst_val, worst_res) <= 1e-8
    ok = acceptance(4, "spectral clustering recovery", passed,
                    f"2-blob ARI=1 on {sum(a == 1.0 for a in two)}/10; 3-blob mean ARI {np.mean(three):.4f}; "
                    f"eig err {worst_val:.1e}, residual {worst_res:.1e}",
                    time.perf_counter() - t0, 30)
    assert ok


def test_c05_cluster_graph_algebra(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(505)
    failures = []
    for trial in range(500):
        n = int(rng.integers(2, 40))
        K = int(rng.integers(1, min(n, 8) + 1))
        a = ClusterAssignment(rng.integers(K, size=n), K).compact()
        b = incidence_matrix(a)
        pg = cluster_edge_weights(b).to_dense()
        if np.max(np.abs(pg.sum(axis=1) - 1)) > 1e-12:
            failures.append((trial, "row sums"))
        ag = cluster_graph(b).to_dense()
        ncomp, comp = connected_components(ag + np.eye(n), directed=False)
        same = a.labels[:, None] == a.labels[None, :]
        complete = np.array_equal(ag, (same & ~np.eye(n, dtype=bool)).astype(float))
        if ncomp != a.K or not np.array_equal(comp[:, None] == comp[None, :], same) or not complete:
            failures.append((trial, "components"))
        i, j = np.triu_indices(n, k=1)
        m1, m2 = rng.random(i.size) < 0.3, rng.random(i.size) < 0.3
        ac = SparseSymMatrix(n, i[m1], j[m1], np.ones(m1.sum()))
        ad = SparseSymMatrix(n, i[m2], j[m2], rng.uniform(0.1, 2, m2.sum()))
        if merge_union(ac, ad).support() != ac.support() | ad.support():
            failures.append((trial, "union"))
        eta = float(rng.random())
        if not np.array_equal(merge_mixup(ac, ad, eta).to_dense(), eta * ac.to_dense() + (1 - eta) * ad.to_dense()):
            failures.append((trial, "mixup"))
    ok = acceptance(5, "cluster-graph algebra", not failures, f"{len(failures)} failures over 500 assignments",
                    time.perf_counter() - t0, 5)
    assert ok, failures[:5]


def test_c06_gradient(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(606)
    worst = 0.0
    eps = 1e-6
    for _ in range(20):
        h, y = rng.standard_normal((10, 5)), rng.integers(3, size=10)
        w, b = rng.standard_normal((5, 3)), rng.standard_normal(3)
        l2 = float(rng.uniform(0, 0.5))
        _, gw, gb = loss_and_grad(w, b, [h], [y], l2)
        theta = np.concatenate([w.ravel(), b])
        analytic = np.concatenate([gw.ravel(), gb])

        def f(t):
            return loss_and_grad(t[:15].reshape(5, 3), t[15:], [h], [y], l2)[0]

        numeric = np.array([(f(theta + eps * e) - f(theta - eps * e)) / (2 * eps) for e in np.eye(theta.size)])
        worst = max(worst, float(np.linalg.norm(analytic - numeric) / np.linalg.norm(numeric)))
    ok = acceptance(6, "gradient vs central differences", worst <= 1e-5, f"max rel err = {worst:.2e} on 20 instances",
                    time.perf_counter() - t0, 5)
    assert ok


def test_c07_f1_metrics(acceptance):
    t0 = time.perf_counter()
    mi, ma, acc = micro_macro_f1([0, 0, 1, 1], [0, 1, 1, 1], 2)
    example = abs(mi - 0.75) <= 1e-9 and abs(acc - 0.75) <= 1e-9 and abs(ma - 0.73333) <= 1e-5 \
        and abs(ma - (2 / 3 + 0.8) / 2) <= 1e-9
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(1000):
        C = int(rng.integers(2, 8))
        n = int(rng.integers(1, 60))
        p, t = rng.integers(C, size=n), rng.integers(C, size=n)
        m, _, a = micro_macro_f1(p, t, C)
        worst = max(worst, abs(m - a))
    ok = acceptance(7, "F1 metrics", example and worst <= 1e-12,
                    f"example micro {mi:.5f} macro {ma:.5f}; max |micro-acc| {worst:.1e} over 1000",
                    time.perf_counter() - t0, 2)
    assert ok


@pytest.fixture(scope="module")
def benchmark():
    return synthesize_ood_benchmark(**BENCH)


def test_c08_low_weight_vs_random_trend(acceptance, benchmark):
    t0 = time.perf_counter()
    rows = drop_ratio_sweep(benchmark, TRAIN, DEFAULT_RATIOS, SEEDS, rho=0.0)
    base = rows[0]["macro_f1_mean"]
    lw = {r["ratio"]: r["macro_f1_mean"] for r in rows if r["method"] == "low_weight"}
    rd = {r["ratio"]: r["macro_f1_mean"] for r in rows if r["method"] == "random"}
    wins = sum(lw[r] >= rd[r] for r in DEFAULT_RATIOS)
    passed = wins >= 4 and max(lw.values()) > base and max(rd.values()) > base
    table = " ".join(f"{r:g}:{lw[r]:.4f}/{rd[r]:.4f}" for r in DEFAULT_RATIOS)
    ok = acceptance(8, "low-weight vs random dropping trend", passed,
                    f"low>=random at {wins}/7; best low {max(lw.values()):.4f}, best random "
                    f"{max(rd.values()):.4f}, baseline {base:.4f}; ratio:low/random {table}",
                    time.perf_counter() - t0, 300)
    assert ok


def test_c09_component_ablation_trend(acceptance, benchmark):
    t0 = time.perf_counter()
    rows = {r["method"]: r["macro_f1_mean"]
            for r in component_ablation(benchmark, TRAIN, seeds=SEEDS, **ABLATION)}
    combo = rows["low_weight_plus_clustering"] >= rows["low_weight_only"] - 0.01
    only = rows["only_clustering_edge"] > rows["baseline"]
    ok = acceptance(9, "clustering ablation trend", combo and only,
                    " ".join(f"{k}={v:.4f}" for k, v in rows.items()),
                    time.perf_counter() - t0, 300)
    assert ok


def test_c10_cli_determinism(acceptance, tmp_path):
    t0 = time.perf_counter()
    data = os.path.join(ROOT, "data", "synth3")
    e, x, m = (os.path.join(data, f) for f in ("D0.edges.tsv", "D0.features.tsv", "manifest.json"))
    cfg = os.path.join(ROOT, "configs", "augment.json")
    fast = ["--seeds", "0,1", "--epochs", "10"]

    def pipelines(out):
        return [
            ["weights", "--edges", e, "-o", f"{out}/weights.tsv"],
            ["drop", "--edges", e, "--strategy", "division", "--tau", "0.3", "--seed", "5", "-o", f"{out}/drop.tsv"],
            ["cluster", "--features", x, "--num-clusters", "10", "-o", f"{out}/clusters.tsv"],
            ["add", "--edges", e, "--features", x, "--num-clusters", "10", "--seed", "5", "-o", f"{out}/add.tsv"],
            ["augment", "--config", cfg, "--edges", e, "--features", x, "--seed", "7", "--epoch", "3",
             "-o", f"{out}/augment.tsv"],
            ["stats", "--edges", e, "--plot", f"{out}/degrees.png", "-o", f"{out}/stats.tsv"],
            ["synth", "--out", f"{out}/synth", "--nodes-per-domain", "100"],
            ["eval", "--manifest", m, "--add-edges", "--plot", f"{out}/eval.png", "-o", f"{out}/eval.json"] + fast,
            ["sweep", "--manifest", m, "--ratios", "0.3,0.6", "--plot", f"{out}/sweep.png",
             "-o", f"{out}/sweep.tsv"] + fast,
            ["ablation", "--manifest", m, "--plot", f"{out}/ablation.png", "-o", f"{out}/ablation.tsv"] + fast,
        ]

    def digests(out):
        os.makedirs(out)
        codes = [run(argv) for argv in pipelines(out)]
        files = {}
        for root, _, names in os.walk(out):
            for name in names:
                path = os.path.join(root, name)
                files[os.path.relpath(path, out)] = hashlib.sha256(open(path, "rb").read()).hexdigest()
        return codes, files

    inputs = {f: hashlib.sha256(open(os.path.join(data, f), "rb").read()).hexdigest() for f in os.listdir(data)}
    codes_a, a = digests(str(tmp_path / "a"))
    codes_b, b = digests(str(tmp_path / "b"))
    untouched = inputs == {f: hashlib.sha256(open(os.path.join(data, f), "rb").read()).hexdigest()
                           for f in os.listdir(data)}
    passed = codes_a == codes_b == [0] * len(codes_a) and a == b and untouched
    ok = acceptance(10, "CLI determinism", passed,
                    f"{len(codes_a)} pipelines, {len(a)} files, {sum(a[k] == b.get(k) for k in a)} identical; "
                    f"inputs unchanged: {untouched}",
                    time.perf_counter() - t0)
    assert ok
