import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structaug.cluster_augment import AddConfig
from structaug.graph import Graph
from structaug.harness import (
    AugmentSpec,
    DomainDataset,
    LinearModel,
    TrainConfig,
    leave_one_domain_out,
    load_dataset,
    loss_and_grad,
    micro_macro_f1,
    predict,
    propagate_features,
    save_dataset,
    synthesize_ood_benchmark,
    train,
)
from structaug.harness.model import TrainingError, softmax
from structaug.harness.protocol import ablation_specs, drop_ratio_sweep
from structaug.sampling import DropConfig, DropStrategy


class TestMetrics:
    def test_perfect(self):
        assert micro_macro_f1([0, 1, 2], [0, 1, 2], 3) == (1.0, 1.0, 1.0)

    def test_hand_example(self):
        mi, ma, acc = micro_macro_f1([0, 0, 1, 1], [0, 1, 1, 1], 2)
        assert mi == pytest.approx(0.75, abs=1e-12) and acc == pytest.approx(0.75, abs=1e-12)
        assert ma == pytest.approx((2 / 3 + 0.8) / 2, abs=1e-12)
        assert ma == pytest.approx(0.73333, abs=1e-5)

    def test_absent_class_scores_zero(self):
        _, ma, _ = micro_macro_f1([0, 1], [0, 1], 3)
        assert ma == pytest.approx(2 / 3)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 6), st.integers(1, 50), st.integers(0, 2**32 - 1))
    def test_micro_equals_accuracy(self, C, n, seed):
        rng = np.random.default_rng(seed)
        pred, truth = rng.integers(C, size=n), rng.integers(C, size=n)
        mi, ma, acc = micro_macro_f1(pred, truth, C)
        assert mi == pytest.approx(acc, abs=1e-12)
        assert 0 <= ma <= 1

    def test_errors(self):
        with pytest.raises(ValueError):
            micro_macro_f1([0, 1], [0], 2)
        with pytest.raises(ValueError):
            micro_macro_f1([0, 2], [0, 1], 2)


class TestPropagation:
    def test_k0_identity(self, path3):
        np.testing.assert_array_equal(propagate_features(path3, 0), path3.features)

    def test_fixed_point(self):
        g = Graph.from_edges(2, np.array([[0, 1]]), None, np.array([[1.0, 2.0], [1.0, 2.0]]))
        for k in (1, 3):
            np.testing.assert_allclose(propagate_features(g, k), g.features, rtol=1e-15)

    def test_path_vs_dense_power(self):
        g = Graph.from_edges(3, np.array([[0, 1], [1, 2]]), None, np.array([[1.0], [0.0], [0.0]]))
        a = np.array([[1, 1, 0], [1, 1, 1], [0, 1, 1]], dtype=float)
        d = a.sum(axis=1)
        a_hat = a / np.sqrt(np.outer(d, d))
        h = propagate_features(g, 1)
        assert h[0, 0] == pytest.approx(0.5) and h[1, 0] == pytest.approx(1 / np.sqrt(6))
        for k in (1, 2, 4):
            np.testing.assert_allclose(propagate_features(g, k), np.linalg.matrix_power(a_hat, k) @ g.features,
                                       rtol=1e-13)


def random_instance(rng, n=10, d=5, C=3):
    h = rng.standard_normal((n, d))
    return h, rng.integers(C, size=n), rng.standard_normal((d, C)), rng.standard_normal(C)


class TestLoss:
    def test_softmax_rows(self):
        z = np.random.default_rng(0).standard_normal((20, 4)) * 50
        np.testing.assert_allclose(softmax(z).sum(axis=1), 1, atol=1e-12)

    def test_finite_for_large_scores(self):
        h = np.array([[1e4, -1e4]])
        loss, _, _ = loss_and_grad(np.eye(2), np.zeros(2), [h], [np.array([1])])
        assert np.isfinite(loss) and loss == pytest.approx(2e4)

    def test_gradient_finite_difference(self):
        rng = np.random.default_rng(1)
        for trial in range(20):
            h, y, w, b = random_instance(rng)
            h2, y2 = rng.standard_normal((7, 5)), rng.integers(3, size=7)
            l2 = 0.3 * (trial % 2)
            _, gw, gb = loss_and_grad(w, b, [h, h2], [y, y2], l2)
            num_w = np.zeros_like(w)
            eps = 1e-6
            for idx in np.ndindex(w.shape):
                wp, wm = w.copy(), w.copy()
                wp[idx] += eps
                wm[idx] -= eps
                num_w[idx] = (loss_and_grad(wp, b, [h, h2], [y, y2], l2)[0]
                              - loss_and_grad(wm, b, [h, h2], [y, y2], l2)[0]) / (2 * eps)
            num_b = np.array([(loss_and_grad(w, b + eps * e, [h, h2], [y, y2], l2)[0]
                               - loss_and_grad(w, b - eps * e, [h, h2], [y, y2], l2)[0]) / (2 * eps)
                              for e in np.eye(3)])
            assert np.linalg.norm(gw - num_w) / np.linalg.norm(num_w) <= 1e-5
            assert np.linalg.norm(gb - num_b) / max(np.linalg.norm(num_b), 1e-12) <= 1e-5

    def test_non_finite_aborts(self):
        with pytest.raises(TrainingError):
            loss_and_grad(np.full((1, 2), np.nan), np.zeros(2), [np.ones((1, 1))], [np.array([0])])


def blob_graph(rng, n=60, C=3, sep=6.0, tag="g"):
    labels = np.arange(n) % C
    centers = sep * np.eye(C, 4)
    x = centers[labels] + rng.standard_normal((n, 4))
    return Graph.from_edges(n, np.empty((0, 2), np.int64), None, x, labels, tag)


class TestTrain:
    def test_zero_epochs(self):
        g = blob_graph(np.random.default_rng(0))
        m = train([(g, g.labels)], TrainConfig(epochs=0), 3)
        assert np.all(m.weight == 0) and np.all(m.bias == 0)
        assert np.all(predict(m, g, 2) == 0)

    def test_separable_convergence(self):
        g = blob_graph(np.random.default_rng(1))
        m = train([(g, g.labels)], TrainConfig(epochs=300, learning_rate=0.01, propagation_k=0), 3)
        assert np.mean(predict(m, g, 0) == g.labels) >= 0.99

    def test_loss_monotone_with_backoff(self):
        g = blob_graph(np.random.default_rng(2), sep=1.0)
        m = train([(g, g.labels)], TrainConfig(epochs=50, learning_rate=5.0, propagation_k=0), 3)
        trace = np.array(m.loss_trace)
        assert np.all(np.diff(trace) <= 0) and trace[-1] <= trace[0]
        assert m.learning_rate < 5.0

    def test_label_out_of_range(self):
        g = blob_graph(np.random.default_rng(3))
        with pytest.raises(ValueError):
            train([(g, g.labels)], TrainConfig(epochs=1), 2)

    def test_needs_source(self):
        with pytest.raises(ValueError):
            train([], TrainConfig())

    def test_one_hot_weights_predict_argmax(self):
        x = np.random.default_rng(4).standard_normal((20, 3))
        g = Graph.from_edges(20, np.empty((0, 2), np.int64), None, x)
        m = LinearModel(np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(predict(m, g, 0), np.argmax(x, axis=1))

    def test_predict_dimension_mismatch(self, path3):
        with pytest.raises(ValueError):
            predict(LinearModel.zeros(5, 2), path3, 1)

    def test_augmented_training_deterministic(self):
        ds = synthesize_ood_benchmark(nodes_per_domain=60, seed=3)
        spec = AugmentSpec(drop=DropConfig(DropStrategy.THRESHOLD, alpha=0.5, rho=0.5),
                           add=AddConfig(), num_clusters=4)
        cfg = TrainConfig(epochs=5, augment=spec, seed=2)
        src = [(g, g.labels) for g in ds.graphs[:2]]
        a, b = train(src, cfg, 5), train(src, cfg, 5)
        np.testing.assert_array_equal(a.weight, b.weight)
        assert a.loss_trace == b.loss_trace
        c = train(src, dataclasses.replace(cfg, seed=3), 5)
        assert not np.array_equal(a.weight, c.weight)

    def test_holdout_masks_nodes(self):
        g = blob_graph(np.random.default_rng(5))
        a = train([(g, g.labels)], TrainConfig(epochs=3, holdout=0.5, propagation_k=0), 3)
        b = train([(g, g.labels)], TrainConfig(epochs=3, propagation_k=0), 3)
        assert not np.array_equal(a.weight, b.weight)


class TestSynth:
    def test_deterministic(self):
        a = synthesize_ood_benchmark(nodes_per_domain=80, seed=5)
        b = synthesize_ood_benchmark(nodes_per_domain=80, seed=5)
        for g, h in zip(a.graphs, b.graphs):
            np.testing.assert_array_equal(g.edges, h.edges)
            np.testing.assert_array_equal(g.features, h.features)
            np.testing.assert_array_equal(g.labels, h.labels)

    def test_pure_communities(self):
        ds = synthesize_ood_benchmark(nodes_per_domain=100, inter_p=0.0, rewire_fraction=0.0, intra_p=0.2)
        for g in ds.graphs:
            assert np.all(g.labels[g.edges[:, 0]] == g.labels[g.edges[:, 1]])

    def test_shared_centers(self):
        n, noise = 600, 3.0
        ds = synthesize_ood_benchmark(nodes_per_domain=n, feature_noise=noise, seed=1)
        per_class = n // ds.num_classes
        bound = 3 * noise / np.sqrt(per_class)
        means = np.array([[g.features[g.labels == c].mean(axis=0) for c in range(ds.num_classes)]
                          for g in ds.graphs])
        # difference of two sample means has std sqrt(2) * noise / sqrt(per_class)
        assert np.max(np.abs(means[0] - means[1])) < np.sqrt(2) * bound + 1e-12
        assert np.max(np.abs(means[0] - means[2])) < np.sqrt(2) * bound + 1e-12

    def test_domains_differ_in_structure(self):
        ds = synthesize_ood_benchmark(nodes_per_domain=100, structure_jitter=[-0.3, 0.0, 0.3])
        assert len({g.num_edges for g in ds.graphs}) == 3
        assert ds.domain_tags == ["D0", "D1", "D2"]

    def test_validation(self):
        with pytest.raises(ValueError):
            synthesize_ood_benchmark(intra_p=1.5)
        with pytest.raises(ValueError):
            synthesize_ood_benchmark(structure_jitter=[0.0])

    def test_round_trip(self, tmp_path):
        ds = synthesize_ood_benchmark(nodes_per_domain=50, seed=2)
        path = save_dataset(ds, tmp_path)
        back = load_dataset(path)
        assert back.num_classes == ds.num_classes
        for g, h in zip(ds.graphs, back.graphs):
            np.testing.assert_array_equal(g.edges, h.edges)
            np.testing.assert_array_equal(g.features, h.features)
            assert g.domain_tag == h.domain_tag
        assert json.loads((tmp_path / "manifest.json").read_text())["num_classes"] == 5

    def test_dataset_validation(self, path3):
        with pytest.raises(ValueError):
            DomainDataset([path3], 2)


class TestProtocol:
    def setup_method(self):
        self.ds = synthesize_ood_benchmark(nodes_per_domain=60, seed=4)
        self.cfg = TrainConfig(epochs=10, propagation_k=1)

    def test_three_tasks(self):
        rep = leave_one_domain_out(self.ds, self.cfg, seeds=(0, 1))
        assert [t.target for t in rep.tasks] == ["D0", "D1", "D2"]
        assert rep.tasks[0].sources == ["D1", "D2"]
        for t in rep.tasks:
            assert len(t.macro_f1) == 2
            assert all(0 <= v <= 1 for v in t.micro_f1 + t.macro_f1 + t.accuracy)
        d = json.loads(rep.to_json())
        assert d["meta"]["seeds"] == [0, 1] and len(d["tasks"]) == 3

    def test_needs_two_domains(self):
        ds = DomainDataset(self.ds.graphs[:1], 5)
        with pytest.raises(ValueError):
            leave_one_domain_out(ds, self.cfg)

    def test_identical_domains(self):
        base = synthesize_ood_benchmark(num_domains=1, nodes_per_domain=150, feature_noise=1.0,
                                        rewire_fraction=0.0, seed=8).graphs[0]
        graphs = [Graph(base.num_nodes, base.edges, base.weights, base.features, base.labels, t)
                  for t in ("A", "B", "C")]
        ds = DomainDataset(graphs, 5)
        cfg = TrainConfig(epochs=100, learning_rate=0.01, propagation_k=2)
        held, inside = [], []
        for s in range(5):
            rep = leave_one_domain_out(ds, cfg, seeds=(s,))
            held.append(rep.mean())
            m = train([(g, g.labels) for g in graphs[1:]], dataclasses.replace(cfg, seed=s), 5)
            inside.append(micro_macro_f1(predict(m, graphs[1], 2), graphs[1].labels, 5)[1])
        assert abs(np.mean(held) - np.mean(inside)) <= 0.02

    def test_better_than_chance(self):
        ds = synthesize_ood_benchmark(nodes_per_domain=150, feature_noise=1.0, seed=6)
        rep = leave_one_domain_out(ds, TrainConfig(epochs=100, learning_rate=0.01), seeds=(0,))
        assert np.mean([t.accuracy[0] for t in rep.tasks]) > 1 / 5

    def test_sweep_rows(self):
        rows = drop_ratio_sweep(self.ds, self.cfg, ratios=(0.2, 0.5), seeds=(0,))
        assert [(r["method"], r["ratio"]) for r in rows] == [
            ("baseline", 0.0), ("low_weight", 0.2), ("random", 0.2), ("low_weight", 0.5), ("random", 0.5)]

    def test_ablation_specs(self):
        specs = ablation_specs(0.4, 0.0, AddConfig(), 10)
        assert specs["baseline"] is None
        assert specs["only_clustering_edge"].keep_original is False
        assert specs["low_weight_only"].add is None
        assert specs["clustering_without_dropping"].drop is None
