import numpy as np
import pytest

from structaug.graph import Graph


def make_graph(n, edges, weights=None, d=2, labels=None, tag="g"):
    return Graph.from_edges(n, np.array(edges, dtype=np.int64).reshape(-1, 2), weights,
                            np.zeros((n, d)), labels, tag)


def erdos_renyi(n, p, rng, weighted=False):
    i, j = np.triu_indices(n, k=1)
    keep = rng.random(i.size) < p
    edges = np.column_stack([i[keep], j[keep]])
    w = rng.uniform(0.1, 2.0, size=edges.shape[0]) if weighted else None
    return Graph.from_edges(n, edges, w, rng.standard_normal((n, 3)))


@pytest.fixture
def path3():
    return make_graph(3, [(0, 1), (1, 2)])


@pytest.fixture
def triangle():
    return make_graph(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def star4():
    return make_graph(4, [(0, 1), (0, 2), (0, 3)])


def adjusted_rand_index(a, b):
    """Hubert-Arabie ARI from the contingency table."""
    a, b = np.asarray(a), np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def pairs(v):
        return float(np.sum(v * (v - 1) / 2))

    index = pairs(table)
    ra, rb = pairs(table.sum(axis=1)), pairs(table.sum(axis=0))
    expected = ra * rb / pairs(np.array([a.size]))
    top = 0.5 * (ra + rb)
    return 1.0 if top == expected else (index - expected) / (top - expected)


def blobs(n, centers, sigma, rng):
    centers = np.asarray(centers, dtype=float)
    labels = np.arange(n) % len(centers)
    return centers[labels] + sigma * rng.standard_normal((n, centers.shape[1])), labels


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, name, passed, detail, seconds, limit=None):
        over = limit is not None and seconds >= limit
        status = "PASS" if passed and not over else "FAIL"
        budget = f" (limit {limit:g} s)" if limit is not None else ""
        line = f"[{status}] criterion {number:>2}: {name} | {detail} | {seconds:.2f} s{budget}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return status == "PASS"
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
