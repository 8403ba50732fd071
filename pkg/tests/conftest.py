import numpy as np
import pytest

from rmdgraph.graph import SparseGraph


def random_weighted_graph(n, density, rng, integer_weights=False):
    """Symmetric weighted graph on ``n`` nodes with roughly ``density`` of all pairs as edges."""
    iu, ju = np.triu_indices(n, 1)
    keep = rng.random(iu.size) < density
    if integer_weights:
        w = rng.integers(1, 5, keep.sum()).astype(float)
    else:
        w = rng.uniform(0.1, 2.0, keep.sum())
    return SparseGraph.from_edges(n, iu[keep], ju[keep], w)


def two_cliques(a=4, b=5):
    n = a + b
    M = np.zeros((n, n), dtype=bool)
    M[:a, :a] = True
    M[a:, a:] = True
    np.fill_diagonal(M, False)
    return SparseGraph.from_mask(M)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    def record(label, passed, detail):
        line = f"{'PASS' if passed else 'FAIL'}  {label}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
