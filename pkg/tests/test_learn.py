import itertools
from unittest import mock

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmdgraph import learn
from rmdgraph.cuts import Partition, cut_metrics
from rmdgraph.dataset import LabeledSplit, gen_blobs, gen_mixture, two_gaussian_spec
from rmdgraph.graph import SparseGraph, knn_graph, laplacian
from rmdgraph.learn import (
    CvConfig,
    Labeling,
    cross_validate,
    divisive_cluster,
    error_rate,
    grf,
    gtam,
    spectral_clustering,
    spectral_embedding,
    split_boundary,
)
from rmdgraph.recipes import GraphRecipe

from conftest import random_weighted_graph, two_cliques


def path3():
    return SparseGraph.from_edges(3, [0, 1], [1, 2])


def split_of(n, labeled):
    labeled = np.asarray(labeled)
    return LabeledSplit(labeled, np.setdiff1d(np.arange(n), labeled))


def connected_random_graph(n, rng):
    g = random_weighted_graph(n, min(1.0, 6.0 / n), rng)
    # a weighted path guarantees connectivity
    chain = SparseGraph.from_edges(n, np.arange(n - 1), np.arange(1, n), rng.uniform(0.1, 1, n - 1))
    return SparseGraph(g.W + chain.W)


# -- spectral clustering ----------------------------------------------------------

@pytest.mark.parametrize("normalized", [False, True])
def test_sc_recovers_components(normalized):
    g = two_cliques(4, 6)
    p = spectral_clustering(g, 2, normalized, seed=0)
    assert p.assignment.tolist() == [0] * 4 + [1] * 6
    assert cut_metrics(g, p).cut == 0.0


def test_sc_three_components():
    M = np.zeros((12, 12), dtype=bool)
    for a, b in [(0, 3), (3, 7), (7, 12)]:
        M[a:b, a:b] = True
    np.fill_diagonal(M, False)
    p = spectral_clustering(SparseGraph.from_mask(M), 3, seed=1)
    assert p.assignment.tolist() == [0] * 3 + [1] * 4 + [2] * 5


def test_sc_deterministic():
    ds = gen_mixture(two_gaussian_spec(), 200, seed=0)
    g = knn_graph(ds, 10)
    a = spectral_clustering(g, 2, seed=5).assignment
    b = spectral_clustering(g, 2, seed=5).assignment
    assert np.array_equal(a, b)


def test_normalized_embedding_solves_generalized_problem(rng):
    g = connected_random_graph(30, rng)
    V = spectral_embedding(g, 3, normalized=True)
    L = laplacian(g).toarray()
    D = np.diag(g.degrees)
    for v in V.T:
        lam = v @ L @ v / (v @ D @ v)
        assert np.allclose(L @ v, lam * D @ v, atol=1e-8)


def test_sc_rejects_bad_cluster_count():
    with pytest.raises(ValueError):
        spectral_clustering(path3(), 4)
    with pytest.raises(ValueError):
        spectral_clustering(path3(), 1)


# -- GRF ----------------------------------------------------------------------------

def test_grf_path_midpoint():
    out = grf(path3(), split_of(3, [0, 2]), np.array([0, 0, 1]))
    assert np.allclose(out.scores[1], [0.5, 0.5], rtol=0, atol=1e-12)
    assert out.hard[0] == 0 and out.hard[2] == 1


def test_grf_all_labeled():
    y = np.array([1, 0, 2])
    out = grf(path3(), split_of(3, [0, 1, 2]), y)
    assert np.array_equal(out.hard, y)


def test_grf_accepts_labels_per_labeled_node():
    out = grf(path3(), split_of(3, [0, 2]), np.array([0, 1]))
    assert np.allclose(out.scores[1], [0.5, 0.5])


@pytest.mark.parametrize("n", [40, 150, 260])
def test_grf_against_dense_solve(n, rng):
    g = connected_random_graph(n, rng)
    lab = rng.choice(n, 8, replace=False)
    y = rng.integers(0, 3, n)
    y[lab[:3]] = [0, 1, 2]
    split = split_of(n, lab)
    out = grf(g, split, y, tol=1e-12)
    L = laplacian(g).toarray()
    unl = split.unlabeled_ids
    Y_l = np.eye(3)[y[lab]]
    F_u = np.linalg.solve(L[np.ix_(unl, unl)], -L[np.ix_(unl, lab)] @ Y_l)
    assert np.allclose(out.scores[unl], F_u, rtol=0, atol=1e-8)
    resid = L[np.ix_(unl, unl)] @ out.scores[unl] + L[np.ix_(unl, lab)] @ Y_l
    assert np.linalg.norm(resid) <= 1e-8 * np.linalg.norm(L[np.ix_(unl, lab)] @ Y_l)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**20), n=st.integers(4, 40))
def test_grf_maximum_principle(seed, n):
    rng = np.random.default_rng(seed)
    g = connected_random_graph(n, rng)
    lab = rng.choice(n, 3, replace=False)
    y = np.zeros(n, dtype=int)
    y[lab] = [0, 1, 1]
    out = grf(g, split_of(n, lab), y)
    assert np.all(out.scores >= -1e-12) and np.all(out.scores <= 1 + 1e-12)
    assert np.allclose(out.scores.sum(axis=1), 1.0, atol=1e-10)


def test_grf_unreachable_component_falls_back():
    g = two_cliques(3, 3)
    out = grf(g, split_of(6, [0, 1]), np.array([0, 1, 0, 0, 0, 0]))
    assert out.fallback.tolist() == [False, False, False, True, True, True]
    assert np.allclose(out.scores[3:], 0.5)


def test_grf_split_validation():
    with pytest.raises(ValueError, match="partition"):
        grf(path3(), LabeledSplit(np.array([0]), np.array([0, 1, 2])), [0])
    with pytest.raises(ValueError, match="at least one"):
        grf(path3(), split_of(3, np.array([], dtype=int)), [0, 0, 0])


# -- GTAM ---------------------------------------------------------------------------

def test_gtam_all_labeled():
    y = np.array([1, 0, 1])
    assert np.array_equal(gtam(path3(), split_of(3, [0, 1, 2]), y).hard, y)


def test_gtam_components():
    g = two_cliques(5, 5)
    y = np.array([0] * 5 + [1] * 5)
    out = gtam(g, split_of(10, [0, 7]), y)
    assert np.array_equal(out.hard, y)


def test_gtam_propagation_identity(rng):
    # P^T L P + mu (P - I)^T (P - I) equals mu L (L + mu I)^-1
    g = connected_random_graph(15, rng)
    L = laplacian(g).toarray()
    mu = 0.3
    P = np.linalg.inv(L / mu + np.eye(15))
    A = P.T @ L @ P + mu * (P - np.eye(15)).T @ (P - np.eye(15))
    assert np.allclose(A, mu * L @ np.linalg.inv(L + mu * np.eye(15)), atol=1e-10)


def test_gtam_seeded():
    ds = gen_blobs([[0, 0], [3, 0]], [30, 30], scale=0.8, seed=0)
    g = knn_graph(ds, 5)
    split = split_of(60, [0, 45])
    a = gtam(g, split, ds.labels, seed=3).hard
    b = gtam(g, split, ds.labels, seed=3).hard
    assert np.array_equal(a, b)
    assert error_rate(gtam(g, split, ds.labels), ds.labels) < 0.1


# -- error rate -----------------------------------------------------------------------

def test_error_rate_examples():
    t = np.array([0, 0, 1, 1])
    assert error_rate(t, t) == 0.0
    assert error_rate(1 - t, t) == 0.0
    assert error_rate(np.array([0, 1, 1, 1]), t) == 0.25


def test_error_rate_labeling_skips_labeled_nodes():
    out = Labeling(np.eye(2)[[0, 1, 1, 0]], labeled=np.array([0]))
    assert error_rate(out, np.array([1, 1, 1, 1])) == pytest.approx(1 / 3)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**20), k=st.integers(2, 9))
def test_error_rate_permutation_invariant(seed, k):
    rng = np.random.default_rng(seed)
    t = rng.integers(0, k, 60)
    p = np.where(rng.random(60) < 0.3, rng.integers(0, k, 60), t)
    perm = rng.permutation(k)
    assert error_rate(perm[p], t) == pytest.approx(error_rate(p, t), abs=1e-15)


def test_error_rate_hungarian_matches_permutations(rng):
    # seven classes take the assignment-solver path; check it against enumeration
    t = rng.integers(0, 7, 90)
    p = np.where(rng.random(90) < 0.5, rng.integers(0, 7, 90), (t + 3) % 7)
    best = max(np.mean(np.asarray(perm)[p] == t) for perm in itertools.permutations(range(7)))
    assert error_rate(p, t) == pytest.approx(1 - best, abs=1e-15)


# -- divisive ------------------------------------------------------------------------

def test_divisive_two_equals_spectral():
    ds = gen_mixture(two_gaussian_spec(), 200, seed=1)
    recipe = GraphRecipe(kind="knn", k=10)
    p = divisive_cluster(ds, 2, recipe, seed=0)
    q = spectral_clustering(recipe.build(ds, 0), 2, seed=0)
    assert np.array_equal(p.assignment, q.assignment)


def test_divisive_four_blobs():
    centers = [[0, 0], [20, 0], [0, 20], [20, 20]]
    ds = gen_blobs(centers, [40, 25, 60, 30], scale=0.5, seed=0)
    p, history = divisive_cluster(ds, 4, GraphRecipe(kind="knn", k=8), seed=0,
                                  return_history=True)
    assert error_rate(p, ds.labels) == 0.0
    assert len(history) == 3
    assert all(h["cut"] == 0.0 for h in history)


def test_split_boundary():
    X = np.array([[0.0], [1.0], [2.0], [5.0], [6.0]])
    assert split_boundary(X, [0, 1, 2], [3, 4]) == 3.5
    assert split_boundary(X, [3, 4], [0, 1, 2]) == 3.5


# -- cross-validation ------------------------------------------------------------------

def test_cv_single_scheme_unchanged():
    ds = gen_mixture(two_gaussian_spec(), 200, seed=2)
    recipe = GraphRecipe(k=15, scheme="b")
    best, results = cross_validate(ds, CvConfig(schemes=["b"], recipe=recipe), seed=4)
    g = recipe.build(ds, 4)
    direct = spectral_clustering(g, 2, seed=4)
    assert len(results) == 1 and best.selected and not best.flagged
    assert np.array_equal(best.assignment, direct.assignment)


def _fake_runs(partitions):
    calls = iter(partitions)

    def run(algo, g, **kw):
        return Partition(next(calls))
    return run


def test_cv_discards_tiny_clusters():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.standard_normal((100, 2)), [[8.0, 8.0]]])
    singleton = np.zeros(101, dtype=int)
    singleton[-1] = 1
    halves = (X[:, 0] > 0).astype(int)
    with mock.patch.object(learn, "run_algorithm", _fake_runs([singleton, halves])):
        best, results = cross_validate(X, CvConfig(schemes=["a", "b"], recipe=GraphRecipe(k=10)))
    assert results[0].report.cut < results[1].report.cut
    assert best is results[1]


@settings(max_examples=25, deadline=None)
@given(sizes=st.lists(st.integers(1, 59), min_size=1, max_size=4), seed=st.integers(0, 99))
def test_cv_respects_size_threshold(sizes, seed):
    X = np.random.default_rng(seed).standard_normal((60, 2))
    parts = []
    for s in sizes:
        a = np.zeros(60, dtype=int)
        a[:s] = 1
        parts.append(a)
    cfg = CvConfig(schemes=["a", "b", "c", "a"][:len(sizes)], min_cluster_fraction=0.2,
                   recipe=GraphRecipe(k=6, resamples=2))
    with mock.patch.object(learn, "run_algorithm", _fake_runs(parts)):
        best, _ = cross_validate(X, cfg)
    if any(min(s, 60 - s) >= 12 for s in sizes):
        assert min(best.report.cluster_sizes) >= 12 and not best.flagged
    else:
        assert best.flagged


def test_run_result_json_fields():
    ds = gen_mixture(two_gaussian_spec(), 120, seed=0)
    best, _ = cross_validate(ds, CvConfig(schemes=["a"], recipe=GraphRecipe(k=10)))
    assert set(best.to_dict()) == {"algorithm", "scheme", "seed", "error_rate", "cut",
                                   "ratio_cut", "ncut", "cluster_sizes", "selected"}
