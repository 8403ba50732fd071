"""Acceptance criteria, each run at its stated tolerance.

Every test records one PASS/FAIL line (shown in the terminal summary) and
then asserts, so a criterion that is not met fails here rather than being
relaxed.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from rmdgraph.bmatching import is_graphical
from rmdgraph.cuts import cut_metrics, hyperplane_sweep, limit_ncut_knn, limit_ncut_rmd, scaled_ncut
from rmdgraph.dataset import (
    LabeledSplit,
    MixtureSpec,
    density_valleys,
    gen_blobs,
    gen_mixture,
    hierarchy_spec,
    two_gaussian_spec,
    unbalanced_pair_spec,
)
from rmdgraph.graph import DegreeProfile, DegreeScheme, SparseGraph, degree_profile, laplacian, rmd_graph_opt, scheme
from rmdgraph.learn import (
    CvConfig,
    cross_validate,
    divisive_cluster,
    error_rate,
    grf,
    spectral_clustering,
    split_boundary,
)
from rmdgraph.rank import StatisticSpec, rank_all, rank_ustat, theory_l
from rmdgraph.recipes import GraphRecipe

from conftest import random_weighted_graph
from oracles import binary_partitions, brute_force_bmatching, exhaustive_cuts

SEEDS = range(20)


def test_criterion_1_cut_oracle(report):
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    partitions = 0
    for _ in range(200):
        n = int(rng.integers(2, 11))
        g = random_weighted_graph(n, rng.uniform(0.2, 0.9), rng)
        i, j, w = g.edges
        edges = list(zip(i.tolist(), j.tolist(), w.tolist()))
        for a in binary_partitions(n):
            r = cut_metrics(g, a)
            ref = exhaustive_cuts(n, edges, a)
            worst = max(worst, abs(r.cut - ref[0]), abs(r.ratio_cut - ref[1]), abs(r.ncut - ref[2]))
            partitions += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and elapsed < 10
    report("criterion 1 (cut metrics vs exhaustive evaluator)", ok,
           f"{partitions} partitions, max abs error {worst:.2e}, {elapsed:.1f} s")
    assert ok


def test_criterion_2_rank_consistency(report):
    n = 2000
    l = math.ceil(math.sqrt(n / 2))
    t0 = time.perf_counter()
    errs = []
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal((n, 1))
        r = rank_ustat(x, StatisticSpec("avg_lnn_distance", l), b=10, seed=seed).values
        errs.append(float(np.mean(np.abs(r - 2 * stats.norm.cdf(-np.abs(x[:, 0]))))))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 0.05 and elapsed < 60
    report("criterion 2 (rank consistency, 1-D normal, n=2000)", ok,
           f"mean |R - p| per seed {np.round(errs, 4).tolist()} (target <= 0.05), {elapsed:.1f} s")
    assert ok


@pytest.fixture(scope="module")
def pair_runs():
    """Per-seed sweep argmins and SC errors on the proximal two-Gaussian mixture."""
    t0 = time.perf_counter()
    stat = StatisticSpec("avg_lnn_distance", theory_l(250))
    rmd_b = GraphRecipe(kind="rmd", k=30, scheme="b", statistic=stat)
    out = {"knn_argmin": [], "rmd_argmin": [], "knn_err": [], "cv_err": []}
    for s in SEEDS:
        ds = gen_mixture(two_gaussian_spec(), 500, s)
        gk = GraphRecipe(kind="knn", k=30).build(ds)
        out["knn_argmin"].append(hyperplane_sweep(gk, ds).argmin("ratio_cut"))
        out["rmd_argmin"].append(hyperplane_sweep(rmd_b.build(ds, s), ds).argmin("ratio_cut"))
        out["knn_err"].append(error_rate(spectral_clustering(gk, 2, seed=s), ds.labels))
        best, _ = cross_validate(ds, CvConfig(recipe=rmd_b), "sc", s)
        out["cv_err"].append(error_rate(best.output, ds.labels))
    out["elapsed"] = time.perf_counter() - t0
    return {k: np.asarray(v) for k, v in out.items()}


def test_criterion_3a_sweep_argmins(pair_runs, report):
    knn = pair_runs["knn_argmin"]
    rmd = pair_runs["rmd_argmin"]
    knn_hits = int(np.sum((knn >= 2.5) & (knn <= 4.5)))
    rmd_hits = int(np.sum((rmd >= 0.5) & (rmd <= 1.5)))
    ok = knn_hits >= 16 and rmd_hits >= 16 and pair_runs["elapsed"] < 300
    report("criterion 3a (RatioCut sweep argmins)", ok,
           f"k-NN in [2.5, 4.5]: {knn_hits}/20 (median argmin {np.median(knn):.2f}); "
           f"RMD(b) in [0.5, 1.5]: {rmd_hits}/20; {pair_runs['elapsed']:.0f} s")
    assert ok


def test_criterion_3b_sc_errors(pair_runs, report):
    knn = float(pair_runs["knn_err"].mean())
    rmd = float(pair_runs["cv_err"].mean())
    ok = rmd <= 0.10 and rmd <= 0.5 * knn and pair_runs["elapsed"] < 300
    report("criterion 3b (SC error, RMD with scheme CV vs k-NN)", ok,
           f"RMD {rmd:.4f}, k-NN {knn:.4f} (need RMD <= 0.10 and <= {0.5 * knn:.4f})")
    assert ok


def test_criterion_4_degree_modulation(report):
    # The degree scheme keeps the mean at k for uniformly distributed ranks,
    # which the in-sample rank is; half-split averaging shrinks ranks toward
    # 0.5 and is reported alongside for reference.
    X = np.random.default_rng(0).uniform(size=(1000, 2))
    k = 30
    stat = StatisticSpec("avg_lnn_distance", theory_l(1000))
    r = rank_all(X, stat)
    r_avg = rank_ustat(X, StatisticSpec("avg_lnn_distance", theory_l(500)), b=10, seed=0)
    parts = []
    ok = True
    for name in "abc":
        s = scheme(name, k)
        d = degree_profile(r, s).degrees
        floor = int(np.floor(k * s.lam + 0.5))
        good = 0.9 * k <= d.mean() <= 1.1 * k and d.min() >= floor
        ok &= good
        avg = degree_profile(r_avg, s).degrees.mean()
        parts.append(f"({name}) mean {d.mean():.2f} min {d.min()} floor {floor} "
                     f"[half-split ranks: mean {avg:.2f}]")
    b = scheme("b", 1)
    lo, hi = float(b.raw_degree(0.2)), float(b.raw_degree(0.7))
    ok &= round(lo, 3) == 0.413 and round(hi, 3) == 1.313 and round(lo, 2) == 0.41 \
        and round(hi, 2) == 1.31
    report("criterion 4 (degree modulation)", ok,
           "; ".join(parts) + f"; scheme (b) at R=0.2/0.7: {lo:.4f}k / {hi:.4f}k")
    assert ok


def test_criterion_5_grf(report):
    rng = np.random.default_rng(7)
    worst_resid = worst_diff = 0.0
    for _ in range(50):
        n = int(rng.integers(5, 201))
        g = random_weighted_graph(n, min(1.0, 8.0 / n), rng)
        chain = SparseGraph.from_edges(n, np.arange(n - 1), np.arange(1, n),
                                       rng.uniform(0.1, 1, n - 1))
        g = SparseGraph(g.W + chain.W)
        c = int(rng.integers(2, 5))
        lab = rng.choice(n, min(n - 1, int(rng.integers(c, c + 10))), replace=False)
        y = rng.integers(0, c, n)
        y[lab[:c]] = np.arange(c)
        unl = np.setdiff1d(np.arange(n), lab)
        out = grf(g, LabeledSplit(lab, unl), y, n_classes=c)
        L = laplacian(g).toarray()
        Y_l = np.eye(c)[y[lab]]
        rhs = L[np.ix_(unl, lab)] @ Y_l
        resid = np.linalg.norm(L[np.ix_(unl, unl)] @ out.scores[unl] + rhs) / np.linalg.norm(rhs)
        dense = np.linalg.solve(L[np.ix_(unl, unl)], -rhs)
        worst_resid = max(worst_resid, resid)
        worst_diff = max(worst_diff, float(np.abs(out.scores[unl] - dense).max()))
    path = SparseGraph.from_edges(3, [0, 1], [1, 2])
    mid = grf(path, LabeledSplit(np.array([0, 2]), np.array([1])), np.array([0, 0, 1])).scores[1]
    mid_err = float(np.abs(mid - 0.5).max())
    ok = worst_resid <= 1e-8 and worst_diff <= 1e-8 and mid_err <= 1e-12
    report("criterion 5 (GRF harmonic solve)", ok,
           f"max relative residual {worst_resid:.1e}, max deviation from dense solve "
           f"{worst_diff:.1e}, path midpoint error {mid_err:.1e}")
    assert ok


def test_criterion_6_bmatching_brute_force(report):
    rng = np.random.default_rng(11)
    instances = mismatches = 0
    for n in range(3, 9):
        degree_vectors = [np.array(v) for v in np.ndindex(*([2] * n))]
        for v in degree_vectors:
            deg = v + 1  # every vector in {1, 2}^n
            if not is_graphical(deg):
                continue
            X = rng.standard_normal((n, 2))
            D = np.sqrt(((X[:, None] - X[None]) ** 2).sum(-1))
            best, _ = brute_force_bmatching(D, deg)
            g = rmd_graph_opt(X, DegreeProfile(deg, deg.astype(float), scheme("a", 2)),
                              fix_parity=False)
            instances += 1
            if not (np.array_equal(g.edge_counts, deg)
                    and abs(g.meta["objective"] - best) <= 1e-9 * max(1.0, best)):
                mismatches += 1
    ok = mismatches == 0
    report("criterion 6 (degree-constrained matching vs brute force)", ok,
           f"{instances} graphical instances with n in 3..8 and degrees in {{1, 2}}, "
           f"{mismatches} mismatches")
    assert ok


def _random_mixture(rng, d):
    c = int(rng.integers(1, 4))
    w = rng.dirichlet(np.ones(c))
    means = rng.normal(0, 2, (c, d))
    covs = []
    for _ in range(c):
        A = rng.normal(size=(d, d))
        covs.append(A @ A.T / d + 0.5 * np.eye(d))
    return MixtureSpec(w, means, np.array(covs))


def test_criterion_7a_limit_reduction(report):
    rng = np.random.default_rng(5)
    flat = DegreeScheme(30, 1.0, "table", table=(0.0, 0.0))
    worst = 0.0
    for trial in range(20):
        d = (1, 2, 3)[trial % 3]
        spec = _random_mixture(rng, d)
        axis = int(rng.integers(0, d))
        t = float(spec.means[:, axis].mean() + rng.normal())
        a = limit_ncut_rmd(spec, axis, t, flat, mc_samples=20_000)
        b = limit_ncut_knn(spec, axis, t, with_constant=True, mc_samples=200_000)
        worst = max(worst, abs(a - b) / max(1.0, abs(b)))
    ok = worst <= 1e-10
    report("criterion 7a (flat-scheme RMD limit equals k-NN limit)", ok,
           f"20 (density, hyperplane) pairs in d = 1..3, max relative difference {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_criterion_7b_scaled_ncut_plateau(report):
    spec = MixtureSpec.from_components([(1.0, [0.0], [[1.0]])])
    t0 = time.perf_counter()
    means = {}
    for n in (1000, 4000):
        k = math.ceil(n ** 0.7)
        recipe = GraphRecipe(kind="rmd", k=k, scheme="a")
        vals = [scaled_ncut(recipe.build(ds, s), ds, 0, 1.0, k)
                for s in range(8) for ds in [gen_mixture(spec, n, s)]]
        means[n] = float(np.mean(vals))
    limit = limit_ncut_rmd(spec, 0, 1.0, scheme("a", 30))
    ratio = means[1000] / means[4000]
    rel = abs(means[4000] - limit) / limit
    elapsed = time.perf_counter() - t0
    ok = abs(ratio - 1) <= 0.25 and rel <= 0.30 and elapsed < 600
    report("criterion 7b (scaled NCut plateau, 1-D normal, t=1, scheme a)", ok,
           f"mean scaled NCut {means[1000]:.3f} (n=1000), {means[4000]:.3f} (n=4000), "
           f"ratio {ratio:.3f}; limit {limit:.3f}, relative gap {rel:.3f} (target <= 0.30); "
           f"{elapsed:.0f} s")
    assert ok


@pytest.mark.slow
def test_criterion_8_divisive_hierarchy(report):
    valleys = density_valleys(hierarchy_spec())
    recipe = GraphRecipe(kind="rmd", k=30, scheme="b",
                         statistic=StatisticSpec("avg_lnn_distance", theory_l(400)))
    hits = 0
    for s in SEEDS:
        ds = gen_mixture(hierarchy_spec(), 800, s)
        _, history = divisive_cluster(ds, 4, recipe, s, return_history=True)
        bounds = np.sort([split_boundary(ds, h["left"], h["right"]) for h in history])
        hits += bounds.size == 3 and bool(np.all(np.abs(bounds - valleys) <= 0.5))
    blobs = gen_blobs([[0, 0], [12, 0], [0, 12], [12, 12]], [40, 80, 120, 160], 0.6, seed=3)
    exact = divisive_cluster(blobs, 4, GraphRecipe(kind="rmd", k=10, scheme="b"), 0)
    blob_err = error_rate(exact, blobs.labels)
    ok = hits >= 14 and blob_err == 0.0
    report("criterion 8 (divisive hierarchy)", ok,
           f"all three boundaries within 0.5 of the valleys {np.round(valleys, 2).tolist()} in "
           f"{hits}/20 seeds; four separated blobs error {blob_err:.3f}")
    assert ok


@pytest.mark.slow
def test_criterion_9_unbalancedness_sweep(report):
    fractions = (0.5, 0.35, 0.25, 0.15)
    recipe = GraphRecipe(kind="rmd", k=30, scheme="b",
                         statistic=StatisticSpec("avg_lnn_distance", theory_l(250)))
    knn_means, rmd_means = [], []
    for m in fractions:
        ek, er = [], []
        for s in SEEDS:
            ds = gen_mixture(unbalanced_pair_spec(m), 500, s)
            ek.append(error_rate(spectral_clustering(GraphRecipe(kind="knn", k=30).build(ds),
                                                     2, seed=s), ds.labels))
            er.append(error_rate(spectral_clustering(recipe.build(ds, s), 2, seed=s), ds.labels))
        knn_means.append(float(np.mean(ek)))
        rmd_means.append(float(np.mean(er)))
    knn_rise = knn_means[-1] - knn_means[0]
    rmd_rise = rmd_means[-1] - rmd_means[0]
    ok = (all(b >= a for a, b in zip(knn_means, knn_means[1:]))
          and knn_rise >= 0.10 and rmd_rise <= 0.05)
    report("criterion 9 (unbalancedness sweep)", ok,
           f"k-NN mean error {np.round(knn_means, 4).tolist()} (rise {knn_rise:+.3f}); "
           f"RMD(b) {np.round(rmd_means, 4).tolist()} (rise {rmd_rise:+.3f})")
    assert ok
