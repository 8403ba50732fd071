"""Graph-based learning: spectral clustering, GRF and GTAM transduction,
divisive clustering, cross-validation over degree schemes, and scoring.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse
from scipy.optimize import linear_sum_assignment
from scipy.sparse import csgraph
from scipy.sparse import linalg as splinalg
from sklearn.cluster import KMeans

from ._validation import as_labels, as_points, check_positive, check_positive_int, check_seed
from .cuts import CutReport, Partition, cut_metrics
from .dataset import LabeledSplit
from .graph import SparseGraph, laplacian
from .recipes import GraphRecipe

__all__ = [
    "Labeling",
    "CvConfig",
    "RunResult",
    "spectral_embedding",
    "spectral_clustering",
    "grf",
    "gtam",
    "divisive_cluster",
    "split_boundary",
    "cross_validate",
    "error_rate",
]

DENSE_LIMIT = 200  # below this many unknowns, linear systems are solved densely
EIGH_LIMIT = 3000  # below this many nodes, eigenvectors come from a dense solver


@dataclass
class Labeling:
    """Soft scores ``(n, c)`` and their row-wise argmax (ties to the lower class).

    ``fallback`` marks nodes whose scores could not be propagated (no path
    to a labeled node) and were set to uniform.
    """

    scores: np.ndarray
    hard: np.ndarray = None
    fallback: np.ndarray = None
    labeled: np.ndarray = None

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=float)
        if self.hard is None:
            self.hard = np.argmax(self.scores, axis=1)
        if self.fallback is None:
            self.fallback = np.zeros(self.scores.shape[0], dtype=bool)

    def __len__(self) -> int:
        return self.scores.shape[0]


# -- spectral clustering ---------------------------------------------------------

def spectral_embedding(g: SparseGraph, c: int, normalized: bool = False) -> np.ndarray:
    """Eigenvectors of the ``c`` smallest Laplacian eigenvalues, trivial one included.

    With ``normalized`` the eigenvectors of ``I - D^-1/2 W D^-1/2`` are
    rescaled by ``D^-1/2``, which gives the solutions of ``L v = lam D v``.
    """
    L = laplacian(g, normalized)
    n = g.n
    try:
        if n <= EIGH_LIMIT:
            _, V = linalg.eigh(L.toarray(), subset_by_index=[0, c - 1])
        else:
            _, V = splinalg.eigsh(L.tocsc(), k=c, sigma=-1e-6, which="LM")
    except (linalg.LinAlgError, splinalg.ArpackError) as exc:
        raise RuntimeError(f"Laplacian eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(V)):
        raise RuntimeError("Laplacian eigensolver returned non-finite vectors")
    if normalized:
        d = g.degrees
        scale = np.ones(n)
        scale[d > 0] = 1.0 / np.sqrt(d[d > 0])
        V = V * scale[:, None]
    return V


def _first_appearance(labels: np.ndarray) -> np.ndarray:
    """Relabel clusters so ids appear in increasing order along the nodes."""
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    remap = np.empty(order.size, dtype=np.int64)
    remap[np.unique(labels)[order]] = np.arange(order.size)
    return remap[labels]


def spectral_clustering(g: SparseGraph, c: int = 2, normalized: bool = False,
                        seed=0) -> Partition:
    """Spectral clustering: Laplacian embedding followed by seeded k-means.

    The unnormalized Laplacian relaxes RatioCut and the normalized one NCut.
    k-means uses k-means++ seeding, 20 restarts and keeps the best inertia.
    Cluster ids are renumbered by first appearance.
    """
    c = check_positive_int(c, "c", minimum=2)
    if c > g.n:
        raise ValueError(f"cannot form {c} clusters from {g.n} nodes")
    V = spectral_embedding(g, c, normalized)
    rs = seed if seed is None or isinstance(seed, (int, np.integer)) else \
        int(check_seed(seed).integers(2**31 - 1))
    km = KMeans(n_clusters=c, init="k-means++", n_init=20, max_iter=300, tol=1e-6,
                random_state=rs)
    with warnings.catch_warnings():
        # duplicate embedding rows (e.g. whole components) trigger a benign warning
        warnings.simplefilter("ignore", category=UserWarning)
        labels = km.fit_predict(V)
    return Partition(_first_appearance(labels))


# -- transduction ----------------------------------------------------------------

def _split_labels(g: SparseGraph, split: LabeledSplit, labels, n_classes):
    n = g.n
    lab = np.asarray(split.labeled_ids, dtype=np.int64)
    unl = np.asarray(split.unlabeled_ids, dtype=np.int64)
    if lab.size + unl.size != n or np.intersect1d(lab, unl).size:
        raise ValueError("labeled and unlabeled ids must partition the nodes")
    if lab.size == 0:
        raise ValueError("at least one labeled node is required")
    y = as_labels(labels)
    if y.shape[0] == n:
        y_l = y[lab]
    elif y.shape[0] == lab.size:
        y_l = y
    else:
        raise ValueError(f"labels must have length n={n} or one per labeled node ({lab.size})")
    c = int(y_l.max()) + 1 if n_classes is None else int(n_classes)
    if y_l.min() < 0 or y_l.max() >= c:
        raise ValueError(f"labeled classes must lie in 0..{c - 1}")
    Y_l = np.zeros((lab.size, c))
    Y_l[np.arange(lab.size), y_l] = 1.0
    return lab, unl, y_l, Y_l, c


def grf(g: SparseGraph, split: LabeledSplit, labels, tol: float = 1e-10,
        n_classes: int | None = None) -> Labeling:
    """Harmonic label propagation.

    Solves ``L_uu F_u = -L_ul Y_l`` with labeled rows clamped to one-hot
    ``Y_l``. Systems with fewer than 200 unknowns are solved densely, larger
    ones by conjugate gradients at relative tolerance ``tol`` with a sparse
    direct solve as backup. Unlabeled nodes in components without any
    labeled node get uniform scores and are flagged in ``fallback``.
    """
    tol = check_positive(tol, "tol")
    lab, unl, y_l, Y_l, c = _split_labels(g, split, labels, n_classes)
    n = g.n
    F = np.zeros((n, c))
    F[lab] = Y_l
    fallback = np.zeros(n, dtype=bool)
    if unl.size:
        _, comp = csgraph.connected_components(g.W, directed=False)
        reach = np.isin(comp[unl], comp[lab])
        lost = unl[~reach]
        F[lost] = 1.0 / c
        fallback[lost] = True
        solve = unl[reach]
        if solve.size:
            L = laplacian(g)
            L_uu = L[solve][:, solve]
            rhs = -(L[solve][:, lab] @ Y_l)
            F[solve] = _solve_spd(L_uu, rhs, tol)
    hard = np.argmax(F, axis=1)
    hard[lab] = y_l
    return Labeling(F, hard, fallback, lab)


def _solve_spd(A: sparse.spmatrix, B: np.ndarray, tol: float) -> np.ndarray:
    """Solve ``A X = B`` for symmetric positive definite sparse ``A``."""
    if A.shape[0] < DENSE_LIMIT:
        return linalg.solve(A.toarray(), B, assume_a="pos")
    A = A.tocsr()
    X = np.empty_like(B)
    for j in range(B.shape[1]):
        b = B[:, j]
        if not np.any(b):
            X[:, j] = 0.0
            continue
        x, info = splinalg.cg(A, b, rtol=tol, atol=0.0, maxiter=10 * A.shape[0])
        if info != 0 or np.linalg.norm(A @ x - b) > tol * np.linalg.norm(b):
            x = splinalg.spsolve(A.tocsc(), b)
        X[:, j] = x
    return X


def gtam(g: SparseGraph, split: LabeledSplit, labels, mu: float = 0.05,
         max_iters: int | None = None, seed=0, normalized: bool = False,
         n_classes: int | None = None) -> Labeling:
    """Graph transduction by alternating minimization.

    Minimizes ``tr(F^T L F + mu (F - V Y)^T (F - V Y))``. For fixed labels
    ``Y`` the optimum is ``F = P V Y`` with ``P = (L/mu + I)^-1``; plugging it
    back leaves ``tr(Y^T V A V Y)`` with ``A = P^T L P + mu (P - I)^T (P - I)``.
    Each iteration labels the unlabeled (node, class) pair with the most
    negative gradient entry of ``A V Y``. The node regularizer ``V`` weights
    each labeled node by its degree over its class's total labeled degree,
    so every class carries the same mass however many labels it holds.

    Ties between equally good pairs are broken at random with ``seed``.
    Iteration stops when every node is labeled or after ``max_iters`` steps
    (default: the number of unlabeled nodes); nodes still unlabeled then
    take the argmax of ``F``.
    """
    mu = check_positive(mu, "mu")
    lab, unl, y_l, Y_l, c = _split_labels(g, split, labels, n_classes)
    rng = check_seed(seed)
    n = g.n
    L = laplacian(g, normalized).toarray()
    P = linalg.inv(L / mu + np.eye(n))
    P = (P + P.T) / 2
    A = P.T @ L @ P + mu * (P - np.eye(n)).T @ (P - np.eye(n))
    if not np.all(np.isfinite(A)):
        raise FloatingPointError("GTAM propagation matrix has non-finite entries")
    d = g.degrees
    Y = np.zeros((n, c))
    Y[lab] = Y_l
    open_ = np.zeros(n, dtype=bool)
    open_[unl] = True
    steps = unl.size if max_iters is None else min(check_positive_int(max_iters, "max_iters"),
                                                   unl.size)

    def regularized(Y):
        mass = Y.T @ d
        with np.errstate(divide="ignore", invalid="ignore"):
            share = np.where(mass > 0, 1.0 / mass, 0.0)
        return (Y * share[None, :]).sum(axis=1) * d

    for _ in range(steps):
        grad = A @ (regularized(Y)[:, None] * Y)
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError("GTAM gradient became non-finite")
        cand = grad[open_]
        best = cand.min()
        ties = np.argwhere(cand <= best + 1e-12 * max(1.0, abs(best)))
        r, j = ties[rng.integers(ties.shape[0])] if ties.shape[0] > 1 else ties[0]
        i = np.flatnonzero(open_)[r]
        Y[i, j] = 1.0
        open_[i] = False
    F = P @ (regularized(Y)[:, None] * Y)
    if not np.all(np.isfinite(F)):
        raise FloatingPointError("GTAM scores became non-finite")
    hard = np.argmax(F, axis=1)
    done = Y.sum(axis=1) > 0
    hard[done] = np.argmax(Y[done], axis=1)
    return Labeling(F, hard, None, lab)


# -- scoring ---------------------------------------------------------------------

def error_rate(pred, truth, *, evaluate_on=None, match: bool | None = None) -> float:
    """Misassignment fraction.

    Clustering output (a :class:`Partition` or a plain array) is scored
    under the best one-to-one matching of cluster ids to classes: all
    permutations up to 6 classes, the Hungarian algorithm beyond. A
    :class:`Labeling` is scored as a plain misclassification rate over its
    unlabeled nodes. ``evaluate_on`` and ``match`` override these defaults.
    """
    if isinstance(pred, Labeling):
        p = pred.hard
        if evaluate_on is None and pred.labeled is not None:
            evaluate_on = np.setdiff1d(np.arange(p.size), pred.labeled)
        match = False if match is None else match
    else:
        p = np.asarray(getattr(pred, "assignment", pred))
        match = True if match is None else match
    p = as_labels(p)
    t = as_labels(truth)
    if p.shape != t.shape:
        raise ValueError(f"prediction has {p.shape[0]} entries, truth {t.shape[0]}")
    if evaluate_on is not None:
        idx = np.asarray(evaluate_on)
        p, t = p[idx], t[idx]
    if p.size == 0:
        return 0.0
    if not match:
        return float(np.mean(p != t))
    k = max(p.max(), t.max()) + 1
    conf = np.zeros((k, k), dtype=np.int64)
    np.add.at(conf, (p, t), 1)
    if k <= 6:
        best = max(conf[np.arange(k), perm].sum() for perm in itertools.permutations(range(k)))
    else:
        r, cidx = linear_sum_assignment(-conf)
        best = conf[r, cidx].sum()
    return float(1.0 - best / p.size)


# -- divisive clustering ---------------------------------------------------------

@dataclass
class _Tentative:
    members: np.ndarray
    split: np.ndarray | None  # 0/1 within the part, None when frozen
    report: CutReport | None


def divisive_cluster(ds, target_c: int, builder=None, seed=0, *, min_cluster_size: int | None = None,
                     normalized: bool = False, return_history: bool = False):
    """Top-down clustering by repeated binary spectral splits.

    Every current part gets a tentative two-way split, computed on a graph
    built over that part alone (so ranks are recomputed within the part).
    The part whose tentative split has the smallest RatioCut is split for
    real; the loop stops at ``target_c`` parts. Parts with fewer than
    ``2 * min_cluster_size`` points (default ``max(2, 2% of n)``) are frozen.

    Parameters
    ----------
    builder : GraphRecipe or callable, optional
        ``builder(points, seed) -> SparseGraph``; defaults to an RMD recipe.
    return_history : bool
        Also return one dict per committed split (members, RatioCut, Cut).
    """
    X = as_points(ds, min_samples=2)
    n = X.shape[0]
    target_c = check_positive_int(target_c, "target_c", minimum=2)
    if target_c > n:
        raise ValueError(f"cannot form {target_c} clusters from {n} points")
    recipe = builder if builder is not None else GraphRecipe()
    build = recipe.build if isinstance(recipe, GraphRecipe) else recipe
    if min_cluster_size is None:
        min_cluster_size = max(2, int(math.ceil(0.02 * n)))

    def tentative(members: np.ndarray) -> _Tentative:
        if members.size < 2 * min_cluster_size:
            return _Tentative(members, None, None)
        g = build(X[members], seed)
        part = spectral_clustering(g, 2, normalized, seed)
        return _Tentative(members, part.assignment, cut_metrics(g, part))

    parts = [tentative(np.arange(n))]
    history = []
    while len(parts) < target_c:
        live = [i for i, p in enumerate(parts) if p.split is not None]
        if not live:
            warnings.warn(f"every part is too small to split; stopping at {len(parts)} clusters",
                          RuntimeWarning, stacklevel=2)
            break
        pick = min(live, key=lambda i: parts[i].report.ratio_cut)
        chosen = parts.pop(pick)
        left = chosen.members[chosen.split == 0]
        right = chosen.members[chosen.split == 1]
        history.append({"members": chosen.members, "left": left, "right": right,
                        "ratio_cut": chosen.report.ratio_cut, "cut": chosen.report.cut})
        parts[pick:pick] = [tentative(left), tentative(right)]
    assignment = np.empty(n, dtype=np.int64)
    for cid, p in enumerate(parts):
        assignment[p.members] = cid
    result = Partition(_first_appearance(assignment))
    return (result, history) if return_history else result


def split_boundary(ds, left, right, axis: int = 0) -> float:
    """Threshold on ``axis`` that best separates two index sets.

    Returns the midpoint of the gap at which a single threshold misplaces
    the fewest points (either orientation), which for a clean split is the
    midpoint between the two sides.
    """
    X = as_points(ds)
    left, right = np.asarray(left), np.asarray(right)
    x = np.concatenate([X[left, axis], X[right, axis]])
    side = np.concatenate([np.zeros(left.size), np.ones(right.size)])
    o = np.argsort(x, kind="stable")
    x, side = x[o], side[o]
    ones = np.concatenate([[0.0], np.cumsum(side)])
    zeros = np.concatenate([[0.0], np.cumsum(1 - side)])
    # misplaced points when the threshold falls after the first i sorted points
    err = np.minimum(ones + (zeros[-1] - zeros), zeros + (ones[-1] - ones))
    i = int(np.argmin(err))
    pad = np.concatenate([[x[0] - 1.0], x, [x[-1] + 1.0]])
    return float((pad[i] + pad[i + 1]) / 2)


# -- cross-validation over degree schemes -----------------------------------------

@dataclass
class CvConfig:
    """Degree schemes to try and how to pick among their results.

    ``cut_graph="own"`` scores each result's Cut on the graph it was
    computed on; ``"knn"`` scores every result on one shared k-NN graph.
    """

    schemes: list = field(default_factory=lambda: ["a", "b", "c"])
    min_cluster_fraction: float = 0.05
    selector: str = "min_cut"
    recipe: GraphRecipe = field(default_factory=GraphRecipe)
    cut_graph: str = "own"

    def __post_init__(self):
        if not self.schemes:
            raise ValueError("CvConfig needs at least one scheme")
        if not 0 < self.min_cluster_fraction < 0.5:
            raise ValueError("min_cluster_fraction must lie in (0, 0.5)")
        if self.selector != "min_cut":
            raise ValueError(f"unknown selector {self.selector!r}")
        if self.cut_graph not in ("own", "knn"):
            raise ValueError(f"cut_graph must be 'own' or 'knn', got {self.cut_graph!r}")


@dataclass
class RunResult:
    """One algorithm run on one graph, with its cut scores."""

    algorithm: str
    scheme: str | None
    seed: int | None
    output: object  # Partition or Labeling
    report: CutReport
    error_rate: float | None = None
    selected: bool = False
    flagged: bool = False

    @property
    def assignment(self) -> np.ndarray:
        return _assignment(self.output)

    def to_dict(self) -> dict:
        return {"algorithm": self.algorithm, "scheme": self.scheme, "seed": self.seed,
                "error_rate": self.error_rate, "cut": self.report.cut,
                "ratio_cut": self.report.ratio_cut, "ncut": self.report.ncut,
                "cluster_sizes": list(self.report.cluster_sizes), "selected": self.selected}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def run_algorithm(algo: str, g: SparseGraph, *, n_clusters: int = 2, split=None, labels=None,
                  seed=0, mu: float = 0.05, normalized: bool = False):
    """Dispatch ``sc``, ``grf`` or ``gtam`` on a built graph."""
    if algo == "sc":
        return spectral_clustering(g, n_clusters, normalized, seed)
    if split is None or labels is None:
        raise ValueError(f"{algo} needs a labeled split and labels")
    if algo == "grf":
        return grf(g, split, labels, n_classes=n_clusters)
    if algo == "gtam":
        return gtam(g, split, labels, mu=mu, seed=seed, n_classes=n_clusters)
    raise ValueError(f"unknown algorithm {algo!r}; choose sc, grf or gtam")


def _assignment(output) -> np.ndarray:
    return output.hard if isinstance(output, Labeling) else output.assignment


def _partition_of(output) -> Partition | None:
    try:
        return Partition(_assignment(output))
    except ValueError:
        return None  # a class received no points


def cross_validate(ds, cfg: CvConfig | None = None, algo: str = "sc", seed=0, *,
                   n_clusters: int = 2, split=None, labels=None, mu: float = 0.05,
                   threads: int = 1):
    """Run ``algo`` on the RMD graph of every scheme and keep the minimum-Cut result.

    Results with a cluster smaller than ``min_cluster_fraction * n`` are
    discarded first. If every result is discarded, the one whose smallest
    cluster is largest is returned with ``flagged=True``.

    Returns
    -------
    best : RunResult
    results : list of RunResult
        One per scheme, in ``cfg.schemes`` order; the winner has
        ``selected=True``.
    """
    cfg = cfg or CvConfig()
    X = as_points(ds, min_samples=2)
    n = X.shape[0]
    ranks = cfg.recipe.ranks(X, seed) if cfg.recipe.kind == "rmd" else None
    shared = None
    if cfg.cut_graph == "knn":
        shared = GraphRecipe(kind="knn", k=cfg.recipe.k, weights=cfg.recipe.weights,
                             sigma=cfg.recipe.sigma).build(X)

    def one(s) -> RunResult:
        recipe = cfg.recipe.with_scheme(s)
        g = recipe.build(X, seed, ranks)
        out = run_algorithm(algo, g, n_clusters=n_clusters, split=split, labels=labels,
                            seed=seed, mu=mu)
        part = _partition_of(out)
        if part is not None:
            rep = cut_metrics(shared if shared is not None else g, part)
        else:
            sizes = np.bincount(_assignment(out), minlength=n_clusters).tolist()
            rep = CutReport(math.inf, math.inf, math.inf, sizes, [])
        return RunResult(algo, recipe.scheme_name, seed if isinstance(seed, int) else None, out, rep)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(one, cfg.schemes))
    floor = cfg.min_cluster_fraction * n
    ok = [r for r in results if min(r.report.cluster_sizes) >= floor]
    if ok:
        best = min(ok, key=lambda r: r.report.cut)
    else:
        best = max(results, key=lambda r: min(r.report.cluster_sizes))
        best.flagged = True
    best.selected = True
    return best, results

