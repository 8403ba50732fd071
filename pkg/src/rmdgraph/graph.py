"""Graph constructions over point clouds.

Baselines (epsilon-ball, fully connected RBF, symmetric k-NN, b-matching)
and rank-modulated degree (RMD) graphs, where each point's neighbor budget
grows with its rank: ``deg(u) = k * (lambda + phi(R(u)))``. Points in
low-density valleys get few edges, so cuts through valleys become cheap
while outliers keep at least ``k * lambda`` links.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy import sparse

from ._validation import as_points, check_positive, check_positive_int
from .bmatching import solve_bmatching
from .neighbors import pairwise_distances, sorted_neighbors

__all__ = [
    "SparseGraph",
    "DegreeScheme",
    "DegreeProfile",
    "SCHEMES",
    "scheme",
    "knn_graph",
    "eps_graph",
    "full_rbf_graph",
    "bmatching_graph",
    "degree_profile",
    "rmd_graph_nn",
    "rmd_graph_opt",
    "even_degrees",
    "mean_knn_distance",
    "apply_weights",
    "laplacian",
    "write_edgelist",
    "read_edgelist",
]


@dataclass(eq=False)
class SparseGraph:
    """Undirected weighted graph stored as a symmetric CSR matrix.

    The constructor enforces symmetry, an empty diagonal and strictly
    positive stored weights.
    """

    W: sparse.csr_matrix
    weight_kind: str = "binary"
    sigma: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        W = sparse.csr_matrix(self.W, dtype=float)
        if W.shape[0] != W.shape[1]:
            raise ValueError(f"adjacency must be square, got {W.shape}")
        W.eliminate_zeros()
        if W.nnz and W.data.min() < 0:
            raise ValueError("edge weights must be positive")
        if W.diagonal().any():
            raise ValueError("self-loops are not allowed")
        if (abs(W - W.T) > 1e-12 * max(1.0, abs(W).max())).nnz:
            raise ValueError("adjacency must be symmetric")
        W.sort_indices()
        self.W = W
        if self.weight_kind not in ("binary", "rbf"):
            raise ValueError(f"weight_kind must be 'binary' or 'rbf', got {self.weight_kind!r}")

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def n_edges(self) -> int:
        return self.W.nnz // 2

    @cached_property
    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(i, j, w)`` arrays with ``i < j``, one entry per undirected edge."""
        upper = sparse.triu(self.W, k=1, format="coo")
        order = np.lexsort((upper.col, upper.row))
        return upper.row[order].astype(np.int64), upper.col[order].astype(np.int64), upper.data[order]

    @cached_property
    def degrees(self) -> np.ndarray:
        """Weighted degree (row sum) of every node."""
        return np.asarray(self.W.sum(axis=1)).ravel()

    @property
    def edge_counts(self) -> np.ndarray:
        """Number of incident edges of every node."""
        return np.diff(self.W.indptr)

    def toarray(self) -> np.ndarray:
        return self.W.toarray()

    def subgraph(self, idx) -> "SparseGraph":
        idx = np.asarray(idx)
        return SparseGraph(self.W[idx][:, idx], self.weight_kind, self.sigma)

    @classmethod
    def from_edges(cls, n: int, i, j, w=None, **kw) -> "SparseGraph":
        """Build from edge endpoint arrays; repeated pairs are merged.

        Without ``w`` the graph is binary. With ``w``, each pair should be
        listed once (duplicates would add up).
        """
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        binary = w is None
        w = np.ones(i.size) if binary else np.asarray(w, dtype=float)
        W = sparse.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))),
                              shape=(n, n)).tocsr()
        W.sum_duplicates()
        if binary:
            W.data[:] = 1.0
        return cls(W, **kw)

    @classmethod
    def from_mask(cls, mask: np.ndarray, **kw) -> "SparseGraph":
        """Symmetric binary graph from a boolean (possibly directed) neighbor mask."""
        A = sparse.csr_matrix(mask, dtype=float)
        A = A.maximum(A.T)
        A.setdiag(0)
        return cls(A, **kw)


# -- degree modulation -------------------------------------------------------

_POWERS = {"linear": 1, "quadratic": 2, "cubic": 3}


@dataclass(frozen=True)
class DegreeScheme:
    """How rank maps to degree: ``deg(u) = k * (lam + phi(R(u)))``.

    ``phi`` is ``a * R**p`` for ``linear``/``quadratic``/``cubic``, or a
    piecewise-linear interpolation of ``table`` (values on an even grid over
    [0, 1]) for ``table``. The mean of ``lam + phi(R)`` over uniform ``R``
    must be 1 so that the average degree stays ``k``.
    """

    k: int = 30
    lam: float = 1 / 3
    phi: str = "quadratic"
    a: float = 2.0
    table: tuple = ()
    name: str = ""

    def __post_init__(self):
        check_positive_int(self.k, "k")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if self.phi in _POWERS:
            if self.a <= 0:
                raise ValueError(f"coefficient a must be positive, got {self.a}")
            mean_phi = self.a / (_POWERS[self.phi] + 1)
        elif self.phi == "table":
            t = np.asarray(self.table, dtype=float)
            if t.size < 2:
                raise ValueError("a phi table needs at least two values")
            if np.any(np.diff(t) < 0):
                raise ValueError("phi must be nondecreasing")
            mean_phi = float(np.mean((t[1:] + t[:-1]) / 2))
        else:
            raise ValueError(f"unknown phi {self.phi!r}")
        if abs(self.lam + mean_phi - 1.0) > 1e-9:
            raise ValueError(
                f"lam + E[phi(R)] must equal 1 for uniform R, got {self.lam + mean_phi:.12g}")

    def phi_of(self, r) -> np.ndarray:
        r = np.clip(np.asarray(r, dtype=float), 0.0, 1.0)
        if self.phi == "table":
            t = np.asarray(self.table, dtype=float)
            return np.interp(r, np.linspace(0.0, 1.0, t.size), t)
        return self.a * r ** _POWERS[self.phi]

    def rho(self, r) -> np.ndarray:
        """Relative degree ``lam + phi(r)``."""
        return self.lam + self.phi_of(r)

    def raw_degree(self, r) -> np.ndarray:
        return self.k * self.rho(r)

    @property
    def min_degree(self) -> int:
        return max(1, int(np.floor(self.k * self.lam + 0.5)))

    def with_k(self, k: int) -> "DegreeScheme":
        return DegreeScheme(k, self.lam, self.phi, self.a, self.table, self.name)

    def to_dict(self) -> dict:
        d = {"k": self.k, "lam": self.lam, "phi": self.phi, "a": self.a, "name": self.name}
        if self.phi == "table":
            d["table"] = list(self.table)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DegreeScheme":
        if "preset" in d:
            return scheme(d["preset"], d.get("k", 30))
        return cls(int(d.get("k", 30)), float(d["lam"]), d["phi"], float(d.get("a", 1.0)),
                   tuple(d.get("table", ())), d.get("name", ""))


SCHEMES = {
    "a": dict(lam=1 / 2, phi="linear", a=1.0),
    "b": dict(lam=1 / 3, phi="quadratic", a=2.0),
    "c": dict(lam=1 / 4, phi="cubic", a=3.0),
}


def scheme(name: str, k: int = 30) -> DegreeScheme:
    """Preset schemes: ``a`` = k(1/2+R), ``b`` = k(1/3+2R^2), ``c`` = k(1/4+3R^3)."""
    try:
        params = SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; presets are {sorted(SCHEMES)}") from None
    return DegreeScheme(k=k, name=name, **params)


@dataclass
class DegreeProfile:
    degrees: np.ndarray
    raw: np.ndarray
    scheme: DegreeScheme

    def __len__(self) -> int:
        return self.degrees.shape[0]


def degree_profile(ranks, scheme: DegreeScheme) -> DegreeProfile:
    """Integer degrees ``round(k * (lam + phi(R)))`` floored at ``max(1, round(k*lam))``.

    Rounding is half-up.
    """
    r = np.asarray(getattr(ranks, "values", ranks), dtype=float)
    raw = scheme.raw_degree(r)
    deg = np.maximum(np.floor(raw + 0.5).astype(np.int64), scheme.min_degree)
    return DegreeProfile(deg, raw, scheme)


# -- constructions -------------------------------------------------------------

def knn_graph(ds, k: int) -> SparseGraph:
    """Symmetric k-NN graph: ``u ~ v`` if either is among the other's k nearest."""
    X = as_points(ds, min_samples=2)
    n = X.shape[0]
    check_positive_int(k, "k")
    if k >= n:
        raise ValueError(f"k={k} must be smaller than the number of points {n}")
    idx, _ = sorted_neighbors(X, k)
    rows = np.repeat(np.arange(n), k)
    g = SparseGraph.from_edges(n, rows, idx.ravel())
    g.meta.update(kind="knn", k=k)
    return g


def eps_graph(ds, eps: float) -> SparseGraph:
    """Binary graph linking every pair at distance ``<= eps``."""
    X = as_points(ds, min_samples=2)
    eps = check_positive(eps, "eps")
    D = pairwise_distances(X)
    mask = D <= eps
    np.fill_diagonal(mask, False)
    g = SparseGraph.from_mask(mask)
    g.meta.update(kind="eps", eps=eps)
    return g


def full_rbf_graph(ds, sigma: float) -> SparseGraph:
    """Complete graph with weights ``exp(-d^2 / (2 sigma^2))``.

    Weights that would underflow are clamped to the smallest normal float so
    that the graph stays complete.
    """
    X = as_points(ds, min_samples=2)
    sigma = check_positive(sigma, "sigma")
    D = pairwise_distances(X)
    Wd = np.maximum(np.exp(-D ** 2 / (2 * sigma ** 2)), np.finfo(float).tiny)
    np.fill_diagonal(Wd, 0.0)
    g = SparseGraph(sparse.csr_matrix(Wd), "rbf", sigma)
    g.meta.update(kind="full_rbf")
    return g


def rmd_graph_nn(ds, profile: DegreeProfile) -> SparseGraph:
    """RMD graph by the k-NN style rule.

    ``u ~ v`` if ``v`` is among the ``deg(u)`` nearest neighbors of ``u`` or
    ``u`` is among the ``deg(v)`` nearest neighbors of ``v``.
    """
    X = as_points(ds, min_samples=2)
    n = X.shape[0]
    deg = np.asarray(profile.degrees, dtype=np.int64)
    if deg.shape != (n,):
        raise ValueError(f"profile has {deg.shape[0]} degrees for {n} points")
    kmax = int(deg.max())
    if kmax >= n:
        raise ValueError(f"max degree {kmax} must be smaller than the number of points {n}")
    idx, _ = sorted_neighbors(X, kmax)
    keep = np.arange(kmax)[None, :] < deg[:, None]
    rows = np.broadcast_to(np.arange(n)[:, None], idx.shape)[keep]
    g = SparseGraph.from_edges(n, rows, idx[keep])
    g.meta.update(kind="rmd", construction="nn")
    return g


def _candidate_mask(X: np.ndarray, per_node: int) -> np.ndarray:
    n = X.shape[0]
    per_node = min(per_node, n - 1)
    idx, _ = sorted_neighbors(X, per_node)
    mask = np.zeros((n, n), dtype=bool)
    mask[np.repeat(np.arange(n), per_node), idx.ravel()] = True
    return mask | mask.T


def even_degrees(profile: DegreeProfile) -> np.ndarray:
    """Degrees with an even sum, as any graph requires.

    When the rounded degrees sum to an odd number, the node whose degree
    lost the most to rounding gets one more edge (lowest index on ties).
    """
    deg = np.asarray(profile.degrees, dtype=np.int64).copy()
    if deg.sum() % 2:
        deg[np.argmax(np.asarray(profile.raw, dtype=float) - deg)] += 1
    return deg


def rmd_graph_opt(ds, profile: DegreeProfile, max_iters: int = 200, *,
                  candidates_per_node: int | None = None, exact_fallback: bool | None = None,
                  damping: float = 0.5, tol: float = 1e-9, fix_parity: bool = True) -> SparseGraph:
    """RMD graph as the minimum-total-distance subgraph with exact degrees.

    Solved by b-matching belief propagation generalized to per-node degrees
    (see :mod:`rmdgraph.bmatching`). ``candidates_per_node`` restricts the
    admissible edges to each node's nearest neighbors; by default all pairs
    are admissible up to 300 points and ``3 * max_degree`` neighbors beyond.
    With ``fix_parity`` an odd degree total is made even by
    :func:`even_degrees`; otherwise it is rejected as not graphical.
    Solver diagnostics land in ``graph.meta``.
    """
    X = as_points(ds, min_samples=2)
    n = X.shape[0]
    check_positive_int(max_iters, "max_iters")
    deg = even_degrees(profile) if fix_parity else np.asarray(profile.degrees, dtype=np.int64)
    if deg.shape != (n,):
        raise ValueError(f"profile has {deg.shape[0]} degrees for {n} points")
    D = pairwise_distances(X)
    if candidates_per_node is None and n > 300:
        candidates_per_node = 3 * int(deg.max())
    cand = None if candidates_per_node is None else _candidate_mask(X, candidates_per_node)
    res = solve_bmatching(D, deg, max_iters=max_iters, damping=damping, tol=tol,
                          candidates=cand, exact_fallback=exact_fallback)
    g = SparseGraph.from_mask(res.adjacency)
    g.meta.update(kind="rmd", construction="opt", method=res.method, converged=res.converged,
                  iterations=res.iterations, feasible=res.feasible,
                  repaired=res.method == "repair", objective=res.objective(D))
    return g


def bmatching_graph(ds, k: int, max_iters: int = 200, **kw) -> SparseGraph:
    """b-matching baseline: every node gets exactly ``k`` edges."""
    X = as_points(ds, min_samples=2)
    prof = DegreeProfile(np.full(X.shape[0], k, dtype=np.int64), np.full(X.shape[0], float(k)),
                         DegreeScheme(k, 1.0, "table", table=(0.0, 0.0), name="const"))
    if (X.shape[0] * k) % 2:
        raise ValueError(f"n*k = {X.shape[0] * k} is odd, so no {k}-regular graph exists")
    g = rmd_graph_opt(X, prof, max_iters, fix_parity=False, **kw)
    g.meta["kind"] = "bmatch"
    return g


# -- weights and Laplacians ------------------------------------------------------

def mean_knn_distance(ds, k: int = 30) -> float:
    """Mean over points of the distance to the k-th nearest neighbor."""
    X = as_points(ds, min_samples=2)
    k = min(k, X.shape[0] - 1)
    _, dist = sorted_neighbors(X, k)
    return float(dist[:, -1].mean())


def apply_weights(g: SparseGraph, kind: str, ds=None, sigma: float | None = None,
                  k: int = 30) -> SparseGraph:
    """Same edges, new weights: all ones (``binary``) or RBF of edge length.

    For ``rbf`` without an explicit ``sigma`` the mean k-th nearest-neighbor
    distance of ``ds`` is used.
    """
    if kind == "binary":
        W = g.W.copy()
        W.data[:] = 1.0
        return SparseGraph(W, "binary", None, dict(g.meta))
    if kind != "rbf":
        raise ValueError(f"unknown weight kind {kind!r}")
    if ds is None:
        raise ValueError("rbf weights need the point coordinates")
    X = as_points(ds)
    if sigma is None:
        sigma = mean_knn_distance(X, k)
    sigma = check_positive(sigma, "sigma")
    i, j, _ = g.edges
    d2 = ((X[i] - X[j]) ** 2).sum(axis=1)
    w = np.maximum(np.exp(-d2 / (2 * sigma ** 2)), np.finfo(float).tiny)
    out = SparseGraph.from_edges(g.n, i, j, w, weight_kind="rbf", sigma=sigma)
    out.meta.update(g.meta)
    return out


def laplacian(g: SparseGraph, normalized: bool = False) -> sparse.csr_matrix:
    """``D - W``, or ``I - D^-1/2 W D^-1/2`` when ``normalized``.

    In the normalized form an isolated node gets a diagonal entry of 1 and
    no off-diagonal entries.
    """
    if g.n == 0:
        raise ValueError("graph has no nodes")
    d = g.degrees
    if not normalized:
        return (sparse.diags(d) - g.W).tocsr()
    inv_sqrt = np.zeros_like(d)
    nz = d > 0
    inv_sqrt[nz] = 1.0 / np.sqrt(d[nz])
    S = sparse.diags(inv_sqrt) @ g.W @ sparse.diags(inv_sqrt)
    return (sparse.identity(g.n) - S).tocsr()


# -- edge-list I/O ---------------------------------------------------------------

def write_edgelist(g: SparseGraph, path) -> None:
    """Header ``n=<count> weights=<kind>`` then one ``i,j,weight`` line per edge, ``i<j``."""
    kind = g.weight_kind if g.weight_kind == "binary" else f"rbf({g.sigma!r})"
    i, j, w = g.edges
    with Path(path).open("w") as fh:
        fh.write(f"n={g.n} weights={kind}\n")
        for a, b, c in zip(i, j, w):
            fh.write(f"{int(a)},{int(b)},{float(c)!r}\n")


_HEADER = re.compile(r"^n=(\d+)\s+weights=(binary|rbf\(([^)]*)\))\s*$")


def read_edgelist(path) -> SparseGraph:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise ValueError(f"{path}: empty edge list")
    m = _HEADER.match(lines[0].strip())
    if not m:
        raise ValueError(f"{path}: bad header {lines[0]!r}")
    n = int(m.group(1))
    kind = "binary" if m.group(2) == "binary" else "rbf"
    sigma = float(m.group(3)) if kind == "rbf" else None
    rows = [ln.split(",") for ln in lines[1:] if ln.strip()]
    for ln_no, r in enumerate(rows, start=2):
        if len(r) != 3:
            raise ValueError(f"{path}: line {ln_no} must be 'i,j,weight'")
    i = np.array([int(r[0]) for r in rows], dtype=np.int64)
    j = np.array([int(r[1]) for r in rows], dtype=np.int64)
    w = np.array([float(r[2]) for r in rows])
    if i.size and (np.any(i >= j) or j.max() >= n or i.min() < 0):
        raise ValueError(f"{path}: edges must satisfy 0 <= i < j < n")
    return SparseGraph.from_edges(n, i, j, w, weight_kind=kind, sigma=sigma)
