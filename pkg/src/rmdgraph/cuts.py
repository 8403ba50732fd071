"""Graph-cut objectives, hyperplane sweeps and their large-sample limits.

For a partition of the nodes, ``Cut`` is the weight crossing between
clusters, ``RatioCut`` divides each cluster's boundary weight by its size and
``NCut`` by its volume (sum of weighted degrees). The limit functions give
the n -> infinity value of the scaled NCut of a fixed axis-aligned
hyperplane for k-NN and rank-modulated graphs on a Gaussian mixture.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import integrate, stats

from ._validation import as_points, check_positive_int, check_seed
from .dataset import MixtureSpec
from .graph import DegreeScheme, SparseGraph
from .rank import PValueTable

__all__ = [
    "Partition",
    "CutReport",
    "CutCurve",
    "cut_metrics",
    "hyperplane_partition",
    "hyperplane_sweep",
    "unit_ball_volume",
    "cut_constant",
    "limit_ncut_knn",
    "limit_ncut_rmd",
    "scaled_ncut",
    "LimitCutWarning",
]


class LimitCutWarning(UserWarning):
    """The quadrature behind a limit-cut value did not reach its tolerance."""


@dataclass
class Partition:
    """Cluster id per node; ids are ``0..c-1`` and every cluster is nonempty."""

    assignment: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.assignment)
        if a.ndim != 1 or a.size == 0:
            raise ValueError("assignment must be a nonempty 1-D array")
        if not np.issubdtype(a.dtype, np.integer):
            if not np.all(np.mod(a, 1) == 0):
                raise ValueError("cluster ids must be integers")
        a = a.astype(np.int64)
        if a.min() < 0:
            raise ValueError("cluster ids must be non-negative")
        sizes = np.bincount(a)
        if sizes.size < 2:
            raise ValueError("a partition needs at least two clusters")
        if np.any(sizes == 0):
            empty = np.flatnonzero(sizes == 0).tolist()
            raise ValueError(f"clusters {empty} are empty")
        self.assignment = a

    @property
    def n_clusters(self) -> int:
        return int(self.assignment.max()) + 1

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment)

    def __len__(self) -> int:
        return self.assignment.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.assignment if dtype is None else self.assignment.astype(dtype)


@dataclass
class CutReport:
    cut: float
    ratio_cut: float
    ncut: float
    cluster_sizes: list
    cluster_volumes: list

    def to_dict(self) -> dict:
        return {"cut": self.cut, "ratio_cut": self.ratio_cut, "ncut": self.ncut,
                "cluster_sizes": list(self.cluster_sizes),
                "cluster_volumes": list(self.cluster_volumes)}


def _as_partition(p) -> Partition:
    return p if isinstance(p, Partition) else Partition(np.asarray(getattr(p, "hard", p)))


def cut_metrics(g: SparseGraph, p) -> CutReport:
    """Cut, RatioCut and NCut of a partition.

    For ``c`` clusters, ``Cut`` is the total inter-cluster weight and
    ``RatioCut = sum_j cut(C_j) / |C_j|``, ``NCut = sum_j cut(C_j) / vol(C_j)``,
    where ``cut(C_j)`` is the weight leaving cluster ``j``. For two clusters
    this is ``Cut * (1/|C| + 1/|C'|)`` and ``Cut * (1/vol(C) + 1/vol(C'))``.
    A cluster of zero volume contributes nothing to NCut.
    """
    p = _as_partition(p)
    a = p.assignment
    if a.shape[0] != g.n:
        raise ValueError(f"partition has {a.shape[0]} entries for a graph of {g.n} nodes")
    c = p.n_clusters
    i, j, w = g.edges
    ai, aj = a[i], a[j]
    cross = ai != aj
    wc = w[cross]
    boundary = np.bincount(ai[cross], wc, minlength=c) + np.bincount(aj[cross], wc, minlength=c)
    sizes = np.bincount(a, minlength=c)
    vols = np.bincount(a, g.degrees, minlength=c)
    nz = vols > 0
    return CutReport(
        cut=float(wc.sum()),
        ratio_cut=float((boundary / sizes).sum()),
        ncut=float((boundary[nz] / vols[nz]).sum()),
        cluster_sizes=sizes.tolist(),
        cluster_volumes=vols.tolist(),
    )


def hyperplane_partition(ds, axis: int, t: float) -> Partition:
    """Cluster 0 is ``x_axis <= t``, cluster 1 the rest."""
    X = as_points(ds)
    return Partition((X[:, axis] > t).astype(np.int64))


@dataclass
class CutCurve:
    axis: int
    thresholds: np.ndarray
    values: list = field(repr=False)

    def column(self, metric: str) -> np.ndarray:
        return np.array([getattr(r, metric) for r in self.values])

    @property
    def size_left(self) -> np.ndarray:
        return np.array([r.cluster_sizes[0] for r in self.values])

    def argmin(self, metric: str = "ratio_cut", trim: float = 0.0) -> float:
        """Threshold minimizing ``metric``.

        ``trim`` drops thresholds leaving fewer than ``trim * n`` points on
        either side.
        """
        vals = self.column(metric)
        left = self.size_left
        n = left[0] + self.values[0].cluster_sizes[1]
        ok = (left >= trim * n) & (n - left >= trim * n)
        if not ok.any():
            raise ValueError(f"no threshold survives trimming {trim}")
        idx = np.flatnonzero(ok)
        return float(self.thresholds[idx[np.argmin(vals[idx])]])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["threshold", "cut", "ratio_cut", "ncut", "size_left"])
            for t, r in zip(self.thresholds, self.values):
                w.writerow([repr(float(t)), repr(r.cut), repr(r.ratio_cut), repr(r.ncut),
                            r.cluster_sizes[0]])


def hyperplane_sweep(g: SparseGraph, ds, axis: int = 0, grid: int = 200) -> CutCurve:
    """Cut metrics of ``x_axis <= t`` for ``t`` on a uniform grid over the data range.

    Thresholds that leave one side empty are skipped.
    """
    X = as_points(ds)
    if X.shape[0] != g.n:
        raise ValueError(f"dataset has {X.shape[0]} points, graph {g.n} nodes")
    check_positive_int(grid, "grid", minimum=2)
    x = X[:, axis]
    lo_x, hi_x = x.min(), x.max()
    if lo_x == hi_x:
        raise ValueError(f"all points share the same coordinate on axis {axis}")
    ts = np.linspace(lo_x, hi_x, grid)
    i, j, w = g.edges
    lo = np.minimum(x[i], x[j])
    hi = np.maximum(x[i], x[j])
    # an edge is cut at t iff lo <= t < hi
    ol, oh = np.argsort(lo), np.argsort(hi)
    wl = np.concatenate([[0.0], np.cumsum(w[ol])])
    wh = np.concatenate([[0.0], np.cumsum(w[oh])])
    cuts = wl[np.searchsorted(lo[ol], ts, "right")] - wh[np.searchsorted(hi[oh], ts, "right")]
    ox = np.argsort(x)
    deg_cum = np.concatenate([[0.0], np.cumsum(g.degrees[ox])])
    left_n = np.searchsorted(x[ox], ts, "right")
    total_vol = deg_cum[-1]
    n = X.shape[0]
    keep, reports = [], []
    for t, cut, nl in zip(ts, cuts, left_n):
        if nl == 0 or nl == n:
            continue
        cut = max(float(cut), 0.0)
        vl = deg_cum[nl]
        vr = total_vol - vl
        ncut = (cut / vl if vl > 0 else 0.0) + (cut / vr if vr > 0 else 0.0)
        reports.append(CutReport(cut, cut * (1 / nl + 1 / (n - nl)), ncut,
                                 [int(nl), int(n - nl)], [float(vl), float(vr)]))
        keep.append(t)
    return CutCurve(axis, np.array(keep), reports)


# -- limit cuts ------------------------------------------------------------------

def unit_ball_volume(d: int) -> float:
    """Volume of the unit ball in ``R^d`` (1 for ``d = 0``)."""
    return math.pi ** (d / 2) / math.gamma(d / 2 + 1)


def cut_constant(d: int) -> float:
    """``2 eta_{d-1} / ((d+1) eta_d^(1+1/d))`` with ``eta`` the unit-ball volume."""
    return 2 * unit_ball_volume(d - 1) / ((d + 1) * unit_ball_volume(d) ** (1 + 1 / d))


def _marginal_without(spec: MixtureSpec, axis: int) -> MixtureSpec:
    keep = [j for j in range(spec.dim) if j != axis]
    return MixtureSpec(spec.weights, spec.means[:, keep], spec.covs[:, keep][:, :, keep])


def _embed(spec: MixtureSpec, axis: int, t: float, S: np.ndarray) -> np.ndarray:
    X = np.empty((S.shape[0], spec.dim))
    X[:, axis] = t
    X[:, [j for j in range(spec.dim) if j != axis]] = S
    return X


def _slice_integral(spec: MixtureSpec, axis: int, t: float, weight, *,
                    epsrel: float = 1e-8, mc_samples: int = 200_000, seed=0) -> float:
    """``int_S f^(1-1/d)(s) weight(s) ds`` over the hyperplane ``x_axis = t``.

    d = 1 is a point evaluation, d = 2 adaptive quadrature on a bounded
    range covering the mixture, d > 2 importance sampling from the mixture's
    marginal on the remaining coordinates.
    """
    d = spec.dim
    expo = 1.0 - 1.0 / d

    def integrand(X):
        f = spec.pdf(X)
        out = f ** expo
        if weight is not None:
            out = out * weight(X)
        return out

    if d == 1:
        return float(integrand(np.array([[t]]))[0])
    if d == 2:
        other = 1 - axis
        mu = spec.means[:, other]
        sd = np.sqrt(spec.covs[:, other, other])
        a, b = float((mu - 12 * sd).min()), float((mu + 12 * sd).max())

        def g(s):
            return float(integrand(_embed(spec, axis, t, np.array([[s]])))[0])

        val, err, info = integrate.quad(g, a, b, epsrel=epsrel, limit=400, full_output=1)[:3]
        if abs(err) > max(1e-4 * abs(val), 1e-12):
            warnings.warn(f"slice quadrature at t={t} reached only {err:.3g} absolute error",
                          LimitCutWarning, stacklevel=3)
        return float(val)
    q = _marginal_without(spec, axis)
    S, _ = q.sample(mc_samples, check_seed(seed))
    vals = integrand(_embed(spec, axis, t, S)) / q.pdf(S)
    est = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(mc_samples))
    if se > 1e-2 * abs(est):
        warnings.warn(f"Monte Carlo slice integral has relative standard error {se / abs(est):.3g}",
                      LimitCutWarning, stacklevel=3)
    return est


def _limit_value(spec, axis, t, weight, balance, constant, **kw) -> float:
    if not 0 <= axis < spec.dim:
        raise ValueError(f"axis {axis} out of range for dimension {spec.dim}")
    integral = _slice_integral(spec, axis, t, weight, **kw)
    factor = cut_constant(spec.dim) if constant else 1.0
    if not balance:
        return factor * integral
    left = float(spec.marginal_cdf(t, axis))
    right = float(stats.norm.sf(t, spec.means[:, axis], np.sqrt(spec.covs[:, axis, axis]))
                  @ spec.weights)
    if left <= 0 or right <= 0:
        return math.inf
    return factor * integral * (1.0 / left + 1.0 / right)


def limit_ncut_knn(spec: MixtureSpec, axis: int, t: float, balance: bool = True,
                   with_constant: bool = False, **kw) -> float:
    """Limit of the scaled NCut of ``x_axis = t`` on a k-NN graph.

    ``int_S f^(1-1/d) ds * (1/mu(C-) + 1/mu(C+))``; the dimension constant
    is left out unless ``with_constant``.
    """
    return _limit_value(spec, axis, t, None, balance, with_constant, **kw)


def limit_ncut_rmd(spec: MixtureSpec, axis: int, t: float, scheme: DegreeScheme,
                   balance: bool = True, *, pvalues: PValueTable | None = None,
                   mc_samples: int = 200_000, seed=0, **kw) -> float:
    """Limit of ``(n/k)^(1/d) * NCut`` of ``x_axis = t`` on an RMD graph.

    ``C_d * int_S f^(1-1/d)(s) rho(s)^(1+1/d) ds * (1/mu(C-) + 1/mu(C+))``
    with ``rho = lam + phi(p)`` and ``p`` the p-value of ``s`` under ``spec``.
    """
    d = spec.dim
    if pvalues is None:
        pvalues = PValueTable(spec, mc_samples, seed)

    def weight(X):
        return scheme.rho(pvalues(X)) ** (1.0 + 1.0 / d)

    return _limit_value(spec, axis, t, weight, balance, True, seed=seed, **kw)


def scaled_ncut(g: SparseGraph, ds, axis: int, t: float, k: float) -> float:
    """Empirical ``(n/k)^(1/d) * NCut`` of the hyperplane ``x_axis = t``."""
    X = as_points(ds)
    n, d = X.shape
    return (n / k) ** (1.0 / d) * cut_metrics(g, hyperplane_partition(X, axis, t)).ncut
