"""Empirical ranks of points under a nearest-neighbor density statistic.

A point's rank is the fraction of the sample whose statistic is at least as
large as its own. With distance-type statistics, low ranks flag points in
sparse regions (valleys and tails) and high ranks flag modes; asymptotically
the rank converges to the p-value ``P(f(X) <= f(u))``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats

from ._validation import as_points, check_positive, check_positive_int, check_seed
from .dataset import MixtureSpec
from .neighbors import order_statistics, pairwise_distances

__all__ = [
    "StatisticSpec",
    "RankVector",
    "statistic",
    "statistics_against",
    "rank_all",
    "rank_ustat",
    "pvalue_oracle",
    "PValueTable",
    "theory_l",
]

KINDS = ("eps_count", "lnn_distance", "avg_lnn_distance")


@dataclass(frozen=True)
class StatisticSpec:
    """Which per-point statistic ``G`` to rank by.

    ``eps_count`` is minus the number of neighbors within ``eps``;
    ``lnn_distance`` the ``l``-th nearest-neighbor distance;
    ``avg_lnn_distance`` the mean of the ``l - (l-1)//2``-th through
    ``l + l//2``-th neighbor distances, optionally weighted by ``(l/i)^(1/d)``.
    """

    kind: str = "avg_lnn_distance"
    l: int = 50
    eps: float | None = None
    weighted: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}; choose from {KINDS}")
        if self.kind == "eps_count":
            if self.eps is None:
                raise ValueError("eps_count requires eps")
            check_positive(self.eps, "eps")
        else:
            check_positive_int(self.l, "l")

    @property
    def window(self) -> tuple[int, int]:
        """1-based inclusive range of neighbor orders the statistic reads."""
        if self.kind == "lnn_distance":
            return self.l, self.l
        return self.l - (self.l - 1) // 2, self.l + self.l // 2

    @property
    def max_order(self) -> int:
        return 0 if self.kind == "eps_count" else self.window[1]

    def to_dict(self) -> dict:
        return {"kind": self.kind, "l": self.l, "eps": self.eps, "weighted": self.weighted}


def theory_l(m: int) -> int:
    """Neighbor order of the order of ``sqrt(m)`` for a reference set of size ``m``."""
    return max(1, math.ceil(math.sqrt(m)))


@dataclass
class RankVector:
    values: np.ndarray
    statistic: StatisticSpec
    resampled: bool = False
    b: int = 1

    def __len__(self) -> int:
        return self.values.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def to_csv(self, path) -> None:
        """Write ``index,rank`` rows."""
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "rank"])
            for i, r in enumerate(self.values):
                w.writerow([i, repr(float(r))])


def _from_distances(D: np.ndarray, spec: StatisticSpec, dim: int, n_ref: int) -> np.ndarray:
    """Statistic of each row of a query-to-reference distance matrix.

    ``n_ref`` is the number of usable (finite) references per row.
    """
    if spec.kind == "eps_count":
        return -np.count_nonzero(D <= spec.eps, axis=1).astype(float)
    lo, hi = spec.window
    if hi > n_ref:
        raise ValueError(
            f"statistic needs the {hi}-th neighbor but the reference set has {n_ref} points")
    orders = np.arange(lo, hi + 1)
    nn = order_statistics(D, orders)
    if spec.kind == "lnn_distance":
        return nn[:, 0]
    if spec.weighted:
        nn = nn * (spec.l / orders) ** (1.0 / dim)
    return nn.sum(axis=1) / spec.l


def statistics_against(queries, refset, spec: StatisticSpec, *, same: bool = False) -> np.ndarray:
    """Statistic of every query point against ``refset``.

    ``same=True`` means the queries are the reference points themselves and
    each point's own entry is excluded.
    """
    Q = as_points(queries)
    R = as_points(refset)
    D = pairwise_distances(Q, R)
    if same:
        np.fill_diagonal(D, np.inf)
    return _from_distances(D, spec, R.shape[1], R.shape[0] - int(same))


def statistic(u, refset, spec: StatisticSpec) -> float:
    """Statistic ``G(u)`` measured against ``refset``.

    If ``u`` coincides exactly with a member of ``refset`` one such copy is
    skipped, so ``statistic(X[i], X, spec)`` equals the in-sample value that
    :func:`rank_all` uses.
    """
    R = as_points(refset)
    u = np.asarray(u, dtype=float).reshape(1, -1)
    if u.shape[1] != R.shape[1]:
        raise ValueError(f"point has dimension {u.shape[1]}, reference set {R.shape[1]}")
    D = pairwise_distances(u, R)
    hit = np.flatnonzero(D[0] == 0.0)
    if hit.size:
        D[0, hit[0]] = np.inf
    return float(_from_distances(D, spec, R.shape[1], R.shape[0] - int(hit.size > 0))[0])


def _ranks_within(G: np.ndarray, ref: np.ndarray | None = None) -> np.ndarray:
    """``mean_i 1{G(u) <= ref_i}`` for every entry of ``G``."""
    ref = G if ref is None else ref
    s = np.sort(ref)
    return (s.size - np.searchsorted(s, G, side="left")) / s.size


def rank_all(ds, spec: StatisticSpec | None = None) -> RankVector:
    """Rank every point within the full sample, self-comparison included."""
    spec = spec or StatisticSpec()
    X = as_points(ds, min_samples=2)
    G = statistics_against(X, X, spec, same=True)
    return RankVector(_ranks_within(G), spec, resampled=False, b=1)


def rank_ustat(ds, spec: StatisticSpec | None = None, b: int = 10, seed=None) -> RankVector:
    """Rank by repeated half-splits, averaging ``b`` rounds.

    Each round splits the sample into two equal halves; every point's
    statistic is measured against the opposite half and ranked within its own
    half. With odd ``n`` one uniformly chosen point sits out of the split; it
    still receives a rank for that round, computed the same way as a member
    of the first half.
    """
    spec = spec or StatisticSpec()
    X = as_points(ds, min_samples=4)
    b = check_positive_int(b, "b")
    rng = check_seed(seed)
    n = X.shape[0]
    m = n // 2
    total = np.zeros(n)
    for _ in range(b):
        perm = rng.permutation(n)
        h1, h2 = perm[:m], perm[m:2 * m]
        g1 = statistics_against(X[h1], X[h2], spec)
        g2 = statistics_against(X[h2], X[h1], spec)
        total[h1] += _ranks_within(g1)
        total[h2] += _ranks_within(g2)
        if n % 2:
            spare = perm[2 * m:]
            gs = statistics_against(X[spare], X[h2], spec)
            total[spare] += _ranks_within(gs, g1)
    return RankVector(total / b, spec, resampled=True, b=b)


class PValueTable:
    """Monte Carlo p-values ``P(f(X) <= f(u))`` for a Gaussian mixture.

    Density values of ``mc_samples`` draws are sorted once; each query is
    then a binary search. A one-dimensional single Gaussian uses the closed
    form ``2 * Phi(-|u - mu| / sigma)`` instead.
    """

    def __init__(self, spec: MixtureSpec, mc_samples: int = 200_000, seed=0):
        self.spec = spec
        check_positive_int(mc_samples, "mc_samples")
        self.analytic = spec.dim == 1 and int(np.count_nonzero(spec.weights > 0)) == 1
        if self.analytic:
            k = int(np.flatnonzero(spec.weights > 0)[0])
            self._mu = float(spec.means[k, 0])
            self._sd = float(np.sqrt(spec.covs[k, 0, 0]))
            self._sorted = None
        else:
            X, _ = spec.sample(mc_samples, check_seed(seed))
            self._sorted = np.sort(spec.pdf(X))

    def __call__(self, points) -> np.ndarray:
        P = np.asarray(points, dtype=float).reshape(-1, self.spec.dim)
        if self.analytic:
            return 2.0 * stats.norm.cdf(-np.abs(P[:, 0] - self._mu) / self._sd)
        f = self.spec.pdf(P)
        return np.searchsorted(self._sorted, f, side="right") / self._sorted.size


def pvalue_oracle(u, spec: MixtureSpec, mc_samples: int = 200_000, seed=0) -> float:
    """p-value of a single point under ``spec`` (see :class:`PValueTable`)."""
    return float(PValueTable(spec, mc_samples, seed)(u)[0])
