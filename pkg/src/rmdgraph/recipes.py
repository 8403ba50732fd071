"""Declarative graph recipes: one object that knows how to build any graph kind.

Used by the divisive clustering loop (which rebuilds a graph on every part),
by cross-validation and by the command-line pipelines.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._validation import as_points, check_positive_int
from .graph import (
    DegreeScheme,
    SparseGraph,
    apply_weights,
    bmatching_graph,
    degree_profile,
    eps_graph,
    full_rbf_graph,
    knn_graph,
    mean_knn_distance,
    rmd_graph_nn,
    rmd_graph_opt,
    scheme,
)
from .rank import StatisticSpec, rank_all, rank_ustat

__all__ = ["GraphRecipe", "GRAPH_KINDS"]

GRAPH_KINDS = ("knn", "eps", "full_rbf", "bmatch", "rmd")


@dataclass
class GraphRecipe:
    """Parameters for building one graph over a point set.

    Parameters
    ----------
    kind : {"knn", "eps", "full_rbf", "bmatch", "rmd"}
    k : int
        Neighbor count, or average degree for ``bmatch`` and ``rmd``.
    scheme : str or DegreeScheme
        Degree scheme for ``rmd``; a preset name is resolved with ``k``.
    statistic : StatisticSpec
        Statistic whose ranks drive ``rmd`` degrees. ``l`` is capped at what
        the reference set can supply.
    resamples : int
        Half-split rounds for the ranks; 0 ranks within the full sample.
    construction : {"nn", "opt"}
        ``rmd`` by the neighbor OR-rule or by degree-constrained matching.
    eps, sigma : float, optional
        Radius for ``eps`` and bandwidth for ``full_rbf``/RBF weights. Both
        default to the mean k-th nearest-neighbor distance.
    weights : {"binary", "rbf"}
    """

    kind: str = "rmd"
    k: int = 30
    scheme: object = "b"
    statistic: StatisticSpec = field(default_factory=StatisticSpec)
    resamples: int = 10
    construction: str = "nn"
    eps: float | None = None
    sigma: float | None = None
    weights: str = "binary"

    def __post_init__(self):
        if self.kind not in GRAPH_KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}; choose from {GRAPH_KINDS}")
        check_positive_int(self.k, "k")
        if self.construction not in ("nn", "opt"):
            raise ValueError(f"construction must be 'nn' or 'opt', got {self.construction!r}")
        if self.weights not in ("binary", "rbf"):
            raise ValueError(f"weights must be 'binary' or 'rbf', got {self.weights!r}")
        if isinstance(self.statistic, dict):
            self.statistic = StatisticSpec(**self.statistic)
        if isinstance(self.scheme, dict):
            self.scheme = DegreeScheme.from_dict({"k": self.k, **self.scheme})

    @property
    def degree_scheme(self) -> DegreeScheme:
        if isinstance(self.scheme, DegreeScheme):
            return self.scheme.with_k(self.k)
        return scheme(self.scheme, self.k)

    @property
    def scheme_name(self) -> str | None:
        if self.kind != "rmd":
            return None
        return self.scheme if isinstance(self.scheme, str) else (self.scheme.name or "custom")

    def with_scheme(self, s) -> "GraphRecipe":
        return replace(self, scheme=s)

    def ranks(self, X: np.ndarray, seed=None):
        n = X.shape[0]
        spec = self.statistic
        avail = n // 2 if self.resamples else n - 1
        if spec.kind != "eps_count" and spec.max_order > avail:
            # shrink l so the window fits inside the available reference set
            l = spec.l
            while l > 1 and StatisticSpec(spec.kind, l, spec.eps, spec.weighted).max_order > avail:
                l -= 1
            spec = StatisticSpec(spec.kind, l, spec.eps, spec.weighted)
        if self.resamples:
            return rank_ustat(X, spec, b=self.resamples, seed=seed)
        return rank_all(X, spec)

    def build(self, ds, seed=None, ranks=None) -> SparseGraph:
        """Build the graph over ``ds``.

        ``seed`` drives rank resampling; precomputed ``ranks`` skip it, which
        lets several RMD schemes share one rank computation.
        """
        X = as_points(ds, min_samples=2)
        n = X.shape[0]
        k = min(self.k, n - 1)
        if self.kind == "knn":
            g = knn_graph(X, k)
        elif self.kind == "eps":
            g = eps_graph(X, self.eps if self.eps is not None else mean_knn_distance(X, k))
        elif self.kind == "full_rbf":
            sigma = self.sigma if self.sigma is not None else mean_knn_distance(X, k)
            return full_rbf_graph(X, sigma)
        elif self.kind == "bmatch":
            g = bmatching_graph(X, k if (n * k) % 2 == 0 else k - 1)
        else:
            r = self.ranks(X, seed) if ranks is None else ranks
            prof = degree_profile(r, self.degree_scheme.with_k(k))
            prof.degrees = np.minimum(prof.degrees, n - 1)
            g = rmd_graph_nn(X, prof) if self.construction == "nn" else rmd_graph_opt(X, prof)
        if self.weights == "rbf":
            g = apply_weights(g, "rbf", X, self.sigma, k)
        return g

    def to_dict(self) -> dict:
        d = asdict(self)
        d["statistic"] = self.statistic.to_dict()
        if isinstance(self.scheme, DegreeScheme):
            d["scheme"] = self.scheme.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "GraphRecipe":
        return cls(**d)
