"""scikit-learn compatible estimators wrapping the functional API.

All estimators take plain constructor parameters (so ``get_params``,
``set_params``, ``clone`` and grid search work) and expose fitted state in
trailing-underscore attributes.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_labels, as_points
from .dataset import LabeledSplit
from .learn import CvConfig, cross_validate, divisive_cluster, grf, gtam, spectral_clustering
from .rank import StatisticSpec, _ranks_within, statistics_against
from .recipes import GraphRecipe

__all__ = [
    "RankEstimator",
    "GraphBuilder",
    "RMDSpectralClustering",
    "DivisiveSpectralClustering",
    "GRFClassifier",
    "GTAMClassifier",
]


class RankEstimator(TransformerMixin, BaseEstimator):
    """Empirical density ranks of the training points.

    ``fit_transform(X)`` returns the rank of every point (averaged over
    ``resamples`` half-splits, or in-sample when ``resamples=0``).
    ``transform(Z)`` ranks new points against the training sample.
    """

    def __init__(self, statistic="avg_lnn_distance", l=50, eps=None, weighted=False,
                 resamples=10, random_state=None):
        self.statistic = statistic
        self.l = l
        self.eps = eps
        self.weighted = weighted
        self.resamples = resamples
        self.random_state = random_state

    def _spec(self) -> StatisticSpec:
        return StatisticSpec(self.statistic, self.l, self.eps, self.weighted)

    def fit(self, X, y=None):
        X = as_points(X, min_samples=2)
        recipe = GraphRecipe(statistic=self._spec(), resamples=self.resamples)
        rv = recipe.ranks(X, self.random_state)
        self.ranks_ = rv.values
        self.statistic_ = rv.statistic  # l may have been capped to fit the sample
        self.X_fit_ = X
        self.statistics_ = statistics_against(X, X, self.statistic_, same=True)
        self.n_features_in_ = X.shape[1]
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).ranks_.reshape(-1, 1)

    def transform(self, X):
        check_is_fitted(self, "ranks_")
        Z = as_points(X)
        if Z.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {Z.shape[1]} features, expected {self.n_features_in_}")
        G = statistics_against(Z, self.X_fit_, self.statistic_)
        return _ranks_within(G, self.statistics_).reshape(-1, 1)


class _GraphParams(BaseEstimator):
    """Shared graph-construction parameters."""

    def _recipe(self, scheme=None) -> GraphRecipe:
        return GraphRecipe(kind=self.graph, k=self.k, scheme=scheme or self._first_scheme(),
                           statistic=StatisticSpec("avg_lnn_distance", self.l),
                           resamples=self.resamples, construction=self.construction,
                           eps=self.eps, sigma=self.sigma, weights=self.weights)

    def _first_scheme(self):
        s = self.scheme
        return s if isinstance(s, str) or not isinstance(s, (list, tuple)) else s[0]


class GraphBuilder(TransformerMixin, _GraphParams):
    """Build a graph over the training points.

    ``fit_transform(X)`` returns the sparse adjacency matrix; the full
    :class:`~rmdgraph.graph.SparseGraph` is kept in ``graph_``.
    """

    def __init__(self, graph="rmd", k=30, scheme="b", l=50, resamples=10, construction="nn",
                 eps=None, sigma=None, weights="binary", random_state=None):
        self.graph = graph
        self.k = k
        self.scheme = scheme
        self.l = l
        self.resamples = resamples
        self.construction = construction
        self.eps = eps
        self.sigma = sigma
        self.weights = weights
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_points(X, min_samples=2)
        self.graph_ = self._recipe().build(X, self.random_state)
        self.adjacency_ = self.graph_.W
        self.n_features_in_ = X.shape[1]
        self._fit_shape = X.shape
        return self

    def transform(self, X):
        check_is_fitted(self, "graph_")
        if as_points(X).shape != self._fit_shape:
            raise ValueError("graphs are transductive: transform only accepts the training points")
        return self.adjacency_

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).adjacency_


class RMDSpectralClustering(ClusterMixin, _GraphParams):
    """Spectral clustering on a rank-modulated (or baseline) graph.

    When ``graph="rmd"`` and ``scheme`` lists several schemes, each is tried
    and the minimum-Cut result among those without tiny clusters is kept
    (``cv_results_`` holds all of them).
    """

    def __init__(self, n_clusters=2, graph="rmd", k=30, scheme=("a", "b", "c"), l=50,
                 resamples=10, construction="nn", eps=None, sigma=None, weights="binary",
                 normalized=False, min_cluster_fraction=0.05, random_state=0):
        self.n_clusters = n_clusters
        self.graph = graph
        self.k = k
        self.scheme = scheme
        self.l = l
        self.resamples = resamples
        self.construction = construction
        self.eps = eps
        self.sigma = sigma
        self.weights = weights
        self.normalized = normalized
        self.min_cluster_fraction = min_cluster_fraction
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_points(X, min_samples=2)
        seed = self.random_state
        schemes = [self.scheme] if isinstance(self.scheme, str) else list(self.scheme)
        if self.graph == "rmd" and len(schemes) > 1:
            cfg = CvConfig(schemes=schemes, min_cluster_fraction=self.min_cluster_fraction,
                           recipe=self._recipe(schemes[0]))
            best, results = cross_validate(X, cfg, "sc", seed, n_clusters=self.n_clusters)
            self.labels_ = best.assignment
            self.scheme_ = best.scheme
            self.cv_results_ = [r.to_dict() for r in results]
        else:
            g = self._recipe(schemes[0]).build(X, seed)
            self.labels_ = spectral_clustering(g, self.n_clusters, self.normalized, seed).assignment
            self.scheme_ = schemes[0] if self.graph == "rmd" else None
            self.cv_results_ = []
        self.n_features_in_ = X.shape[1]
        return self


class DivisiveSpectralClustering(ClusterMixin, _GraphParams):
    """Top-down clustering: repeatedly split the part with the smallest tentative RatioCut."""

    def __init__(self, n_clusters=4, graph="rmd", k=30, scheme="b", l=50, resamples=10,
                 construction="nn", eps=None, sigma=None, weights="binary",
                 min_cluster_size=None, random_state=0):
        self.n_clusters = n_clusters
        self.graph = graph
        self.k = k
        self.scheme = scheme
        self.l = l
        self.resamples = resamples
        self.construction = construction
        self.eps = eps
        self.sigma = sigma
        self.weights = weights
        self.min_cluster_size = min_cluster_size
        self.random_state = random_state

    def fit(self, X, y=None):
        X = as_points(X, min_samples=2)
        part, history = divisive_cluster(X, self.n_clusters, self._recipe(), self.random_state,
                                         min_cluster_size=self.min_cluster_size,
                                         return_history=True)
        self.labels_ = part.assignment
        self.splits_ = history
        self.n_features_in_ = X.shape[1]
        return self


class _Transductive(ClassifierMixin, _GraphParams):
    """Semi-supervised base: ``y == -1`` marks unlabeled points."""

    def _solve(self, g, split, y_dense, n_classes):
        raise NotImplementedError

    def fit(self, X, y):
        X = as_points(X, min_samples=2)
        y = np.asarray(y)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        labeled = y != -1
        if not labeled.any():
            raise ValueError("at least one point must be labeled (y != -1)")
        self.classes_, y_dense = np.unique(y[labeled], return_inverse=True)
        full = np.full(X.shape[0], -1, dtype=np.int64)
        full[labeled] = y_dense
        split = LabeledSplit(np.flatnonzero(labeled), np.flatnonzero(~labeled))
        g = self._recipe().build(X, self.random_state)
        out = self._solve(g, split, as_labels(full[labeled]), self.classes_.size)
        self.graph_ = g
        self.label_distributions_ = out.scores
        self.transduction_ = self.classes_[out.hard]
        self.fallback_ = out.fallback
        self.n_features_in_ = X.shape[1]
        self._X_fit = X
        return self

    def predict(self, X):
        check_is_fitted(self, "transduction_")
        Z = as_points(X)
        if Z.shape != self._X_fit.shape or not np.array_equal(Z, self._X_fit):
            raise ValueError("transductive model: predict only accepts the training points")
        return self.transduction_

    def predict_proba(self, X):
        self.predict(X)
        P = np.clip(self.label_distributions_, 0.0, None)
        s = P.sum(axis=1, keepdims=True)
        return np.divide(P, s, out=np.full_like(P, 1.0 / P.shape[1]), where=s > 0)


class GRFClassifier(_Transductive):
    """Harmonic-function label propagation on a graph built from ``X``."""

    def __init__(self, graph="rmd", k=30, scheme="b", l=50, resamples=10, construction="nn",
                 eps=None, sigma=None, weights="binary", tol=1e-10, random_state=0):
        self.graph = graph
        self.k = k
        self.scheme = scheme
        self.l = l
        self.resamples = resamples
        self.construction = construction
        self.eps = eps
        self.sigma = sigma
        self.weights = weights
        self.tol = tol
        self.random_state = random_state

    def _solve(self, g, split, y_l, n_classes):
        return grf(g, split, y_l, self.tol, n_classes=n_classes)


class GTAMClassifier(_Transductive):
    """Graph transduction by alternating minimization on a graph built from ``X``."""

    def __init__(self, graph="rmd", k=30, scheme="b", l=50, resamples=10, construction="nn",
                 eps=None, sigma=None, weights="binary", mu=0.05, max_iters=None,
                 random_state=0):
        self.graph = graph
        self.k = k
        self.scheme = scheme
        self.l = l
        self.resamples = resamples
        self.construction = construction
        self.eps = eps
        self.sigma = sigma
        self.weights = weights
        self.mu = mu
        self.max_iters = max_iters
        self.random_state = random_state

    def _solve(self, g, split, y_l, n_classes):
        return gtam(g, split, y_l, self.mu, self.max_iters, self.random_state,
                    n_classes=n_classes)
