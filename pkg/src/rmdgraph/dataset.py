"""Point-cloud datasets: synthetic generators, CSV ingestion and splits.

The synthetic scenes reproduce the unbalanced, proximal cluster layouts used to
motivate rank-modulated graphs: a two-component Gaussian mixture with an
85/15 split, a two-Gaussian-plus-crescent scene with a planted outlier, and a
four-cluster chain for divisive clustering.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy import stats
from sklearn.preprocessing import StandardScaler

from ._validation import as_points, check_positive_int, check_seed

__all__ = [
    "DataFormatError",
    "DataSet",
    "MixtureSpec",
    "LabeledSplit",
    "gen_mixture",
    "gen_banana_scene",
    "gen_blobs",
    "load_csv",
    "save_csv",
    "subsample_unbalanced",
    "make_labeled_split",
    "two_gaussian_spec",
    "unbalanced_pair_spec",
    "hierarchy_spec",
    "density_valleys",
]


class DataFormatError(ValueError):
    """Raised when a CSV file cannot be turned into a :class:`DataSet`."""

    def __init__(self, message: str, row: int | None = None, column: str | None = None):
        super().__init__(message)
        self.row = row
        self.column = column


@dataclass
class DataSet:
    """``n`` points in ``d`` dimensions with optional dense class ids.

    ``classes`` records the original label value for each dense id, so that
    a file labelled ``8``/``9`` keeps those names while ``labels`` is ``0``/``1``.
    """

    points: np.ndarray
    labels: np.ndarray | None = None
    classes: list | None = None

    def __post_init__(self):
        self.points = as_points(self.points, min_samples=2, name="points")
        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (self.points.shape[0],):
                raise ValueError(
                    f"labels must have shape ({self.points.shape[0]},), got {labels.shape}")
            if labels.size and (not np.issubdtype(labels.dtype, np.integer) or labels.min() < 0):
                raise ValueError("labels must be non-negative integer class ids")
            self.labels = labels.astype(np.int64)
            if self.classes is None:
                self.classes = list(range(int(self.labels.max()) + 1))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def n_classes(self) -> int:
        if self.labels is None:
            return 0
        return int(self.labels.max()) + 1

    def __len__(self) -> int:
        return self.size

    def __array__(self, dtype=None, copy=None):
        return self.points if dtype is None else self.points.astype(dtype)

    def standardized(self) -> "DataSet":
        """Copy with every feature centred and scaled to unit variance.

        Constant features are centred only. Labels and class names carry over.
        """
        return DataSet(StandardScaler().fit_transform(self.points), self.labels, self.classes)

    def subset(self, idx) -> "DataSet":
        idx = np.asarray(idx)
        labels = None if self.labels is None else self.labels[idx]
        return DataSet(self.points[idx], labels, self.classes)


@dataclass
class MixtureSpec:
    """Gaussian mixture ``sum_i weight_i N(mean_i, cov_i)``."""

    weights: np.ndarray
    means: np.ndarray
    covs: np.ndarray
    _chol: list = field(init=False, repr=False)

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=float))
        self.means = np.asarray(self.means, dtype=float)
        if self.means.ndim == 1:
            # one mean per component in 1-D
            self.means = self.means.reshape(-1, 1)
        c, d = self.means.shape
        covs = np.asarray(self.covs, dtype=float)
        if covs.ndim == 1:
            covs = covs.reshape(c, 1, 1)
        self.covs = covs
        if self.weights.shape != (c,):
            raise ValueError(f"expected {c} weights, got {self.weights.shape[0]}")
        if self.covs.shape != (c, d, d):
            raise ValueError(f"covariances must have shape {(c, d, d)}, got {self.covs.shape}")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights must be non-negative and sum to 1, got {self.weights}")
        self._chol = []
        for i, cov in enumerate(self.covs):
            if not np.allclose(cov, cov.T, rtol=0, atol=1e-12):
                raise ValueError(f"covariance {i} is not symmetric")
            try:
                self._chol.append(np.linalg.cholesky(cov))
            except np.linalg.LinAlgError:
                raise ValueError(f"covariance {i} is not positive definite") from None

    @classmethod
    def from_components(cls, components: Sequence[tuple]) -> "MixtureSpec":
        """Build from ``[(weight, mean, cov), ...]``."""
        weights = [c[0] for c in components]
        means = [np.atleast_1d(np.asarray(c[1], dtype=float)) for c in components]
        d = means[0].shape[0]
        covs = [np.asarray(c[2], dtype=float).reshape(d, d) for c in components]
        return cls(np.array(weights), np.array(means), np.array(covs))

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def pdf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float).reshape(-1, self.dim)
        out = np.zeros(X.shape[0])
        for w, mu, cov in zip(self.weights, self.means, self.covs):
            if w > 0:
                out += w * stats.multivariate_normal.pdf(X, mu, cov).reshape(-1)
        return out

    def sample(self, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        comp = rng.choice(self.n_components, size=n, p=self.weights)
        z = rng.standard_normal((n, self.dim))
        X = np.empty((n, self.dim))
        for i in range(self.n_components):
            mask = comp == i
            X[mask] = self.means[i] + z[mask] @ self._chol[i].T
        return X, comp

    def marginal_pdf(self, x, axis: int = 0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        sd = np.sqrt(self.covs[:, axis, axis])
        return sum(w * stats.norm.pdf(x, m, s)
                   for w, m, s in zip(self.weights, self.means[:, axis], sd))

    def marginal_cdf(self, x, axis: int = 0) -> np.ndarray:
        """Mass of the half-space ``x_axis <= x``."""
        x = np.asarray(x, dtype=float)
        sd = np.sqrt(self.covs[:, axis, axis])
        return sum(w * stats.norm.cdf(x, m, s)
                   for w, m, s in zip(self.weights, self.means[:, axis], sd))

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "means": self.means.tolist(),
                "covs": self.covs.tolist()}

    @classmethod
    def from_dict(cls, data: Mapping) -> "MixtureSpec":
        return cls(np.array(data["weights"]), np.array(data["means"]), np.array(data["covs"]))


@dataclass(frozen=True)
class LabeledSplit:
    labeled_ids: np.ndarray
    unlabeled_ids: np.ndarray

    def mask(self, n: int) -> np.ndarray:
        m = np.zeros(n, dtype=bool)
        m[self.labeled_ids] = True
        return m


def two_gaussian_spec(minority: float = 0.15) -> MixtureSpec:
    """The proximal two-Gaussian mixture; ``minority`` is the weight at ``[-0.5, 0]``."""
    return MixtureSpec(
        np.array([1.0 - minority, minority]),
        np.array([[4.5, 0.0], [-0.5, 0.0]]),
        np.array([np.diag([2.0, 1.0]), np.eye(2)]),
    )


def unbalanced_pair_spec(minority: float = 0.15, separation: float = 4.0) -> MixtureSpec:
    """Two-Gaussian pair for unbalancedness sweeps.

    Same shapes as :func:`two_gaussian_spec` (``diag(2, 1)`` majority,
    identity minority at the origin) with the majority centered at
    ``[separation, 0]``; the default makes the pair a little more proximal.
    """
    if not 0.0 < minority < 1.0:
        raise ValueError(f"minority weight must lie in (0, 1), got {minority}")
    return MixtureSpec(
        np.array([1.0 - minority, minority]),
        np.array([[separation, 0.0], [0.0, 0.0]]),
        np.array([np.diag([2.0, 1.0]), np.eye(2)]),
    )


def hierarchy_spec() -> MixtureSpec:
    """Four proximal, unbalanced clusters chained along the first axis.

    Every binary split of a contiguous run of clusters is unbalanced, so a
    divisive scheme faces a skewed cut at each step.
    """
    weights = np.array([0.08, 0.17, 0.30, 0.45])
    means = np.array([[0.0, 0.0], [4.0, 0.0], [8.5, 0.0], [13.5, 0.0]])
    covs = np.array([np.diag([0.5, 1.0]), np.diag([0.7, 1.0]),
                     np.diag([1.0, 1.0]), np.diag([1.2, 1.0])])
    return MixtureSpec(weights, means, covs)


def density_valleys(spec: MixtureSpec, axis: int = 0, grid: int = 20001) -> np.ndarray:
    """Local minima of the mixture's marginal density along ``axis``."""
    mu = spec.means[:, axis]
    sd = np.sqrt(spec.covs[:, axis, axis])
    xs = np.linspace((mu - 4 * sd).min(), (mu + 4 * sd).max(), grid)
    f = spec.marginal_pdf(xs, axis)
    inner = (f[1:-1] < f[:-2]) & (f[1:-1] <= f[2:])
    return xs[1:-1][inner]


def gen_mixture(spec: MixtureSpec, n: int, seed=None) -> DataSet:
    """Draw ``n`` i.i.d. points; labels are the generating component index."""
    check_positive_int(n, "n", minimum=2)
    rng = check_seed(seed)
    X, comp = spec.sample(n, rng)
    return DataSet(X, comp.astype(np.int64), list(range(spec.n_components)))


def gen_blobs(centers, counts, scale: float = 0.3, seed=None) -> DataSet:
    """Isotropic Gaussian blobs with ``counts[i]`` points around ``centers[i]``."""
    rng = check_seed(seed)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    counts = [check_positive_int(c, "count") for c in counts]
    if len(counts) != centers.shape[0]:
        raise ValueError("one count per center is required")
    X = np.concatenate([c + scale * rng.standard_normal((m, centers.shape[1]))
                        for c, m in zip(centers, counts)])
    y = np.repeat(np.arange(len(counts)), counts)
    return DataSet(X, y)


def gen_banana_scene(n_per_cluster=(150, 150, 150), outliers=((10.0, 10.0),), seed=None,
                     *, radius: float = 3.0, center=(1.0, 0.5), noise: float = 0.35) -> DataSet:
    """Two Gaussian blobs next to a crescent, plus hand-placed outliers.

    The crescent is the lower half-circle of ``radius`` around ``center`` with
    isotropic Gaussian noise. Outliers take the label of their nearest point.
    """
    counts = [check_positive_int(c, "cluster count") for c in n_per_cluster]
    if len(counts) != 3:
        raise ValueError("n_per_cluster must give three counts (blob, blob, crescent)")
    rng = check_seed(seed)
    cx, cy = center
    blob_a = np.array([cx - 1.2, cy + 0.6]) + 0.6 * rng.standard_normal((counts[0], 2))
    blob_b = np.array([cx + 1.6, cy + 1.8]) + 0.6 * rng.standard_normal((counts[1], 2))
    theta = rng.uniform(np.pi, 2 * np.pi, counts[2])
    arc = np.column_stack([cx + radius * np.cos(theta), cy + radius * np.sin(theta)])
    arc += noise * rng.standard_normal(arc.shape)
    X = np.concatenate([blob_a, blob_b, arc])
    y = np.repeat(np.arange(3), counts)
    out = np.asarray(outliers, dtype=float).reshape(-1, 2)
    if out.shape[0]:
        nearest = np.argmin(((out[:, None, :] - X[None, :, :]) ** 2).sum(-1), axis=1)
        X = np.concatenate([X, out])
        y = np.concatenate([y, y[nearest]])
    return DataSet(X, y)


def load_csv(path, label_column: str | None = None) -> DataSet:
    """Read a headered CSV of numeric features and an optional label column.

    Label values (strings or integers) are mapped to dense ids in order of
    first appearance; the original values are kept in ``DataSet.classes``.
    Data rows are numbered from 1 in error messages.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise DataFormatError(f"{path}: file is empty")
    header = [h.strip() for h in rows[0]]
    body = rows[1:]
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    if label_column is not None and label_column not in header:
        raise DataFormatError(f"{path}: label column {label_column!r} not in header {header}",
                              column=label_column)
    label_idx = header.index(label_column) if label_column is not None else None
    feature_idx = [j for j in range(len(header)) if j != label_idx]
    X = np.empty((len(body), len(feature_idx)))
    raw_labels = []
    for r, row in enumerate(body, start=1):
        if len(row) != len(header):
            raise DataFormatError(
                f"{path}: row {r} has {len(row)} fields, expected {len(header)}", row=r)
        for out_j, j in enumerate(feature_idx):
            try:
                X[r - 1, out_j] = float(row[j])
            except ValueError:
                raise DataFormatError(
                    f"{path}: row {r}, column {header[j]}: non-numeric value {row[j]!r}",
                    row=r, column=header[j]) from None
        if label_idx is not None:
            raw_labels.append(row[label_idx].strip())
    if not np.all(np.isfinite(X)):
        raise DataFormatError(f"{path}: non-finite feature values")
    if label_idx is None:
        return DataSet(X)
    ids: dict[str, int] = {}
    labels = np.array([ids.setdefault(v, len(ids)) for v in raw_labels], dtype=np.int64)
    classes = list(ids)
    if all(_is_int(v) for v in classes):
        classes = [int(v) for v in classes]
    return DataSet(X, labels, classes)


def _is_int(text: str) -> bool:
    try:
        int(text)
    except ValueError:
        return False
    return True


def save_csv(ds: DataSet, path, label_column: str = "label", feature_names=None) -> None:
    """Write ``ds`` in the dialect read by :func:`load_csv`."""
    names = list(feature_names) if feature_names else [f"x{j + 1}" for j in range(ds.dim)]
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(names + ([label_column] if ds.labels is not None else []))
        for i in range(ds.size):
            row = [repr(float(v)) for v in ds.points[i]]
            if ds.labels is not None:
                row.append(ds.classes[ds.labels[i]])
            writer.writerow(row)


def _class_id(ds: DataSet, cls) -> int:
    if cls in ds.classes:
        return ds.classes.index(cls)
    # tolerate "8" vs 8 between JSON configs and parsed files
    for i, c in enumerate(ds.classes):
        if str(c) == str(cls):
            return i
    raise ValueError(f"class {cls!r} not present; available: {ds.classes}")


def subsample_unbalanced(ds: DataSet, per_class: Mapping, seed=None) -> DataSet:
    """Draw ``per_class[c]`` points of each class without replacement.

    Keys are original class values (as in ``ds.classes``). The result keeps
    the original point order and relabels the selected classes densely in
    the order of ``per_class``.
    """
    if ds.labels is None:
        raise ValueError("subsample_unbalanced requires a labelled dataset")
    rng = check_seed(seed)
    chosen = []
    new_ids = np.full(ds.n_classes, -1)
    for new, (cls, count) in enumerate(per_class.items()):
        cid = _class_id(ds, cls)
        members = np.flatnonzero(ds.labels == cid)
        count = check_positive_int(count, f"count for class {cls!r}")
        if count > members.size:
            raise ValueError(
                f"requested {count} points of class {cls!r} but only {members.size} exist")
        chosen.append(rng.choice(members, size=count, replace=False))
        new_ids[cid] = new
    idx = np.sort(np.concatenate(chosen))
    classes = [ds.classes[_class_id(ds, c)] for c in per_class]
    return DataSet(ds.points[idx], new_ids[ds.labels[idx]], classes)


def make_labeled_split(ds: DataSet, num_labeled: int, seed=None,
                       max_tries: int = 1000) -> LabeledSplit:
    """Uniformly random labelled subset conditioned on covering every class.

    Rejection sampling keeps the draw uniform over admissible subsets; if the
    classes are so skewed that ``max_tries`` draws all miss a class, one
    point per class is forced and the rest are drawn uniformly.
    """
    if ds.labels is None:
        raise ValueError("make_labeled_split requires a labelled dataset")
    n = ds.size
    present = np.unique(ds.labels)
    if num_labeled < present.size:
        raise ValueError(f"num_labeled={num_labeled} is smaller than the {present.size} classes")
    if num_labeled > n:
        raise ValueError(f"num_labeled={num_labeled} exceeds dataset size {n}")
    rng = check_seed(seed)
    for _ in range(max_tries):
        ids = rng.choice(n, size=num_labeled, replace=False)
        if np.unique(ds.labels[ids]).size == present.size:
            break
    else:
        forced = np.array([rng.choice(np.flatnonzero(ds.labels == k)) for k in present])
        rest = np.setdiff1d(np.arange(n), forced)
        ids = np.concatenate([forced, rng.choice(rest, num_labeled - forced.size, replace=False)])
    labeled = np.sort(ids)
    unlabeled = np.setdiff1d(np.arange(n), labeled)
    return LabeledSplit(labeled, unlabeled)
