"""Config-driven experiment pipelines.

An experiment config is one JSON document naming a dataset source, the
graph kinds to compare, the learning algorithm and the seeds. Every
(graph kind, seed) run writes ``seed<N>.json``; each sweep point gets an
``aggregate.csv`` and the whole bundle a ``manifest.json`` listing every
file written and every failed run.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
import math
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .cuts import Partition, cut_metrics, hyperplane_sweep
from .dataset import (
    DataSet,
    MixtureSpec,
    gen_banana_scene,
    gen_blobs,
    gen_mixture,
    hierarchy_spec,
    load_csv,
    make_labeled_split,
    subsample_unbalanced,
    two_gaussian_spec,
    unbalanced_pair_spec,
)
from .learn import CvConfig, RunResult, cross_validate, divisive_cluster, error_rate, run_algorithm
from .rank import StatisticSpec
from .recipes import GRAPH_KINDS, GraphRecipe

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "list_presets", "make_dataset",
           "run_experiment", "emit_curves"]

log = logging.getLogger(__name__)

ALGORITHMS = ("sc", "grf", "gtam", "divisive")
NAMED_SPECS = {
    "two_gaussian": two_gaussian_spec,
    "unbalanced_pair": unbalanced_pair_spec,
    "hierarchy": hierarchy_spec,
}


class ConfigError(ValueError):
    """The experiment config is malformed or refers to missing inputs."""


def list_presets() -> list[str]:
    pkg = resources.files("rmdgraph") / "presets"
    return sorted(p.name[:-5] for p in pkg.iterdir() if p.name.endswith(".json"))


def _read_json(text: str, where: str) -> dict:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{where}: invalid JSON ({exc})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: top level must be a JSON object")
    return data


def load_config(ref: str, csv_path: str | None = None) -> "ExperimentConfig":
    """Load a config from a JSON file path or a preset name.

    ``csv_path`` replaces the dataset file of a CSV-backed config before
    validation, so presets can point at user data.
    """
    path = Path(ref)
    if path.suffix == ".json" or path.exists():
        if not path.exists():
            raise ConfigError(f"config file {ref} does not exist")
        data = _read_json(path.read_text(), str(path))
        data.setdefault("name", path.stem)
        base = path.parent
    else:
        res = resources.files("rmdgraph") / "presets" / f"{ref}.json"
        if not res.is_file():
            raise ConfigError(f"unknown preset {ref!r}; available: {', '.join(list_presets())}")
        data = _read_json(res.read_text(), f"preset {ref}")
        data.setdefault("name", ref)
        base = Path.cwd()
    if csv_path is not None:
        if "csv" not in data.get("dataset", {}):
            raise ConfigError("a CSV override only applies to CSV-backed configs")
        data["dataset"]["csv"] = str(Path(csv_path).resolve())
    return ExperimentConfig.from_dict(data, base=base)


@dataclass
class ExperimentConfig:
    name: str
    dataset: dict
    graphs: list
    seeds: list
    algorithm: dict = field(default_factory=lambda: {"name": "sc"})
    k: int = 30
    weights: str = "binary"
    statistic: dict = field(default_factory=lambda: {"kind": "avg_lnn_distance", "l": 50})
    resamples: int = 10
    schemes: list = field(default_factory=lambda: ["a", "b", "c"])
    construction: str = "nn"
    min_cluster_fraction: float = 0.05
    sweep: dict | None = None
    curves: dict = field(default_factory=lambda: {"axis": 0, "grid": 200})

    KEYS = ("name", "dataset", "graphs", "seeds", "algorithm", "k", "weights", "statistic",
            "resamples", "schemes", "construction", "min_cluster_fraction", "sweep", "curves")

    @classmethod
    def from_dict(cls, data: dict, base: Path | None = None) -> "ExperimentConfig":
        data = copy.deepcopy(data)
        unknown = sorted(set(data) - set(cls.KEYS))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        for key in ("dataset", "graphs", "seeds"):
            if key not in data:
                raise ConfigError(f"config is missing {key!r}")
        if isinstance(data["seeds"], int):
            data["seeds"] = list(range(data["seeds"]))
        if isinstance(data.get("algorithm"), str):
            data["algorithm"] = {"name": data["algorithm"]}
        cfg = cls(**data)
        cfg.validate(base or Path.cwd())
        return cfg

    def to_dict(self) -> dict:
        return {k: copy.deepcopy(getattr(self, k)) for k in self.KEYS}

    def validate(self, base: Path) -> None:
        if not self.seeds:
            raise ConfigError("seeds must list at least one seed")
        if not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative integers")
        if not self.graphs:
            raise ConfigError("graphs must list at least one graph kind")
        for gk in self.graphs:
            kind, _, sch = gk.partition(":")
            if kind not in GRAPH_KINDS:
                raise ConfigError(f"unknown graph kind {gk!r}; choose from {GRAPH_KINDS}")
            if sch and kind != "rmd":
                raise ConfigError(f"only rmd graphs take a scheme suffix, got {gk!r}")
        name = self.algorithm.get("name")
        if name not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {name!r}; choose from {ALGORITHMS}")
        if self.weights not in ("binary", "rbf"):
            raise ConfigError(f"weights must be binary or rbf, got {self.weights!r}")
        if not self.schemes:
            raise ConfigError("schemes must not be empty")
        try:
            StatisticSpec(**self.statistic)
            CvConfig(schemes=self.schemes, min_cluster_fraction=self.min_cluster_fraction)
            for s in self.schemes:
                self.recipe("rmd", s)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from None
        ds = self.dataset
        if "csv" in ds:
            p = Path(ds["csv"])
            if not p.is_absolute():
                p = base / p
            if not p.exists():
                raise ConfigError(f"dataset file {ds['csv']} does not exist")
            ds["csv"] = str(p)
        elif ds.get("generator") not in ("mixture", "banana", "blobs"):
            raise ConfigError("dataset needs either 'csv' or a generator "
                              "(mixture, banana or blobs)")
        if self.sweep is not None:
            if len(self.sweep) != 1 or next(iter(self.sweep)) not in ("minority", "subsample"):
                raise ConfigError("sweep must have exactly one key: minority or subsample")
            if not next(iter(self.sweep.values())):
                raise ConfigError("sweep values must not be empty")

    def recipe(self, kind: str, scheme=None) -> GraphRecipe:
        return GraphRecipe(kind=kind, k=self.k, scheme=scheme or self.schemes[0],
                           statistic=StatisticSpec(**self.statistic), resamples=self.resamples,
                           construction=self.construction, weights=self.weights)

    def sweep_points(self) -> list[tuple[str, dict]]:
        """(label, dataset overrides) per sweep point; one unlabeled point without a sweep."""
        if self.sweep is None:
            return [("", {})]
        key, values = next(iter(self.sweep.items()))
        if key == "minority":
            return [(f"minority{v:g}", {"minority": v}) for v in values]
        return [("subsample_" + "_".join(f"{c}-{m}" for c, m in v.items()), {"subsample": v})
                for v in values]


def _mixture_spec(desc) -> MixtureSpec:
    if isinstance(desc, dict):
        return MixtureSpec.from_dict(desc)
    raise ConfigError(f"mixture spec must be a name or a dict, got {desc!r}")


def make_dataset(ds_cfg: dict, seed: int) -> DataSet:
    """Materialize the dataset section of a config for one seed.

    ``"standardize": true`` scales every feature to zero mean and unit
    variance after loading or sampling (and after any subsampling).
    """
    ds = _raw_dataset(dict(ds_cfg), seed)
    return ds.standardized() if ds_cfg.get("standardize") else ds


def _raw_dataset(ds_cfg: dict, seed: int) -> DataSet:
    if "csv" in ds_cfg:
        ds = load_csv(ds_cfg["csv"], ds_cfg.get("label_column"))
        sub = ds_cfg.get("subsample")
        if sub:
            per = {_class_key(c): int(m) for c, m in sub.items()}
            ds = subsample_unbalanced(ds, per, seed)
        return ds
    gen = ds_cfg["generator"]
    n = int(ds_cfg.get("n", 500))
    if gen == "mixture":
        spec = ds_cfg.get("spec", "two_gaussian")
        if isinstance(spec, str):
            if spec not in NAMED_SPECS:
                raise ConfigError(f"unknown mixture {spec!r}; choose from {sorted(NAMED_SPECS)}")
            kwargs = {k: ds_cfg[k] for k in ("minority", "separation") if k in ds_cfg}
            spec = NAMED_SPECS[spec](**kwargs)
        else:
            spec = _mixture_spec(spec)
        return gen_mixture(spec, n, seed)
    if gen == "banana":
        return gen_banana_scene(tuple(ds_cfg.get("n_per_cluster", (150, 150, 150))),
                                tuple(map(tuple, ds_cfg.get("outliers", [[10.0, 10.0]]))), seed)
    return gen_blobs(ds_cfg["centers"], ds_cfg["counts"], ds_cfg.get("scale", 0.3), seed)


def _class_key(c):
    try:
        return int(c)
    except (TypeError, ValueError):
        return c


def _n_clusters(cfg: ExperimentConfig, ds: DataSet) -> int:
    c = cfg.algorithm.get("n_clusters")
    if c is not None:
        return int(c)
    return ds.n_classes if ds.labels is not None else 2


def _one_run(cfg: ExperimentConfig, ds: DataSet, graph_kind: str, seed: int) -> dict:
    algo = cfg.algorithm["name"]
    kind, _, sch = graph_kind.partition(":")
    c = _n_clusters(cfg, ds)
    split = labels = None
    if algo in ("grf", "gtam"):
        if ds.labels is None:
            raise ValueError(f"{algo} needs labeled data")
        split = make_labeled_split(ds, int(cfg.algorithm.get("num_labeled", 20)), seed)
        labels = ds.labels
    mu = float(cfg.algorithm.get("mu", 0.05))
    normalized = bool(cfg.algorithm.get("normalized", False))
    if kind == "rmd" and not sch and len(cfg.schemes) > 1 and algo != "divisive":
        cv = CvConfig(schemes=list(cfg.schemes), min_cluster_fraction=cfg.min_cluster_fraction,
                      recipe=cfg.recipe("rmd"))
        best, results = cross_validate(ds, cv, algo, seed, n_clusters=c, split=split,
                                       labels=labels, mu=mu)
    else:
        recipe = cfg.recipe(kind, sch or None)
        if algo == "divisive":
            out = divisive_cluster(ds, c, recipe, seed)
            g = None
        else:
            g = recipe.build(ds, seed)
            out = run_algorithm(algo, g, n_clusters=c, split=split, labels=labels, seed=seed,
                                mu=mu, normalized=normalized)
        assignment = out.hard if hasattr(out, "hard") else out.assignment
        if g is None:
            g = recipe.build(ds, seed)  # score the final partition on the full-data graph
        rep = cut_metrics(g, Partition(assignment))
        best = RunResult(algo, recipe.scheme_name, seed, out, rep, selected=True)
        results = [best]
    for r in results:
        r.error_rate = error_rate(r.output, ds.labels) if ds.labels is not None else None
    doc = best.to_dict()
    doc["graph"] = graph_kind
    doc["n"] = ds.size
    if len(results) > 1:
        doc["candidates"] = [r.to_dict() for r in results]
    doc["flagged"] = best.flagged
    return doc


def _dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def run_experiment(cfg: ExperimentConfig, out, threads: int = 1) -> dict:
    """Run every (sweep point, graph kind, seed) and write the result bundle.

    Returns the manifest; ``manifest["failures"]`` is empty on full success.
    """
    root = Path(out) / cfg.name
    root.mkdir(parents=True, exist_ok=True)
    written: list[str] = []
    failures: list[dict] = []
    aggregates = []
    for label, overrides in cfg.sweep_points():
        point_dir = root / label if label else root
        ds_cfg = {**cfg.dataset, **overrides}
        jobs = [(gk, s) for gk in cfg.graphs for s in cfg.seeds]
        datasets: dict[int, DataSet] = {}
        for s in cfg.seeds:
            try:
                datasets[s] = make_dataset(ds_cfg, s)
            except Exception as exc:  # recorded in the manifest, other seeds go on
                failures.append({"point": label, "seed": s, "stage": "dataset",
                                 "error": f"{type(exc).__name__}: {exc}"})

        def job(item):
            gk, s = item
            if s not in datasets:
                return gk, s, None, "dataset unavailable"
            try:
                return gk, s, _one_run(cfg, datasets[s], gk, s), None
            except Exception as exc:
                log.debug("run %s seed %s failed:\n%s", gk, s, traceback.format_exc())
                return gk, s, None, f"{type(exc).__name__}: {exc}"

        with ThreadPoolExecutor(max_workers=max(1, int(threads))) as pool:
            outcomes = list(pool.map(job, jobs))
        by_kind: dict[str, list] = {gk: [] for gk in cfg.graphs}
        n_failed = {gk: 0 for gk in cfg.graphs}
        for gk, s, doc, err in outcomes:
            if err is not None:
                n_failed[gk] += 1
                if s in datasets:
                    failures.append({"point": label, "graph": gk, "seed": s, "stage": "run",
                                     "error": err})
                continue
            path = point_dir / gk.replace(":", "_") / f"seed{s}.json"
            _dump(path, doc)
            written.append(str(path.relative_to(root)))
            by_kind[gk].append(doc["error_rate"])
        agg_path = point_dir / "aggregate.csv"
        rows = []
        with agg_path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["graph", "runs", "failed", "mean_error", "std_error"])
            for gk in cfg.graphs:
                errs = [e for e in by_kind[gk] if e is not None]
                mean = float(np.mean(errs)) if errs else math.nan
                std = float(np.std(errs, ddof=1)) if len(errs) > 1 else (0.0 if errs else math.nan)
                w.writerow([gk, len(by_kind[gk]), n_failed[gk], repr(mean), repr(std)])
                rows.append({"graph": gk, "mean_error": mean, "std_error": std})
        written.append(str(agg_path.relative_to(root)))
        aggregates.append({"point": label, "rows": rows})
    manifest = {"name": cfg.name, "config": cfg.to_dict(), "artifacts": sorted(written),
                "failures": failures, "status": "failed" if failures else "ok"}
    manifest["artifacts"].append("manifest.json")
    _dump(root / "manifest.json", manifest)
    manifest["aggregates"] = aggregates
    return manifest


def emit_curves(cfg: ExperimentConfig, kind: str, out, seed: int | None = None) -> list[Path]:
    """Write plot data for one seed.

    ``cut_sweep`` writes one hyperplane-sweep CSV per graph kind;
    ``rank_profile`` writes ``x1,rank`` (first axis and rank) for every point.
    """
    if kind not in ("cut_sweep", "rank_profile"):
        raise ConfigError(f"unknown curve kind {kind!r}; choose cut_sweep or rank_profile")
    seed = cfg.seeds[0] if seed is None else seed
    ds = make_dataset(cfg.dataset, seed)
    if ds.dim < 1:
        raise ConfigError("curves need at least one dimension")
    outdir = Path(out) / cfg.name / "curves"
    outdir.mkdir(parents=True, exist_ok=True)
    axis = int(cfg.curves.get("axis", 0))
    written = []
    if kind == "cut_sweep":
        for gk in cfg.graphs:
            g_kind, _, sch = gk.partition(":")
            g = cfg.recipe(g_kind, sch or None).build(ds, seed)
            curve = hyperplane_sweep(g, ds, axis, int(cfg.curves.get("grid", 200)))
            path = outdir / f"cut_sweep_{gk.replace(':', '_')}_seed{seed}.csv"
            curve.to_csv(path)
            written.append(path)
    else:
        ranks = cfg.recipe("rmd").ranks(ds.points, seed)
        path = outdir / f"rank_profile_seed{seed}.csv"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{axis + 1}", "rank"])
            for x, r in zip(ds.points[:, axis], ranks.values):
                w.writerow([repr(float(x)), repr(float(r))])
        written.append(path)
    man_path = outdir / "manifest.json"
    prior = json.loads(man_path.read_text())["artifacts"] if man_path.exists() else []
    names = sorted(set(prior) | {p.name for p in written} | {"manifest.json"})
    _dump(man_path, {"name": cfg.name, "artifacts": names})
    return written
