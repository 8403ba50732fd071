import csv
import json

import numpy as np
import pytest

from rmdgraph.dataset import DataSet, save_csv
from rmdgraph.experiment import (
    ConfigError,
    ExperimentConfig,
    emit_curves,
    list_presets,
    load_config,
    make_dataset,
    run_experiment,
)


def small_config(**over):
    data = {
        "name": "small",
        "dataset": {"generator": "mixture", "spec": "two_gaussian", "n": 120},
        "graphs": ["knn", "rmd"],
        "algorithm": {"name": "sc", "n_clusters": 2},
        "k": 10,
        "statistic": {"kind": "avg_lnn_distance", "l": 10},
        "resamples": 3,
        "seeds": [0, 1],
    }
    data.update(over)
    return ExperimentConfig.from_dict(data)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def test_presets_load():
    names = list_presets()
    assert {"proximal_pair", "proximal_pair_ssl", "banana", "hierarchy", "unbalance", "usps89"} <= set(names)
    pair = load_config("proximal_pair")
    assert pair.seeds == list(range(20))
    assert pair.graphs == ["knn", "eps", "full_rbf", "rmd"]


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="at least one seed"):
        small_config(seeds=[])
    with pytest.raises(ConfigError, match="unknown graph kind"):
        small_config(graphs=["mst"])
    with pytest.raises(ConfigError, match="unknown config keys"):
        small_config(colour="red")
    with pytest.raises(ConfigError, match="unknown preset"):
        load_config("no_such_preset")
    with pytest.raises(ConfigError, match="does not exist"):
        load_config("usps89")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(str(bad))


def test_layout_aggregate_and_manifest(tmp_path):
    cfg = small_config()
    man = run_experiment(cfg, tmp_path)
    root = tmp_path / "small"
    for gk in ("knn", "rmd"):
        for s in (0, 1):
            doc = json.loads((root / gk / f"seed{s}.json").read_text())
            assert {"algorithm", "scheme", "seed", "error_rate", "cut", "ratio_cut", "ncut",
                    "cluster_sizes", "selected"} <= set(doc)
    rows = read_csv(root / "aggregate.csv")
    assert [r["graph"] for r in rows] == ["knn", "rmd"]
    assert all(r["runs"] == "2" and r["failed"] == "0" for r in rows)
    manifest = json.loads((root / "manifest.json").read_text())
    assert manifest["status"] == "ok" and man["failures"] == []
    on_disk = sorted(str(p.relative_to(root)) for p in root.rglob("*") if p.is_file())
    assert on_disk == sorted(manifest["artifacts"])


def test_rerun_is_byte_identical(tmp_path):
    cfg = small_config()
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b", threads=2)
    a = (tmp_path / "a" / "small" / "aggregate.csv").read_bytes()
    b = (tmp_path / "b" / "small" / "aggregate.csv").read_bytes()
    assert a == b


def test_minority_sweep_layout(tmp_path):
    cfg = small_config(graphs=["knn"], seeds=[0], sweep={"minority": [0.5, 0.2]},
                       dataset={"generator": "mixture", "spec": "unbalanced_pair", "n": 100})
    man = run_experiment(cfg, tmp_path)
    assert [a["point"] for a in man["aggregates"]] == ["minority0.5", "minority0.2"]
    assert (tmp_path / "small" / "minority0.2" / "knn" / "seed0.json").exists()


def _digit_csv(path):
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 1, (60, 3)), rng.normal(3, 1, (90, 3))])
    save_csv(DataSet(X, np.repeat([0, 1], [60, 90]), [8, 9]), path)


def test_csv_subsample_sweep(tmp_path):
    _digit_csv(tmp_path / "digits.csv")
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "dataset": {"csv": "digits.csv", "label_column": "label"},
        "graphs": ["knn", "rmd:b"], "k": 8, "seeds": [0],
        "statistic": {"kind": "avg_lnn_distance", "l": 8}, "resamples": 2,
        "algorithm": {"name": "grf", "num_labeled": 6},
        "sweep": {"subsample": [{"8": 40, "9": 40}, {"8": 20, "9": 80}]},
    }))
    cfg = load_config(str(cfg_path))
    man = run_experiment(cfg, tmp_path / "out")
    assert len(man["aggregates"]) == 2
    ds = make_dataset({**cfg.dataset, "subsample": {"8": 20, "9": 80}}, 0)
    assert np.bincount(ds.labels).tolist() == [20, 80]


def test_csv_override(tmp_path):
    _digit_csv(tmp_path / "mine.csv")
    cfg = load_config("usps89", str(tmp_path / "mine.csv"))
    assert cfg.dataset["csv"].endswith("mine.csv")
    with pytest.raises(ConfigError, match="CSV"):
        load_config("proximal_pair", str(tmp_path / "mine.csv"))


def test_failures_recorded(tmp_path):
    # more clusters than points: every run fails and the manifest says so
    cfg = small_config(graphs=["knn"], seeds=[0], algorithm={"name": "sc", "n_clusters": 8},
                       dataset={"generator": "blobs", "centers": [[0, 0]], "counts": [5]})
    man = run_experiment(cfg, tmp_path)
    assert man["status"] == "failed" and man["failures"][0]["graph"] == "knn"
    rows = read_csv(tmp_path / "small" / "aggregate.csv")
    assert rows[0]["failed"] == "1" and rows[0]["runs"] == "0"


def test_emit_curves(tmp_path):
    cfg = small_config(seeds=[3], graphs=["knn", "rmd:b"])
    paths = emit_curves(cfg, "cut_sweep", tmp_path)
    assert [p.name for p in paths] == ["cut_sweep_knn_seed3.csv", "cut_sweep_rmd_b_seed3.csv"]
    rows = read_csv(paths[0])
    assert list(rows[0]) == ["threshold", "cut", "ratio_cut", "ncut", "size_left"]
    prof = emit_curves(cfg, "rank_profile", tmp_path)[0]
    assert len(read_csv(prof)) == 120
    manifest = json.loads((tmp_path / "small" / "curves" / "manifest.json").read_text())
    assert set(manifest["artifacts"]) == {"cut_sweep_knn_seed3.csv", "cut_sweep_rmd_b_seed3.csv",
                                          "rank_profile_seed3.csv", "manifest.json"}
    with pytest.raises(ConfigError):
        emit_curves(cfg, "heatmap", tmp_path)


def test_rank_profile_dips_at_valley(tmp_path):
    cfg = load_config("proximal_pair")
    path = emit_curves(cfg, "rank_profile", tmp_path, seed=0)[0]
    rows = read_csv(path)
    x = np.array([float(r["x1"]) for r in rows])
    r = np.array([float(r["rank"]) for r in rows])
    bands = np.arange(-1.0, 4.01, 0.5)
    means = np.array([r[(x >= a) & (x < a + 0.5)].mean() for a in bands])
    centers = bands + 0.25
    interior = [i for i in range(1, len(means) - 1)
                if means[i] < means[i - 1] and means[i] < means[i + 1]]
    assert any(0.5 <= centers[i] <= 1.5 for i in interior)


def test_standardize_key_applies_to_generated_data():
    cfg = {"generator": "mixture", "spec": "two_gaussian", "n": 120}
    raw = make_dataset(cfg, 3)
    z = make_dataset({**cfg, "standardize": True}, 3)
    np.testing.assert_allclose(z.points, (raw.points - raw.points.mean(0)) / raw.points.std(0))
    assert np.array_equal(z.labels, raw.labels)
