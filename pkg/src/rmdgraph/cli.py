"""Command-line entry point: ``rmdgraph <verb> [options]``.

Verbs: generate, rank, graph, cluster, ssl, sweep, experiment. Every verb
accepts ``--config`` (JSON file or preset name), ``--seed``, ``--out`` and
``--threads``. Exit codes: 0 success, 2 configuration error, 3 runtime
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cuts import Partition, cut_metrics
from .dataset import DataFormatError, load_csv, make_labeled_split, save_csv
from .experiment import (
    ConfigError,
    emit_curves,
    list_presets,
    load_config,
    make_dataset,
    run_experiment,
)
from .graph import write_edgelist
from .learn import divisive_cluster, error_rate, grf, gtam, spectral_clustering
from .rank import StatisticSpec
from .recipes import GRAPH_KINDS, GraphRecipe

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("rmdgraph")


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="experiment JSON file or preset name")
    p.add_argument("--seed", type=int, default=None, help="random seed (default: first config seed, or 0)")
    p.add_argument("--out", default=None, help="output file or directory")
    p.add_argument("--threads", type=int, default=1, help="worker threads (default 1)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _graph_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--kind", choices=GRAPH_KINDS, default="rmd", help="graph construction")
    p.add_argument("--k", type=int, default=30, help="neighbors / average degree")
    p.add_argument("--scheme", default="b", help="degree scheme preset for rmd (a, b or c)")
    p.add_argument("--l", type=int, default=50, help="neighbor order of the rank statistic")
    p.add_argument("--resamples", type=int, default=10, help="half-split rounds for ranks")
    p.add_argument("--construction", choices=("nn", "opt"), default="nn")
    p.add_argument("--weights", choices=("binary", "rbf"), default="binary")
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--sigma", type=float, default=None)


def _input_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", help="CSV of points (default: the config's dataset)")
    p.add_argument("--label-column", default=None, help="name of the label column in --input")
    p.add_argument("--standardize", action="store_true",
                   help="scale every feature to zero mean and unit variance before use")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="rmdgraph", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"rmdgraph {__version__}")
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("generate", parents=[common], help="sample a dataset from a config")
    p.add_argument("--n", type=int, default=None, help="override the sample size")

    p = sub.add_parser("rank", parents=[common], help="write per-point ranks as index,rank")
    _input_opts(p)
    p.add_argument("--statistic", default="avg_lnn_distance",
                   choices=("eps_count", "lnn_distance", "avg_lnn_distance"))
    p.add_argument("--l", type=int, default=50)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--weighted", action="store_true")
    p.add_argument("--resamples", type=int, default=10)

    p = sub.add_parser("graph", parents=[common], help="write a graph as an edge list")
    _input_opts(p)
    _graph_opts(p)

    p = sub.add_parser("cluster", parents=[common], help="spectral or divisive clustering")
    _input_opts(p)
    _graph_opts(p)
    p.add_argument("--clusters", type=int, default=2)
    p.add_argument("--normalized", action="store_true")
    p.add_argument("--divisive", action="store_true")

    p = sub.add_parser("ssl", parents=[common], help="GRF or GTAM transduction")
    _input_opts(p)
    _graph_opts(p)
    p.add_argument("--algo", choices=("grf", "gtam"), default="grf")
    p.add_argument("--num-labeled", type=int, default=20)
    p.add_argument("--mu", type=float, default=0.05)

    p = sub.add_parser("sweep", parents=[common], help="write cut-sweep or rank-profile curves")
    p.add_argument("--curve", choices=("cut_sweep", "rank_profile"), default="cut_sweep")

    p = sub.add_parser("experiment", parents=[common], help="run a full experiment config")
    p.add_argument("--input", help="override the config's dataset CSV path")
    p.add_argument("--list-presets", action="store_true")
    return parser


def _config(args, required: bool = False):
    if args.config is None:
        if required:
            raise ConfigError(f"{args.verb} needs --config (a JSON file or one of: "
                              f"{', '.join(list_presets())})")
        return None
    if getattr(args, "input", None):
        # --input supersedes the config's dataset; a CSV preset must not fail
        # just because its own file is absent
        try:
            return load_config(args.config, args.input)
        except ConfigError:
            pass
    return load_config(args.config)


def _seed(args, cfg) -> int:
    if args.seed is not None:
        return args.seed
    return cfg.seeds[0] if cfg is not None else 0


def _dataset(args, cfg, seed):
    if getattr(args, "input", None):
        path = Path(args.input)
        if not path.exists():
            raise ConfigError(f"input file {path} does not exist")
        ds = load_csv(path, args.label_column)
    elif cfg is None:
        raise ConfigError("give --input or --config")
    else:
        ds = make_dataset(cfg.dataset, seed)
    return ds.standardized() if args.standardize else ds


def _recipe(args) -> GraphRecipe:
    return GraphRecipe(kind=args.kind, k=args.k, scheme=args.scheme,
                       statistic=StatisticSpec("avg_lnn_distance", args.l),
                       resamples=args.resamples, construction=args.construction,
                       eps=args.eps, sigma=args.sigma, weights=args.weights)


def _out(args, default: str) -> Path:
    p = Path(args.out or default)
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _write_assignment(path: Path, values, header: str) -> None:
    with path.open("w") as fh:
        fh.write(f"index,{header}\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{int(v)}\n")


def cmd_generate(args) -> int:
    cfg = _config(args, required=True)
    seed = _seed(args, cfg)
    ds_cfg = dict(cfg.dataset)
    if args.n is not None:
        ds_cfg["n"] = args.n
    ds = make_dataset(ds_cfg, seed)
    path = _out(args, f"{cfg.name}_seed{seed}.csv")
    save_csv(ds, path)
    print(f"wrote {ds.size} points to {path}")
    return EXIT_OK


def cmd_rank(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    ds = _dataset(args, cfg, seed)
    spec = StatisticSpec(args.statistic, args.l, args.eps, args.weighted)
    ranks = GraphRecipe(statistic=spec, resamples=args.resamples).ranks(ds.points, seed)
    path = _out(args, "ranks.csv")
    ranks.to_csv(path)
    print(f"wrote {len(ranks)} ranks to {path}")
    return EXIT_OK


def cmd_graph(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    ds = _dataset(args, cfg, seed)
    g = _recipe(args).build(ds, seed)
    path = _out(args, "graph.csv")
    write_edgelist(g, path)
    print(f"wrote {g.n_edges} edges over {g.n} nodes to {path}")
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    ds = _dataset(args, cfg, seed)
    recipe = _recipe(args)
    if args.divisive:
        part = divisive_cluster(ds, args.clusters, recipe, seed)
        g = recipe.build(ds, seed)
    else:
        g = recipe.build(ds, seed)
        part = spectral_clustering(g, args.clusters, args.normalized, seed)
    rep = cut_metrics(g, part)
    doc = {"algorithm": "divisive" if args.divisive else "sc", "scheme": recipe.scheme_name,
           "seed": seed, "error_rate": error_rate(part, ds.labels) if ds.labels is not None else None,
           "cut": rep.cut, "ratio_cut": rep.ratio_cut, "ncut": rep.ncut,
           "cluster_sizes": rep.cluster_sizes, "selected": True}
    _emit(args, doc, part.assignment, "cluster")
    return EXIT_OK


def cmd_ssl(args) -> int:
    cfg = _config(args)
    seed = _seed(args, cfg)
    ds = _dataset(args, cfg, seed)
    if ds.labels is None:
        raise ConfigError("ssl needs labeled data (use --label-column)")
    split = make_labeled_split(ds, args.num_labeled, seed)
    recipe = _recipe(args)
    g = recipe.build(ds, seed)
    out = grf(g, split, ds.labels) if args.algo == "grf" else \
        gtam(g, split, ds.labels, args.mu, seed=seed)
    rep = cut_metrics(g, Partition(out.hard)) if np.unique(out.hard).size > 1 else None
    doc = {"algorithm": args.algo, "scheme": recipe.scheme_name, "seed": seed,
           "error_rate": error_rate(out, ds.labels),
           "cut": rep.cut if rep else 0.0, "ratio_cut": rep.ratio_cut if rep else 0.0,
           "ncut": rep.ncut if rep else 0.0,
           "cluster_sizes": np.bincount(out.hard).tolist(), "selected": True}
    _emit(args, doc, out.hard, "label")
    return EXIT_OK


def _emit(args, doc: dict, assignment, header: str) -> None:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    (out / "result.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    _write_assignment(out / "assignment.csv", assignment, header)
    print(json.dumps(doc, sort_keys=True))


def cmd_sweep(args) -> int:
    cfg = _config(args, required=True)
    written = emit_curves(cfg, args.curve, args.out or "results", _seed(args, cfg))
    for p in written:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if args.list_presets:
        print("\n".join(list_presets()))
        return EXIT_OK
    if args.config is None:
        raise ConfigError("experiment needs --config (a JSON file or one of: "
                          f"{', '.join(list_presets())})")
    cfg = load_config(args.config, args.input)
    if args.seed is not None:
        cfg.seeds = [args.seed]
    manifest = run_experiment(cfg, args.out or "results", args.threads)
    for agg in manifest["aggregates"]:
        label = agg["point"] or cfg.name
        for row in agg["rows"]:
            print(f"{label}\t{row['graph']}\tmean_error={row['mean_error']:.4f}"
                  f"\tstd={row['std_error']:.4f}")
    if manifest["failures"]:
        for f in manifest["failures"]:
            print(f"FAILED {f}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


COMMANDS = {"generate": cmd_generate, "rank": cmd_rank, "graph": cmd_graph,
            "cluster": cmd_cluster, "ssl": cmd_ssl, "sweep": cmd_sweep,
            "experiment": cmd_experiment}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits with 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.verb](args)
    except (ConfigError, DataFormatError, FileNotFoundError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
