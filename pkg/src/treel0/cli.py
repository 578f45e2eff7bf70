"""Command-line surface binding all library operations.

Subcommands: infer, infer-categorical, select, synth, eval, mst, and the
bundled repro-table1 benchmark driver. Every run writes run.json (config
echo, package versions, timings, jitter log) into --out. Exit codes: 0 on
success, 1 on computation errors, 2 on usage or input-validation errors,
with a diagnostic on standard error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import List, Optional

import numpy as np

from . import __version__
from .benchmarks import (
    default_selection_grid,
    run_fig3,
    run_fig5,
    run_scaling,
    run_table1,
)
from .categorical import CategoricalProblem, categorical_infer
from .errors import ComputationError, ValidationError
from .evalkit import score
from . import fileio
from .inference import elem0_infer
from .model import SolverConfig
from .selection import ParameterGrid, select_parameters
from .synth import SynthSpec, generate, mst_from_distances


def _versions() -> dict:
    import numba
    import networkx
    import scipy

    return {
        "treel0": __version__,
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "numba": numba.__version__,
        "scipy": scipy.__version__,
        "networkx": networkx.__version__,
    }


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--threads", type=int, default=None, help="worker threads")
    p.add_argument("--seed", type=int, default=None, help="random seed")


def _load_config(args) -> dict:
    raw = {}
    if args.config:
        with open(args.config) as fh:
            raw = json.load(fh)
        if not isinstance(raw, dict):
            raise ValidationError("config file must hold a JSON object")
    return raw


def _solver_config(args, raw: dict) -> SolverConfig:
    cfg = SolverConfig.from_dict(raw)
    overrides = {}
    for flag, key in (("lam", "lam"), ("gamma", "gamma"), ("nu", "nu"),
                      ("alpha", "alpha")):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[key] = v
    if args.threads is not None:
        overrides["threads"] = args.threads
    return cfg.with_params(**overrides) if overrides else cfg


def _grid(raw: dict) -> ParameterGrid:
    if "grid" in raw:
        return ParameterGrid.from_dict(raw["grid"])
    return default_selection_grid()


def _write_run_json(out: str, payload: dict) -> None:
    os.makedirs(out, exist_ok=True)
    fileio.write_run_json(os.path.join(out, "run.json"), payload)


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="sparsity penalty per off-diagonal pair")
    p.add_argument("--gamma", type=float, default=None,
                   help="tree coupling strength")
    p.add_argument("--nu", type=float, default=None,
                   help="covariance soft-threshold level")
    p.add_argument("--alpha", type=float, default=None,
                   help="component ridge for categorical runs")


def _resolve_tree(args, data_dir: str):
    path = args.hypergraph or os.path.join(data_dir, "hypergraph.tsv")
    if not os.path.exists(path):
        raise ValidationError(f"hypergraph file not found: {path}")
    return fileio.read_hypergraph(path)


def _cmd_infer(args) -> int:
    raw = _load_config(args)
    cfg = _solver_config(args, raw)
    data = fileio.read_expression_dir(args.data)
    tree = _resolve_tree(args, args.data)
    est = elem0_infer(data, tree, cfg)
    fileio.write_precision_set(args.out, est)
    _write_run_json(args.out, {
        "command": "infer", "argv": sys.argv[1:],
        "config": cfg.to_dict(), "versions": _versions(),
        "objective": est.metadata["objective"],
        "n_coordinates": est.metadata["n_coordinates"],
        "n_prescreened": est.metadata["n_prescreened"],
        "jitters": est.metadata["jitters"],
        "timings": est.metadata["timings"],
    })
    return 0


def _cmd_infer_categorical(args) -> int:
    raw = _load_config(args)
    cfg = _solver_config(args, raw)
    data = fileio.read_categorical_expression_dir(args.data)
    tree = _resolve_tree(args, args.data)
    prob = CategoricalProblem(data, tree, cfg)
    est = categorical_infer(prob)
    fileio.write_categorical_set(args.out, est)
    _write_run_json(args.out, {
        "command": "infer-categorical", "argv": sys.argv[1:],
        "config": cfg.to_dict(), "versions": _versions(),
        "objective": est.metadata["objective"],
        "n_coordinates": est.metadata["n_coordinates"],
        "n_prescreened": est.metadata["n_prescreened"],
        "jitters": est.metadata["jitters"],
        "timings": est.metadata["timings"],
    })
    return 0


def _cmd_select(args) -> int:
    raw = _load_config(args)
    cfg = _solver_config(args, raw)
    grid = _grid(raw)
    data = fileio.read_expression_dir(args.data)
    tree = _resolve_tree(args, args.data)
    t0 = time.perf_counter()
    sel = select_parameters(data, tree, grid, cfg)
    elapsed = time.perf_counter() - t0
    fileio.write_precision_set(args.out, sel.precision)
    fileio.write_scores(os.path.join(args.out, "scores.tsv"), sel.table)
    _write_run_json(args.out, {
        "command": "select", "argv": sys.argv[1:],
        "config": cfg.to_dict(), "versions": _versions(),
        "grid": {"gamma": list(grid.gammas), "lambda": list(grid.lams),
                 "nu": list(grid.nus)},
        "selected": {"gamma": sel.gamma, "lambda": sel.lam, "nu": sel.nu,
                     "ebic": sel.precision.metadata["ebic"]},
        "jitters": sel.precision.metadata["jitters"],
        "timings": {"total": elapsed},
    })
    return 0


def _cmd_synth(args) -> int:
    _load_config(args)  # accepted for interface uniformity; synth has no params
    seed = args.seed if args.seed is not None else 0
    spec = SynthSpec(
        p=args.p, K=args.k, n_over_p=args.np, M=args.modules, seed=seed,
        n_categories=args.categories, local_edge_ratio=args.delta,
    )
    t0 = time.perf_counter()
    gt = generate(spec)
    elapsed = time.perf_counter() - t0
    out = args.out
    os.makedirs(out, exist_ok=True)
    fileio.write_hypergraph(os.path.join(out, "hypergraph.tsv"), gt.tree)
    if gt.category_data is None:
        genes = gt.data[0].genes
        for k, em in enumerate(gt.data):
            fileio.write_expression(os.path.join(out, f"pop_{k + 1}.tsv"), em)
        fileio.write_truth(out, genes, gt.precisions)
    else:
        genes = gt.category_data[0][0].genes
        for k, row in enumerate(gt.category_data):
            for c, em in enumerate(row):
                fileio.write_expression(
                    os.path.join(out, f"pop_{k + 1}_cat_{c + 1}.tsv"), em)
        fileio.write_truth(out, genes, gt.precisions, gt.category_precisions)
    _write_run_json(out, {
        "command": "synth", "argv": sys.argv[1:],
        "spec": spec.to_dict(), "versions": _versions(),
        "timings": {"total": elapsed},
    })
    return 0


def _cmd_eval(args) -> int:
    est = fileio.read_precision_set(args.est)
    if os.path.exists(os.path.join(args.truth, "network.tsv")):
        truth = fileio.read_precision_set(args.truth)
    else:
        truth = fileio.read_truth_dir(args.truth, est.genes)
    t0 = time.perf_counter()
    res = score(truth, est)
    elapsed = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "metrics.tsv"), "w") as fh:
        fh.write("population\tf1\tprecision\trecall\trmse\n")
        for k, row in enumerate(res["per_population"]):
            fh.write(f"{k + 1}\t{row['f1']:.6f}\t{row['precision']:.6f}"
                     f"\t{row['recall']:.6f}\t{row['rmse']:.6g}\n")
        m = res["macro"]
        fh.write(f"macro\t{m['f1']:.6f}\t{m['precision']:.6f}"
                 f"\t{m['recall']:.6f}\t{m['rmse']:.6g}\n")
    with open(os.path.join(args.out, "summary.json"), "w") as fh:
        json.dump(res, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_run_json(args.out, {
        "command": "eval", "argv": sys.argv[1:],
        "versions": _versions(), "macro": res["macro"],
        "timings": {"total": elapsed},
    })
    return 0


def _cmd_mst(args) -> int:
    dist = fileio.read_distance_matrix(args.distances)
    tree = mst_from_distances(dist)
    os.makedirs(args.out, exist_ok=True)
    fileio.write_hypergraph(os.path.join(args.out, "hypergraph.tsv"), tree)
    _write_run_json(args.out, {
        "command": "mst", "argv": sys.argv[1:],
        "versions": _versions(), "n_nodes": tree.n_nodes,
        "timings": {},
    })
    return 0


def _cmd_repro(args) -> int:
    raw = _load_config(args)
    grid = _grid(raw)
    threads = args.threads if args.threads is not None else 1
    seeds = tuple(range(args.seeds))
    wanted = [s.strip() for s in args.protocols.split(",") if s.strip()]
    known = {"table1", "fig3", "fig5", "scaling"}
    unknown = set(wanted) - known
    if unknown:
        raise ValidationError(f"unknown protocols: {sorted(unknown)}")
    results = {}
    timings = {}
    for name in wanted:
        t0 = time.perf_counter()
        if name == "table1":
            results[name] = run_table1(p=args.p, K=args.k, n_over_p=args.np,
                                       seeds=seeds, grid=grid, threads=threads)
        elif name == "fig3":
            results[name] = run_fig3(seeds=seeds, threads=threads)
        elif name == "fig5":
            results[name] = run_fig5(seeds=seeds, grid=grid, threads=threads)
        elif name == "scaling":
            results[name] = run_scaling()
        timings[name] = time.perf_counter() - t0
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "results.json"), "w") as fh:
        json.dump(results, fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(args.out, "results.tsv"), "w") as fh:
        fh.write("protocol\tmetric\tvalue\n")
        if "table1" in results:
            r = results["table1"]
            for mkey in ("mean_f1", "mean_precision", "mean_recall"):
                fh.write(f"table1\t{mkey}\t{r[mkey]:.6f}\n")
        if "fig3" in results:
            for ratio, v in sorted(results["fig3"]["mean_f1_by_ratio"].items()):
                fh.write(f"fig3\tmean_f1_np_{ratio:g}\t{v:.6f}\n")
        if "fig5" in results:
            for d, v in sorted(results["fig5"]["mean_f1"].items()):
                fh.write(f"fig5\tmean_f1_categorical_delta_{d}\t{v['categorical']:.6f}\n")
                fh.write(f"fig5\tmean_f1_standard_delta_{d}\t{v['standard']:.6f}\n")
        if "scaling" in results:
            fh.write(f"scaling\tloglog_slope\t{results['scaling']['loglog_slope']:.6f}\n")
    _write_run_json(args.out, {
        "command": "repro-table1", "argv": sys.argv[1:],
        "versions": _versions(),
        "grid": {"gamma": list(grid.gammas), "lambda": list(grid.lams),
                 "nu": list(grid.nus)},
        "timings": timings,
    })
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="treel0",
        description="Joint sparse precision-matrix inference over tree-coupled "
                    "populations with an exact l0 penalty.",
    )
    ap.add_argument("--version", action="version", version=f"treel0 {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("infer", help="jointly infer precision matrices")
    _add_common(p)
    _add_param_flags(p)
    p.add_argument("--data", required=True, help="directory of pop_<k>.tsv files")
    p.add_argument("--hypergraph", help="tree file (default: <data>/hypergraph.tsv)")
    p.set_defaults(func=_cmd_infer)

    p = sub.add_parser("infer-categorical",
                       help="infer global + per-category components")
    _add_common(p)
    _add_param_flags(p)
    p.add_argument("--data", required=True,
                   help="directory of pop_<k>_cat_<c>.tsv files")
    p.add_argument("--hypergraph", help="tree file (default: <data>/hypergraph.tsv)")
    p.set_defaults(func=_cmd_infer_categorical)

    p = sub.add_parser("select", help="eBIC grid search, then infer with the winner")
    _add_common(p)
    _add_param_flags(p)
    p.add_argument("--data", required=True, help="directory of pop_<k>.tsv files")
    p.add_argument("--hypergraph", help="tree file (default: <data>/hypergraph.tsv)")
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("synth", help="generate a synthetic benchmark instance")
    _add_common(p)
    p.add_argument("--p", type=int, required=True, help="genes per network")
    p.add_argument("--k", type=int, required=True, help="number of populations")
    p.add_argument("--np", type=float, required=True, help="samples per gene (n/p)")
    p.add_argument("--modules", type=int, default=10, help="modules per network")
    p.add_argument("--categories", type=int, default=None,
                   help="emit per-category data with this many categories")
    p.add_argument("--delta", type=float, default=0.0,
                   help="local edge ratio for categorical instances")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("eval", help="score an estimate against a reference")
    _add_common(p)
    p.add_argument("--truth", required=True,
                   help="reference directory (truth_pop_<k>.tsv or network.tsv)")
    p.add_argument("--est", required=True, help="estimate directory (network.tsv)")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("mst",
                       help="build a tree hypergraph from a distance matrix")
    _add_common(p)
    p.add_argument("--distances", required=True,
                   help="whitespace-separated square symmetric matrix file")
    p.set_defaults(func=_cmd_mst)

    p = sub.add_parser("repro-table1",
                       help="run the benchmark protocols at configurable scale")
    _add_common(p)
    p.add_argument("--p", type=int, default=250, help="table1 gene count")
    p.add_argument("--k", type=int, default=10, help="table1 population count")
    p.add_argument("--np", type=float, default=20.0, help="table1 sample ratio")
    p.add_argument("--seeds", type=int, default=5, help="seeds 0..N-1")
    p.add_argument("--protocols", default="table1,fig3,fig5,scaling",
                   help="comma-separated subset of table1,fig3,fig5,scaling")
    p.set_defaults(func=_cmd_repro)

    return ap


def main(argv: Optional[List[str]] = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"treel0: {exc}", file=sys.stderr)
        return 2
    except ComputationError as exc:
        print(f"treel0: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
