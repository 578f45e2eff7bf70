"""Scripting bindings for the treel0 engine over in-memory matrices.

Five entry points wrap the library's public operations one-to-one, so
pipelines can call the solver on arrays they already hold instead of
round-tripping through the CLI's TSV files:

    infer               joint sparse precision estimation
    infer_categorical   global + per-category decomposition
    select              eBIC grid search, returning the winning estimate
    synthesize          benchmark instance generation
    score_support       support-recovery metrics

Matrix arguments are row-major dense buffers with shape metadata: 2-D
array-likes carry their own shape; flat buffers (bytes, 1-D sequences)
take an explicit ``shape=(p, n)`` and are read in row-major order.

Results are bit-identical to the CLI on equivalent inputs: both paths run
the same library functions, whose outputs are deterministic functions of
the inputs alone. Validation and computation failures raise the library's
own exception types (re-exported here), carrying the core diagnostic text
unchanged. During the heavy stages the interpreter lock is released by the
underlying BLAS and JIT kernels; the bindings add no locking of their own.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from treel0 import (
    AllConfigurationsInfeasible,
    CategoricalProblem,
    ComputationError,
    ExpressionMatrix,
    InsufficientZeroPositions,
    MismatchedGeneSets,
    NonFiniteInput,
    NotATree,
    NotPositiveDefinite,
    ParameterGrid,
    PrecisionSet,
    ShapeMismatch,
    SingularAfterJitter,
    SolverConfig,
    SynthSpec,
    TooLargeForOracle,
    TreeHypergraph,
    ValidationError,
    categorical_infer,
    elem0_infer,
    generate,
    score,
    select_parameters,
)
from treel0.benchmarks import default_selection_grid

__all__ = [
    "infer", "infer_categorical", "select", "synthesize", "score_support",
    # re-exported core exception types
    "ValidationError", "ComputationError", "ShapeMismatch",
    "MismatchedGeneSets", "NotATree", "NonFiniteInput", "TooLargeForOracle",
    "SingularAfterJitter", "NotPositiveDefinite", "InsufficientZeroPositions",
    "AllConfigurationsInfeasible",
]

EdgeList = List[Tuple[int, int, float]]


def _as_matrix(values, shape=None) -> np.ndarray:
    if isinstance(values, (bytes, bytearray, memoryview)):
        a = np.frombuffer(values, dtype=np.float64)
    else:
        a = np.asarray(values, dtype=np.float64)
    if shape is not None:
        a = a.reshape(shape)  # C order: row-major
    if a.ndim != 2:
        raise ShapeMismatch(
            f"expected a 2-D (p, n) matrix, got {a.ndim}-D; pass shape=(p, n) "
            "when supplying a flat buffer"
        )
    return np.ascontiguousarray(a)


def _expression_set(matrices, shapes, genes) -> List[ExpressionMatrix]:
    mats = [
        _as_matrix(m, None if shapes is None else shapes[k])
        for k, m in enumerate(matrices)
    ]
    if not mats:
        raise ShapeMismatch("need at least one population matrix")
    p = mats[0].shape[0]
    if genes is None:
        genes = [f"g{i + 1}" for i in range(p)]
    return [
        ExpressionMatrix(m, list(genes), [f"s{j + 1}" for j in range(m.shape[1])],
                         population=k)
        for k, m in enumerate(mats)
    ]


def _tree(n_nodes: int, tree_edges) -> TreeHypergraph:
    edges = []
    for e in (tree_edges or []):
        if len(e) == 2:
            u, v = e
            w = 1.0
        else:
            u, v, w = e
        edges.append((int(u), int(v), float(w)))
    return TreeHypergraph.from_edges(n_nodes, edges)


def _config(config) -> SolverConfig:
    if isinstance(config, SolverConfig):
        return config
    return SolverConfig.from_dict(dict(config or {}))


def _edge_list(d: Dict[Tuple[int, int], float]) -> EdgeList:
    return [(i, j, d[(i, j)]) for (i, j) in sorted(d)]


def _estimate_dict(est: PrecisionSet) -> dict:
    return {
        "genes": list(est.genes),
        "edges": [_edge_list(est.edges[k]) for k in range(est.n_populations)],
        "diagonals": [np.array(d) for d in est.diagonals],
        "metadata": dict(est.metadata),
    }


def infer(matrices, tree_edges, config=None, *, genes=None, shapes=None) -> dict:
    """Joint estimation over K populations coupled by a tree.

    matrices: K row-major (p, n_k) buffers. tree_edges: (u, v[, weight])
    pairs over 0-based population indices. config: mapping of solver
    parameters (lambda/lam, gamma, nu, threads, ...). Returns edge lists
    and diagonals per population plus the run metadata.
    """
    data = _expression_set(matrices, shapes, genes)
    tree = _tree(len(data), tree_edges)
    est = elem0_infer(data, tree, _config(config))
    out = _estimate_dict(est)
    out["objective"] = est.metadata["objective"]
    return out


def infer_categorical(matrix_grid, tree_edges, config=None, *,
                      genes=None, shapes=None) -> dict:
    """Global + per-category estimation on a K x C grid of matrices.

    matrix_grid[k][c] is the (p, n_kc) buffer for population k, category c;
    shapes, when given, mirrors that nesting. Returns the global and local
    components and their totals, all as edge lists plus diagonals.
    """
    grid = []
    for k, row in enumerate(matrix_grid):
        mats = [
            _as_matrix(m, None if shapes is None else shapes[k][c])
            for c, m in enumerate(row)
        ]
        if genes is None and mats:
            genes = [f"g{i + 1}" for i in range(mats[0].shape[0])]
        grid.append([
            ExpressionMatrix(m, list(genes),
                             [f"s{j + 1}" for j in range(m.shape[1])],
                             population=k)
            for m in mats
        ])
    tree = _tree(len(grid), tree_edges)
    est = categorical_infer(CategoricalProblem(grid, tree, _config(config)))
    K, C = est.n_populations, est.n_categories
    totals = [[est.total(k, c) for c in range(C)] for k in range(K)]
    return {
        "genes": list(est.genes),
        "global_edges": [_edge_list(est.global_edges[k]) for k in range(K)],
        "global_diagonals": [np.array(d) for d in est.global_diagonals],
        "local_edges": [[_edge_list(est.local_edges[k][c]) for c in range(C)]
                        for k in range(K)],
        "local_diagonals": [[np.array(d) for d in est.local_diagonals[k]]
                            for k in range(K)],
        "total_edges": [[_edge_list(totals[k][c][1]) for c in range(C)]
                        for k in range(K)],
        "total_diagonals": [[np.array(totals[k][c][0]) for c in range(C)]
                            for k in range(K)],
        "objective": est.metadata["objective"],
        "metadata": dict(est.metadata),
    }


def select(matrices, tree_edges, grid=None, config=None, *,
           genes=None, shapes=None) -> dict:
    """eBIC search over a (gamma, lambda, nu) grid, then the winning fit.

    grid: mapping with "gamma", "lambda", "nu" value lists (defaults to the
    library's standard search space). Returns the winning parameters, the
    full audit table, and the winning estimate.
    """
    data = _expression_set(matrices, shapes, genes)
    tree = _tree(len(data), tree_edges)
    if grid is None:
        pgrid = default_selection_grid()
    elif isinstance(grid, ParameterGrid):
        pgrid = grid
    else:
        pgrid = ParameterGrid.from_dict(dict(grid))
    sel = select_parameters(data, tree, pgrid, _config(config))
    return {
        "gamma": sel.gamma,
        "lambda": sel.lam,
        "nu": sel.nu,
        "ebic": sel.precision.metadata["ebic"],
        "table": [dict(row) for row in sel.table],
        "estimate": _estimate_dict(sel.precision),
    }


def synthesize(p: int, n_populations: int, n_over_p: float, *,
               modules: int = 10, seed: int = 0,
               n_categories: Optional[int] = None,
               local_edge_ratio: float = 0.0, **spec_fields) -> dict:
    """Generate a benchmark instance entirely in memory.

    Mirrors the CLI synth subcommand: same spec, same seed stream, same
    values. Returns the tree, the true precision matrices, and the sampled
    expression matrices (per category when n_categories is set).
    """
    spec = SynthSpec(p=p, K=n_populations, n_over_p=n_over_p, M=modules,
                     seed=seed, n_categories=n_categories,
                     local_edge_ratio=local_edge_ratio, **spec_fields)
    gt = generate(spec)
    some = gt.data if gt.category_data is None else gt.category_data[0]
    return {
        "spec": spec.to_dict(),
        "genes": list(some[0].genes),
        "tree_edges": list(gt.tree.edges),
        "precisions": [np.array(m) for m in gt.precisions],
        "data": ([np.array(em.values) for em in gt.data]
                 if gt.category_data is None else None),
        "category_precisions": (
            None if gt.category_precisions is None else
            [[np.array(m) for m in row] for row in gt.category_precisions]),
        "category_data": (
            None if gt.category_data is None else
            [[np.array(em.values) for em in row] for row in gt.category_data]),
    }


def _pset_from_arg(arg, genes) -> PrecisionSet:
    if isinstance(arg, PrecisionSet):
        return arg
    if isinstance(arg, dict):
        g = arg.get("genes", genes)
        if g is None:
            raise ShapeMismatch("gene list missing: pass genes= or include it")
        edges = [{(int(i), int(j)): float(v) for (i, j, v) in lst}
                 for lst in arg["edges"]]
        diags = arg.get("diagonals")
        if diags is None:
            diags = [np.zeros(len(g)) for _ in edges]
        return PrecisionSet(list(g), [np.asarray(d) for d in diags], edges)
    dense = [_as_matrix(m) for m in arg]
    if genes is None:
        genes = [f"g{i + 1}" for i in range(dense[0].shape[0])]
    return PrecisionSet.from_dense(list(genes), dense)


def score_support(truth, estimate, *, genes=None) -> dict:
    """Support-recovery metrics of an estimate against a reference.

    Each side is a list of dense (p, p) row-major matrices, a dict with
    "edges" (+ optionally "diagonals"/"genes") as returned by infer, or a
    PrecisionSet. Returns per-population and macro precision/recall/F1/RMSE.
    """
    t = _pset_from_arg(truth, genes)
    e = _pset_from_arg(estimate, genes if genes is not None else t.genes)
    return score(t, e)
