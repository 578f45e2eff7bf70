"""Joint network inference: targets, diagonal solves, batched off-diagonal DP.

The objective being minimized, with B_k the backward-map target of
population k and W the tree weights:

    sum_k ||Theta_k - B_k||_F^2  +  lam * sum_k #{(i,j): i != j, Theta_k[i,j] != 0}
    + gamma * sum_{(k,l) in tree} W_kl ||Theta_k - Theta_l||_F^2

Frobenius norms and the nonzero count run over full matrices, so every
unordered pair (i, j) contributes twice. Each pair's subproblem is solved in
single-count form (same minimizer) and its objective doubled during assembly;
diagonal entries contribute once and carry no l0 charge.
"""

from __future__ import annotations

import time
from typing import List, Sequence, Union

import numpy as np

from . import _kernel
from .covmap import BackwardMapSet, backward_map_set, sample_covariance
from .errors import ComputationError
from .model import (
    ExpressionMatrix,
    PrecisionSet,
    SolverConfig,
    TreeHypergraph,
    validate_run_inputs,
)

# coordinates per batch; bounds peak work memory, does not affect results
_CHUNK = 1 << 16

MapsLike = Union[BackwardMapSet, Sequence[np.ndarray]]


def _apply_thread_count(threads: int) -> None:
    import numba

    numba.set_num_threads(max(1, int(threads)))


def elem0_infer(
    data: Sequence[ExpressionMatrix],
    tree: TreeHypergraph,
    cfg: SolverConfig,
) -> PrecisionSet:
    """Full pipeline from expression data to a PrecisionSet."""
    t0 = time.perf_counter()
    data = validate_run_inputs(data, tree, cfg)
    covs = [sample_covariance(em, cfg.center) for em in data]
    t1 = time.perf_counter()
    maps = backward_map_set(
        covs, cfg.nus(len(data)), cfg.jitter_start, cfg.jitter_cap
    )
    t2 = time.perf_counter()
    result = elem0_infer_from_maps(data[0].genes, maps, tree, cfg)
    result.metadata["timings"]["covariance"] = t1 - t0
    result.metadata["timings"]["backward_map"] = t2 - t1
    result.metadata["timings"]["total"] = time.perf_counter() - t0
    return result


def elem0_infer_from_maps(
    genes: List[str],
    maps: MapsLike,
    tree: TreeHypergraph,
    cfg: SolverConfig,
) -> PrecisionSet:
    """Solve all coordinates given precomputed backward maps.

    Model selection calls this directly to reuse maps across the parameter
    grid; elem0_infer wraps it for the one-shot path.
    """
    K = tree.n_nodes
    if len(maps) != K:
        raise ComputationError(f"{len(maps)} backward maps for a {K}-node tree")
    p = maps[0].shape[0]
    jitters = list(maps.jitters) if isinstance(maps, BackwardMapSet) else [0.0] * K
    order, parent, coupling = tree.bfs_layout(0)
    cw = cfg.gamma * coupling
    _apply_thread_count(cfg.threads)

    # diagonal coordinates: one SPD tree system, all p columns at once
    t0 = time.perf_counter()
    f_diag = np.empty((K, p))
    for new, old in enumerate(order):
        f_diag[new] = np.diag(maps[old])
    theta_diag = _kernel.solve_quadratic_tree(parent, cw, np.ones(K), f_diag)
    obj_diag = float(np.sum((theta_diag - f_diag) ** 2))
    for v in range(1, K):
        obj_diag += cw[v] * float(
            np.sum((theta_diag[v] - theta_diag[parent[v]]) ** 2)
        )
    diag_pop = np.empty_like(theta_diag)
    diag_pop[order] = theta_diag
    t_diag = time.perf_counter() - t0

    # off-diagonal coordinates: batched DP over the upper triangle
    t0 = time.perf_counter()
    iu, ju = np.triu_indices(p, 1)
    ncoord = iu.shape[0]
    lam_v = np.full(K, float(cfg.lam))
    ones = np.ones(K)
    edges: List[dict] = [dict() for _ in range(K)]
    obj_off = 0.0
    n_skip = 0
    for lo in range(0, ncoord, _CHUNK):
        hi = min(lo + _CHUNK, ncoord)
        ii = iu[lo:hi]
        jj = ju[lo:hi]
        nb = hi - lo
        targets = np.empty((nb, K))
        for new, old in enumerate(order):
            targets[:, new] = maps[old][ii, jj]
        cst = np.sum(targets * targets, axis=1)
        # a row whose all-zero value already undercuts one l0 charge cannot
        # have a nonzero optimum (any support costs at least lam)
        skip = cst <= cfg.lam
        n_skip += int(np.count_nonzero(skip))
        X = np.empty((nb, K))
        obj = np.empty(nb)
        err = np.zeros(nb, dtype=np.int64)
        _kernel.solve_batch(
            parent, cw, ones, lam_v, -2.0 * targets, cst, skip, X, obj, err
        )
        if np.any(err != _kernel.OK):
            raise ComputationError("off-diagonal solver failed on a coordinate")
        obj_off += float(np.sum(obj))
        x_pop = np.empty_like(X)
        x_pop[:, order] = X
        for k in range(K):
            rows = np.flatnonzero(x_pop[:, k])
            ek = edges[k]
            for r in rows:
                ek[(int(ii[r]), int(jj[r]))] = float(x_pop[r, k])
    t_off = time.perf_counter() - t0

    metadata = {
        "config": cfg.to_dict(),
        "jitters": jitters,
        "objective": obj_diag + 2.0 * obj_off,
        "n_coordinates": int(ncoord) + int(p),
        "n_prescreened": n_skip,
        "timings": {"diagonal": t_diag, "offdiagonal": t_off},
    }
    return PrecisionSet(
        genes=list(genes),
        diagonals=[diag_pop[k] for k in range(K)],
        edges=edges,
        metadata=metadata,
    )


def elem0_objective(
    precision: PrecisionSet,
    maps: MapsLike,
    cfg: SolverConfig,
    tree: TreeHypergraph,
) -> float:
    """Literal recompute of the full objective from stored values."""
    K = precision.n_populations
    dense = [precision.to_dense(k) for k in range(K)]
    tot = 0.0
    for k in range(K):
        d = dense[k] - np.asarray(maps[k])
        tot += float(np.sum(d * d))
        tot += cfg.lam * 2.0 * precision.df(k)
    for u, v, w in tree.edges:
        d = dense[u] - dense[v]
        tot += cfg.gamma * w * float(np.sum(d * d))
    return tot
