"""Global + per-category local network inference.

Each population k carries a global component G_k plus one local component
L_kc per category c; the fitted matrix for (k, c) is G_k + L_kc. Per
coordinate (i, j) the objective over g = (g_k) and l = (l_kc) is

    sum_kc (g_k + l_kc - f_kc)^2 + gamma * sum_{(k,l) in tree} W_kl (g_k - g_l)^2
    + lam * (sum_k 1[g_k != 0] + sum_kc 1[l_kc != 0])          (off-diagonals)
    + alpha * (sum_k g_k^2 + sum_kc l_kc^2)

The substitution y_kc = -l_kc turns (g_k + l_kc - f_kc)^2 into
(g_k - y_kc)^2 - 2 f_kc g_k + 2 f_kc y_kc + f_kc^2, so each local becomes a
leaf hanging off its global with unit coupling weight and the whole
coordinate is one l0 tree problem for the standard DP kernel. Off-diagonal
contributions are doubled at assembly because full-matrix norms count (i, j)
and (j, i); the splitting (g, l) is only identifiable through the penalties
and the solver's deterministic zero-preferring tie-break.

Diagonal coordinates drop the l0 terms; eliminating the locals in closed
form, l_kc = (f_kc - g_k)/(1+alpha), leaves the SPD tree system

    (alpha (C/(1+alpha) + 1) I + gamma L_W) g = alpha/(1+alpha) sum_c f_c.
"""

from __future__ import annotations

import time
from typing import List, Sequence

import numpy as np

from . import _kernel
from .covmap import backward_map, sample_covariance
from .errors import (
    ComputationError,
    MismatchedGeneSets,
    NonFiniteInput,
    ShapeMismatch,
)
from .inference import _CHUNK, _apply_thread_count
from .model import (
    CategoricalPrecisionSet,
    ExpressionMatrix,
    SolverConfig,
    TreeHypergraph,
)


class CategoricalProblem:
    """Validated (population x category) expression panel on a tree.

    data[k][c] is the expression of population k, category c; all cells must
    exist, share one gene set, and cfg.alpha must be strictly positive (the
    ridge is what makes the global/local split well-posed).
    """

    def __init__(
        self,
        data: Sequence[Sequence[ExpressionMatrix]],
        tree: TreeHypergraph,
        cfg: SolverConfig,
    ):
        K = tree.n_nodes
        if len(data) != K:
            raise ShapeMismatch(f"{len(data)} populations for a {K}-node tree")
        C = len(data[0])
        if C < 2:
            raise ShapeMismatch("categorical inference needs at least 2 categories")
        if cfg.alpha <= 0.0:
            raise ShapeMismatch("categorical inference requires alpha > 0")
        cfg.nus(K)
        ref = data[0][0]
        ref_set = set(ref.genes)
        rows: List[List[ExpressionMatrix]] = []
        for k in range(K):
            if len(data[k]) != C:
                raise ShapeMismatch(
                    f"population {k + 1} has {len(data[k])} categories, expected {C}"
                )
            row = []
            for c in range(C):
                em = data[k][c]
                if set(em.genes) != ref_set:
                    raise MismatchedGeneSets(
                        f"population {k + 1} category {c + 1} gene set differs"
                    )
                if not np.all(np.isfinite(em.values)):
                    raise NonFiniteInput(
                        f"population {k + 1} category {c + 1} expression has NaN/inf"
                    )
                if em.n < 1:
                    raise ShapeMismatch(
                        f"population {k + 1} category {c + 1} has no samples"
                    )
                if em.genes == ref.genes:
                    vals = em.values.copy()
                else:
                    idx = [em.genes.index(g) for g in ref.genes]
                    vals = em.values[idx, :].copy()
                row.append(ExpressionMatrix(vals, list(ref.genes), list(em.samples), k))
            rows.append(row)
        self.data = rows
        self.tree = tree
        self.cfg = cfg
        self.genes = list(ref.genes)
        self.n_categories = C


def categorical_infer(prob: CategoricalProblem) -> CategoricalPrecisionSet:
    """Jointly infer global and local components for every coordinate."""
    cfg = prob.cfg
    tree = prob.tree
    K = tree.n_nodes
    C = prob.n_categories
    alpha = float(cfg.alpha)
    t_start = time.perf_counter()

    nus = cfg.nus(K)
    maps: List[List[np.ndarray]] = []
    jitters: List[List[float]] = []
    for k in range(K):
        mrow, jrow = [], []
        for c in range(C):
            cov = sample_covariance(prob.data[k][c], cfg.center)
            b, j = backward_map(cov.matrix, nus[k], cfg.jitter_start, cfg.jitter_cap)
            mrow.append(b)
            jrow.append(j)
        maps.append(mrow)
        jitters.append(jrow)
    t_maps = time.perf_counter() - t_start

    p = len(prob.genes)
    order, parent, coupling = tree.bfs_layout(0)
    cw_tree = cfg.gamma * coupling
    _apply_thread_count(cfg.threads)

    # diagonals: locals eliminated in closed form, globals via one SPD solve
    t0 = time.perf_counter()
    f_diag = np.empty((K, C, p))
    for new, old in enumerate(order):
        for c in range(C):
            f_diag[new, c] = np.diag(maps[old][c])
    shrink = 1.0 / (1.0 + alpha)
    da = alpha * (C * shrink + 1.0)
    rhs = alpha * shrink * f_diag.sum(axis=1)
    g_diag = _kernel.solve_quadratic_tree(parent, cw_tree, np.full(K, da), rhs)
    l_diag = (f_diag - g_diag[:, None, :]) * shrink
    resid = g_diag[:, None, :] + l_diag - f_diag
    obj_diag = float(np.sum(resid * resid))
    obj_diag += alpha * (float(np.sum(g_diag * g_diag)) + float(np.sum(l_diag * l_diag)))
    for v in range(1, K):
        obj_diag += cw_tree[v] * float(np.sum((g_diag[v] - g_diag[parent[v]]) ** 2))
    t_diag = time.perf_counter() - t0

    # off-diagonals: m = K globals + K*C locals, locals as unit-weight leaves
    t0 = time.perf_counter()
    m = K + K * C
    parent_m = np.empty(m, dtype=np.int64)
    cw_m = np.empty(m)
    parent_m[:K] = parent
    cw_m[:K] = cw_tree
    for knew in range(K):
        for c in range(C):
            v = K + knew * C + c
            parent_m[v] = knew
            cw_m[v] = 1.0
    a_m = np.full(m, alpha)
    lam_m = np.full(m, float(cfg.lam))

    iu, ju = np.triu_indices(p, 1)
    ncoord = iu.shape[0]
    g_edges: List[dict] = [dict() for _ in range(K)]
    l_edges: List[List[dict]] = [[dict() for _ in range(C)] for _ in range(K)]
    obj_off = 0.0
    n_skip = 0
    for lo in range(0, ncoord, _CHUNK):
        hi = min(lo + _CHUNK, ncoord)
        ii = iu[lo:hi]
        jj = ju[lo:hi]
        nb = hi - lo
        b = np.zeros((nb, m))
        cst = np.zeros(nb)
        for knew, old in enumerate(order):
            for c in range(C):
                t = maps[old][c][ii, jj]
                b[:, knew] -= 2.0 * t
                b[:, K + knew * C + c] = 2.0 * t
                cst += t * t
        skip = cst <= cfg.lam
        n_skip += int(np.count_nonzero(skip))
        X = np.empty((nb, m))
        obj = np.empty(nb)
        err = np.zeros(nb, dtype=np.int64)
        _kernel.solve_batch(parent_m, cw_m, a_m, lam_m, b, cst, skip, X, obj, err)
        if np.any(err != _kernel.OK):
            raise ComputationError("off-diagonal solver failed on a coordinate")
        obj_off += float(np.sum(obj))
        for knew, old in enumerate(order):
            rows = np.flatnonzero(X[:, knew])
            ek = g_edges[old]
            for r in rows:
                ek[(int(ii[r]), int(jj[r]))] = float(X[r, knew])
            for c in range(C):
                col = X[:, K + knew * C + c]
                rows = np.flatnonzero(col)
                ekc = l_edges[old][c]
                for r in rows:
                    ekc[(int(ii[r]), int(jj[r]))] = float(-col[r])
    t_off = time.perf_counter() - t0

    g_diag_pop = np.empty_like(g_diag)
    g_diag_pop[order] = g_diag
    l_diag_pop = np.empty_like(l_diag)
    l_diag_pop[order] = l_diag

    metadata = {
        "config": cfg.to_dict(),
        "n_categories": C,
        "jitters": jitters,
        "objective": obj_diag + 2.0 * obj_off,
        "n_coordinates": int(ncoord) + int(p),
        "n_prescreened": n_skip,
        "timings": {
            "backward_map": t_maps,
            "diagonal": t_diag,
            "offdiagonal": t_off,
            "total": time.perf_counter() - t_start,
        },
    }
    return CategoricalPrecisionSet(
        genes=list(prob.genes),
        global_diagonals=[g_diag_pop[k] for k in range(K)],
        global_edges=g_edges,
        local_diagonals=[[l_diag_pop[k, c] for c in range(C)] for k in range(K)],
        local_edges=l_edges,
        metadata=metadata,
    )


def categorical_objective(
    result: CategoricalPrecisionSet,
    maps: Sequence[Sequence[np.ndarray]],
    cfg: SolverConfig,
    tree: TreeHypergraph,
) -> float:
    """Literal recompute of the four-term objective from stored components."""
    K = result.n_populations
    C = result.n_categories
    p = result.p
    dense_g = []
    for k in range(K):
        gm = np.zeros((p, p))
        gm[np.arange(p), np.arange(p)] = result.global_diagonals[k]
        for (i, j), v in result.global_edges[k].items():
            gm[i, j] = v
            gm[j, i] = v
        dense_g.append(gm)
    tot = 0.0
    for k in range(K):
        tot += cfg.alpha * float(np.sum(dense_g[k] * dense_g[k]))
        tot += cfg.lam * 2.0 * len(result.global_edges[k])
        for c in range(C):
            lm = np.zeros((p, p))
            lm[np.arange(p), np.arange(p)] = result.local_diagonals[k][c]
            for (i, j), v in result.local_edges[k][c].items():
                lm[i, j] = v
                lm[j, i] = v
            d = dense_g[k] + lm - np.asarray(maps[k][c])
            tot += float(np.sum(d * d))
            tot += cfg.alpha * float(np.sum(lm * lm))
            tot += cfg.lam * 2.0 * len(result.local_edges[k][c])
    for u, v, w in tree.edges:
        d = dense_g[u] - dense_g[v]
        tot += cfg.gamma * w * float(np.sum(d * d))
    return tot
