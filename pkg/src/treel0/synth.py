"""Synthetic benchmark generator: modular networks cascaded along a tree.

The ground truth for K populations starts from one block-diagonal network of
M preferential-attachment modules and walks the population tree breadth-first
from node 0; each child copies its parent and perturbs the nonzero
off-diagonals of a few randomly chosen modules, and at branch points (tree
degree >= 3) additionally swaps one unperturbed module for a fresh one.
Diagonals are set to the row's absolute off-diagonal sum plus a margin, which
makes every network strictly diagonally dominant, hence positive definite.

A perturbation that would leave an edge magnitude below 1e-3 is re-drawn, so
true supports stay well separated from zero (the underlying description does
not address near-cancellation; tests rely on supports being unambiguous).

Categorical mode keeps the cascade networks as shared (global) structure and
adds, per category, e_local = round(delta/(1-delta) * e_shared) new edges at
previously-zero within-module positions, making local edges the fraction
delta of each category network's total.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    InsufficientZeroPositions,
    NonFiniteInput,
    NotPositiveDefinite,
    ShapeMismatch,
)
from .model import ExpressionMatrix, TreeHypergraph

_MIN_EDGE_MAGNITUDE = 1e-3


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic instance."""

    p: int
    K: int
    n_over_p: float
    M: int = 10
    ba_edges_per_node: int = 1
    perturb_modules: int = 3
    weight_low: float = 0.5
    weight_high: float = 1.0
    pd_margin: float = 0.1
    seed: int = 0
    n_categories: Optional[int] = None
    local_edge_ratio: float = 0.0

    def __post_init__(self):
        if self.p < 1 or self.K < 1 or self.M < 1:
            raise ShapeMismatch("p, K and M must be positive")
        if self.p % self.M != 0:
            raise ShapeMismatch(f"p={self.p} not divisible by M={self.M}")
        if self.p // self.M <= self.ba_edges_per_node:
            raise ShapeMismatch("module size must exceed ba_edges_per_node")
        if self.perturb_modules > self.M:
            raise ShapeMismatch("perturb_modules cannot exceed M")
        if self.n_over_p <= 0:
            raise ShapeMismatch("n_over_p must be positive")
        if not (0.0 <= self.local_edge_ratio < 1.0):
            raise ShapeMismatch("local_edge_ratio must satisfy 0 <= delta < 1")
        if self.weight_low < 0.0 or self.weight_low > self.weight_high:
            raise ShapeMismatch("need 0 <= weight_low <= weight_high")
        if self.n_categories is not None and self.n_categories < 2:
            raise ShapeMismatch("categorical mode needs at least 2 categories")

    @property
    def n_samples(self) -> int:
        return int(round(self.n_over_p * self.p))

    @property
    def block_size(self) -> int:
        return self.p // self.M

    def to_dict(self) -> dict:
        return {
            "p": self.p, "K": self.K, "n_over_p": self.n_over_p, "M": self.M,
            "ba_edges_per_node": self.ba_edges_per_node,
            "perturb_modules": self.perturb_modules,
            "weight_low": self.weight_low, "weight_high": self.weight_high,
            "pd_margin": self.pd_margin, "seed": self.seed,
            "n_categories": self.n_categories,
            "local_edge_ratio": self.local_edge_ratio,
        }


@dataclass
class GroundTruth:
    """Everything a benchmark run needs: truths, tree, and sampled data.

    In categorical mode `precisions` holds the shared (global) networks,
    `data` is empty, and the per-category fields are populated instead.
    """

    spec: SynthSpec
    tree: TreeHypergraph
    precisions: List[np.ndarray]
    data: List[ExpressionMatrix]
    category_precisions: Optional[List[List[np.ndarray]]] = None
    category_data: Optional[List[List[ExpressionMatrix]]] = None


def mst_from_distances(dist: np.ndarray) -> TreeHypergraph:
    """Minimum spanning tree of a symmetric distance matrix, weights set to 1.

    Kruskal with deterministic (distance, i, j) ordering; ties cannot change
    the returned tree across platforms because the full sort key is total.
    """
    dist = np.asarray(dist, dtype=np.float64)
    if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
        raise ShapeMismatch("distance matrix must be square")
    if not np.all(np.isfinite(dist)):
        raise NonFiniteInput("distance matrix contains non-finite values")
    if np.abs(dist - dist.T).max(initial=0.0) > 1e-9:
        raise ShapeMismatch("distance matrix must be symmetric")
    K = dist.shape[0]
    if K < 1:
        raise ShapeMismatch("K must be positive")
    cands = []
    for i in range(K):
        for j in range(i + 1, K):
            cands.append((float(dist[i, j]), i, j))
    cands.sort()
    uf_parent = list(range(K))

    def find(x: int) -> int:
        while uf_parent[x] != x:
            uf_parent[x] = uf_parent[uf_parent[x]]
            x = uf_parent[x]
        return x

    edges = []
    for _, i, j in cands:
        ri, rj = find(i), find(j)
        if ri != rj:
            uf_parent[rj] = ri
            edges.append((i, j, 1.0))
            if len(edges) == K - 1:
                break
    return TreeHypergraph.from_edges(K, edges)


def generate_hypergraph(K: int, seed) -> TreeHypergraph:
    """MST of a symmetric K x K matrix of |N(0,1)| draws, weights set to 1."""
    if K < 1:
        raise ShapeMismatch("K must be positive")
    rng = np.random.default_rng(seed)
    dist = np.zeros((K, K))
    for i in range(K):
        for j in range(i + 1, K):
            d = abs(float(rng.standard_normal()))
            dist[i, j] = d
            dist[j, i] = d
    return mst_from_distances(dist)


def _random_sign_weight(rng: np.random.Generator, lo: float, hi: float) -> float:
    w = float(rng.uniform(lo, hi))
    return w if rng.random() < 0.5 else -w


def _fresh_module(rng: np.random.Generator, size: int, m: int,
                  lo: float, hi: float) -> np.ndarray:
    """One preferential-attachment block with signed random weights."""
    g = nx.barabasi_albert_graph(size, m, seed=int(rng.integers(0, 2**32)))
    block = np.zeros((size, size))
    for u, v in sorted(g.edges()):
        w = _random_sign_weight(rng, lo, hi)
        block[u, v] = w
        block[v, u] = w
    return block


def _perturb_inplace(mat: np.ndarray, lo: int, hi: int,
                     rng: np.random.Generator) -> None:
    """Add Uniform(-1,1) to each nonzero off-diagonal pair of one block."""
    for i in range(lo, hi):
        for j in range(i + 1, hi):
            if mat[i, j] != 0.0:
                while True:
                    cand = mat[i, j] + float(rng.uniform(-1.0, 1.0))
                    if abs(cand) >= _MIN_EDGE_MAGNITUDE:
                        break
                mat[i, j] = cand
                mat[j, i] = cand


def _apply_pd_diagonal(mat: np.ndarray, margin: float) -> None:
    off = np.sum(np.abs(mat), axis=1) - np.abs(np.diag(mat))
    mat[np.arange(mat.shape[0]), np.arange(mat.shape[0])] = off + margin


def generate_network_cascade(spec: SynthSpec, tree: TreeHypergraph,
                             rng: Optional[np.random.Generator] = None) -> List[np.ndarray]:
    """True precision matrices for every population, in population order."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed).spawn(2)[1])
    if tree.n_nodes != spec.K:
        raise ShapeMismatch("tree size differs from spec.K")
    b = spec.block_size
    root = np.zeros((spec.p, spec.p))
    for mod in range(spec.M):
        lo = mod * b
        root[lo:lo + b, lo:lo + b] = _fresh_module(
            rng, b, spec.ba_edges_per_node, spec.weight_low, spec.weight_high
        )
    order, parent, _ = tree.bfs_layout(0)
    degrees = tree.degrees()
    mats: List[Optional[np.ndarray]] = [None] * spec.K
    mats[order[0]] = root
    for v in range(1, spec.K):
        child = int(order[v])
        mat = mats[int(order[parent[v]])].copy()
        chosen = rng.choice(spec.M, size=spec.perturb_modules, replace=False)
        for mod in sorted(int(x) for x in chosen):
            _perturb_inplace(mat, mod * b, (mod + 1) * b, rng)
        if degrees[child] >= 3:
            others = [m for m in range(spec.M) if m not in set(int(x) for x in chosen)]
            if others:
                mod = int(others[int(rng.integers(0, len(others)))])
                lo = mod * b
                mat[lo:lo + b, lo:lo + b] = _fresh_module(
                    rng, b, spec.ba_edges_per_node, spec.weight_low, spec.weight_high
                )
        mats[child] = mat
    out = []
    for k in range(spec.K):
        m = mats[k]
        _apply_pd_diagonal(m, spec.pd_margin)
        out.append(m)
    return out


def sample_data(theta: np.ndarray, n: int, seed,
                population: int = 0) -> ExpressionMatrix:
    """n zero-mean Gaussian columns with covariance inverse(theta)."""
    theta = np.asarray(theta, dtype=np.float64)
    p = theta.shape[0]
    try:
        chol = np.linalg.cholesky(theta)
    except np.linalg.LinAlgError:
        raise NotPositiveDefinite("cannot sample: precision matrix is not PD") from None
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((p, n))
    # theta = L L^T, so X = L^{-T} Z has covariance inverse(theta)
    values = solve_triangular(chol.T, z, lower=False)
    genes = [f"g{i + 1}" for i in range(p)]
    return ExpressionMatrix(values, genes, population=population)


def _zero_positions_within_blocks(mat: np.ndarray, spec: SynthSpec) -> List[Tuple[int, int]]:
    pool = []
    b = spec.block_size
    for mod in range(spec.M):
        lo = mod * b
        for i in range(lo, lo + b):
            for j in range(i + 1, lo + b):
                if mat[i, j] == 0.0:
                    pool.append((i, j))
    return pool


def generate_categorical_truth(
    globals_: Sequence[np.ndarray],
    spec: SynthSpec,
    rng: np.random.Generator,
) -> List[List[np.ndarray]]:
    """Per-(population, category) truths: shared edges plus fresh local ones."""
    C = spec.n_categories or 0
    delta = spec.local_edge_ratio
    out: List[List[np.ndarray]] = []
    for k, g in enumerate(globals_):
        e_shared = int(np.count_nonzero(np.triu(g, 1)))
        e_local = int(round(delta / (1.0 - delta) * e_shared))
        pool = _zero_positions_within_blocks(g, spec)
        row = []
        for c in range(C):
            mat = g.copy()
            if e_local > 0:
                if e_local > len(pool):
                    raise InsufficientZeroPositions(
                        f"population {k + 1} category {c + 1}: need {e_local} zero"
                        f" positions, only {len(pool)} available"
                    )
                picks = rng.choice(len(pool), size=e_local, replace=False)
                for idx in sorted(int(x) for x in picks):
                    i, j = pool[idx]
                    while True:
                        w = float(rng.uniform(-1.0, 1.0))
                        if abs(w) >= _MIN_EDGE_MAGNITUDE:
                            break
                    mat[i, j] = w
                    mat[j, i] = w
                # untouched copies keep the global matrix bit-for-bit; the
                # recompute is only needed once edges were added
                _apply_pd_diagonal(mat, spec.pd_margin)
            row.append(mat)
        out.append(row)
    return out


def generate(spec: SynthSpec) -> GroundTruth:
    """Full instance: tree, truths, and sampled expression data."""
    ss = np.random.SeedSequence(spec.seed)
    ss_tree, ss_cascade, ss_sample, ss_cat = ss.spawn(4)
    tree = generate_hypergraph(spec.K, ss_tree)
    truths = generate_network_cascade(spec, tree, np.random.default_rng(ss_cascade))
    n = spec.n_samples
    if spec.n_categories is None:
        sample_seeds = ss_sample.spawn(spec.K)
        data = [
            sample_data(truths[k], n, sample_seeds[k], population=k)
            for k in range(spec.K)
        ]
        return GroundTruth(spec=spec, tree=tree, precisions=truths, data=data)
    C = spec.n_categories
    cat_truths = generate_categorical_truth(
        truths, spec, np.random.default_rng(ss_cat)
    )
    sample_seeds = ss_sample.spawn(spec.K * C)
    cat_data = [
        [
            sample_data(cat_truths[k][c], n, sample_seeds[k * C + c], population=k)
            for c in range(C)
        ]
        for k in range(spec.K)
    ]
    return GroundTruth(
        spec=spec, tree=tree, precisions=truths, data=[],
        category_precisions=cat_truths, category_data=cat_data,
    )


def generate_categorical(spec: SynthSpec) -> GroundTruth:
    """Categorical instance; spec.n_categories must be set."""
    if spec.n_categories is None:
        raise ShapeMismatch("spec.n_categories is required for categorical generation")
    return generate(spec)
