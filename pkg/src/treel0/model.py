"""Problem types and input validation.

Conventions used throughout the package:

* nodes (populations) and genes are 0-based in memory, 1-based in files;
* the population tree is rooted at node 0 deterministically;
* estimated precision matrices are stored sparsely as a dense diagonal plus
  an upper-triangle edge dict {(i, j): value} with i < j and value != 0.0 —
  absent pairs mean exact zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    MismatchedGeneSets,
    NonFiniteInput,
    NotATree,
    ShapeMismatch,
)

EdgeDict = Dict[Tuple[int, int], float]


# ---------------------------------------------------------------------------
# expression data


@dataclass
class ExpressionMatrix:
    """Genes x samples expression of one population."""

    values: np.ndarray          # (p, n) float64
    genes: List[str]
    samples: Optional[List[str]] = None
    population: int = 0         # 0-based population index

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ShapeMismatch("expression matrix must be 2-D (genes x samples)")
        if self.values.shape[0] != len(self.genes):
            raise ShapeMismatch(
                f"{self.values.shape[0]} rows but {len(self.genes)} gene names"
            )
        if len(set(self.genes)) != len(self.genes):
            raise MismatchedGeneSets("duplicate gene names within one population")
        if self.samples is None:
            self.samples = [f"s{i + 1}" for i in range(self.values.shape[1])]
        if len(self.samples) != self.values.shape[1]:
            raise ShapeMismatch(
                f"{self.values.shape[1]} columns but {len(self.samples)} sample names"
            )

    @property
    def p(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]


# ---------------------------------------------------------------------------
# population tree


class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        self.parent[rb] = ra
        return True


@dataclass(frozen=True)
class TreeHypergraph:
    """Spanning tree over K populations with positive edge weights.

    Edges are undirected; each is stored once as (u, v, w) with u < v.
    """

    n_nodes: int
    edges: Tuple[Tuple[int, int, float], ...]

    @staticmethod
    def from_edges(n_nodes: int, edges: Sequence[Tuple[int, int, float]]) -> "TreeHypergraph":
        if n_nodes < 1:
            raise NotATree("tree needs at least one node")
        canon = []
        for u, v, w in edges:
            u, v, w = int(u), int(v), float(w)
            if not (0 <= u < n_nodes and 0 <= v < n_nodes):
                raise NotATree(f"edge ({u}, {v}) references a node outside 0..{n_nodes - 1}")
            if u == v:
                raise NotATree(f"self-loop at node {u}")
            if not np.isfinite(w) or w <= 0.0:
                raise NotATree(f"edge ({u}, {v}) has non-positive or non-finite weight {w}")
            canon.append((min(u, v), max(u, v), w))
        if len(canon) != n_nodes - 1:
            raise NotATree(f"{len(canon)} edges for {n_nodes} nodes; a tree needs {n_nodes - 1}")
        uf = _UnionFind(n_nodes)
        for u, v, _ in canon:
            if not uf.union(u, v):
                raise NotATree(f"edge ({u}, {v}) closes a cycle")
        canon.sort()
        return TreeHypergraph(n_nodes=n_nodes, edges=tuple(canon))

    def neighbors(self) -> List[List[Tuple[int, float]]]:
        adj: List[List[Tuple[int, float]]] = [[] for _ in range(self.n_nodes)]
        for u, v, w in self.edges:
            adj[u].append((v, w))
            adj[v].append((u, w))
        return adj

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for u, v, _ in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def bfs_layout(self, root: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """BFS relabeling from `root`.

        Returns (order, parent, coupling): `order[new] = old` node ids in BFS
        order, `parent[new]` the new index of the parent (-1 for the root) so
        parent[i] < i for every i > 0, and `coupling[new]` the weight of the
        edge to the parent (0.0 for the root).
        """
        adj = self.neighbors()
        order = np.empty(self.n_nodes, dtype=np.int64)
        parent = np.full(self.n_nodes, -1, dtype=np.int64)
        coupling = np.zeros(self.n_nodes, dtype=np.float64)
        new_of = np.full(self.n_nodes, -1, dtype=np.int64)
        order[0] = root
        new_of[root] = 0
        head, tail = 0, 1
        while head < tail:
            cur_new = head
            cur_old = order[head]
            head += 1
            for nb, w in sorted(adj[cur_old]):
                if new_of[nb] < 0:
                    new_of[nb] = tail
                    order[tail] = nb
                    parent[tail] = cur_new
                    coupling[tail] = w
                    tail += 1
        if tail != self.n_nodes:
            raise NotATree("tree is not connected")
        return order, parent, coupling

    @staticmethod
    def path(n_nodes: int, weight: float = 1.0) -> "TreeHypergraph":
        return TreeHypergraph.from_edges(
            n_nodes, [(i, i + 1, weight) for i in range(n_nodes - 1)]
        )


# ---------------------------------------------------------------------------
# solver configuration


@dataclass(frozen=True)
class SolverConfig:
    """Parameters of one inference run.

    `nu_per_population`, when given, overrides the shared `nu` per population;
    model selection only searches the shared value.
    """

    lam: float = 0.1
    gamma: float = 1.0
    nu: float = 0.1
    alpha: float = 0.01          # ridge used by the categorical extension only
    center: bool = True
    nu_per_population: Optional[Tuple[float, ...]] = None
    jitter_start: float = 1e-6
    jitter_cap: float = 1e-2
    envelope_tolerance: float = 1e-12
    threads: int = 1

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0 or self.nu < 0 or self.alpha < 0:
            raise ShapeMismatch("lam, gamma, nu and alpha must be non-negative")
        if self.jitter_start <= 0 or self.jitter_cap < self.jitter_start:
            raise ShapeMismatch("jitter schedule needs 0 < start <= cap")
        if self.threads < 1:
            raise ShapeMismatch("threads must be >= 1")

    def nus(self, n_pop: int) -> List[float]:
        if self.nu_per_population is None:
            return [float(self.nu)] * n_pop
        if len(self.nu_per_population) != n_pop:
            raise ShapeMismatch("nu_per_population length != number of populations")
        return [float(v) for v in self.nu_per_population]

    def with_params(self, **kw) -> "SolverConfig":
        return replace(self, **kw)

    def to_dict(self) -> dict:
        return {
            "lam": self.lam,
            "gamma": self.gamma,
            "nu": self.nu,
            "alpha": self.alpha,
            "center": self.center,
            "nu_per_population": list(self.nu_per_population)
            if self.nu_per_population is not None
            else None,
            "jitter_start": self.jitter_start,
            "jitter_cap": self.jitter_cap,
            "envelope_tolerance": self.envelope_tolerance,
            "threads": self.threads,
        }

    @staticmethod
    def from_dict(d: dict) -> "SolverConfig":
        d = dict(d)
        if "lambda" in d:            # JSON configs may use the display name
            d["lam"] = d.pop("lambda")
        npp = d.get("nu_per_population")
        if npp is not None:
            d["nu_per_population"] = tuple(float(v) for v in npp)
        known = {
            "lam", "gamma", "nu", "alpha", "center", "nu_per_population",
            "jitter_start", "jitter_cap", "envelope_tolerance", "threads",
        }
        return SolverConfig(**{k: v for k, v in d.items() if k in known})


# ---------------------------------------------------------------------------
# estimates


def _check_edge_dict(p: int, edges: EdgeDict) -> EdgeDict:
    out: EdgeDict = {}
    for (i, j), v in edges.items():
        i, j, v = int(i), int(j), float(v)
        if not (0 <= i < j < p):
            raise ShapeMismatch(f"edge index ({i}, {j}) outside upper triangle of p={p}")
        if v == 0.0:
            continue                 # absent means exact zero
        out[(i, j)] = v
    return out


@dataclass
class PrecisionSet:
    """K sparse symmetric precision estimates over a shared gene list."""

    genes: List[str]
    diagonals: List[np.ndarray]      # K arrays of shape (p,)
    edges: List[EdgeDict]            # K upper-triangle dicts, values != 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        p = len(self.genes)
        if len(self.diagonals) != len(self.edges):
            raise ShapeMismatch("diagonals and edges disagree on population count")
        self.diagonals = [np.asarray(d, dtype=np.float64) for d in self.diagonals]
        for d in self.diagonals:
            if d.shape != (p,):
                raise ShapeMismatch("diagonal length != number of genes")
        self.edges = [_check_edge_dict(p, e) for e in self.edges]

    @property
    def n_populations(self) -> int:
        return len(self.diagonals)

    @property
    def p(self) -> int:
        return len(self.genes)

    def to_dense(self, k: int) -> np.ndarray:
        p = self.p
        out = np.zeros((p, p), dtype=np.float64)
        out[np.arange(p), np.arange(p)] = self.diagonals[k]
        for (i, j), v in self.edges[k].items():
            out[i, j] = v
            out[j, i] = v
        return out

    def support(self, k: int) -> set:
        return set(self.edges[k].keys())

    def df(self, k: int) -> int:
        """Nonzero unordered off-diagonal pairs of population k."""
        return len(self.edges[k])

    @staticmethod
    def from_dense(genes: List[str], mats: Sequence[np.ndarray], metadata: dict | None = None) -> "PrecisionSet":
        diagonals, edges = [], []
        for m in mats:
            m = np.asarray(m, dtype=np.float64)
            diagonals.append(np.diag(m).copy())
            iu, ju = np.nonzero(np.triu(m, 1))
            edges.append({(int(i), int(j)): float(m[i, j]) for i, j in zip(iu, ju)})
        return PrecisionSet(list(genes), diagonals, edges, metadata or {})


@dataclass
class CategoricalPrecisionSet:
    """Global + per-category local components for K populations, C categories."""

    genes: List[str]
    global_diagonals: List[np.ndarray]            # K x (p,)
    global_edges: List[EdgeDict]                  # K
    local_diagonals: List[List[np.ndarray]]       # K x C x (p,)
    local_edges: List[List[EdgeDict]]             # K x C
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        p = len(self.genes)
        K = len(self.global_diagonals)
        if len(self.global_edges) != K or len(self.local_diagonals) != K or len(self.local_edges) != K:
            raise ShapeMismatch("component lists disagree on population count")
        self.global_diagonals = [np.asarray(d, dtype=np.float64) for d in self.global_diagonals]
        self.global_edges = [_check_edge_dict(p, e) for e in self.global_edges]
        C = len(self.local_diagonals[0]) if K else 0
        for k in range(K):
            if len(self.local_diagonals[k]) != C or len(self.local_edges[k]) != C:
                raise ShapeMismatch("category count differs across populations")
            self.local_diagonals[k] = [np.asarray(d, dtype=np.float64) for d in self.local_diagonals[k]]
            self.local_edges[k] = [_check_edge_dict(p, e) for e in self.local_edges[k]]

    @property
    def n_populations(self) -> int:
        return len(self.global_diagonals)

    @property
    def n_categories(self) -> int:
        return len(self.local_diagonals[0]) if self.global_diagonals else 0

    @property
    def p(self) -> int:
        return len(self.genes)

    def total(self, k: int, c: int) -> Tuple[np.ndarray, EdgeDict]:
        """Diagonal and edges of the total network global_k + local_{k,c}."""
        diag = self.global_diagonals[k] + self.local_diagonals[k][c]
        edges: EdgeDict = dict(self.global_edges[k])
        for key, v in self.local_edges[k][c].items():
            s = edges.get(key, 0.0) + v
            if s == 0.0:
                edges.pop(key, None)
            else:
                edges[key] = s
        return diag, edges

    def totals_precision_set(self) -> PrecisionSet:
        """All (k, c) totals flattened to a PrecisionSet in (k major, c minor) order."""
        diagonals, edges = [], []
        for k in range(self.n_populations):
            for c in range(self.n_categories):
                d, e = self.total(k, c)
                diagonals.append(d)
                edges.append(e)
        return PrecisionSet(list(self.genes), diagonals, edges, dict(self.metadata))


# ---------------------------------------------------------------------------
# validation


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteInput(f"{what} contains NaN or infinity")


def validate_run_inputs(
    data: Sequence[ExpressionMatrix],
    tree: TreeHypergraph,
    cfg: SolverConfig,
) -> List[ExpressionMatrix]:
    """Validate one inference run and canonicalize gene order.

    Gene identity is matched by name; every population is re-ordered to
    population 0's gene order. Returns the re-ordered copies.
    """
    if len(data) != tree.n_nodes:
        raise ShapeMismatch(
            f"{len(data)} expression matrices for a {tree.n_nodes}-node tree"
        )
    if len(data) == 0:
        raise ShapeMismatch("need at least one population")
    cfg.nus(len(data))               # validates the per-population override length
    ref = data[0]
    ref_set = set(ref.genes)
    _require_finite(ref.values, "population 1 expression")
    if ref.n < 1:
        raise ShapeMismatch("population 1 has no samples")
    out = [ExpressionMatrix(ref.values.copy(), list(ref.genes), list(ref.samples), 0)]
    for k, em in enumerate(data[1:], start=1):
        if set(em.genes) != ref_set:
            raise MismatchedGeneSets(
                f"population {k + 1} gene set differs from population 1"
            )
        _require_finite(em.values, f"population {k + 1} expression")
        if em.n < 1:
            raise ShapeMismatch(f"population {k + 1} has no samples")
        if em.genes == ref.genes:
            vals = em.values.copy()
        else:
            idx = [em.genes.index(g) for g in ref.genes]
            vals = em.values[idx, :].copy()
        out.append(ExpressionMatrix(vals, list(ref.genes), list(em.samples), k))
    return out
