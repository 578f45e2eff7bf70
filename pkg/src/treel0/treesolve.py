"""Per-coordinate subproblem solvers and their brute-force oracle.

Two problem layers:

* ScalarTreeProblem is the user-facing form: K targets f on a tree, one
  l0 weight, one fusion weight, optional uniform ridge and per-variable
  exemptions. Objective (single count per unordered population pair):

      g(x) = sum_k (x_k - f_k)^2 + lam * sum_k 1[x_k != 0, not exempt]
             + gamma * sum_edges W_kl (x_k - x_l)^2 + ridge * sum_k x_k^2

* GeneralTreeProblem is the internal node/edge form consumed by the
  compiled kernel and shared with the categorical reduction:

      sum_v [a_v x_v^2 + b_v x_v + lam_v 1[x_v != 0]]
      + sum_v>0 c_v (x_v - x_parent)^2 + const
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from . import _kernel
from .errors import ShapeMismatch, ComputationError, TooLargeForOracle
from .model import TreeHypergraph

_ORACLE_MAX_VARS = 20


@dataclass
class GeneralTreeProblem:
    """Node/edge quadratic + l0 problem in BFS order (parent[v] < v)."""

    parent: np.ndarray        # (m,) int64, parent[0] = -1
    coupling: np.ndarray      # (m,) float, weight to parent, [0] unused
    quad_a: np.ndarray        # (m,)
    quad_b: np.ndarray        # (m,)
    l0: np.ndarray            # (m,) per-node weight, 0 = exempt
    const: float = 0.0

    def __post_init__(self):
        self.parent = np.ascontiguousarray(self.parent, dtype=np.int64)
        self.coupling = np.ascontiguousarray(self.coupling, dtype=np.float64)
        self.quad_a = np.ascontiguousarray(self.quad_a, dtype=np.float64)
        self.quad_b = np.ascontiguousarray(self.quad_b, dtype=np.float64)
        self.l0 = np.ascontiguousarray(self.l0, dtype=np.float64)
        m = self.parent.shape[0]
        for arr in (self.coupling, self.quad_a, self.quad_b, self.l0):
            if arr.shape != (m,):
                raise ShapeMismatch("problem arrays disagree on node count")
        if m == 0 or self.parent[0] != -1 or any(
            not (0 <= self.parent[v] < v) for v in range(1, m)
        ):
            raise ShapeMismatch("parent array is not in BFS order")

    @property
    def n_nodes(self) -> int:
        return self.parent.shape[0]

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        tot = self.const
        tot += float(np.sum(self.quad_a * x * x + self.quad_b * x))
        tot += float(np.sum(self.l0[x != 0.0]))
        for v in range(1, self.n_nodes):
            d = x[v] - x[self.parent[v]]
            tot += self.coupling[v] * d * d
        return tot

    def _interaction_matrix(self) -> np.ndarray:
        m = self.n_nodes
        M = np.diag(self.quad_a.copy())
        for v in range(1, m):
            u = self.parent[v]
            w = self.coupling[v]
            M[v, v] += w
            M[u, u] += w
            M[u, v] -= w
            M[v, u] -= w
        return M

    def solve(self) -> Tuple[np.ndarray, float]:
        """Global minimizer and objective via the DP kernel."""
        m = self.n_nodes
        X = np.zeros((1, m))
        obj = np.zeros(1)
        err = np.zeros(1, dtype=np.int64)
        _kernel.solve_batch(
            self.parent, self.coupling, self.quad_a, self.l0,
            self.quad_b.reshape(1, m), np.array([self.const]),
            np.zeros(1, dtype=np.bool_), X, obj, err,
        )
        if err[0] == _kernel.ERR_UNBOUNDED:
            raise ComputationError("subproblem is unbounded below")
        if err[0] != _kernel.OK:
            raise ComputationError("piecewise-quadratic buffer overflow")
        return X[0], float(obj[0])

    def message_piece_counts(self) -> np.ndarray:
        """Piece count of each non-root node's upward message V_v."""
        counts = np.zeros(self.n_nodes, dtype=np.int64)
        x = np.zeros(self.n_nodes)
        err = _kernel.solve_single_stats(
            self.parent, self.coupling, self.quad_a, self.l0, self.quad_b,
            x, counts,
        )
        if err != _kernel.OK:
            raise ComputationError("kernel failed while collecting statistics")
        return counts

    def brute_force(self) -> Tuple[np.ndarray, float]:
        """Exact minimum by support enumeration over the penalized nodes.

        For each support S the reduced quadratic is solved with the penalized
        complement pinned at zero and lam charged for all of S; enumerating
        all S covers every support pattern, so the best value is the true
        optimum. Singular reduced systems (possible with zero ridge) fall
        back to a least-squares solve, which is valid because the objective
        is bounded below, making the normal equations consistent.
        """
        m = self.n_nodes
        penalized = np.flatnonzero(self.l0 > 0.0)
        if penalized.size > _ORACLE_MAX_VARS:
            raise TooLargeForOracle(
                f"{penalized.size} penalized variables exceeds 2^{_ORACLE_MAX_VARS} enumeration"
            )
        exempt = np.flatnonzero(self.l0 <= 0.0)
        M = self._interaction_matrix()
        best_obj = np.inf
        best_x = np.zeros(m)
        for mask in range(1 << penalized.size):
            sel = [penalized[i] for i in range(penalized.size) if mask >> i & 1]
            free = np.concatenate([np.asarray(sel, dtype=np.int64), exempt])
            free.sort()
            x = np.zeros(m)
            if free.size:
                sub = M[np.ix_(free, free)]
                rhs = -0.5 * self.quad_b[free]
                try:
                    sol = np.linalg.solve(sub, rhs)
                    if not np.all(np.isfinite(sol)) or (
                        np.linalg.norm(sub @ sol - rhs)
                        > 1e-8 * (1.0 + np.linalg.norm(rhs))
                    ):
                        raise np.linalg.LinAlgError
                except np.linalg.LinAlgError:
                    sol = np.linalg.lstsq(sub, rhs, rcond=None)[0]
                x[free] = sol
            obj = self.objective(x)
            # objective() charges l0 only where x != 0; add the charge for
            # selected-but-zero variables so each S is costed as lam*|S|
            for v in sel:
                if x[v] == 0.0:
                    obj += self.l0[v]
            if obj < best_obj:
                best_obj = obj
                best_x = x
        return best_x, float(best_obj)


@dataclass
class ScalarTreeProblem:
    """One off-diagonal coordinate: targets f over populations on a tree.

    ridge may be a scalar or a per-variable array; exempt marks variables
    whose l0 charge is waived.
    """

    f: np.ndarray
    lam: float
    gamma: float
    tree: TreeHypergraph
    ridge: float | np.ndarray = 0.0
    exempt: Optional[np.ndarray] = None
    root: int = 0

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=np.float64)
        if self.f.shape != (self.tree.n_nodes,):
            raise ShapeMismatch("f length differs from tree node count")
        if self.exempt is not None:
            self.exempt = np.asarray(self.exempt, dtype=bool)
            if self.exempt.shape != self.f.shape:
                raise ShapeMismatch("exemption mask length differs from f")
        self.ridge = np.broadcast_to(
            np.asarray(self.ridge, dtype=np.float64), self.f.shape
        ).copy()
        if not (np.isfinite(self.lam) and np.isfinite(self.gamma)):
            raise ShapeMismatch("lam and gamma must be finite")
        if not np.all(np.isfinite(self.ridge)) or np.any(self.ridge < 0.0):
            raise ShapeMismatch("ridge must be finite and nonnegative")

    def to_general(self) -> Tuple[GeneralTreeProblem, np.ndarray]:
        """BFS-ordered general problem plus the order (new -> old) used."""
        order, parent, coupling = self.tree.bfs_layout(self.root)
        K = self.tree.n_nodes
        fb = self.f[order]
        lam_v = np.full(K, float(self.lam))
        if self.exempt is not None:
            lam_v[self.exempt[order]] = 0.0
        gp = GeneralTreeProblem(
            parent=parent,
            coupling=self.gamma * coupling,
            quad_a=1.0 + self.ridge[order],
            quad_b=-2.0 * fb,
            l0=lam_v,
            const=float(np.sum(fb * fb)),
        )
        return gp, order

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        tot = float(np.sum((x - self.f) ** 2)) + float(np.sum(self.ridge * x * x))
        mask = x != 0.0
        if self.exempt is not None:
            mask = mask & ~self.exempt
        tot += self.lam * int(np.count_nonzero(mask))
        for u, v, w in self.tree.edges:
            tot += self.gamma * w * (x[u] - x[v]) ** 2
        return tot


def _reorder_back(x_bfs: np.ndarray, order: np.ndarray) -> np.ndarray:
    out = np.empty_like(x_bfs)
    out[order] = x_bfs
    return out


def solve_offdiag_l0(prob: ScalarTreeProblem) -> Tuple[np.ndarray, float]:
    """Exact global minimizer (population order) and its objective."""
    gp, order = prob.to_general()
    x_bfs, obj = gp.solve()
    return _reorder_back(x_bfs, order), obj


def brute_force_offdiag(prob: ScalarTreeProblem) -> Tuple[np.ndarray, float]:
    """Support-enumeration oracle in population order."""
    gp, order = prob.to_general()
    x_bfs, obj = gp.brute_force()
    return _reorder_back(x_bfs, order), obj


def solve_diagonal(f: np.ndarray, gamma: float, tree: TreeHypergraph) -> np.ndarray:
    """Minimize sum_k (t_k - f_k)^2 + gamma sum W_kl (t_k - t_l)^2.

    f may be (K,) or (K, ncols); columns are independent coordinates. The
    SPD system (I + gamma * L_W) theta = f is solved by leaf-first
    elimination on the tree, O(K) per column.
    """
    f = np.asarray(f, dtype=np.float64)
    single = f.ndim == 1
    cols = f.reshape(tree.n_nodes, -1)
    if cols.shape[0] != tree.n_nodes:
        raise ShapeMismatch("f rows differ from tree node count")
    order, parent, coupling = tree.bfs_layout(0)
    theta_bfs = _kernel.solve_quadratic_tree(
        parent, gamma * coupling, np.ones(tree.n_nodes),
        np.ascontiguousarray(cols[order]),
    )
    theta = np.empty_like(theta_bfs)
    theta[order] = theta_bfs
    return theta[:, 0] if single else theta
