"""Test-side oracles for the categorical coordinate problem.

The coordinate objective over globals g (one per tree node) and locals l
(one per node and category), with targets f[k, c]:

    F(g, l) = sum_kc (g_k + l_kc - f_kc)^2
              + gamma * sum_{(u,v,w) in tree} w (g_u - g_v)^2
              + lam * (#{g_k != 0} + #{l_kc != 0})
              + alpha * (sum g_k^2 + sum l_kc^2)

`enumerate_coordinate_optimum` minimizes F by trying every support of the
K + K*C variables and solving the restricted quadratic, touching no solver
internals. `coordinate_general_problem` rewrites F for the tree kernel via
y = -l, which turns each squared deviation into a unit-weight coupling
between a global and a local leaf.
"""

import itertools

import numpy as np

from treel0 import GeneralTreeProblem, TreeHypergraph


def coordinate_value(f, g, l, lam, gamma, alpha, tree) -> float:
    f = np.asarray(f, float)
    g = np.asarray(g, float)
    l = np.asarray(l, float)
    val = float(np.sum((g[:, None] + l - f) ** 2))
    for u, v, w in tree.edges:
        val += gamma * w * (g[u] - g[v]) ** 2
    val += lam * (int(np.count_nonzero(g)) + int(np.count_nonzero(l)))
    val += alpha * (float(np.sum(g * g)) + float(np.sum(l * l)))
    return val


def enumerate_coordinate_optimum(f, lam, gamma, alpha, tree):
    """Exact minimum of F by support enumeration and restricted solves."""
    f = np.asarray(f, float)
    K, C = f.shape
    m = K + K * C

    M = alpha * np.eye(m)
    b = np.zeros(m)
    for k in range(K):
        for c in range(C):
            u = np.zeros(m)
            u[k] = 1.0
            u[K + k * C + c] = 1.0
            M += np.outer(u, u)
            b += -2.0 * f[k, c] * u
    for uu, vv, w in tree.edges:
        d = np.zeros(m)
        d[uu] = 1.0
        d[vv] = -1.0
        M += gamma * w * np.outer(d, d)

    best = None
    best_z = None
    for bits in itertools.product((0, 1), repeat=m):
        idx = [i for i, on in enumerate(bits) if on]
        z = np.zeros(m)
        if idx:
            sub = M[np.ix_(idx, idx)]
            # lstsq handles the alpha=0 rank-deficient supports exactly
            z[idx] = np.linalg.lstsq(sub, -0.5 * b[idx], rcond=None)[0]
        g, lmat = z[:K], z[K:].reshape(K, C)
        val = coordinate_value(f, g, lmat, lam, gamma, alpha, tree)
        if best is None or val < best:
            best = val
            best_z = (g.copy(), lmat.copy())
    return best, best_z


def coordinate_general_problem(f, lam, gamma, alpha, tree):
    """Kernel form of F: globals keep the tree, locals hang as unit leaves.

    Returns (problem, order) where order maps BFS global slots back to tree
    nodes; local variable K + knew * C + c belongs to (order[knew], c) with
    sign flipped (y = -l).
    """
    f = np.asarray(f, float)
    K, C = f.shape
    order, parent, coupling = tree.bfs_layout(0)
    m = K + K * C
    parent_m = np.empty(m, dtype=np.int64)
    cw = np.empty(m)
    a = np.full(m, float(alpha))
    bq = np.empty(m)
    lam_v = np.full(m, float(lam))
    parent_m[:K] = parent
    cw[:K] = gamma * coupling
    for knew in range(K):
        kold = int(order[knew])
        bq[knew] = -2.0 * float(np.sum(f[kold]))
        for c in range(C):
            v = K + knew * C + c
            parent_m[v] = knew
            cw[v] = 1.0
            bq[v] = 2.0 * f[kold, c]
    gp = GeneralTreeProblem(parent=parent_m, coupling=cw, quad_a=a, quad_b=bq,
                            l0=lam_v, const=float(np.sum(f * f)))
    return gp, order


def solve_coordinate_via_kernel(f, lam, gamma, alpha, tree):
    """Minimize F with the package's DP; returns (g, l, objective)."""
    f = np.asarray(f, float)
    K, C = f.shape
    gp, order = coordinate_general_problem(f, lam, gamma, alpha, tree)
    z, obj = gp.solve()
    g = np.empty(K)
    l = np.empty((K, C))
    for knew in range(K):
        kold = int(order[knew])
        g[kold] = z[knew]
        for c in range(C):
            l[kold, c] = -z[K + knew * C + c]
    return g, l, float(obj)
