"""Whole-matrix inference: assembly, objective accounting, determinism."""

import numpy as np
import pytest

from treel0 import (
    ScalarTreeProblem,
    SolverConfig,
    TreeHypergraph,
    backward_map_set,
    brute_force_offdiag,
    elem0_infer,
    elem0_infer_from_maps,
    elem0_objective,
    sample_covariance,
    solve_diagonal,
)

from conftest import random_expression, random_tree


def _instance(seed, p=5, K=3, n=40):
    rng = np.random.default_rng(seed)
    tree = random_tree(K, rng)
    data = [random_expression(rng, p, n, population=k) for k in range(K)]
    return data, tree


def _maps_for(data, tree, cfg):
    covs = [sample_covariance(em, cfg.center) for em in data]
    return backward_map_set(covs, cfg.nus(len(data)),
                            cfg.jitter_start, cfg.jitter_cap)


class TestIdentities:
    def test_no_penalty_returns_backward_maps(self):
        data, tree = _instance(0)
        cfg = SolverConfig(lam=0.0, gamma=0.0, nu=0.1)
        est = elem0_infer(data, tree, cfg)
        maps = _maps_for(data, tree, cfg)
        for k in range(tree.n_nodes):
            np.testing.assert_allclose(est.to_dense(k), maps[k], atol=1e-10)

    def test_huge_lambda_sparsifies_fully(self):
        data, tree = _instance(1)
        maps = _maps_for(data, tree, SolverConfig(nu=0.1))
        K = tree.n_nodes
        bound = K * max(float(np.max(m * m)) for m in maps) + 1.0
        est = elem0_infer(data, tree, SolverConfig(lam=bound, gamma=0.7, nu=0.1))
        ref = elem0_infer(data, tree, SolverConfig(lam=0.0, gamma=0.7, nu=0.1))
        for k in range(K):
            assert est.edges[k] == {}
            # the l0 weight never touches the diagonal subproblem
            np.testing.assert_array_equal(est.diagonals[k], ref.diagonals[k])

    def test_symmetry_exact(self):
        data, tree = _instance(2)
        est = elem0_infer(data, tree, SolverConfig(lam=0.05, gamma=0.5, nu=0.1))
        for k in range(tree.n_nodes):
            d = est.to_dense(k)
            assert np.array_equal(d, d.T)


class TestObjectiveAccounting:
    def test_assembled_objective_matches_per_coordinate_brute_force(self):
        data, tree = _instance(3, p=6, K=3)
        cfg = SolverConfig(lam=0.08, gamma=0.6, nu=0.1)
        est = elem0_infer(data, tree, cfg)
        maps = _maps_for(data, tree, cfg)
        K, p = tree.n_nodes, 6

        # diagonal block: closed-form optimum of the fused quadratic
        f_diag = np.stack([np.diag(maps[k]) for k in range(K)])
        theta = solve_diagonal(f_diag, cfg.gamma, tree)
        total = float(np.sum((theta - f_diag) ** 2))
        for u, v, w in tree.edges:
            total += cfg.gamma * w * float(np.sum((theta[u] - theta[v]) ** 2))

        # each unordered pair appears twice in full-matrix norms, so the
        # single-count subproblem optimum is doubled
        for i in range(p):
            for j in range(i + 1, p):
                f = np.array([maps[k][i, j] for k in range(K)])
                prob = ScalarTreeProblem(f=f, lam=cfg.lam, gamma=cfg.gamma,
                                         tree=tree)
                _, obj = brute_force_offdiag(prob)
                total += 2.0 * obj

        assert abs(est.metadata["objective"] - total) <= 1e-8 * (1.0 + abs(total))

    def test_objective_recompute_matches_metadata(self):
        data, tree = _instance(4, p=7, K=4)
        cfg = SolverConfig(lam=0.05, gamma=0.9, nu=0.15)
        est = elem0_infer(data, tree, cfg)
        maps = _maps_for(data, tree, cfg)
        recomputed = elem0_objective(est, maps, cfg, tree)
        assert abs(recomputed - est.metadata["objective"]) <= 1e-9 * (1.0 + abs(recomputed))

    def test_objective_zero_when_precision_equals_maps(self):
        data, tree = _instance(5)
        cfg = SolverConfig(lam=0.0, gamma=0.0, nu=0.1)
        est = elem0_infer(data, tree, cfg)
        maps = _maps_for(data, tree, cfg)
        assert elem0_objective(est, maps, cfg, tree) <= 1e-9

    def test_l0_term_counts_both_symmetric_entries(self):
        # one nonzero pair in one population, lam=2: the sparsity term
        # contributes 2 * 2 = 4
        genes = ["a", "b", "c"]
        from treel0 import PrecisionSet
        m = np.eye(3)
        m[0, 1] = m[1, 0] = 0.5
        ps = PrecisionSet.from_dense(genes, [m])
        maps = [m.copy()]
        tree = TreeHypergraph.from_edges(1, [])
        cfg = SolverConfig(lam=2.0, gamma=0.0)
        assert abs(elem0_objective(ps, maps, cfg, tree) - 4.0) < 1e-12


class TestDeterminism:
    def test_thread_count_does_not_change_results(self):
        data, tree = _instance(6, p=10, K=4, n=60)
        outs = []
        for threads in (1, 4):
            cfg = SolverConfig(lam=0.05, gamma=0.8, nu=0.1, threads=threads)
            outs.append(elem0_infer(data, tree, cfg))
        a, b = outs
        for k in range(tree.n_nodes):
            np.testing.assert_array_equal(a.diagonals[k], b.diagonals[k])
            assert a.edges[k] == b.edges[k]
        assert a.metadata["objective"] == b.metadata["objective"]

    def test_repeat_runs_identical(self):
        data, tree = _instance(7)
        cfg = SolverConfig(lam=0.1, gamma=1.0, nu=0.1)
        a = elem0_infer(data, tree, cfg)
        b = elem0_infer(data, tree, cfg)
        for k in range(tree.n_nodes):
            np.testing.assert_array_equal(a.diagonals[k], b.diagonals[k])
            assert a.edges[k] == b.edges[k]


class TestBehaviour:
    def test_sparsity_monotone_in_lambda(self):
        data, tree = _instance(8, p=12, K=3, n=120)
        counts = []
        for lam in (0.01, 0.1):
            est = elem0_infer(data, tree, SolverConfig(lam=lam, gamma=1.0, nu=0.1))
            counts.append(sum(est.df(k) for k in range(tree.n_nodes)))
        assert counts[1] <= counts[0]

    def test_prescreen_counts_reported(self):
        data, tree = _instance(9, p=8, K=3)
        est = elem0_infer(data, tree, SolverConfig(lam=50.0, gamma=0.5, nu=0.1))
        # a lam this large pre-screens every pair and zeroes everything
        assert est.metadata["n_prescreened"] == 8 * 7 // 2
        assert all(est.edges[k] == {} for k in range(tree.n_nodes))

    def test_metadata_timings_present(self):
        data, tree = _instance(10)
        est = elem0_infer(data, tree, SolverConfig())
        t = est.metadata["timings"]
        for key in ("covariance", "backward_map", "diagonal", "offdiagonal", "total"):
            assert key in t and t[key] >= 0.0
        assert est.metadata["jitters"] == [0.0] * tree.n_nodes

    def test_from_maps_equals_full_pipeline(self):
        data, tree = _instance(11)
        cfg = SolverConfig(lam=0.07, gamma=0.9, nu=0.1)
        full = elem0_infer(data, tree, cfg)
        maps = _maps_for(data, tree, cfg)
        part = elem0_infer_from_maps(data[0].genes, maps, tree, cfg)
        for k in range(tree.n_nodes):
            np.testing.assert_array_equal(full.diagonals[k], part.diagonals[k])
            assert full.edges[k] == part.edges[k]
