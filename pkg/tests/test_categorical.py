"""Global + local inference: coordinate exactness, identities, assembly."""

import numpy as np
import pytest

from treel0 import (
    CategoricalProblem,
    ScalarTreeProblem,
    ShapeMismatch,
    SolverConfig,
    TreeHypergraph,
    backward_map,
    categorical_infer,
    categorical_objective,
    sample_covariance,
    solve_offdiag_l0,
)
from treel0.model import CategoricalPrecisionSet

from conftest import random_expression, random_tree
from oracle_utils import (
    coordinate_value,
    enumerate_coordinate_optimum,
    solve_coordinate_via_kernel,
)


def _rel_close(a, b, tol=1e-8):
    return abs(a - b) <= tol * (1.0 + abs(b))


def _cat_instance(seed, p=3, K=2, C=2, n=50):
    rng = np.random.default_rng(seed)
    tree = random_tree(K, rng)
    data = [[random_expression(rng, p, n, population=k) for _ in range(C)]
            for k in range(K)]
    return data, tree


def _cat_maps(data, tree, cfg):
    K = tree.n_nodes
    C = len(data[0])
    nus = cfg.nus(K)
    return [
        [backward_map(sample_covariance(data[k][c], cfg.center).matrix,
                      nus[k], cfg.jitter_start, cfg.jitter_cap)[0]
         for c in range(C)]
        for k in range(K)
    ]


class TestCoordinateFrozen:
    def test_one_global_edge_beats_two_locals(self):
        # identical targets across both categories: a single global at 1.0
        # costs one l0 charge, two locals would cost two
        tree = TreeHypergraph.from_edges(1, [])
        f = np.array([[1.0, 1.0]])
        g, l, obj = solve_coordinate_via_kernel(f, lam=0.1, gamma=0.0,
                                                alpha=0.0, tree=tree)
        np.testing.assert_allclose(g, [1.0], atol=1e-12)
        np.testing.assert_array_equal(l, np.zeros((1, 2)))
        assert abs(obj - 0.1) < 1e-12
        best, _ = enumerate_coordinate_optimum(f, 0.1, 0.0, 0.0, tree)
        assert _rel_close(obj, best)

    def test_zero_targets_zero_everything(self):
        tree = TreeHypergraph.path(2)
        f = np.zeros((2, 2))
        g, l, obj = solve_coordinate_via_kernel(f, lam=0.2, gamma=0.5,
                                                alpha=0.01, tree=tree)
        np.testing.assert_array_equal(g, np.zeros(2))
        np.testing.assert_array_equal(l, np.zeros((2, 2)))
        assert obj == 0.0

    def test_six_variable_instance_matches_enumeration(self):
        rng = np.random.default_rng(20)
        tree = TreeHypergraph.path(2)
        f = rng.normal(size=(2, 2))
        lam, gamma, alpha = 0.15, 0.7, 0.05
        g, l, obj = solve_coordinate_via_kernel(f, lam, gamma, alpha, tree)
        best, _ = enumerate_coordinate_optimum(f, lam, gamma, alpha, tree)
        assert _rel_close(obj, best)
        achieved = coordinate_value(f, g, l, lam, gamma, alpha, tree)
        assert abs(achieved - obj) <= 1e-10 * (1.0 + abs(obj))


class TestCoordinateSweep:
    def test_kernel_matches_enumeration(self):
        rng = np.random.default_rng(21)
        for _ in range(40):
            K = int(rng.integers(1, 4))
            C = int(rng.integers(1, 4))
            tree = random_tree(K, rng)
            f = rng.normal(size=(K, C)) * 1.5
            lam = float(rng.choice([0.01, 0.1, 1.0]))
            gamma = float(rng.choice([0.0, 0.1, 1.0]))
            alpha = float(rng.choice([1e-8, 0.01, 0.5]))
            g, l, obj = solve_coordinate_via_kernel(f, lam, gamma, alpha, tree)
            best, _ = enumerate_coordinate_optimum(f, lam, gamma, alpha, tree)
            assert _rel_close(obj, best), (K, C, lam, gamma, alpha)
            achieved = coordinate_value(f, g, l, lam, gamma, alpha, tree)
            assert abs(achieved - obj) <= 1e-9 * (1.0 + abs(obj))

    def test_shared_signal_prefers_global_component(self):
        tree = TreeHypergraph.from_edges(1, [])
        f = np.full((1, 3), 0.8)
        g, l, obj = solve_coordinate_via_kernel(f, lam=0.1, gamma=0.0,
                                                alpha=0.01, tree=tree)
        assert g[0] != 0.0
        np.testing.assert_array_equal(l, np.zeros((1, 3)))
        best, (g_star, l_star) = enumerate_coordinate_optimum(
            f, 0.1, 0.0, 0.01, tree)
        assert _rel_close(obj, best)
        assert g_star[0] != 0.0 and np.all(l_star == 0.0)

    def test_single_category_near_zero_ridge_reduces_to_standard(self):
        # with one category and vanishing ridge the (g + l) split can mimic
        # any single-component solution, so optima coincide; fusion is kept
        # off because a split global can evade it when gamma > 0
        rng = np.random.default_rng(22)
        for K in (1, 2, 3):
            tree = random_tree(K, rng)
            fvec = rng.normal(size=K)
            lam = 0.2
            g, l, obj = solve_coordinate_via_kernel(
                fvec.reshape(K, 1), lam=lam, gamma=0.0, alpha=1e-8, tree=tree)
            _, obj_std = solve_offdiag_l0(
                ScalarTreeProblem(f=fvec, lam=lam, gamma=0.0, tree=tree))
            assert abs(obj - obj_std) <= 1e-4 * (1.0 + abs(obj_std))


class TestInferEndToEnd:
    def test_every_offdiagonal_coordinate_is_optimal(self):
        data, tree = _cat_instance(23, p=3, K=2, C=2)
        cfg = SolverConfig(lam=0.1, gamma=0.8, nu=0.1, alpha=0.01)
        prob = CategoricalProblem(data, tree, cfg)
        est = categorical_infer(prob)
        maps = _cat_maps(prob.data, tree, cfg)
        K, C, p = 2, 2, 3
        for i in range(p):
            for j in range(i + 1, p):
                f = np.array([[maps[k][c][i, j] for c in range(C)]
                              for k in range(K)])
                g = np.array([est.global_edges[k].get((i, j), 0.0)
                              for k in range(K)])
                l = np.array([[est.local_edges[k][c].get((i, j), 0.0)
                               for c in range(C)] for k in range(K)])
                achieved = coordinate_value(f, g, l, cfg.lam, cfg.gamma,
                                            cfg.alpha, tree)
                best, _ = enumerate_coordinate_optimum(
                    f, cfg.lam, cfg.gamma, cfg.alpha, tree)
                assert _rel_close(achieved, best), (i, j)

    def test_diagonal_coordinates_solve_the_ridge_system(self):
        data, tree = _cat_instance(24, p=3, K=2, C=2)
        cfg = SolverConfig(lam=0.1, gamma=0.8, nu=0.1, alpha=0.01)
        prob = CategoricalProblem(data, tree, cfg)
        est = categorical_infer(prob)
        maps = _cat_maps(prob.data, tree, cfg)
        K, C = 2, 2
        for i in range(3):
            f = np.array([[maps[k][c][i, i] for c in range(C)]
                          for k in range(K)])
            g = np.array([est.global_diagonals[k][i] for k in range(K)])
            l = np.array([[est.local_diagonals[k][c][i] for c in range(C)]
                          for k in range(K)])
            achieved = coordinate_value(f, g, l, 0.0, cfg.gamma, cfg.alpha, tree)
            best, _ = enumerate_coordinate_optimum(f, 0.0, cfg.gamma,
                                                   cfg.alpha, tree)
            # lam=0 makes the all-on support the unconstrained minimum
            assert _rel_close(achieved, best, tol=1e-7)

    def test_decomposition_identity(self):
        data, tree = _cat_instance(25, p=4, K=2, C=2)
        cfg = SolverConfig(lam=0.06, gamma=0.5, nu=0.12, alpha=0.01)
        prob = CategoricalProblem(data, tree, cfg)
        est = categorical_infer(prob)
        maps = _cat_maps(prob.data, tree, cfg)
        recomputed = categorical_objective(est, maps, cfg, tree)
        reported = est.metadata["objective"]
        assert abs(recomputed - reported) <= 1e-9 * (1.0 + abs(recomputed))

    def test_components_symmetric_and_totals_exact(self):
        data, tree = _cat_instance(26, p=4, K=2, C=3)
        cfg = SolverConfig(lam=0.05, gamma=0.4, nu=0.1, alpha=0.01)
        est = categorical_infer(CategoricalProblem(data, tree, cfg))
        totals = est.totals_precision_set()
        assert totals.n_populations == 6
        for k in range(2):
            for c in range(3):
                diag, edges = est.total(k, c)
                flat = totals.to_dense(k * 3 + c)
                assert np.array_equal(flat, flat.T)
                np.testing.assert_array_equal(np.diag(flat), diag)
                for (i, j), v in edges.items():
                    assert flat[i, j] == v

    def test_thread_count_does_not_change_results(self):
        data, tree = _cat_instance(27, p=5, K=3, C=2, n=60)
        outs = []
        for threads in (1, 2):
            cfg = SolverConfig(lam=0.08, gamma=0.6, nu=0.1, alpha=0.01,
                               threads=threads)
            outs.append(categorical_infer(CategoricalProblem(data, tree, cfg)))
        a, b = outs
        for k in range(3):
            np.testing.assert_array_equal(a.global_diagonals[k],
                                          b.global_diagonals[k])
            assert a.global_edges[k] == b.global_edges[k]
            for c in range(2):
                np.testing.assert_array_equal(a.local_diagonals[k][c],
                                              b.local_diagonals[k][c])
                assert a.local_edges[k][c] == b.local_edges[k][c]

    def test_rejects_single_category_and_zero_ridge(self):
        data, tree = _cat_instance(28, C=2)
        single = [[row[0]] for row in data]
        with pytest.raises(ShapeMismatch):
            CategoricalProblem(single, tree, SolverConfig(alpha=0.01))
        with pytest.raises(ShapeMismatch):
            CategoricalProblem(data, tree, SolverConfig(alpha=0.0))


class TestCategoricalObjective:
    def test_zero_components_zero_maps(self):
        genes = ["a", "b"]
        cs = CategoricalPrecisionSet(
            genes=genes,
            global_diagonals=[np.zeros(2)],
            global_edges=[{}],
            local_diagonals=[[np.zeros(2), np.zeros(2)]],
            local_edges=[[{}, {}]],
            metadata={},
        )
        maps = [[np.zeros((2, 2)), np.zeros((2, 2))]]
        tree = TreeHypergraph.from_edges(1, [])
        cfg = SolverConfig(lam=0.5, gamma=0.0, alpha=0.01)
        assert categorical_objective(cs, maps, cfg, tree) == 0.0

    def test_single_global_edge_counting(self):
        # deviation cancels when the maps equal the component; what is left
        # is lam * 2 for the symmetric pair plus ridge alpha * 2 v^2
        v, lam, alpha = 0.7, 0.3, 0.05
        genes = ["a", "b"]
        cs = CategoricalPrecisionSet(
            genes=genes,
            global_diagonals=[np.zeros(2)],
            global_edges=[{(0, 1): v}],
            local_diagonals=[[np.zeros(2), np.zeros(2)]],
            local_edges=[[{}, {}]],
            metadata={},
        )
        m = np.array([[0.0, v], [v, 0.0]])
        maps = [[m, m]]
        tree = TreeHypergraph.from_edges(1, [])
        cfg = SolverConfig(lam=lam, gamma=0.0, alpha=alpha)
        expect = lam * 2.0 + alpha * 2.0 * v * v
        got = categorical_objective(cs, maps, cfg, tree)
        assert abs(got - expect) < 1e-12
