"""Synthetic instance generation: trees, cascades, sampling, categories."""

import numpy as np
import pytest

from treel0 import (
    InsufficientZeroPositions,
    NonFiniteInput,
    NotPositiveDefinite,
    ShapeMismatch,
    SynthSpec,
    TreeHypergraph,
    generate,
    generate_categorical,
    generate_hypergraph,
    generate_network_cascade,
    mst_from_distances,
    sample_data,
)


def _support_blocks(a: np.ndarray, b: np.ndarray, M: int, bs: int):
    """Module indices where the off-diagonal supports differ."""
    diff = []
    for mod in range(M):
        lo, hi = mod * bs, (mod + 1) * bs
        sa = np.triu(a[lo:hi, lo:hi], 1) != 0
        sb = np.triu(b[lo:hi, lo:hi], 1) != 0
        if not np.array_equal(sa, sb):
            diff.append(mod)
    return diff


def _value_blocks(a: np.ndarray, b: np.ndarray, M: int, bs: int):
    diff = []
    for mod in range(M):
        lo, hi = mod * bs, (mod + 1) * bs
        if not np.array_equal(a[lo:hi, lo:hi], b[lo:hi, lo:hi]):
            diff.append(mod)
    return diff


class TestMst:
    def test_three_node_frozen(self):
        dist = np.array([[0.0, 1.0, 2.0],
                         [1.0, 0.0, 3.0],
                         [2.0, 3.0, 0.0]])
        tree = mst_from_distances(dist)
        assert tree.edges == ((0, 1, 1.0), (0, 2, 1.0))

    def test_retained_weights_are_one(self):
        rng = np.random.default_rng(40)
        d = np.abs(rng.normal(size=(6, 6)))
        d = 0.5 * (d + d.T)
        np.fill_diagonal(d, 0.0)
        tree = mst_from_distances(d)
        assert all(w == 1.0 for _, _, w in tree.edges)
        assert len(tree.edges) == 5

    def test_rejects_bad_matrices(self):
        with pytest.raises(ShapeMismatch):
            mst_from_distances(np.zeros((2, 3)))
        asym = np.array([[0.0, 1.0], [2.0, 0.0]])
        with pytest.raises(ShapeMismatch):
            mst_from_distances(asym)
        bad = np.array([[0.0, np.inf], [np.inf, 0.0]])
        with pytest.raises(NonFiniteInput):
            mst_from_distances(bad)


class TestHypergraph:
    def test_single_node(self):
        tree = generate_hypergraph(1, 0)
        assert tree.n_nodes == 1 and tree.edges == ()

    def test_connected_and_reproducible(self):
        a = generate_hypergraph(20, 123)
        b = generate_hypergraph(20, 123)
        # the TreeHypergraph constructor enforces connectivity and edge count
        assert len(a.edges) == 19
        assert a.edges == b.edges
        assert all(w == 1.0 for _, _, w in a.edges)
        c = generate_hypergraph(20, 124)
        assert c.edges != a.edges


class TestCascade:
    SPEC = dict(p=24, K=4, n_over_p=2.0, M=4, perturb_modules=2)

    def test_all_networks_positive_definite(self):
        spec = SynthSpec(seed=1, **self.SPEC)
        tree = generate_hypergraph(spec.K, 11)
        mats = generate_network_cascade(spec, tree)
        for m in mats:
            assert np.linalg.eigvalsh(m).min() > 0.0
            assert np.array_equal(m, m.T)

    def test_block_diagonal_structure(self):
        spec = SynthSpec(seed=2, **self.SPEC)
        tree = generate_hypergraph(spec.K, 12)
        bs = spec.block_size
        for m in generate_network_cascade(spec, tree):
            mask = np.zeros_like(m, dtype=bool)
            for mod in range(spec.M):
                lo = mod * bs
                mask[lo:lo + bs, lo:lo + bs] = True
            assert np.all(m[~mask] == 0.0)

    def test_path_children_change_values_not_support(self):
        # on a path no node has degree >= 3, so no module is replaced:
        # supports match everywhere, values differ in <= perturb_modules blocks
        spec = SynthSpec(p=24, K=3, n_over_p=2.0, M=4, perturb_modules=2, seed=3)
        tree = TreeHypergraph.path(3)
        mats = generate_network_cascade(spec, tree)
        bs = spec.block_size
        for parent, child in ((0, 1), (1, 2)):
            assert _support_blocks(mats[parent], mats[child], 4, bs) == []
            changed = _value_blocks(mats[parent], mats[child], 4, bs)
            assert 1 <= len(changed) <= spec.perturb_modules

    def test_branch_node_gets_one_replaced_module(self):
        # node 1 has degree 3, so its copy additionally swaps in a fresh
        # block: support may now differ, but only within one extra module
        spec = SynthSpec(p=24, K=4, n_over_p=2.0, M=4, perturb_modules=2, seed=4)
        tree = TreeHypergraph.from_edges(4, [(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0)])
        mats = generate_network_cascade(spec, tree)
        bs = spec.block_size
        support_diff = _support_blocks(mats[0], mats[1], 4, bs)
        value_diff = _value_blocks(mats[0], mats[1], 4, bs)
        assert len(support_diff) <= 1
        assert len(value_diff) <= spec.perturb_modules + 1

    def test_single_population(self):
        spec = SynthSpec(p=20, K=1, n_over_p=2.0, M=4, seed=5)
        mats = generate_network_cascade(spec, TreeHypergraph.from_edges(1, []))
        assert len(mats) == 1
        assert np.linalg.eigvalsh(mats[0]).min() > 0.0

    def test_edge_magnitudes_stay_above_floor(self):
        spec = SynthSpec(p=24, K=6, n_over_p=2.0, M=4, perturb_modules=3, seed=6)
        tree = generate_hypergraph(spec.K, 13)
        for m in generate_network_cascade(spec, tree):
            off = m[np.triu_indices_from(m, 1)]
            nz = off[off != 0.0]
            assert np.abs(nz).min() >= 1e-3


class TestSampleData:
    def test_identity_precision_large_sample(self):
        em = sample_data(np.eye(5), 100_000, seed=7)
        cov = em.values @ em.values.T / em.n
        assert np.abs(cov - np.eye(5)).max() < 0.05

    def test_single_sample_finite(self):
        em = sample_data(np.eye(3), 1, seed=8)
        assert em.values.shape == (3, 1)
        assert np.all(np.isfinite(em.values))

    def test_seed_reproducibility(self):
        a = sample_data(np.eye(4), 50, seed=9)
        b = sample_data(np.eye(4), 50, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_rejects_indefinite_precision(self):
        with pytest.raises(NotPositiveDefinite):
            sample_data(np.array([[1.0, 2.0], [2.0, 1.0]]), 5, seed=10)

    def test_sample_covariance_tracks_target(self):
        # a correlated 2x2 precision, big n: empirical covariance approaches
        # the true inverse
        theta = np.array([[2.0, -1.0], [-1.0, 2.0]])
        em = sample_data(theta, 200_000, seed=11)
        cov = em.values @ em.values.T / em.n
        assert np.abs(cov - np.linalg.inv(theta)).max() < 0.02


class TestGenerate:
    def test_shapes_and_determinism(self):
        spec = SynthSpec(p=30, K=3, n_over_p=2.0, M=5, seed=12)
        a = generate(spec)
        b = generate(spec)
        assert len(a.precisions) == 3 and len(a.data) == 3
        assert a.data[0].n == 60
        assert a.tree.edges == b.tree.edges
        for k in range(3):
            assert np.array_equal(a.precisions[k], b.precisions[k])
            assert np.array_equal(a.data[k].values, b.data[k].values)

    def test_spec_validation(self):
        with pytest.raises(ShapeMismatch):
            SynthSpec(p=25, K=2, n_over_p=1.0, M=10)   # p not divisible by M
        with pytest.raises(ShapeMismatch):
            SynthSpec(p=30, K=2, n_over_p=1.0, M=10, perturb_modules=11)
        with pytest.raises(ShapeMismatch):
            SynthSpec(p=30, K=2, n_over_p=1.0, local_edge_ratio=1.0)


class TestGenerateCategorical:
    def test_delta_zero_categories_equal_global(self):
        spec = SynthSpec(p=24, K=2, n_over_p=2.0, M=4, seed=13,
                         n_categories=2, local_edge_ratio=0.0)
        gt = generate_categorical(spec)
        for k in range(2):
            for c in range(2):
                assert np.array_equal(gt.category_precisions[k][c],
                                      gt.precisions[k])

    def test_delta_half_doubles_edge_count(self):
        spec = SynthSpec(p=40, K=2, n_over_p=2.0, M=4, seed=14,
                         n_categories=2, local_edge_ratio=0.5)
        gt = generate_categorical(spec)
        for k in range(2):
            shared = int(np.count_nonzero(np.triu(gt.precisions[k], 1)))
            for c in range(2):
                total = int(np.count_nonzero(
                    np.triu(gt.category_precisions[k][c], 1)))
                assert abs((total - shared) - shared) <= 1

    def test_all_category_networks_pd(self):
        spec = SynthSpec(p=40, K=2, n_over_p=2.0, M=4, seed=15,
                         n_categories=3, local_edge_ratio=0.3)
        gt = generate_categorical(spec)
        for row in gt.category_precisions:
            for m in row:
                assert np.linalg.eigvalsh(m).min() > 0.0
        for row in gt.category_data:
            for em in row:
                assert em.n == 80

    def test_insufficient_zero_positions(self):
        # tiny blocks leave almost no room: delta=0.9 demands 9x the shared
        # edges as fresh positions
        spec = SynthSpec(p=8, K=1, n_over_p=1.0, M=2, perturb_modules=1,
                         seed=16, n_categories=2, local_edge_ratio=0.9)
        with pytest.raises(InsufficientZeroPositions):
            generate_categorical(spec)

    def test_requires_category_count(self):
        spec = SynthSpec(p=8, K=1, n_over_p=1.0, M=2, perturb_modules=1, seed=17)
        with pytest.raises(ShapeMismatch):
            generate_categorical(spec)
