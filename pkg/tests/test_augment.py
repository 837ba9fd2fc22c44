"""Stochastic view generation: column masking, symmetric edge dropping,
two-view sampling."""

import numpy as np
import pytest

from graphboot.augment import AugmentConfig, edge_drop, feature_mask, sample_views
from graphboot.errors import ConfigError
from graphboot.graph import from_undirected_pairs

from helpers import complete_graph, random_graph


class TestAugmentConfig:
    def test_defaults_valid(self):
        cfg = AugmentConfig()
        assert cfg.p_m1 == cfg.p_d1 == cfg.p_m2 == cfg.p_d2 == 0.2

    @pytest.mark.parametrize("field", ["p_m1", "p_d1", "p_m2", "p_d2"])
    @pytest.mark.parametrize("bad", [-0.1, 1.0, 1.5])
    def test_probability_range(self, field, bad):
        with pytest.raises(ConfigError):
            AugmentConfig(**{field: bad})


class TestFeatureMask:
    def test_zero_probability_is_identity(self, rng):
        X = rng.normal(size=(5, 8))
        np.testing.assert_array_equal(feature_mask(X, 0.0, rng), X)

    def test_masked_columns_zero_across_all_rows(self, rng):
        X = rng.normal(size=(20, 30)) + 5.0  # no accidental zeros
        out = feature_mask(X, 0.5, rng)
        col_zero = (out == 0.0).all(axis=0)
        col_intact = (out == X).all(axis=0)
        assert (col_zero | col_intact).all()
        assert col_zero.any() and col_intact.any()

    def test_survivor_count_concentrates(self):
        """Binomial(10000, 0.5) keeps between 4800 and 5200 columns."""
        X = np.ones((2, 10000))
        for seed in range(5):
            out = feature_mask(X, 0.5, np.random.default_rng(seed))
            survivors = int((out[0] != 0).sum())
            assert 4800 <= survivors <= 5200

    def test_input_not_mutated(self, rng):
        X = np.ones((3, 40))
        feature_mask(X, 0.5, rng)
        np.testing.assert_array_equal(X, np.ones((3, 40)))

    def test_bad_probability(self, rng):
        with pytest.raises(ConfigError):
            feature_mask(np.ones((2, 2)), 1.0, rng)


class TestEdgeDrop:
    def test_zero_probability_keeps_graph(self, rng):
        g = random_graph(12, 0.4, 3, rng)
        out = edge_drop(g, 0.0, rng)
        np.testing.assert_array_equal(out.row_ptr, g.row_ptr)
        np.testing.assert_array_equal(out.col_idx, g.col_idx)
        np.testing.assert_array_equal(out.features, g.features)

    def test_subgraph_and_symmetric(self, rng):
        for _ in range(10):
            g = random_graph(15, 0.3, 2, rng)
            out = edge_drop(g, 0.5, rng)
            assert out.n_nodes == g.n_nodes
            orig = {tuple(p) for p in g.undirected_pairs()}
            kept = {tuple(p) for p in out.undirected_pairs()}
            assert kept <= orig  # no edge creation
            src, dst = out.directed_pairs()
            directed = set(zip(src.tolist(), dst.tolist()))
            assert directed == {(j, i) for i, j in directed}  # symmetric
            assert all(i != j for i, j in directed)  # self-loop free

    def test_high_probability_on_k4(self, rng):
        g = complete_graph(4, n_features=2)
        survived = [edge_drop(g, 0.99, rng).n_undirected_edges for _ in range(20)]
        assert max(survived) <= 2
        assert min(survived) >= 0

    def test_kept_count_concentrates(self):
        """10000 undirected edges at p_d = 0.5 keep 4800..5200 w.h.p."""
        pairs = np.column_stack((np.zeros(10000, dtype=np.int64),
                                 np.arange(1, 10001, dtype=np.int64)))
        g = from_undirected_pairs(10001, pairs, np.ones((10001, 1)))
        for seed in range(5):
            out = edge_drop(g, 0.5, np.random.default_rng(seed))
            assert 4800 <= out.n_undirected_edges <= 5200

    def test_bad_probability(self, rng):
        with pytest.raises(ConfigError):
            edge_drop(complete_graph(3), 1.0, rng)


class TestSampleViews:
    def test_zero_config_returns_input(self, rng):
        g = random_graph(10, 0.4, 4, rng)
        cfg = AugmentConfig(p_m1=0.0, p_d1=0.0, p_m2=0.0, p_d2=0.0)
        (g1, x1), (g2, x2) = sample_views(g, g.features, cfg, rng)
        for gv, xv in ((g1, x1), (g2, x2)):
            np.testing.assert_array_equal(gv.col_idx, g.col_idx)
            np.testing.assert_array_equal(xv, g.features)

    def test_same_seed_reproduces_views(self, rng):
        g = random_graph(10, 0.4, 4, rng)
        cfg = AugmentConfig()
        (a1, xa1), (a2, xa2) = sample_views(g, g.features, cfg,
                                            np.random.default_rng(99))
        (b1, xb1), (b2, xb2) = sample_views(g, g.features, cfg,
                                            np.random.default_rng(99))
        np.testing.assert_array_equal(a1.col_idx, b1.col_idx)
        np.testing.assert_array_equal(a2.col_idx, b2.col_idx)
        np.testing.assert_array_equal(xa1, xb1)
        np.testing.assert_array_equal(xa2, xb2)

    def test_views_differ_from_each_other(self, rng):
        """Independent sub-streams make identical views vanishingly rare."""
        g = random_graph(30, 0.3, 50, rng)
        cfg = AugmentConfig(p_m1=0.5, p_d1=0.5, p_m2=0.5, p_d2=0.5)
        same = 0
        for seed in range(10):
            (g1, x1), (g2, x2) = sample_views(g, g.features, cfg,
                                              np.random.default_rng(seed))
            if np.array_equal(x1, x2) and np.array_equal(g1.col_idx, g2.col_idx):
                same += 1
        assert same == 0

    def test_node_count_preserved(self, rng):
        g = random_graph(10, 0.5, 3, rng)
        (g1, _), (g2, _) = sample_views(g, g.features, AugmentConfig(), rng)
        assert g1.n_nodes == g2.n_nodes == 10
