"""Stochastic graph views: feature masking and edge dropping.

Each training step draws two views of the input graph. A view shares the
node set; it masks whole feature columns with one Bernoulli vector and
keeps each undirected edge independently, mirrored so the result stays
symmetric. Neighbor sets used by the losses always come from the
original graph, never from a view.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graph import SparseGraph, from_undirected_pairs


@dataclass
class AugmentConfig:
    """Per-view masking and dropping probabilities, each in [0, 1)."""

    p_m1: float = 0.2
    p_d1: float = 0.2
    p_m2: float = 0.2
    p_d2: float = 0.2

    def __post_init__(self):
        for name in ("p_m1", "p_d1", "p_m2", "p_d2"):
            v = getattr(self, name)
            if not (0.0 <= v < 1.0):
                raise ConfigError(f"augmentation probability {name}={v} outside [0, 1)")


def feature_mask(X: np.ndarray, p_m: float, rng: np.random.Generator) -> np.ndarray:
    """Zero out feature columns with one Bernoulli(1 - p_m) keep vector.

    The same column mask applies to every row. Returns a new array.
    """
    if not (0.0 <= p_m < 1.0):
        raise ConfigError(f"p_m={p_m} outside [0, 1)")
    keep = rng.random(X.shape[1]) >= p_m
    return X * keep[None, :]


def edge_drop(g: SparseGraph, p_d: float, rng: np.random.Generator) -> SparseGraph:
    """Keep each undirected edge with probability 1 - p_d, both directions.

    Node count and features are unchanged; isolated nodes may appear.
    """
    if not (0.0 <= p_d < 1.0):
        raise ConfigError(f"p_d={p_d} outside [0, 1)")
    pairs = g.undirected_pairs()
    keep = rng.random(len(pairs)) >= p_d
    return from_undirected_pairs(g.n_nodes, pairs[keep], g.features)


def sample_views(g: SparseGraph, X: np.ndarray, cfg: AugmentConfig,
                 rng: np.random.Generator
                 ) -> tuple[tuple[SparseGraph, np.ndarray], tuple[SparseGraph, np.ndarray]]:
    """Draw two independent views (graph, masked features) of (g, X)."""
    rng1, rng2 = rng.spawn(2)
    view1 = (edge_drop(g, cfg.p_d1, rng1), feature_mask(X, cfg.p_m1, rng1))
    view2 = (edge_drop(g, cfg.p_d2, rng2), feature_mask(X, cfg.p_m2, rng2))
    return view1, view2
