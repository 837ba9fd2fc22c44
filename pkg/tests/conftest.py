import numpy as np
import pytest

from graphboot.graph import Labels
from graphboot.synth import SbmConfig, generate_sbm


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sbm():
    """A 40-node, 2-class graph with clear structure; shared-read only."""
    cfg = SbmConfig(n_nodes=40, n_classes=2, p_intra=0.4, p_inter=0.05,
                    feature_dim=6, class_mean_separation=2.0, noise_std=0.5,
                    seed=7)
    return generate_sbm(cfg)


@pytest.fixture(scope="session")
def check_graph():
    """The 12-node, 2-class graph used by the gradient checks."""
    cfg = SbmConfig(n_nodes=12, n_classes=2, p_intra=0.6, p_inter=0.2,
                    feature_dim=6, seed=3)
    return generate_sbm(cfg)


@pytest.fixture
def two_class_labels():
    def make(values):
        return Labels(np.asarray(values, dtype=np.int64), 2)
    return make
