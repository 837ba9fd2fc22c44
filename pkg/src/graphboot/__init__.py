"""Bootstrapped graph representation learning at desk scale.

Self-supervised node embeddings from an online/target GCN pair: the
online encoder chases an exponential-moving-average target across two
stochastic graph views, optionally pulling each node toward its
neighbors under learned supportiveness weights. Built on an in-package
reverse-mode autodiff engine; numpy is the only numeric dependency.
"""

from .augment import AugmentConfig, edge_drop, feature_mask, sample_views
from .autodiff import Tape, Tensor, backward, detach, finite_diff_check
from .bootstrap import EmaSchedule, ema_decay_at, ema_update
from .encoder import (EncoderState, GCNLayerParams, PredictorParams, gcn_forward,
                      init_encoder_state, load_checkpoint, predictor_forward,
                      save_checkpoint)
from .errors import ConfigError, DataError, NumericError, ParseError, UsageError
from .evaluation import (EvalReport, Split, compactness, evaluate_embeddings,
                         homogeneity, kmeans, linear_probe, nmi, random_splits,
                         s_at_k, weight_homophily_profile)
from .graph import (CsrMatrix, Labels, NeighborList, SparseGraph, edge_homophily,
                    from_undirected_pairs, load_graph, neighbor_list,
                    normalize_adjacency, save_graph)
from .objective import (LossConfig, SupportScores, bgrl_loss, blnn_loss,
                        intra_class_scores, supportiveness, symmetrize,
                        uniform_scores, variant_loss)
from .synth import SbmConfig, generate_sbm
from .trainer import (TrainConfig, TrainResult, compute_embeddings, lr_at,
                      train)

__version__ = "0.1.0"
