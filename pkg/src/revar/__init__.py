"""Variance-regularized semi-supervised node classification on class-imbalanced graphs."""

from .augment import AugmentConfig, GraphView, ViewPair, drop_edges, make_views, mask_features
from .autodiff import Tensor, backward, grad_check, no_grad
from .config import RunConfig, TrainConfig
from .errors import *  # noqa: F401,F403
from .graph import ClassCounts, Graph, SplitMasks, SplitSpec, imbalance_ratio, load_dataset, make_split, synth_graph
from .losses import LossWeights
from .nn import EncoderConfig, ModelParams, classifier_forward, encoder_forward, init_params
from .sparse import SparseMatrix, normalize_adjacency, spmm
from .trainer import RunResult, grid_search, train_run

__version__ = "0.1.0"
