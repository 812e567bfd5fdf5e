"""Temporal rate reduction clustering for frame-sequence segmentation."""
from .clustering import kmeans, spectral_cluster
from .data import SyntheticSpec, generate_synthetic, load_labels, load_matrix
from .metrics import accuracy, evaluate, nmi
from .objective import (CodingConfig, class_coding_rate, coding_rate, loss_adjoints,
                        relaxed_class_coding_rate, temporal_laplacian, temporal_regularizer,
                        total_loss)
from .sinkhorn import SinkhornConfig, sinkhorn_backward, sinkhorn_project
from .trainer import TrainConfig, finite_diff_check, train

__version__ = "0.1.0"
