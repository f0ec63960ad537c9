"""Gated leaky recurrent networks trained with invariant Riemannian gradients."""
from .seqdata import Alphabet, SymbolSequence, SymbolStats, build_alphabet, compute_stats, xor_mask
from .topology import NetworkTopology, build_random_graph, semi_sparse_connectivity
from .dynamics import LOGISTIC, TANH, DivergenceError, ModelParams, Tape, forward
from .trainer import TrainerConfig, TrainState, train

__version__ = "0.1.0"

from .estimator import SequenceModel  # noqa: E402

__all__ = [
    "Alphabet", "SymbolSequence", "SymbolStats", "build_alphabet", "compute_stats", "xor_mask",
    "NetworkTopology", "build_random_graph", "semi_sparse_connectivity",
    "LOGISTIC", "TANH", "DivergenceError", "ModelParams", "Tape", "forward",
    "TrainerConfig", "TrainState", "train", "SequenceModel",
]
