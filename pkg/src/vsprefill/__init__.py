"""Desk-scale vertical-slash sparse prefill attention: aggregation, indexer, selection, theory."""

from .attention import (
    AttentionInputs,
    AttentionOutput,
    SparsePattern,
    attention_recall,
    blockwise_attention,
    full_attention,
    sparse_attention,
)
from .datagen import PlantSpec, Sample, SuiteSpec, generate, make_suite, read_tensor, write_tensor
from .indexer import IndexerParams, TrainConfig, indexer_forward, load_checkpoint, save_checkpoint, train
from .kernels import BACKEND
from .numerics import RopeConfig, Rng
from .sparsity import BudgetConfig, SelectedIndices, select_pattern
from .theory import GaussianQKModel, expected_score, monte_carlo_score, slash_spectrum
from .vsaggregate import VSScores, aggregate_naive, aggregate_streaming

__version__ = "0.1.0"
