"""
Feedback Classifier Core - CNN and CNN+GRU Sentence Taggers
===========================================================
From-scratch convolutional and convolutional-recurrent classifiers for
six-tag customer feedback (comment, complaint, request, bug, meaningless,
undetermined).

Key Modules:
- numerics: float64 kernels, activations, seeded generators, finite differences
- corpus: TSV datasets, tokenization, vocabulary, embeddings, synthetic corpus
- layers: embedding, convolution, pooling, dropout, softmax and GRU layers
- models: CnnModel / CnnGruModel with exact backward passes
- training: TrainConfig, mini-batch SGD, gradient-check harness
- evaluation: per-tag precision/recall/F1 with the -1 sentinel
- checkpoint: parameter files and model directories
- config: preset / file / flag layering
- persistence_manager: run ledger (run_db schema)
- logging_manager: hierarchical run logging
- cli: command-line entry point

Usage:
    from core import load_config, build_model, train
    config = load_config(preset="en")
"""

from .checkpoint import ModelManifest, load_checkpoint, load_model_dir, save_checkpoint, write_model_dir
from .config import load_config
from .corpus import (
    TAGS, DatasetSplit, EmbeddingTable, EncodedExample, FeedbackRecord, Vocabulary, build_vocabulary,
    encode_split, expand_multilabel, generate_synthetic, load_embeddings, load_tsv, pad_encode, tokenize,
)
from .errors import (
    CheckpointError, ConfigError, DataFormatError, DivergenceError, EmbeddingDimensionError, FeedbackError,
    MissingCacheError, NumericalError, ShapeError, VocabularyMismatchError,
)
from .evaluation import EvalReport, TagMetrics, format_report, parse_report, score
from .logging_manager import LoggingManager, close_all_loggers, get_logging_manager, get_phase_logger
from .models import CnnModel, CnnGruModel, Prediction, build_model, cnn_forward, cnn_gru_forward, model_backward, predict
from .persistence_manager import RunPersistence
from .training import EpochReport, TrainConfig, TrainedModel, gradient_check_run, sgd_step, train

__version__ = "1.0.0"

__all__ = [
    # Data
    'TAGS',
    'FeedbackRecord',
    'DatasetSplit',
    'EncodedExample',
    'Vocabulary',
    'EmbeddingTable',
    'load_tsv',
    'tokenize',
    'build_vocabulary',
    'pad_encode',
    'encode_split',
    'expand_multilabel',
    'load_embeddings',
    'generate_synthetic',

    # Models
    'CnnModel',
    'CnnGruModel',
    'Prediction',
    'build_model',
    'cnn_forward',
    'cnn_gru_forward',
    'model_backward',
    'predict',

    # Training
    'TrainConfig',
    'EpochReport',
    'TrainedModel',
    'train',
    'sgd_step',
    'gradient_check_run',
    'load_config',

    # Evaluation
    'EvalReport',
    'TagMetrics',
    'score',
    'format_report',
    'parse_report',

    # Persistence
    'ModelManifest',
    'save_checkpoint',
    'load_checkpoint',
    'write_model_dir',
    'load_model_dir',
    'RunPersistence',

    # Logging helpers
    'LoggingManager',
    'get_logging_manager',
    'close_all_loggers',
    'get_phase_logger',

    # Errors
    'FeedbackError',
    'ShapeError',
    'NumericalError',
    'MissingCacheError',
    'DataFormatError',
    'EmbeddingDimensionError',
    'ConfigError',
    'DivergenceError',
    'CheckpointError',
    'VocabularyMismatchError',
]
