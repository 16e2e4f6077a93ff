"""Multi-domain text classification with adversarial shared-private
features and a batch-output confidence term."""

try:
    from ._core import (
        CheckpointError,
        ConfigError,
        ConstraintError,
        DataError,
        DomainError,
        ParseError,
        RowIndexError,
        ShapeError,
        TrainingError,
        batch_entropy,
        batch_frobenius,
        evaluate,
        gen_synthetic,
        row_partials,
        train,
        verify_opposite_monotonicity,
    )
except ImportError:  # in-tree builds put the extension on sys.path directly
    from _core import (
        CheckpointError,
        ConfigError,
        ConstraintError,
        DataError,
        DomainError,
        ParseError,
        RowIndexError,
        ShapeError,
        TrainingError,
        batch_entropy,
        batch_frobenius,
        evaluate,
        gen_synthetic,
        row_partials,
        train,
        verify_opposite_monotonicity,
    )

__all__ = [
    "CheckpointError",
    "ConfigError",
    "ConstraintError",
    "DataError",
    "DomainError",
    "ParseError",
    "RowIndexError",
    "ShapeError",
    "TrainingError",
    "batch_entropy",
    "batch_frobenius",
    "evaluate",
    "gen_synthetic",
    "row_partials",
    "train",
    "verify_opposite_monotonicity",
]
