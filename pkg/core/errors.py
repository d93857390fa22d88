"""
Feedback Classifier Errors
==========================
Exception hierarchy shared by every core module.

Library code raises these; only the CLI turns them into exit codes:
- DataFormatError, CheckpointError        → 1
- ConfigError, VocabularyMismatchError    → 2
- DivergenceError                         → 3
"""

from typing import Optional


class FeedbackError(Exception):
    """Base class for all feedback classifier errors"""


class ShapeError(FeedbackError, ValueError):
    """Operand shapes do not conform"""


class NumericalError(FeedbackError, ArithmeticError):
    """A computation produced a non-finite value"""


class MissingCacheError(FeedbackError):
    """Backward pass requested without the forward caches it needs"""


class DataFormatError(FeedbackError, ValueError):
    """Malformed dataset or embedding content"""

    def __init__(self, message: str, line_number: Optional[int] = None, path: Optional[str] = None):
        self.line_number = line_number
        self.path = path
        location = ""
        if path is not None:
            location += f"{path}"
        if line_number is not None:
            location += f"{':' if location else 'line '}{line_number}"
        super().__init__(f"{location}: {message}" if location else message)


class EmbeddingDimensionError(DataFormatError):
    """Embedding file dimension differs from the requested dimension"""


class ConfigError(FeedbackError, ValueError):
    """Invalid or unknown configuration value"""


class DivergenceError(FeedbackError):
    """Training produced a non-finite loss"""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, batch {batch}")


class CheckpointError(FeedbackError):
    """Checkpoint or model directory is unreadable or inconsistent"""


class VocabularyMismatchError(FeedbackError):
    """Vocabulary hash does not match the model manifest"""
