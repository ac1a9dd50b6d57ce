"""
Custom exceptions for the senti package.
"""
from typing import Optional


class SentiError(Exception):
    """
    Base class for every error raised by senti.
    """


class CorpusError(SentiError):
    """
    Raised when a corpus or lexicon file cannot be read.
    """

    def __init__(self, path, reason: str = "unreadable") -> None:
        self.path = str(path)
        super().__init__(f"Cannot read corpus file {self.path}: {reason}")


class InsufficientDocuments(SentiError):
    """
    Raised when a class (or a requested corpus size) cannot be served from the documents at hand.
    """

    def __init__(self, name: str, requested: int, available: int) -> None:
        self.name = name
        self.requested = requested
        self.available = available
        super().__init__(
            f"Not enough documents for {name}: requested {requested}, available {available}"
        )


class EmptyVocabulary(SentiError):
    """
    Raised when no word survives the minimum-count filter.
    """

    def __init__(self, min_count: int) -> None:
        self.min_count = min_count
        super().__init__(f"Vocabulary is empty after applying min_count={min_count}")


class DimensionMismatch(SentiError):
    """
    Raised when a vector, matrix or model has an unexpected dimension.
    """

    def __init__(self, what: str, expected, actual) -> None:
        self.expected = expected
        self.actual = actual
        super().__init__(f"{what}: expected dimension {expected}, got {actual}")


class ZeroVectorError(SentiError):
    """
    Raised when the cosine of a zero vector is requested.
    """

    def __init__(self, message: str = "Cosine is undefined for a zero vector") -> None:
        super().__init__(message)


class ConvergenceError(SentiError):
    """
    Raised when an optimizer stops before reaching its tolerance.
    """

    def __init__(self, solver: str, residual: float, iterations: int) -> None:
        self.solver = solver
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"{solver} did not converge after {iterations} iterations "
            f"(final residual {residual:.3e})"
        )


class InvalidArchitecture(SentiError):
    """
    Raised when a convolutional network configuration cannot produce integer frame shapes.
    """


class NoKnownTokens(SentiError):
    """
    Raised when a review has no token in the embedding vocabulary.
    """

    def __init__(self, message: str = "Review has no in-vocabulary token") -> None:
        super().__init__(message)


class TrainingDiverged(SentiError):
    """
    Raised when a training loss becomes NaN or infinite.
    """

    def __init__(self, epoch: int, lr: float) -> None:
        self.epoch = epoch
        self.lr = lr
        super().__init__(
            f"Training diverged in epoch {epoch} (loss is not finite); "
            f"try a learning rate smaller than {lr}"
        )


class ProvenanceError(SentiError):
    """
    Raised when a model that has seen validation or test data is used for stacking.
    """

    def __init__(self, model: str, partition: str, overlap: int) -> None:
        self.model = model
        self.partition = partition
        super().__init__(
            f"Model {model} was trained on {overlap} documents of the {partition} set"
        )


class UntrackedDocuments(SentiError):
    """
    Raised when a base model is fitted on documents without a doc_id.
    """

    def __init__(self, model: str, missing: int) -> None:
        self.model = model
        self.missing = missing
        super().__init__(
            f"Model {model} cannot be fitted on {missing} documents without a doc_id; "
            "their provenance could not be checked"
        )


class BaseOrderMismatch(SentiError):
    """
    Raised when base classifiers are passed in a different order than at stacking time.
    """

    def __init__(self, expected, actual) -> None:
        super().__init__(f"Base classifiers {list(actual)} do not match {list(expected)}")


class ConfigError(SentiError):
    """
    Raised for malformed or incomplete experiment configuration.
    """


class StageFailed(SentiError):
    """
    Raised when a pipeline stage aborts; the original error is chained.
    """

    def __init__(self, stage: str, reason: Optional[str] = None) -> None:
        self.stage = stage
        message = f"Stage {stage} failed"
        super().__init__(f"{message}: {reason}" if reason else message)


class ExperimentClosed(SentiError):
    """
    Raised when an operation is attempted on a closed SentimentExperiment.
    """

    def __init__(self, message: str = "The SentimentExperiment is closed") -> None:
        super().__init__(message)
