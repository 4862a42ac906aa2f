from __future__ import annotations


class KGPRError(Exception):
    """Base class for operational errors (CLI exit code 1)."""

    category = "error"


class GraphFormatError(KGPRError):
    category = "graph-format"

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class EmptyGraphError(KGPRError):
    category = "empty-graph"


class InfeasibleError(KGPRError):
    category = "infeasible"


class NotInGraphError(KGPRError):
    category = "not-in-graph"


class SchemaError(KGPRError):
    category = "schema"

    def __init__(self, message: str, line: int | None = None) -> None:
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GeneratorError(KGPRError):
    category = "generator"

    def __init__(self, message: str, triplet_id: int | None = None) -> None:
        self.triplet_id = triplet_id
        if triplet_id is not None:
            message = f"triplet {triplet_id}: {message}"
        super().__init__(message)


class EmptyDatasetError(KGPRError):
    category = "empty-dataset"


class EmptyTextError(KGPRError):
    category = "empty-text"


class DegenerateEmbeddingError(KGPRError):
    category = "degenerate-embedding"


class CheckpointError(KGPRError):
    category = "checkpoint"


class FingerprintMismatchError(KGPRError):
    category = "fingerprint-mismatch"


class ConfigError(KGPRError):
    category = "config"
