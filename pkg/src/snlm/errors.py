"""Exception types shared across the toolkit."""


class SnlmError(Exception):
    """Base class for all toolkit errors."""


class DataError(SnlmError):
    """Invalid or unreadable input data (corpora, vocabularies, class files)."""


class ModelFormatError(SnlmError):
    """Malformed, truncated or incompatible model file."""


class TrainingDivergedError(SnlmError):
    """Training aborted because the objective blew up."""
