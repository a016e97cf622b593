"""Exception hierarchy.

The CLI maps these onto exit codes: ``ConfigError`` -> 2, ``DataError`` -> 3,
``SearchDegenerateError`` -> 4.
"""


class HybridScreenError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(HybridScreenError, ValueError):
    """Invalid run configuration or command-line usage."""


class DataError(HybridScreenError, ValueError):
    """Malformed, inconsistent or unsuitable input data."""


class EmptySelectionError(DataError):
    """No feature reaches the requested importance threshold."""


class SearchDegenerateError(HybridScreenError):
    """Every trial of a search was skipped."""


class ArtifactError(DataError):
    """A model artifact could not be parsed or failed validation."""


class TrainingError(HybridScreenError, RuntimeError):
    """Network training diverged (non-finite loss)."""
