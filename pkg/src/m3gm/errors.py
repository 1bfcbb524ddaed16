"""Exception hierarchy. Each class maps to a distinct CLI exit code."""


class M3GMError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class GraphError(M3GMError):
    exit_code = 2


class DuplicateEdgeError(GraphError):
    exit_code = 3


class EdgeNotFoundError(GraphError):
    exit_code = 4


class IdOutOfRangeError(GraphError):
    exit_code = 5


class DataFormatError(M3GMError):
    """Malformed input file (line number included in the message when known)."""

    exit_code = 6


class ConfigError(M3GMError):
    exit_code = 7


class DimensionError(M3GMError):
    """Vector/matrix shape does not match the configured dimension."""

    exit_code = 8


class VocabularyError(M3GMError):
    """A name failed to resolve against the entity or relation table."""

    exit_code = 9


class MissingParametersError(M3GMError):
    """A relation has no trained association parameters."""

    exit_code = 10


class NoCandidateError(M3GMError):
    """Negative sampling found no admissible candidate target."""

    exit_code = 11


class NotFittedError(M3GMError):
    exit_code = 12


class ArtifactMismatchError(M3GMError):
    """Artifacts produced under different configurations were mixed."""

    exit_code = 13
