"""Shared exception types."""


class FovnerfError(Exception):
    """Base class for all package errors."""


class DegenerateInputError(FovnerfError):
    """Input is geometrically degenerate (zero vector, coincident points)."""


class OutOfDomainError(FovnerfError):
    """Input lies outside the domain a component was built for."""


class ConfigError(FovnerfError):
    """Invalid or inconsistent configuration."""


class ModelFormatError(FovnerfError):
    """Base class for model (de)serialization failures."""


class MagicMismatchError(ModelFormatError):
    """Stream does not start with the expected magic bytes."""


class TruncatedStreamError(ModelFormatError):
    """Stream ended before all declared fields were read."""


class ShapeMismatchError(ModelFormatError):
    """Declared weight shapes disagree with the payload size."""


class ManifestError(FovnerfError):
    """Base class for dataset manifest failures."""


class MissingFileError(ManifestError):
    """A file referenced by the manifest does not exist."""


class ChecksumError(ManifestError):
    """A referenced file does not match its recorded checksum."""


class SchemaVersionError(ManifestError):
    """Manifest schema version is not supported."""


class InfeasibleSearchError(FovnerfError):
    """No candidate configuration satisfies the latency budget."""
