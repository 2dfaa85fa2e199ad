"""Exception types shared across the package."""


class RagGuardError(Exception):
    """Base class for all package-specific errors."""


class DimensionError(RagGuardError):
    """Vector or sequence dimensions do not line up."""


class DegenerateVectorError(RagGuardError):
    """An operation that needs a non-zero vector received one with zero norm."""


class DegenerateInputError(RagGuardError):
    """Input has no usable structure (single class, empty denominator, ...)."""


class DomainError(RagGuardError):
    """A numeric argument lies outside its valid range."""


class ConfigError(RagGuardError):
    """Invalid or inconsistent configuration value."""


class EmptyInputError(RagGuardError):
    """An operation that needs at least one element received none."""


class CapacityError(RagGuardError):
    """Requested more items than the bundled lexicons can provide."""


class MissingEmbeddingError(RagGuardError):
    """A required embedding is absent from the supplied lookup."""


class RemoteEmbedError(RagGuardError):
    """Remote embedding endpoint failed."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ProtocolError(RagGuardError):
    """Remote endpoint answered with a malformed payload."""


class DataFormatError(RagGuardError):
    """A dataset or artifact file violates its documented format."""


class ProviderError(RagGuardError):
    """Answerability provider unavailable or returned garbage."""


class GeneratorUnavailableError(RagGuardError):
    """LLM generation endpoint timed out or errored; pipeline may degrade."""
