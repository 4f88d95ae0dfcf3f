"""Exception hierarchy shared by all ansel modules.

Two families matter to callers: ValidationError covers bad data and bad
arguments (CLI exit code 4), ProviderError covers anything that went wrong
talking to a model provider (CLI exit code 3).
"""


class AnselError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(AnselError):
    """Invalid data, arguments, or file contents."""


class ProviderError(AnselError):
    """A model provider call failed or could not be attempted."""


# -- core types --------------------------------------------------------------

class DimensionMismatch(ValidationError):
    pass


class NonFiniteValue(ValidationError):
    pass


class MixedDimensions(ValidationError):
    pass


# -- hygiene -----------------------------------------------------------------

class DegenerateEmbedding(ValidationError):
    """Vector has (or is left with) no usable mass to normalize."""


class EmptyCorpus(ValidationError):
    pass


# -- shotlist ----------------------------------------------------------------

class CountMismatch(ValidationError):
    pass


class MalformedLine(ValidationError):
    pass


class RetriesExhausted(ProviderError):
    """Shot list generation gave up; carries the last failure reason."""

    def __init__(self, attempts: int, last_reason: str):
        super().__init__(f"gave up after {attempts} attempts: {last_reason}")
        self.attempts = attempts
        self.last_reason = last_reason


# -- retrieval ---------------------------------------------------------------

class NoCandidates(ValidationError):
    pass


class EmptyInput(ValidationError):
    pass


class NotEnoughFrames(ValidationError):
    pass


# -- facegeom ----------------------------------------------------------------

class NoFaces(ValidationError):
    pass


# -- baseline ----------------------------------------------------------------

class InvalidSegmentCount(ValidationError):
    pass


class SingleBlock(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class CoverageGap(ValidationError):
    pass


class InvalidK(ValidationError):
    pass


# -- media -------------------------------------------------------------------

class SourceUnreadable(ValidationError):
    pass


class ManifestInvalid(ValidationError):
    pass


class CropOutOfBounds(ValidationError):
    pass


class TooManyImages(ValidationError):
    pass


# -- providers ---------------------------------------------------------------

class LmUnavailable(ProviderError):
    pass


class AuthMissing(ProviderError):
    pass


class BudgetExceeded(ProviderError):
    pass


class ProviderUnavailable(ProviderError):
    pass


class EmbeddingDimMismatch(ProviderError):
    pass


class PayloadTooLarge(ProviderError):
    pass


class UndecodableImage(ValidationError):
    pass


class BadMagic(ValidationError):
    pass


class VersionUnsupported(ValidationError):
    pass


class TruncatedPayload(ValidationError):
    pass


# -- evaluation --------------------------------------------------------------

class MethodCountInvalid(ValidationError):
    pass


class DuplicateVote(ValidationError):
    pass


class UnknownEvent(ValidationError):
    pass


class OutOfRangeScore(ValidationError):
    pass
