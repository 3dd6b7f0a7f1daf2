"""Exception hierarchy.

Each family maps to one CLI exit code (see ``scholarlink.cli``).
"""


class ScholarLinkError(Exception):
    """Base class for every error raised by this package."""


# -- data / schema (exit 5) -------------------------------------------------

class DataError(ScholarLinkError):
    pass


class ParseError(DataError):
    """Input text is not well-formed structured text."""


class SchemaError(DataError):
    """Input parsed, but a canonical key has the wrong shape."""


class InvalidMention(DataError):
    pass


class DatasetError(DataError):
    pass


class PreconditionError(DataError, ValueError):
    """An operation was called with input its contract rules out."""


class MissingExtra(PreconditionError):
    """A query strategy needs an extra that was not supplied."""

    def __init__(self, field: str):
        super().__init__(f"missing extra: {field}")
        self.field = field


class EmptyName(PreconditionError):
    pass


class UnsegmentableName(DataError):
    """No pinyin decomposition exists; carries the opaque token."""

    def __init__(self, name: str):
        super().__init__(f"not segmentable as pinyin: {name!r}")
        self.name = name


class UnknownCharacter(DataError):
    def __init__(self, char: str):
        super().__init__(f"character not in romanization table: {char!r}")
        self.char = char


# -- configuration (exit 3) ------------------------------------------------

class ConfigError(ScholarLinkError):
    pass


# -- backends / providers (exit 4) ------------------------------------------

class GatewayError(ScholarLinkError):
    pass


class BackendUnavailable(GatewayError):
    """Transient search backend failure; callers may retry."""

    retryable = True


class QuotaExceeded(GatewayError):
    retryable = False


class UnknownBackend(GatewayError, KeyError):
    pass


class DuplicateBackend(GatewayError):
    pass


class FetchError(GatewayError):
    def __init__(self, status: int, url: str = ""):
        super().__init__(f"fetch failed with status {status}: {url}")
        self.status = status
        self.url = url


class ExtractionEmpty(GatewayError):
    """Markup stripping left too little text to be useful."""


class ProviderError(GatewayError):
    pass


class UnknownProvider(GatewayError, KeyError):
    pass


class DuplicateProvider(GatewayError):
    pass


class ContentRefusal(GatewayError):
    pass


class SchemaViolation(GatewayError):
    """Provider output still failed validation after the retry budget."""

    def __init__(self, message: str, last_error: str, attempts: int):
        super().__init__(message)
        self.last_error = last_error
        self.attempts = attempts


class TemplateError(ScholarLinkError):
    pass
