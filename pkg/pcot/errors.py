"""Exception hierarchy shared by every pcot module."""


class PcotError(Exception):
    """Base class for all pcot errors."""


class ConfigError(PcotError):
    """Invalid plan, missing credential or unusable configuration."""


# --- Taxonomy / prompts ---

class UnknownStrategy(PcotError):
    pass


class UnsupportedVariant(PcotError):
    pass


class MissingAnalysis(PcotError):
    pass


class TemplateError(PcotError):
    """Missing template file or a placeholder left unresolved at render time."""


class FailedAnalysis(PcotError):
    pass


# --- Gateway ---

class GatewayError(PcotError):
    def __init__(self, message: str, status_code: int | None = None):
        self.status_code = status_code
        super().__init__(message)


class AuthError(GatewayError):
    """Raised on HTTP 401/403; never retried."""


class ProviderError(GatewayError):
    """Non-retryable provider failure, or retries exhausted."""


class TransientProviderError(GatewayError):
    """HTTP 429/5xx or a timeout; retried with backoff."""


class BudgetExceeded(GatewayError):
    pass


class InvalidPattern(GatewayError):
    pass


# --- Corpus ---

class CorpusError(PcotError):
    pass


class SchemaMismatch(CorpusError):
    pass


class EmptyDataset(CorpusError):
    pass


class SampleTooLarge(CorpusError):
    pass


# --- Metrics / reports ---

class MetricsError(PcotError):
    pass


class EmptyInput(MetricsError):
    pass


class IdMismatch(MetricsError):
    pass


class AllZero(MetricsError):
    pass


class ReportError(PcotError):
    pass


class MissingVariant(ReportError):
    pass
