"""Exception hierarchy shared across the package."""


class HTCError(Exception):
    """Base class for every error raised by htcprompt."""


# taxonomy
class TaxonomyError(HTCError):
    pass


class EmptyPath(TaxonomyError):
    pass


class InvalidLabel(TaxonomyError):
    pass


class ConflictingParent(TaxonomyError):
    pass


class UnknownNode(TaxonomyError, KeyError):
    pass


class EmptyString(TaxonomyError, ValueError):
    pass


class EmptyTaxonomy(TaxonomyError):
    pass


# dataset
class DatasetError(HTCError):
    pass


class MissingColumn(DatasetError):
    pass


class EmptyLabelCell(DatasetError):
    def __init__(self, rows, columns=None):
        self.rows = list(rows)
        msg = "empty label cell in row(s) " + ", ".join(str(r) for r in self.rows[:20])
        if len(self.rows) > 20:
            msg += f" ... ({len(self.rows)} rows total)"
        if columns:
            msg += f" (columns: {', '.join(columns)})"
        super().__init__(msg)


class EmptyTextCell(DatasetError):
    pass


class DatasetIOError(DatasetError, OSError):
    pass


class KTooLarge(DatasetError, ValueError):
    pass


class NTooLarge(DatasetError, ValueError):
    pass


# normalize
class EmptyCandidateSet(HTCError, ValueError):
    pass


# prompts
class PromptError(HTCError):
    pass


class LeafParent(PromptError):
    pass


class DepthMismatch(PromptError):
    pass


# llm client
class LLMError(HTCError):
    """A request to the completion backend failed."""

    retryable = False


class AuthError(LLMError):
    pass


class TransientError(LLMError):
    """HTTP 429/5xx or connection reset; retried by the client."""

    retryable = True

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class RequestTimeout(LLMError):
    retryable = True


class RateLimitExhausted(LLMError):
    pass


class MalformedResponse(LLMError):
    pass


class ScriptMiss(LLMError):
    pass


# metrics / cost
class AlignmentMismatch(HTCError):
    pass


class ReportDepthMismatch(HTCError):
    pass


class MissingUsage(HTCError):
    pass


class NegativePrice(HTCError, ValueError):
    pass


# persisted artefacts / config
class SchemaMismatch(HTCError):
    pass


class ConfigError(HTCError):
    pass
