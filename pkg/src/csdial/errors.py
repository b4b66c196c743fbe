"""Exception types shared across the toolkit."""


class CsdialError(Exception):
    """Base class for all toolkit errors."""


class CorpusError(CsdialError):
    """Malformed corpus input (bad JSON, unreadable file)."""


class ValidationError(CsdialError):
    """A dialogue or schema violates a structural invariant."""

    def __init__(self, message: str, dialogue_id: str | None = None, rule: str | None = None):
        self.dialogue_id = dialogue_id
        self.rule = rule
        prefix = f"dialogue {dialogue_id!r}: " if dialogue_id else ""
        super().__init__(prefix + message)


class CleaningError(CsdialError):
    """Cleaning would drop or orphan a gold annotation."""


class PipelineError(CsdialError):
    """A pipeline stage failed; carries the stage name."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class GeneratorError(CsdialError):
    """The response generator failed for a turn."""

    def __init__(self, stage: str, message: str):
        self.stage = stage
        super().__init__(f"[{stage}] {message}")


class ServiceError(CsdialError):
    """Service-level failure with an HTTP-ish status code."""

    def __init__(self, status: int, message: str):
        self.status = status
        super().__init__(message)
