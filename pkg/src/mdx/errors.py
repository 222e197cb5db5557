"""Exception types shared across the toolkit."""


class MdxError(Exception):
    """Base class for all toolkit errors."""


class LexiconFormatError(MdxError):
    """A term-list file is malformed or internally inconsistent."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorpusFormatError(MdxError):
    """A corpus file record cannot be parsed."""


class MissingTemplateError(MdxError):
    """No self-diagnosis prompt registered for a (language, attribute)."""


class EmptyOverlapError(MdxError):
    """A sentence pair shares no tokens, so it cannot be aligned."""


class TrainingDivergedError(MdxError):
    """Training hit a non-finite loss."""

    def __init__(self, step: int, epoch: int, loss: float):
        self.step = step
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss!r} at epoch {epoch}, step {step}")


class ScoringError(MdxError):
    """A backend query failed; carries position context, chains the cause."""


class ProtocolError(MdxError):
    """A scoring-protocol message violates the wire contract."""


class BridgeTimeoutError(ProtocolError):
    """The bridge process did not answer within the timeout."""


class BridgeExitedError(ProtocolError):
    """The bridge process terminated while a response was pending."""
