"""Exception types shared across the reader, interpreter and tooling."""

from __future__ import annotations


class MiniLispError(Exception):
    """Base class for every error this package raises on purpose."""

    def __init__(self, message, span=None):
        super().__init__(message)
        self.message = message
        self.span = span


class ReadError(MiniLispError):
    """Source text could not be parsed. `offset` is a character offset."""

    def __init__(self, message, offset):
        super().__init__(message, span=(offset, offset))
        self.offset = offset


class EvalError(MiniLispError):
    """Runtime failure: unbound symbol, arity/type error, or user `error` call.

    Carries the innermost span plus a bounded chain of caller spans.
    """

    MAX_CALL_CHAIN = 32

    def __init__(self, message, span=None):
        super().__init__(message, span)
        self.call_spans = []

    def push_call_span(self, span):
        if span is not None and len(self.call_spans) < self.MAX_CALL_CHAIN:
            self.call_spans.append(span)


class FuelExhausted(MiniLispError):
    """The step budget ran out. Deliberately not an EvalError so callers
    can tell an aborted computation from a failed one."""

    def __init__(self, message="fuel exhausted", span=None):
        super().__init__(message, span)


class SerializeError(MiniLispError):
    """A value outside the serializable subset was reached while writing state."""


class DeserializeError(MiniLispError):
    """State text was not a single map literal of plain data."""


class ElaborationError(MiniLispError):
    """Compile-time failure while rewriting an instance. `phase` is one of
    resolve, deserialize, elaborate-run, splice (plus define for bad defvisr
    forms). The span always points into the original buffer."""

    def __init__(self, message, span, phase):
        super().__init__(message, span)
        self.phase = phase


class VersionMismatch(MiniLispError):
    """A TextEdit was applied against the wrong buffer version."""

    def __init__(self, message, expected, got):
        super().__init__(message)
        self.expected = expected
        self.got = got
