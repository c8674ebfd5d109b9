"""Error taxonomy shared by every layer.

Each error carries a stable machine-readable ``code`` that is used verbatim
on the wire (WebSocket ``error`` messages) and in REST error bodies, so the
class hierarchy here is the single source of truth for error codes.
"""

from __future__ import annotations


class ServiceError(Exception):
    """Base class for all expected failures; ``code`` is wire-stable."""

    code = "internal-error"
    http_status = 500

    def __init__(self, message: str = ""):
        super().__init__(message or self.code)
        self.message = message or self.code


# --- authorization / authentication ---------------------------------------


class NotAuthorized(ServiceError):
    code = "not-authorized"
    http_status = 403


class BadCredentials(ServiceError):
    code = "bad-credentials"
    http_status = 401


class BackendUnreachable(ServiceError):
    code = "backend-unreachable"
    http_status = 503


class InvalidToken(ServiceError):
    code = "invalid-token"
    http_status = 401


class ExpiredToken(ServiceError):
    code = "expired-token"
    http_status = 401


class NotEnrolled(ServiceError):
    code = "not-enrolled"
    http_status = 403


# --- domain rules ----------------------------------------------------------


class InvalidExercise(ServiceError):
    code = "invalid-exercise"
    http_status = 422


class UnknownCourse(ServiceError):
    code = "unknown-course"
    http_status = 404


class UnknownExercise(ServiceError):
    code = "unknown-exercise"
    http_status = 404


class UnknownSubmission(ServiceError):
    code = "unknown-submission"
    http_status = 404


class AttemptsExhausted(ServiceError):
    code = "attempts-exhausted"
    http_status = 409


class DeadlinePassed(ServiceError):
    code = "deadline-passed"
    http_status = 409


class ScoreOutOfRange(ServiceError):
    code = "score-out-of-range"
    http_status = 422


# --- persistence -----------------------------------------------------------


class StoreIOError(ServiceError):
    code = "io-error"
    http_status = 503


class CorruptSnapshot(ServiceError):
    code = "corrupt-snapshot"


# --- LLM client ------------------------------------------------------------


class LlmUnavailable(ServiceError):
    code = "llm-unavailable"
    http_status = 503


class MalformedResponse(ServiceError):
    code = "malformed-response"


class TranscriptExhausted(ServiceError):
    """Scripted stub was asked for more replies than it was given."""

    code = "transcript-exhausted"


# --- wire protocol ---------------------------------------------------------


class ProtocolError(ServiceError):
    """Malformed or unsupported incoming frame; ``code`` goes on the wire."""

    code = "bad-request"
    http_status = 400

    def __init__(self, message: str = "", code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class AnalyticsError(ServiceError):
    code = "empty-input"
    http_status = 422
