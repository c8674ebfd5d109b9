"""WebSocket wire format: tagged JSON messages, one per text frame.

Every message carries ``v`` (schema version, currently 1), ``type`` and a
``correlation_id``; each client request gets exactly one terminal response
(its success tag or ``error``) echoing that id. The machine-readable
contract ships as ``docs/protocol-schema.json`` and the constants here must
stay in sync with it (a test enforces that).

The server never evaluates test sources or student code: this module only
parses, validates, and matches identifiers. Code tests run in the student's
own process; their reported results are merged here.
"""

from __future__ import annotations

import json
import uuid
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

from .domain import (
    DEFAULT_N_TRIES,
    Exercise,
    TestResult,
    TestSpec,
    parse_deadline,
    to_points,
)
from .errors import InvalidExercise, ProtocolError

PROTOCOL_VERSION = 1

DEFAULT_RELAY_TIMEOUT_S = 60.0

# client -> server requests and their terminal success responses
REQUEST_RESPONSES = {
    "login": "login_ok",
    "enter_course": "course_ok",
    "register_exercise": "ack",
    "remove_exercise": "ack",
    "handin": "handin_ack",
}

# server -> client pushes (no response expected) and relay replies
SERVER_PUSH_TAGS = ("run_tests", "feedback")
CLIENT_REPLY_TAGS = ("test_results",)

ALL_TAGS = (
    tuple(REQUEST_RESPONSES)
    + tuple(set(REQUEST_RESPONSES.values()))
    + SERVER_PUSH_TAGS
    + CLIENT_REPLY_TAGS
    + ("error",)
)

# required payload fields per incoming tag: name -> required json type(s)
_REQUIRED_FIELDS: dict[str, dict[str, type | tuple[type, ...]]] = {
    "login": {"user_id": str, "secret": str},
    "enter_course": {"course": str},
    "register_exercise": {"course": str, "exercise": dict},
    "remove_exercise": {"course": str, "name": str},
    "handin": {"course": str, "exercise": str, "content": str},
    "test_results": {"submission_id": str, "results": list},
}


@dataclass(frozen=True)
class WireMessage:
    type: str
    payload: dict
    correlation_id: str
    v: int = PROTOCOL_VERSION


def new_correlation_id() -> str:
    return uuid.uuid4().hex


def encode(type_: str, payload: dict, correlation_id: str) -> str:
    body = {"v": PROTOCOL_VERSION, "type": type_, "correlation_id": correlation_id}
    body.update(payload)
    return json.dumps(body, ensure_ascii=False)


def error_payload(code: str, human_message: str) -> dict:
    return {"code": code, "human_message": human_message}


def decode(raw: str) -> WireMessage:
    """Parse and validate one incoming frame.

    Raises ``ProtocolError`` with code ``bad-request`` for malformed frames,
    ``unsupported-version`` for a wrong ``v``, and ``unknown-type`` for tags
    outside the contract — the caller answers with an ``error`` message, it
    never drops frames silently.
    """
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"frame is not valid JSON: {exc}")
    if not isinstance(data, dict):
        raise ProtocolError("frame must be a JSON object")
    version = data.get("v")
    if version != PROTOCOL_VERSION:
        raise ProtocolError(
            f"unsupported protocol version {version!r}", code="unsupported-version"
        )
    type_ = data.get("type")
    if not isinstance(type_, str) or not type_:
        raise ProtocolError("missing message type")
    correlation_id = data.get("correlation_id")
    if not isinstance(correlation_id, str) or not correlation_id:
        raise ProtocolError("missing correlation_id")
    if type_ not in ALL_TAGS:
        raise ProtocolError(f"unknown message type {type_!r}", code="unknown-type")
    payload = {k: v for k, v in data.items() if k not in ("v", "type", "correlation_id")}
    required = _REQUIRED_FIELDS.get(type_, {})
    for name, expected in required.items():
        if name not in payload:
            raise ProtocolError(f"{type_}: missing field {name!r}")
        if not isinstance(payload[name], expected):
            raise ProtocolError(f"{type_}: field {name!r} has the wrong type")
    return WireMessage(type=type_, payload=payload, correlation_id=correlation_id, v=version)


# --- exercise payload ---------------------------------------------------------


def exercise_from_payload(data: dict) -> Exercise:
    """Build an exercise from the register_exercise wire payload.

    Field names follow the admin-facing registration call: name, task,
    solution, points, tests, n_tries, deadline, ex_type. Tests without a
    test_id get t1, t2, ... in order. Raises ``InvalidExercise`` for any
    malformed field; the result is already validated.
    """
    if not isinstance(data, dict):
        raise InvalidExercise("exercise must be an object")

    def text_field(key: str) -> str:
        value = data.get(key)
        if not isinstance(value, str):
            raise InvalidExercise(f"exercise field {key!r} must be a string")
        return value

    try:
        max_points = to_points(data.get("points"))
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidExercise(f"exercise field 'points' is not a number: {exc}") from exc

    n_tries = data.get("n_tries", DEFAULT_N_TRIES)
    if not isinstance(n_tries, int) or isinstance(n_tries, bool):
        raise InvalidExercise("exercise field 'n_tries' must be an integer")

    deadline = None
    if data.get("deadline") is not None:
        if not isinstance(data["deadline"], str):
            raise InvalidExercise("exercise field 'deadline' must be an ISO 8601 string")
        try:
            deadline = parse_deadline(data["deadline"])
        except ValueError as exc:
            raise InvalidExercise(f"unparseable deadline: {exc}") from exc

    raw_tests = data.get("tests", [])
    if not isinstance(raw_tests, list):
        raise InvalidExercise("exercise field 'tests' must be a list")
    tests = []
    for i, raw in enumerate(raw_tests):
        if not isinstance(raw, dict):
            raise InvalidExercise(f"test #{i + 1} must be an object")
        kind = raw.get("kind")
        if kind not in ("text", "code"):
            raise InvalidExercise(f"test #{i + 1}: kind must be 'text' or 'code'")
        test_id = raw.get("test_id") or f"t{i + 1}"
        points_yes = points_no = None
        if kind == "text":
            try:
                points_yes = to_points(raw.get("points_if_yes"))
                points_no = to_points(raw.get("points_if_no"))
            except (ValueError, ZeroDivisionError) as exc:
                raise InvalidExercise(f"test {test_id}: branch points not numbers: {exc}") from exc
        question = raw.get("question")
        if not isinstance(question, str):
            raise InvalidExercise(f"test {test_id}: question must be a string")
        source = raw.get("test_source")
        if source is not None and not isinstance(source, str):
            raise InvalidExercise(f"test {test_id}: test_source must be a string")
        tests.append(
            TestSpec(
                test_id=str(test_id),
                kind=kind,
                question=question,
                points_if_yes=points_yes,
                points_if_no=points_no,
                test_source=source,
            )
        )

    exercise = Exercise(
        name=text_field("name"),
        task=text_field("task"),
        sample_solution=text_field("solution"),
        max_points=max_points,
        tests=tuple(tests),
        n_tries=n_tries,
        deadline=deadline,
        ex_type=data.get("ex_type", "text"),
    )
    exercise.validate()
    return exercise


# --- relay result merging ---------------------------------------------------


def run_tests_payload(submission_id: str, tests: Sequence[TestSpec]) -> dict:
    return {
        "submission_id": submission_id,
        "tests": [
            {"test_id": t.test_id, "question": t.question, "test_source": t.test_source}
            for t in tests
        ],
    }


def merge_relay_results(specs: Sequence[TestSpec], entries: Iterable[dict]) -> list[TestResult]:
    """Combine the client's reported results with the tests we sent.

    Unknown or duplicate test_ids are discarded; tests the client did not
    answer become client_error with zero points. Reported points are taken
    as-is (the client is the student's own trust domain) except that
    negative values are floored at zero.
    """
    by_id = {spec.test_id: spec for spec in specs}
    seen: dict[str, TestResult] = {}
    for entry in entries:
        if not isinstance(entry, dict):
            continue
        test_id = entry.get("test_id")
        spec = by_id.get(test_id)
        if spec is None or test_id in seen:
            continue
        reply = entry.get("reply")
        try:
            points = to_points(entry.get("points"))
        except (ValueError, TypeError, ZeroDivisionError):
            seen[test_id] = TestResult.failure(spec, "client_error", reply="unreadable points value")
            continue
        seen[test_id] = TestResult(
            test_id=spec.test_id,
            question=spec.question,
            reply=reply if isinstance(reply, str) else "",
            points=max(points, Fraction(0)),
        )
    results = []
    for spec in specs:
        results.append(seen.get(spec.test_id) or TestResult.failure(spec, "client_error"))
    return results


def relay_failure_results(specs: Sequence[TestSpec], status: str) -> list[TestResult]:
    """All-pending resolution for a timed-out or disconnected relay."""
    return [TestResult.failure(spec, status) for spec in specs]
