"""Persistent entities, role semantics, and the attempt/deadline rules.

Scores are exact rationals (`fractions.Fraction`) end to end; only display
and wire encoding round. Timestamps are timezone-aware UTC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from typing import Optional

from .errors import InvalidExercise

ROLES = ("student", "tutor", "admin")
EXERCISE_TYPES = ("text", "code")
TEST_KINDS = ("text", "code")
TEST_STATUSES = ("ok", "timeout", "client_error")

DEFAULT_N_TRIES = 3


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def to_points(value) -> Fraction:
    """Exact score from a wire/storage value (int, float, decimal string, "a/b")."""
    if isinstance(value, bool):
        raise ValueError(f"not a number: {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        # str() round-trips the decimal literal the client sent, so 2.5 -> 5/2
        return Fraction(str(value))
    if isinstance(value, str):
        return Fraction(value)
    raise ValueError(f"not a number: {value!r}")


def format_points(value: Fraction) -> str:
    """Human/display form: integers bare, otherwise 2-decimal rounding."""
    if value.denominator == 1:
        return str(value.numerator)
    text = f"{float(value):.2f}"
    return text.rstrip("0").rstrip(".")


def clamp_score(score: Fraction, max_points: Fraction) -> Fraction:
    return min(max(score, Fraction(0)), max_points)


def parse_deadline(value: str) -> datetime:
    """Parse an ISO 8601 deadline; naive stamps are taken as UTC."""
    stamp = datetime.fromisoformat(value)
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=timezone.utc)
    return stamp


@dataclass(frozen=True)
class User:
    user_id: str
    display_name: str = ""


@dataclass(frozen=True)
class TestSpec:
    """One administrator-defined check.

    kind="text": a yes/no question for the grader with a points value per
    branch. kind="code": source of a function that receives the student's
    submitted function and returns ``(reply, points)``; it runs in the
    student's own process, never on the server.
    """

    test_id: str
    kind: str
    question: str
    points_if_yes: Optional[Fraction] = None
    points_if_no: Optional[Fraction] = None
    test_source: Optional[str] = None

    def validate(self) -> None:
        if not self.test_id:
            raise InvalidExercise("test_id must be non-empty")
        if self.kind not in TEST_KINDS:
            raise InvalidExercise(f"unknown test kind {self.kind!r}")
        if not self.question:
            raise InvalidExercise(f"test {self.test_id}: question must be non-empty")
        if self.kind == "text":
            if self.points_if_yes is None or self.points_if_no is None:
                raise InvalidExercise(
                    f"test {self.test_id}: text tests need points_if_yes and points_if_no"
                )
        else:
            if not self.test_source or not self.test_source.strip():
                raise InvalidExercise(f"test {self.test_id}: code tests need test_source")


@dataclass(frozen=True)
class TestResult:
    test_id: str
    question: str
    reply: str
    points: Fraction
    status: str = "ok"

    def __post_init__(self):
        if self.status not in TEST_STATUSES:
            raise ValueError(f"unknown test status {self.status!r}")
        if self.status != "ok" and self.points != 0:
            raise ValueError("failed tests carry zero points")

    @classmethod
    def failure(cls, spec: "TestSpec", status: str, reply: str = "") -> "TestResult":
        return cls(
            test_id=spec.test_id,
            question=spec.question,
            reply=reply or f"test did not complete ({status})",
            points=Fraction(0),
            status=status,
        )


@dataclass(frozen=True)
class Exercise:
    name: str
    task: str
    sample_solution: str
    max_points: Fraction
    tests: tuple[TestSpec, ...] = ()
    n_tries: int = DEFAULT_N_TRIES
    deadline: Optional[datetime] = None
    ex_type: str = "text"
    removed: bool = False

    def validate(self) -> None:
        if not self.name:
            raise InvalidExercise("exercise name must be non-empty")
        if self.max_points < 0:
            raise InvalidExercise("max_points must be >= 0")
        if self.n_tries < 1:
            raise InvalidExercise("n_tries must be >= 1")
        if self.ex_type not in EXERCISE_TYPES:
            raise InvalidExercise(f"unknown exercise type {self.ex_type!r}")
        seen: set[str] = set()
        for test in self.tests:
            test.validate()
            if test.test_id in seen:
                raise InvalidExercise(f"duplicate test_id {test.test_id!r}")
            seen.add(test.test_id)
            if test.kind == "code" and self.ex_type != "code":
                raise InvalidExercise(
                    f"test {test.test_id}: code tests require a code exercise"
                )

    def code_tests(self) -> tuple[TestSpec, ...]:
        return tuple(t for t in self.tests if t.kind == "code")

    def text_tests(self) -> tuple[TestSpec, ...]:
        return tuple(t for t in self.tests if t.kind == "text")


@dataclass
class GradeRecord:
    ai_score: Optional[Fraction] = None
    ai_feedback: str = ""
    tutor_score: Optional[Fraction] = None
    tutor_feedback: Optional[str] = None
    needs_review: bool = False
    graded_at: Optional[datetime] = None

    @property
    def effective_score(self) -> Optional[Fraction]:
        """Tutor score wins when present, else the AI score, else absent."""
        if self.tutor_score is not None:
            return self.tutor_score
        return self.ai_score


@dataclass
class Submission:
    submission_id: str
    course_name: str
    exercise_name: str
    user_id: str
    attempt_index: int
    content: str
    submitted_at: datetime
    test_results: list[TestResult] = field(default_factory=list)
    grade: GradeRecord = field(default_factory=GradeRecord)
    feedback_latency: Optional[float] = None


@dataclass
class Course:
    course_name: str
    exercises: dict[str, Exercise] = field(default_factory=dict)
    enrollment: dict[str, set[str]] = field(default_factory=dict)

    def roles_of(self, user_id: str) -> set[str]:
        return set(self.enrollment.get(user_id, ()))

    def has_role(self, user_id: str, *roles: str) -> bool:
        return bool(self.roles_of(user_id) & set(roles))

    def visible_exercises(self) -> list[Exercise]:
        return [ex for ex in self.exercises.values() if not ex.removed]
