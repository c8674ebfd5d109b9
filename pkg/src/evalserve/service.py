"""Domain operations over the store: enrollment, exercise admin, hand-ins,
grading bookkeeping, and tutor overrides.

Every mutation validates fully before touching state and runs inside one
``Store.mutate`` call, so concurrent callers observe a total order and the
attempt limit cannot be exceeded by interleaved hand-ins.
"""

from __future__ import annotations

import uuid
from datetime import datetime
from typing import Iterable, Optional

from .domain import (
    Course,
    Exercise,
    GradeRecord,
    Submission,
    TestResult,
    User,
    to_points,
    utcnow,
)
from .errors import (
    AttemptsExhausted,
    DeadlinePassed,
    NotAuthorized,
    NotEnrolled,
    ScoreOutOfRange,
    UnknownCourse,
    UnknownExercise,
    UnknownSubmission,
)
from .store import Snapshot, Store


def _course(state: Snapshot, course_name: str) -> Course:
    course = state.courses.get(course_name)
    if course is None:
        raise UnknownCourse(f"no course named {course_name!r}")
    return course


def _exercise(state: Snapshot, course_name: str, name: str, include_removed=False) -> Exercise:
    course = _course(state, course_name)
    exercise = course.exercises.get(name)
    if exercise is None or (exercise.removed and not include_removed):
        raise UnknownExercise(f"no exercise named {name!r} in {course_name!r}")
    return exercise


def _require_role(state: Snapshot, course_name: str, user_id: str, *roles: str) -> None:
    course = _course(state, course_name)
    if not course.has_role(user_id, *roles):
        raise NotAuthorized(f"requires one of roles {roles} in {course_name!r}")


def attempts_used(state: Snapshot, course_name: str, exercise_name: str, user_id: str) -> int:
    return sum(
        1
        for s in state.submissions.values()
        if s.course_name == course_name
        and s.exercise_name == exercise_name
        and s.user_id == user_id
    )


# --- enrollment -------------------------------------------------------------


def create_course(store: Store, course_name: str) -> None:
    """Create the course if it does not exist yet (idempotent)."""

    def mutation(state: Snapshot):
        state.courses.setdefault(course_name, Course(course_name=course_name))

    store.mutate(mutation)


def enroll(store: Store, course_name: str, user: User, roles: Iterable[str]) -> None:
    """Record the user and grant roles in the course (creates the course)."""
    role_set = set(roles)
    unknown = role_set - {"student", "tutor", "admin"}
    if unknown:
        raise ValueError(f"unknown roles {sorted(unknown)}")

    def mutation(state: Snapshot):
        course = state.courses.setdefault(course_name, Course(course_name=course_name))
        state.users.setdefault(user.user_id, user)
        course.enrollment.setdefault(user.user_id, set()).update(role_set)

    store.mutate(mutation)


# --- exercise administration -------------------------------------------------


def register_exercise(store: Store, course_name: str, exercise: Exercise, actor_id: str) -> None:
    """Store or replace the exercise definition; submissions are untouched."""
    exercise.validate()

    def mutation(state: Snapshot):
        _require_role(state, course_name, actor_id, "admin")
        course = state.courses[course_name]
        course.exercises[exercise.name] = exercise

    store.mutate(mutation)


def remove_exercise(store: Store, course_name: str, name: str, actor_id: str) -> None:
    """Soft-delete: the exercise disappears from listings, submissions stay."""

    def mutation(state: Snapshot):
        _require_role(state, course_name, actor_id, "admin")
        exercise = _exercise(state, course_name, name)
        state.courses[course_name].exercises[name] = Exercise(
            name=exercise.name,
            task=exercise.task,
            sample_solution=exercise.sample_solution,
            max_points=exercise.max_points,
            tests=exercise.tests,
            n_tries=exercise.n_tries,
            deadline=exercise.deadline,
            ex_type=exercise.ex_type,
            removed=True,
        )

    store.mutate(mutation)


# --- hand-ins ----------------------------------------------------------------


def _check_attempt(
    state: Snapshot, course_name: str, exercise_name: str, user_id: str, now: datetime
) -> int:
    """Validate the attempt/deadline rules; return the next 1-based index."""
    course = _course(state, course_name)
    if not course.has_role(user_id, "student"):
        raise NotEnrolled(f"{user_id!r} is not enrolled as a student in {course_name!r}")
    exercise = _exercise(state, course_name, exercise_name)
    if exercise.deadline is not None and now > exercise.deadline:
        raise DeadlinePassed(f"deadline for {exercise_name!r} was {exercise.deadline.isoformat()}")
    used = attempts_used(state, course_name, exercise_name, user_id)
    if used >= exercise.n_tries:
        raise AttemptsExhausted(f"all {exercise.n_tries} attempts used")
    return used + 1


def open_attempt(
    store: Store, course_name: str, exercise_name: str, user_id: str, now: datetime
) -> int:
    """Next attempt index if a hand-in were accepted right now.

    The actual slot reservation happens in :func:`submit`, which performs the
    same check and the insertion atomically under the writer lock.
    """
    return store.read(lambda s: _check_attempt(s, course_name, exercise_name, user_id, now))


def submit(
    store: Store,
    course_name: str,
    exercise_name: str,
    user_id: str,
    content: str,
    now: Optional[datetime] = None,
) -> Submission:
    """Atomically validate and persist one hand-in."""
    stamp = now or utcnow()

    def mutation(state: Snapshot) -> Submission:
        index = _check_attempt(state, course_name, exercise_name, user_id, stamp)
        submission = Submission(
            submission_id=uuid.uuid4().hex,
            course_name=course_name,
            exercise_name=exercise_name,
            user_id=user_id,
            attempt_index=index,
            content=content,
            submitted_at=stamp,
        )
        state.submissions[submission.submission_id] = submission
        return submission

    return store.mutate(mutation)


def get_submission(store: Store, submission_id: str) -> Submission:
    def lookup(state: Snapshot) -> Submission:
        submission = state.submissions.get(submission_id)
        if submission is None:
            raise UnknownSubmission(f"no submission {submission_id!r}")
        return submission

    return store.read(lookup)


def attach_test_results(store: Store, submission_id: str, results: list[TestResult]) -> Submission:
    def mutation(state: Snapshot) -> Submission:
        submission = state.submissions.get(submission_id)
        if submission is None:
            raise UnknownSubmission(f"no submission {submission_id!r}")
        submission.test_results = list(results)
        return submission

    return store.mutate(mutation)


def apply_grade(
    store: Store,
    submission_id: str,
    record: GradeRecord,
    feedback_latency: Optional[float],
    test_results: Optional[list[TestResult]] = None,
) -> Submission:
    """Store the finished grade, optionally with the complete test results
    the grade was based on (code results plus answered text tests)."""

    def mutation(state: Snapshot) -> Submission:
        submission = state.submissions.get(submission_id)
        if submission is None:
            raise UnknownSubmission(f"no submission {submission_id!r}")
        submission.grade = record
        submission.feedback_latency = feedback_latency
        if test_results is not None:
            submission.test_results = list(test_results)
        return submission

    return store.mutate(mutation)


# --- tutor override -----------------------------------------------------------


def override_grade(
    store: Store,
    submission_id: str,
    tutor_score,
    tutor_feedback: str,
    actor_id: str,
) -> GradeRecord:
    """Set the tutor's score/feedback; AI fields stay for later comparison."""
    score = to_points(tutor_score)

    def mutation(state: Snapshot) -> GradeRecord:
        submission = state.submissions.get(submission_id)
        if submission is None:
            raise UnknownSubmission(f"no submission {submission_id!r}")
        _require_role(state, submission.course_name, actor_id, "tutor", "admin")
        exercise = _exercise(
            state, submission.course_name, submission.exercise_name, include_removed=True
        )
        if not (0 <= score <= exercise.max_points):
            raise ScoreOutOfRange(
                f"score must lie in [0, {exercise.max_points}], got {score}"
            )
        grade = submission.grade
        grade.tutor_score = score
        grade.tutor_feedback = tutor_feedback
        grade.needs_review = False
        return grade

    return store.mutate(mutation)
