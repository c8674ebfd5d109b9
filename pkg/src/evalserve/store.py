"""Single-file snapshot persistence with crash-safe atomic writes.

The whole server state is one JSON document rewritten after every mutation
(temp file, fsync, rename). That is deliberately simple: at course scale
(thousands of submissions) a full rewrite is cheap, restart recovery is just
"load the file", and the format stays readable by external tooling. The
document carries an explicit ``schema_version``.

Exactly one writer mutates state; readers take the same lock briefly and
work on plain values. Session tokens are ephemeral and never stored here.
"""

from __future__ import annotations

import json
import os
import threading
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path
from typing import Callable, Optional, TypeVar

from .domain import (
    Course,
    Exercise,
    GradeRecord,
    Submission,
    TestResult,
    TestSpec,
    User,
    to_points,
)
from .errors import CorruptSnapshot, StoreIOError

SCHEMA_VERSION = 1

T = TypeVar("T")


@dataclass
class Snapshot:
    schema_version: int = SCHEMA_VERSION
    users: dict[str, User] = field(default_factory=dict)
    courses: dict[str, Course] = field(default_factory=dict)
    submissions: dict[str, Submission] = field(default_factory=dict)


# --- encoding ---------------------------------------------------------------


def _enc_points(value) -> Optional[str]:
    return None if value is None else str(value)


def _enc_stamp(value: Optional[datetime]) -> Optional[str]:
    return None if value is None else value.isoformat()


def _enc_test_spec(t: TestSpec) -> dict:
    return {
        "test_id": t.test_id,
        "kind": t.kind,
        "question": t.question,
        "points_if_yes": _enc_points(t.points_if_yes),
        "points_if_no": _enc_points(t.points_if_no),
        "test_source": t.test_source,
    }


def _enc_test_result(r: TestResult) -> dict:
    return {
        "test_id": r.test_id,
        "question": r.question,
        "reply": r.reply,
        "points": str(r.points),
        "status": r.status,
    }


def _enc_exercise(ex: Exercise) -> dict:
    return {
        "name": ex.name,
        "task": ex.task,
        "sample_solution": ex.sample_solution,
        "max_points": str(ex.max_points),
        "tests": [_enc_test_spec(t) for t in ex.tests],
        "n_tries": ex.n_tries,
        "deadline": _enc_stamp(ex.deadline),
        "ex_type": ex.ex_type,
        "removed": ex.removed,
    }


def _enc_submission(s: Submission) -> dict:
    return {
        "submission_id": s.submission_id,
        "course_name": s.course_name,
        "exercise_name": s.exercise_name,
        "user_id": s.user_id,
        "attempt_index": s.attempt_index,
        "content": s.content,
        "submitted_at": _enc_stamp(s.submitted_at),
        "test_results": [_enc_test_result(r) for r in s.test_results],
        "grade": {
            "ai_score": _enc_points(s.grade.ai_score),
            "ai_feedback": s.grade.ai_feedback,
            "tutor_score": _enc_points(s.grade.tutor_score),
            "tutor_feedback": s.grade.tutor_feedback,
            "needs_review": s.grade.needs_review,
            "graded_at": _enc_stamp(s.grade.graded_at),
        },
        "feedback_latency": s.feedback_latency,
    }


def snapshot_to_dict(snap: Snapshot) -> dict:
    return {
        "schema_version": snap.schema_version,
        "users": {
            uid: {"user_id": u.user_id, "display_name": u.display_name}
            for uid, u in snap.users.items()
        },
        "courses": {
            name: {
                "course_name": c.course_name,
                "exercises": {n: _enc_exercise(e) for n, e in c.exercises.items()},
                "enrollment": {uid: sorted(roles) for uid, roles in c.enrollment.items()},
            }
            for name, c in snap.courses.items()
        },
        "submissions": {sid: _enc_submission(s) for sid, s in snap.submissions.items()},
    }


# --- decoding ---------------------------------------------------------------


def _dec_points(value) -> Optional:
    return None if value is None else to_points(value)


def _dec_stamp(value) -> Optional[datetime]:
    return None if value is None else datetime.fromisoformat(value)


def _dec_test_spec(d: dict) -> TestSpec:
    return TestSpec(
        test_id=d["test_id"],
        kind=d["kind"],
        question=d["question"],
        points_if_yes=_dec_points(d.get("points_if_yes")),
        points_if_no=_dec_points(d.get("points_if_no")),
        test_source=d.get("test_source"),
    )


def _dec_test_result(d: dict) -> TestResult:
    return TestResult(
        test_id=d["test_id"],
        question=d["question"],
        reply=d["reply"],
        points=to_points(d["points"]),
        status=d["status"],
    )


def _dec_exercise(d: dict) -> Exercise:
    return Exercise(
        name=d["name"],
        task=d["task"],
        sample_solution=d["sample_solution"],
        max_points=to_points(d["max_points"]),
        tests=tuple(_dec_test_spec(t) for t in d["tests"]),
        n_tries=int(d["n_tries"]),
        deadline=_dec_stamp(d.get("deadline")),
        ex_type=d["ex_type"],
        removed=bool(d.get("removed", False)),
    )


def _dec_submission(d: dict) -> Submission:
    g = d["grade"]
    return Submission(
        submission_id=d["submission_id"],
        course_name=d["course_name"],
        exercise_name=d["exercise_name"],
        user_id=d["user_id"],
        attempt_index=int(d["attempt_index"]),
        content=d["content"],
        submitted_at=_dec_stamp(d["submitted_at"]),
        test_results=[_dec_test_result(r) for r in d["test_results"]],
        grade=GradeRecord(
            ai_score=_dec_points(g.get("ai_score")),
            ai_feedback=g.get("ai_feedback", ""),
            tutor_score=_dec_points(g.get("tutor_score")),
            tutor_feedback=g.get("tutor_feedback"),
            needs_review=bool(g.get("needs_review", False)),
            graded_at=_dec_stamp(g.get("graded_at")),
        ),
        feedback_latency=d.get("feedback_latency"),
    )


def snapshot_from_dict(data: dict) -> Snapshot:
    try:
        version = data["schema_version"]
        if version != SCHEMA_VERSION:
            raise CorruptSnapshot(f"unsupported schema_version {version!r}")
        users = {
            uid: User(user_id=u["user_id"], display_name=u.get("display_name", ""))
            for uid, u in data["users"].items()
        }
        courses = {}
        for name, c in data["courses"].items():
            courses[name] = Course(
                course_name=c["course_name"],
                exercises={n: _dec_exercise(e) for n, e in c["exercises"].items()},
                enrollment={uid: set(roles) for uid, roles in c["enrollment"].items()},
            )
        submissions = {
            sid: _dec_submission(s) for sid, s in data["submissions"].items()
        }
    except CorruptSnapshot:
        raise
    except (KeyError, TypeError, ValueError, AttributeError) as exc:
        raise CorruptSnapshot(f"malformed snapshot: {exc}") from exc
    return Snapshot(
        schema_version=version, users=users, courses=courses, submissions=submissions
    )


# --- durable persistence ----------------------------------------------------


def _crash_point(stage: str) -> None:
    """Fault-injection hook for crash-safety tests; a no-op in production.

    Stages: pre-temp, post-temp, pre-rename, post-rename.
    """


def save_snapshot(snap: Snapshot, path: Path) -> None:
    """Write atomically: temp file in the same directory, fsync, rename."""
    payload = json.dumps(snapshot_to_dict(snap), ensure_ascii=False, indent=1)
    tmp_path = path.with_name(path.name + ".tmp")
    _crash_point("pre-temp")
    fd = os.open(tmp_path, os.O_WRONLY | os.O_CREAT | os.O_TRUNC, 0o600)
    try:
        os.write(fd, payload.encode("utf-8"))
        os.fsync(fd)
    finally:
        os.close(fd)
    _crash_point("post-temp")
    _crash_point("pre-rename")
    os.replace(tmp_path, path)
    _crash_point("post-rename")
    try:
        dir_fd = os.open(path.parent, os.O_RDONLY)
        try:
            os.fsync(dir_fd)
        finally:
            os.close(dir_fd)
    except OSError:
        pass  # directory fsync is best-effort (not supported everywhere)


def load_snapshot(path: Path) -> Snapshot:
    """Load a snapshot; a missing file is a fresh start, a broken file is not."""
    if not path.exists():
        return Snapshot()
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise StoreIOError(f"cannot read {path}: {exc}") from exc
    if not raw.strip():
        raise CorruptSnapshot(f"{path} is empty")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise CorruptSnapshot(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise CorruptSnapshot(f"{path} does not hold a snapshot document")
    return snapshot_from_dict(data)


class Store:
    """Owns the in-memory state and serializes every mutation.

    ``mutate`` runs the given function under the writer lock and persists the
    snapshot before returning, so an acknowledged mutation is durable.
    Mutation functions must validate before touching state (raise first,
    write after) — a raised error must leave state unchanged.

    ``path=None`` keeps the store purely in memory (tests, analytics on
    already-loaded snapshots).
    """

    def __init__(self, path: str | Path | None):
        self.path = Path(path) if path is not None else None
        self.lock = threading.RLock()
        self._write_failed = False
        self.state = load_snapshot(self.path) if self.path is not None else Snapshot()

    def mutate(self, fn: Callable[[Snapshot], T]) -> T:
        with self.lock:
            if self._write_failed:
                raise StoreIOError("store is read-only after a failed write")
            result = fn(self.state)
            self._persist()
            return result

    def read(self, fn: Callable[[Snapshot], T]) -> T:
        with self.lock:
            return fn(self.state)

    def _persist(self) -> None:
        if self.path is None:
            return
        try:
            save_snapshot(self.state, self.path)
        except OSError as exc:
            self._write_failed = True
            raise StoreIOError(f"cannot persist snapshot: {exc}") from exc
