"""Multi-stage grading conversation: context, per-test yes/no questions,
solution comparison, omission check, and the final scoring turn.

The pipeline is deterministic for a fixed conversation transcript: no
randomness, greedy decoding requested from the model, and all test points
enter the final prompt as advisory context rather than being added to the
model's score (they only become the score on the parse-failure fallback).
"""

from __future__ import annotations

import re
import time
from dataclasses import dataclass
from datetime import datetime
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Callable, Optional, Sequence

from .domain import (
    Exercise,
    GradeRecord,
    Submission,
    TestResult,
    TestSpec,
    clamp_score,
    format_points,
    utcnow,
)
from .llm import ChatClient, ChatTurn

STAGE_ORDER = ("context", "test_question", "comparison", "omissions", "final")
TEMPLATE_NAMES = ("context", "test_question", "comparison", "omissions", "final", "final_retry")

DEFAULT_GRADING_TIMEOUT_S = 600.0

_SCORE_RE = re.compile(
    r"SCORE:\s*(-?\d+(?:\.\d+)?)\s*/\s*(\d+(?:\.\d+)?)", re.IGNORECASE
)
_YES_NO_RE = re.compile(r"^\W*(yes|no)\b", re.IGNORECASE)


class GradingTimeout(Exception):
    """Internal marker: the per-job wall-clock budget ran out mid-conversation."""


@dataclass(frozen=True)
class PromptStage:
    stage: str  # one of STAGE_ORDER
    content: str


@dataclass(frozen=True)
class GradingJob:
    """Everything grading needs, snapshotted at enqueue time.

    The exercise fields are copied so that re-registering an exercise never
    changes a job already in flight.
    """

    submission_id: str
    course_name: str
    exercise_name: str
    task: str
    sample_solution: str
    max_points: Fraction
    tests: tuple[TestSpec, ...]
    content: str
    test_results: tuple[TestResult, ...] = ()
    created_at: Optional[datetime] = None
    submitted_at: Optional[datetime] = None

    def text_tests(self) -> tuple[TestSpec, ...]:
        return tuple(t for t in self.tests if t.kind == "text")


def job_from_submission(submission: Submission, exercise: Exercise) -> GradingJob:
    return GradingJob(
        submission_id=submission.submission_id,
        course_name=submission.course_name,
        exercise_name=submission.exercise_name,
        task=exercise.task,
        sample_solution=exercise.sample_solution,
        max_points=exercise.max_points,
        tests=exercise.tests,
        content=submission.content,
        test_results=tuple(submission.test_results),
        created_at=utcnow(),
        submitted_at=submission.submitted_at,
    )


class PromptTemplates:
    """Stage prompts, loaded from plain-text files so courses can reword or
    localize them without code changes. Placeholders: {task},
    {sample_solution}, {student_solution}, {question}, {test_summary},
    {max_points}."""

    def __init__(self, texts: dict[str, str]):
        missing = set(TEMPLATE_NAMES) - set(texts)
        if missing:
            raise ValueError(f"missing prompt templates: {sorted(missing)}")
        self.texts = dict(texts)

    @classmethod
    def load(cls, directory: str | Path | None = None) -> "PromptTemplates":
        """Read ``<name>.txt`` per stage from the directory, or the built-ins."""
        texts = {}
        if directory is None:
            root = resources.files(__package__) / "templates"
            for name in TEMPLATE_NAMES:
                texts[name] = (root / f"{name}.txt").read_text(encoding="utf-8")
        else:
            directory = Path(directory)
            for name in TEMPLATE_NAMES:
                path = directory / f"{name}.txt"
                if not path.exists():
                    raise FileNotFoundError(f"prompt template missing: {path}")
                texts[name] = path.read_text(encoding="utf-8")
        return cls(texts)

    def render(self, name: str, **values: str) -> str:
        return self.texts[name].format(**values)


# --- prompt rendering ---------------------------------------------------------


def render_test_summary(results: Sequence[TestResult]) -> str:
    """All questions, replies, and the exact points total, in prompt form."""
    lines = []
    total = Fraction(0)
    for result in results:
        total += result.points
        note = "" if result.status == "ok" else f" [{result.status}]"
        lines.append(f"- Question: {result.question}")
        lines.append(f"  Reply: {result.reply}{note}")
        lines.append(f"  Points: {format_points(result.points)}")
    if not lines:
        lines.append("No automated tests were run for this exercise.")
    lines.append(f"Total test points achieved: {format_points(total)}")
    return "\n".join(lines)


def build_prompt_sequence(job: GradingJob, templates: PromptTemplates) -> list[PromptStage]:
    """Render the fixed stage order for this job.

    The final stage summarizes ``job.test_results``; the driver re-renders it
    once freshly answered text-test results are known.
    """
    stages = [
        PromptStage(
            "context",
            templates.render(
                "context",
                task=job.task,
                sample_solution=job.sample_solution,
                student_solution=job.content,
            ),
        )
    ]
    for spec in job.text_tests():
        stages.append(
            PromptStage("test_question", templates.render("test_question", question=spec.question))
        )
    stages.append(PromptStage("comparison", templates.texts["comparison"]))
    stages.append(PromptStage("omissions", templates.texts["omissions"]))
    stages.append(
        PromptStage(
            "final",
            templates.render(
                "final",
                test_summary=render_test_summary(job.test_results),
                max_points=format_points(job.max_points),
            ),
        )
    )
    return stages


# --- conversation driving ------------------------------------------------------


class _Conversation:
    """Cumulative chat history; the opening context rides on the first user
    turn instead of costing a round trip of its own."""

    def __init__(
        self,
        llm: ChatClient,
        preamble: str,
        history: Optional[list[ChatTurn]] = None,
        deadline: Optional[float] = None,
        clock: Callable[[], float] = time.monotonic,
    ):
        self.llm = llm
        self.history = history if history is not None else []
        self.pending_preamble = preamble if not self.history else None
        self.deadline = deadline
        self.clock = clock

    def ask(self, content: str) -> str:
        if self.deadline is not None and self.clock() > self.deadline:
            raise GradingTimeout()
        if self.pending_preamble is not None:
            content = self.pending_preamble + "\n\n" + content
            self.pending_preamble = None
        self.history.append(ChatTurn("user", content))
        reply = self.llm.complete(self.history)
        self.history.append(ChatTurn("assistant", reply))
        return reply


def parse_yes_no(reply: str) -> Optional[bool]:
    match = _YES_NO_RE.match(reply.strip())
    if match is None:
        return None
    return match.group(1).lower() == "yes"


def _answer_text_tests(job: GradingJob, conv: _Conversation, templates: PromptTemplates) -> list[TestResult]:
    results = []
    for spec in job.text_tests():
        reply = conv.ask(templates.render("test_question", question=spec.question))
        verdict = parse_yes_no(reply)
        if verdict is None:
            results.append(TestResult.failure(spec, "client_error", reply=reply))
        else:
            points = spec.points_if_yes if verdict else spec.points_if_no
            results.append(
                TestResult(
                    test_id=spec.test_id,
                    question=spec.question,
                    reply=reply,
                    points=points,
                )
            )
    return results


def answer_text_tests(
    job: GradingJob, llm: ChatClient, templates: Optional[PromptTemplates] = None
) -> list[TestResult]:
    """Ask each yes/no question in its own turn; unparseable replies become
    client_error results worth zero points."""
    templates = templates or PromptTemplates.load()
    context = templates.render(
        "context",
        task=job.task,
        sample_solution=job.sample_solution,
        student_solution=job.content,
    )
    return _answer_text_tests(job, _Conversation(llm, context), templates)


def extract_score(final_reply: str, max_points: Fraction) -> tuple[Fraction, bool]:
    """Last ``SCORE: x/y`` marker in the reply, clamped into [0, max_points].

    Total function: (0, False) when the marker is absent or malformed.
    """
    matches = _SCORE_RE.findall(final_reply)
    if not matches:
        return Fraction(0), False
    raw_score, _denominator = matches[-1]
    try:
        score = Fraction(raw_score)
    except (ValueError, ZeroDivisionError):
        return Fraction(0), False
    return clamp_score(score, max_points), True


def strip_score_lines(reply: str) -> str:
    """Feedback text shown to the student: the reply minus the SCORE marker.

    Marker-only lines disappear entirely; a marker sharing a line with prose
    is excised from it.
    """
    kept = []
    for line in reply.splitlines():
        if _SCORE_RE.search(line):
            line = _SCORE_RE.sub("", line).rstrip()
            if not line.strip():
                continue
        kept.append(line)
    return "\n".join(kept).strip()


def fallback_record(job: GradingJob, reason: str, extra_results: Sequence[TestResult] = ()) -> GradeRecord:
    """Grade used when the conversation cannot produce a score: the achieved
    test points (clamped), flagged for tutor review."""
    results = list(job.test_results) + list(extra_results)
    total = sum((r.points for r in results), Fraction(0))
    return GradeRecord(
        ai_score=clamp_score(total, job.max_points),
        ai_feedback=reason,
        needs_review=True,
        graded_at=utcnow(),
    )


def grade_submission_detailed(
    job: GradingJob,
    llm: ChatClient,
    templates: Optional[PromptTemplates] = None,
    *,
    timeout_s: float = DEFAULT_GRADING_TIMEOUT_S,
    clock: Callable[[], float] = time.monotonic,
) -> tuple[GradeRecord, list[TestResult]]:
    """Drive the full grading conversation.

    Returns the AI grade plus the complete test results (the job's code-test
    results followed by the freshly answered text tests) so callers can
    persist what the grade was based on.

    Score extraction failures retry the final stage once with a stricter
    instruction, then fall back to the summed test points with
    ``needs_review`` set. Any non-ok test result also sets ``needs_review``.
    ``LlmUnavailable`` propagates so the caller can requeue the job.
    """
    templates = templates or PromptTemplates.load()
    deadline = clock() + timeout_s
    context = templates.render(
        "context",
        task=job.task,
        sample_solution=job.sample_solution,
        student_solution=job.content,
    )
    conv = _Conversation(llm, context, deadline=deadline, clock=clock)
    text_results: list[TestResult] = []
    try:
        text_results = _answer_text_tests(job, conv, templates)
        all_results = list(job.test_results) + text_results
        conv.ask(templates.texts["comparison"])
        conv.ask(templates.texts["omissions"])
        final_prompt = templates.render(
            "final",
            test_summary=render_test_summary(all_results),
            max_points=format_points(job.max_points),
        )
        final_reply = conv.ask(final_prompt)
        score, parse_ok = extract_score(final_reply, job.max_points)
        if not parse_ok:
            final_reply = conv.ask(
                templates.render("final_retry", max_points=format_points(job.max_points))
            )
            score, parse_ok = extract_score(final_reply, job.max_points)
    except GradingTimeout:
        record = fallback_record(
            job,
            "Automatic grading did not finish within the time limit; "
            "the score below reflects the automated tests only and a tutor will review it.",
            extra_results=text_results,
        )
        return record, list(job.test_results) + text_results
    if not parse_ok:
        total = sum((r.points for r in all_results), Fraction(0))
        score = clamp_score(total, job.max_points)
    needs_review = (not parse_ok) or any(r.status != "ok" for r in all_results)
    record = GradeRecord(
        ai_score=score,
        ai_feedback=strip_score_lines(final_reply),
        needs_review=needs_review,
        graded_at=utcnow(),
    )
    return record, all_results


def grade_submission(
    job: GradingJob,
    llm: ChatClient,
    templates: Optional[PromptTemplates] = None,
    *,
    timeout_s: float = DEFAULT_GRADING_TIMEOUT_S,
    clock: Callable[[], float] = time.monotonic,
) -> GradeRecord:
    record, _results = grade_submission_detailed(
        job, llm, templates, timeout_s=timeout_s, clock=clock
    )
    return record
