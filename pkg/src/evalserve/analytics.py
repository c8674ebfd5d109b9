"""Grading-agreement statistics and the anonymized research export.

Works on percent scores so exercises with different point totals are
comparable. "Human grade" means the tutor override when one exists,
otherwise the accepted AI grade. Standard deviations are population
standard deviations; that choice is fixed here so reports stay comparable.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional

from .domain import utcnow
from .errors import AnalyticsError
from .store import Snapshot

HISTOGRAM_BIN_PCT = 5.0


@dataclass(frozen=True)
class GradePair:
    """One submission graded by the AI and accepted/corrected by a human."""

    submission_id: str
    ai_score_pct: float
    human_score_pct: float
    score_changed: bool
    feedback_changed: bool
    attempt_index: int
    total_attempts: int
    group_key: str  # identifies the (user, exercise) attempt group


@dataclass
class PairExtraction:
    pairs: list[GradePair] = field(default_factory=list)
    skipped_ungraded: int = 0
    skipped_zero_max: int = 0


def extract_pairs(snapshot: Snapshot) -> PairExtraction:
    """Build grade pairs from stored submissions.

    Submissions without an AI grade are skipped (still pending), and
    exercises with max_points = 0 are excluded with a counted warning since
    percentages are undefined for them.
    """
    out = PairExtraction()
    group_sizes: dict[str, int] = {}
    for sub in snapshot.submissions.values():
        key = f"{sub.course_name}/{sub.exercise_name}/{sub.user_id}"
        group_sizes[key] = group_sizes.get(key, 0) + 1
    for sub in snapshot.submissions.values():
        grade = sub.grade
        if grade.ai_score is None:
            out.skipped_ungraded += 1
            continue
        course = snapshot.courses.get(sub.course_name)
        exercise = course.exercises.get(sub.exercise_name) if course else None
        if exercise is None or exercise.max_points == 0:
            out.skipped_zero_max += 1
            continue
        ai_pct = float(grade.ai_score / exercise.max_points * 100)
        human_score = grade.tutor_score if grade.tutor_score is not None else grade.ai_score
        human_pct = float(human_score / exercise.max_points * 100)
        key = f"{sub.course_name}/{sub.exercise_name}/{sub.user_id}"
        out.pairs.append(
            GradePair(
                submission_id=sub.submission_id,
                ai_score_pct=ai_pct,
                human_score_pct=human_pct,
                score_changed=grade.tutor_score is not None
                and grade.tutor_score != grade.ai_score,
                feedback_changed=grade.tutor_feedback is not None
                and grade.tutor_feedback != grade.ai_feedback,
                attempt_index=sub.attempt_index,
                total_attempts=group_sizes[key],
                group_key=key,
            )
        )
    return out


# --- agreement matrix ---------------------------------------------------------


@dataclass(frozen=True)
class AgreementMatrix:
    keep_score_keep_feedback: int
    keep_score_fix_feedback: int
    fix_score_keep_feedback: int
    fix_score_fix_feedback: int

    @property
    def total(self) -> int:
        return (
            self.keep_score_keep_feedback
            + self.keep_score_fix_feedback
            + self.fix_score_keep_feedback
            + self.fix_score_fix_feedback
        )

    def counts(self) -> dict[str, int]:
        return {
            "keep_score_keep_feedback": self.keep_score_keep_feedback,
            "keep_score_fix_feedback": self.keep_score_fix_feedback,
            "fix_score_keep_feedback": self.fix_score_keep_feedback,
            "fix_score_fix_feedback": self.fix_score_fix_feedback,
        }

    def percentages(self) -> dict[str, float]:
        return {name: round(count / self.total * 100, 1) for name, count in self.counts().items()}


def agreement_matrix(pairs: list[GradePair]) -> AgreementMatrix:
    """2x2 partition of pairs by whether the tutor kept or fixed the AI's
    score and feedback text."""
    if not pairs:
        raise AnalyticsError("agreement matrix needs at least one pair")
    cells = {(False, False): 0, (False, True): 0, (True, False): 0, (True, True): 0}
    for pair in pairs:
        cells[(pair.score_changed, pair.feedback_changed)] += 1
    return AgreementMatrix(
        keep_score_keep_feedback=cells[(False, False)],
        keep_score_fix_feedback=cells[(False, True)],
        fix_score_keep_feedback=cells[(True, False)],
        fix_score_fix_feedback=cells[(True, True)],
    )


# --- score difference distribution ---------------------------------------------


@dataclass(frozen=True)
class DiffStats:
    mean_pct: float
    std_pct: float  # population standard deviation
    histogram: list[tuple[float, int]]  # (bin lower edge, count), bin width 5
    identical_fraction: float
    n: int


def diff_stats(pairs: list[GradePair]) -> DiffStats:
    """Distribution of (AI - human) score differences in percent points."""
    if not pairs:
        raise AnalyticsError("diff stats need at least one pair")
    diffs = [p.ai_score_pct - p.human_score_pct for p in pairs]
    n = len(diffs)
    mean = sum(diffs) / n
    variance = sum((d - mean) ** 2 for d in diffs) / n
    bins: dict[float, int] = {}
    for d in diffs:
        edge = math.floor(d / HISTOGRAM_BIN_PCT) * HISTOGRAM_BIN_PCT
        bins[edge] = bins.get(edge, 0) + 1
    identical = sum(1 for d in diffs if d == 0)
    return DiffStats(
        mean_pct=mean,
        std_pct=math.sqrt(variance),
        histogram=sorted(bins.items()),
        identical_fraction=identical / n,
        n=n,
    )


# --- per-attempt averages --------------------------------------------------------


@dataclass(frozen=True)
class AttemptRow:
    total_attempts: int
    n_groups: int
    third_last: Optional[float]
    second_last: Optional[float]
    last: Optional[float]


def attempt_stats(pairs: list[GradePair]) -> list[AttemptRow]:
    """Mean AI score percentage per attempt position, split by how many
    attempts the group used. Positions beyond the last three are ignored."""
    cells: dict[tuple[int, int], list[float]] = {}
    groups: dict[int, set[str]] = {}
    for pair in pairs:
        k = pair.total_attempts
        groups.setdefault(k, set()).add(pair.group_key)
        position_from_last = k - pair.attempt_index
        cells.setdefault((k, position_from_last), []).append(pair.ai_score_pct)

    def mean_at(k: int, position: int) -> Optional[float]:
        values = cells.get((k, position))
        return sum(values) / len(values) if values else None

    rows = []
    for k in sorted(groups):
        rows.append(
            AttemptRow(
                total_attempts=k,
                n_groups=len(groups[k]),
                third_last=mean_at(k, 2),
                second_last=mean_at(k, 1),
                last=mean_at(k, 0),
            )
        )
    return rows


# --- improvement between consecutive attempts -------------------------------------


@dataclass(frozen=True)
class TransitionRow:
    total_attempts: int
    transition: str  # "1->2" or "2->3"
    better: int
    equal: int
    worse: int


def improvement_counts(pairs: list[GradePair]) -> list[TransitionRow]:
    """How often students scored better/equal/worse on the next attempt,
    compared on AI score percentages with strict inequality."""
    by_group: dict[str, dict[int, GradePair]] = {}
    for pair in pairs:
        by_group.setdefault(pair.group_key, {})[pair.attempt_index] = pair
    tallies: dict[tuple[int, int], list[int]] = {}
    for attempts in by_group.values():
        if len(attempts) < 2:
            continue
        k = next(iter(attempts.values())).total_attempts
        for first_index in sorted(attempts):
            second_index = first_index + 1
            if second_index not in attempts:
                continue
            earlier = attempts[first_index].ai_score_pct
            later = attempts[second_index].ai_score_pct
            tally = tallies.setdefault((k, first_index), [0, 0, 0])
            if later > earlier:
                tally[0] += 1
            elif later == earlier:
                tally[1] += 1
            else:
                tally[2] += 1
    rows = []
    for (k, first_index), (better, equal, worse) in sorted(tallies.items()):
        rows.append(
            TransitionRow(
                total_attempts=k,
                transition=f"{first_index}->{first_index + 1}",
                better=better,
                equal=equal,
                worse=worse,
            )
        )
    return rows


# --- anonymized export -------------------------------------------------------------


def pseudonym(salt: str, user_id: str) -> str:
    return hashlib.sha256(f"{salt}:{user_id}".encode("utf-8")).hexdigest()


def export_dataset(snapshot: Snapshot, salt: str) -> list[dict]:
    """Research export: submissions with user ids replaced by salted hashes.

    The same salt maps a user to the same pseudonym across exports, so
    longitudinal joins stay possible without revealing identities.
    """
    records = []
    order = sorted(
        snapshot.submissions.values(),
        key=lambda s: (s.course_name, s.exercise_name, s.user_id, s.attempt_index),
    )
    totals: dict[str, int] = {}
    for sub in order:
        key = f"{sub.course_name}/{sub.exercise_name}/{sub.user_id}"
        totals[key] = totals.get(key, 0) + 1
    for sub in order:
        course = snapshot.courses.get(sub.course_name)
        exercise = course.exercises.get(sub.exercise_name) if course else None
        key = f"{sub.course_name}/{sub.exercise_name}/{sub.user_id}"
        grade = sub.grade
        records.append(
            {
                "user": pseudonym(salt, sub.user_id),
                "course": sub.course_name,
                "exercise": sub.exercise_name,
                "attempt_index": sub.attempt_index,
                "total_attempts": totals[key],
                "ex_type": exercise.ex_type if exercise else None,
                "task": exercise.task if exercise else None,
                "sample_solution": exercise.sample_solution if exercise else None,
                "max_points": float(exercise.max_points) if exercise else None,
                "content": sub.content,
                "submitted_at": sub.submitted_at.isoformat(),
                "test_results": [
                    {
                        "question": r.question,
                        "reply": r.reply,
                        "points": float(r.points),
                        "status": r.status,
                    }
                    for r in sub.test_results
                ],
                "ai_score": float(grade.ai_score) if grade.ai_score is not None else None,
                "ai_feedback": grade.ai_feedback,
                "tutor_score": float(grade.tutor_score) if grade.tutor_score is not None else None,
                "tutor_feedback": grade.tutor_feedback,
                "needs_review": grade.needs_review,
                "graded_at": grade.graded_at.isoformat() if grade.graded_at else None,
                "feedback_latency_s": sub.feedback_latency,
            }
        )
    return records


def pairs_from_export(records: Iterable[dict]) -> list[GradePair]:
    """Rebuild grade pairs from an export, for checks that anonymization
    preserves every grading statistic."""
    pairs = []
    for rec in records:
        if rec["ai_score"] is None or not rec["max_points"]:
            continue
        ai_pct = rec["ai_score"] / rec["max_points"] * 100
        human = rec["tutor_score"] if rec["tutor_score"] is not None else rec["ai_score"]
        human_pct = human / rec["max_points"] * 100
        pairs.append(
            GradePair(
                submission_id=f"{rec['user']}/{rec['exercise']}/{rec['attempt_index']}",
                ai_score_pct=ai_pct,
                human_score_pct=human_pct,
                score_changed=rec["tutor_score"] is not None
                and rec["tutor_score"] != rec["ai_score"],
                feedback_changed=rec["tutor_feedback"] is not None
                and rec["tutor_feedback"] != rec["ai_feedback"],
                attempt_index=rec["attempt_index"],
                total_attempts=rec["total_attempts"],
                group_key=f"{rec['course']}/{rec['exercise']}/{rec['user']}",
            )
        )
    return pairs


# --- report files --------------------------------------------------------------------


def write_reports(snapshot: Snapshot, out_dir: str | Path, salt: str) -> dict:
    """Emit agreement.csv, diffs_histogram.csv, attempts.csv,
    improvements.csv, dataset.jsonl and report.json into the directory."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    extraction = extract_pairs(snapshot)
    pairs = extraction.pairs

    meta: dict = {
        "generated_at": utcnow().isoformat(),
        "n_pairs": len(pairs),
        "skipped_ungraded": extraction.skipped_ungraded,
        "skipped_zero_max_points": extraction.skipped_zero_max,
        "std_definition": "population",
        "notes": [
            "attempt statistics cover all attempt groups (no subset selection)",
            "human grade = tutor override when present, else the accepted AI grade",
        ],
    }

    with (out / "agreement.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["cell", "count", "percent"])
        if pairs:
            matrix = agreement_matrix(pairs)
            for name, count in matrix.counts().items():
                writer.writerow([name, count, matrix.percentages()[name]])

    with (out / "diffs_histogram.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_start_pct", "bin_end_pct", "count"])
        if pairs:
            stats = diff_stats(pairs)
            for edge, count in stats.histogram:
                writer.writerow([edge, edge + HISTOGRAM_BIN_PCT, count])
            meta["diff_mean_pct"] = stats.mean_pct
            meta["diff_std_pct"] = stats.std_pct
            meta["identical_fraction"] = stats.identical_fraction

    with (out / "attempts.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["total_attempts", "n_groups", "third_last", "second_last", "last"])
        for row in attempt_stats(pairs):
            writer.writerow(
                [row.total_attempts, row.n_groups, row.third_last, row.second_last, row.last]
            )

    with (out / "improvements.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["total_attempts", "transition", "better", "equal", "worse"])
        for row in improvement_counts(pairs):
            writer.writerow([row.total_attempts, row.transition, row.better, row.equal, row.worse])

    with (out / "dataset.jsonl").open("w", encoding="utf-8") as fh:
        for record in export_dataset(snapshot, salt):
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    with (out / "report.json").open("w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2)
    return meta
