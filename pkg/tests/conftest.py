from __future__ import annotations

from datetime import datetime, timedelta, timezone
from fractions import Fraction

import pytest

from evalserve import service
from evalserve.domain import Exercise, TestSpec, User
from evalserve.store import Store

NOW = datetime(2026, 5, 4, 12, 0, tzinfo=timezone.utc)


def make_exercise(
    name="integrals",
    max_points=4,
    tests=(),
    n_tries=3,
    deadline=None,
    ex_type="text",
    task="Compute the integral of x^2 from 0 to 1.",
    sample_solution="1/3, by the power rule.",
):
    return Exercise(
        name=name,
        task=task,
        sample_solution=sample_solution,
        max_points=Fraction(max_points),
        tests=tuple(tests),
        n_tries=n_tries,
        deadline=deadline,
        ex_type=ex_type,
    )


def text_test(test_id="t1", question="Did the student show the calculation?", yes=1, no=0):
    return TestSpec(
        test_id=test_id,
        kind="text",
        question=question,
        points_if_yes=Fraction(yes),
        points_if_no=Fraction(no),
    )


def code_test(test_id="c1", question="Does the function return correct values?", source=None):
    return TestSpec(
        test_id=test_id,
        kind="code",
        question=question,
        test_source=source
        or (
            "def check(candidate):\n"
            "    ok = candidate(2) == 4\n"
            "    reply = 'returns correct values' if ok else 'wrong value for 2'\n"
            "    return reply, 1 if ok else 0\n"
        ),
    )


@pytest.fixture
def store(tmp_path):
    return Store(tmp_path / "state.snap")


@pytest.fixture
def seeded_store(store):
    """Course with one admin, one tutor, two students, one text exercise."""
    service.enroll(store, "numerics", User("ada", "Ada"), ["admin"])
    service.enroll(store, "numerics", User("tom", "Tom"), ["tutor"])
    service.enroll(store, "numerics", User("stu", "Stu"), ["student"])
    service.enroll(store, "numerics", User("sue", "Sue"), ["student"])
    service.register_exercise(store, "numerics", make_exercise(), actor_id="ada")
    return store
