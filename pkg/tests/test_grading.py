from __future__ import annotations

import dataclasses
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from evalserve.domain import TestResult, format_points, utcnow
from evalserve.errors import LlmUnavailable
from evalserve.grading import (
    GradingJob,
    PromptTemplates,
    answer_text_tests,
    build_prompt_sequence,
    extract_score,
    grade_submission,
    job_from_submission,
    parse_yes_no,
    render_test_summary,
    strip_score_lines,
)
from evalserve.llm import ScriptedLlm

from .conftest import code_test, make_exercise, text_test

TEMPLATES = PromptTemplates.load()


def make_job(tests=(), results=(), max_points=4, content="my solution"):
    return GradingJob(
        submission_id="sub1",
        course_name="numerics",
        exercise_name="integrals",
        task="Compute the integral of x^2 from 0 to 1.",
        sample_solution="1/3, by the power rule.",
        max_points=Fraction(max_points),
        tests=tuple(tests),
        content=content,
        test_results=tuple(results),
        created_at=utcnow(),
        submitted_at=utcnow(),
    )


class TestExtractScore:
    def test_plain_parse(self):
        assert extract_score("…great work. SCORE: 3.5/4", Fraction(4)) == (Fraction(7, 2), True)

    def test_clamps_high(self):
        assert extract_score("SCORE: 7/4", Fraction(4)) == (Fraction(4), True)

    def test_clamps_negative_to_zero(self):
        assert extract_score("SCORE: -1/4", Fraction(4)) == (Fraction(0), True)

    def test_missing_marker(self):
        assert extract_score("I would award three points.", Fraction(4)) == (Fraction(0), False)

    def test_last_occurrence_wins(self):
        reply = "Draft: SCORE: 1/4 … reconsidering … SCORE: 2/4"
        assert extract_score(reply, Fraction(4)) == (Fraction(2), True)

    def test_case_and_spacing_tolerated(self):
        assert extract_score("score: 2 / 4", Fraction(4)) == (Fraction(2), True)

    @given(st.text(max_size=200))
    def test_total_function(self, text):
        score, ok = extract_score(text, Fraction(4))
        assert 0 <= score <= 4
        assert isinstance(ok, bool)


class TestParseYesNo:
    @pytest.mark.parametrize(
        "reply,expected",
        [
            ("YES", True),
            ("No.", False),
            ("  yes, the code is documented", True),
            ('"NO"', False),
            ("Maybe", None),
            ("Yesterday it worked", None),
            ("", None),
        ],
    )
    def test_parse(self, reply, expected):
        assert parse_yes_no(reply) is expected


class TestBuildPromptSequence:
    def test_no_tests_sequence(self):
        stages = build_prompt_sequence(make_job(), TEMPLATES)
        assert [s.stage for s in stages] == ["context", "comparison", "omissions", "final"]

    def test_text_tests_get_stages_code_tests_do_not(self):
        code_result = TestResult(
            test_id="c1",
            question="Does the function return correct values?",
            reply="returns correct values",
            points=Fraction(1),
        )
        job = make_job(
            tests=[text_test("t1"), text_test("t2", question="Is it efficient?"), code_test("c1")],
            results=[code_result],
        )
        stages = build_prompt_sequence(job, TEMPLATES)
        kinds = [s.stage for s in stages]
        assert kinds == ["context", "test_question", "test_question", "comparison", "omissions", "final"]
        final = stages[-1].content
        assert "Does the function return correct values?" in final
        assert "returns correct values" in final

    def test_context_contains_all_three_texts(self):
        stages = build_prompt_sequence(make_job(), TEMPLATES)
        context = stages[0].content
        for needle in ("integral of x^2", "power rule", "my solution"):
            assert needle in context

    def test_final_names_the_point_total(self):
        stages = build_prompt_sequence(make_job(max_points=4), TEMPLATES)
        final = stages[-1].content
        assert "out of 4" in final
        assert "SCORE:" in final


def test_render_test_summary_contains_everything():
    results = [
        TestResult(test_id="t1", question="Documented?", reply="YES", points=Fraction(1)),
        TestResult(test_id="c1", question="Correct?", reply="all good", points=Fraction(3, 2)),
    ]
    summary = render_test_summary(results)
    for needle in ("Documented?", "YES", "Correct?", "all good", format_points(Fraction(5, 2))):
        assert needle in summary


class TestAnswerTextTests:
    def test_yes_and_no_branches(self):
        job = make_job(tests=[text_test("t1", yes=1, no=0), text_test("t2", yes=0, no=2)])
        stub = ScriptedLlm(["YES", "No."])
        results = answer_text_tests(job, stub, TEMPLATES)
        assert [r.points for r in results] == [Fraction(1), Fraction(2)]
        assert all(r.status == "ok" for r in results)
        stub.assert_consumed()

    def test_unparseable_reply_is_client_error(self):
        job = make_job(tests=[text_test("t1")])
        results = answer_text_tests(job, ScriptedLlm(["Maybe"]), TEMPLATES)
        assert results[0].status == "client_error"
        assert results[0].points == 0

    def test_context_folded_into_first_question(self):
        job = make_job(tests=[text_test("t1"), text_test("t2")])
        stub = ScriptedLlm(["YES", "YES"])
        answer_text_tests(job, stub, TEMPLATES)
        first_request = stub.requests[0]
        assert len(first_request) == 1
        assert "integral of x^2" in first_request[0].content  # context rides along
        second_request = stub.requests[1]
        assert len(second_request) == 3  # user, assistant, user


class TestGradeSubmission:
    def test_happy_path_scripted(self):
        job = make_job()
        stub = ScriptedLlm(["differences: none", "nothing omitted", "Great! SCORE: 4/4"])
        record = grade_submission(job, stub, TEMPLATES)
        assert record.ai_score == 4
        assert record.needs_review is False
        assert "SCORE" not in record.ai_feedback
        assert "Great!" in record.ai_feedback
        stub.assert_consumed()

    def test_zero_test_pipeline_consumes_exactly_three_calls(self):
        stub = ScriptedLlm(["a", "b", "SCORE: 1/4", "surplus"])
        grade_submission(make_job(), stub, TEMPLATES)
        assert stub.calls == 3
        assert stub.remaining == 1
        with pytest.raises(Exception):
            stub.assert_consumed()

    def test_retry_then_fallback_to_test_points(self):
        code_result = TestResult(test_id="c1", question="q", reply="ok", points=Fraction(2))
        job = make_job(tests=[code_test("c1")], results=[code_result])
        job = dataclasses.replace(job, tests=(code_test("c1"),))
        stub = ScriptedLlm(["cmp", "om", "no score here", "still none"])
        record = grade_submission(job, stub, TEMPLATES)
        assert record.ai_score == 2  # summed test points
        assert record.needs_review is True
        stub.assert_consumed()

    def test_fallback_clamps_to_max(self):
        results = [
            TestResult(test_id="c1", question="q", reply="ok", points=Fraction(9)),
        ]
        job = make_job(tests=[code_test("c1")], results=results, max_points=4)
        stub = ScriptedLlm(["cmp", "om", "none", "none again"])
        record = grade_submission(job, stub, TEMPLATES)
        assert record.ai_score == 4

    def test_retry_success_keeps_review_flag_clear(self):
        stub = ScriptedLlm(["cmp", "om", "no marker", "fine. SCORE: 3/4"])
        record = grade_submission(make_job(), stub, TEMPLATES)
        assert record.ai_score == 3
        assert record.needs_review is False

    def test_failed_code_test_flags_review(self):
        results = [TestResult.failure(code_test("c1"), "timeout")]
        job = make_job(tests=[code_test("c1")], results=results)
        stub = ScriptedLlm(["cmp", "om", "SCORE: 4/4"])
        record = grade_submission(job, stub, TEMPLATES)
        assert record.ai_score == 4
        assert record.needs_review is True

    def test_final_prompt_carries_text_test_replies_and_sum(self):
        job = make_job(tests=[text_test("t1", yes=1, no=0), code_test("c1")],
                       results=[TestResult(test_id="c1", question="code ok?", reply="fine", points=Fraction(2))])
        stub = ScriptedLlm(["YES", "cmp", "om", "SCORE: 4/4"])
        grade_submission(job, stub, TEMPLATES)
        final_request = stub.requests[-1][-1].content
        assert "Did the student show the calculation?" in final_request
        assert "code ok?" in final_request
        assert "fine" in final_request
        assert f"Total test points achieved: {format_points(Fraction(3))}" in final_request

    def test_determinism_modulo_timestamps(self):
        transcript = ["cmp run", "omissions run", "Nice. SCORE: 3.5/4"]
        records = [
            grade_submission(make_job(), ScriptedLlm(transcript), TEMPLATES) for _ in range(2)
        ]
        a, b = records
        assert (a.ai_score, a.ai_feedback, a.tutor_score, a.tutor_feedback, a.needs_review) == (
            b.ai_score,
            b.ai_feedback,
            b.tutor_score,
            b.tutor_feedback,
            b.needs_review,
        )

    def test_llm_unavailable_propagates(self):
        class DownLlm:
            def complete(self, history):
                raise LlmUnavailable("down")

        with pytest.raises(LlmUnavailable):
            grade_submission(make_job(), DownLlm(), TEMPLATES)

    def test_timeout_produces_reviewable_fallback(self):
        ticks = iter([0.0, 0.0, 1000.0, 1000.0, 1000.0, 1000.0])
        job = make_job(tests=[text_test("t1")])
        stub = ScriptedLlm(["YES"])
        record = grade_submission(job, stub, TEMPLATES, timeout_s=600, clock=lambda: next(ticks))
        assert record.needs_review is True
        assert record.ai_score == 1  # the answered text test's point survives
        assert "did not finish" in record.ai_feedback


def test_job_from_submission_snapshots_exercise(seeded_store):
    from evalserve import service

    sub = service.submit(seeded_store, "numerics", "integrals", "stu", "body", now=utcnow())
    exercise = seeded_store.read(lambda s: s.courses["numerics"].exercises["integrals"])
    job = job_from_submission(sub, exercise)
    assert job.task == exercise.task
    assert job.max_points == exercise.max_points
    # replacing the exercise afterwards must not affect the job
    from .conftest import make_exercise as mk

    service.register_exercise(seeded_store, "numerics", mk(task="other"), actor_id="ada")
    assert job.task == "Compute the integral of x^2 from 0 to 1."


def test_strip_score_lines():
    text = "Good start.\nSCORE: 2/4\ntrailing note"
    assert strip_score_lines(text) == "Good start.\ntrailing note"
