"""HTTP + WebSocket surface and process wiring.

One process hosts the REST console API, the /ws socket endpoint, the
grading worker pool, and the relay bookkeeping for client-side code tests.
All state mutations funnel through the store's single writer; grading runs
on worker threads so socket handling never waits on the model.

Security note: nothing in this process evaluates student code or test
sources. Code tests are shipped to the submitting client over its own
socket and only the reported results come back.
"""

from __future__ import annotations

import asyncio
import logging
import queue
import statistics
import threading
import time
from typing import Optional

from fastapi import FastAPI, Request, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse

from . import protocol, service
from .auth import (
    AuthService,
    Credentials,
    DirectoryAuthBackend,
    DirectoryConfig,
    FileAuthBackend,
)
from .config import ServerConfig
from .domain import Exercise, Submission, utcnow
from .errors import (
    InvalidToken,
    LlmUnavailable,
    NotAuthorized,
    NotEnrolled,
    ProtocolError,
    ServiceError,
    UnknownCourse,
    UnknownExercise,
)
from .grading import (
    GradingJob,
    PromptTemplates,
    fallback_record,
    grade_submission_detailed,
    job_from_submission,
)
from .llm import ChatClient, HttpChatClient, LlmConfig
from .store import Snapshot, Store

log = logging.getLogger("evalserve")

_RELAY_DISCONNECT = object()  # sentinel result for a vanished client


class ServerState:
    """Everything the handlers share; built once per process."""

    def __init__(
        self,
        config: ServerConfig,
        store: Store,
        auth: AuthService,
        llm: ChatClient,
        templates: PromptTemplates,
    ):
        self.config = config
        self.store = store
        self.auth = auth
        self.llm = llm
        self.templates = templates
        self.jobs: "queue.Queue[Optional[GradingJob]]" = queue.Queue()
        self.loop: Optional[asyncio.AbstractEventLoop] = None
        self._workers: list[threading.Thread] = []
        # submission_id -> (future for the client's result entries, session)
        self.relays: dict[str, tuple[asyncio.Future, "SocketSession"]] = {}
        # submission_id -> session to push feedback to
        self.feedback_routes: dict[str, "SocketSession"] = {}

    # --- worker pool ---------------------------------------------------------

    def start(self, loop: asyncio.AbstractEventLoop) -> None:
        self.loop = loop
        for i in range(self.config.grading_concurrency):
            worker = threading.Thread(target=self._work, name=f"grader-{i}", daemon=True)
            worker.start()
            self._workers.append(worker)

    def stop(self) -> None:
        for _ in self._workers:
            self.jobs.put(None)
        for worker in self._workers:
            worker.join(timeout=5)
        self._workers.clear()

    def enqueue(self, job: GradingJob) -> None:
        self.jobs.put(job)

    def _work(self) -> None:
        while True:
            job = self.jobs.get()
            if job is None:
                return
            record, results = self._grade_with_retries(job)
            latency = (utcnow() - job.submitted_at).total_seconds()
            try:
                submission = service.apply_grade(
                    self.store, job.submission_id, record, latency, test_results=results
                )
            except ServiceError:
                log.exception("grade for %s could not be stored", job.submission_id)
                continue
            self._push_feedback(submission)

    def _grade_with_retries(self, job: GradingJob):
        deadline = time.monotonic() + self.config.grading_timeout_s
        backoff = 1.0
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return (
                    fallback_record(
                        job,
                        "Automatic grading did not complete in time; "
                        "a tutor will review this submission.",
                    ),
                    list(job.test_results),
                )
            try:
                return grade_submission_detailed(
                    job, self.llm, self.templates, timeout_s=remaining
                )
            except LlmUnavailable as exc:
                log.warning("grading backend unavailable (%s); job %s waits", exc, job.submission_id)
                time.sleep(max(0.0, min(backoff, deadline - time.monotonic(), 30.0)))
                backoff *= 2
            except Exception:
                log.exception("grading %s failed unexpectedly", job.submission_id)
                return (
                    fallback_record(
                        job,
                        "Automatic grading failed; a tutor will review this submission.",
                    ),
                    list(job.test_results),
                )

    # --- feedback push ---------------------------------------------------------

    def _push_feedback(self, submission: Submission) -> None:
        session = self.feedback_routes.pop(submission.submission_id, None)
        if session is None or not session.open or self.loop is None:
            return  # client gone; the REST overview remains the durable path
        payload = self._feedback_payload(submission)
        message = protocol.encode("feedback", payload, protocol.new_correlation_id())
        asyncio.run_coroutine_threadsafe(session.send_raw(message), self.loop)

    def _feedback_payload(self, submission: Submission) -> dict:
        def build(state: Snapshot) -> dict:
            course = state.courses.get(submission.course_name)
            exercise = course.exercises.get(submission.exercise_name) if course else None
            used = service.attempts_used(
                state, submission.course_name, submission.exercise_name, submission.user_id
            )
            n_tries = exercise.n_tries if exercise else submission.attempt_index
            max_points = float(exercise.max_points) if exercise else 0.0
            grade = submission.grade
            effective = grade.effective_score
            return {
                "submission_id": submission.submission_id,
                "exercise": submission.exercise_name,
                "score": float(effective) if effective is not None else None,
                "max_points": max_points,
                "feedback": grade.ai_feedback,
                "remaining_attempts": max(n_tries - used, 0),
                "needs_review": grade.needs_review,
            }

        return self.store.read(build)

    # --- relay ---------------------------------------------------------

    async def run_remote_tests(self, submission: Submission, specs, session: "SocketSession"):
        """Ship code tests to the submitting client and wait for its results.

        Resolves exactly once: reported results, timeout, or disconnect.
        """
        assert self.loop is not None
        future = self.loop.create_future()
        self.relays[submission.submission_id] = (future, session)
        try:
            sent = await session.send_message(
                "run_tests",
                protocol.run_tests_payload(submission.submission_id, specs),
                protocol.new_correlation_id(),
            )
            if not sent:
                return protocol.relay_failure_results(specs, "client_error")
            try:
                entries = await asyncio.wait_for(future, timeout=self.config.relay_timeout_s)
            except asyncio.TimeoutError:
                return protocol.relay_failure_results(specs, "timeout")
            if entries is _RELAY_DISCONNECT:
                return protocol.relay_failure_results(specs, "client_error")
            return protocol.merge_relay_results(specs, entries)
        finally:
            self.relays.pop(submission.submission_id, None)

    def resolve_relay(self, submission_id: str, entries) -> None:
        pending = self.relays.get(submission_id)
        if pending is None:
            return  # already resolved (timeout/disconnect); later events are ignored
        future, _session = pending
        if not future.done():
            future.set_result(entries)

    def drop_session(self, session: "SocketSession") -> None:
        for submission_id, (future, owner) in list(self.relays.items()):
            if owner is session and not future.done():
                future.set_result(_RELAY_DISCONNECT)
        for submission_id, owner in list(self.feedback_routes.items()):
            if owner is session:
                self.feedback_routes.pop(submission_id, None)


def build_state(
    config: ServerConfig,
    llm: Optional[ChatClient] = None,
    store: Optional[Store] = None,
) -> ServerState:
    """Construct the full wiring from configuration; tests may inject a
    scripted LLM or a pre-seeded store."""
    config.validate()
    store = store or Store(config.store_path)
    if config.auth_backend == "file":
        backend = FileAuthBackend(config.auth_file)
    else:
        backend = DirectoryAuthBackend(
            DirectoryConfig(
                host=config.directory_host,
                port=config.directory_port,
                bind_dn_template=config.directory_bind_dn_template,
                use_tls=config.directory_tls,
            )
        )
    auth = AuthService(backend, ttl_s=config.token_ttl_s)
    llm = llm or HttpChatClient(
        LlmConfig(
            base_url=config.llm_base_url,
            model_name=config.llm_model,
            request_timeout=config.llm_request_timeout_s,
            max_retries=config.llm_max_retries,
        )
    )
    templates = PromptTemplates.load(config.prompt_template_dir)
    return ServerState(config, store, auth, llm, templates)


# --- read models -----------------------------------------------------------------


def _latest_graded(state: Snapshot, course: str, exercise: str, user_id: str):
    attempts = [
        s
        for s in state.submissions.values()
        if s.course_name == course and s.exercise_name == exercise and s.user_id == user_id
    ]
    attempts.sort(key=lambda s: s.attempt_index)
    graded = [s for s in attempts if s.grade.effective_score is not None]
    return attempts, graded[-1] if graded else None


def overview_rows(state: Snapshot, course_name: str, user_id: str) -> list[dict]:
    course = state.courses[course_name]
    rows = []
    for exercise in course.visible_exercises():
        attempts, latest = _latest_graded(state, course_name, exercise.name, user_id)
        effective = latest.grade.effective_score if latest else None
        rows.append(
            {
                "name": exercise.name,
                "deadline": exercise.deadline.isoformat() if exercise.deadline else None,
                "n_tries": exercise.n_tries,
                "attempts_used": len(attempts),
                "effective_score": float(effective) if effective is not None else None,
                "max_points": float(exercise.max_points),
                "needs_review": bool(latest and latest.grade.needs_review),
                "ex_type": exercise.ex_type,
            }
        )
    return rows


def grade_table(state: Snapshot, course_name: str) -> dict:
    course = state.courses[course_name]
    exercises = course.visible_exercises()
    students = sorted(
        uid for uid, roles in course.enrollment.items() if "student" in roles
    )
    cells = []
    for student in students:
        row = []
        for exercise in exercises:
            attempts, latest = _latest_graded(state, course_name, exercise.name, student)
            effective = latest.grade.effective_score if latest else None
            row.append(
                {
                    "effective_score": float(effective) if effective is not None else None,
                    "needs_review": any(s.grade.needs_review for s in attempts),
                    "attempts_used": len(attempts),
                }
            )
        cells.append(row)
    return {
        "course": course_name,
        "exercises": [
            {"name": e.name, "max_points": float(e.max_points)} for e in exercises
        ],
        "students": students,
        "cells": cells,
    }


def submission_detail(state: Snapshot, course_name: str, exercise_name: str, student: str) -> dict:
    course = state.courses[course_name]
    exercise = course.exercises.get(exercise_name)
    if exercise is None:
        raise UnknownExercise(f"no exercise named {exercise_name!r} in {course_name!r}")
    attempts = [
        s
        for s in state.submissions.values()
        if s.course_name == course_name
        and s.exercise_name == exercise_name
        and s.user_id == student
    ]
    attempts.sort(key=lambda s: s.attempt_index)
    return {
        "course": course_name,
        "exercise": exercise_name,
        "student": student,
        "task": exercise.task,
        "max_points": float(exercise.max_points),
        "attempts": [
            {
                "submission_id": s.submission_id,
                "attempt_index": s.attempt_index,
                "content": s.content,
                "submitted_at": s.submitted_at.isoformat(),
                "test_results": [
                    {
                        "test_id": r.test_id,
                        "question": r.question,
                        "reply": r.reply,
                        "points": float(r.points),
                        "status": r.status,
                    }
                    for r in s.test_results
                ],
                "ai_score": float(s.grade.ai_score) if s.grade.ai_score is not None else None,
                "ai_feedback": s.grade.ai_feedback,
                "tutor_score": float(s.grade.tutor_score)
                if s.grade.tutor_score is not None
                else None,
                "tutor_feedback": s.grade.tutor_feedback,
                "needs_review": s.grade.needs_review,
                "effective_score": float(s.grade.effective_score)
                if s.grade.effective_score is not None
                else None,
                "feedback_latency_s": s.feedback_latency,
            }
            for s in attempts
        ],
    }


def metrics_payload(state: Snapshot) -> dict:
    latencies = [
        s.feedback_latency for s in state.submissions.values() if s.feedback_latency is not None
    ]
    return {
        "graded_submissions": len(latencies),
        "average_feedback_latency_s": statistics.mean(latencies) if latencies else None,
        "median_feedback_latency_s": statistics.median(latencies) if latencies else None,
    }


# --- socket session -----------------------------------------------------------------


class SocketSession:
    """One logical session per socket; multiple in-flight requests allowed."""

    def __init__(self, websocket: WebSocket, state: ServerState):
        self.ws = websocket
        self.state = state
        self.user_id: Optional[str] = None
        self.token: Optional[str] = None
        self.open = True
        self._send_lock = asyncio.Lock()
        self._tasks: set[asyncio.Task] = set()

    async def send_raw(self, text: str) -> bool:
        if not self.open:
            return False
        try:
            async with self._send_lock:
                await self.ws.send_text(text)
            return True
        except Exception:
            self.open = False
            return False

    async def send_message(self, type_: str, payload: dict, correlation_id: str) -> bool:
        return await self.send_raw(protocol.encode(type_, payload, correlation_id))

    async def send_error(self, correlation_id: str, code: str, message: str) -> None:
        await self.send_message("error", protocol.error_payload(code, message), correlation_id)

    def spawn(self, coro) -> None:
        task = asyncio.get_running_loop().create_task(coro)
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    # --- dispatch ---------------------------------------------------------------

    async def dispatch(self, raw: str) -> None:
        try:
            message = protocol.decode(raw)
        except ProtocolError as exc:
            await self.send_error(_best_effort_correlation_id(raw), exc.code, exc.message)
            return
        handler = _WS_HANDLERS.get(message.type)
        if handler is None:
            # a known tag that is server->client only; clients must not send it
            await self.send_error(
                message.correlation_id, "bad-request", f"{message.type} is not a client request"
            )
            return
        try:
            await handler(self, message)
        except ServiceError as exc:
            await self.send_error(message.correlation_id, exc.code, exc.message)
        except Exception:
            log.exception("unhandled failure for %s", message.type)
            await self.send_error(message.correlation_id, "internal-error", "unexpected failure")

    def require_user(self) -> str:
        if self.user_id is None or self.token is None:
            raise NotAuthorized("login first")
        # re-validate so socket sessions expire along with their token
        self.state.auth.resolve(self.token)
        return self.user_id


def _best_effort_correlation_id(raw: str) -> str:
    import json as _json

    try:
        data = _json.loads(raw)
        cid = data.get("correlation_id")
        return cid if isinstance(cid, str) else ""
    except Exception:
        return ""


async def _ws_login(session: SocketSession, message: protocol.WireMessage) -> None:
    creds = Credentials(message.payload["user_id"], message.payload["secret"])
    token = await asyncio.to_thread(session.state.auth.authenticate, creds)
    session.user_id = token.user_id
    session.token = token.token
    display_name = session.state.store.read(
        lambda s: s.users.get(token.user_id).display_name if token.user_id in s.users else ""
    )
    await session.send_message(
        "login_ok",
        {
            "token": token.token,
            "user_id": token.user_id,
            "display_name": display_name,
            "expires_at": token.expires_at.isoformat(),
        },
        message.correlation_id,
    )


async def _ws_enter_course(session: SocketSession, message: protocol.WireMessage) -> None:
    user_id = session.require_user()
    course_name = message.payload["course"]
    course = session.state.store.read(lambda s: s.courses.get(course_name))
    if course is None:
        raise UnknownCourse(f"no course named {course_name!r}")
    role_set = sorted(course.roles_of(user_id))
    if not role_set:
        raise NotEnrolled(f"{user_id!r} is not enrolled in {course_name!r}")
    await session.send_message(
        "course_ok", {"course": course_name, "roles": role_set}, message.correlation_id
    )


async def _ws_register_exercise(session: SocketSession, message: protocol.WireMessage) -> None:
    user_id = session.require_user()
    exercise = protocol.exercise_from_payload(message.payload["exercise"])
    service.register_exercise(session.state.store, message.payload["course"], exercise, user_id)
    await session.send_message("ack", {}, message.correlation_id)


async def _ws_remove_exercise(session: SocketSession, message: protocol.WireMessage) -> None:
    user_id = session.require_user()
    service.remove_exercise(
        session.state.store, message.payload["course"], message.payload["name"], user_id
    )
    await session.send_message("ack", {}, message.correlation_id)


async def _ws_handin(session: SocketSession, message: protocol.WireMessage) -> None:
    user_id = session.require_user()
    state = session.state
    course_name = message.payload["course"]
    exercise_name = message.payload["exercise"]
    submission = service.submit(
        state.store, course_name, exercise_name, user_id, message.payload["content"]
    )
    exercise = state.store.read(
        lambda s: s.courses[course_name].exercises[exercise_name]
    )
    state.feedback_routes[submission.submission_id] = session
    await session.send_message(
        "handin_ack",
        {
            "submission_id": submission.submission_id,
            "attempt_index": submission.attempt_index,
            "remaining_attempts": max(exercise.n_tries - submission.attempt_index, 0),
        },
        message.correlation_id,
    )
    session.spawn(_collect_tests_and_enqueue(session, submission, exercise))


async def _collect_tests_and_enqueue(
    session: SocketSession, submission: Submission, exercise: Exercise
) -> None:
    state = session.state
    code_specs = exercise.code_tests() if exercise.ex_type == "code" else ()
    if code_specs:
        results = await state.run_remote_tests(submission, code_specs, session)
        try:
            submission = service.attach_test_results(
                state.store, submission.submission_id, results
            )
        except ServiceError:
            log.exception("cannot attach test results for %s", submission.submission_id)
            return
    state.enqueue(job_from_submission(submission, exercise))


async def _ws_test_results(session: SocketSession, message: protocol.WireMessage) -> None:
    session.require_user()
    session.state.resolve_relay(
        message.payload["submission_id"], message.payload["results"]
    )


_WS_HANDLERS = {
    "login": _ws_login,
    "enter_course": _ws_enter_course,
    "register_exercise": _ws_register_exercise,
    "remove_exercise": _ws_remove_exercise,
    "handin": _ws_handin,
    "test_results": _ws_test_results,
}


# --- application -----------------------------------------------------------------


def create_app(state: ServerState) -> FastAPI:
    from contextlib import asynccontextmanager

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        state.start(asyncio.get_running_loop())
        try:
            yield
        finally:
            state.stop()

    app = FastAPI(title="evalserve", lifespan=lifespan)

    @app.exception_handler(ServiceError)
    async def service_error_handler(_request: Request, exc: ServiceError):
        return JSONResponse(
            status_code=exc.http_status, content={"code": exc.code, "message": exc.message}
        )

    def bearer_token(request: Request) -> str:
        header = request.headers.get("authorization", "")
        scheme, _, token = header.partition(" ")
        if scheme.lower() != "bearer" or not token:
            raise InvalidToken("missing bearer token")
        return token.strip()

    # --- REST routes ---------------------------------------------------------

    @app.post("/api/login")
    async def login(request: Request):
        body = await request.json()
        if not isinstance(body, dict) or not isinstance(body.get("user_id"), str) or not isinstance(
            body.get("secret"), str
        ):
            raise ProtocolError("login needs user_id and secret")
        token = await asyncio.to_thread(
            state.auth.authenticate, Credentials(body["user_id"], body["secret"])
        )
        display_name = state.store.read(
            lambda s: s.users[token.user_id].display_name if token.user_id in s.users else ""
        )
        return {
            "token": token.token,
            "user_id": token.user_id,
            "display_name": display_name,
            "expires_at": token.expires_at.isoformat(),
        }

    @app.get("/api/courses")
    async def list_courses(request: Request):
        user = state.auth.authorize(state.store, bearer_token(request))

        def rows(snapshot: Snapshot):
            return [
                {"course": name, "roles": sorted(course.roles_of(user.user_id))}
                for name, course in sorted(snapshot.courses.items())
                if course.roles_of(user.user_id)
            ]

        return {"courses": state.store.read(rows)}

    @app.get("/api/courses/{course_name}/overview")
    async def course_overview(course_name: str, request: Request):
        user = state.auth.authorize(
            state.store, bearer_token(request), course_name, {"student", "tutor", "admin"}
        )
        return {
            "course": course_name,
            "exercises": state.store.read(lambda s: overview_rows(s, course_name, user.user_id)),
        }

    @app.get("/api/courses/{course_name}/grades")
    async def course_grades(course_name: str, request: Request):
        state.auth.authorize(state.store, bearer_token(request), course_name, {"tutor", "admin"})
        return state.store.read(lambda s: grade_table(s, course_name))

    @app.get("/api/courses/{course_name}/exercises/{exercise_name}/students/{student}")
    async def detail(course_name: str, exercise_name: str, student: str, request: Request):
        user = state.auth.authorize(
            state.store, bearer_token(request), course_name, {"student", "tutor", "admin"}
        )

        def check_and_build(snapshot: Snapshot):
            course = snapshot.courses[course_name]
            if user.user_id != student and not course.has_role(user.user_id, "tutor", "admin"):
                raise NotAuthorized("students may only read their own submissions")
            return submission_detail(snapshot, course_name, exercise_name, student)

        return state.store.read(check_and_build)

    @app.post("/api/submissions/{submission_id}/override")
    async def override(submission_id: str, request: Request):
        body = await request.json()
        if not isinstance(body, dict) or "score" not in body:
            raise ProtocolError("override needs score and feedback")
        submission = service.get_submission(state.store, submission_id)
        user = state.auth.authorize(
            state.store, bearer_token(request), submission.course_name, {"tutor", "admin"}
        )
        score = body["score"]
        if not isinstance(score, (int, float)) or isinstance(score, bool):
            raise ProtocolError("score must be a number")
        feedback = body.get("feedback", "")
        if not isinstance(feedback, str):
            raise ProtocolError("feedback must be a string")
        record = service.override_grade(state.store, submission_id, score, feedback, user.user_id)
        return {
            "submission_id": submission_id,
            "ai_score": float(record.ai_score) if record.ai_score is not None else None,
            "ai_feedback": record.ai_feedback,
            "tutor_score": float(record.tutor_score),
            "tutor_feedback": record.tutor_feedback,
            "effective_score": float(record.effective_score),
            "needs_review": record.needs_review,
        }

    @app.get("/api/metrics")
    async def metrics(request: Request):
        state.auth.authorize(state.store, bearer_token(request))
        return state.store.read(metrics_payload)

    # --- socket endpoint -------------------------------------------------------

    @app.websocket("/ws")
    async def socket_endpoint(websocket: WebSocket):
        await websocket.accept()
        session = SocketSession(websocket, state)
        try:
            while True:
                raw = await websocket.receive_text()
                session.spawn(session.dispatch(raw))
        except WebSocketDisconnect:
            pass
        finally:
            session.open = False
            state.drop_session(session)

    if state.config.static_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=state.config.static_dir, html=True))

    return app
