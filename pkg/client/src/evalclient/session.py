"""Notebook-side session: login, course entry, asynchronous hand-ins with
in-place feedback, exercise administration, and the responder that runs
relayed code tests locally.

A background thread owns the receiving end of the socket and dispatches
pushed messages; user-facing calls never block on grading. The login secret
is sent exactly once; everything afterwards rides on the session token.
"""

from __future__ import annotations

import getpass
import inspect
import json
import textwrap
import threading
import uuid
from typing import Callable, Optional, Union
from urllib.parse import urlsplit

import httpx
from websockets.sync.client import connect as ws_connect

from . import render, runner
from .errors import NotConnected, RequestTimeout, ServerRejected, SourceUnrecoverable

PROTOCOL_VERSION = 1
DEFAULT_REQUEST_TIMEOUT_S = 30.0


def _endpoints(server_url: str) -> tuple[str, str]:
    """(websocket URL, REST base URL) from whatever the user typed."""
    if "//" not in server_url:
        server_url = "http://" + server_url
    parts = urlsplit(server_url)
    scheme = parts.scheme or "http"
    ws_scheme = "wss" if scheme in ("https", "wss") else "ws"
    http_scheme = "https" if scheme in ("https", "wss") else "http"
    host = parts.netloc
    return f"{ws_scheme}://{host}/ws", f"{http_scheme}://{host}"


def _solution_text(solution: Union[str, Callable]) -> tuple[str, Optional[Callable]]:
    if isinstance(solution, str):
        return solution, None
    if callable(solution):
        try:
            source = textwrap.dedent(inspect.getsource(solution))
        except (OSError, TypeError) as exc:
            raise SourceUnrecoverable(
                "cannot recover the source of the handed-in function; define it "
                "in a notebook cell or a file and hand in that definition"
            ) from exc
        return source, solution
    raise TypeError("solution must be a string or a function")


class PendingHandin:
    """Handle returned by handin_exercise; resolves when feedback arrives."""

    def __init__(self, exercise: str, slot: render.FeedbackSlot):
        self.exercise = exercise
        self.submission_id: Optional[str] = None
        self.attempt_index: Optional[int] = None
        self.feedback: Optional[dict] = None
        self.solution_fn: Optional[Callable] = None
        self._slot = slot
        self._done = threading.Event()

    def wait(self, timeout: Optional[float] = None) -> dict:
        if not self._done.wait(timeout):
            raise RequestTimeout(f"no feedback for {self.exercise!r} yet")
        return self.feedback

    @property
    def done(self) -> bool:
        return self._done.is_set()

    def _resolve(self, payload: dict) -> None:
        self.feedback = payload
        self._slot.update(render.feedback_text(self.exercise, payload))
        self._done.set()


class _Waiter:
    def __init__(self):
        self.event = threading.Event()
        self.reply: Optional[dict] = None


class ClientSession:
    """One active socket per session; hand-in state survives reconnects."""

    def __init__(self, server_url: str, user_id: str, token: str):
        self.ws_url, self.rest_url = _endpoints(server_url)
        self.user_id = user_id
        self.token = token
        self.course: Optional[str] = None
        self._ws = None
        self._send_lock = threading.Lock()
        self._recv_thread: Optional[threading.Thread] = None
        self._waiters: dict[str, _Waiter] = {}
        self._pending: dict[str, PendingHandin] = {}  # submission_id -> handle
        self._unrouted: list[PendingHandin] = []  # acked but id not yet known
        self.sent_frames: list[str] = []  # outgoing log (secrets never after login)

    # --- socket plumbing ------------------------------------------------------

    def _attach(self, ws) -> None:
        self._ws = ws
        self._recv_thread = threading.Thread(target=self._receive_loop, daemon=True)
        self._recv_thread.start()

    def _receive_loop(self) -> None:
        ws = self._ws
        while True:
            try:
                raw = ws.recv()
            except Exception:
                return  # socket closed; pending registry stays for reconnect
            try:
                message = json.loads(raw)
            except json.JSONDecodeError:
                continue
            self._dispatch(message)

    def _dispatch(self, message: dict) -> None:
        correlation_id = message.get("correlation_id", "")
        waiter = self._waiters.pop(correlation_id, None)
        if waiter is not None:
            waiter.reply = message
            waiter.event.set()
            return
        kind = message.get("type")
        if kind == "run_tests":
            threading.Thread(
                target=self._respond_to_tests, args=(message,), daemon=True
            ).start()
        elif kind == "feedback":
            pending = self._pending.pop(message.get("submission_id", ""), None)
            if pending is not None:
                pending._resolve(message)

    def _send(self, message: dict) -> None:
        if self._ws is None:
            raise NotConnected("login first")
        raw = json.dumps(message)
        with self._send_lock:
            self.sent_frames.append(raw)
            self._ws.send(raw)

    def _request(self, type_: str, payload: dict, timeout: float = DEFAULT_REQUEST_TIMEOUT_S) -> dict:
        correlation_id = uuid.uuid4().hex
        waiter = _Waiter()
        self._waiters[correlation_id] = waiter
        body = {"v": PROTOCOL_VERSION, "type": type_, "correlation_id": correlation_id}
        body.update(payload)
        self._send(body)
        if not waiter.event.wait(timeout):
            self._waiters.pop(correlation_id, None)
            raise RequestTimeout(f"server did not answer {type_} within {timeout:.0f}s")
        reply = waiter.reply
        if reply.get("type") == "error":
            raise ServerRejected(reply.get("code", "error"), reply.get("human_message", ""))
        return reply

    # --- test responder --------------------------------------------------------

    def _respond_to_tests(self, message: dict) -> None:
        submission_id = message.get("submission_id", "")
        pending = self._pending.get(submission_id)
        solution = pending.solution_fn if pending else None
        if solution is None:
            results = [
                {"test_id": t["test_id"], "reply": "no local solution object", "points": 0}
                for t in message.get("tests", [])
            ]
        else:
            results = runner.run_tests(message.get("tests", []), solution)
        try:
            self._send(
                {
                    "v": PROTOCOL_VERSION,
                    "type": "test_results",
                    "correlation_id": message.get("correlation_id", uuid.uuid4().hex),
                    "submission_id": submission_id,
                    "results": results,
                }
            )
        except Exception:
            pass  # socket gone mid-reply; the server's relay timeout covers this

    # --- user-facing calls -------------------------------------------------------

    def enter_course(self, course_name: str) -> list[str]:
        reply = self._request("enter_course", {"course": course_name})
        self.course = course_name
        roles = reply.get("roles", [])
        render.notice(f"entered course **{course_name}** as {', '.join(roles)}")
        return roles

    def handin_exercise(self, exercise_name: str, solution: Union[str, Callable]) -> PendingHandin:
        if self.course is None:
            raise NotConnected("enter a course first")
        content, solution_fn = _solution_text(solution)
        slot = render.FeedbackSlot(exercise_name)
        pending = PendingHandin(exercise_name, slot)
        pending.solution_fn = solution_fn
        try:
            reply = self._request(
                "handin",
                {"course": self.course, "exercise": exercise_name, "content": content},
            )
        except ServerRejected as exc:
            slot.update(f"**{exercise_name}: not handed in** - {exc.message or exc.code}")
            raise
        pending.submission_id = reply["submission_id"]
        pending.attempt_index = reply.get("attempt_index")
        self._pending[pending.submission_id] = pending
        return pending

    def register_exercise(
        self,
        name: str,
        task: str,
        solution: Union[str, Callable],
        points,
        tests: Optional[list[dict]] = None,
        n_tries: int = 3,
        deadline: Optional[str] = None,
        ex_type: str = "text",
    ) -> None:
        if self.course is None:
            raise NotConnected("enter a course first")
        solution_text, _ = _solution_text(solution)
        exercise = {
            "name": name,
            "task": task,
            "solution": solution_text,
            "points": points,
            "tests": tests or [],
            "n_tries": n_tries,
            "deadline": deadline,
            "ex_type": ex_type,
        }
        self._request("register_exercise", {"course": self.course, "exercise": exercise})
        render.notice(f"registered exercise **{name}**")

    def remove_exercise(self, name: str) -> None:
        if self.course is None:
            raise NotConnected("enter a course first")
        self._request("remove_exercise", {"course": self.course, "name": name})
        render.notice(f"removed exercise **{name}**")

    def fetch_overview(self) -> list[dict]:
        """Durable feedback path (e.g. after a kernel restart): REST overview."""
        if self.course is None:
            raise NotConnected("enter a course first")
        response = httpx.get(
            f"{self.rest_url}/api/courses/{self.course}/overview",
            headers={"Authorization": f"Bearer {self.token}"},
            timeout=30,
        )
        body = response.json()
        if response.status_code != 200:
            raise ServerRejected(body.get("code", "error"), body.get("message", ""))
        return body["exercises"]

    def close(self) -> None:
        if self._ws is not None:
            try:
                self._ws.close()
            except Exception:
                pass
            self._ws = None


_current: Optional[ClientSession] = None


def login(server_url: str, user_id: Optional[str] = None, secret: Optional[str] = None) -> ClientSession:
    """Sign in and open the socket; prompts for anything not passed.

    The password prompt never echoes. A second login replaces the current
    session and closes its socket.
    """
    global _current
    if user_id is None:
        user_id = input("user id: ")
    if secret is None:
        secret = getpass.getpass("password: ")
    ws_url, _rest = _endpoints(server_url)
    ws = ws_connect(ws_url)
    correlation_id = uuid.uuid4().hex
    login_frame = json.dumps(
        {
            "v": PROTOCOL_VERSION,
            "type": "login",
            "correlation_id": correlation_id,
            "user_id": user_id,
            "secret": secret,
        }
    )
    ws.send(login_frame)
    reply = json.loads(ws.recv())
    if reply.get("type") != "login_ok":
        ws.close()
        raise ServerRejected(reply.get("code", "error"), reply.get("human_message", "login failed"))
    if _current is not None:
        _current.close()
    session = ClientSession(server_url, user_id=reply["user_id"], token=reply["token"])
    session.sent_frames.append(login_frame)
    session._attach(ws)
    _current = session
    render.notice(f"signed in as **{reply['user_id']}**")
    return session


def _require_session() -> ClientSession:
    if _current is None:
        raise NotConnected("call login(server_url) first")
    return _current


def enter_course(course_name: str) -> list[str]:
    return _require_session().enter_course(course_name)


def handin_exercise(exercise_name: str, solution: Union[str, Callable]) -> PendingHandin:
    return _require_session().handin_exercise(exercise_name, solution)


def register_exercise(*args, **kwargs) -> None:
    return _require_session().register_exercise(*args, **kwargs)


def remove_exercise(name: str) -> None:
    return _require_session().remove_exercise(name)
