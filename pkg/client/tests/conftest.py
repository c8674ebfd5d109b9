from __future__ import annotations

import socket
import threading
import time

import pytest
import uvicorn

from evalserve import service
from evalserve.auth import FileAuthBackend
from evalserve.config import ServerConfig
from evalserve.domain import User
from evalserve.server import build_state, create_app

PASSWORDS = {"ada": "adapw", "stu": "stupw"}


class AutoGrader:
    """YES to every yes/no question, a fixed score on the final stage."""

    def __init__(self, score_line="Nice work. SCORE: 3/4"):
        self.score_line = score_line

    def complete(self, history):
        prompt = history[-1].content
        if "Answer strictly YES or NO" in prompt:
            return "YES"
        if "SCORE:" in prompt:
            return self.score_line
        return "analysis"


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


class LiveServer:
    def __init__(self, tmp_path):
        userfile = tmp_path / "users.auth"
        userfile.write_text(
            "\n".join(FileAuthBackend.make_line(u, p) for u, p in PASSWORDS.items()) + "\n"
        )
        config = ServerConfig(
            store_path=str(tmp_path / "state.snap"),
            auth_file=str(userfile),
            relay_timeout_s=5.0,
        )
        self.state = build_state(config, llm=AutoGrader())
        service.enroll(self.state.store, "numerics", User("ada", "Ada"), ["admin"])
        service.enroll(self.state.store, "numerics", User("stu", "Stu"), ["student"])
        self.port = free_port()
        self.url = f"http://127.0.0.1:{self.port}"
        self._server = uvicorn.Server(
            uvicorn.Config(
                create_app(self.state), host="127.0.0.1", port=self.port, log_level="warning"
            )
        )
        self._thread = threading.Thread(target=self._server.run, daemon=True)
        self._thread.start()
        deadline = time.time() + 10
        while not self._server.started:
            if time.time() > deadline:
                raise RuntimeError("server did not start")
            time.sleep(0.02)

    def stop(self):
        self._server.should_exit = True
        self._thread.join(timeout=10)


@pytest.fixture
def live_server(tmp_path):
    server = LiveServer(tmp_path)
    yield server
    server.stop()
