"""Notebook client for the grading service.

    import evalclient
    evalclient.login("https://grading.example.edu")
    evalclient.enter_course("numerics")
    evalclient.handin_exercise("integrals", "The integral is 1/3 ...")

Hand-ins are asynchronous: the call returns immediately and the feedback
renders beneath the cell when grading finishes. Code exercises take a
function; its relayed tests run inside this process, never on the server.
"""

from .errors import (
    ClientError,
    NotConnected,
    RequestTimeout,
    ServerRejected,
    SourceUnrecoverable,
)
from .session import (
    ClientSession,
    PendingHandin,
    enter_course,
    handin_exercise,
    login,
    register_exercise,
    remove_exercise,
)

__version__ = "0.1.0"

__all__ = [
    "ClientError",
    "ClientSession",
    "NotConnected",
    "PendingHandin",
    "RequestTimeout",
    "ServerRejected",
    "SourceUnrecoverable",
    "enter_course",
    "handin_exercise",
    "login",
    "register_exercise",
    "remove_exercise",
]
