"""Client-side error types; server error codes surface as ServerRejected."""

from __future__ import annotations


class ClientError(Exception):
    pass


class NotConnected(ClientError):
    pass


class SourceUnrecoverable(ClientError):
    """The hand-in callable has no retrievable source text.

    Functions must be defined in a notebook cell or a file; objects built in
    a bare REPL or with exec cannot be shipped as text.
    """


class ServerRejected(ClientError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.message = message


class RequestTimeout(ClientError):
    pass
