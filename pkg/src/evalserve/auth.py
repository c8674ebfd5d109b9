"""Credential verification and session tokens.

Two interchangeable backends: a directory server (simple bind over the
standard directory access protocol) for university deployments, and a
salted-hash user file for tests and small installs. Secrets never reach the
store or the logs; tokens are 256-bit random strings held only in memory.
"""

from __future__ import annotations

import hashlib
import hmac
import secrets
import socket
import ssl
import threading
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable, Optional, Protocol

from .domain import User, utcnow
from .errors import (
    BackendUnreachable,
    BadCredentials,
    ExpiredToken,
    InvalidToken,
    NotAuthorized,
    NotEnrolled,
)
from .store import Snapshot, Store

DEFAULT_TOKEN_TTL_S = 12 * 3600

_BIND_SUCCESS = 0
_BIND_INVALID_CREDENTIALS = 49


@dataclass(frozen=True)
class Credentials:
    user_id: str
    secret: str = field(repr=False)  # keep the secret out of reprs and logs


@dataclass(frozen=True)
class SessionToken:
    token: str
    user_id: str
    issued_at: datetime
    expires_at: datetime


class AuthBackend(Protocol):
    def verify(self, creds: Credentials) -> None: ...


# --- file backend -------------------------------------------------------------


class FileAuthBackend:
    """One record per line: ``user_id:salt:hash`` with hash =
    sha256(salt + ":" + secret). Comparison is constant-time, and unknown
    users burn the same hash work as known ones."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._records: dict[str, tuple[str, str]] = {}
        self._load()

    def _load(self) -> None:
        try:
            text = self.path.read_text(encoding="utf-8")
        except OSError as exc:
            raise BackendUnreachable(f"cannot read user file {self.path}: {exc}") from exc
        for lineno, line in enumerate(text.splitlines(), start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(":")
            if len(parts) != 3:
                raise ValueError(f"{self.path}:{lineno}: expected user_id:salt:hash")
            user_id, salt, digest = parts
            self._records[user_id] = (salt, digest)

    @staticmethod
    def hash_secret(salt: str, secret: str) -> str:
        return hashlib.sha256(f"{salt}:{secret}".encode("utf-8")).hexdigest()

    @classmethod
    def make_line(cls, user_id: str, secret: str, salt: Optional[str] = None) -> str:
        salt = salt or secrets.token_hex(8)
        return f"{user_id}:{salt}:{cls.hash_secret(salt, secret)}"

    def verify(self, creds: Credentials) -> None:
        record = self._records.get(creds.user_id)
        salt, expected = record if record else ("missing", "0" * 64)
        actual = self.hash_secret(salt, creds.secret)
        if not (hmac.compare_digest(actual, expected) and record):
            raise BadCredentials("unknown user or wrong password")


# --- directory backend ----------------------------------------------------------


@dataclass(frozen=True)
class DirectoryConfig:
    host: str
    port: int = 389
    bind_dn_template: str = "uid={user_id},ou=people"
    use_tls: bool = False
    timeout_s: float = 10.0


def _ber(tag: int, payload: bytes) -> bytes:
    length = len(payload)
    if length < 0x80:
        header = bytes((tag, length))
    else:
        size_bytes = length.to_bytes((length.bit_length() + 7) // 8, "big")
        header = bytes((tag, 0x80 | len(size_bytes))) + size_bytes
    return header + payload


def _ber_int(value: int) -> bytes:
    if value == 0:
        return _ber(0x02, b"\x00")
    body = value.to_bytes((value.bit_length() + 8) // 8, "big")
    return _ber(0x02, body)


def _escape_dn_value(value: str) -> str:
    escaped = []
    for i, ch in enumerate(value):
        if ch in ',+"\\<>;=' or (ch in "# " and i == 0) or (ch == " " and i == len(value) - 1):
            escaped.append("\\" + ch)
        else:
            escaped.append(ch)
    return "".join(escaped)


def simple_bind_request(message_id: int, dn: str, secret: str) -> bytes:
    """Encode a protocol-version-3 simple bind request."""
    bind = _ber(
        0x60,  # [APPLICATION 0] BindRequest
        _ber_int(3) + _ber(0x04, dn.encode("utf-8")) + _ber(0x80, secret.encode("utf-8")),
    )
    return _ber(0x30, _ber_int(message_id) + bind)


def _read_tlv(data: bytes, at: int) -> tuple[int, bytes, int]:
    if at + 2 > len(data):
        raise ValueError("truncated element")
    tag = data[at]
    length = data[at + 1]
    at += 2
    if length & 0x80:
        n = length & 0x7F
        if at + n > len(data):
            raise ValueError("truncated element length")
        length = int.from_bytes(data[at : at + n], "big")
        at += n
    if at + length > len(data):
        raise ValueError("truncated element body")
    return tag, data[at : at + length], at + length


def parse_bind_result(data: bytes) -> int:
    """Result code from a bind response; raises ValueError on garbage."""
    tag, body, _ = _read_tlv(data, 0)
    if tag != 0x30:
        raise ValueError(f"expected message sequence, got tag {tag:#x}")
    tag, _message_id, after_id = _read_tlv(body, 0)
    tag, op_body, _ = _read_tlv(body, after_id)
    if tag != 0x61:  # [APPLICATION 1] BindResponse
        raise ValueError(f"expected bind response, got tag {tag:#x}")
    tag, code_body, _ = _read_tlv(op_body, 0)
    if tag != 0x0A:  # ENUMERATED resultCode
        raise ValueError(f"expected result code, got tag {tag:#x}")
    return int.from_bytes(code_body, "big")


class DirectoryAuthBackend:
    """Simple bind against a directory server: a successful bind with the
    user's DN and password is the credential check. Only bind is spoken; no
    search, no modify."""

    def __init__(self, config: DirectoryConfig):
        self.config = config

    def _bind_dn(self, user_id: str) -> str:
        return self.config.bind_dn_template.format(user_id=_escape_dn_value(user_id))

    def verify(self, creds: Credentials) -> None:
        request = simple_bind_request(1, self._bind_dn(creds.user_id), creds.secret)
        try:
            with socket.create_connection(
                (self.config.host, self.config.port), timeout=self.config.timeout_s
            ) as raw:
                if self.config.use_tls:
                    context = ssl.create_default_context()
                    conn = context.wrap_socket(raw, server_hostname=self.config.host)
                else:
                    conn = raw
                conn.sendall(request)
                response = conn.recv(4096)
                if not response:
                    raise BackendUnreachable("directory closed the connection")
                code = parse_bind_result(response)
                try:
                    conn.sendall(_ber(0x30, _ber_int(2) + _ber(0x42, b"")))  # unbind
                except OSError:
                    pass
        except (OSError, ssl.SSLError) as exc:
            raise BackendUnreachable(f"directory unreachable: {exc}") from exc
        except ValueError as exc:
            raise BackendUnreachable(f"unintelligible directory response: {exc}") from exc
        if code == _BIND_SUCCESS:
            return
        if code == _BIND_INVALID_CREDENTIALS:
            raise BadCredentials("directory rejected the credentials")
        raise BackendUnreachable(f"directory bind failed with result code {code}")


# --- sessions -------------------------------------------------------------------


class AuthService:
    """Issues and checks session tokens; the table is memory-only by design
    (a restart logs everyone out, it never leaks into the snapshot)."""

    def __init__(
        self,
        backend: AuthBackend,
        ttl_s: float = DEFAULT_TOKEN_TTL_S,
        now: Callable[[], datetime] = utcnow,
    ):
        self.backend = backend
        self.ttl_s = ttl_s
        self._now = now
        self._tokens: dict[str, SessionToken] = {}
        self._lock = threading.RLock()

    def authenticate(self, creds: Credentials) -> SessionToken:
        self.backend.verify(creds)
        issued = self._now()
        token = SessionToken(
            token=secrets.token_hex(32),
            user_id=creds.user_id,
            issued_at=issued,
            expires_at=issued + timedelta(seconds=self.ttl_s),
        )
        with self._lock:
            self._tokens[token.token] = token
        return token

    def resolve(self, token: str) -> SessionToken:
        with self._lock:
            session = self._tokens.get(token)
        if session is None:
            raise InvalidToken("unknown session token")
        if self._now() > session.expires_at:
            with self._lock:
                self._tokens.pop(token, None)
            raise ExpiredToken("session token expired")
        return session

    def authorize(
        self,
        store: Store,
        token: str,
        course_name: Optional[str] = None,
        any_of: Optional[set[str]] = None,
    ) -> User:
        """Resolve the token and check role membership in the course.

        ``course_name=None`` only requires a live session. With a course but
        ``any_of=None``, any enrollment in the course passes.
        """
        session = self.resolve(token)

        def check(state: Snapshot) -> User:
            user = state.users.get(session.user_id, User(user_id=session.user_id))
            if course_name is None:
                return user
            course = state.courses.get(course_name)
            if course is None:
                raise NotEnrolled(f"no course named {course_name!r}")
            roles = course.roles_of(session.user_id)
            if not roles:
                raise NotEnrolled(f"{session.user_id!r} is not enrolled in {course_name!r}")
            if any_of is not None and not (roles & any_of):
                raise NotAuthorized(f"requires one of roles {sorted(any_of)}")
            return user

        return store.read(check)
