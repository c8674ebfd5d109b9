"""Server configuration: ``key = value`` lines grouped in ``[sections]``.

The parser tracks line numbers so every configuration mistake aborts boot
with ``file:line: message`` instead of a stack trace.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional


class ConfigError(Exception):
    pass


@dataclass
class ServerConfig:
    host: str = "127.0.0.1"
    port: int = 8000
    store_path: str = "evalserve.snap"
    static_dir: Optional[str] = None  # web console assets, mounted at /console

    auth_backend: str = "file"  # file | directory
    auth_file: Optional[str] = None
    directory_host: Optional[str] = None
    directory_port: int = 389
    directory_bind_dn_template: str = "uid={user_id},ou=people"
    directory_tls: bool = False
    token_ttl_s: float = 12 * 3600

    llm_base_url: str = "http://127.0.0.1:8080"
    llm_model: str = "local-model"
    llm_request_timeout_s: float = 300.0
    llm_max_retries: int = 3

    grading_concurrency: int = 1
    grading_timeout_s: float = 600.0
    relay_timeout_s: float = 60.0
    prompt_template_dir: Optional[str] = None

    def validate(self) -> None:
        """Check referenced paths and value ranges; called once at boot."""
        if self.auth_backend not in ("file", "directory"):
            raise ConfigError(f"auth backend must be 'file' or 'directory', got {self.auth_backend!r}")
        if self.auth_backend == "file":
            if not self.auth_file:
                raise ConfigError("auth backend 'file' needs [auth] file = <path>")
            if not Path(self.auth_file).exists():
                raise ConfigError(f"auth user file does not exist: {self.auth_file}")
        else:
            if not self.directory_host:
                raise ConfigError("auth backend 'directory' needs [auth] host = <hostname>")
        store_parent = Path(self.store_path).resolve().parent
        if not store_parent.is_dir():
            raise ConfigError(f"store directory does not exist: {store_parent}")
        if self.static_dir and not Path(self.static_dir).is_dir():
            raise ConfigError(f"static asset directory does not exist: {self.static_dir}")
        if self.prompt_template_dir and not Path(self.prompt_template_dir).is_dir():
            raise ConfigError(f"prompt template directory does not exist: {self.prompt_template_dir}")
        if self.grading_concurrency < 1:
            raise ConfigError("grading concurrency must be >= 1")
        for name in ("grading_timeout_s", "relay_timeout_s", "llm_request_timeout_s", "token_ttl_s"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be > 0")


# (section, key) -> config attribute
_KEY_MAP = {
    ("server", "host"): "host",
    ("server", "port"): "port",
    ("server", "store"): "store_path",
    ("server", "static_dir"): "static_dir",
    ("auth", "backend"): "auth_backend",
    ("auth", "file"): "auth_file",
    ("auth", "host"): "directory_host",
    ("auth", "port"): "directory_port",
    ("auth", "bind_dn_template"): "directory_bind_dn_template",
    ("auth", "tls"): "directory_tls",
    ("auth", "token_ttl_s"): "token_ttl_s",
    ("llm", "base_url"): "llm_base_url",
    ("llm", "model"): "llm_model",
    ("llm", "request_timeout_s"): "llm_request_timeout_s",
    ("llm", "max_retries"): "llm_max_retries",
    ("grading", "concurrency"): "grading_concurrency",
    ("grading", "timeout_s"): "grading_timeout_s",
    ("grading", "relay_timeout_s"): "relay_timeout_s",
    ("grading", "template_dir"): "prompt_template_dir",
}

_FIELD_TYPES = {f.name: f.type for f in fields(ServerConfig)}


def _convert(attr: str, raw: str, where: str):
    declared = _FIELD_TYPES[attr]
    try:
        if declared in ("int", "Optional[int]") or attr in ("port", "directory_port",
                                                            "llm_max_retries", "grading_concurrency"):
            return int(raw)
        if attr in ("token_ttl_s", "llm_request_timeout_s", "grading_timeout_s", "relay_timeout_s"):
            return float(raw)
        if attr == "directory_tls":
            lowered = raw.lower()
            if lowered in ("true", "yes", "on", "1"):
                return True
            if lowered in ("false", "no", "off", "0"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}")
    return raw


def parse_config_file(path: str | Path) -> ServerConfig:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}")
    config = ServerConfig()
    section = None
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith(("#", ";")):
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            section = stripped[1:-1].strip().lower()
            if not any(s == section for s, _ in _KEY_MAP):
                raise ConfigError(f"{path}:{lineno}: unknown section [{section}]")
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{path}:{lineno}: key outside of any [section]")
        key, _, raw = stripped.partition("=")
        key = key.strip().lower()
        raw = raw.strip()
        attr = _KEY_MAP.get((section, key))
        if attr is None:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r} in [{section}]")
        setattr(config, attr, _convert(attr, raw, f"{path}:{lineno}"))
    return config
