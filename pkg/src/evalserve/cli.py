"""Command line entry point.

    evalserve --config server.conf [--host H --port P --store S
                                    --llm-url U --llm-model M --auth file|directory]
    evalserve stats --store state.snap --out reports/ [--salt SALT]
    evalserve export --store state.snap --out dataset.jsonl [--salt SALT]
    evalserve enroll --store state.snap --course NAME --user ID
                     --roles student[,tutor,admin] [--display-name NAME]
"""

from __future__ import annotations

import argparse
import json
import secrets
import sys
from pathlib import Path

from .analytics import export_dataset, write_reports
from .config import ConfigError, ServerConfig, parse_config_file
from .domain import User
from .store import Store, load_snapshot

SUBCOMMANDS = ("stats", "export", "enroll")


def _serve_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evalserve", description="Run the grading server.")
    parser.add_argument("--config", help="configuration file (key = value lines in [sections])")
    parser.add_argument("--host", help="bind address override")
    parser.add_argument("--port", type=int, help="port override")
    parser.add_argument("--store", help="snapshot file override (.snap)")
    parser.add_argument("--llm-url", help="chat-completion endpoint base URL override")
    parser.add_argument("--llm-model", help="model name override")
    parser.add_argument("--auth", choices=("file", "directory"), help="auth backend override")
    return parser


def _apply_overrides(config: ServerConfig, args: argparse.Namespace) -> ServerConfig:
    if args.host:
        config.host = args.host
    if args.port:
        config.port = args.port
    if args.store:
        config.store_path = args.store
    if args.llm_url:
        config.llm_base_url = args.llm_url
    if args.llm_model:
        config.llm_model = args.llm_model
    if args.auth:
        config.auth_backend = args.auth
    return config


def _cmd_serve(argv: list[str]) -> int:
    args = _serve_parser().parse_args(argv)
    try:
        config = parse_config_file(args.config) if args.config else ServerConfig()
        config = _apply_overrides(config, args)
        config.validate()
    except ConfigError as exc:
        print(f"evalserve: {exc}", file=sys.stderr)
        return 2
    import uvicorn

    from .server import build_state, create_app

    app = create_app(build_state(config))
    uvicorn.run(app, host=config.host, port=config.port, log_level="info")
    return 0


def _cmd_stats(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="evalserve stats")
    parser.add_argument("--store", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--salt", default=None, help="pseudonymization salt (random when omitted)")
    args = parser.parse_args(argv)
    snapshot = load_snapshot(Path(args.store))
    salt = args.salt or secrets.token_hex(16)
    meta = write_reports(snapshot, args.out, salt)
    print(f"wrote reports for {meta['n_pairs']} grade pairs to {args.out}")
    return 0


def _cmd_export(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="evalserve export")
    parser.add_argument("--store", required=True)
    parser.add_argument("--out", required=True, help="output .jsonl file")
    parser.add_argument("--salt", default=None)
    args = parser.parse_args(argv)
    snapshot = load_snapshot(Path(args.store))
    salt = args.salt or secrets.token_hex(16)
    out = Path(args.out)
    with out.open("w", encoding="utf-8") as fh:
        records = export_dataset(snapshot, salt)
        for record in records:
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
    print(f"exported {len(records)} submissions to {out}")
    return 0


def _cmd_enroll(argv: list[str]) -> int:
    parser = argparse.ArgumentParser(prog="evalserve enroll")
    parser.add_argument("--store", required=True)
    parser.add_argument("--course", required=True)
    parser.add_argument("--user", required=True)
    parser.add_argument("--roles", required=True, help="comma-separated: student,tutor,admin")
    parser.add_argument("--display-name", default="")
    args = parser.parse_args(argv)
    roles = [r.strip() for r in args.roles.split(",") if r.strip()]
    store = Store(args.store)
    from . import service

    try:
        service.enroll(store, args.course, User(args.user, args.display_name), roles)
    except ValueError as exc:
        print(f"evalserve: {exc}", file=sys.stderr)
        return 2
    print(f"enrolled {args.user} in {args.course} as {','.join(sorted(roles))}")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in SUBCOMMANDS:
        handler = {"stats": _cmd_stats, "export": _cmd_export, "enroll": _cmd_enroll}[argv[0]]
        return handler(argv[1:])
    return _cmd_serve(argv)


if __name__ == "__main__":
    sys.exit(main())
