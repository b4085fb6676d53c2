"""Operator and developer command line.

Exit codes: 0 success, 1 contract error, 2 usage error. All structured
output is JSON or NDJSON so commands compose in pipelines. Discover
output uses the same line grammar as the remote wire protocol, whatever
back-end serves it.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from typing import Optional

from .api import DEFAULT_RETENTION_MS, ObjectBase, Session
from .errors import GraffitiError
from .router import CONFIG_ENV, MetaGraffiti, build_from_config

SESSION_ENV = "GRAFFITI_SESSION"


def default_session_path() -> str:
    base = os.environ.get("XDG_CONFIG_HOME") or os.path.expanduser("~/.config")
    return os.path.join(base, "graffiti", "session.json")


def _session_path(args) -> str:
    return args.session or os.environ.get(SESSION_ENV) or default_session_path()


def _load_session_file(args) -> dict:
    path = _session_path(args)
    if not os.path.exists(path):
        raise GraffitiError(f"no session at {path}; run `graffiti login` first")
    with open(path) as fh:
        return json.load(fh)


def _save_session_file(args, data: dict) -> None:
    path = _session_path(args)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


def _router(args) -> MetaGraffiti:
    return build_from_config(getattr(args, "config", None))


def _session(args, router: MetaGraffiti) -> Session:
    """Rebuild a live session from the session file."""
    data = _load_session_file(args)
    home = data.get("home", "local")
    if home == "remote":
        return Session(
            actor=data["actor"],
            credential=data["token"],
            home="remote",
            origin=data["origin"],
        )
    # local and cs sessions are process-scoped; log in again by handle
    return router.login(data.get("handle"), home=home)


def _print_json(data) -> None:
    print(json.dumps(data, separators=(",", ":"), ensure_ascii=False))


def _emit_stream(stream) -> Optional[str]:
    from .api import Delta
    from .model import GraffitiObject

    for item in stream:
        if isinstance(item, GraffitiObject):
            _print_json({"type": "object", **item.to_wire()})
        elif isinstance(item, Delta):
            if item.kind == "object":
                _print_json({"type": "object", **item.object.to_wire()})
            else:
                _print_json({"type": "tombstone", **item.tombstone.to_wire()})
        sys.stdout.flush()
    for warning in getattr(stream, "warnings", []):
        _print_json({"type": "warning", "origin": warning.origin, "message": warning.message})
    return getattr(stream, "cursor", None)


def _schema_arg(raw: Optional[str]) -> dict:
    return json.loads(raw) if raw else {}


# -- subcommands ---------------------------------------------------------------


def cmd_serve_remote(args) -> int:
    from .remote.server import ServerConfig, serve_remote

    handle = serve_remote(
        ServerConfig(
            listen_address=args.listen,
            public_origin=args.origin or args.listen,
            data_path=args.data,
            token_ttl=args.token_ttl,
            tombstone_retention=args.retention,
            invite_code=args.invite_code,
        )
    )
    if not args.origin:
        # ephemeral port: the authority in issued URLs must be the bound one
        handle.app.config.public_origin = f"{handle.host}:{handle.port}"
    print(f"serving graffiti:remote:{handle.app.config.public_origin} on {handle.origin}",
          file=sys.stderr, flush=True)
    handle.serve_forever()
    return 0


def cmd_serve_tracker(args) -> int:
    from .commodity.tracker import serve_tracker

    handle = serve_tracker(args.listen, args.data)
    print(f"tracker on {handle.origin}", file=sys.stderr)
    handle.serve_forever()
    return 0


def cmd_register(args) -> int:
    from .remote.client import RemoteClient

    client = RemoteClient([args.origin])
    actor = client.register(args.handle, args.secret, invite=args.invite)
    _print_json({"actor": actor})
    return 0


def cmd_login(args) -> int:
    if args.home == "remote":
        from .remote.client import RemoteClient

        client = RemoteClient([args.origin])
        session = client.login(args.handle, secret=args.secret, origin=args.origin)
        _save_session_file(
            args,
            {
                "actor": session.actor,
                "token": session.credential,
                "home": "remote",
                "origin": args.origin,
                "handle": args.handle,
            },
        )
    else:
        router = _router(args)
        session = router.login(args.handle, home=args.home)
        _save_session_file(
            args,
            {
                "actor": session.actor,
                "token": None,
                "home": args.home,
                "handle": args.handle,
            },
        )
    _print_json({"actor": session.actor, "home": args.home})
    return 0


def cmd_logout(args) -> int:
    router = _router(args)
    try:
        session = _session(args, router)
        router.logout(session)
    except GraffitiError:
        pass  # revoking an absent session is a no-op
    path = _session_path(args)
    if os.path.exists(path):
        os.remove(path)
    _print_json({"loggedOut": True})
    return 0


def cmd_put(args) -> int:
    router = _router(args)
    session = _session(args, router)
    base = ObjectBase.from_wire(json.load(sys.stdin))
    obj = router.put(base, session, scheme=args.scheme)
    _print_json(obj.to_wire())
    return 0


def cmd_get(args) -> int:
    router = _router(args)
    session = None
    if not args.anonymous:
        try:
            session = _session(args, router)
        except GraffitiError:
            session = None
    obj = router.get(args.url, _schema_arg(args.schema), session)
    _print_json(obj.to_wire())
    return 0


def cmd_patch(args) -> int:
    router = _router(args)
    session = _session(args, router)
    ops = json.load(sys.stdin)
    obj = router.patch(args.url, ops, session)
    _print_json(obj.to_wire())
    return 0


def cmd_delete(args) -> int:
    router = _router(args)
    session = _session(args, router)
    router.delete(args.url, session)
    _print_json({"deleted": args.url})
    return 0


def cmd_discover(args) -> int:
    router = _router(args)
    session = None
    try:
        session = _session(args, router)
    except GraffitiError:
        session = None
    schema = _schema_arg(args.schema)
    if args.cursor:
        cursor = _emit_stream(router.continue_discover(args.cursor, session))
    else:
        cursor = _emit_stream(router.discover(args.channel, schema, session))
    rounds = 0
    while args.follow and cursor and (args.rounds == 0 or rounds < args.rounds):
        time.sleep(args.interval)
        cursor = _emit_stream(router.continue_discover(cursor, session))
        rounds += 1
    if cursor:
        _print_json({"type": "cursor", "cursor": cursor})
    return 0


def cmd_recover_orphans(args) -> int:
    router = _router(args)
    session = _session(args, router)
    for obj in router.recover_orphans(_schema_arg(args.schema), session):
        _print_json({"type": "object", **obj.to_wire()})
    return 0


def cmd_channel_stats(args) -> int:
    router = _router(args)
    session = _session(args, router)
    for stat in router.channel_stats(session):
        _print_json({"type": "stat", **stat.to_wire()})
    return 0


def cmd_announce_publish(args) -> int:
    from .announce import AnnounceConfig, publish_announcements
    from .remote.client import RemoteClient

    sessions = {}
    for origin in args.well_known:
        client = RemoteClient([origin])
        if args.register:
            try:
                client.register(args.handle, args.secret, origin=origin)
            except GraffitiError:
                pass  # handle may already exist there
        sessions[origin] = client.login(args.handle, secret=args.secret, origin=origin)
    config = AnnounceConfig(
        well_known=args.well_known,
        hash_channels=args.hash_channels,
    )
    report = publish_announcements(sessions, args.small_server, args.channel, config)
    _print_json({"urls": report.urls, "failures": report.failures})
    return 0 if report.complete else 1


def cmd_announce_discover(args) -> int:
    from .announce import AnnounceConfig, announce_discover

    config = AnnounceConfig(
        well_known=args.well_known, hash_channels=args.hash_channels
    )
    stream = announce_discover(args.channel, _schema_arg(args.schema), config)
    _emit_stream(stream)
    _print_json(
        {
            "type": "report",
            "queried": stream.report.queried,
            "skipped": stream.report.skipped,
        }
    )
    return 0


def cmd_conformance(args) -> int:
    from .conformance import run_conformance
    from .targets import TARGETS

    factory = TARGETS.get(args.impl)
    if factory is None:
        print(f"unknown implementation {args.impl!r}; pick from {sorted(TARGETS)}",
              file=sys.stderr)
        return 2
    report = run_conformance(args.impl, factory)
    if args.json:
        _print_json(report.to_wire())
    else:
        for row in report.rows:
            detail = f"  # {row.detail}" if row.detail else ""
            print(f"{row.status.upper():4s} {row.name}{detail}")
        print(
            f"{args.impl}: {len(report.passed)} passed, "
            f"{len(report.failed)} failed, {len(report.skipped)} skipped "
            f"in {report.elapsed_s:.1f}s"
        )
    return 0 if report.ok() else 1


def cmd_sim(args) -> int:
    from . import sim
    from .targets import TARGETS

    if args.scenario == "announce-completeness":
        params = sim.AnnounceCheckParams(**json.loads(args.params)) if args.params else None
        report = sim.run_announce_completeness_check(args.seed, params)
    else:
        runner = sim.SCENARIOS.get(args.scenario)
        if runner is None:
            choices = sorted(sim.SCENARIOS) + ["announce-completeness"]
            print(f"unknown scenario {args.scenario!r}; pick from {choices}",
                  file=sys.stderr)
            return 2
        factory = TARGETS[args.impl]
        if args.scenario == "membership":
            report = runner(factory(), seed=args.seed)
        else:
            report = runner(factory())
    _print_json(report.to_wire())
    return 0 if report.ok() else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graffiti",
        description="Channel-addressed social objects over pluggable back-ends",
    )
    parser.add_argument("--config", help=f"router config path (or ${CONFIG_ENV})")
    parser.add_argument("--session", help="session file path override")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("serve-remote", help="run a federated server")
    p.add_argument("--listen", default="127.0.0.1:7380")
    p.add_argument("--origin", help="public authority for issued URLs")
    p.add_argument("--data", help="data directory (default: in-memory)")
    p.add_argument("--token-ttl", type=int, default=24 * 3600)
    p.add_argument("--retention", type=int, default=DEFAULT_RETENTION_MS // 1000)
    p.add_argument("--invite-code")
    p.set_defaults(fn=cmd_serve_remote)

    p = sub.add_parser("serve-tracker", help="run a channel tracker")
    p.add_argument("--listen", default="127.0.0.1:7381")
    p.add_argument("--data", help="persistence file (default: in-memory)")
    p.set_defaults(fn=cmd_serve_tracker)

    p = sub.add_parser("register", help="create an account on a remote server")
    p.add_argument("--origin", required=True)
    p.add_argument("--handle", required=True)
    p.add_argument("--secret", required=True)
    p.add_argument("--invite")
    p.set_defaults(fn=cmd_register)

    p = sub.add_parser("login", help="log in and store the session file")
    p.add_argument("--home", choices=["local", "remote", "cs"], default="local")
    p.add_argument("--handle", required=True)
    p.add_argument("--secret", default="")
    p.add_argument("--origin", help="remote server origin (home=remote)")
    p.set_defaults(fn=cmd_login)

    p = sub.add_parser("logout", help="revoke and forget the stored session")
    p.set_defaults(fn=cmd_logout)

    p = sub.add_parser("put", help="create or replace an object (JSON on stdin)")
    p.add_argument("--scheme", help="back-end override for first puts")
    p.set_defaults(fn=cmd_put)

    p = sub.add_parser("get", help="fetch one object by URL")
    p.add_argument("url")
    p.add_argument("--schema", help="JSON schema filter")
    p.add_argument("--anonymous", action="store_true")
    p.set_defaults(fn=cmd_get)

    p = sub.add_parser("patch", help="apply an RFC 6902 patch (ops on stdin)")
    p.add_argument("url")
    p.set_defaults(fn=cmd_patch)

    p = sub.add_parser("delete", help="delete an object")
    p.add_argument("url")
    p.set_defaults(fn=cmd_delete)

    p = sub.add_parser("discover", help="query channels; NDJSON to stdout")
    p.add_argument("--channel", action="append", required=False, default=None)
    p.add_argument("--schema", help="JSON schema filter")
    p.add_argument("--cursor", help="continue from a saved cursor instead")
    p.add_argument("--follow", action="store_true", help="keep continuing")
    p.add_argument("--interval", type=float, default=2.0)
    p.add_argument("--rounds", type=int, default=0, help="stop --follow after N rounds")
    p.set_defaults(fn=cmd_discover)

    p = sub.add_parser("recover-orphans", help="your objects in no channel")
    p.add_argument("--schema")
    p.set_defaults(fn=cmd_recover_orphans)

    p = sub.add_parser("channel-stats", help="channels you have posted to")
    p.set_defaults(fn=cmd_channel_stats)

    p = sub.add_parser("announce-publish", help="announce a small server")
    p.add_argument("--well-known", action="append", required=True)
    p.add_argument("--small-server", required=True)
    p.add_argument("--channel", action="append", required=True)
    p.add_argument("--handle", required=True)
    p.add_argument("--secret", required=True)
    p.add_argument("--register", action="store_true")
    p.add_argument("--hash-channels", action="store_true")
    p.set_defaults(fn=cmd_announce_publish)

    p = sub.add_parser("announce-discover", help="rendezvous-based discover")
    p.add_argument("--well-known", action="append", required=True)
    p.add_argument("--channel", action="append", required=True)
    p.add_argument("--schema")
    p.add_argument("--hash-channels", action="store_true")
    p.set_defaults(fn=cmd_announce_discover)

    p = sub.add_parser("conformance", help="run the contract suite")
    p.add_argument("--impl", required=True)
    p.add_argument("--json", action="store_true")
    p.set_defaults(fn=cmd_conformance)

    p = sub.add_parser("sim", help="run a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--impl", default="local")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--params", help="JSON params for announce-completeness")
    p.set_defaults(fn=cmd_sim)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "discover" and not args.cursor and not args.channel:
        parser.error("discover needs --channel (or --cursor)")
    try:
        return args.fn(args)
    except GraffitiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, json.JSONDecodeError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 130


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
