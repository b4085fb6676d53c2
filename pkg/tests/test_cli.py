import json

import pytest

from graffiti.cli import build_parser, run


@pytest.fixture()
def home(tmp_path, monkeypatch):
    monkeypatch.setenv("XDG_CONFIG_HOME", str(tmp_path / "config"))
    monkeypatch.setenv("XDG_DATA_HOME", str(tmp_path / "data"))
    monkeypatch.delenv("GRAFFITI_CONFIG", raising=False)
    monkeypatch.delenv("GRAFFITI_SESSION", raising=False)
    return tmp_path


def _run(capsys, *argv, stdin=None, monkeypatch=None):
    if stdin is not None:
        import io
        import sys

        monkeypatch.setattr(sys, "stdin", io.StringIO(stdin))
    code = run(list(argv))
    out = capsys.readouterr().out
    return code, [json.loads(line) for line in out.splitlines() if line.strip()]


def test_login_put_get_discover_flow(home, capsys, monkeypatch):
    code, out = _run(capsys, "login", "--handle", "tester")
    assert code == 0 and out[0]["actor"] == "graffiti:local:actor/tester"

    code, out = _run(
        capsys, "put",
        stdin='{"value":{"content":"hi"},"channels":["demo"]}',
        monkeypatch=monkeypatch,
    )
    assert code == 0
    url = out[0]["url"]
    assert url.startswith("graffiti:local:") and out[0]["revision"] == 0

    code, out = _run(capsys, "get", url)
    assert code == 0 and out[0]["value"] == {"content": "hi"}

    code, out = _run(capsys, "discover", "--channel", "demo", "--schema", "{}")
    assert code == 0
    types = [line["type"] for line in out]
    assert types == ["object", "cursor"]
    cursor = out[-1]["cursor"]

    code, out = _run(
        capsys, "patch", url,
        stdin='[{"op":"replace","path":"/value/content","value":"v2"}]',
        monkeypatch=monkeypatch,
    )
    assert code == 0 and out[0]["revision"] == 1

    code, out = _run(capsys, "discover", "--cursor", cursor)
    assert code == 0
    assert [l["type"] for l in out] == ["object", "cursor"]
    assert out[0]["revision"] == 1

    code, out = _run(capsys, "delete", url)
    assert code == 0
    code, _ = _run(capsys, "get", url)
    assert code == 1  # contract error exit


def test_discover_lines_match_wire_grammar(home, capsys, monkeypatch):
    _run(capsys, "login", "--handle", "w")
    _run(capsys, "put", stdin='{"value":{"content":"a"},"channels":["c"]}',
         monkeypatch=monkeypatch)
    code, out = _run(capsys, "discover", "--channel", "c")
    assert code == 0
    for line in out[:-1]:
        assert line["type"] in ("object", "tombstone", "warning")
        if line["type"] == "object":
            assert {"value", "url", "actor", "channels", "revision"} <= set(line)
    assert out[-1]["type"] == "cursor" and isinstance(out[-1]["cursor"], str)


def test_recovery_subcommands(home, capsys, monkeypatch):
    _run(capsys, "login", "--handle", "r")
    _run(capsys, "put", stdin='{"value":{"o":1},"channels":[]}', monkeypatch=monkeypatch)
    _run(capsys, "put", stdin='{"value":{"o":2},"channels":["c"]}', monkeypatch=monkeypatch)
    code, out = _run(capsys, "recover-orphans")
    assert code == 0 and len(out) == 1 and out[0]["value"] == {"o": 1}
    code, out = _run(capsys, "channel-stats")
    assert code == 0 and out == [
        {"type": "stat", "channel": "c", "count": 1, "lastModified": out[0]["lastModified"]}
    ]


def test_logout_clears_session(home, capsys):
    _run(capsys, "login", "--handle", "bye")
    code, out = _run(capsys, "logout")
    assert code == 0 and out[0] == {"loggedOut": True}
    code, _ = _run(capsys, "channel-stats")
    assert code == 1  # no session anymore


def test_conformance_subcommand(home, capsys):
    code, out = _run(capsys, "conformance", "--impl", "local", "--json")
    assert code == 0
    assert out[0]["summary"]["fail"] == 0
    assert out[0]["summary"]["pass"] >= 40


def test_sim_subcommand(home, capsys):
    code, out = _run(capsys, "sim", "--scenario", "reply-matrix", "--impl", "local")
    assert code == 0 and out[0]["ok"] is True
    code, out = _run(
        capsys, "sim", "--scenario", "announce-completeness", "--seed", "3",
        "--params", '{"n_small_servers":3,"n_well_known":2,"n_actors":4}',
    )
    assert code == 0 and out[0]["ok"] is True


def test_usage_errors_exit_2(home, capsys):
    with pytest.raises(SystemExit) as err:
        run(["no-such-command"])
    assert err.value.code == 2
    code, _ = _run(capsys, "sim", "--scenario", "no-such-scenario")
    assert code == 2


def test_every_contract_operation_reachable_from_cli():
    parser = build_parser()
    subcommands = set()
    for action in parser._actions:
        if hasattr(action, "choices") and isinstance(action.choices, dict):
            subcommands |= set(action.choices)
    reachable = {
        "login": "login",
        "logout": "logout",
        "put": "put",
        "get": "get",
        "patch": "patch",
        "delete": "delete",
        "discover": "discover",
        "continue_discover": "discover",  # --cursor / --follow
        "recover_orphans": "recover-orphans",
        "channel_stats": "channel-stats",
    }
    from graffiti.api import Graffiti

    contract_ops = {
        name
        for name in vars(Graffiti)
        if getattr(getattr(Graffiti, name), "__isabstractmethod__", False)
    }
    assert contract_ops == set(reachable), "coverage map must track the contract"
    missing = {op: cmd for op, cmd in reachable.items() if cmd not in subcommands}
    assert not missing, f"contract ops without a subcommand: {missing}"


def test_wire_and_ops_subcommands_exist():
    parser = build_parser()
    subcommands = set()
    for action in parser._actions:
        if hasattr(action, "choices") and isinstance(action.choices, dict):
            subcommands |= set(action.choices)
    assert {
        "serve-remote", "serve-tracker", "register", "login", "put", "get",
        "patch", "delete", "discover", "recover-orphans", "channel-stats",
        "announce-publish", "announce-discover", "conformance", "sim",
    } <= subcommands
