"""Line-oriented episode scripts and the drivers that execute them.

A script simulates the human in the guidance loop: every `choose` line is
the user's pick from the ready set, every `complete` supplies the goal
values. The same script can run against the in-process library or against
a running service; the differential test compares the two event logs.

Grammar (one directive per line, '#' starts a comment):

    init <json initial values>
    choose <activity>
    action <activity> <op> <json {"inputs": [...], "params": {...}}>
    complete <activity> <json goal values>
    fail <failed> <cause>
    discretion <json edit>
    expect status <activity> <status>
    expect ready <a,b,c>            (exact ready set, comma separated, or -)
    expect root complete
    expect binding <activity> <typology> <json value>
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import CaseflowError, ParseError


@dataclass
class Directive:
    line_no: int
    kind: str
    args: list


class ScriptError(Exception):
    def __init__(self, directive: Directive | None, message: str):
        where = f"line {directive.line_no}: " if directive else ""
        super().__init__(f"{where}{message}")
        self.directive = directive


def parse_script(text: str) -> list[Directive]:
    directives = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split(None, 1)
        kind, rest = parts[0], parts[1] if len(parts) > 1 else ""
        if kind == "init":
            args = [_json(rest, line_no)]
        elif kind == "choose":
            args = [rest.strip()]
        elif kind == "action":
            bits = rest.split(None, 2)
            if len(bits) < 2:
                raise ParseError(f"line {line_no}: action needs activity and op")
            args = [bits[0], bits[1], _json(bits[2] if len(bits) > 2 else "{}", line_no)]
        elif kind == "complete":
            bits = rest.split(None, 1)
            args = [bits[0], _json(bits[1] if len(bits) > 1 else "{}", line_no)]
        elif kind == "fail":
            bits = rest.split()
            if len(bits) != 2:
                raise ParseError(f"line {line_no}: fail needs <failed> <cause>")
            args = bits
        elif kind == "discretion":
            args = [_json(rest, line_no)]
        elif kind == "expect":
            args = rest.split(None, 3)
        else:
            raise ParseError(f"line {line_no}: unknown directive {kind!r}")
        directives.append(Directive(line_no, kind, args))
    return directives


def _json(text: str, line_no: int):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"line {line_no}: bad JSON: {exc}") from None


# --- drivers ------------------------------------------------------------------


class LibraryDriver:
    """Runs an episode directly on the in-process engine."""

    def __init__(self, model, archive=None, episode_id=None):
        self.model = model
        self.archive = archive
        self.episode_id = episode_id
        self.state = None

    def start(self, initial_values: dict) -> None:
        from . import engine

        self.state = engine.start_episode(
            self.model,
            initial_values=initial_values,
            episode_id=self.episode_id,
            archive=self.archive,
        )

    def choose(self, activity: str) -> None:
        from . import engine

        engine.choose_activity(self.state, activity)

    def action(self, activity: str, op: str, spec: dict) -> None:
        from . import engine

        engine.apply_workspace_action(
            self.state, activity, op, spec.get("inputs", []), spec.get("params", {})
        )

    def complete(self, activity: str, goal_values: dict) -> None:
        from . import engine

        engine.complete_activity(self.state, activity, goal_values)

    def fail(self, failed: str, cause: str) -> None:
        from . import adaptation

        adaptation.declare_failure(self.state, failed, cause)

    def discretion(self, edit: dict) -> None:
        from . import adaptation

        adaptation.apply_discretion(
            self.state, adaptation.DiscretionEdit.from_dict(edit)
        )

    def view(self) -> dict:
        from . import engine

        return {
            "status": {a: s.value for a, s in sorted(self.state.status.items())},
            "ready": [c["id"] for c in engine.ready_choices(self.state)],
            "bindings": self.state.bindings,
            "attempts": dict(sorted(self.state.attempts.items())),
            "root": self.state.model.root_id,
            "terminated": self.state.terminated,
        }

    def event_log(self) -> list[dict]:
        return [e.to_dict() for e in self.state.log]


class HttpDriver:
    """Runs the same directives through the network API."""

    def __init__(self, client, model_id: str, episode_id=None):
        self.client = client  # httpx-compatible: request(method, url, json=...)
        self.model_id = model_id
        self.episode_id = episode_id

    def _call(self, method: str, url: str, body: dict | None = None) -> dict:
        response = self.client.request(method, url, json=body)
        data = response.json()
        if response.status_code >= 400:
            raise CaseflowError(
                f"{data.get('code', 'ERROR')}: {data.get('message', '')}"
            )
        return data

    def start(self, initial_values: dict) -> None:
        data = self._call(
            "POST",
            "/episodes",
            {
                "model_id": self.model_id,
                "initial_values": initial_values,
                "episode_id": self.episode_id,
            },
        )
        self.episode_id = data["episode_id"]

    def choose(self, activity: str) -> None:
        self._call("POST", f"/episodes/{self.episode_id}/choose", {"activity": activity})

    def action(self, activity: str, op: str, spec: dict) -> None:
        self._call(
            "POST",
            f"/episodes/{self.episode_id}/action",
            {
                "activity": activity,
                "op": op,
                "inputs": spec.get("inputs", []),
                "params": spec.get("params", {}),
            },
        )

    def complete(self, activity: str, goal_values: dict) -> None:
        self._call(
            "POST",
            f"/episodes/{self.episode_id}/complete",
            {"activity": activity, "goal_values": goal_values},
        )

    def fail(self, failed: str, cause: str) -> None:
        self._call(
            "POST",
            f"/episodes/{self.episode_id}/fail",
            {"failed": failed, "cause": cause},
        )

    def discretion(self, edit: dict) -> None:
        self._call("POST", f"/episodes/{self.episode_id}/discretion", {"edit": edit})

    def view(self) -> dict:
        data = self._call("GET", f"/episodes/{self.episode_id}")
        return {
            "status": data["status"],
            "ready": data["ready"],
            "bindings": data["bindings"],
            "attempts": data["attempts"],
            "root": data["root"],
            "terminated": data["terminated"],
        }

    def event_log(self) -> list[dict]:
        return self._call("GET", f"/episodes/{self.episode_id}/log")["events"]


# --- execution ------------------------------------------------------------------


def _check_expect(directive: Directive, view: dict) -> None:
    args = directive.args
    what = args[0] if args else ""
    if what == "status":
        activity, expected = args[1], args[2]
        actual = view["status"].get(activity)
        if actual != expected:
            raise ScriptError(
                directive, f"expected {activity} {expected}, got {actual}"
            )
    elif what == "ready":
        expected = [] if args[1] == "-" else args[1].split(",")
        if view["ready"] != expected:
            raise ScriptError(
                directive, f"expected ready {expected}, got {view['ready']}"
            )
    elif what == "root":
        if args[1] != "complete":
            raise ScriptError(directive, "only 'expect root complete' is supported")
        if not view["terminated"]:
            raise ScriptError(directive, "root is not complete")
    elif what == "binding":
        activity, typology = args[1], args[2]
        expected = json.loads(args[3])
        actual = view["bindings"].get(activity, {}).get(typology)
        if actual != expected:
            raise ScriptError(
                directive,
                f"expected binding {activity}.{typology} = {expected!r}, got {actual!r}",
            )
    else:
        raise ScriptError(directive, f"unknown expectation {what!r}")


def run_script(driver, directives: list[Directive]) -> dict:
    """Execute a parsed script; returns the final view.

    The first directive may be `init`; the episode starts before the first
    non-init directive either way.
    """
    initial_values: dict = {}
    started = False
    for directive in directives:
        try:
            if directive.kind == "init":
                if started:
                    raise ScriptError(directive, "init must precede other directives")
                initial_values = directive.args[0]
                continue
            if not started:
                driver.start(initial_values)
                started = True
            if directive.kind == "choose":
                driver.choose(directive.args[0])
            elif directive.kind == "action":
                driver.action(*directive.args)
            elif directive.kind == "complete":
                driver.complete(*directive.args)
            elif directive.kind == "fail":
                driver.fail(*directive.args)
            elif directive.kind == "discretion":
                driver.discretion(directive.args[0])
            elif directive.kind == "expect":
                _check_expect(directive, driver.view())
        except ScriptError:
            raise
        except CaseflowError as exc:
            raise ScriptError(directive, f"{exc}") from exc
    if not started:
        driver.start(initial_values)
    return driver.view()
