"""Episode execution: the three disjoint activity sets and their evolution.

An episode runs as an event-sourced state machine. Choosing an activity
activates it (and readies the entry points of a composite); completing a
simple activity binds its outcome values, updates sibling readiness and,
when the completed activity is its parent's final one, completes the
parent recursively. Every mutation appends one event to an append-only
log from which the full state can be replayed.
"""

from __future__ import annotations

import copy
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .errors import (
    CorruptLog,
    EpisodeTerminated,
    IncompleteGoals,
    InvalidBinding,
    NotActive,
    NotReady,
    NotSimple,
)
from .model import COMPOSITE, SIMPLE, ActivityModel
from .taxonomy import ValueKind, check_value
from .workspace import EXTERNAL_OPS, ConnectorRegistry, WorkspaceState


class ActivityStatus(str, Enum):
    PENDING = "pending"
    READY = "ready"
    ACTIVE = "active"
    COMPLETE = "complete"
    FAILED = "failed"


PENDING = ActivityStatus.PENDING
READY = ActivityStatus.READY
ACTIVE = ActivityStatus.ACTIVE
COMPLETE = ActivityStatus.COMPLETE
FAILED = ActivityStatus.FAILED


@dataclass
class EpisodeEvent:
    seq: int
    ts: float
    kind: str
    payload: dict

    def to_dict(self) -> dict:
        return {"seq": self.seq, "ts": self.ts, "kind": self.kind, "payload": self.payload}


def clone_model(model: ActivityModel) -> ActivityModel:
    """Episode-private copy of the activity structure (overlay isolation).

    The taxonomy object is shared: it is immutable after load.
    """
    return ActivityModel(
        id=model.id,
        taxonomy=model.taxonomy,
        root_id=model.root_id,
        activities=copy.deepcopy(model.activities),
    )


@dataclass
class EpisodeState:
    episode_id: str
    model: ActivityModel  # effective (episode-private) structure
    base_model_id: str
    subject: dict | str | None
    initial_values: dict[str, Any]
    status: dict[str, ActivityStatus] = field(default_factory=dict)
    bindings: dict[str, dict[str, Any]] = field(default_factory=dict)
    prior_bindings: dict[str, dict[str, Any]] = field(default_factory=dict)
    workspaces: dict[str, WorkspaceState] = field(default_factory=dict)
    log: list[EpisodeEvent] = field(default_factory=list)
    skipped: dict[str, int] = field(default_factory=dict)  # activity -> event seq
    attempts: dict[str, int] = field(default_factory=dict)
    archived_records: list[dict] = field(default_factory=list)
    archive: Any = None  # EpisodeArchive or None
    connectors: ConnectorRegistry = field(default_factory=ConnectorRegistry)
    single_active: bool = False
    _forced_ts: float | None = None

    # -- derived sets --------------------------------------------------------

    def activities_with(self, status: ActivityStatus) -> set[str]:
        return {a for a, s in self.status.items() if s is status}

    @property
    def active_set(self) -> set[str]:
        return self.activities_with(ACTIVE)

    @property
    def ready_set(self) -> set[str]:
        return self.activities_with(READY)

    @property
    def complete_set(self) -> set[str]:
        return self.activities_with(COMPLETE)

    @property
    def terminated(self) -> bool:
        return self.status.get(self.model.root_id) is COMPLETE

    def attempt(self, activity_id: str) -> int:
        return self.attempts.get(activity_id, 1)

    def binding(self, activity_id: str, typology: str):
        return self.bindings.get(activity_id, {}).get(typology)

    # -- event log -------------------------------------------------------------

    def emit(self, kind: str, payload: dict) -> EpisodeEvent:
        ts = self._forced_ts if self._forced_ts is not None else time.time()
        self._forced_ts = None
        event = EpisodeEvent(seq=len(self.log) + 1, ts=ts, kind=kind, payload=payload)
        self.log.append(event)
        if self.archive is not None:
            self.archive.append_event(self.episode_id, event.to_dict())
        return event

    # -- serialization -----------------------------------------------------------

    def to_dict(self, include_ts: bool = True) -> dict:
        def strip(record: dict) -> dict:
            if include_ts:
                return record
            return {k: v for k, v in record.items() if k != "ts"}

        return {
            "episode_id": self.episode_id,
            "base_model_id": self.base_model_id,
            "subject": self.subject,
            "initial_values": self.initial_values,
            "effective_model": self.model.to_document(),
            "status": {a: s.value for a, s in sorted(self.status.items())},
            "bindings": {a: dict(sorted(b.items())) for a, b in sorted(self.bindings.items())},
            "prior_bindings": {
                a: dict(sorted(b.items())) for a, b in sorted(self.prior_bindings.items())
            },
            "skipped": dict(sorted(self.skipped.items())),
            "attempts": dict(sorted(self.attempts.items())),
            "workspaces": {
                a: ws.to_dict() for a, ws in sorted(self.workspaces.items())
            },
            "log": [strip(e.to_dict()) for e in self.log],
            "archived_records": [strip(r) for r in self.archived_records],
        }

    def terminal_summary(self) -> dict:
        """Hierarchical record of the whole episode, timestamps stripped.

        Built from the same records that were written to the archive, so a
        reconstruction from disk must deep-equal it.
        """
        superseded = {
            f"{self.episode_id}:{a}:{att}"
            for a, atts in self._superseded.items()
            for att in atts
        }
        by_activity: dict[str, list[dict]] = {}
        for rec in self.archived_records:
            rec = {k: v for k, v in rec.items() if k != "ts"}
            fid = f"{rec['episode_id']}:{rec['activity_id']}:{rec['attempt']}"
            rec["fragment_id"] = fid
            if fid in superseded:
                rec["status"] = "superseded_by_replan"
            by_activity.setdefault(rec["activity_id"], []).append(rec)

        def build(activity_id: str) -> dict:
            attempts = sorted(by_activity[activity_id], key=lambda r: r["attempt"])
            children = sorted(
                aid
                for aid, recs in by_activity.items()
                if recs[0].get("parent") == activity_id
            )
            return {
                "activity_id": activity_id,
                "attempts": attempts,
                "sub_activities": [build(c) for c in children],
            }

        return {
            "episode_id": self.episode_id,
            "model_id": self.base_model_id,
            "root": build(self.model.root_id),
            "discretion_edits": [
                e.payload for e in self.log if e.kind == "discretion_applied"
            ],
            "replans": [e.payload for e in self.log if e.kind == "replanned"],
        }

    @property
    def _superseded(self) -> dict[str, list[int]]:
        if not hasattr(self, "_superseded_map"):
            self._superseded_map: dict[str, list[int]] = {}
        return self._superseded_map


# --- episode lifecycle ---------------------------------------------------------


def start_episode(
    model: ActivityModel,
    subject=None,
    initial_values: dict[str, Any] | None = None,
    episode_id: str | None = None,
    archive=None,
    connectors: ConnectorRegistry | None = None,
    single_active: bool = False,
) -> EpisodeState:
    initial_values = dict(initial_values or {})
    for tid, value in initial_values.items():
        typ = model.taxonomy.typology(tid)
        check_value(value, typ.value_kind, f"initial value for {tid}")

    state = EpisodeState(
        episode_id=episode_id or f"ep-{int(time.time() * 1000)}",
        model=clone_model(model),
        base_model_id=model.id,
        subject=subject,
        initial_values=initial_values,
        connectors=connectors or ConnectorRegistry(),
        single_active=single_active,
        archive=archive,
    )
    for aid in state.model.activities:
        state.status[aid] = PENDING

    root = state.model.root
    if root.kind == COMPOSITE:
        state.status[root.id] = ACTIVE
        for child in state.model.init_set(root.id):
            state.status[child] = READY
    else:
        # degenerate single-activity model: the root itself is the one choice
        state.status[root.id] = READY

    state.emit(
        "started",
        {
            "episode_id": state.episode_id,
            "model_id": model.id,
            "subject": subject,
            "initial_values": initial_values,
        },
    )
    return state


def ready_choices(state: EpisodeState) -> list[dict]:
    """Ready activities in model declaration (preorder) order.

    A terminated episode has an empty ready set, so this returns [].
    """
    choices = []

    def visit(aid: str) -> None:
        a = state.model.activities[aid]
        if state.status.get(aid) is READY:
            choices.append({"id": a.id, "name": a.name, "outcome": list(a.outcome)})
        for child in a.sub_activities:
            visit(child)

    visit(state.model.root_id)
    return choices


def _refresh_siblings(state: EpisodeState, completed_id: str) -> None:
    """Readiness update after a completion: dependents whose whole support
    set is now complete become ready."""
    a = state.model.activity(completed_id)
    parent = a.super_activity
    if parent is None:
        return
    for edge in state.model.derive_edges(parent):
        if edge.from_id != completed_id:
            continue
        dep = edge.to_id
        if (
            state.status.get(dep) is PENDING
            and state.status.get(parent) is ACTIVE
            and state.model.support_set(dep) <= state.complete_set
        ):
            state.status[dep] = READY


def episodic_tools(state: EpisodeState, activity_id: str) -> list[dict]:
    """The episodic tool set of an activity: the super-activity's episodic
    tools joined with the bound outcome values of every support-set member.
    Entries fall back to prior-attempt values when a support binding was
    reset by a replan."""
    a = state.model.activity(activity_id)
    if a.super_activity is None:
        return [
            {
                "typology": tid,
                "value": value,
                "provenance": "seed",
                "source": "initial",
            }
            for tid, value in state.initial_values.items()
        ]
    entries = episodic_tools(state, a.super_activity)
    parent = state.model.activity(a.super_activity)
    sset = state.model.support_set(activity_id)
    for sibling_id in parent.sub_activities:  # declaration order
        if sibling_id not in sset:
            continue
        for tid in state.model.activities[sibling_id].outcome:
            current = state.bindings.get(sibling_id, {})
            prior = state.prior_bindings.get(sibling_id, {})
            if tid in current:
                value, prov = current[tid], "seed"
            elif tid in prior:
                value, prov = prior[tid], "prior_attempt"
            else:
                continue
            entries.append(
                {"typology": tid, "value": value, "provenance": prov, "source": sibling_id}
            )
    seen = set()
    unique = []
    for e in entries:
        key = (e["typology"], e["source"])
        if key not in seen:
            seen.add(key)
            unique.append(e)
    return unique


def open_workspace(state: EpisodeState, activity_id: str) -> WorkspaceState:
    a = state.model.activity(activity_id)
    if a.kind != SIMPLE:
        raise NotSimple(f"{activity_id} is not a simple activity")
    if state.status.get(activity_id) is not ACTIVE:
        raise NotActive(f"{activity_id} is not active")

    path = [activity_id]
    cur = a
    while cur.super_activity is not None:
        path.append(cur.super_activity)
        cur = state.model.activity(cur.super_activity)
    path.reverse()

    retriever = None
    if state.archive is not None:
        retriever = lambda probe, k: [
            dict(r) for r in state.archive.retrieve_similar(probe, k).ranked
        ]

    ws = WorkspaceState(
        activity=activity_id,
        taxonomy=state.model.taxonomy,
        context_path=path,
        connectors=state.connectors,
        retriever=retriever,
    )
    for entry in episodic_tools(state, activity_id):
        ws.add_seed(
            entry["typology"],
            entry["value"],
            {"kind": entry["provenance"], "source": entry["source"]},
        )
    # prior values of this activity's own outcomes, retained across a replan
    for tid in a.outcome:
        prior = state.prior_bindings.get(activity_id, {})
        if tid in prior:
            ws.add_seed(
                tid, prior[tid], {"kind": "prior_attempt", "source": activity_id}
            )
    # the activity's own goal entities, categorical until valued
    for tid in a.outcome:
        ws.add_seed(tid, None, {"kind": "seed", "source": "goal"}, goal=True)

    state.workspaces[activity_id] = ws
    return ws


def choose_activity(state: EpisodeState, choice: str) -> EpisodeState:
    if state.terminated:
        raise EpisodeTerminated(f"episode {state.episode_id} is complete")
    a = state.model.activity(choice)
    if state.status.get(choice) is not READY:
        raise NotReady(f"{choice} is not in the ready set")
    if state.single_active and a.kind == SIMPLE:
        for other, ws in state.workspaces.items():
            if state.status.get(other) is ACTIVE:
                raise NotReady(
                    f"single-active mode: {other} is still being performed"
                )
    state.emit("chose_activity", {"activity": choice})
    state.status[choice] = ACTIVE
    if a.kind == COMPOSITE:
        for child in a.sub_activities:
            if (
                state.status.get(child) is PENDING
                and state.model.support_set(child) <= state.complete_set
            ):
                state.status[child] = READY
    else:
        open_workspace(state, choice)
    return state


def _dummy_value(kind: ValueKind):
    return {
        ValueKind.QUANTITATIVE: 0,
        ValueKind.TEXT: "(dummy)",
        ValueKind.ENTITY_LIST: [],
        ValueKind.REFERENCE: "(dummy)",
        ValueKind.BOOLEAN: False,
    }[kind]


def _archive_record(state: EpisodeState, record: dict) -> None:
    record = dict(record, episode_id=state.episode_id, model_id=state.base_model_id)
    record.setdefault("ts", state.log[-1].ts if state.log else time.time())
    state.archived_records.append(record)
    if state.archive is not None:
        state.archive.archive(record)


def _dependency_links(state: EpisodeState, activity_id: str) -> list[dict]:
    a = state.model.activity(activity_id)
    if a.super_activity is None:
        return []
    links = []
    for sid in sorted(state.model.support_set(activity_id)):
        outcomes = {}
        for tid in state.model.activities[sid].outcome:
            if tid in state.bindings.get(sid, {}):
                outcomes[tid] = state.bindings[sid][tid]
            elif tid in state.prior_bindings.get(sid, {}):
                outcomes[tid] = state.prior_bindings[sid][tid]
        links.append({"support": sid, "outcomes": outcomes})
    return links


def _record_for(
    state: EpisodeState, activity_id: str, status: str, ws: WorkspaceState | None
) -> dict:
    a = state.model.activity(activity_id)
    record = {
        "activity_id": activity_id,
        "parent": a.super_activity,
        "activity_kind": a.kind,
        "attempt": state.attempt(activity_id),
        "status": status,
        "outcome_bindings": dict(sorted(state.bindings.get(activity_id, {}).items())),
        "dependency_links": _dependency_links(state, activity_id),
        "elements": [],
        "workspace_log": None,
    }
    if ws is not None:
        record["elements"] = [
            {
                "typology": e.typology,
                "typology_path": ws.typology_path(e),
                "value": e.value,
            }
            for e in ws.entities.values()
        ]
        record["workspace_log"] = ws.to_dict()
    return record


def _subtree(state: EpisodeState, activity_id: str) -> list[str]:
    out = []

    def visit(aid: str) -> None:
        out.append(aid)
        for child in state.model.activities[aid].sub_activities:
            visit(child)

    visit(activity_id)
    return out


def _complete(state: EpisodeState, activity_id: str, values: dict[str, Any]) -> None:
    """Mark complete, archive, update readiness, propagate through finals."""
    a = state.model.activity(activity_id)
    state.status[activity_id] = COMPLETE
    state.bindings[activity_id] = dict(values)
    state.prior_bindings.pop(activity_id, None)

    ws = state.workspaces.pop(activity_id, None)
    _archive_record(state, _record_for(state, activity_id, "complete", ws))

    parent_id = a.super_activity
    if parent_id is None:
        return
    _refresh_siblings(state, activity_id)

    parent = state.model.activity(parent_id)
    finals = [
        c for c in parent.sub_activities
        if state.model.activities[c].outcome == parent.outcome
    ]
    if len(finals) == 1 and finals[0] == activity_id:
        # completion of the final sub-activity completes the composite;
        # unfinished siblings are frozen as skipped-at-completion
        for desc in _subtree(state, parent_id):
            if desc in (parent_id, activity_id):
                continue
            if state.status.get(desc) is not COMPLETE and desc not in state.skipped:
                state.skipped[desc] = state.log[-1].seq if state.log else 0
                skipped_ws = state.workspaces.pop(desc, None)
                state.status[desc] = PENDING
                _archive_record(
                    state,
                    _record_for(state, desc, "skipped_at_completion", skipped_ws),
                )
        parent_values = {tid: values[tid] for tid in parent.outcome}
        _complete(state, parent_id, parent_values)


def complete_activity(
    state: EpisodeState,
    activity_id: str,
    goal_values: dict[str, Any] | None = None,
    dummy: bool = False,
) -> EpisodeState:
    a = state.model.activity(activity_id)
    if a.kind != SIMPLE:
        raise NotSimple(f"{activity_id} is not a simple activity")
    if state.status.get(activity_id) is not ACTIVE:
        raise NotActive(f"{activity_id} is not active")

    ws = state.workspaces.get(activity_id)
    values: dict[str, Any] = {}
    if ws is not None:
        for goal in ws.goal_entities():
            if goal.valued:
                values[goal.typology] = goal.value
    if dummy:
        for tid in a.outcome:
            values.setdefault(
                tid, _dummy_value(state.model.taxonomy.typology(tid).value_kind)
            )
    if goal_values:
        values.update(goal_values)

    missing = [tid for tid in a.outcome if tid not in values]
    if missing:
        raise IncompleteGoals(
            f"{activity_id}: outcome typologies left unvalued: {missing}"
        )
    for tid in a.outcome:
        check_value(
            values[tid],
            state.model.taxonomy.typology(tid).value_kind,
            f"goal {tid}",
        )
    values = {tid: values[tid] for tid in a.outcome}

    state.emit(
        "completed",
        {"activity": activity_id, "goal_values": values, "dummy": dummy},
    )
    _complete(state, activity_id, values)
    return state


def apply_workspace_action(
    state: EpisodeState,
    activity_id: str,
    op: str,
    inputs: list[str],
    params: dict | None = None,
) -> dict:
    """Apply a workspace action and log it; returns the new entity's dict."""
    ws = state.workspaces.get(activity_id)
    if ws is None:
        raise NotActive(f"{activity_id} has no open workspace")
    before = len(ws.actions)
    result = ws.apply_action(op, inputs, params)
    new_records = [r.to_dict() for r in ws.actions[before:]]
    touched_ids = sorted(
        {r["output"] for r in new_records} | set(inputs),
        key=lambda i: (len(i), i),  # e2 before e10
    )
    state.emit(
        "action_applied",
        {
            "activity": activity_id,
            "op": op,
            "inputs": list(inputs),
            "params": params or {},
            "records": new_records,
            "entities": [
                ws.entities[i].to_dict() for i in touched_ids if i in ws.entities
            ],
            "result": result.id,
        },
    )
    return result.to_dict()


# --- replay ------------------------------------------------------------------


def replay(log: list[dict], model: ActivityModel, archive=None) -> EpisodeState:
    """Reconstruct the state reached after the given event-log prefix."""
    from . import adaptation  # late import: adaptation builds on this module

    events = [e.to_dict() if isinstance(e, EpisodeEvent) else dict(e) for e in log]
    if not events or events[0].get("kind") != "started":
        raise CorruptLog("log must begin with a started event")
    for i, e in enumerate(events):
        if e.get("seq") != i + 1:
            raise CorruptLog(f"sequence gap at position {i}: {e.get('seq')}")

    first = events[0]["payload"]
    state: EpisodeState | None = None
    pending_failure: dict | None = None
    for event in events:
        kind, payload = event["kind"], event["payload"]
        try:
            if kind == "started":
                if state is not None:
                    raise CorruptLog("duplicate started event")
                state = start_episode(
                    model,
                    subject=first.get("subject"),
                    initial_values=first.get("initial_values"),
                    episode_id=first.get("episode_id"),
                    archive=archive,
                )
                state.log[0].ts = event["ts"]
                continue
            if state is None:
                raise CorruptLog("event before started")
            state._forced_ts = event["ts"]
            if kind == "chose_activity":
                choose_activity(state, payload["activity"])
            elif kind == "action_applied":
                ws = state.workspaces.get(payload["activity"])
                if ws is None:
                    raise CorruptLog(f"no workspace for {payload['activity']}")
                if payload["op"] in EXTERNAL_OPS:
                    ws.replay_external(payload["records"], payload["entities"])
                    state.emit("action_applied", payload)
                else:
                    apply_workspace_action(
                        state,
                        payload["activity"],
                        payload["op"],
                        payload["inputs"],
                        payload["params"],
                    )
            elif kind == "completed":
                complete_activity(
                    state,
                    payload["activity"],
                    payload["goal_values"],
                    dummy=payload.get("dummy", False),
                )
            elif kind == "failure_declared":
                pending_failure = payload
                adaptation.mark_failure(state, payload["failed"], payload["cause"])
            elif kind == "replanned":
                if pending_failure is None:
                    raise CorruptLog("replanned without a preceding failure")
                record = adaptation.apply_replan(
                    state, pending_failure["failed"], pending_failure["cause"]
                )
                if record.to_dict() != payload:
                    raise CorruptLog("replan payload disagrees with recomputation")
                pending_failure = None
            elif kind == "discretion_applied":
                adaptation.apply_discretion_payload(state, payload)
            else:
                raise CorruptLog(f"unknown event kind: {kind}")
        except CorruptLog:
            raise
        except Exception as exc:
            raise CorruptLog(f"invalid transition at seq {event['seq']}: {exc}") from exc

        replayed = state.log[-1]
        if replayed.kind != kind:
            raise CorruptLog(
                f"replayed kind {replayed.kind} != logged kind {kind} at seq {event['seq']}"
            )
        replayed.ts = event["ts"]
    return state
