"""Episode-level deviations: user discretion and failure management.

Discretion edits change the episode's effective activity structure only
(the base model is never touched). Every edit is validated against the
structural rules before it is committed; a rejected edit leaves the state
byte-identical. Failure management resets the dependency chain from a
cause activity up to the failed one, retaining the outputs of the first
attempt for the re-performance.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

from .engine import (
    ACTIVE,
    COMPLETE,
    FAILED,
    PENDING,
    READY,
    EpisodeState,
)
from .errors import (
    IntegrityError,
    NoDependencyPath,
    NotActive,
    NotComplete,
    NotEditable,
    UnknownActivity,
    UnresolvedReference,
)
from .model import (
    COMPOSITE,
    SIMPLE,
    ActivityModel,
    ValidationReport,
    _parse_activity,
    validate_model,
)
from .taxonomy import EntityTypology, FunctionalCategory, Taxonomy, ValueKind

SKIP = "skip_activity"
INSERT = "insert_activity"
SUBSTITUTE_WITH_COMPOSITE = "substitute_simple_with_composite"
SUBSTITUTE_WITH_SIMPLE = "substitute_composite_with_simple"

EDIT_KINDS = {SKIP, INSERT, SUBSTITUTE_WITH_COMPOSITE, SUBSTITUTE_WITH_SIMPLE}


@dataclass
class DiscretionEdit:
    kind: str
    target: str
    replacement: dict | None = None  # activity subtree document
    typology_info: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "target": self.target,
            "replacement": self.replacement,
            "typology_info": list(self.typology_info),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscretionEdit":
        return cls(
            kind=d["kind"],
            target=d["target"],
            replacement=d.get("replacement"),
            typology_info=d.get("typology_info") or [],
        )


@dataclass
class ReplanRecord:
    failed: str
    cause: str
    affected: list[str]
    retained: list[tuple[str, str, object]]  # (activity, typology, prior value)

    def to_dict(self) -> dict:
        return {
            "failed": self.failed,
            "cause": self.cause,
            "affected": list(self.affected),
            "retained": [list(r) for r in self.retained],
        }


# --- shared status recomputation --------------------------------------------


def refresh_statuses(state: EpisodeState) -> None:
    """Recompute readiness after a structure or status change.

    Complete and active statuses are preserved (activation happens only
    through explicit choice, deactivation through completion or an
    explicit reset). A pending/ready activity is ready iff its parent is
    active and its whole support set is complete.
    """
    model = state.model

    def readiness_pass() -> bool:
        changed = False
        complete = state.complete_set
        for aid, status in list(state.status.items()):
            if status not in (PENDING, READY):
                continue
            a = model.activities[aid]
            parent = a.super_activity
            eligible = (
                parent is not None
                and state.status.get(parent) is ACTIVE
                and model.support_set(aid) <= complete
            )
            new = READY if eligible else PENDING
            if new is not status:
                state.status[aid] = new
                changed = True
        return changed

    if model.root.kind == COMPOSITE and not state.terminated:
        if state.status.get(model.root_id) is not COMPLETE:
            state.status[model.root_id] = ACTIVE
    # fixpoint: readying a composite's child can ready further descendants
    for _ in range(len(model.activities) + 1):
        if not readiness_pass():
            break


# --- discretion --------------------------------------------------------------


def _clone_taxonomy(taxonomy: Taxonomy) -> Taxonomy:
    return Taxonomy(
        nodes=dict(taxonomy.nodes),
        root=taxonomy.root,
        typologies=dict(taxonomy.typologies),
    )


def _collect_refs(doc: dict) -> set[str]:
    refs = set()
    for e in doc.get("entities", []):
        if not str(e.get("ref", "")).startswith("outcome_of:"):
            refs.add(e["ref"])
    refs.update(doc.get("outcome", []))
    for sub in doc.get("sub_activities", []) or []:
        refs.update(_collect_refs(sub))
    return refs


def _subtree_ids(model: ActivityModel, aid: str) -> list[str]:
    out = [aid]
    for child in model.activities[aid].sub_activities:
        out.extend(_subtree_ids(model, child))
    return out


def apply_discretion(state: EpisodeState, edit: DiscretionEdit) -> EpisodeState:
    """Apply one episode-level structure edit, or raise IntegrityError.

    The edit is staged on copies; the live state is mutated only after the
    resulting structure passes rules R2-R6 (R1 violations on novel
    activities are demoted to warnings).
    """
    if edit.kind not in EDIT_KINDS:
        raise IntegrityError("UnknownEditKind", f"unknown edit kind: {edit.kind}")
    model = state.model
    target = model.activity(edit.target)  # raises UnknownActivity

    if state.status.get(edit.target) is COMPLETE:
        raise NotEditable(f"{edit.target} is already complete")

    candidate = ActivityModel(
        id=model.id,
        taxonomy=_clone_taxonomy(model.taxonomy),
        root_id=model.root_id,
        activities=copy.deepcopy(model.activities),
    )
    candidate.taxonomy.register_typologies(edit.typology_info)

    pseudo_typologies: list[str] = []
    novel_ids: list[str] = []

    def register_pseudo(doc: dict) -> None:
        # novel entities without declared typologies get a pseudo-typology;
        # the worker is prompted to supply real typological information
        for ref in sorted(_collect_refs(doc)):
            if ref not in candidate.taxonomy.typologies:
                candidate.taxonomy.typologies[ref] = EntityTypology(
                    id=ref,
                    name=f"(pseudo) {ref}",
                    category=FunctionalCategory.OBJECT,
                    semantic_type=candidate.taxonomy.root,
                    value_kind=ValueKind.TEXT,
                )
                pseudo_typologies.append(ref)

    def graft(parent_id: str | None, doc: dict, position: int | None = None) -> str:
        register_pseudo(doc)
        report = ValidationReport()
        new_id = _parse_activity(doc, parent_id, candidate.activities, report)
        if parent_id is not None:
            subs = candidate.activities[parent_id].sub_activities
            if position is None:
                subs.append(new_id)
            else:
                subs.insert(position, new_id)
        return new_id

    def remove_subtree(aid: str) -> list[str]:
        removed = _subtree_ids(candidate, aid)
        parent_id = candidate.activities[aid].super_activity
        if parent_id is not None:
            candidate.activities[parent_id].sub_activities.remove(aid)
        for rid in removed:
            del candidate.activities[rid]
        return removed

    removed_ids: list[str] = []

    if edit.kind == SKIP:
        parent_id = target.super_activity
        if parent_id is None:
            raise IntegrityError("RemovedFinal", "cannot skip the target task itself")
        # the support set of another activity must not become empty
        for sibling in model.activities[parent_id].sub_activities:
            if sibling == edit.target:
                continue
            sset = model.support_set(sibling)
            if edit.target in sset and not (sset - {edit.target}):
                raise IntegrityError(
                    "EmptiedSupportSet",
                    f"skipping {edit.target} would empty the support set of {sibling}",
                )
        if model.activities[edit.target].outcome == model.activities[parent_id].outcome:
            raise IntegrityError(
                "RemovedFinal",
                f"{edit.target} is the final activity of {parent_id}",
            )
        removed_ids = remove_subtree(edit.target)
        # dependents keep their remaining tools; the dangling reference to
        # the skipped sibling's outcome is dropped with it
        dangling = f"outcome_of:{edit.target}"
        for a in candidate.activities.values():
            a.entities = [e for e in a.entities if e.get("ref") != dangling]

    elif edit.kind == INSERT:
        if target.kind != COMPOSITE:
            raise IntegrityError("NotComposite", "insertion point must be composite")
        if state.status.get(edit.target) is not ACTIVE:
            raise NotEditable(
                f"insertion point {edit.target} is not in the active lineage"
            )
        if not edit.replacement or "id" not in edit.replacement:
            raise IntegrityError("MissingReplacement", "insert requires a subtree")
        novel_ids = [edit.replacement["id"]]
        graft(edit.target, edit.replacement)

    else:  # substitutions
        if not edit.replacement or "id" not in edit.replacement:
            raise IntegrityError("MissingReplacement", "substitute requires a subtree")
        expected = SIMPLE if edit.kind == SUBSTITUTE_WITH_COMPOSITE else COMPOSITE
        if target.kind != expected:
            raise IntegrityError(
                "KindMismatch",
                f"{edit.kind} expects a {expected} target, {edit.target} is {target.kind}",
            )
        parent_id = target.super_activity
        old_outcome = list(target.outcome)
        if list(edit.replacement.get("outcome", [])) != old_outcome:
            raise IntegrityError(
                "RemovedFinal",
                "replacement must carry the same outcome typologies as the target",
            )
        position = (
            candidate.activities[parent_id].sub_activities.index(edit.target)
            if parent_id is not None
            else None
        )
        removed_ids = remove_subtree(edit.target)
        new_root = edit.replacement["id"]
        novel_ids = [new_root]
        graft(parent_id, edit.replacement, position)
        if parent_id is None:
            candidate.root_id = new_root
        # dependents of the target now draw the same outcomes from the
        # replacement
        old_ref = f"outcome_of:{edit.target}"
        for a in candidate.activities.values():
            for e in a.entities:
                if e.get("ref") == old_ref:
                    e["ref"] = f"outcome_of:{new_root}"

    # full structural validation of the candidate
    try:
        report = validate_model(candidate)
    except (UnresolvedReference, UnknownActivity) as exc:
        raise IntegrityError("UnresolvedReference", str(exc)) from None
    novel_subtree = set()
    for nid in novel_ids:
        if nid in candidate.activities:
            novel_subtree.update(_subtree_ids(candidate, nid))
    for rule, activity, message in report.errors:
        if rule == "R1" and activity in novel_subtree:
            continue  # relaxed to a warning for novel activities
        mapped = "CycleIntroduced" if rule == "R4" else rule
        raise IntegrityError(mapped, f"{rule} at {activity}: {message}")

    # committed: swap in the candidate structure and recompute statuses
    state.model = candidate
    for rid in removed_ids:
        state.status.pop(rid, None)
        state.workspaces.pop(rid, None)
        state.bindings.pop(rid, None)
    for aid in candidate.activities:
        state.status.setdefault(aid, PENDING)
    refresh_statuses(state)

    payload = edit.to_dict()
    payload["pseudo_typologies"] = pseudo_typologies
    payload["prompt_worker"] = bool(pseudo_typologies)
    state.emit("discretion_applied", payload)
    return state


def apply_discretion_payload(state: EpisodeState, payload: dict) -> EpisodeState:
    return apply_discretion(state, DiscretionEdit.from_dict(payload))


# --- failure management --------------------------------------------------------


def dependency_closure_edges(model: ActivityModel) -> dict[tuple, set[tuple]]:
    """Precedence edges lifted across composite boundaries.

    Every composite is split into an entry and an exit node so that a path
    can never enter a subtree through the composite's completion edge:

      sibling d-edge k->j   becomes  exit(k) -> entry(j)
      final(c) completes c  becomes  exit(final) -> ("exit", c)
      c gates its children  becomes  ("entry", c) -> entry(child)

    Simple activities keep a single node. The lifted graph is acyclic
    whenever every sibling graph is (rule R4).
    """

    def entry(aid: str) -> tuple:
        kind = model.activities[aid].kind
        return ("entry", aid) if kind == COMPOSITE else ("n", aid)

    def exit_(aid: str) -> tuple:
        kind = model.activities[aid].kind
        return ("exit", aid) if kind == COMPOSITE else ("n", aid)

    succ: dict[tuple, set[tuple]] = {}
    for aid, a in model.activities.items():
        if a.kind == COMPOSITE:
            succ[("entry", aid)] = set()
            succ[("exit", aid)] = set()
        else:
            succ[("n", aid)] = set()
    for composite in model.composites():
        for edge in model.derive_edges(composite.id):
            succ[exit_(edge.from_id)].add(entry(edge.to_id))
        for child in composite.sub_activities:
            succ[("entry", composite.id)].add(entry(child))
            if model.activities[child].outcome == composite.outcome:
                succ[exit_(child)].add(("exit", composite.id))
    return succ


def _reachable(succ: dict, start) -> set:
    seen = {start}
    stack = [start]
    while stack:
        for nxt in succ[stack.pop()]:
            if nxt not in seen:
                seen.add(nxt)
                stack.append(nxt)
    return seen


def path_vertices(model: ActivityModel, cause: str, failed: str) -> list[str]:
    """All activities on some dependency path from cause to failed."""
    succ = dependency_closure_edges(model)

    def start_node(aid: str) -> tuple:
        kind = model.activities[aid].kind
        return ("exit", aid) if kind == COMPOSITE else ("n", aid)

    from_cause = _reachable(succ, start_node(cause))
    pred: dict[tuple, set[tuple]] = {node: set() for node in succ}
    for a, outs in succ.items():
        for b in outs:
            pred[b].add(a)
    failed_node = (
        ("entry", failed)
        if model.activities[failed].kind == COMPOSITE
        else ("n", failed)
    )
    to_failed = _reachable(pred, failed_node)
    on_path = {aid for _, aid in from_cause & to_failed}

    ordered = []

    def visit(aid: str) -> None:
        if aid in on_path:
            ordered.append(aid)
        for child in model.activities[aid].sub_activities:
            visit(child)

    visit(model.root_id)
    return ordered


def mark_failure(state: EpisodeState, failed: str, cause: str) -> None:
    """Validate the failure declaration and mark the failed activity."""
    failed_a = state.model.activity(failed)
    state.model.activity(cause)
    if failed_a.kind != SIMPLE or state.status.get(failed) is not ACTIVE:
        raise NotActive(f"failed activity {failed} is not an active simple activity")
    if state.status.get(cause) is not COMPLETE:
        raise NotComplete(f"cause activity {cause} is not complete")
    on_path = set(path_vertices(state.model, cause, failed))
    if failed not in on_path:
        raise NoDependencyPath(f"{cause} does not precede {failed}")
    state.status[failed] = FAILED
    state.emit("failure_declared", {"failed": failed, "cause": cause})


def apply_replan(state: EpisodeState, failed: str, cause: str) -> ReplanRecord:
    """Reset the cause-to-failed chain for re-performance."""
    model = state.model
    on_path = path_vertices(model, cause, failed)
    affected = [
        aid
        for aid in on_path
        if model.activities[aid].kind == SIMPLE
        and (state.status.get(aid) is COMPLETE or aid == failed)
    ]
    reset_composites = [
        aid
        for aid in on_path
        if model.activities[aid].kind == COMPOSITE
        and state.status.get(aid) is COMPLETE
    ]

    retained: list[tuple[str, str, object]] = []
    for aid in affected:
        for tid, value in sorted(state.bindings.get(aid, {}).items()):
            retained.append((aid, tid, value))

    # archive the failed attempt's workspace before it is torn down
    failed_ws = state.workspaces.pop(failed, None)
    from .engine import _record_for, _archive_record  # local to avoid cycle

    _archive_record(
        state, _record_for(state, failed, "superseded_by_replan", failed_ws)
    )
    state._superseded.setdefault(failed, []).append(state.attempt(failed))

    for aid in affected + reset_composites:
        if state.status.get(aid) is COMPLETE:
            state._superseded.setdefault(aid, []).append(state.attempt(aid))
            if state.archive is not None:
                state.archive.mark_superseded(
                    state.episode_id,
                    f"{state.episode_id}:{aid}:{state.attempt(aid)}",
                )
        if aid in state.bindings:
            prior = state.prior_bindings.setdefault(aid, {})
            prior.update(state.bindings.pop(aid))
        state.attempts[aid] = state.attempt(aid) + 1
        state.status[aid] = PENDING

    # composites the failure path enters are deactivated until their own
    # supports complete again; ancestors of the cause stay active
    cause_ancestors = set(_ancestors(state, cause))
    for aid in on_path:
        if (
            model.activities[aid].kind == COMPOSITE
            and aid not in cause_ancestors
            and state.status.get(aid) is ACTIVE
            and not any(
                state.status.get(d) is ACTIVE
                for d in _subtree_ids(model, aid)
                if d != aid
            )
        ):
            state.status[aid] = PENDING

    # the cause restarts immediately: its own support set is still complete
    state.status[cause] = READY
    for anc in cause_ancestors:
        if state.status.get(anc) is not COMPLETE:
            state.status[anc] = ACTIVE
    refresh_statuses(state)
    if state.status.get(cause) is not READY:
        state.status[cause] = READY  # refresh must never demote the cause

    record = ReplanRecord(
        failed=failed, cause=cause, affected=affected, retained=retained
    )
    state.emit("replanned", record.to_dict())
    return record


def _ancestors(state: EpisodeState, aid: str) -> list[str]:
    out = []
    cur = state.model.activities[aid].super_activity
    while cur is not None:
        out.append(cur)
        cur = state.model.activities[cur].super_activity
    return out


def declare_failure(
    state: EpisodeState, failed: str, cause: str
) -> tuple[EpisodeState, ReplanRecord]:
    mark_failure(state, failed, cause)
    record = apply_replan(state, failed, cause)
    return state, record
