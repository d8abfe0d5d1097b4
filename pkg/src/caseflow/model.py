"""Reference task models: parsing, dependency derivation and validation.

A model is a hierarchy of activities. Composite activities decompose into
sub-activities whose dependency edges are *derived*: sibling k supports
sibling j whenever an outcome typology of k appears among the tools of j.
Authored edge lists, if present in a document, are only accepted when they
match the derivation exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import (
    MultipleFinal,
    NoFinal,
    NoParent,
    ParseError,
    UnknownActivity,
    UnresolvedReference,
)
from .taxonomy import Taxonomy

OUTCOME_OF_PREFIX = "outcome_of:"

SIMPLE = "simple"
COMPOSITE = "composite"


@dataclass
class Activity:
    id: str
    name: str
    kind: str  # SIMPLE or COMPOSITE
    entities: list[dict]  # [{"ref": ..., "role": ...}]
    outcome: list[str]  # typology ids, non-empty
    sub_activities: list[str] = field(default_factory=list)
    super_activity: str | None = None

    def entity_refs(self, role: str) -> list[str]:
        return [e["ref"] for e in self.entities if e.get("role") == role]


@dataclass(frozen=True)
class DependencyEdge:
    from_id: str
    to_id: str
    via: str  # outcome typology of `from` that is a tool of `to`

    def as_tuple(self) -> tuple[str, str, str]:
        return (self.from_id, self.to_id, self.via)


@dataclass
class ValidationReport:
    errors: list[tuple[str, str, str]] = field(default_factory=list)
    warnings: list[tuple[str, str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.errors

    def error(self, rule: str, activity: str, message: str) -> None:
        self.errors.append((rule, activity, message))

    def warn(self, rule: str, activity: str, message: str) -> None:
        self.warnings.append((rule, activity, message))

    def rules(self) -> set[str]:
        return {rule for rule, _, _ in self.errors}

    def to_dict(self) -> dict:
        return {
            "errors": [
                {"rule": r, "activity": a, "message": m} for r, a, m in self.errors
            ],
            "warnings": [
                {"rule": r, "activity": a, "message": m} for r, a, m in self.warnings
            ],
        }


@dataclass
class ActivityModel:
    id: str
    taxonomy: Taxonomy
    root_id: str
    activities: dict[str, Activity]

    def activity(self, activity_id: str) -> Activity:
        try:
            return self.activities[activity_id]
        except KeyError:
            raise UnknownActivity(f"unknown activity: {activity_id}") from None

    @property
    def root(self) -> Activity:
        return self.activities[self.root_id]

    def children(self, activity_id: str) -> list[Activity]:
        return [self.activities[c] for c in self.activity(activity_id).sub_activities]

    # -- reference resolution -------------------------------------------

    def resolve_ref(self, ref: str, owner: Activity) -> list[str]:
        """Expand one entity ref into concrete typology ids."""
        if ref.startswith(OUTCOME_OF_PREFIX):
            sibling_id = ref[len(OUTCOME_OF_PREFIX):]
            sibling = self.activity(sibling_id)
            if (
                owner.super_activity is None
                or sibling.super_activity != owner.super_activity
            ):
                raise UnresolvedReference(
                    f"{owner.id}: {ref} does not name a sibling"
                )
            return list(sibling.outcome)
        self.taxonomy.typology(ref)
        return [ref]

    def tools(self, activity_id: str) -> list[str]:
        """Resolved tool typology ids, declaration order, de-duplicated."""
        a = self.activity(activity_id)
        out: list[str] = []
        for ref in a.entity_refs("tool"):
            for tid in self.resolve_ref(ref, a):
                if tid not in out:
                    out.append(tid)
        return out

    # -- structure queries ------------------------------------------------

    def derive_edges(self, composite_id: str) -> list[DependencyEdge]:
        """Edges k->j iff an outcome typology of k is among the tools of j."""
        composite = self.activity(composite_id)
        edges = []
        for k in composite.sub_activities:
            outcome_k = set(self.activities[k].outcome)
            for j in composite.sub_activities:
                if j == k:
                    continue
                for via in outcome_k.intersection(self.tools(j)):
                    edges.append(DependencyEdge(k, j, via))
        edges.sort(key=DependencyEdge.as_tuple)
        return edges

    def support_set(self, activity_id: str) -> set[str]:
        a = self.activity(activity_id)
        if a.super_activity is None:
            raise NoParent(f"{activity_id} has no parent composite")
        return {
            e.from_id
            for e in self.derive_edges(a.super_activity)
            if e.to_id == activity_id
        }

    def init_set(self, composite_id: str) -> set[str]:
        composite = self.activity(composite_id)
        supported = {e.to_id for e in self.derive_edges(composite_id)}
        return {c for c in composite.sub_activities if c not in supported}

    def final_activity(self, composite_id: str) -> Activity:
        composite = self.activity(composite_id)
        finals = [
            self.activities[c]
            for c in composite.sub_activities
            if self.activities[c].outcome == composite.outcome
        ]
        if not finals:
            raise NoFinal(f"composite {composite_id} has no final sub-activity")
        if len(finals) > 1:
            raise MultipleFinal(
                f"composite {composite_id} has multiple finals: "
                f"{[f.id for f in finals]}"
            )
        return finals[0]

    def composites(self) -> list[Activity]:
        return [a for a in self.activities.values() if a.kind == COMPOSITE]

    def simples(self) -> list[Activity]:
        return [a for a in self.activities.values() if a.kind == SIMPLE]

    # -- serialization ----------------------------------------------------

    def _activity_doc(self, activity_id: str) -> dict:
        a = self.activities[activity_id]
        doc = {
            "id": a.id,
            "name": a.name,
            "kind": a.kind,
            "entities": [dict(e) for e in a.entities],
            "outcome": list(a.outcome),
        }
        if a.sub_activities:
            doc["sub_activities"] = [
                self._activity_doc(c) for c in a.sub_activities
            ]
        return doc

    def to_document(self) -> str:
        return json.dumps(
            {"id": self.id, "root": self._activity_doc(self.root_id)},
            indent=2,
            sort_keys=True,
        )


def _parse_activity(
    doc: dict,
    parent: str | None,
    activities: dict[str, Activity],
    report: ValidationReport,
) -> str:
    if not isinstance(doc, dict) or "id" not in doc:
        raise ParseError(f"bad activity record: {doc!r}")
    sub_docs = doc.get("sub_activities", []) or []
    kind = doc.get("kind", COMPOSITE if sub_docs else SIMPLE)
    if kind not in (SIMPLE, COMPOSITE):
        raise ParseError(f"activity {doc['id']}: unknown kind {kind!r}")

    # one-child composites are semantically their child: normalize + warn
    if kind == COMPOSITE and len(sub_docs) == 1:
        report.warn(
            "R6",
            doc["id"],
            "composite with a single sub-activity normalized to its child",
        )
        child = dict(sub_docs[0])
        child["id"] = doc["id"]
        child["name"] = doc.get("name", doc["id"])
        return _parse_activity(child, parent, activities, report)

    activity = Activity(
        id=doc["id"],
        name=doc.get("name", doc["id"]),
        kind=kind,
        entities=[dict(e) for e in doc.get("entities", [])],
        outcome=list(doc.get("outcome", [])),
        super_activity=parent,
    )
    if activity.id in activities:
        raise ParseError(f"duplicate activity id: {activity.id}")
    activities[activity.id] = activity
    for sub in sub_docs:
        child_id = _parse_activity(sub, activity.id, activities, report)
        activity.sub_activities.append(child_id)
    return activity.id


def parse_model(document: str, taxonomy: Taxonomy) -> ActivityModel:
    """Parse a model document into a resolved (but not yet validated) model.

    Raises UnresolvedReference for any entity/outcome ref that does not
    resolve against the taxonomy or a sibling.
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"model is not valid JSON: {exc}") from None
    if not isinstance(data, dict) or "root" not in data:
        raise ParseError("model document must be an object with a 'root' activity")

    if data.get("typologies"):
        taxonomy.register_typologies(data["typologies"])

    report = ValidationReport()
    activities: dict[str, Activity] = {}
    root_id = _parse_activity(data["root"], None, activities, report)
    model = ActivityModel(
        id=data.get("id", root_id),
        taxonomy=taxonomy,
        root_id=root_id,
        activities=activities,
    )
    model.parse_warnings = report.warnings  # carried into validate_model

    # force full resolution now so UnresolvedReference surfaces at parse time
    for a in activities.values():
        for e in a.entities:
            model.resolve_ref(e["ref"], a)
        for tid in a.outcome:
            taxonomy.typology(tid)

    # authored edge lists are never trusted: kept for the R5 equality check
    model.authored_edges = {
        composite_id: {(e["from"], e["to"], e["via"]) for e in authored}
        for composite_id, authored in (data.get("edges") or {}).items()
    }
    return model


def _reachable_to(edges: list[DependencyEdge], target: str) -> set[str]:
    """Nodes from which `target` is reachable (including target)."""
    preds: dict[str, set[str]] = {}
    for e in edges:
        preds.setdefault(e.to_id, set()).add(e.from_id)
    seen = {target}
    stack = [target]
    while stack:
        for p in preds.get(stack.pop(), ()):
            if p not in seen:
                seen.add(p)
                stack.append(p)
    return seen


def _cycle_nodes(children: list[str], edges: list[DependencyEdge]) -> set[str]:
    """Nodes on at least one dependency cycle.

    Iteratively peels nodes that cannot be on a cycle (zero in-degree or
    zero out-degree); whatever survives lies on some cycle.
    """
    succ = {c: set() for c in children}
    pred = {c: set() for c in children}
    for e in edges:
        succ[e.from_id].add(e.to_id)
        pred[e.to_id].add(e.from_id)
    alive = set(children)
    changed = True
    while changed:
        changed = False
        for n in list(alive):
            if not (succ[n] & alive) or not (pred[n] & alive):
                alive.discard(n)
                changed = True
    return alive


def validate_model(model: ActivityModel) -> ValidationReport:
    """Check every structural rule; the report carries failures, never raises.

    Rules: R1 tool inheritance, R2 non-empty Init per composite, R3 exactly
    one final per composite, R4 acyclic dependency graph, R5 edge/via
    consistency, R6 simple/composite arity and non-empty outcomes.
    Warning W1: sub-activities from which the final activity is unreachable.
    """
    report = ValidationReport()
    report.warnings.extend(getattr(model, "parse_warnings", []))

    for a in model.activities.values():
        if not a.outcome:
            report.error("R6", a.id, "activity has an empty outcome list")
        if a.kind == SIMPLE and a.sub_activities:
            report.error("R6", a.id, "simple activity declares sub-activities")
        if a.kind == COMPOSITE and len(a.sub_activities) < 2:
            report.error(
                "R6", a.id, "composite activity has fewer than 2 sub-activities"
            )

    for composite in model.composites():
        children = composite.sub_activities
        if not children:
            continue
        parent_tools = set(model.tools(composite.id))
        edges = model.derive_edges(composite.id)

        # R1: every sub-activity shares at least one tool with its parent
        for c in children:
            if parent_tools and not parent_tools.intersection(model.tools(c)):
                report.error(
                    "R1",
                    c,
                    f"no tool shared with parent composite {composite.id}",
                )

        # R4: dependency graph must be acyclic
        cyclic = _cycle_nodes(children, edges)
        for c in sorted(cyclic):
            report.error("R4", c, "activity participates in a dependency cycle")

        # R2: at least one sub-activity with empty support set
        supported = {e.to_id for e in edges}
        if all(c in supported for c in children):
            report.error(
                "R2", composite.id, "no sub-activity with an empty support set"
            )

        # R3: exactly one final sub-activity
        finals = [
            c for c in children if model.activities[c].outcome == composite.outcome
        ]
        if not finals:
            report.error(
                "R3", composite.id, "no sub-activity carries the composite outcome"
            )
        elif len(finals) > 1:
            report.error(
                "R3",
                composite.id,
                f"multiple final sub-activities: {finals}",
            )

        # R5: via invariant on every derived edge (holds by construction for
        # derivation; re-checked so overlay surgery cannot silently break it)
        for e in edges:
            if e.via not in model.activities[e.from_id].outcome or e.via not in set(
                model.tools(e.to_id)
            ):
                report.error(
                    "R5",
                    e.to_id,
                    f"edge {e.from_id}->{e.to_id} via {e.via} violates its invariant",
                )

        # R5 also rejects an authored edge list that disagrees with derivation
        authored = getattr(model, "authored_edges", {}).get(composite.id)
        if authored is not None:
            derived = {e.as_tuple() for e in edges}
            if authored != derived:
                report.error(
                    "R5",
                    composite.id,
                    f"authored edges disagree with derivation: "
                    f"authored={sorted(authored)} derived={sorted(derived)}",
                )

        # W1: final unreachable from a sibling
        if len(finals) == 1 and not cyclic:
            can_reach = _reachable_to(edges, finals[0])
            for c in children:
                if c not in can_reach:
                    report.warn(
                        "W1",
                        c,
                        f"final activity {finals[0]} unreachable from here",
                    )
    return report
