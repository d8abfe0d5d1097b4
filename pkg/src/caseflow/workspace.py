"""Per-activity workspaces: the evolving entity set and its action chain.

A workspace holds the entity set of one active simple activity. Every user
action selects entities already present, applies one operation and grows
the set by exactly one new entity (or values one categorical entity in
place). Entities are never removed; corrections happen through superseding
entities linked with the reserved label "supersedes".
"""

from __future__ import annotations

import ast
import json
import operator
from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import (
    OpPreconditionFailed,
    OutOfRange,
    UnknownEntity,
)
from .taxonomy import (
    EntityTypology,
    FunctionalCategory,
    Taxonomy,
    ValueKind,
    check_value,
)

TEXT_GENRES = {"annotation", "interpretation", "summarization", "analysis", "conclusion"}

GROUP1_OPS = {
    "assign_value",
    "compute",
    "compile_list",
    "create_text",
    "link",
    "recall_episodes",
    "seek_details",
    "semantic_compare",
}
GROUP2_OPS = {"export_query", "export_info", "import_results"}
ALL_OPS = GROUP1_OPS | GROUP2_OPS

# ops whose results depend on something outside the workspace; replay
# injects their recorded results instead of re-invoking
EXTERNAL_OPS = {"recall_episodes", "export_query", "export_info", "import_results"}

SUPERSEDES = "supersedes"


def derived_typology(kind: ValueKind, taxonomy: Taxonomy) -> EntityTypology:
    """Pseudo-typology for entities computed inside a workspace."""
    return EntityTypology(
        id=f"derived:{kind.value}",
        name=f"derived {kind.value}",
        category=FunctionalCategory.OBJECT,
        semantic_type=taxonomy.root,
        value_kind=kind,
    )


@dataclass
class EntityInstance:
    id: str
    typology: str
    value: Any = None  # None means categorical / unvalued
    provenance: dict = field(default_factory=lambda: {"kind": "seed"})
    links: list[tuple[str, str]] = field(default_factory=list)
    created_seq: int = 0
    valued_seq: int | None = None  # action seq at which the value was set

    @property
    def valued(self) -> bool:
        return self.value is not None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "typology": self.typology,
            "value": self.value,
            "provenance": self.provenance,
            "links": [list(l) for l in self.links],
            "created_seq": self.created_seq,
            "valued_seq": self.valued_seq,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "EntityInstance":
        return cls(
            id=d["id"],
            typology=d["typology"],
            value=d["value"],
            provenance=dict(d["provenance"]),
            links=[tuple(l) for l in d.get("links", [])],
            created_seq=d.get("created_seq", 0),
            valued_seq=d.get("valued_seq"),
        )


@dataclass
class ActionRecord:
    seq: int
    op: str
    inputs: list[str]
    params: dict
    output: str  # entity id (last created for import_results)

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "op": self.op,
            "inputs": list(self.inputs),
            "params": self.params,
            "output": self.output,
        }


# --- safe expression evaluation for `compute` ---------------------------

_BIN_OPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
}
_CMP_OPS = {
    ast.Eq: operator.eq,
    ast.NotEq: operator.ne,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
}


def eval_expression(expression: str, variables: dict[str, Any]):
    """Evaluate an arithmetic/logical expression over input values.

    Grammar: + - * /, comparisons, and/or/not, numeric and boolean
    literals, and variable names v0..vN bound to the action's inputs.
    """
    try:
        tree = ast.parse(expression, mode="eval")
    except SyntaxError as exc:
        raise OpPreconditionFailed(f"bad expression: {exc}") from None

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant):
            if isinstance(node.value, (int, float, bool)):
                return node.value
            raise OpPreconditionFailed(f"literal {node.value!r} not allowed")
        if isinstance(node, ast.Name):
            if node.id not in variables:
                raise OpPreconditionFailed(f"unknown variable {node.id!r}")
            return variables[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BIN_OPS:
            left, right = ev(node.left), ev(node.right)
            if isinstance(node.op, ast.Div) and right == 0:
                raise OpPreconditionFailed("division by zero")
            return _BIN_OPS[type(node.op)](left, right)
        if isinstance(node, ast.UnaryOp):
            if isinstance(node.op, ast.Not):
                return not ev(node.operand)
            if isinstance(node.op, ast.USub):
                return -ev(node.operand)
        if isinstance(node, ast.BoolOp):
            vals = [ev(v) for v in node.values]
            return all(vals) if isinstance(node.op, ast.And) else any(vals)
        if isinstance(node, ast.Compare):
            left = ev(node.left)
            for op, comp in zip(node.ops, node.comparators):
                if type(op) not in _CMP_OPS:
                    raise OpPreconditionFailed("comparison operator not allowed")
                right = ev(comp)
                if not _CMP_OPS[type(op)](left, right):
                    return False
                left = right
            return True
        raise OpPreconditionFailed(
            f"expression construct {type(node).__name__} not allowed"
        )

    return ev(tree)


class ConnectorRegistry:
    """Named connectors that receive exported packages.

    The built-in "echo" connector answers with the package's own entities,
    which makes the export/import round trip testable without any real
    external system.
    """

    def __init__(self):
        self._connectors: dict[str, Callable[[dict], dict]] = {"echo": _echo_connector}

    def register(self, name: str, fn: Callable[[dict], dict]) -> None:
        self._connectors[name] = fn

    def get(self, name: str) -> Callable[[dict], dict]:
        try:
            return self._connectors[name]
        except KeyError:
            raise OpPreconditionFailed(f"unknown connector: {name}") from None


def _echo_connector(package: dict) -> dict:
    return {
        "package_id": package["package_id"],
        "payload": [
            {"typology": e["typology"], "value": e["value"]}
            for e in package["entities"]
        ],
    }


@dataclass
class WorkspaceState:
    activity: str
    taxonomy: Taxonomy
    context_path: list[str] = field(default_factory=list)
    entities: dict[str, EntityInstance] = field(default_factory=dict)
    goals: list[str] = field(default_factory=list)  # entity ids
    actions: list[ActionRecord] = field(default_factory=list)
    packages: dict[str, dict] = field(default_factory=dict)
    connector_responses: dict[str, dict] = field(default_factory=dict)
    connectors: ConnectorRegistry = field(default_factory=ConnectorRegistry)
    retriever: Callable | None = None  # (probe_dict, k) -> list of result dicts
    _next_entity: int = 0
    _next_package: int = 0

    # -- basic accessors --------------------------------------------------

    @property
    def t(self) -> int:
        return len(self.actions)

    def entity(self, entity_id: str) -> EntityInstance:
        try:
            return self.entities[entity_id]
        except KeyError:
            raise UnknownEntity(f"unknown entity: {entity_id}") from None

    def typology_of(self, entity: EntityInstance) -> EntityTypology:
        if entity.typology.startswith("derived:"):
            return derived_typology(
                ValueKind(entity.typology.split(":", 1)[1]), self.taxonomy
            )
        if entity.typology.startswith("pseudo:"):
            return EntityTypology(
                id=entity.typology,
                name=entity.typology.split(":", 1)[1],
                category=FunctionalCategory.OBJECT,
                semantic_type=self.taxonomy.root,
                value_kind=ValueKind.TEXT,
            )
        return self.taxonomy.typology(entity.typology)

    def typology_path(self, entity: EntityInstance) -> list[str]:
        return self.taxonomy.ancestor_path(self.typology_of(entity).semantic_type)

    def _new_id(self) -> str:
        self._next_entity += 1
        return f"e{self._next_entity}"

    def add_seed(
        self,
        typology: str,
        value,
        provenance: dict,
        goal: bool = False,
    ) -> EntityInstance:
        ent = EntityInstance(
            id=self._new_id(),
            typology=typology,
            value=value,
            provenance=provenance,
            created_seq=0,
            valued_seq=0 if value is not None else None,
        )
        self.entities[ent.id] = ent
        if goal:
            self.goals.append(ent.id)
        return ent

    def goal_entities(self) -> list[EntityInstance]:
        return [self.entities[g] for g in self.goals]

    def unvalued_goals(self) -> list[EntityInstance]:
        return [e for e in self.goal_entities() if not e.valued]

    # -- the transformation rule ------------------------------------------

    def apply_action(
        self, op: str, inputs: list[str], params: dict | None = None
    ) -> EntityInstance:
        """Apply one operation; grows the entity set by exactly one entity
        (or values one categorical entity in place) and appends an
        ActionRecord. import_results appends one record per payload item.
        """
        params = params or {}
        if op not in ALL_OPS:
            raise OpPreconditionFailed(f"unknown operation: {op}")
        selected = [self.entity(i) for i in inputs]
        handler = getattr(self, f"_op_{op}")
        return handler(selected, inputs, params)

    def _record(
        self, op: str, inputs: list[str], params: dict, output: str
    ) -> None:
        self.actions.append(
            ActionRecord(
                seq=self.t + 1,
                op=op,
                inputs=list(inputs),
                params=params,
                output=output,
            )
        )

    def _create(
        self,
        op: str,
        inputs: list[str],
        params: dict,
        typology: str,
        value,
        provenance_kind: str = "action_result",
        extra_prov: dict | None = None,
    ) -> EntityInstance:
        seq = self.t + 1
        prov = {"kind": provenance_kind, "action": seq}
        prov.update(extra_prov or {})
        ent = EntityInstance(
            id=self._new_id(),
            typology=typology,
            value=value,
            provenance=prov,
            created_seq=seq,
            valued_seq=seq if value is not None else None,
        )
        self.entities[ent.id] = ent
        self._record(op, inputs, params, ent.id)
        return ent

    # -- Group 1 -----------------------------------------------------------

    def _op_assign_value(self, selected, inputs, params):
        if len(selected) != 1:
            raise OpPreconditionFailed("assign_value takes exactly one entity")
        ent = selected[0]
        if ent.valued:
            raise OpPreconditionFailed(f"entity {ent.id} already valued")
        if "value" not in params:
            raise OpPreconditionFailed("assign_value requires params.value")
        check_value(params["value"], self.typology_of(ent).value_kind, ent.typology)
        seq = self.t + 1
        ent.value = params["value"]
        ent.valued_seq = seq
        self._record("assign_value", inputs, params, ent.id)
        return ent

    def _op_compute(self, selected, inputs, params):
        for ent in selected:
            kind = self.typology_of(ent).value_kind
            if kind not in (ValueKind.QUANTITATIVE, ValueKind.BOOLEAN):
                raise OpPreconditionFailed(
                    f"compute input {ent.id} is not quantitative/boolean"
                )
            if not ent.valued:
                raise OpPreconditionFailed(f"compute input {ent.id} is unvalued")
        expression = params.get("expression")
        if not expression:
            raise OpPreconditionFailed("compute requires params.expression")
        variables = {f"v{i}": e.value for i, e in enumerate(selected)}
        result = eval_expression(expression, variables)
        kind = ValueKind.BOOLEAN if isinstance(result, bool) else ValueKind.QUANTITATIVE
        return self._create(
            "compute", inputs, params, f"derived:{kind.value}", result
        )

    def _op_compile_list(self, selected, inputs, params):
        if not selected:
            raise OpPreconditionFailed("compile_list requires at least one entity")
        return self._create(
            "compile_list",
            inputs,
            params,
            params.get("typology", "derived:entity_list"),
            [e.id for e in selected],
        )

    def _op_create_text(self, selected, inputs, params):
        text = params.get("text")
        genre = params.get("genre")
        if not isinstance(text, str):
            raise OpPreconditionFailed("create_text requires params.text")
        if genre not in TEXT_GENRES:
            raise OpPreconditionFailed(
                f"genre must be one of {sorted(TEXT_GENRES)}, got {genre!r}"
            )
        return self._create(
            "create_text", inputs, params, "derived:text", text,
            extra_prov={"genre": genre},
        )

    def _op_link(self, selected, inputs, params):
        if len(selected) != 2:
            raise OpPreconditionFailed("link takes exactly two entities")
        label = params.get("label")
        if not label:
            raise OpPreconditionFailed("link requires params.label")
        a, b = selected
        ent = self._create(
            "link",
            inputs,
            params,
            "derived:reference",
            {"from": a.id, "to": b.id, "label": label},
        )
        a.links.append((label, b.id))
        return ent

    def _op_recall_episodes(self, selected, inputs, params):
        if self.retriever is None:
            raise OpPreconditionFailed("no episode base attached to this workspace")
        probe = self.build_probe_dict()
        k = int(params.get("k", 5))
        results = self.retriever(probe, k)
        return self._create(
            "recall_episodes",
            inputs,
            params,
            "derived:entity_list",
            results,
            provenance_kind="external",
            extra_prov={"source": "episode_base"},
        )

    def _op_seek_details(self, selected, inputs, params):
        if len(selected) != 1:
            raise OpPreconditionFailed("seek_details takes exactly one entity")
        if params.get("ancillary"):
            text = "ancillary knowledge-base lookups are unsupported"
        else:
            typ = self.typology_of(selected[0])
            path = self.taxonomy.ancestor_path(typ.semantic_type)
            siblings = sorted(
                t.id
                for t in self.taxonomy.typologies.values()
                if t.semantic_type == typ.semantic_type and t.id != typ.id
            )
            text = json.dumps(
                {
                    "typology": {
                        "id": typ.id,
                        "name": typ.name,
                        "category": typ.category.value,
                        "semantic_type": typ.semantic_type,
                        "value_kind": typ.value_kind.value,
                    },
                    "ancestor_path": path,
                    "sibling_typologies": siblings,
                },
                sort_keys=True,
            )
        return self._create("seek_details", inputs, params, "derived:text", text)

    def _op_semantic_compare(self, selected, inputs, params):
        if len(selected) != 2:
            raise OpPreconditionFailed("semantic_compare takes exactly two entities")
        a, b = selected
        ta, tb = self.typology_of(a), self.typology_of(b)
        if not self.taxonomy.commensurate(ta.semantic_type, tb.semantic_type):
            raise OpPreconditionFailed(
                f"typologies {ta.id} and {tb.id} are not semantically commensurate"
            )
        if not a.valued or not b.valued:
            verdict = "at least one entity is unvalued; values not comparable"
        elif isinstance(a.value, list) and isinstance(b.value, list):
            sa, sb = set(map(str, a.value)), set(map(str, b.value))
            verdict = (
                f"shared: {sorted(sa & sb)}; only {a.id}: {sorted(sa - sb)}; "
                f"only {b.id}: {sorted(sb - sa)}"
            )
        else:
            verdict = "values equal" if a.value == b.value else (
                f"values differ: {a.value!r} vs {b.value!r}"
            )
        text = f"compare {a.id}({ta.id}) ~ {b.id}({tb.id}): {verdict}"
        return self._create("semantic_compare", inputs, params, "derived:text", text)

    # -- Group 2 -----------------------------------------------------------

    def _build_package(self, selected, intent: str, recipients=None) -> dict:
        self._next_package += 1
        package = {
            "package_id": f"{self.activity}-pkg{self._next_package}",
            "context_path": list(self.context_path),
            "entities": [
                {
                    "typology": e.typology,
                    "typology_path": self.typology_path(e),
                    "value": e.value,
                    "provenance": e.provenance,
                }
                for e in selected
            ],
            "intent": intent,
        }
        if recipients is not None:
            package["recipients"] = recipients
        return package

    def _dispatch(self, op, selected, inputs, params, package):
        self.packages[package["package_id"]] = package
        connector = self.connectors.get(params.get("connector", "echo"))
        try:
            response = connector(package)
        except Exception as exc:  # insulation: failure becomes an error marker
            return self._create(
                op,
                inputs,
                params,
                "derived:reference",
                {"package_id": package["package_id"], "error": str(exc)},
                provenance_kind="external",
                extra_prov={"source": params.get("connector", "echo")},
            )
        self.connector_responses[package["package_id"]] = response
        return self._create(
            op,
            inputs,
            params,
            "derived:reference",
            {"package_id": package["package_id"], "status": "delivered"},
            provenance_kind="external",
            extra_prov={"source": params.get("connector", "echo")},
        )

    def _op_export_query(self, selected, inputs, params):
        if not selected:
            raise OpPreconditionFailed("export_query requires at least one entity")
        package = self._build_package(selected, params.get("intent", ""))
        return self._dispatch("export_query", selected, inputs, params, package)

    def _op_export_info(self, selected, inputs, params):
        if not selected:
            raise OpPreconditionFailed("export_info requires at least one entity")
        recipients = params.get("recipients")
        if not recipients:
            raise OpPreconditionFailed("export_info requires params.recipients")
        package = self._build_package(selected, params.get("intent", ""), recipients)
        return self._dispatch("export_info", selected, inputs, params, package)

    def _op_import_results(self, selected, inputs, params):
        package_id = params.get("package_id")
        payload = params.get("payload")
        if package_id not in self.packages:
            raise OpPreconditionFailed(f"unknown package: {package_id}")
        if not isinstance(payload, list) or not payload:
            raise OpPreconditionFailed("import_results requires a non-empty payload")
        last = None
        for item in payload:
            last = self._create(
                "import_results",
                inputs,
                {"package_id": package_id, "item": item},
                item.get("typology", "derived:reference"),
                item.get("value"),
                provenance_kind="external",
                extra_prov={"source": package_id},
            )
        return last

    # -- snapshots / probes / replay ---------------------------------------

    def snapshot(self, t: int) -> list[EntityInstance]:
        """The entity set exactly as it stood after action t."""
        if t < 0 or t > self.t:
            raise OutOfRange(f"t={t} outside [0, {self.t}]")
        links_at_t: dict[str, list[tuple[str, str]]] = {}
        for a in self.actions:
            if a.op == "link" and a.seq <= t:
                links_at_t.setdefault(a.inputs[0], []).append(
                    (a.params["label"], a.inputs[1])
                )
        out = []
        for ent in self.entities.values():
            if ent.created_seq > t:
                continue
            copy = EntityInstance.from_dict(ent.to_dict())
            if ent.valued_seq is not None and ent.valued_seq > t:
                copy.value = None
                copy.valued_seq = None
            copy.links = links_at_t.get(ent.id, [])
            out.append(copy)
        return out

    def build_probe_dict(self) -> dict:
        return {
            "elements": [
                {"typology_path": self.typology_path(e), "value": e.value}
                for e in self.entities.values()
            ],
            "source_activity": self.activity,
            "source_t": self.t,
        }

    def replay_external(self, records: list[dict], result_entities: list[dict]) -> None:
        """Re-apply an external op from its logged result snapshot."""
        for ent_dict in result_entities:
            ent = EntityInstance.from_dict(ent_dict)
            self.entities[ent.id] = ent
            if ent.id[1:].isdigit():
                self._next_entity = max(self._next_entity, int(ent.id[1:]))
        for record in records:
            self.actions.append(
                ActionRecord(
                    seq=record["seq"],
                    op=record["op"],
                    inputs=list(record["inputs"]),
                    params=record["params"],
                    output=record["output"],
                )
            )
            if record["op"] in ("export_query", "export_info"):
                # keep the package id sequence aligned for later imports
                self._next_package += 1
                marker = self.entities.get(record["output"])
                pid = None
                if marker is not None and isinstance(marker.value, dict):
                    pid = marker.value.get("package_id")
                if pid:
                    self.packages.setdefault(pid, {"package_id": pid, "replayed": True})

    def to_dict(self) -> dict:
        return {
            "activity": self.activity,
            "context_path": list(self.context_path),
            "t": self.t,
            "entities": [e.to_dict() for e in self.entities.values()],
            "goals": list(self.goals),
            "actions": [a.to_dict() for a in self.actions],
        }
