"""Domain taxonomy and entity typologies.

The taxonomy is a single rooted tree of semantic types. Entity typologies
classify every entity a model may mention: a functional category (the role
an entity plays in an activity), a semantic type (a taxonomy node) and a
value kind constraining episodic values. Both structures are immutable
after load and safe to share across concurrent episodes.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    CycleError,
    InvalidBinding,
    MultipleRoots,
    ParseError,
    UnknownNode,
    UnresolvedReference,
)


class FunctionalCategory(str, Enum):
    ACTOR = "actor"
    TOOL = "tool"
    OBJECT = "object"
    OUTCOME = "outcome"


class ValueKind(str, Enum):
    QUANTITATIVE = "quantitative"
    TEXT = "text"
    ENTITY_LIST = "entity_list"
    REFERENCE = "reference"
    BOOLEAN = "boolean"


@dataclass(frozen=True)
class TaxonomyNode:
    id: str
    label: str
    parent: str | None  # None only for the root


@dataclass(frozen=True)
class EntityTypology:
    id: str
    name: str
    category: FunctionalCategory
    semantic_type: str  # taxonomy node id
    value_kind: ValueKind


@dataclass
class Taxonomy:
    """Validated tree of TaxonomyNodes keyed by id."""

    nodes: dict[str, TaxonomyNode]
    root: str
    typologies: dict[str, EntityTypology] = field(default_factory=dict)

    def node(self, node_id: str) -> TaxonomyNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNode(f"unknown taxonomy node: {node_id}") from None

    def typology(self, typology_id: str) -> EntityTypology:
        try:
            return self.typologies[typology_id]
        except KeyError:
            raise UnresolvedReference(
                f"unknown entity typology: {typology_id}"
            ) from None

    def ancestor_path(self, node_id: str) -> list[str]:
        """Root-to-node path of ids, inclusive on both ends."""
        self.node(node_id)
        path = []
        cur: str | None = node_id
        while cur is not None:
            path.append(cur)
            cur = self.nodes[cur].parent
        path.reverse()
        return path

    def commensurate(self, a: str, b: str) -> bool:
        """True iff the nodes are equal or one is an ancestor of the other."""
        pa = self.ancestor_path(a)
        pb = self.ancestor_path(b)
        return a in pb or b in pa

    def children(self, node_id: str) -> list[str]:
        self.node(node_id)
        return sorted(n.id for n in self.nodes.values() if n.parent == node_id)

    def typology_path(self, typology_id: str) -> list[str]:
        return self.ancestor_path(self.typology(typology_id).semantic_type)

    def register_typologies(self, specs: list[dict]) -> None:
        for spec in specs:
            t = typology_from_dict(spec)
            if t.semantic_type not in self.nodes:
                raise UnresolvedReference(
                    f"typology {t.id}: semantic type {t.semantic_type!r} "
                    f"not in taxonomy"
                )
            if t.id in self.typologies:
                raise ParseError(f"duplicate typology id: {t.id}")
            self.typologies[t.id] = t


def typology_from_dict(spec: dict) -> EntityTypology:
    try:
        return EntityTypology(
            id=spec["id"],
            name=spec.get("name", spec["id"]),
            category=FunctionalCategory(spec["category"]),
            semantic_type=spec["semantic_type"],
            value_kind=ValueKind(spec["value_kind"]),
        )
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad typology record: {exc}") from None


def conforms(value, kind: ValueKind) -> bool:
    if kind is ValueKind.QUANTITATIVE:
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    if kind is ValueKind.BOOLEAN:
        return isinstance(value, bool)
    if kind is ValueKind.TEXT:
        return isinstance(value, str)
    if kind is ValueKind.ENTITY_LIST:
        return isinstance(value, list)
    if kind is ValueKind.REFERENCE:
        return isinstance(value, (str, dict))
    return False


def check_value(value, kind: ValueKind, context: str = "") -> None:
    if not conforms(value, kind):
        raise InvalidBinding(
            f"{context or 'value'} {value!r} does not conform to kind {kind.value}"
        )


def load_taxonomy(document: str) -> Taxonomy:
    """Parse and validate a taxonomy document (JSON).

    Accepted shapes: a list of node objects, or an object with a ``nodes``
    list and optional ``typologies`` list. Each node carries ``id``,
    ``label`` and ``parent`` (null/absent for the root).
    """
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise ParseError(f"taxonomy is not valid JSON: {exc}") from None

    if isinstance(data, list):
        node_specs, typology_specs = data, []
    elif isinstance(data, dict) and "nodes" in data:
        node_specs = data["nodes"]
        typology_specs = data.get("typologies", [])
    else:
        raise ParseError("taxonomy document must be a node list or {nodes: [...]}")

    nodes: dict[str, TaxonomyNode] = {}
    for spec in node_specs:
        if not isinstance(spec, dict) or "id" not in spec:
            raise ParseError(f"bad taxonomy node record: {spec!r}")
        node = TaxonomyNode(
            id=spec["id"],
            label=spec.get("label", spec["id"]),
            parent=spec.get("parent"),
        )
        if node.id in nodes:
            raise ParseError(f"duplicate taxonomy node id: {node.id}")
        nodes[node.id] = node

    roots = [n.id for n in nodes.values() if n.parent is None]
    if not nodes:
        raise ParseError("taxonomy has no nodes")
    if len(roots) > 1:
        raise MultipleRoots(f"multiple roots: {sorted(roots)}")
    if not roots:
        raise CycleError("no root node; parent links are cyclic")

    # every non-root node must reach the root without revisiting a node
    for node in nodes.values():
        seen = set()
        cur: str | None = node.id
        while cur is not None:
            if cur in seen:
                raise CycleError(f"cycle in parent links at node {cur!r}")
            seen.add(cur)
            parent = nodes[cur].parent
            if parent is not None and parent not in nodes:
                raise ParseError(
                    f"node {cur!r} references unknown parent {parent!r}"
                )
            cur = parent

    taxonomy = Taxonomy(nodes=nodes, root=roots[0])
    taxonomy.register_typologies(typology_specs)
    return taxonomy
