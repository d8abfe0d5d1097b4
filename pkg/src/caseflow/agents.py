"""Registry of specialist agents.

Producer agents wrap one narrow, deterministic capability behind a
package-in/package-out contract. Interface agents are compositions of
other agents (producers or interfaces), resolved left to right. The
registry insulates the engine: a failing constituent surfaces as a
ConstituentFailure and never leaves partial state behind.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from typing import Callable

from .errors import (
    CompositionCycle,
    ContractViolation,
    ConstituentFailure,
    DuplicateId,
    UnknownAgent,
)
from .taxonomy import Taxonomy


@dataclass
class ProducerAgentSpec:
    id: str
    capability: str
    input_contract: list[str]  # required package fields
    output_contract: list[str]
    implementation: Callable[[dict], dict] | None = None

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": "producer",
            "capability": self.capability,
            "input_contract": list(self.input_contract),
            "output_contract": list(self.output_contract),
        }


@dataclass
class InterfaceAgentSpec:
    id: str
    service: str
    composition: list[str]  # agent ids, piped left to right
    proactive: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "type": "interface",
            "service": self.service,
            "composition": list(self.composition),
            "proactive": self.proactive,
        }


@dataclass
class AgentInvocation:
    agent_id: str
    input_package: dict
    output_package: dict | None
    duration: float
    status: str  # "ok" or "error"


def _check_contract(package: dict, contract: list[str], agent_id: str, side: str):
    missing = [f for f in contract if f not in package]
    if missing:
        raise ContractViolation(
            f"{side} package for agent {agent_id} missing fields: {missing}"
        )


class AgentRegistry:
    def __init__(self):
        self._producers: dict[str, ProducerAgentSpec] = {}
        self._interfaces: dict[str, InterfaceAgentSpec] = {}
        self.invocations: list[AgentInvocation] = []

    # -- registration -------------------------------------------------------

    def register(self, spec: ProducerAgentSpec | InterfaceAgentSpec) -> None:
        if spec.id in self._producers or spec.id in self._interfaces:
            raise DuplicateId(f"agent id already registered: {spec.id}")
        if isinstance(spec, ProducerAgentSpec):
            self._producers[spec.id] = spec
        else:
            self._interfaces[spec.id] = spec
            try:
                self._check_acyclic()
            except CompositionCycle:
                del self._interfaces[spec.id]
                raise

    def _check_acyclic(self) -> None:
        state: dict[str, int] = {}  # 0 visiting, 1 done

        def visit(agent_id: str) -> None:
            if agent_id not in self._interfaces:
                return  # producers and unresolved (deferred) ids are leaves
            if state.get(agent_id) == 0:
                raise CompositionCycle(f"composition cycle through {agent_id}")
            if state.get(agent_id) == 1:
                return
            state[agent_id] = 0
            for constituent in self._interfaces[agent_id].composition:
                visit(constituent)
            state[agent_id] = 1

        for agent_id in self._interfaces:
            visit(agent_id)

    def spec(self, agent_id: str) -> ProducerAgentSpec | InterfaceAgentSpec:
        if agent_id in self._producers:
            return self._producers[agent_id]
        if agent_id in self._interfaces:
            return self._interfaces[agent_id]
        raise UnknownAgent(f"unknown agent: {agent_id}")

    def list_agents(self) -> list[dict]:
        specs = list(self._producers.values()) + list(self._interfaces.values())
        return sorted((s.to_dict() for s in specs), key=lambda d: d["id"])

    # -- invocation -----------------------------------------------------------

    def invoke(self, agent_id: str, package: dict) -> dict:
        # snapshot resolution: later registry mutations cannot affect this call
        producers = dict(self._producers)
        interfaces = dict(self._interfaces)
        started = time.monotonic()

        def run(aid: str, pkg: dict) -> dict:
            if aid in producers:
                spec = producers[aid]
                _check_contract(pkg, spec.input_contract, aid, "input")
                if spec.implementation is None:
                    raise ConstituentFailure(aid, f"agent {aid} has no implementation")
                try:
                    out = spec.implementation(pkg)
                except ConstituentFailure:
                    raise
                except Exception as exc:
                    raise ConstituentFailure(aid, f"{aid}: {exc}") from exc
                _check_contract(out, spec.output_contract, aid, "output")
                return out
            if aid in interfaces:
                out = pkg
                for constituent in interfaces[aid].composition:
                    out = run(constituent, out)
                return out
            raise UnknownAgent(f"unknown agent: {aid}")

        self.spec(agent_id)  # raise UnknownAgent before logging
        try:
            output = run(agent_id, package)
        except Exception:
            self.invocations.append(
                AgentInvocation(
                    agent_id, package, None, time.monotonic() - started, "error"
                )
            )
            raise
        self.invocations.append(
            AgentInvocation(
                agent_id, package, output, time.monotonic() - started, "ok"
            )
        )
        return output

    def as_connector(self, agent_id: str) -> Callable[[dict], dict]:
        """Expose an agent as a workspace export connector."""
        return lambda package: self.invoke(agent_id, package)

    # -- persistence -----------------------------------------------------------

    def to_document(self) -> str:
        return json.dumps({"agents": self.list_agents()}, indent=2, sort_keys=True)

    @classmethod
    def from_document(
        cls, document: str, implementations: dict[str, Callable] | None = None
    ) -> "AgentRegistry":
        implementations = dict(BUILTIN_STUBS, **(implementations or {}))
        registry = cls()
        data = json.loads(document)
        specs = sorted(
            data.get("agents", []), key=lambda d: d.get("type") != "producer"
        )
        for d in specs:
            if d.get("type") == "producer":
                registry.register(
                    ProducerAgentSpec(
                        id=d["id"],
                        capability=d["capability"],
                        input_contract=d.get("input_contract", []),
                        output_contract=d.get("output_contract", []),
                        implementation=implementations.get(d["capability"]),
                    )
                )
            else:
                registry.register(
                    InterfaceAgentSpec(
                        id=d["id"],
                        service=d["service"],
                        composition=d.get("composition", []),
                        proactive=d.get("proactive", False),
                    )
                )
        return registry


# --- deterministic stub capabilities -----------------------------------------


def token_extractor(package: dict) -> dict:
    """Pseudo entity extraction: capitalized tokens of the intent text and
    of every text-valued entity become entities of the output package."""
    texts = [package.get("intent", "")]
    for e in package.get("entities", []):
        if isinstance(e.get("value"), str):
            texts.append(e["value"])
    tokens: list[str] = []
    for text in texts:
        for raw in text.split():
            token = raw.strip(".,;:!?()[]\"'")
            if token and token[0].isupper() and token not in tokens:
                tokens.append(token)
    return {
        "package_id": package.get("package_id", ""),
        "entities": [{"typology": "derived:text", "value": t} for t in tokens],
        "intent": package.get("intent", ""),
    }


def echo_retriever(package: dict) -> dict:
    return dict(package, echoed=True)


def make_taxonomy_recommender(taxonomy: Taxonomy) -> Callable[[dict], dict]:
    """Recommends sibling taxonomy nodes for every entity's semantic type."""

    def recommend(package: dict) -> dict:
        recommendations = []
        for e in package.get("entities", []):
            path = e.get("typology_path") or []
            if len(path) >= 2:
                for sibling in taxonomy.children(path[-2]):
                    if sibling != path[-1] and sibling not in recommendations:
                        recommendations.append(sibling)
        return {
            "package_id": package.get("package_id", ""),
            "entities": [
                {"typology": "derived:text", "value": r} for r in recommendations
            ],
            "intent": package.get("intent", ""),
        }

    return recommend


def always_fail(package: dict) -> dict:
    raise RuntimeError("injected stub failure")


BUILTIN_STUBS: dict[str, Callable[[dict], dict]] = {
    "token_extractor": token_extractor,
    "echo_retriever": echo_retriever,
    "always_fail": always_fail,
}
