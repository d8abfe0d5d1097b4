import json
import random
from pathlib import Path

import pytest

from caseflow import engine
from caseflow.archive import EpisodeArchive
from caseflow.model import parse_model
from caseflow.taxonomy import load_taxonomy

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


def load_fixture_taxonomy():
    return load_taxonomy((FIXTURES / "medical.taxonomy.json").read_text())


def load_fixture_model(name="patient_care"):
    taxonomy = load_fixture_taxonomy()
    return parse_model((FIXTURES / f"{name}.model.json").read_text(), taxonomy)


def fixture_model_doc(name="patient_care"):
    return json.loads((FIXTURES / f"{name}.model.json").read_text())


@pytest.fixture
def taxonomy():
    return load_fixture_taxonomy()


@pytest.fixture
def care_model():
    return load_fixture_model("patient_care")


@pytest.fixture
def detailed_model():
    return load_fixture_model("patient_care_detailed")


@pytest.fixture
def archive(tmp_path):
    return EpisodeArchive(tmp_path / "data")


# --- random model generation ------------------------------------------------
#
# Models are built as documents and parsed through the normal loader, so the
# generator cannot accidentally bypass reference resolution. Every activity
# shares one common tool (satisfying R1), sibling dependencies are forward
# edges i -> j over declaration order (acyclic by construction), and the
# last sibling is the final activity.

GENERIC_TAXONOMY = {
    "nodes": [
        {"id": "thing", "parent": None},
        {"id": "artifact", "parent": "thing"},
        {"id": "report", "parent": "artifact"},
    ],
    "typologies": [
        {
            "id": "common-tool",
            "category": "tool",
            "semantic_type": "artifact",
            "value_kind": "reference",
        }
    ],
}


def random_model(rng: random.Random, max_activities=12, max_depth=3, chain=False):
    """Generate a random valid model document + its taxonomy.

    With chain=True every non-final sibling gets at least one outgoing
    edge, so the final activity is reachable from all siblings at every
    level.
    """
    taxonomy_doc = json.loads(json.dumps(GENERIC_TAXONOMY))
    counter = {"n": 0}

    def next_id():
        counter["n"] += 1
        return f"a{counter['n']}"

    def outcome_typology(aid):
        tid = f"out-{aid}"
        taxonomy_doc["typologies"].append(
            {
                "id": tid,
                "category": "outcome",
                "semantic_type": "report",
                "value_kind": "text",
            }
        )
        return tid

    def budget_left():
        return max_activities - counter["n"]

    def make_activity(depth, force_composite=False):
        aid = next_id()
        can_compose = depth < max_depth and budget_left() >= 2
        composite = force_composite or (can_compose and rng.random() < 0.4)
        if not composite:
            return {
                "id": aid,
                "kind": "simple",
                "entities": [{"ref": "common-tool", "role": "tool"}],
                "outcome": [outcome_typology(aid)],
            }
        n_children = rng.randint(2, min(4, budget_left()))
        children = [make_activity(depth + 1) for _ in range(n_children)]
        # forward random DAG over the children (acyclic by construction)
        edges = {
            (i, j) for j in range(1, n_children) for i in range(j)
            if rng.random() < 0.5
        }
        if chain:
            # every non-final sibling must reach the final one
            for i in range(n_children - 1):
                if not any((i, j) in edges for j in range(i + 1, n_children)):
                    edges.add((i, rng.randint(i + 1, n_children - 1)))
        for i, j in sorted(edges):
            children[j]["entities"].append(
                {"ref": f"outcome_of:{children[i]['id']}", "role": "tool"}
            )
        final = children[-1]
        return {
            "id": aid,
            "kind": "composite",
            "entities": [{"ref": "common-tool", "role": "tool"}],
            "outcome": list(final["outcome"]),
            "sub_activities": children,
        }

    root = make_activity(1, force_composite=rng.random() < 0.9 and max_activities >= 3)
    doc = {"id": f"model-{rng.randint(0, 10**9)}", "root": root}
    return doc, taxonomy_doc


def build_random_model(rng: random.Random, **kwargs):
    doc, taxonomy_doc = random_model(rng, **kwargs)
    taxonomy = load_taxonomy(json.dumps(taxonomy_doc))
    return parse_model(json.dumps(doc), taxonomy)


# --- oracles -----------------------------------------------------------------


def oracle_ready_set(state):
    """Set comprehension over the definition, ignoring the engine's own
    bookkeeping: ready iff pending-or-ready, parent active, supports done."""
    model = state.model
    complete = {a for a, s in state.status.items() if s.value == "complete"}
    out = set()
    for aid in model.activities:
        s = state.status.get(aid)
        if s is None or s.value in ("active", "complete", "failed"):
            continue
        a = model.activities[aid]
        if a.super_activity is None:
            # a not-yet-started simple root is the single startable choice
            out.add(aid)
            continue
        if state.status.get(a.super_activity) is not engine.ACTIVE:
            continue
        if model.support_set(aid) <= complete:
            out.add(aid)
    return out


def random_walk(state, rng, check=None):
    """Drive the episode to termination with random choices + dummy values."""
    steps = 0
    while not state.terminated:
        choices = engine.ready_choices(state)
        if not choices:
            break
        pick = rng.choice(choices)["id"]
        engine.choose_activity(state, pick)
        if check:
            check(state)
        if state.model.activities[pick].kind == "simple":
            engine.complete_activity(state, pick, dummy=True)
            if check:
                check(state)
        steps += 1
        assert steps < 500, "walk did not terminate"
    return state
