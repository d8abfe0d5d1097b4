"""Single-fault variants of the patient-care fixture.

Each mutant seeds exactly one structural fault. Some faults force a second
rule to fire (an empty Init set cannot exist without a cycle, and vice
versa a cycle through every entry point empties Init); those forced
co-reports are listed in `allowed_extra` and anything else is a test
failure.
"""

import copy
import json

from conftest import fixture_model_doc


def _find(doc, activity_id):
    stack = [doc["root"]]
    while stack:
        node = stack.pop()
        if node["id"] == activity_id:
            return node
        stack.extend(node.get("sub_activities", []))
    raise KeyError(activity_id)


def _tool(ref):
    return {"ref": ref, "role": "tool"}


class Mutant:
    def __init__(self, name, rule, activities, transform, allowed_extra=()):
        self.name = name
        self.rule = rule
        self.activities = set(activities)
        self.transform = transform
        self.allowed_extra = set(allowed_extra)

    def document(self):
        doc = copy.deepcopy(fixture_model_doc("patient_care"))
        self.transform(doc)
        return json.dumps(doc)


def _r1_drop_shared_tool_treatment(doc):
    node = _find(doc, "treatment")
    node["entities"] = [e for e in node["entities"] if e["ref"] != "patient-record"]


def _r1_drop_all_tools_hypothesize(doc):
    node = _find(doc, "hypothesize_diseases")
    node["entities"] = [e for e in node["entities"] if e.get("role") != "tool"]


def _r1_drop_shared_tool_diagnosis(doc):
    node = _find(doc, "diagnosis")
    node["entities"] = [e for e in node["entities"] if e["ref"] != "patient-record"]


def _r2_cycle_hypothesize_recommend(doc):
    _find(doc, "hypothesize_diseases")["entities"].append(
        _tool("outcome_of:recommend_tests")
    )


def _r3_no_final(doc):
    _find(doc, "follow_up")["outcome"] = ["treatment-notes"]


def _r3_two_finals(doc):
    _find(doc, "treatment")["outcome"] = ["care-summary"]


def _r4_root_level_cycle(doc):
    _find(doc, "treatment")["entities"].append(_tool("outcome_of:follow_up"))


def _r4_confirm_feeds_hypothesize(doc):
    _find(doc, "hypothesize_diseases")["entities"].append(
        _tool("outcome_of:confirm_diagnosis")
    )


def _r5_authored_edges_missing_one(doc):
    doc["edges"] = {
        "diagnosis": [
            {
                "from": "hypothesize_diseases",
                "to": "recommend_tests",
                "via": "possible-disease-list",
            },
            {
                "from": "recommend_tests",
                "to": "confirm_diagnosis",
                "via": "test-results-spec",
            },
        ]
    }


def _r5_authored_edges_wrong_via(doc):
    doc["edges"] = {
        "patient_care": [
            {"from": "examination", "to": "diagnosis", "via": "care-summary"},
            {"from": "diagnosis", "to": "treatment", "via": "confirmed-disease-list"},
            {"from": "treatment", "to": "follow_up", "via": "treatment-notes"},
        ]
    }


def _r6_childless_composite(doc):
    node = _find(doc, "treatment")
    node["kind"] = "composite"
    node["sub_activities"] = []


def _r6_empty_outcome(doc):
    _find(doc, "examination")["outcome"] = []


def _r6_simple_with_children(doc):
    node = _find(doc, "treatment")
    node["sub_activities"] = [
        {
            "id": "administer",
            "kind": "simple",
            "entities": [_tool("patient-record")],
            "outcome": ["treatment-notes"],
        }
    ]


MUTATION_CORPUS = [
    Mutant("r1-treatment-no-shared-tool", "R1", ["treatment"],
           _r1_drop_shared_tool_treatment),
    Mutant("r1-hypothesize-no-tools", "R1", ["hypothesize_diseases"],
           _r1_drop_all_tools_hypothesize),
    Mutant("r1-diagnosis-no-shared-tool", "R1", ["diagnosis"],
           _r1_drop_shared_tool_diagnosis,
           # losing the shared tool also cuts its children off from it
           allowed_extra=[("R1", "recommend_tests")]),
    Mutant("r2-no-entry-point", "R2", ["diagnosis"],
           _r2_cycle_hypothesize_recommend,
           # an empty Init set cannot exist without a dependency cycle
           allowed_extra=[("R4", "hypothesize_diseases"),
                          ("R4", "recommend_tests")]),
    Mutant("r3-no-final", "R3", ["patient_care"], _r3_no_final),
    Mutant("r3-two-finals", "R3", ["patient_care"], _r3_two_finals),
    Mutant("r4-treatment-followup-cycle", "R4", ["treatment", "follow_up"],
           _r4_root_level_cycle),
    Mutant("r4-confirm-feeds-hypothesize", "R4",
           ["hypothesize_diseases", "recommend_tests", "confirm_diagnosis"],
           _r4_confirm_feeds_hypothesize,
           # the cycle covers every entry point, so Init is empty as well
           allowed_extra=[("R2", "diagnosis")]),
    Mutant("r5-authored-edge-missing", "R5", ["diagnosis"],
           _r5_authored_edges_missing_one),
    Mutant("r5-authored-via-wrong", "R5", ["patient_care"],
           _r5_authored_edges_wrong_via),
    Mutant("r6-childless-composite", "R6", ["treatment"],
           _r6_childless_composite),
    Mutant("r6-empty-outcome", "R6", ["examination"], _r6_empty_outcome),
    Mutant("r6-simple-with-children", "R6", ["treatment"],
           _r6_simple_with_children),
]
