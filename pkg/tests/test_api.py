import json
import shutil

import pytest
from fastapi.testclient import TestClient

from caseflow.api import create_app
from caseflow.errors import BadConfig
from conftest import FIXTURES


@pytest.fixture
def client(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    models = tmp_path / "models"
    models.mkdir()
    for name in (
        "medical.taxonomy.json",
        "patient_care.model.json",
        "patient_care_detailed.model.json",
    ):
        shutil.copy(FIXTURES / name, models / name)
    app = create_app(str(data), str(models))
    with TestClient(app) as c:
        yield c


def start(client, model_id="patient_care", episode_id="ep-api"):
    r = client.post("/episodes", json={
        "model_id": model_id,
        "episode_id": episode_id,
        "initial_values": {"patient-record": "rec-1"},
    })
    assert r.status_code == 200, r.text
    return r.json()


def test_health(client):
    assert client.get("/health").json() == {"status": "ok"}


def test_missing_data_dir_is_bad_config(tmp_path):
    with pytest.raises(BadConfig):
        create_app(str(tmp_path / "nope"))


def test_models_listing_and_validation(client):
    assert client.get("/models").json()["models"] == [
        "patient_care", "patient_care_detailed",
    ]
    r = client.post("/models/patient_care/validate")
    assert r.json()["ok"] is True
    r = client.get("/models/patient_care")
    edges = r.json()["edges"]["diagnosis"]
    assert ["hypothesize_diseases", "confirm_diagnosis", "possible-disease-list"] in edges


def test_unknown_model_maps_to_error_body(client):
    r = client.post("/models/ghost/validate")
    assert r.status_code == 400
    body = r.json()
    assert body["code"] == "PARSE_ERROR"
    assert "ghost" in body["message"]


def test_upload_model_with_seeded_fault_parses_but_fails_validation(client):
    doc = json.loads((FIXTURES / "patient_care.model.json").read_text())
    doc["id"] = "broken"
    doc["root"]["sub_activities"][3]["outcome"] = ["treatment-notes"]  # no final
    r = client.post("/models", json={"model": doc})
    assert r.status_code == 200
    report = client.post("/models/broken/validate").json()
    assert report["ok"] is False
    assert any(e["rule"] == "R3" for e in report["report"]["errors"])


def test_episode_lifecycle(client):
    view = start(client)
    assert view["ready"] == ["examination"]
    client.post("/episodes/ep-api/choose", json={"activity": "examination"})
    ws = client.get("/episodes/ep-api/workspace/examination").json()
    assert ws["activity"] == "examination"
    assert any(e["typology"] == "patient-record" for e in ws["entities"])

    r = client.post("/episodes/ep-api/action", json={
        "activity": "examination",
        "op": "create_text",
        "params": {"text": "pale, sweating", "genre": "annotation"},
    })
    assert r.json()["result"]["value"] == "pale, sweating"

    r = client.post("/episodes/ep-api/complete", json={
        "activity": "examination",
        "goal_values": {"examination-results": ["fever"]},
    })
    view = r.json()
    assert view["status"]["examination"] == "complete"
    assert view["ready"] == ["diagnosis"]
    assert view["bindings"]["examination"] == {"examination-results": ["fever"]}


def test_error_mapping_not_ready(client):
    start(client)
    r = client.post("/episodes/ep-api/choose", json={"activity": "treatment"})
    assert r.status_code == 409
    assert r.json()["code"] == "NOT_READY"


def test_error_mapping_unknown_episode(client):
    r = client.get("/episodes/ghost")
    assert r.status_code == 404
    assert r.json()["code"] == "UNKNOWN_EPISODE"


def test_error_mapping_integrity_rule(client):
    start(client)
    r = client.post("/episodes/ep-api/discretion", json={
        "edit": {"kind": "skip_activity", "target": "follow_up"},
    })
    assert r.status_code == 422
    body = r.json()
    assert body["code"] == "INTEGRITY_ERROR"
    assert body["rule"] == "RemovedFinal"


def test_failure_and_replan_over_http(client):
    start(client, model_id="patient_care_detailed", episode_id="ep-f")
    seq = [
        ("choose", {"activity": "examination"}),
        ("choose", {"activity": "record_symptoms"}),
        ("complete", {"activity": "record_symptoms",
                      "goal_values": {"symptom-list": ["a"]}}),
        ("choose", {"activity": "measure_signs"}),
        ("complete", {"activity": "measure_signs",
                      "goal_values": {"sign-readings": ["t"]}}),
        ("choose", {"activity": "compile_findings"}),
        ("complete", {"activity": "compile_findings",
                      "goal_values": {"examination-results": ["a"]}}),
        ("choose", {"activity": "diagnosis"}),
        ("choose", {"activity": "hypothesize_diseases"}),
        ("complete", {"activity": "hypothesize_diseases",
                      "goal_values": {"possible-disease-list": ["flu"]}}),
        ("choose", {"activity": "recommend_tests"}),
        ("complete", {"activity": "recommend_tests",
                      "goal_values": {"test-results-spec": ["x"]}}),
        ("choose", {"activity": "confirm_diagnosis"}),
    ]
    for verb, body in seq:
        r = client.post(f"/episodes/ep-f/{verb}", json=body)
        assert r.status_code == 200, r.text
    r = client.post("/episodes/ep-f/fail", json={
        "failed": "confirm_diagnosis", "cause": "measure_signs",
    })
    assert r.status_code == 200
    body = r.json()
    assert body["replan"]["affected"] == [
        "measure_signs", "compile_findings", "hypothesize_diseases",
        "recommend_tests", "confirm_diagnosis",
    ]
    assert body["episode"]["ready"] == ["measure_signs"]
    assert body["episode"]["attempts"]["measure_signs"] == 2


def test_event_log_and_sse_agree(client):
    start(client)
    client.post("/episodes/ep-api/choose", json={"activity": "examination"})
    log = client.get("/episodes/ep-api/log").json()["events"]
    assert [e["kind"] for e in log] == ["started", "chose_activity"]

    r = client.get("/episodes/ep-api/events")
    blocks = [b for b in r.text.split("\n\n") if b.strip()]
    payloads = [
        json.loads(line[len("data: "):])
        for b in blocks
        for line in b.split("\n")
        if line.startswith("data: ")
    ]
    assert payloads == log


def test_sse_resumes_from_since(client):
    start(client)
    client.post("/episodes/ep-api/choose", json={"activity": "examination"})
    r = client.get("/episodes/ep-api/events", params={"since": 1})
    assert "chose_activity" in r.text
    assert '"kind": "started"' not in r.text
    # each event is delivered exactly once
    assert r.text.count("data: ") == 1


def test_archive_endpoints(client):
    start(client)
    client.post("/episodes/ep-api/choose", json={"activity": "examination"})
    client.post("/episodes/ep-api/complete", json={
        "activity": "examination",
        "goal_values": {"examination-results": ["fever"]},
    })
    assert client.get("/archive/episodes").json()["episodes"] == ["ep-api"]
    r = client.post("/retrieve", json={
        "probe": {"elements": [{
            "typology_path": ["clinical-entity", "record"], "value": "rec-1",
        }]},
        "k": 3,
    })
    assert r.status_code == 200
    ranked = r.json()["ranked"]
    assert ranked and ranked[0]["fragment_id"] == "ep-api:examination:1"


def test_agent_endpoints(client):
    r = client.post("/agents", json={"spec": {
        "id": "extract", "type": "producer", "capability": "token_extractor",
        "input_contract": ["package_id"], "output_contract": ["entities"],
    }})
    assert r.json() == {"registered": "extract"}
    r = client.post("/agents", json={"spec": {
        "id": "svc", "type": "interface", "composition": ["extract"],
    }})
    assert r.status_code == 200
    out = client.post("/agents/svc/invoke", json={
        "package": {"package_id": "p", "intent": "find Fever and Chills"},
    }).json()["output"]
    assert [e["value"] for e in out["entities"]] == ["Fever", "Chills"]


def test_agent_failure_maps_to_constituent(client):
    client.post("/agents", json={"spec": {
        "id": "doomed", "type": "producer", "capability": "always_fail",
    }})
    r = client.post("/agents/doomed/invoke", json={"package": {}})
    assert r.status_code == 502
    body = r.json()
    assert body["code"] == "CONSTITUENT_FAILURE"
    assert body["constituent"] == "doomed"


def test_duplicate_agent_registration_conflict(client):
    spec = {"id": "a", "type": "producer", "capability": "echo_retriever"}
    assert client.post("/agents", json={"spec": spec}).status_code == 200
    r = client.post("/agents", json={"spec": spec})
    assert r.status_code == 409
    assert r.json()["code"] == "DUPLICATE_ID"
