"""Network service exposing models, episodes, the archive and the agent pool.

One endpoint per engine operation; bodies are the JSON forms the owning
modules define. Mutations on one episode are serialized with a per-episode
lock. A server-sent event stream replays the episode log from any sequence
number, so a client can reconnect and resume without losing events.
"""

from __future__ import annotations

import asyncio
import json
import threading
from pathlib import Path

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import adaptation, engine
from .agents import (
    AgentRegistry,
    InterfaceAgentSpec,
    ProducerAgentSpec,
    BUILTIN_STUBS,
)
from .archive import EpisodeArchive
from .errors import BadConfig, CaseflowError, ParseError, UnknownEpisode
from .model import parse_model, validate_model
from .taxonomy import load_taxonomy


class ServiceState:
    def __init__(self, data_dir: str, model_dir: str | None = None):
        self.data_dir = Path(data_dir)
        if not self.data_dir.is_dir():
            raise BadConfig(f"data directory does not exist: {data_dir}")
        self.archive = EpisodeArchive(self.data_dir)
        self.taxonomy_doc: str | None = None
        self.model_docs: dict[str, str] = {}
        self.episodes: dict[str, engine.EpisodeState] = {}
        self.locks: dict[str, threading.Lock] = {}
        self.agents = AgentRegistry()
        if model_dir:
            model_path = Path(model_dir)
            if not model_path.is_dir():
                raise BadConfig(f"model directory does not exist: {model_dir}")
            for p in sorted(model_path.glob("*.taxonomy.json")):
                self.taxonomy_doc = p.read_text()
            for p in sorted(model_path.glob("*.model.json")):
                doc = p.read_text()
                self.model_docs[json.loads(doc)["id"]] = doc

    def build_model(self, model_id: str):
        if self.taxonomy_doc is None:
            raise BadConfig("no taxonomy loaded")
        if model_id not in self.model_docs:
            raise ParseError(f"unknown model: {model_id}")
        # a fresh taxonomy per parse keeps model typologies isolated
        return parse_model(self.model_docs[model_id], load_taxonomy(self.taxonomy_doc))

    def episode(self, episode_id: str) -> engine.EpisodeState:
        try:
            return self.episodes[episode_id]
        except KeyError:
            raise UnknownEpisode(f"unknown episode: {episode_id}") from None

    def lock(self, episode_id: str) -> threading.Lock:
        return self.locks.setdefault(episode_id, threading.Lock())


def episode_view(state: engine.EpisodeState) -> dict:
    return {
        "episode_id": state.episode_id,
        "model_id": state.base_model_id,
        "root": state.model.root_id,
        "status": {a: s.value for a, s in sorted(state.status.items())},
        "ready": [c["id"] for c in engine.ready_choices(state)],
        "bindings": {a: b for a, b in sorted(state.bindings.items())},
        "attempts": dict(sorted(state.attempts.items())),
        "terminated": state.terminated,
        "activities": {
            a.id: {
                "id": a.id,
                "name": a.name,
                "kind": a.kind,
                "parent": a.super_activity,
                "entities": a.entities,
                "outcome": list(a.outcome),
                "sub_activities": list(a.sub_activities),
            }
            for a in state.model.activities.values()
        },
    }


def create_app(data_dir: str, model_dir: str | None = None) -> FastAPI:
    svc = ServiceState(data_dir, model_dir)
    app = FastAPI(title="caseflow")
    app.state.svc = svc

    @app.exception_handler(CaseflowError)
    async def on_error(request: Request, exc: CaseflowError):
        body = {"code": exc.code, "message": exc.message}
        if hasattr(exc, "rule"):
            body["rule"] = exc.rule
        if hasattr(exc, "constituent"):
            body["constituent"] = exc.constituent
        return JSONResponse(status_code=exc.http_status, content=body)

    @app.get("/health")
    async def health():
        return {"status": "ok"}

    # -- models ---------------------------------------------------------

    @app.get("/models")
    async def list_models():
        return {"models": sorted(svc.model_docs)}

    @app.post("/models")
    async def upload_model(body: dict):
        doc = json.dumps(body["model"]) if isinstance(body.get("model"), dict) else body["model"]
        if body.get("taxonomy") is not None:
            svc.taxonomy_doc = (
                json.dumps(body["taxonomy"])
                if isinstance(body["taxonomy"], dict)
                else body["taxonomy"]
            )
        model_id = json.loads(doc)["id"]
        svc.model_docs[model_id] = doc
        svc.build_model(model_id)  # must parse
        return {"model_id": model_id}

    @app.post("/models/{model_id}/validate")
    async def validate(model_id: str):
        report = validate_model(svc.build_model(model_id))
        return {"ok": report.ok, "report": report.to_dict()}

    @app.get("/models/{model_id}")
    async def get_model(model_id: str):
        model = svc.build_model(model_id)
        return {
            "model_id": model_id,
            "document": json.loads(svc.model_docs[model_id]),
            "edges": {
                c.id: [e.as_tuple() for e in model.derive_edges(c.id)]
                for c in model.composites()
            },
        }

    # -- episodes ---------------------------------------------------------

    @app.post("/episodes")
    async def create_episode(body: dict):
        model = svc.build_model(body["model_id"])
        state = engine.start_episode(
            model,
            subject=body.get("subject"),
            initial_values=body.get("initial_values"),
            episode_id=body.get("episode_id"),
            archive=svc.archive,
        )
        svc.episodes[state.episode_id] = state
        return episode_view(state)

    @app.get("/episodes")
    async def list_episodes():
        return {"episodes": sorted(svc.episodes)}

    @app.get("/episodes/{episode_id}")
    async def get_episode(episode_id: str):
        return episode_view(svc.episode(episode_id))

    @app.get("/episodes/{episode_id}/choices")
    async def choices(episode_id: str):
        return {"choices": engine.ready_choices(svc.episode(episode_id))}

    @app.post("/episodes/{episode_id}/choose")
    async def choose(episode_id: str, body: dict):
        state = svc.episode(episode_id)
        with svc.lock(episode_id):
            engine.choose_activity(state, body["activity"])
        return episode_view(state)

    @app.get("/episodes/{episode_id}/workspace/{activity}")
    async def workspace(episode_id: str, activity: str):
        state = svc.episode(episode_id)
        ws = state.workspaces.get(activity)
        if ws is None:
            raise UnknownEpisode(f"no open workspace for {activity}")
        return ws.to_dict()

    @app.post("/episodes/{episode_id}/action")
    async def action(episode_id: str, body: dict):
        state = svc.episode(episode_id)
        with svc.lock(episode_id):
            result = engine.apply_workspace_action(
                state,
                body["activity"],
                body["op"],
                body.get("inputs", []),
                body.get("params", {}),
            )
        return {"result": result, "workspace": state.workspaces[body["activity"]].to_dict()}

    @app.post("/episodes/{episode_id}/complete")
    async def complete(episode_id: str, body: dict):
        state = svc.episode(episode_id)
        with svc.lock(episode_id):
            engine.complete_activity(
                state,
                body["activity"],
                body.get("goal_values"),
                dummy=body.get("dummy", False),
            )
        return episode_view(state)

    @app.post("/episodes/{episode_id}/fail")
    async def fail(episode_id: str, body: dict):
        state = svc.episode(episode_id)
        with svc.lock(episode_id):
            _, record = adaptation.declare_failure(
                state, body["failed"], body["cause"]
            )
        return {"replan": record.to_dict(), "episode": episode_view(state)}

    @app.post("/episodes/{episode_id}/discretion")
    async def discretion(episode_id: str, body: dict):
        state = svc.episode(episode_id)
        with svc.lock(episode_id):
            adaptation.apply_discretion(
                state, adaptation.DiscretionEdit.from_dict(body["edit"])
            )
        return episode_view(state)

    @app.get("/episodes/{episode_id}/log")
    async def event_log(episode_id: str):
        state = svc.episode(episode_id)
        return {"events": [e.to_dict() for e in state.log]}

    @app.get("/episodes/{episode_id}/events")
    async def events(episode_id: str, since: int = 0, follow: bool = False):
        state = svc.episode(episode_id)

        async def stream():
            last = since
            idle = 0
            while True:
                batch = [e for e in state.log if e.seq > last]
                for event in batch:
                    last = event.seq
                    yield (
                        f"id: {event.seq}\n"
                        f"event: episode\n"
                        f"data: {json.dumps(event.to_dict(), sort_keys=True)}\n\n"
                    )
                if not follow:
                    break
                if state.terminated and not batch:
                    break
                idle = min(idle + 1, 20)
                await asyncio.sleep(0.05 * idle)

        return StreamingResponse(stream(), media_type="text/event-stream")

    # -- archive ---------------------------------------------------------

    @app.get("/archive/episodes")
    async def archived():
        return {"episodes": svc.archive.episode_ids()}

    @app.get("/archive/episodes/{episode_id}")
    async def reconstruct(episode_id: str):
        return svc.archive.reconstruct_episode(episode_id)

    @app.post("/retrieve")
    async def retrieve(body: dict):
        result = svc.archive.retrieve_similar(
            body["probe"], int(body.get("k", 5)), body.get("include_zero", False)
        )
        return result.to_dict()

    # -- agents ---------------------------------------------------------

    @app.get("/agents")
    async def list_agents():
        return {"agents": svc.agents.list_agents()}

    @app.post("/agents")
    async def register_agent(body: dict):
        spec = body["spec"]
        if spec.get("type") == "producer":
            svc.agents.register(
                ProducerAgentSpec(
                    id=spec["id"],
                    capability=spec["capability"],
                    input_contract=spec.get("input_contract", []),
                    output_contract=spec.get("output_contract", []),
                    implementation=BUILTIN_STUBS.get(spec["capability"]),
                )
            )
        else:
            svc.agents.register(
                InterfaceAgentSpec(
                    id=spec["id"],
                    service=spec.get("service", spec["id"]),
                    composition=spec.get("composition", []),
                    proactive=spec.get("proactive", False),
                )
            )
        return {"registered": spec["id"]}

    @app.post("/agents/{agent_id}/invoke")
    async def invoke_agent(agent_id: str, body: dict):
        return {"output": svc.agents.invoke(agent_id, body.get("package", {}))}

    return app


def serve(data_dir: str, model_dir: str | None, host: str, port: int) -> None:
    import uvicorn

    uvicorn.run(create_app(data_dir, model_dir), host=host, port=port)
