"""Live session service: per-turn scoring, recommendations, feedback capture.

The service shares the batch pipeline's scoring and state-pooling code paths,
so a session replayed over HTTP reproduces the batch numbers bit for bit.
Sessions live in memory; feedback also lands in an append-only JSONL file
that doubles as an auxiliary reward stream for offline fine-tuning.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from pydantic import BaseModel

from .actionspace import ActionSpace, decode_action
from .agents import Agent, select_action
from .alliance import Inventory, ScaleScores, load_inventory, scale_scores, score_turn
from .checkpoint import Checkpoint, agent_from_checkpoint, load_checkpoint
from .corpus import Disorder, Speaker
from .dataset import pair_embedding, pool_state
from .embedding import EmbedderConfig, EmptyText, embed_text

FEEDBACK_FILE = "feedback.jsonl"


class ServiceError(Exception):
    def __init__(self, code: str, message: str, status: int = 400):
        super().__init__(message)
        self.code = code
        self.message = message
        self.status = status


def _err(code: str, message: str, status: int) -> ServiceError:
    return ServiceError(code=code, message=message, status=status)


@dataclass
class TurnRecord:
    speaker: Speaker
    text: str
    topic: int
    alliance: np.ndarray
    scales: ScaleScores


@dataclass
class Recommendation:
    pair_index: int
    topic_id: int
    label: str
    margin: float

    def to_json_dict(self) -> dict:
        return {
            "pair_index": self.pair_index,
            "topic_id": self.topic_id,
            "label": self.label,
            "margin": self.margin,
        }


@dataclass
class FeedbackEntry:
    turn_index: int
    accepted: bool
    rating: int
    reward: float
    timestamp: float
    pair_index: int | None = None  # state pair the rated recommendation was for

    def to_json_dict(self) -> dict:
        return {
            "turn_index": self.turn_index,
            "accepted": self.accepted,
            "rating": self.rating,
            "reward": self.reward,
            "timestamp": self.timestamp,
            "pair_index": self.pair_index,
        }


@dataclass
class LiveSession:
    session_id: str
    disorder: Disorder
    policy_cell: str
    turns: list[TurnRecord] = field(default_factory=list)
    pair_embeddings: list[np.ndarray] = field(default_factory=list)
    pending_therapist: np.ndarray | None = None
    last_patient: np.ndarray | None = None
    pending_recommendation: Recommendation | None = None
    recommendations: list[Recommendation] = field(default_factory=list)
    feedback_log: list[FeedbackEntry] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class FeedbackStore:
    """Append-only JSONL feedback log, reloadable across service restarts."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()

    def append(self, session_id: str, entry: FeedbackEntry) -> None:
        row = {"session_id": session_id, **entry.to_json_dict()}
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as f:
                f.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")

    def load_all(self) -> list[dict]:
        if not self.path.exists():
            return []
        out = []
        with open(self.path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    out.append(json.loads(line))
        return out

    def records_for(self, session_id: str) -> list[dict]:
        return [r for r in self.load_all() if r["session_id"] == session_id]


@dataclass
class LoadedPolicy:
    cell_id: str
    checkpoint: Checkpoint
    agent: Agent | None  # None when provenance does not match the runtime
    provenance_ok: bool
    interpretation_path: Path | None


class ServiceRuntime:
    """Shared immutable assets plus the registry of live sessions."""

    def __init__(
        self,
        cfg: EmbedderConfig,
        inv: Inventory,
        space: ActionSpace,
        policies: dict[str, LoadedPolicy],
        feedback: FeedbackStore,
    ):
        self.cfg = cfg
        self.inv = inv
        self.space = space
        self.policies = policies
        self.feedback = feedback
        self.sessions: dict[str, LiveSession] = {}
        self._registry_lock = threading.Lock()

    def runtime_hashes(self) -> dict[str, str]:
        return {
            "embedder": self.cfg.config_hash(),
            "inventory": self.inv.inventory_hash(),
            "actionspace": self.space.space_hash(),
        }

    # -- session operations -------------------------------------------------

    def create_session(self, disorder: Disorder, policy_cell: str) -> str:
        policy = self.policies.get(policy_cell)
        if policy is None:
            raise _err("UnknownPolicy", f"no policy {policy_cell!r}", 404)
        if not policy.provenance_ok:
            raise _err("ProvenanceMismatch", f"policy {policy_cell!r} was trained under different assets", 409)
        session_id = str(uuid.uuid4())
        with self._registry_lock:
            self.sessions[session_id] = LiveSession(
                session_id=session_id, disorder=disorder, policy_cell=policy_cell
            )
        return session_id

    def _session(self, session_id: str) -> LiveSession:
        session = self.sessions.get(session_id)
        if session is None:
            raise _err("UnknownSession", f"no session {session_id!r}", 404)
        return session

    def add_turn(self, session_id: str, speaker: Speaker, text: str) -> dict:
        session = self._session(session_id)
        policy = self.policies[session.policy_cell]
        with session.lock:
            try:
                emb = embed_text(self.cfg, text)
            except EmptyText as exc:
                raise _err("EmptyText", str(exc), 400) from exc
            alliance = score_turn(self.inv, emb)
            scales = scale_scores(self.inv, alliance)
            topic = decode_action(self.space, emb)[0]
            session.turns.append(
                TurnRecord(speaker=speaker, text=text, topic=topic, alliance=alliance, scales=scales)
            )
            recommendation = None
            if speaker == Speaker.THERAPIST:
                session.pending_therapist = emb
            else:
                if session.pending_therapist is not None:
                    session.pair_embeddings.append(pair_embedding(session.pending_therapist, emb))
                    session.pending_therapist = None
                session.last_patient = emb
                if session.pair_embeddings:
                    recommendation = self._recommend(session, policy)
                    session.pending_recommendation = recommendation
                    session.recommendations.append(recommendation)
            result = {
                "alliance": alliance.tolist(),
                "scales": {"task": scales.task, "bond": scales.bond, "goal": scales.goal},
                "topic": topic,
            }
            if recommendation is not None:
                result["recommendation"] = recommendation.to_json_dict()
            return result

    def _recommend(self, session: LiveSession, policy: LoadedPolicy) -> Recommendation:
        ckpt = policy.checkpoint
        w = ckpt.frame_size
        window = session.pair_embeddings[-w:]
        state = pool_state(window, session.last_patient, ckpt.context_mode)
        action = select_action(policy.agent, state, seed=ckpt.seed)
        topic_id, margin = decode_action(self.space, action)
        return Recommendation(
            pair_index=len(session.pair_embeddings) - 1,
            topic_id=topic_id,
            label=self.space.catalog.label(topic_id),
            margin=margin,
        )

    def record_feedback(self, session_id: str, turn_index: int, accepted: bool, rating: int) -> None:
        session = self._session(session_id)
        with session.lock:
            if not 0 <= turn_index < len(session.turns):
                raise _err("BadIndex", f"turn index {turn_index} out of range", 400)
            if not 1 <= rating <= 5:
                raise _err("BadRating", f"rating {rating} outside 1..5", 400)
            latest = session.recommendations[-1] if session.recommendations else None
            entry = FeedbackEntry(
                turn_index=turn_index,
                accepted=accepted,
                rating=rating,
                reward=(rating - 3) / 2.0,
                timestamp=time.time(),
                pair_index=latest.pair_index if latest else None,
            )
            session.feedback_log.append(entry)
            self.feedback.append(session_id, entry)

    def session_view(self, session_id: str) -> dict:
        session = self._session(session_id)
        policy = self.policies[session.policy_cell]
        with session.lock:
            return {
                "session_id": session.session_id,
                "disorder": session.disorder.value,
                "policy": _policy_descriptor(policy),
                "turns": [
                    {
                        "speaker": t.speaker.value,
                        "text": t.text,
                        "topic": t.topic,
                        "scales": {"task": t.scales.task, "bond": t.scales.bond, "goal": t.scales.goal},
                    }
                    for t in session.turns
                ],
                "pending_recommendation": (
                    session.pending_recommendation.to_json_dict() if session.pending_recommendation else None
                ),
                "recommendations": [r.to_json_dict() for r in session.recommendations],
                "feedback_log": [e.to_json_dict() for e in session.feedback_log],
            }


def _policy_descriptor(policy: LoadedPolicy) -> dict:
    ckpt = policy.checkpoint
    return {
        "id": policy.cell_id,
        "kind": ckpt.kind.value,
        "disorder": ckpt.disorder.value,
        "reward_scale": ckpt.reward_scale.value,
        "label": ckpt.policy_id.row_label,
        "provenance_ok": policy.provenance_ok,
        "has_interpretation": policy.interpretation_path is not None,
    }


def load_runtime(policies_dir: str | Path) -> ServiceRuntime:
    """Load embedder/inventory/actionspace assets and all checkpoints from a
    directory laid out by the train CLI."""
    root = Path(policies_dir)
    with open(root / "embedder.json", encoding="utf-8") as f:
        cfg = EmbedderConfig.from_json_dict(json.load(f))
    inv = load_inventory(root / "inventory.json", cfg)
    with open(root / "actionspace.json", encoding="utf-8") as f:
        space = ActionSpace.from_json_dict(json.load(f))
    runtime_hashes = {
        "embedder": cfg.config_hash(),
        "inventory": inv.inventory_hash(),
        "actionspace": space.space_hash(),
    }
    policies: dict[str, LoadedPolicy] = {}
    for path in sorted(root.glob("*.ckpt.json")):
        ckpt = load_checkpoint(path)
        ok = all(ckpt.hashes.get(k) == v for k, v in runtime_hashes.items())
        cell = ckpt.policy_id.cell_id
        interp = path.with_name(path.name.replace(".ckpt.json", ".interp.json"))
        policies[cell] = LoadedPolicy(
            cell_id=cell,
            checkpoint=ckpt,
            agent=agent_from_checkpoint(ckpt, space) if ok else None,
            provenance_ok=ok,
            interpretation_path=interp if interp.exists() else None,
        )
    return ServiceRuntime(
        cfg=cfg,
        inv=inv,
        space=space,
        policies=policies,
        feedback=FeedbackStore(root / FEEDBACK_FILE),
    )


class CreateSessionBody(BaseModel):
    disorder: str
    policy_id: str


class TurnBody(BaseModel):
    speaker: str
    text: str


class FeedbackBody(BaseModel):
    turn_index: int
    accepted: bool
    rating: int


def create_app(runtime: ServiceRuntime, console_dir: str | Path | None = None):
    """Build the FastAPI app over a loaded runtime."""
    from fastapi import FastAPI
    from fastapi.requests import Request
    from fastapi.responses import JSONResponse

    app = FastAPI(title="dismop", version="0.1.0")

    @app.exception_handler(ServiceError)
    async def _service_error(_request: Request, exc: ServiceError):
        return JSONResponse(status_code=exc.status, content={"error": exc.code, "message": exc.message})

    @app.post("/api/sessions")
    def create_session(body: CreateSessionBody):
        try:
            disorder = Disorder(body.disorder)
        except ValueError as exc:
            raise _err("UnknownDisorder", f"unknown disorder {body.disorder!r}", 400) from exc
        session_id = runtime.create_session(disorder, body.policy_id)
        return {"session_id": session_id}

    @app.post("/api/sessions/{session_id}/turns")
    def add_turn(session_id: str, body: TurnBody):
        try:
            speaker = Speaker(body.speaker)
        except ValueError as exc:
            raise _err("UnknownSpeaker", f"unknown speaker {body.speaker!r}", 400) from exc
        return runtime.add_turn(session_id, speaker, body.text)

    @app.post("/api/sessions/{session_id}/feedback")
    def record_feedback(session_id: str, body: FeedbackBody):
        runtime.record_feedback(session_id, body.turn_index, body.accepted, body.rating)
        return {"ok": True}

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return runtime.session_view(session_id)

    @app.get("/api/policies")
    def list_policies():
        return {
            "policies": [_policy_descriptor(p) for p in runtime.policies.values()],
            "catalog": [
                {"id": tid, "label": label} for tid, label in runtime.space.catalog.topics
            ],
        }

    @app.get("/api/policies/{policy_id}/interpretation")
    def get_interpretation(policy_id: str):
        policy = runtime.policies.get(policy_id)
        if policy is None:
            raise _err("UnknownPolicy", f"no policy {policy_id!r}", 404)
        if policy.interpretation_path is None:
            raise _err(
                "NoInterpretation",
                f"policy {policy_id!r} has no interpretation sidecar; run the interpret command",
                404,
            )
        with open(policy.interpretation_path, encoding="utf-8") as f:
            return json.load(f)

    if console_dir is not None and Path(console_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(console_dir), html=True), name="console")

    return app
