"""Transcripts to RL transitions: framed states, centroid actions, rewards.

A state is the mean of the last W pair embeddings (a pair embedding is the
mean of its therapist and patient turn embeddings); the action is the
centroid of the topic the therapist opens the next pair with; the reward is
the alliance scale score of the patient's response in that next pair.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator

import numpy as np

from .actionspace import ActionSpace, decode_action, encode_topic
from .alliance import Inventory, Scale, scale_scores, score_turn
from .corpus import Corpus, SessionTranscript, SplitSpec, SplitUnit, Turn, realign_pairs
from .embedding import EmbedderConfig, embed_text

DEFAULT_FRAME_SIZE = 10
DEFAULT_BATCH_SIZE = 32


class ContextMode(str, Enum):
    HISTORY_MEAN = "history_mean"
    HISTORY_MEAN_PLUS_LAST_PATIENT = "history_mean_plus_last_patient"


class DatasetError(Exception):
    pass


class UnlabeledTurn(DatasetError):
    pass


class EmptyDataset(DatasetError):
    pass


@dataclass(frozen=True)
class BuildSpec:
    frame_size: int = DEFAULT_FRAME_SIZE
    reward: Scale = Scale.TASK
    context_mode: ContextMode = ContextMode.HISTORY_MEAN
    prelabel: bool = True

    def __post_init__(self) -> None:
        if self.frame_size < 1:
            raise DatasetError(f"frame_size must be >= 1, got {self.frame_size}")


@dataclass(frozen=True)
class TransitionMeta:
    session_id: str
    pair_index: int
    current_topic: int
    action_topic: int


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    meta: TransitionMeta


@dataclass(frozen=True)
class TransitionBatch:
    states: np.ndarray  # (B, d_s)
    actions: np.ndarray  # (B, d_a)
    rewards: np.ndarray  # (B,)
    next_states: np.ndarray  # (B, d_s)
    dones: np.ndarray  # (B,) float64 0/1
    indices: tuple[int, ...]

    @property
    def size(self) -> int:
        return self.states.shape[0]


def pair_embedding(therapist_emb: np.ndarray, patient_emb: np.ndarray) -> np.ndarray:
    return (therapist_emb + patient_emb) / 2.0


def pool_state(
    pair_embeddings: list[np.ndarray],
    last_patient_emb: np.ndarray | None,
    mode: ContextMode,
) -> np.ndarray:
    """Mean-pool a window of pair embeddings, optionally concatenating the
    latest patient-turn embedding. Shared by the batch builder and the live
    service so both paths produce bit-identical states."""
    base = np.mean(np.stack(pair_embeddings), axis=0)
    if mode == ContextMode.HISTORY_MEAN:
        return base
    if last_patient_emb is None:
        raise DatasetError("context mode requires the latest patient embedding")
    return np.concatenate([base, last_patient_emb])


def _therapist_topic(
    turn: Turn,
    emb: np.ndarray,
    space: ActionSpace,
    prelabel: bool,
    session_id: str,
) -> int:
    if turn.topic is not None:
        return turn.topic
    if not prelabel:
        raise UnlabeledTurn(f"session {session_id}: therapist turn without topic label")
    topic_id, _ = decode_action(space, emb)
    return topic_id


def _session_transitions(
    session: SessionTranscript,
    inv: Inventory,
    space: ActionSpace,
    cfg: EmbedderConfig,
    spec: BuildSpec,
) -> list[Transition]:
    w = spec.frame_size
    pairs = realign_pairs(session)
    n_pairs = len(pairs)
    if n_pairs < w + 1:
        return []
    ther_embs = [embed_text(cfg, t.text) for t, _ in pairs]
    pat_embs = [embed_text(cfg, p.text) for _, p in pairs]
    topics = [
        _therapist_topic(pairs[t][0], ther_embs[t], space, spec.prelabel, session.session_id)
        for t in range(n_pairs)
    ]
    pair_embs = [pair_embedding(ther_embs[t], pat_embs[t]) for t in range(n_pairs)]

    out = []
    for t in range(w - 1, n_pairs - 1):
        state = pool_state(pair_embs[t - w + 1 : t + 1], pat_embs[t], spec.context_mode)
        next_state = pool_state(pair_embs[t - w + 2 : t + 2], pat_embs[t + 1], spec.context_mode)
        action_topic = topics[t + 1]
        reward = scale_scores(inv, score_turn(inv, pat_embs[t + 1])).by_scale(spec.reward)
        out.append(
            Transition(
                state=state,
                action=encode_topic(space, action_topic),
                reward=reward,
                next_state=next_state,
                done=(t + 1 == n_pairs - 1),
                meta=TransitionMeta(
                    session_id=session.session_id,
                    pair_index=t,
                    current_topic=topics[t],
                    action_topic=action_topic,
                ),
            )
        )
    return out


def build_transitions(
    corpus: Corpus,
    inv: Inventory,
    space: ActionSpace,
    cfg: EmbedderConfig,
    spec: BuildSpec | None = None,
) -> list[Transition]:
    """Build all transitions, ordered by (session order, pair index).

    Sessions with fewer than frame_size + 1 pairs contribute nothing.
    """
    spec = spec or BuildSpec()
    out: list[Transition] = []
    for session in corpus.sessions:
        out.extend(_session_transitions(session, inv, space, cfg, spec))
    return out


def expected_transition_count(corpus: Corpus, frame_size: int = DEFAULT_FRAME_SIZE) -> int:
    """sum over sessions of max(0, pairs - frame_size)."""
    return sum(max(0, len(realign_pairs(s)) - frame_size) for s in corpus.sessions)


def frame_topic_history(
    corpus: Corpus,
    space: ActionSpace,
    cfg: EmbedderConfig,
    spec: BuildSpec | None = None,
) -> dict[tuple[str, int], list[int]]:
    """(session_id, pair_index) -> the frame's therapist topics, oldest first.

    pair_index matches TransitionMeta.pair_index, so the result aligns
    one-to-one with build_transitions output on the same corpus and spec.
    """
    spec = spec or BuildSpec()
    w = spec.frame_size
    out: dict[tuple[str, int], list[int]] = {}
    for session in corpus.sessions:
        pairs = realign_pairs(session)
        if len(pairs) < w + 1:
            continue
        topics = [
            _therapist_topic(pairs[t][0], embed_text(cfg, pairs[t][0].text), space, spec.prelabel, session.session_id)
            for t in range(len(pairs))
        ]
        for t in range(w - 1, len(pairs) - 1):
            out[(session.session_id, t)] = topics[t - w + 1 : t + 1]
    return out


def stack_batch(transitions: list[Transition], indices: list[int]) -> TransitionBatch:
    sel = [transitions[i] for i in indices]
    return TransitionBatch(
        states=np.stack([t.state for t in sel]),
        actions=np.stack([t.action for t in sel]),
        rewards=np.array([t.reward for t in sel], dtype=np.float64),
        next_states=np.stack([t.next_state for t in sel]),
        dones=np.array([1.0 if t.done else 0.0 for t in sel], dtype=np.float64),
        indices=tuple(indices),
    )


def sample_batches(
    transitions: list[Transition],
    batch_size: int = DEFAULT_BATCH_SIZE,
    epoch_seed: int = 0,
) -> Iterator[TransitionBatch]:
    """Seeded shuffle, then ceil(N / batch_size) batches; the last may be short."""
    n = len(transitions)
    if n == 0:
        raise EmptyDataset("no transitions to sample")
    rng = np.random.Generator(np.random.PCG64(epoch_seed))
    perm = [int(i) for i in rng.permutation(n)]
    for start in range(0, n, batch_size):
        yield stack_batch(transitions, perm[start : start + batch_size])


def split_transitions(
    transitions: list[Transition], spec: SplitSpec
) -> tuple[list[Transition], list[Transition]]:
    """Transition-level split counterpart of corpus.split_sessions."""
    if spec.unit != SplitUnit.TRANSITION:
        raise DatasetError("split_transitions only splits by transition")
    n = len(transitions)
    if n < 2:
        raise EmptyDataset(f"need at least 2 transitions to split, got {n}")
    rng = np.random.Generator(np.random.PCG64(spec.split_seed))
    order = rng.permutation(n)
    n_train = min(max(int(round(spec.train_fraction * n)), 1), n - 1)
    train_idx = sorted(int(i) for i in order[:n_train])
    test_idx = sorted(int(i) for i in order[n_train:])
    return [transitions[i] for i in train_idx], [transitions[i] for i in test_idx]


@dataclass(frozen=True)
class TransitionDataset:
    """Transitions plus everything needed to train and serve against them."""

    transitions: tuple[Transition, ...]
    space: ActionSpace
    embedder_hash: str
    inventory_hash: str
    frame_size: int
    reward: Scale
    context_mode: ContextMode

    @property
    def state_dim(self) -> int:
        return self.transitions[0].state.shape[0]

    @property
    def action_dim(self) -> int:
        return self.space.dim

    def __len__(self) -> int:
        return len(self.transitions)


def make_dataset(
    corpus: Corpus,
    inv: Inventory,
    space: ActionSpace,
    cfg: EmbedderConfig,
    spec: BuildSpec | None = None,
) -> TransitionDataset:
    spec = spec or BuildSpec()
    transitions = build_transitions(corpus, inv, space, cfg, spec)
    if not transitions:
        raise EmptyDataset("corpus produced no transitions")
    return TransitionDataset(
        transitions=tuple(transitions),
        space=space,
        embedder_hash=cfg.config_hash(),
        inventory_hash=inv.inventory_hash(),
        frame_size=spec.frame_size,
        reward=spec.reward,
        context_mode=spec.context_mode,
    )


def apply_feedback_rewards(
    transitions: list[Transition], feedback_records: list[dict]
) -> list[Transition]:
    """Override transition rewards with recorded therapist feedback.

    Records are the service's feedback JSONL rows; rows carrying a
    pair_index replace the reward of the matching (session_id, pair_index)
    transition with their normalized rating. Fine-tuning feeds the result
    back into train_policy. Override is all-or-nothing per transition.
    """
    overrides: dict[tuple[str, int], float] = {}
    for r in feedback_records:
        if r.get("pair_index") is None:
            continue
        overrides[(str(r["session_id"]), int(r["pair_index"]))] = float(r["reward"])
    out = []
    for t in transitions:
        key = (t.meta.session_id, t.meta.pair_index)
        if key in overrides:
            t = Transition(
                state=t.state,
                action=t.action,
                reward=overrides[key],
                next_state=t.next_state,
                done=t.done,
                meta=t.meta,
            )
        out.append(t)
    return out


TRANSITIONS_SCHEMA = "dismop-transitions/1"


def write_transitions_cache(dataset: TransitionDataset, path: str | Path) -> None:
    """Canonical JSONL cache: a key header line, then one transition per line."""
    header = {
        "schema": TRANSITIONS_SCHEMA,
        "key": {
            "embedder": dataset.embedder_hash,
            "inventory": dataset.inventory_hash,
            "actionspace": dataset.space.space_hash(),
            "frame_size": dataset.frame_size,
            "reward": dataset.reward.value,
            "context_mode": dataset.context_mode.value,
        },
    }
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")) + "\n")
        for t in dataset.transitions:
            row = {
                "state": t.state.tolist(),
                "action": t.action.tolist(),
                "reward": t.reward,
                "next_state": t.next_state.tolist(),
                "done": t.done,
                "meta": {
                    "session_id": t.meta.session_id,
                    "pair_index": t.meta.pair_index,
                    "current_topic": t.meta.current_topic,
                    "action_topic": t.meta.action_topic,
                },
            }
            f.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")


def load_transitions_cache(path: str | Path, space: ActionSpace) -> TransitionDataset:
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("schema") != TRANSITIONS_SCHEMA:
            raise DatasetError(f"unexpected cache schema {header.get('schema')!r}")
        key = header["key"]
        transitions = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            d = json.loads(line)
            m = d["meta"]
            transitions.append(
                Transition(
                    state=np.array(d["state"], dtype=np.float64),
                    action=np.array(d["action"], dtype=np.float64),
                    reward=float(d["reward"]),
                    next_state=np.array(d["next_state"], dtype=np.float64),
                    done=bool(d["done"]),
                    meta=TransitionMeta(
                        session_id=str(m["session_id"]),
                        pair_index=int(m["pair_index"]),
                        current_topic=int(m["current_topic"]),
                        action_topic=int(m["action_topic"]),
                    ),
                )
            )
    if not transitions:
        raise EmptyDataset(f"cache {path} holds no transitions")
    return TransitionDataset(
        transitions=tuple(transitions),
        space=space,
        embedder_hash=str(key["embedder"]),
        inventory_hash=str(key["inventory"]),
        frame_size=int(key["frame_size"]),
        reward=Scale(key["reward"]),
        context_mode=ContextMode(key["context_mode"]),
    )
