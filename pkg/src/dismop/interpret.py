"""Policy interpretability: average trajectories and 1-step transition matrices.

Both analytics replay a trained policy over held-out transitions. The
trajectory view averages the frame's historical action embeddings plus the
policy's recommendation, projects them to 2D, and z-scores each axis; the
transition matrix counts current-topic -> recommended-topic moves and
row-normalizes rows with support.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass

import numpy as np

from .actionspace import ActionSpace, decode_action, encode_topic
from .agents import Agent, policy_actions
from .dataset import Transition
from .pca import PcaModel, fit_pca

TRAJECTORY_SCHEMA = "dismop-traj/1"
TRANSMAT_SCHEMA = "dismop-transmat/1"


class InterpretError(Exception):
    pass


class EmptyTestSet(InterpretError):
    pass


class UnsupportedFormat(InterpretError):
    pass


@dataclass(frozen=True)
class TrajectorySummary:
    points: np.ndarray  # (W+1, 2) standardized
    point_topics: tuple[int, ...]  # nearest catalog topic per point
    endpoint_index: int

    def to_json_dict(self) -> dict:
        return {
            "schema": TRAJECTORY_SCHEMA,
            "points": self.points.tolist(),
            "point_topics": list(self.point_topics),
            "endpoint_index": self.endpoint_index,
        }


@dataclass(frozen=True)
class TransitionMatrix:
    matrix: np.ndarray  # (K, K) row-stochastic on supported rows
    support: np.ndarray  # (K,) int row counts
    topic_ids: tuple[int, ...]

    def to_json_dict(self) -> dict:
        return {
            "schema": TRANSMAT_SCHEMA,
            "topics": list(self.topic_ids),
            "matrix": self.matrix.tolist(),
            "support": [int(s) for s in self.support],
        }


def fit_action_pca(train_transitions: list[Transition], k: int = 2) -> PcaModel:
    """PCA over the ground-truth action vectors of the training set."""
    if not train_transitions:
        raise EmptyTestSet("no transitions to fit PCA on")
    actions = np.stack([t.action for t in train_transitions])
    return fit_pca(actions, k=k)


def _standardize(points: np.ndarray) -> np.ndarray:
    out = np.zeros_like(points)
    for axis in range(points.shape[1]):
        col = points[:, axis]
        mu = col.mean()
        sd = col.std()
        if sd > 1e-12:
            out[:, axis] = (col - mu) / sd
        # Degenerate axes stay at zero.
    return out


def average_policy_trajectory(
    agent: Agent,
    test_transitions: list[Transition],
    pca: PcaModel,
    space: ActionSpace,
    history: dict[tuple[str, int], list[int]],
    frame_size: int,
    seed: int = 0,
) -> TrajectorySummary:
    """Average W historical action embeddings + the recommendation per test
    transition, project to 2D, and standardize.

    history maps (session_id, pair_index) to the frame's W therapist topics
    (see dataset.frame_topic_history). Averaging happens in the original
    action space, then the averaged points are projected; the two commute
    because the projection is affine.
    """
    if not test_transitions:
        raise EmptyTestSet("no test transitions")
    w = frame_size
    sums = np.zeros((w + 1, space.dim))
    states = np.stack([t.state for t in test_transitions])
    recommendations = policy_actions(agent, states, seed=seed)
    for i, t in enumerate(test_transitions):
        topics = history[(t.meta.session_id, t.meta.pair_index)]
        for j, tid in enumerate(topics):
            sums[j] += encode_topic(space, tid)
        sums[w] += recommendations[i]
    avg = sums / len(test_transitions)
    point_topics = tuple(decode_action(space, avg[j])[0] for j in range(w + 1))
    projected = pca.transform(avg, k=2)
    return TrajectorySummary(
        points=_standardize(projected),
        point_topics=point_topics,
        endpoint_index=w,
    )


def one_step_transition_matrix(
    agent: Agent,
    test_transitions: list[Transition],
    space: ActionSpace,
    seed: int = 0,
) -> TransitionMatrix:
    """Counts of current topic -> recommended topic, row-normalized."""
    if not test_transitions:
        raise EmptyTestSet("no test transitions")
    k = space.n_topics
    ids = space.catalog.ids
    index = {tid: i for i, tid in enumerate(ids)}
    counts = np.zeros((k, k), dtype=np.float64)
    states = np.stack([t.state for t in test_transitions])
    actions = policy_actions(agent, states, seed=seed)
    for t, a in zip(test_transitions, actions):
        row = index[t.meta.current_topic]
        col = index[decode_action(space, a)[0]]
        counts[row, col] += 1.0
    support = counts.sum(axis=1)
    matrix = np.zeros_like(counts)
    for r in range(k):
        if support[r] > 0:
            matrix[r] = counts[r] / support[r]
    return TransitionMatrix(matrix=matrix, support=support.astype(int), topic_ids=ids)


def export_plot_data(obj: TrajectorySummary | TransitionMatrix, format: str = "json") -> bytes:
    """Stable plot-ready export; CSV matrices carry topic-id headers."""
    fmt = format.lower()
    if fmt == "json":
        return (json.dumps(obj.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n").encode("utf-8")
    if fmt != "csv":
        raise UnsupportedFormat(f"unsupported format {format!r}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if isinstance(obj, TransitionMatrix):
        writer.writerow(["topic"] + [str(t) for t in obj.topic_ids])
        for i, tid in enumerate(obj.topic_ids):
            writer.writerow([str(tid)] + [repr(float(v)) for v in obj.matrix[i]])
    else:
        writer.writerow(["index", "x", "y", "topic", "is_endpoint"])
        for i, (x, y) in enumerate(obj.points):
            writer.writerow([i, repr(float(x)), repr(float(y)), obj.point_topics[i], int(i == obj.endpoint_index)])
    return buf.getvalue().encode("utf-8")


def parse_trajectory_json(data: bytes | str) -> TrajectorySummary:
    d = json.loads(data)
    if d.get("schema") != TRAJECTORY_SCHEMA:
        raise InterpretError(f"unexpected schema {d.get('schema')!r}")
    return TrajectorySummary(
        points=np.array(d["points"], dtype=np.float64),
        point_topics=tuple(int(t) for t in d["point_topics"]),
        endpoint_index=int(d["endpoint_index"]),
    )


def parse_transmat_json(data: bytes | str) -> TransitionMatrix:
    d = json.loads(data)
    if d.get("schema") != TRANSMAT_SCHEMA:
        raise InterpretError(f"unexpected schema {d.get('schema')!r}")
    return TransitionMatrix(
        matrix=np.array(d["matrix"], dtype=np.float64),
        support=np.array(d["support"], dtype=int),
        topic_ids=tuple(int(t) for t in d["topics"]),
    )
