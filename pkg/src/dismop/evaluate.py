"""Turn-level accuracy and the 9x5 agent-by-disorder accuracy grid."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .actionspace import ActionSpace, decode_action
from .agents import Agent, AgentKind, DisorderCell, policy_actions
from .alliance import Scale
from .checkpoint import Checkpoint, PolicyId, agent_from_checkpoint
from .dataset import Transition
from .training import GRID_DISORDERS, GRID_KINDS, GRID_SCALES, GridKey


class EvalError(Exception):
    pass


class EmptyTestSet(EvalError):
    pass


class MissingCell(EvalError):
    pass


@dataclass(frozen=True)
class AccuracyReport:
    policy: PolicyId
    n_test: int
    accuracy: float
    per_topic_recall: dict[int, float]
    confusion: np.ndarray  # (K, K) counts indexed (truth, prediction)
    topic_ids: tuple[int, ...]


def turn_level_accuracy(
    agent: Agent,
    policy: PolicyId,
    test_transitions: list[Transition],
    space: ActionSpace,
    seed: int = 0,
) -> AccuracyReport:
    """Fraction of recommendations decoding to the logged next topic."""
    if not test_transitions:
        raise EmptyTestSet("no test transitions")
    ids = space.catalog.ids
    index = {tid: i for i, tid in enumerate(ids)}
    confusion = np.zeros((len(ids), len(ids)), dtype=np.int64)
    states = np.stack([t.state for t in test_transitions])
    actions = policy_actions(agent, states, seed=seed)
    for t, a in zip(test_transitions, actions):
        pred = decode_action(space, a)[0]
        confusion[index[t.meta.action_topic], index[pred]] += 1
    n = len(test_transitions)
    accuracy = float(np.trace(confusion) / n)
    recalls = {}
    for tid in ids:
        row = confusion[index[tid]]
        total = int(row.sum())
        if total > 0:
            recalls[tid] = float(row[index[tid]] / total)
    return AccuracyReport(
        policy=policy,
        n_test=n,
        accuracy=accuracy,
        per_topic_recall=recalls,
        confusion=confusion,
        topic_ids=ids,
    )


GRID_ROW_ORDER: tuple[tuple[AgentKind, Scale], ...] = tuple(
    (kind, scale) for kind in GRID_KINDS for scale in GRID_SCALES
)

GRID_COLUMNS: tuple[DisorderCell, ...] = GRID_DISORDERS


@dataclass(frozen=True)
class AccuracyGrid:
    rows: tuple[str, ...]  # row labels, DISMOP-DDPG-TASK .. DISMOP-BCQ-GOAL
    columns: tuple[str, ...]  # anxiety .. all
    values: np.ndarray  # (9, 5)
    reports: dict[GridKey, AccuracyReport]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["policy"] + list(self.columns))
        for i, label in enumerate(self.rows):
            writer.writerow([label] + [f"{v:.4f}" for v in self.values[i]])
        return buf.getvalue()

    def to_markdown(self) -> str:
        """Markdown table with per-column maxima bolded."""
        best = self.values.argmax(axis=0)
        lines = ["| policy | " + " | ".join(self.columns) + " |"]
        lines.append("|" + " --- |" * (len(self.columns) + 1))
        for i, label in enumerate(self.rows):
            cells = []
            for j, v in enumerate(self.values[i]):
                text = f"{v:.4f}"
                cells.append(f"**{text}**" if best[j] == i else text)
            lines.append("| " + label + " | " + " | ".join(cells) + " |")
        return "\n".join(lines) + "\n"


def accuracy_grid(
    checkpoints: dict[GridKey, Checkpoint],
    test_sets: dict[DisorderCell, list[Transition]],
    space: ActionSpace,
    seed: int = 0,
) -> AccuracyGrid:
    """Evaluate every grid cell on its disorder's held-out transitions."""
    values = np.zeros((len(GRID_ROW_ORDER), len(GRID_COLUMNS)))
    reports: dict[GridKey, AccuracyReport] = {}
    for i, (kind, scale) in enumerate(GRID_ROW_ORDER):
        for j, disorder in enumerate(GRID_COLUMNS):
            key = (kind, scale, disorder)
            if key not in checkpoints:
                raise MissingCell(f"missing checkpoint for {key}")
            if disorder not in test_sets or not test_sets[disorder]:
                raise EmptyTestSet(f"no test transitions for {disorder.value}")
            ckpt = checkpoints[key]
            agent = agent_from_checkpoint(ckpt, space)
            report = turn_level_accuracy(agent, ckpt.policy_id, test_sets[disorder], space, seed=seed)
            reports[key] = report
            values[i, j] = report.accuracy
    return AccuracyGrid(
        rows=tuple(PolicyId(kind, scale, DisorderCell.ALL).row_label for kind, scale in GRID_ROW_ORDER),
        columns=tuple(d.value for d in GRID_COLUMNS),
        values=values,
        reports=reports,
    )
