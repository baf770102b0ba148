"""Training loops: single policies and the full agent x scale x disorder grid."""

from __future__ import annotations

import numpy as np

from .actionspace import TopicCatalog, build_action_space
from .agents import (
    Agent,
    AgentHyper,
    AgentKind,
    BcqAgent,
    DdpgAgent,
    DisorderCell,
    NonFiniteLoss,
    Td3Agent,
    bcq_update,
    ddpg_update,
    td3_update,
)
from .alliance import Inventory, Scale
from .checkpoint import LOSS_COLUMNS, Checkpoint, checkpoint_from_agent
from .corpus import Corpus, Disorder
from .dataset import BuildSpec, ContextMode, EmptyDataset, TransitionDataset, make_dataset, sample_batches
from .embedding import EmbedderConfig

GRID_KINDS = (AgentKind.DDPG, AgentKind.TD3, AgentKind.BCQ)
GRID_SCALES = (Scale.TASK, Scale.BOND, Scale.GOAL)
GRID_DISORDERS = (
    DisorderCell.ANXIETY,
    DisorderCell.DEPRESSION,
    DisorderCell.SCHIZOPHRENIA,
    DisorderCell.SUICIDAL,
    DisorderCell.ALL,
)

GridKey = tuple[AgentKind, Scale, DisorderCell]


def make_agent(kind: AgentKind, dataset: TransitionDataset, hyper: AgentHyper, seed: int) -> Agent:
    cls = {AgentKind.DDPG: DdpgAgent, AgentKind.TD3: Td3Agent, AgentKind.BCQ: BcqAgent}[kind]
    return cls.create(dataset.state_dim, dataset.space, hyper, seed)


def _epoch_seed(seed: int, epoch: int) -> int:
    return int(np.random.SeedSequence([seed, epoch]).generate_state(1, np.uint64)[0])


def train_policy(
    kind: AgentKind,
    dataset: TransitionDataset,
    hyper: AgentHyper | None = None,
    seed: int = 0,
    disorder: DisorderCell = DisorderCell.ALL,
) -> Checkpoint:
    """Train one policy for hyper.epochs passes over the dataset.

    Loss curves hold the per-epoch mean of each loss column (the TD3 actor
    column averages only over the delayed updates that ran).
    """
    hyper = hyper or AgentHyper()
    if len(dataset) == 0:
        raise EmptyDataset("cannot train on an empty dataset")
    agent = make_agent(kind, dataset, hyper, seed)
    columns = LOSS_COLUMNS[kind]
    transitions = list(dataset.transitions)
    losses: list[list[float]] = []
    step = 0
    for epoch in range(hyper.epochs):
        sums = {c: 0.0 for c in columns}
        counts = {c: 0 for c in columns}
        for batch in sample_batches(transitions, hyper.batch_size, _epoch_seed(seed, epoch)):
            step += 1
            try:
                if kind == AgentKind.DDPG:
                    upd = ddpg_update(agent, batch)
                elif kind == AgentKind.TD3:
                    upd = td3_update(agent, batch, step)
                else:
                    upd = bcq_update(agent, batch)
            except NonFiniteLoss as exc:
                raise NonFiniteLoss(f"epoch {epoch}, step {step}: {exc}") from exc
            for name, value in upd.items():
                sums[name] += value
                counts[name] += 1
        losses.append([epoch] + [sums[c] / counts[c] if counts[c] else 0.0 for c in columns])
    return checkpoint_from_agent(
        agent,
        kind=kind,
        disorder=disorder,
        reward_scale=dataset.reward,
        seed=seed,
        hashes={
            "embedder": dataset.embedder_hash,
            "inventory": dataset.inventory_hash,
            "actionspace": dataset.space.space_hash(),
        },
        losses=losses,
        frame_size=dataset.frame_size,
        context_mode=dataset.context_mode,
    )


def _cell_seed(seed: int, kind: AgentKind, scale: Scale, disorder: DisorderCell) -> int:
    ki = GRID_KINDS.index(kind)
    si = GRID_SCALES.index(scale)
    di = GRID_DISORDERS.index(disorder)
    return int(np.random.SeedSequence([seed, ki, si, di]).generate_state(1, np.uint64)[0])


def pool_corpora(corpora: dict[Disorder, Corpus]) -> Corpus:
    sessions: list = []
    for d in sorted(corpora, key=lambda x: x.value):
        sessions.extend(corpora[d].sessions)
    first = next(iter(corpora.values()))
    return Corpus(sessions=tuple(sessions), source=first.source, generator_seed=first.generator_seed)


def train_dismop_grid(
    corpora: dict[Disorder, Corpus],
    cfg: EmbedderConfig,
    inv: Inventory,
    hyper: AgentHyper | None = None,
    seed: int = 0,
    catalog: TopicCatalog | None = None,
    frame_size: int = 10,
    context_mode: ContextMode = ContextMode.HISTORY_MEAN,
    prelabel: bool = True,
) -> dict[GridKey, Checkpoint]:
    """Train all 3 agents x 3 reward scales x (4 disorders + pooled all).

    The action space is built once from the pooled corpus so every cell
    shares one continuous action domain.
    """
    hyper = hyper or AgentHyper()
    pooled = pool_corpora(corpora)
    space = build_action_space(pooled, cfg, catalog)
    cell_corpora: dict[DisorderCell, Corpus] = {DisorderCell.ALL: pooled}
    for d, c in corpora.items():
        cell_corpora[DisorderCell(d.value)] = c

    grid: dict[GridKey, Checkpoint] = {}
    for disorder in GRID_DISORDERS:
        for scale in GRID_SCALES:
            dataset = make_dataset(
                cell_corpora[disorder],
                inv,
                space,
                cfg,
                BuildSpec(frame_size=frame_size, reward=scale, context_mode=context_mode, prelabel=prelabel),
            )
            for kind in GRID_KINDS:
                grid[(kind, scale, disorder)] = train_policy(
                    kind,
                    dataset,
                    hyper,
                    seed=_cell_seed(seed, kind, scale, disorder),
                    disorder=disorder,
                )
    return grid
