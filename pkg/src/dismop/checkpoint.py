"""Canonical checkpoint serialization with provenance hashes.

Checkpoints are canonical JSON (sorted keys, compact separators, repr-exact
floats), so save -> load -> save is byte-identical and file hashes are
stable across runs.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from .actionspace import ActionSpace
from .agents import (
    Agent,
    AgentHyper,
    AgentKind,
    BcqAgent,
    BoundsBox,
    DdpgAgent,
    DisorderCell,
    Td3Agent,
)
from .alliance import Scale
from .dataset import ContextMode
from .nn import AdamState, Mlp, mlp_from_json_dict, mlp_to_json_dict

CHECKPOINT_SCHEMA = "dismop-ckpt/1"

NET_NAMES: dict[AgentKind, tuple[str, ...]] = {
    AgentKind.DDPG: ("actor", "critic", "target_actor", "target_critic"),
    AgentKind.TD3: ("actor", "critic1", "critic2", "target_actor", "target_critic1", "target_critic2"),
    AgentKind.BCQ: (
        "vae_encoder",
        "vae_decoder",
        "perturbation",
        "critic1",
        "critic2",
        "target_critic1",
        "target_critic2",
        "target_decoder",
        "target_perturbation",
    ),
}

LOSS_COLUMNS: dict[AgentKind, tuple[str, ...]] = {
    AgentKind.DDPG: ("critic", "actor"),
    AgentKind.TD3: ("critic", "actor"),
    AgentKind.BCQ: ("vae", "critic", "perturbation"),
}


class CheckpointError(Exception):
    pass


class CorruptCheckpoint(CheckpointError):
    pass


class ProvenanceMismatch(CheckpointError):
    pass


@dataclass(frozen=True)
class PolicyId:
    kind: AgentKind
    reward_scale: Scale
    disorder: DisorderCell

    @property
    def row_label(self) -> str:
        return f"DISMOP-{self.kind.value.upper()}-{self.reward_scale.value.upper()}"

    @property
    def cell_id(self) -> str:
        return f"{self.kind.value}-{self.reward_scale.value}-{self.disorder.value}"


@dataclass
class Checkpoint:
    kind: AgentKind
    disorder: DisorderCell
    reward_scale: Scale
    hyper: AgentHyper
    seed: int
    hashes: dict[str, str]  # embedder, inventory, actionspace
    losses: list[list[float]]  # [epoch, per-kind loss means...]
    nets: dict[str, Mlp]
    state_dim: int
    action_dim: int
    frame_size: int
    context_mode: ContextMode

    @property
    def policy_id(self) -> PolicyId:
        return PolicyId(kind=self.kind, reward_scale=self.reward_scale, disorder=self.disorder)

    def to_json_dict(self) -> dict:
        return {
            "schema": CHECKPOINT_SCHEMA,
            "kind": self.kind.value,
            "disorder": self.disorder.value,
            "reward_scale": self.reward_scale.value,
            "hyper": {
                **self.hyper.to_json_dict(),
                "state_dim": self.state_dim,
                "action_dim": self.action_dim,
                "frame_size": self.frame_size,
                "context_mode": self.context_mode.value,
            },
            "hashes": dict(self.hashes),
            "seed": self.seed,
            "losses": [[row[0]] + [float(v) for v in row[1:]] for row in self.losses],
            "nets": {name: mlp_to_json_dict(net) for name, net in self.nets.items()},
        }


def canonical_json(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(canonical_json(ckpt.to_json_dict()))
        f.write("\n")


def load_checkpoint(
    path: str | Path,
    expected_hashes: dict[str, str] | None = None,
    strict: bool = False,
) -> Checkpoint:
    """Load and validate a checkpoint.

    When expected_hashes is given, provenance differences warn, or raise
    ProvenanceMismatch when strict.
    """
    try:
        with open(path, encoding="utf-8") as f:
            d = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    try:
        if d.get("schema") != CHECKPOINT_SCHEMA:
            raise CorruptCheckpoint(f"{path}: unexpected schema {d.get('schema')!r}")
        kind = AgentKind(d["kind"])
        hyper_d = dict(d["hyper"])
        state_dim = int(hyper_d.pop("state_dim"))
        action_dim = int(hyper_d.pop("action_dim"))
        frame_size = int(hyper_d.pop("frame_size"))
        context_mode = ContextMode(hyper_d.pop("context_mode"))
        nets = {name: mlp_from_json_dict(nd) for name, nd in d["nets"].items()}
        if set(nets) != set(NET_NAMES[kind]):
            raise CorruptCheckpoint(f"{path}: nets {sorted(nets)} do not match kind {kind.value}")
        ckpt = Checkpoint(
            kind=kind,
            disorder=DisorderCell(d["disorder"]),
            reward_scale=Scale(d["reward_scale"]),
            hyper=AgentHyper.from_json_dict(hyper_d),
            seed=int(d["seed"]),
            hashes={str(k): str(v) for k, v in d["hashes"].items()},
            losses=[[row[0]] + [float(v) for v in row[1:]] for row in d["losses"]],
            nets=nets,
            state_dim=state_dim,
            action_dim=action_dim,
            frame_size=frame_size,
            context_mode=context_mode,
        )
    except CorruptCheckpoint:
        raise
    except (KeyError, ValueError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: {exc}") from exc
    if expected_hashes is not None:
        diffs = {
            k: (ckpt.hashes.get(k), v)
            for k, v in expected_hashes.items()
            if ckpt.hashes.get(k) != v
        }
        if diffs:
            msg = f"{path}: provenance differs for {sorted(diffs)}"
            if strict:
                raise ProvenanceMismatch(msg)
            warnings.warn(msg, stacklevel=2)
    return ckpt


def checkpoint_from_agent(
    agent: Agent,
    kind: AgentKind,
    disorder: DisorderCell,
    reward_scale: Scale,
    seed: int,
    hashes: dict[str, str],
    losses: list[list[float]],
    frame_size: int,
    context_mode: ContextMode,
) -> Checkpoint:
    nets = {name: getattr(agent, name) for name in NET_NAMES[kind]}
    return Checkpoint(
        kind=kind,
        disorder=disorder,
        reward_scale=reward_scale,
        hyper=agent.hyper,
        seed=seed,
        hashes=dict(hashes),
        losses=losses,
        nets=nets,
        state_dim=agent.state_dim,
        action_dim=agent.action_dim,
        frame_size=frame_size,
        context_mode=context_mode,
    )


def agent_from_checkpoint(ckpt: Checkpoint, space: ActionSpace) -> Agent:
    """Rebuild an inference-ready agent; optimizer state is not restored."""
    if space.dim != ckpt.action_dim:
        raise ProvenanceMismatch(f"action space dim {space.dim} vs checkpoint {ckpt.action_dim}")
    bounds = BoundsBox.from_space(space)
    h = ckpt.hyper
    nets = ckpt.nets
    if ckpt.kind == AgentKind.DDPG:
        return DdpgAgent(
            state_dim=ckpt.state_dim,
            action_dim=ckpt.action_dim,
            bounds=bounds,
            hyper=h,
            seed=ckpt.seed,
            actor=nets["actor"],
            critic=nets["critic"],
            target_actor=nets["target_actor"],
            target_critic=nets["target_critic"],
            actor_adam=AdamState(lr=h.actor_lr),
            critic_adam=AdamState(lr=h.critic_lr),
        )
    if ckpt.kind == AgentKind.TD3:
        import numpy as np

        return Td3Agent(
            state_dim=ckpt.state_dim,
            action_dim=ckpt.action_dim,
            bounds=bounds,
            hyper=h,
            seed=ckpt.seed,
            actor=nets["actor"],
            critic1=nets["critic1"],
            critic2=nets["critic2"],
            target_actor=nets["target_actor"],
            target_critic1=nets["target_critic1"],
            target_critic2=nets["target_critic2"],
            actor_adam=AdamState(lr=h.actor_lr),
            critic1_adam=AdamState(lr=h.critic_lr),
            critic2_adam=AdamState(lr=h.critic_lr),
            noise_rng=np.random.Generator(np.random.PCG64(ckpt.seed)),
        )
    import numpy as np

    return BcqAgent(
        state_dim=ckpt.state_dim,
        action_dim=ckpt.action_dim,
        bounds=bounds,
        hyper=h,
        seed=ckpt.seed,
        vae_encoder=nets["vae_encoder"],
        vae_decoder=nets["vae_decoder"],
        perturbation=nets["perturbation"],
        critic1=nets["critic1"],
        critic2=nets["critic2"],
        target_critic1=nets["target_critic1"],
        target_critic2=nets["target_critic2"],
        target_decoder=nets["target_decoder"],
        target_perturbation=nets["target_perturbation"],
        encoder_adam=AdamState(lr=h.bcq.vae_lr),
        decoder_adam=AdamState(lr=h.bcq.vae_lr),
        perturbation_adam=AdamState(lr=h.actor_lr),
        critic1_adam=AdamState(lr=h.critic_lr),
        critic2_adam=AdamState(lr=h.critic_lr),
        train_rng=np.random.Generator(np.random.PCG64(ckpt.seed)),
    )
