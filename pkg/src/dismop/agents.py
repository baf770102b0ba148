"""Offline actor-critic recommenders: DDPG, TD3, and BCQ.

All three train off-policy on fixed transition datasets. Actions live in the
action-space bounds box; actor-style outputs are tanh-scaled into the box and
everything emitted by select_action is clamped to it. Updates are seeded and
single-threaded, so identical (dataset, hyper, seed) runs are bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .actionspace import ActionSpace
from .corpus import Disorder
from .dataset import TransitionBatch
from .embedding import fnv1a64
from . import nn
from .nn import Activation, AdamState, Mlp, adam_step, backward, clone_mlp, forward, init_mlp, polyak_update


class AgentKind(str, Enum):
    DDPG = "ddpg"
    TD3 = "td3"
    BCQ = "bcq"


class DisorderCell(str, Enum):
    ANXIETY = "anxiety"
    DEPRESSION = "depression"
    SCHIZOPHRENIA = "schizophrenia"
    SUICIDAL = "suicidal"
    ALL = "all"


class AgentError(Exception):
    pass


class NonFiniteLoss(AgentError):
    pass


class LatentDimMismatch(AgentError):
    pass


@dataclass(frozen=True)
class Td3Hyper:
    policy_delay: int = 2
    target_noise: float = 0.2  # fraction of the per-dimension half-width
    noise_clip: float = 0.5  # fraction of the per-dimension half-width


@dataclass(frozen=True)
class BcqHyper:
    latent_dim: int = 8
    n_action_samples: int = 10
    phi: float = 0.05
    lambda_min: float = 0.75
    vae_lr: float = 1e-3


@dataclass(frozen=True)
class AgentHyper:
    gamma: float = 0.95
    tau: float = 0.005
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    hidden: tuple[int, ...] = (64, 64)
    hidden_activation: Activation = Activation.TANH
    td3: Td3Hyper = field(default_factory=Td3Hyper)
    bcq: BcqHyper = field(default_factory=BcqHyper)

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma < 1.0:
            raise AgentError(f"gamma must be in [0,1), got {self.gamma}")
        if not 0.0 < self.tau <= 1.0:
            raise AgentError(f"tau must be in (0,1], got {self.tau}")
        if not 0.0 <= self.bcq.lambda_min <= 1.0:
            raise AgentError(f"lambda_min must be in [0,1], got {self.bcq.lambda_min}")

    def to_json_dict(self) -> dict:
        return {
            "gamma": self.gamma,
            "tau": self.tau,
            "actor_lr": self.actor_lr,
            "critic_lr": self.critic_lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "hidden": list(self.hidden),
            "hidden_activation": self.hidden_activation.value,
            "td3": {
                "policy_delay": self.td3.policy_delay,
                "target_noise": self.td3.target_noise,
                "noise_clip": self.td3.noise_clip,
            },
            "bcq": {
                "latent_dim": self.bcq.latent_dim,
                "n_action_samples": self.bcq.n_action_samples,
                "phi": self.bcq.phi,
                "lambda_min": self.bcq.lambda_min,
                "vae_lr": self.bcq.vae_lr,
            },
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "AgentHyper":
        return cls(
            gamma=float(d["gamma"]),
            tau=float(d["tau"]),
            actor_lr=float(d["actor_lr"]),
            critic_lr=float(d["critic_lr"]),
            batch_size=int(d["batch_size"]),
            epochs=int(d["epochs"]),
            hidden=tuple(int(h) for h in d["hidden"]),
            hidden_activation=Activation(d["hidden_activation"]),
            td3=Td3Hyper(**d["td3"]),
            bcq=BcqHyper(**d["bcq"]),
        )


@dataclass(frozen=True)
class BoundsBox:
    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def from_space(cls, space: ActionSpace) -> "BoundsBox":
        return cls(lo=space.lo.copy(), hi=space.hi.copy())

    @property
    def mid(self) -> np.ndarray:
        return (self.lo + self.hi) / 2.0

    @property
    def half(self) -> np.ndarray:
        return (self.hi - self.lo) / 2.0

    def scale_tanh(self, out: np.ndarray) -> np.ndarray:
        return self.mid + self.half * out

    def clamp(self, a: np.ndarray) -> np.ndarray:
        return np.clip(a, self.lo, self.hi)


def _net_seed(seed: int, tag: int) -> int:
    return int(np.random.SeedSequence([seed, tag]).generate_state(1, np.uint64)[0])


def _dense(sizes: list[int], out_act: Activation, seed: int, hidden_act: Activation) -> Mlp:
    acts = [hidden_act] * (len(sizes) - 2) + [out_act]
    return init_mlp(sizes, acts, seed)


def _check_finite_loss(name: str, value: float) -> float:
    if not np.isfinite(value):
        raise NonFiniteLoss(f"{name} loss diverged to {value}")
    return float(value)


@dataclass
class DdpgAgent:
    state_dim: int
    action_dim: int
    bounds: BoundsBox
    hyper: AgentHyper
    seed: int
    actor: Mlp
    critic: Mlp
    target_actor: Mlp
    target_critic: Mlp
    actor_adam: AdamState
    critic_adam: AdamState

    @classmethod
    def create(cls, state_dim: int, space: ActionSpace, hyper: AgentHyper, seed: int) -> "DdpgAgent":
        h = list(hyper.hidden)
        actor = _dense([state_dim, *h, space.dim], Activation.TANH, _net_seed(seed, 0), hyper.hidden_activation)
        critic = _dense([state_dim + space.dim, *h, 1], Activation.IDENTITY, _net_seed(seed, 1), hyper.hidden_activation)
        return cls(
            state_dim=state_dim,
            action_dim=space.dim,
            bounds=BoundsBox.from_space(space),
            hyper=hyper,
            seed=seed,
            actor=actor,
            critic=critic,
            target_actor=clone_mlp(actor),
            target_critic=clone_mlp(critic),
            actor_adam=AdamState(lr=hyper.actor_lr),
            critic_adam=AdamState(lr=hyper.critic_lr),
        )


@dataclass
class Td3Agent:
    state_dim: int
    action_dim: int
    bounds: BoundsBox
    hyper: AgentHyper
    seed: int
    actor: Mlp
    critic1: Mlp
    critic2: Mlp
    target_actor: Mlp
    target_critic1: Mlp
    target_critic2: Mlp
    actor_adam: AdamState
    critic1_adam: AdamState
    critic2_adam: AdamState
    noise_rng: np.random.Generator

    @classmethod
    def create(cls, state_dim: int, space: ActionSpace, hyper: AgentHyper, seed: int) -> "Td3Agent":
        h = list(hyper.hidden)
        actor = _dense([state_dim, *h, space.dim], Activation.TANH, _net_seed(seed, 0), hyper.hidden_activation)
        critic1 = _dense([state_dim + space.dim, *h, 1], Activation.IDENTITY, _net_seed(seed, 1), hyper.hidden_activation)
        critic2 = _dense([state_dim + space.dim, *h, 1], Activation.IDENTITY, _net_seed(seed, 2), hyper.hidden_activation)
        return cls(
            state_dim=state_dim,
            action_dim=space.dim,
            bounds=BoundsBox.from_space(space),
            hyper=hyper,
            seed=seed,
            actor=actor,
            critic1=critic1,
            critic2=critic2,
            target_actor=clone_mlp(actor),
            target_critic1=clone_mlp(critic1),
            target_critic2=clone_mlp(critic2),
            actor_adam=AdamState(lr=hyper.actor_lr),
            critic1_adam=AdamState(lr=hyper.critic_lr),
            critic2_adam=AdamState(lr=hyper.critic_lr),
            noise_rng=np.random.Generator(np.random.PCG64(_net_seed(seed, 100))),
        )


@dataclass
class BcqAgent:
    state_dim: int
    action_dim: int
    bounds: BoundsBox
    hyper: AgentHyper
    seed: int
    vae_encoder: Mlp
    vae_decoder: Mlp
    perturbation: Mlp
    critic1: Mlp
    critic2: Mlp
    target_critic1: Mlp
    target_critic2: Mlp
    target_decoder: Mlp
    target_perturbation: Mlp
    encoder_adam: AdamState
    decoder_adam: AdamState
    perturbation_adam: AdamState
    critic1_adam: AdamState
    critic2_adam: AdamState
    train_rng: np.random.Generator

    @classmethod
    def create(cls, state_dim: int, space: ActionSpace, hyper: AgentHyper, seed: int) -> "BcqAgent":
        h = list(hyper.hidden)
        latent = hyper.bcq.latent_dim
        encoder = _dense([state_dim + space.dim, *h, 2 * latent], Activation.IDENTITY, _net_seed(seed, 0), hyper.hidden_activation)
        decoder = _dense([state_dim + latent, *h, space.dim], Activation.TANH, _net_seed(seed, 1), hyper.hidden_activation)
        pert = _dense([state_dim + space.dim, *h, space.dim], Activation.TANH, _net_seed(seed, 2), hyper.hidden_activation)
        critic1 = _dense([state_dim + space.dim, *h, 1], Activation.IDENTITY, _net_seed(seed, 3), hyper.hidden_activation)
        critic2 = _dense([state_dim + space.dim, *h, 1], Activation.IDENTITY, _net_seed(seed, 4), hyper.hidden_activation)
        return cls(
            state_dim=state_dim,
            action_dim=space.dim,
            bounds=BoundsBox.from_space(space),
            hyper=hyper,
            seed=seed,
            vae_encoder=encoder,
            vae_decoder=decoder,
            perturbation=pert,
            critic1=critic1,
            critic2=critic2,
            target_critic1=clone_mlp(critic1),
            target_critic2=clone_mlp(critic2),
            target_decoder=clone_mlp(decoder),
            target_perturbation=clone_mlp(pert),
            encoder_adam=AdamState(lr=hyper.bcq.vae_lr),
            decoder_adam=AdamState(lr=hyper.bcq.vae_lr),
            perturbation_adam=AdamState(lr=hyper.actor_lr),
            critic1_adam=AdamState(lr=hyper.critic_lr),
            critic2_adam=AdamState(lr=hyper.critic_lr),
            train_rng=np.random.Generator(np.random.PCG64(_net_seed(seed, 100))),
        )


Agent = DdpgAgent | Td3Agent | BcqAgent

LOG_STD_MIN = -4.0
LOG_STD_MAX = 15.0


def _critic_regress(critic: Mlp, adam: AdamState, x: np.ndarray, y: np.ndarray) -> float:
    """MSE-regress critic(x) toward y; returns the loss.

    Raises before touching parameters when the loss is non-finite, so a
    diverged update cannot corrupt the network it aborts."""
    q, cache = forward(critic, x)
    diff = q[:, 0] - y
    loss = _check_finite_loss("critic", float(np.mean(diff * diff)))
    upstream = (2.0 * diff / diff.shape[0])[:, None]
    grads, _ = backward(critic, cache, upstream)
    adam_step(adam, critic.params(), grads.as_list())
    return loss


def _ascend_q(
    critic: Mlp,
    states: np.ndarray,
    actions: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Loss -mean Q(s, a) and its gradient with respect to the actions."""
    b = states.shape[0]
    q, cache = forward(critic, np.concatenate([states, actions], axis=1))
    loss = float(-np.mean(q))
    _, d_input = backward(critic, cache, np.full((b, 1), -1.0 / b))
    return loss, d_input[:, states.shape[1] :]


def ddpg_target(agent: DdpgAgent, batch: TransitionBatch) -> np.ndarray:
    """y = r + gamma * (1 - done) * Q'(s', mu'(s'))."""
    a2_raw, _ = forward(agent.target_actor, batch.next_states)
    a2 = agent.bounds.scale_tanh(a2_raw)
    q2, _ = forward(agent.target_critic, np.concatenate([batch.next_states, a2], axis=1))
    return batch.rewards + agent.hyper.gamma * (1.0 - batch.dones) * q2[:, 0]


def ddpg_update(agent: DdpgAgent, batch: TransitionBatch) -> dict[str, float]:
    """One DDPG step: critic TD regression, actor ascent on Q, Polyak targets."""
    h = agent.hyper
    s, a = batch.states, batch.actions

    y = ddpg_target(agent, batch)
    critic_loss = _critic_regress(agent.critic, agent.critic_adam, np.concatenate([s, a], axis=1), y)

    a_raw, actor_cache = forward(agent.actor, s)
    a_pred = agent.bounds.scale_tanh(a_raw)
    actor_loss, d_action = _ascend_q(agent.critic, s, a_pred)
    actor_grads, _ = backward(agent.actor, actor_cache, d_action * agent.bounds.half)
    adam_step(agent.actor_adam, agent.actor.params(), actor_grads.as_list())

    polyak_update(agent.target_actor, agent.actor, h.tau)
    polyak_update(agent.target_critic, agent.critic, h.tau)
    return {
        "critic": _check_finite_loss("critic", critic_loss),
        "actor": _check_finite_loss("actor", actor_loss),
    }


def td3_target(agent: Td3Agent, batch: TransitionBatch) -> tuple[np.ndarray, np.ndarray]:
    """Clipped-noise smoothed target: y = r + gamma * (1 - done) * min(Q1', Q2')
    at a' = clamp(mu'(s') + clip(eps)). Returns (y, a')."""
    h = agent.hyper
    s2, r, done = batch.next_states, batch.rewards, batch.dones
    half = agent.bounds.half
    noise = agent.noise_rng.standard_normal(size=(s2.shape[0], agent.action_dim)) * (h.td3.target_noise * half)
    noise = np.clip(noise, -h.td3.noise_clip * half, h.td3.noise_clip * half)
    a2_raw, _ = forward(agent.target_actor, s2)
    a2 = agent.bounds.clamp(agent.bounds.scale_tanh(a2_raw) + noise)
    x2 = np.concatenate([s2, a2], axis=1)
    q1t, _ = forward(agent.target_critic1, x2)
    q2t, _ = forward(agent.target_critic2, x2)
    y = r + h.gamma * (1.0 - done) * np.minimum(q1t[:, 0], q2t[:, 0])
    return y, a2


def td3_update(agent: Td3Agent, batch: TransitionBatch, step: int) -> dict[str, float]:
    """One TD3 step: clipped-noise target actions, twin-min targets, delayed actor."""
    h = agent.hyper
    s, a = batch.states, batch.actions
    half = agent.bounds.half

    y, _ = td3_target(agent, batch)
    x = np.concatenate([s, a], axis=1)
    c1 = _critic_regress(agent.critic1, agent.critic1_adam, x, y)
    c2 = _critic_regress(agent.critic2, agent.critic2_adam, x, y)
    losses = {"critic": _check_finite_loss("critic", (c1 + c2) / 2.0)}

    if step % h.td3.policy_delay == 0:
        a_raw, actor_cache = forward(agent.actor, s)
        a_pred = agent.bounds.scale_tanh(a_raw)
        actor_loss, d_action = _ascend_q(agent.critic1, s, a_pred)
        actor_grads, _ = backward(agent.actor, actor_cache, d_action * half)
        adam_step(agent.actor_adam, agent.actor.params(), actor_grads.as_list())
        polyak_update(agent.target_actor, agent.actor, h.tau)
        polyak_update(agent.target_critic1, agent.critic1, h.tau)
        polyak_update(agent.target_critic2, agent.critic2, h.tau)
        losses["actor"] = _check_finite_loss("actor", actor_loss)
    return losses


def _vae_split(agent: BcqAgent, enc_out: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    latent = agent.hyper.bcq.latent_dim
    if enc_out.shape[1] != 2 * latent:
        raise LatentDimMismatch(f"encoder output width {enc_out.shape[1]}, expected {2 * latent}")
    mu = enc_out[:, :latent]
    log_std_raw = enc_out[:, latent:]
    log_std = np.clip(log_std_raw, LOG_STD_MIN, LOG_STD_MAX)
    return mu, log_std, log_std_raw


def _decode_actions(agent: BcqAgent, decoder: Mlp, states: np.ndarray, z: np.ndarray) -> np.ndarray:
    out, _ = forward(decoder, np.concatenate([states, z], axis=1))
    return agent.bounds.scale_tanh(out)


def _perturb_actions(agent: BcqAgent, pert: Mlp, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    out, _ = forward(pert, np.concatenate([states, actions], axis=1))
    xi = agent.hyper.bcq.phi * agent.bounds.half * out
    return agent.bounds.clamp(actions + xi)


def vae_kl(mu: np.ndarray, log_std: np.ndarray) -> float:
    """Mean over the batch of KL(N(mu, exp(log_std)) || N(0, 1)), summed over
    latent dimensions."""
    terms = 1.0 + 2.0 * log_std - mu * mu - np.exp(2.0 * log_std)
    return float(np.mean(-0.5 * np.sum(terms, axis=1)))


def bcq_target(agent: BcqAgent, batch: TransitionBatch) -> np.ndarray:
    """y = r + gamma * (1 - done) * max over sampled candidates of
    lambda * min(Q1', Q2') + (1 - lambda) * max(Q1', Q2')."""
    h = agent.hyper
    bcq = h.bcq
    b = batch.next_states.shape[0]
    n = bcq.n_action_samples
    s2_rep = np.repeat(batch.next_states, n, axis=0)
    z2 = np.clip(agent.train_rng.standard_normal(size=(b * n, bcq.latent_dim)), -0.5, 0.5)
    a2 = _perturb_actions(
        agent, agent.target_perturbation, s2_rep, _decode_actions(agent, agent.target_decoder, s2_rep, z2)
    )
    x2 = np.concatenate([s2_rep, a2], axis=1)
    q1t, _ = forward(agent.target_critic1, x2)
    q2t, _ = forward(agent.target_critic2, x2)
    q1t = q1t[:, 0].reshape(b, n)
    q2t = q2t[:, 0].reshape(b, n)
    lam = bcq.lambda_min
    mixed = lam * np.minimum(q1t, q2t) + (1.0 - lam) * np.maximum(q1t, q2t)
    return batch.rewards + h.gamma * (1.0 - batch.dones) * mixed.max(axis=1)


def bcq_update(agent: BcqAgent, batch: TransitionBatch) -> dict[str, float]:
    """One BCQ step: conditional VAE fit, constrained twin-critic targets,
    perturbation-net ascent on Q1, Polyak on all targets."""
    h = agent.hyper
    bcq = h.bcq
    s, a = batch.states, batch.actions
    b = s.shape[0]
    latent = bcq.latent_dim
    half = agent.bounds.half

    # (1) VAE: reconstruction + KL(N(mu, sigma) || N(0, 1)).
    enc_out, enc_cache = forward(agent.vae_encoder, np.concatenate([s, a], axis=1))
    mu, log_std, log_std_raw = _vae_split(agent, enc_out)
    sigma = np.exp(log_std)
    eps = agent.train_rng.standard_normal(size=(b, latent))
    z = mu + sigma * eps
    dec_out, dec_cache = forward(agent.vae_decoder, np.concatenate([s, z], axis=1))
    a_rec = agent.bounds.scale_tanh(dec_out)
    recon = float(np.mean((a_rec - a) ** 2))
    kl = vae_kl(mu, log_std)
    vae_loss = _check_finite_loss("vae", recon + kl)

    d_a_rec = 2.0 * (a_rec - a) / (b * agent.action_dim)
    dec_grads, dec_dinput = backward(agent.vae_decoder, dec_cache, d_a_rec * half)
    dz = dec_dinput[:, agent.state_dim :]
    d_mu = dz + mu / b
    clip_mask = ((log_std_raw > LOG_STD_MIN) & (log_std_raw < LOG_STD_MAX)).astype(np.float64)
    d_log_std = (dz * sigma * eps + (np.exp(2.0 * log_std) - 1.0) / b) * clip_mask
    enc_grads, _ = backward(agent.vae_encoder, enc_cache, np.concatenate([d_mu, d_log_std], axis=1))
    adam_step(agent.decoder_adam, agent.vae_decoder.params(), dec_grads.as_list())
    adam_step(agent.encoder_adam, agent.vae_encoder.params(), enc_grads.as_list())

    # (2) Critics: best perturbed-decoded candidate under the lambda-mixed twins.
    y = bcq_target(agent, batch)
    x = np.concatenate([s, a], axis=1)
    c1 = _critic_regress(agent.critic1, agent.critic1_adam, x, y)
    c2 = _critic_regress(agent.critic2, agent.critic2_adam, x, y)
    critic_loss = _check_finite_loss("critic", (c1 + c2) / 2.0)

    # (3) Perturbation net ascends Q1 on decoded actions (decoder held fixed).
    zp = np.clip(agent.train_rng.standard_normal(size=(b, latent)), -0.5, 0.5)
    a_dec = _decode_actions(agent, agent.vae_decoder, s, zp)
    pert_out, pert_cache = forward(agent.perturbation, np.concatenate([s, a_dec], axis=1))
    xi = bcq.phi * half * pert_out
    a_pert = a_dec + xi
    in_box = ((a_pert > agent.bounds.lo) & (a_pert < agent.bounds.hi)).astype(np.float64)
    pert_loss, d_action = _ascend_q(agent.critic1, s, agent.bounds.clamp(a_pert))
    pert_grads, _ = backward(agent.perturbation, pert_cache, d_action * in_box * (bcq.phi * half))
    adam_step(agent.perturbation_adam, agent.perturbation.params(), pert_grads.as_list())

    polyak_update(agent.target_critic1, agent.critic1, h.tau)
    polyak_update(agent.target_critic2, agent.critic2, h.tau)
    polyak_update(agent.target_decoder, agent.vae_decoder, h.tau)
    polyak_update(agent.target_perturbation, agent.perturbation, h.tau)
    return {
        "vae": vae_loss,
        "critic": critic_loss,
        "perturbation": _check_finite_loss("perturbation", pert_loss),
    }


def _state_stream_seed(state: np.ndarray, seed: int) -> int:
    """Order-independent per-state sampling stream: hashing the state bytes
    makes BCQ selection reproducible whether states arrive singly or batched."""
    return fnv1a64(seed.to_bytes(8, "big") + np.ascontiguousarray(state).tobytes())


def select_action(agent: Agent, state: np.ndarray, seed: int = 0) -> np.ndarray:
    """Greedy action for one state, always inside the bounds box."""
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (agent.state_dim,):
        raise nn.DimMismatch(f"state shape {state.shape}, expected ({agent.state_dim},)")
    if isinstance(agent, (DdpgAgent, Td3Agent)):
        raw, _ = forward(agent.actor, state)
        return agent.bounds.clamp(agent.bounds.scale_tanh(raw))
    bcq = agent.hyper.bcq
    rng = np.random.Generator(np.random.PCG64(_state_stream_seed(state, seed)))
    n = bcq.n_action_samples
    z = np.clip(rng.standard_normal(size=(n, bcq.latent_dim)), -0.5, 0.5)
    s_rep = np.tile(state, (n, 1))
    cand = _perturb_actions(agent, agent.perturbation, s_rep, _decode_actions(agent, agent.vae_decoder, s_rep, z))
    q, _ = forward(agent.critic1, np.concatenate([s_rep, cand], axis=1))
    return cand[int(np.argmax(q[:, 0]))].copy()


def select_actions(agent: Agent, states: np.ndarray, seed: int = 0) -> np.ndarray:
    """Vectorized greedy actions for a batch of states."""
    states = np.asarray(states, dtype=np.float64)
    if isinstance(agent, (DdpgAgent, Td3Agent)):
        raw, _ = forward(agent.actor, states)
        return agent.bounds.clamp(agent.bounds.scale_tanh(raw))
    if isinstance(agent, BcqAgent):
        return np.stack([select_action(agent, s, seed=seed) for s in states])
    raise AgentError(f"not an agent: {type(agent).__name__}")


def policy_actions(policy, states: np.ndarray, seed: int = 0) -> np.ndarray:
    """Actions for a batch of states from an Agent or a plain batch callable.

    Callables (states -> actions) support replay/oracle policies in the
    evaluation and interpretability paths.
    """
    if callable(policy) and not isinstance(policy, (DdpgAgent, Td3Agent, BcqAgent)):
        return np.asarray(policy(np.asarray(states, dtype=np.float64)), dtype=np.float64)
    return select_actions(policy, states, seed=seed)
