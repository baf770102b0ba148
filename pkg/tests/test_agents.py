import numpy as np
import pytest

from dismop.actionspace import build_action_space, decode_action
from dismop.agents import (
    AgentHyper,
    BcqAgent,
    BcqHyper,
    DdpgAgent,
    NonFiniteLoss,
    Td3Agent,
    Td3Hyper,
    bcq_target,
    bcq_update,
    ddpg_target,
    ddpg_update,
    select_action,
    select_actions,
    td3_target,
    td3_update,
    vae_kl,
)
from dismop.alliance import load_inventory
from dismop.corpus import default_synth_config, generate_synthetic_corpus
from dismop.dataset import BuildSpec, TransitionBatch, make_dataset, sample_batches
from dismop.embedding import EmbedderConfig
from dismop.nn import forward

CFG = EmbedderConfig()


@pytest.fixture(scope="module")
def setting():
    corpus = generate_synthetic_corpus(default_synth_config(n_sessions=20, turns_per_session=26, seed=2))
    inv = load_inventory(None, CFG)
    space = build_action_space(corpus, CFG)
    ds = make_dataset(corpus, inv, space, CFG, BuildSpec())
    batch = next(sample_batches(list(ds.transitions), 32, epoch_seed=0))
    return space, ds, batch


def _constant_critic(critic, value: float) -> None:
    for w in critic.weights:
        w[:] = 0.0
    critic.biases[-1][:] = value


def test_ddpg_gamma_zero_target_is_reward(setting):
    space, ds, batch = setting
    agent = DdpgAgent.create(ds.state_dim, space, AgentHyper(gamma=0.0), seed=0)
    np.testing.assert_array_equal(ddpg_target(agent, batch), batch.rewards)


def test_ddpg_terminal_masking(setting):
    space, ds, batch = setting
    agent = DdpgAgent.create(ds.state_dim, space, AgentHyper(), seed=0)
    done_rows = np.where(batch.dones == 1.0)[0]
    if done_rows.size == 0:
        batch = TransitionBatch(
            states=batch.states,
            actions=batch.actions,
            rewards=batch.rewards,
            next_states=batch.next_states,
            dones=np.ones_like(batch.dones),
            indices=batch.indices,
        )
        done_rows = np.arange(batch.size)
    y1 = ddpg_target(agent, batch)
    perturbed = TransitionBatch(
        states=batch.states,
        actions=batch.actions,
        rewards=batch.rewards,
        next_states=batch.next_states + 3.0,
        dones=batch.dones,
        indices=batch.indices,
    )
    y2 = ddpg_target(agent, perturbed)
    np.testing.assert_array_equal(y1[done_rows], y2[done_rows])


def test_ddpg_overfits_single_batch(setting):
    # gamma=0 freezes the regression target, making repeated updates on one
    # batch a pure overfitting check.
    space, ds, batch = setting
    agent = DdpgAgent.create(ds.state_dim, space, AgentHyper(gamma=0.0), seed=1)
    first = ddpg_update(agent, batch)["critic"]
    last = first
    for _ in range(199):
        last = ddpg_update(agent, batch)["critic"]
    assert last <= first / 10.0, f"critic loss {first} -> {last}"


def test_td3_min_rule(setting):
    space, ds, batch = setting
    agent = Td3Agent.create(ds.state_dim, space, AgentHyper(gamma=0.5), seed=0)
    _constant_critic(agent.target_critic1, 3.0)
    _constant_critic(agent.target_critic2, 5.0)
    y, _ = td3_target(agent, batch)
    np.testing.assert_allclose(y, batch.rewards + 0.5 * (1.0 - batch.dones) * 3.0, atol=1e-12)


def test_td3_actor_delay(setting):
    space, ds, batch = setting
    agent = Td3Agent.create(ds.state_dim, space, AgentHyper(td3=Td3Hyper(policy_delay=2)), seed=0)
    before = [p.copy() for p in agent.actor.params()]
    losses = td3_update(agent, batch, step=1)
    assert "actor" not in losses
    for p, b in zip(agent.actor.params(), before):
        np.testing.assert_array_equal(p, b)
    losses = td3_update(agent, batch, step=2)
    assert "actor" in losses
    changed = any(not np.array_equal(p, b) for p, b in zip(agent.actor.params(), before))
    assert changed


def test_td3_noise_is_clipped(setting):
    space, ds, batch = setting
    # Enormous noise scale: every draw should land on the clip boundary.
    hyper = AgentHyper(td3=Td3Hyper(target_noise=50.0, noise_clip=0.5))
    agent = Td3Agent.create(ds.state_dim, space, hyper, seed=0)
    half = agent.bounds.half
    base_raw, _ = forward(agent.target_actor, batch.next_states)
    base = agent.bounds.clamp(agent.bounds.scale_tanh(base_raw))
    for _ in range(20):
        _, a2 = td3_target(agent, batch)
        assert np.all(np.abs(a2 - base) <= 0.5 * half + 1e-12)


def test_bcq_lambda_one_uses_min(setting):
    space, ds, batch = setting
    hyper = AgentHyper(gamma=0.5, bcq=BcqHyper(lambda_min=1.0))
    agent = BcqAgent.create(ds.state_dim, space, hyper, seed=0)
    _constant_critic(agent.target_critic1, 3.0)
    _constant_critic(agent.target_critic2, 5.0)
    y = bcq_target(agent, batch)
    np.testing.assert_allclose(y, batch.rewards + 0.5 * (1.0 - batch.dones) * 3.0, atol=1e-12)


def test_bcq_phi_zero_returns_decoded_action(setting):
    space, ds, batch = setting
    hyper = AgentHyper(bcq=BcqHyper(phi=0.0, n_action_samples=1))
    agent = BcqAgent.create(ds.state_dim, space, hyper, seed=0)
    state = batch.states[0]
    action = select_action(agent, state, seed=7)
    from dismop.agents import _decode_actions, _state_stream_seed

    rng = np.random.Generator(np.random.PCG64(_state_stream_seed(state, 7)))
    z = np.clip(rng.standard_normal(size=(1, hyper.bcq.latent_dim)), -0.5, 0.5)
    expected = _decode_actions(agent, agent.vae_decoder, state[None, :], z)[0]
    np.testing.assert_array_equal(action, expected)


def test_vae_kl_standard_normal_is_zero():
    mu = np.zeros((4, 8))
    log_std = np.zeros((4, 8))
    assert vae_kl(mu, log_std) == 0.0


def test_vae_kl_positive():
    rng = np.random.Generator(np.random.PCG64(0))
    assert vae_kl(rng.standard_normal((6, 5)), rng.standard_normal((6, 5)) * 0.3) > 0.0


def test_bcq_update_runs_and_losses_finite(setting):
    space, ds, batch = setting
    agent = BcqAgent.create(ds.state_dim, space, AgentHyper(), seed=3)
    losses = bcq_update(agent, batch)
    assert set(losses) == {"vae", "critic", "perturbation"}
    for v in losses.values():
        assert np.isfinite(v)


def test_ddpg_zero_actor_outputs_bounds_midpoint(setting):
    space, ds, _ = setting
    agent = DdpgAgent.create(ds.state_dim, space, AgentHyper(), seed=0)
    for w in agent.actor.weights:
        w[:] = 0.0
    state = np.zeros(ds.state_dim)
    np.testing.assert_allclose(select_action(agent, state), (space.lo + space.hi) / 2.0, atol=1e-15)


def test_selected_actions_always_decode(setting):
    space, ds, batch = setting
    for agent in (
        DdpgAgent.create(ds.state_dim, space, AgentHyper(), seed=0),
        Td3Agent.create(ds.state_dim, space, AgentHyper(), seed=0),
        BcqAgent.create(ds.state_dim, space, AgentHyper(), seed=0),
    ):
        actions = select_actions(agent, batch.states, seed=1)
        for a in actions:
            assert np.all(a >= space.lo - 1e-12) and np.all(a <= space.hi + 1e-12)
            decode_action(space, a)  # must not raise


def test_bcq_select_is_order_independent(setting):
    space, ds, batch = setting
    agent = BcqAgent.create(ds.state_dim, space, AgentHyper(), seed=5)
    single = select_action(agent, batch.states[3], seed=11)
    batched = select_actions(agent, batch.states, seed=11)
    np.testing.assert_array_equal(single, batched[3])


def test_nonfinite_loss_aborts(setting):
    space, ds, batch = setting
    agent = DdpgAgent.create(ds.state_dim, space, AgentHyper(), seed=0)
    bad = TransitionBatch(
        states=batch.states,
        actions=batch.actions,
        rewards=np.full_like(batch.rewards, np.inf),
        next_states=batch.next_states,
        dones=batch.dones,
        indices=batch.indices,
    )
    with pytest.raises(NonFiniteLoss):
        ddpg_update(agent, bad)
