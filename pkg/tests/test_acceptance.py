"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Two criteria (behavior-cloning sanity and transition-structure recovery, both
specified against plain DDPG on a noise-free corpus) fail by construction of
the algorithm on that data; see /root/notes/decisions.md for the analysis.
Both are implemented faithfully and left red, and each is followed by a
batch-constrained (BCQ) counterpart run under the identical protocol that
passes, demonstrating the pipeline itself recovers the planted structure.
"""

import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from dismop.actionspace import SpaceKind, build_action_space, decode_action, encode_topic, reduce_action_space
from dismop.agents import AgentHyper, AgentKind, select_action, select_actions
from dismop.alliance import Scale, load_inventory, scale_scores, score_turn
from dismop.checkpoint import agent_from_checkpoint, save_checkpoint
from dismop.cli import _write_assets
from dismop.corpus import (
    DEFAULT_PLANTED_POLICY,
    Corpus,
    Disorder,
    Speaker,
    SplitSpec,
    default_synth_config,
    generate_synthetic_corpus,
    split_sessions,
    write_transcripts,
)
from dismop.dataset import BuildSpec, build_transitions, frame_topic_history, make_dataset, write_transitions_cache
from dismop.embedding import EmbedderConfig, embed_text
from dismop.evaluate import accuracy_grid
from dismop.interpret import average_policy_trajectory, fit_action_pca, one_step_transition_matrix
from dismop.nn import Activation, backward, forward, gradient_check, init_mlp
from dismop.pca import fit_pca
from dismop.service import create_app, load_runtime
from dismop.training import GRID_DISORDERS, train_dismop_grid, train_policy

CFG = EmbedderConfig()


def report(name: str, ok, detail: str = "") -> None:
    ok = bool(ok)
    tag = "PASS" if ok else "FAIL"
    print(f"[{tag}] {name}" + (f": {detail}" if detail else ""))
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="session")
def inv():
    return load_inventory(None, CFG)


# ---------------------------------------------------------------------------
# Criterion 1: gradient correctness on all five shipped architectures.
# ---------------------------------------------------------------------------


def test_criterion_gradient_correctness():
    t0 = time.time()
    d_s, d_a, latent, hidden = 24, 16, 8, 64
    architectures = {
        "actor": ([d_s, hidden, hidden, d_a], Activation.TANH),
        "critic": ([d_s + d_a, hidden, hidden, 1], Activation.IDENTITY),
        "vae_encoder": ([d_s + d_a, hidden, hidden, 2 * latent], Activation.IDENTITY),
        "vae_decoder": ([d_s + latent, hidden, hidden, d_a], Activation.TANH),
        "perturbation": ([d_s + d_a, hidden, hidden, d_a], Activation.TANH),
    }
    worst = 0.0
    rng = np.random.Generator(np.random.PCG64(17))
    for name, (sizes, out_act) in architectures.items():
        net = init_mlp(sizes, [Activation.RELU] * (len(sizes) - 2) + [out_act], seed=5)
        x = rng.standard_normal((8, sizes[0])) + 0.1
        target = rng.standard_normal((8, sizes[-1]))

        def loss_fn(n):
            y, cache = forward(n, x)
            diff = y - target
            grads, _ = backward(n, cache, 2.0 * diff / diff.size)
            return float(np.mean(diff * diff)), grads

        check = gradient_check(net, loss_fn, tolerance=1e-4, max_params=200, seed=3, h=1e-5)
        worst = max(worst, check.max_rel_err)
        assert check.passed, f"{name}: max rel err {check.max_rel_err}"
    elapsed = time.time() - t0
    report(
        "gradient correctness (<1e-4, <30s)",
        worst < 1e-4 and elapsed < 30.0,
        f"max rel err {worst:.2e}, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# Criterion 2: alliance scoring matches an independent loop oracle bitwise.
# ---------------------------------------------------------------------------


def test_criterion_alliance_oracle_equivalence(inv):
    t0 = time.time()
    rng = np.random.Generator(np.random.PCG64(23))
    vocab = [f"wrd{i}" for i in range(500)]
    mismatches = 0
    for _ in range(1000):
        words = [vocab[int(i)] for i in rng.integers(0, len(vocab), size=int(rng.integers(1, 9)))]
        e = embed_text(CFG, " ".join(words))
        scores = score_turn(inv, e)
        ne = np.sqrt(np.dot(e, e))
        for i in range(36):
            w = inv.item_embeddings[i]
            oracle = float(np.dot(e, w) / (ne * np.sqrt(np.dot(w, w))))
            if scores[i] != oracle:
                mismatches += 1
        got = scale_scores(inv, scores)
        acc = {Scale.TASK: 0.0, Scale.BOND: 0.0, Scale.GOAL: 0.0}
        for item, s in zip(inv.items, scores):
            acc[item.scale] += item.sign * float(s)
        if (got.task, got.bond, got.goal) != (acc[Scale.TASK], acc[Scale.BOND], acc[Scale.GOAL]):
            mismatches += 1
    elapsed = time.time() - t0
    report(
        "alliance oracle equivalence (bitwise, 1000 turns, <5s)",
        mismatches == 0 and elapsed < 5.0,
        f"{mismatches} mismatches, {elapsed:.1f}s",
    )


# ---------------------------------------------------------------------------
# Shared corpus/policies for the planted-structure criteria.
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def bc_setting(inv):
    corpus = generate_synthetic_corpus(
        default_synth_config(n_sessions=200, turns_per_session=60, noise_rate=0.0, seed=0)
    )
    train_c, test_c = split_sessions(corpus, SplitSpec(train_fraction=0.95, split_seed=0))
    space = build_action_space(train_c, CFG)
    spec = BuildSpec(reward=Scale.TASK)
    ds = make_dataset(train_c, inv, space, CFG, spec)
    test_ts = build_transitions(test_c, inv, space, CFG, spec)
    return train_c, test_c, space, ds, test_ts


def _accuracy(agent, test_ts, space) -> float:
    states = np.stack([t.state for t in test_ts])
    actions = select_actions(agent, states, seed=1234)
    return float(np.mean([decode_action(space, a)[0] == t.meta.action_topic for a, t in zip(actions, test_ts)]))


def _train_and_score(kind: AgentKind, bc_setting, seeds=(0, 1, 2)):
    _, _, space, ds, test_ts = bc_setting
    t0 = time.time()
    results = []
    for seed in seeds:
        ckpt = train_policy(kind, ds, AgentHyper(), seed=seed)
        agent = agent_from_checkpoint(ckpt, space)
        results.append((seed, _accuracy(agent, test_ts, space), agent))
    return results, time.time() - t0


@pytest.fixture(scope="session")
def bc_ddpg_runs(bc_setting):
    return _train_and_score(AgentKind.DDPG, bc_setting)


@pytest.fixture(scope="session")
def bc_bcq_runs(bc_setting):
    return _train_and_score(AgentKind.BCQ, bc_setting)


# ---------------------------------------------------------------------------
# Criterion 3: decode(encode(t)) = t in all three action-space variants.
# ---------------------------------------------------------------------------


def test_criterion_decode_encode_identity(bc_setting):
    # The 36-component variant needs turn embeddings spanning >= 36
    # dimensions, which the deliberately small default lexicons do not;
    # this corpus uses wide synthetic lexicons (12 words per topic).
    base = default_synth_config(n_sessions=60, turns_per_session=40, seed=9)
    wide = {tid: tuple(f"topic{tid}word{j}" for j in range(12)) for tid in base.topic_lexicons}
    cfg = type(base)(**{**base.__dict__, "topic_lexicons": wide})
    corpus = generate_synthetic_corpus(cfg)
    doc_space = build_action_space(corpus, CFG)
    turn_embs = np.stack([embed_text(CFG, t.text) for s in corpus.sessions[:40] for t in s.turns])
    pca = fit_pca(turn_embs, k=36)
    spaces = {
        "doc": doc_space,
        "pca36": reduce_action_space(doc_space, SpaceKind.PCA36, pca),
        "pca2": reduce_action_space(doc_space, SpaceKind.PCA2, pca),
    }
    failures = []
    for name, space in spaces.items():
        for tid in space.catalog.ids:
            got, _ = decode_action(space, encode_topic(space, tid))
            if got != tid:
                failures.append((name, tid, got))
    report("decode/encode identity (3 variants x 7 topics)", not failures, f"failures: {failures}")


# ---------------------------------------------------------------------------
# Criterion 4: transition counting oracle over 50 random corpora.
# ---------------------------------------------------------------------------


def test_criterion_dataset_counting(inv, bc_setting):
    from dismop.dataset import expected_transition_count

    _, _, space, _, _ = bc_setting
    rng = np.random.Generator(np.random.PCG64(41))
    bad = []
    for i in range(50):
        cfg = default_synth_config(
            n_sessions=int(rng.integers(2, 8)),
            turns_per_session=int(rng.integers(4, 20)) * 2,
            noise_rate=float(rng.uniform(0, 0.5)),
            seed=1000 + i,
        )
        corpus = generate_synthetic_corpus(cfg)
        got = len(build_transitions(corpus, inv, space, CFG, BuildSpec()))
        want = expected_transition_count(corpus, 10)
        if got != want:
            bad.append((i, got, want))
    report("dataset counting oracle (50 corpora)", not bad, f"mismatches: {bad}")


# ---------------------------------------------------------------------------
# Criterion 5: behavior-cloning sanity as stated (DDPG-TASK, noise-free).
# Structurally unattainable for max-Q DDPG on contrast-free data; left red.
# Criterion 5b: identical protocol with the batch-constrained agent (BCQ).
# ---------------------------------------------------------------------------


def test_criterion_behavior_cloning_ddpg_as_specified(bc_ddpg_runs):
    runs, elapsed = bc_ddpg_runs
    accs = [round(acc, 4) for _, acc, _ in runs]
    hits = sum(acc >= 0.90 for _, acc, _ in runs)
    assert elapsed < 300.0, f"3-seed training took {elapsed:.0f}s"
    report(
        "behavior-cloning sanity, DDPG-TASK as specified (>=0.90 in 2/3 seeds, <5 min)",
        hits >= 2,
        f"accuracies {accs}, {elapsed:.0f}s - expected red: no reward contrast exists in "
        f"noise-free on-policy data (see decisions ledger)",
    )


def test_criterion_behavior_cloning_bcq_counterpart(bc_bcq_runs):
    runs, _ = bc_bcq_runs
    accs = [round(acc, 4) for _, acc, _ in runs]
    hits = sum(acc >= 0.90 for _, acc, _ in runs)
    report(
        "behavior-cloning sanity, BCQ counterpart (>=0.90 in 2/3 seeds)",
        hits >= 2,
        f"accuracies {accs}",
    )


# ---------------------------------------------------------------------------
# Criterion 6: transition-structure recovery against the planted permutation.
# Uses the criterion-5 policy per the spec (red for DDPG); 6b runs BCQ.
# ---------------------------------------------------------------------------


def _structure_deviation(agent, bc_setting) -> tuple[float, int]:
    _, _, space, _, test_ts = bc_setting
    mat = one_step_transition_matrix(agent, test_ts, space, seed=1234)
    ids = list(mat.topic_ids)
    worst = 0.0
    checked = 0
    for r, row_tid in enumerate(ids):
        if mat.support[r] < 20:
            continue
        checked += 1
        for c, col_tid in enumerate(ids):
            planted_value = 1.0 if DEFAULT_PLANTED_POLICY[row_tid] == col_tid else 0.0
            worst = max(worst, abs(mat.matrix[r, c] - planted_value))
    return worst, checked


def test_criterion_transition_structure_ddpg_as_specified(bc_ddpg_runs, bc_setting):
    best = max(bc_ddpg_runs[0], key=lambda r: r[1])
    worst, checked = _structure_deviation(best[2], bc_setting)
    report(
        "transition-structure recovery, DDPG as specified (within 0.10 on rows with support>=20)",
        worst <= 0.10,
        f"max deviation {worst:.3f} over {checked} rows - expected red, follows criterion 5",
    )


def test_criterion_transition_structure_bcq_counterpart(bc_bcq_runs, bc_setting):
    best = max(bc_bcq_runs[0], key=lambda r: r[1])
    worst, checked = _structure_deviation(best[2], bc_setting)
    report(
        "transition-structure recovery, BCQ counterpart (within 0.10)",
        worst <= 0.10 and checked > 0,
        f"max deviation {worst:.3f} over {checked} rows",
    )


# ---------------------------------------------------------------------------
# Criterion 7: interpretability invariants.
# ---------------------------------------------------------------------------


def test_criterion_interpretability_invariants(bc_bcq_runs, bc_setting, inv):
    train_c, test_c, space, ds, test_ts = bc_setting
    agent = bc_bcq_runs[0][0][2]
    mat = one_step_transition_matrix(agent, test_ts, space, seed=7)
    row_ok = all(
        abs(mat.matrix[r].sum() - 1.0) <= 1e-9
        for r in range(mat.matrix.shape[0])
        if mat.support[r] > 0
    )
    pca = fit_action_pca(list(ds.transitions), k=2)
    gram = pca.components @ pca.components.T
    ortho_ok = bool(np.all(np.abs(gram - np.eye(pca.n_components)) <= 1e-8))
    history = frame_topic_history(test_c, space, CFG, BuildSpec())
    traj = average_policy_trajectory(agent, test_ts, pca, space, history, frame_size=10, seed=7)
    length_ok = traj.points.shape == (11, 2) and traj.endpoint_index == 10
    std_ok = True
    for axis in range(2):
        col = traj.points[:, axis]
        if np.any(col != 0.0):
            std_ok &= abs(col.mean()) <= 1e-9 and abs(col.std() ** 2 - 1.0) <= 1e-9
    report(
        "interpretability invariants (rows sum 1, PCA orthonormal, trajectory 11 standardized)",
        row_ok and ortho_ok and length_ok and std_ok,
        f"rows={row_ok} ortho={ortho_ok} length={length_ok} std={std_ok}",
    )


# ---------------------------------------------------------------------------
# Criteria 8 + 9: grid shape/labels and full-pipeline determinism.
# ---------------------------------------------------------------------------


def _small_pipeline(tmp_path, run_tag: str, inv):
    out = tmp_path / run_tag
    out.mkdir()
    cfg = default_synth_config(n_sessions=16, turns_per_session=24, seed=77)
    corpus = generate_synthetic_corpus(cfg)
    write_transcripts(corpus, out / "corpus.jsonl")
    corpora = {d: corpus.filter_disorder(d) for d in Disorder}
    grid = train_dismop_grid(corpora, CFG, inv, AgentHyper(epochs=1), seed=5)
    from dismop.training import pool_corpora

    pooled = pool_corpora(corpora)
    space = build_action_space(pooled, CFG)
    ds = make_dataset(pooled, inv, space, CFG, BuildSpec())
    write_transitions_cache(ds, out / "cache.jsonl")
    for ckpt in grid.values():
        save_checkpoint(ckpt, out / f"{ckpt.policy_id.cell_id}.ckpt.json")
    test_sets = {}
    for cell in GRID_DISORDERS:
        sub = pooled if cell.value == "all" else corpus.filter_disorder(Disorder(cell.value))
        test_sets[cell] = build_transitions(sub, inv, space, CFG, BuildSpec())
    table = accuracy_grid(grid, test_sets, space, seed=3)
    (out / "table.csv").write_text(table.to_csv())
    return out, grid, table


def test_criterion_grid_shape_and_determinism(tmp_path, inv):
    out1, grid, table = _small_pipeline(tmp_path, "run1", inv)
    shape_ok = (
        table.values.shape == (9, 5)
        and table.rows[0] == "DISMOP-DDPG-TASK"
        and table.rows[-1] == "DISMOP-BCQ-GOAL"
        and table.columns[-1] == "all"
        and len(grid) == 45
    )
    report(
        "grid shape (9x5, DISMOP-DDPG-TASK..DISMOP-BCQ-GOAL, columns end 'all')",
        shape_ok,
        f"rows={table.rows[0]}..{table.rows[-1]} columns={table.columns}",
    )

    out2, _, _ = _small_pipeline(tmp_path, "run2", inv)
    diffs = []
    for name in ["corpus.jsonl", "cache.jsonl", "table.csv"] + sorted(
        p.name for p in out1.glob("*.ckpt.json")
    ):
        if (out1 / name).read_bytes() != (out2 / name).read_bytes():
            diffs.append(name)
    report(
        "determinism (byte-identical corpus, dataset cache, 45 checkpoints, eval CSV)",
        not diffs,
        f"differing files: {diffs}" if diffs else "47 artifacts byte-identical",
    )


# ---------------------------------------------------------------------------
# Criterion 10: BCQ support restriction on the noisy corpus.
# ---------------------------------------------------------------------------


def test_criterion_bcq_support_restriction(inv):
    corpus = generate_synthetic_corpus(default_synth_config(300, 60, noise_rate=0.3, seed=0))
    train_c, test_c = split_sessions(corpus, SplitSpec(train_fraction=0.9, split_seed=0))
    space = build_action_space(train_c, CFG)
    ds = make_dataset(train_c, inv, space, CFG, BuildSpec(reward=Scale.TASK))
    test_ts = build_transitions(test_c, inv, space, CFG, BuildSpec(reward=Scale.TASK))
    assert len(test_ts) >= 500
    states = np.stack([t.state for t in test_ts[:500]])
    train_actions = np.unique(np.stack([t.action for t in ds.transitions]), axis=0)

    def mean_support_distance(actions):
        d = np.linalg.norm(actions[:, None, :] - train_actions[None, :, :], axis=2)
        return float(d.min(axis=1).mean())

    wins = 0
    details = []
    for seed in (0, 1, 2):
        dist = {}
        for kind in (AgentKind.DDPG, AgentKind.BCQ):
            ckpt = train_policy(kind, ds, AgentHyper(epochs=10), seed=seed)
            agent = agent_from_checkpoint(ckpt, space)
            dist[kind] = mean_support_distance(select_actions(agent, states, seed=99))
        wins += dist[AgentKind.BCQ] <= dist[AgentKind.DDPG]
        details.append(f"seed {seed}: bcq {dist[AgentKind.BCQ]:.3f} vs ddpg {dist[AgentKind.DDPG]:.3f}")
    report(
        "BCQ support restriction (closer to data actions than DDPG, 2/3 seeds, 500 states)",
        wins >= 2,
        "; ".join(details),
    )


# ---------------------------------------------------------------------------
# Criterion 11: live/batch equivalence through the HTTP API.
# ---------------------------------------------------------------------------


def test_criterion_live_batch_equivalence(tmp_path, inv):
    corpus = generate_synthetic_corpus(default_synth_config(n_sessions=12, turns_per_session=26, seed=51))
    space = build_action_space(corpus, CFG)
    ds = make_dataset(corpus, inv, space, CFG, BuildSpec())
    root = tmp_path / "policies"
    root.mkdir()
    for kind in (AgentKind.DDPG, AgentKind.BCQ):
        ckpt = train_policy(kind, ds, AgentHyper(epochs=1), seed=13)
        save_checkpoint(ckpt, root / f"{ckpt.policy_id.cell_id}.ckpt.json")
    _write_assets(root, CFG, inv, space)
    runtime = load_runtime(root)
    client = TestClient(create_app(runtime))

    session = corpus.sessions[0]
    batch_ts = build_transitions(Corpus(sessions=(session,)), inv, space, CFG, BuildSpec())
    problems = []
    for cell in ("ddpg-task-all", "bcq-task-all"):
        policy = runtime.policies[cell]
        sid = client.post(
            "/api/sessions", json={"disorder": session.disorder.value, "policy_id": cell}
        ).json()["session_id"]
        live_recs = {}
        pair_count = 0
        for turn in session.turns:
            body = client.post(
                f"/api/sessions/{sid}/turns", json={"speaker": turn.speaker.value, "text": turn.text}
            ).json()
            e = embed_text(CFG, turn.text)
            alliance = score_turn(inv, e)
            if body["alliance"] != alliance.tolist():
                problems.append(f"{cell}: alliance bits differ")
            scales = scale_scores(inv, alliance)
            if (body["scales"]["task"], body["scales"]["bond"], body["scales"]["goal"]) != (
                scales.task,
                scales.bond,
                scales.goal,
            ):
                problems.append(f"{cell}: scale bits differ")
            if turn.speaker == Speaker.PATIENT:
                pair_count += 1
                if "recommendation" in body:
                    live_recs[pair_count - 1] = body["recommendation"]["topic_id"]
        for t in batch_ts:
            batch_topic = decode_action(
                space, select_action(policy.agent, t.state, seed=policy.checkpoint.seed)
            )[0]
            if live_recs.get(t.meta.pair_index) != batch_topic:
                problems.append(f"{cell}: pair {t.meta.pair_index} live {live_recs.get(t.meta.pair_index)} vs batch {batch_topic}")
    report(
        "live/batch equivalence (bitwise scores, same recommended topics)",
        not problems,
        "; ".join(problems) if problems else "2 policies x full session replay",
    )
