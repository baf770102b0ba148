"""Command-line entry points: corpus generation, training, evaluation,
interpretation, and the HTTP service."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .actionspace import ActionSpace, build_action_space
from .agents import AgentHyper, AgentKind, DisorderCell
from .alliance import Inventory, Scale, load_inventory
from .checkpoint import load_checkpoint, save_checkpoint
from .corpus import (
    Corpus,
    Disorder,
    SplitSpec,
    SynthConfig,
    generate_synthetic_corpus,
    load_transcripts,
    split_sessions,
    write_transcripts,
)
from .dataset import BuildSpec, ContextMode, build_transitions, make_dataset
from .embedding import EmbedderConfig
from .evaluate import accuracy_grid
from .interpret import average_policy_trajectory, fit_action_pca, one_step_transition_matrix
from .training import GRID_DISORDERS, train_dismop_grid, train_policy


def _data_dir() -> Path | None:
    value = os.environ.get("DISMOP_DATA_DIR")
    return Path(value) if value else None


def _load_embedder(path: str | None) -> EmbedderConfig:
    candidates = [Path(path)] if path else []
    if not candidates and (d := _data_dir()):
        candidates.append(d / "embedder.json")
    for p in candidates:
        if p.exists():
            with open(p, encoding="utf-8") as f:
                return EmbedderConfig.from_json_dict(json.load(f))
    return EmbedderConfig()


def _load_inventory(path: str | None, cfg: EmbedderConfig) -> Inventory:
    if path:
        return load_inventory(path, cfg)
    if (d := _data_dir()) and (p := d / "wai_inventory.json").exists():
        return load_inventory(p, cfg)
    return load_inventory(None, cfg)


def _write_assets(out_dir: Path, cfg: EmbedderConfig, inv: Inventory, space: ActionSpace) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "embedder.json", "w", encoding="utf-8") as f:
        json.dump(cfg.to_json_dict(), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")
    with open(out_dir / "inventory.json", "w", encoding="utf-8") as f:
        json.dump(
            {
                "schema": "dismop-wai/1",
                "items": [
                    {"id": it.item_id, "text": it.text, "scale": it.scale.value, "sign": it.sign}
                    for it in inv.items
                ],
            },
            f,
            sort_keys=True,
            separators=(",", ":"),
        )
        f.write("\n")
    with open(out_dir / "actionspace.json", "w", encoding="utf-8") as f:
        json.dump(space.to_json_dict(), f, sort_keys=True, separators=(",", ":"))
        f.write("\n")


def _cell_corpus(corpus: Corpus, disorder: DisorderCell) -> Corpus:
    if disorder == DisorderCell.ALL:
        return corpus
    return corpus.filter_disorder(Disorder(disorder.value))


def _build_spec(args, reward: Scale) -> BuildSpec:
    return BuildSpec(
        frame_size=args.frame_size,
        reward=reward,
        context_mode=ContextMode(args.context),
    )


def cmd_generate_corpus(args) -> int:
    with open(args.config, encoding="utf-8") as f:
        cfg_dict = json.load(f)
    if args.n_sessions is not None:
        cfg_dict["n_sessions"] = args.n_sessions
    if args.seed is not None:
        cfg_dict["seed"] = args.seed
    if args.noise_rate is not None:
        cfg_dict["noise_rate"] = args.noise_rate
    corpus = generate_synthetic_corpus(SynthConfig.from_json_dict(cfg_dict))
    write_transcripts(corpus, args.out)
    print(f"wrote {len(corpus.sessions)} sessions to {args.out}")
    return 0


def cmd_split(args) -> int:
    corpus = load_transcripts(args.corpus)
    train, test = split_sessions(corpus, SplitSpec(train_fraction=args.fraction, split_seed=args.seed))
    write_transcripts(train, args.train)
    write_transcripts(test, args.test)
    print(f"split {len(corpus.sessions)} sessions into {len(train.sessions)} train / {len(test.sessions)} test")
    return 0


def cmd_train(args) -> int:
    cfg = _load_embedder(args.embedder)
    inv = _load_inventory(args.inventory, cfg)
    corpus = load_transcripts(args.corpus)
    space = build_action_space(corpus, cfg)
    disorder = DisorderCell(args.disorder)
    cell = _cell_corpus(corpus, disorder)
    dataset = make_dataset(cell, inv, space, cfg, _build_spec(args, Scale(args.reward)))
    hyper = AgentHyper(epochs=args.epochs) if args.epochs is not None else AgentHyper()
    ckpt = train_policy(AgentKind(args.agent), dataset, hyper, seed=args.seed, disorder=disorder)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, out)
    _write_assets(out.parent, cfg, inv, space)
    print(f"trained {ckpt.policy_id.cell_id}: {len(dataset)} transitions, wrote {out}")
    return 0


def cmd_train_grid(args) -> int:
    cfg = _load_embedder(args.embedder)
    inv = _load_inventory(args.inventory, cfg)
    corpus = load_transcripts(args.corpus)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    train_parts, test_parts = [], []
    for disorder in Disorder:
        sub = corpus.filter_disorder(disorder)
        if len(sub.sessions) < 2:
            print(f"error: disorder {disorder.value} has {len(sub.sessions)} sessions; need >= 2", file=sys.stderr)
            return 1
        tr, te = split_sessions(sub, SplitSpec(train_fraction=args.fraction, split_seed=args.split_seed))
        train_parts.append(tr)
        test_parts.append(te)
    train_corpora = {d: c for d, c in zip(Disorder, train_parts)}
    test_sessions = tuple(s for c in test_parts for s in c.sessions)
    write_transcripts(Corpus(sessions=tuple(s for c in train_parts for s in c.sessions)), out_dir / "train.jsonl")
    write_transcripts(Corpus(sessions=test_sessions), out_dir / "test.jsonl")

    hyper = AgentHyper(epochs=args.epochs) if args.epochs is not None else AgentHyper()
    grid = train_dismop_grid(
        train_corpora,
        cfg,
        inv,
        hyper,
        seed=args.seed,
        frame_size=args.frame_size,
        context_mode=ContextMode(args.context),
    )
    space = None
    for key, ckpt in grid.items():
        name = ckpt.policy_id.cell_id + ".ckpt.json"
        save_checkpoint(ckpt, out_dir / name)
    # All cells share one action space; rebuild it for the asset files.
    from .training import pool_corpora

    space = build_action_space(pool_corpora(train_corpora), cfg)
    _write_assets(out_dir, cfg, inv, space)
    print(f"trained {len(grid)} checkpoints into {out_dir}")
    return 0


def cmd_eval(args) -> int:
    grid_dir = Path(args.grid_dir)
    with open(grid_dir / "embedder.json", encoding="utf-8") as f:
        cfg = EmbedderConfig.from_json_dict(json.load(f))
    inv = load_inventory(grid_dir / "inventory.json", cfg)
    with open(grid_dir / "actionspace.json", encoding="utf-8") as f:
        space = ActionSpace.from_json_dict(json.load(f))
    checkpoints: dict = {}
    for path in sorted(grid_dir.glob("*.ckpt.json")):
        ckpt = load_checkpoint(path)
        checkpoints[(ckpt.kind, ckpt.reward_scale, ckpt.disorder)] = ckpt
    test_corpus = load_transcripts(args.test)
    test_sets = {}
    for disorder in GRID_DISORDERS:
        cell = _cell_corpus(test_corpus, disorder)
        test_sets[disorder] = build_transitions(cell, inv, space, cfg, _build_spec(args, Scale.TASK))
    grid = accuracy_grid(checkpoints, test_sets, space, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(grid.to_csv(), encoding="utf-8")
    out.with_suffix(".md").write_text(grid.to_markdown(), encoding="utf-8")
    print(grid.to_markdown())
    print(f"wrote {out} and {out.with_suffix('.md')}")
    return 0


def cmd_interpret(args) -> int:
    ckpt_path = Path(args.ckpt)
    root = ckpt_path.parent
    with open(root / "embedder.json", encoding="utf-8") as f:
        cfg = EmbedderConfig.from_json_dict(json.load(f))
    inv = load_inventory(root / "inventory.json", cfg)
    with open(root / "actionspace.json", encoding="utf-8") as f:
        space = ActionSpace.from_json_dict(json.load(f))
    ckpt = load_checkpoint(ckpt_path)
    from .checkpoint import agent_from_checkpoint
    from .dataset import frame_topic_history

    agent = agent_from_checkpoint(ckpt, space)
    spec = BuildSpec(frame_size=ckpt.frame_size, reward=ckpt.reward_scale, context_mode=ckpt.context_mode)
    train_corpus = _cell_corpus(load_transcripts(args.train), ckpt.disorder)
    test_corpus = _cell_corpus(load_transcripts(args.test), ckpt.disorder)
    train_ts = build_transitions(train_corpus, inv, space, cfg, spec)
    test_ts = build_transitions(test_corpus, inv, space, cfg, spec)
    pca = fit_action_pca(train_ts, k=2)
    history = frame_topic_history(test_corpus, space, cfg, spec)
    traj = average_policy_trajectory(agent, test_ts, pca, space, history, ckpt.frame_size, seed=args.seed)
    mat = one_step_transition_matrix(agent, test_ts, space, seed=args.seed)

    traj_path, mat_path = (Path(p.strip()) for p in args.out.split(","))
    traj_path.write_text(json.dumps(traj.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    mat_path.write_text(json.dumps(mat.to_json_dict(), sort_keys=True, separators=(",", ":")) + "\n")
    if args.sidecar:
        sidecar = ckpt_path.with_name(ckpt_path.name.replace(".ckpt.json", ".interp.json"))
        sidecar.write_text(
            json.dumps(
                {"trajectory": traj.to_json_dict(), "transition_matrix": mat.to_json_dict()},
                sort_keys=True,
                separators=(",", ":"),
            )
            + "\n"
        )
        print(f"wrote sidecar {sidecar}")
    print(f"wrote {traj_path} and {mat_path}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_runtime

    runtime = load_runtime(args.policies)
    console = args.console or os.environ.get("DISMOP_CONSOLE_DIR")
    app = create_app(runtime, console_dir=console)
    print(f"serving {len(runtime.policies)} policies on {args.host}:{args.port}")
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def _add_build_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--frame-size", type=int, default=10)
    p.add_argument(
        "--context",
        choices=[m.value for m in ContextMode],
        default=ContextMode.HISTORY_MEAN.value,
    )
    p.add_argument("--embedder", help="embedder config JSON (default: DISMOP_DATA_DIR or built-in)")
    p.add_argument("--inventory", help="inventory JSON (default: DISMOP_DATA_DIR or bundled)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dismop", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-corpus", help="generate a seeded synthetic corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-sessions", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--noise-rate", type=float)
    p.set_defaults(func=cmd_generate_corpus)

    p = sub.add_parser("split", help="session-level train/test split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--fraction", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train one policy cell")
    p.add_argument("--corpus", required=True)
    p.add_argument("--disorder", choices=[d.value for d in DisorderCell], default="all")
    p.add_argument("--agent", choices=[k.value for k in AgentKind], required=True)
    p.add_argument("--reward", choices=[s.value for s in Scale], required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--epochs", type=int)
    p.add_argument("--out", required=True)
    _add_build_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("train-grid", help="train all 3x3x5 policy cells")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--fraction", type=float, default=0.95)
    p.add_argument("--epochs", type=int)
    _add_build_args(p)
    p.set_defaults(func=cmd_train_grid)

    p = sub.add_parser("eval", help="accuracy grid over a grid directory")
    p.add_argument("--grid-dir", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    _add_build_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("interpret", help="trajectory + transition matrix for one checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--out", required=True, help="two comma-separated paths: traj.json,transmat.json")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sidecar", action="store_true", help="also write <ckpt>.interp.json for the service")
    p.set_defaults(func=cmd_interpret)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--port", type=int, default=8080)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--policies", required=True)
    p.add_argument("--console", help="static console build to serve at / (or DISMOP_CONSOLE_DIR)")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
