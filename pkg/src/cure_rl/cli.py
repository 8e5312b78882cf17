"""Command-line entry points: train / pretrain / visitation / plot / gradcheck."""

from __future__ import annotations

import argparse
import logging
import os
import sys

from .config import ExperimentConfig, load_config, save_config, set_by_path
from .diagnostics import run_gradient_suite
from .plotting import plot_reward_curves
from .train import run_cure_only, train
from .visitation import visitation_experiment


def _add_config_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", metavar="PATH", help="config file (key = value lines)")
    p.add_argument("--seed", type=int, metavar="N")
    p.add_argument("--task", metavar="NAME")
    p.add_argument("--steps", type=int, metavar="N")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   dest="overrides", help="dotted-path override, repeatable")
    p.add_argument("--out", metavar="DIR", help="output directory")


def build_config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if args.task is not None:
        cfg.task = args.task
    if args.steps is not None:
        cfg.steps = args.steps
    for item in args.overrides:
        if "=" not in item:
            raise SystemExit(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        set_by_path(cfg, key.strip(), value.strip())
    if args.out:
        cfg.out = args.out
    cfg.validate()
    return cfg


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cure-rl",
        description="Curiosity-driven state-representation RL from pixels")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run the full training protocol")
    _add_config_flags(p_train)
    p_train.add_argument("--resume", metavar="CKPT",
                         help="resume from a main-phase checkpoint")
    p_train.add_argument("--cure-only", action="store_true",
                         help="train only the curious agent (no task reward)")

    p_pre = sub.add_parser("pretrain", help="run only the pretraining phase")
    _add_config_flags(p_pre)

    p_vis = sub.add_parser("visitation",
                           help="score visited states of three policies under a "
                                "frozen SRL model")
    _add_config_flags(p_vis)
    p_vis.add_argument("--srl-ckpt", required=True, metavar="CKPT",
                       help="checkpoint providing the frozen reference SRL model")
    p_vis.add_argument("--task-ckpt", required=True, metavar="CKPT",
                       help="checkpoint providing the task policy")
    p_vis.add_argument("--cure-ckpt", required=True, metavar="CKPT",
                       help="checkpoint providing the curious policy")
    p_vis.add_argument("--episodes", type=int, default=10)

    p_plot = sub.add_parser("plot", help="render reward curves from metric CSVs")
    p_plot.add_argument("csv", nargs="+", help="metrics.csv files (one per seed)")
    p_plot.add_argument("--out", required=True, metavar="SVG")
    p_plot.add_argument("--kind", default="eval", choices=["eval", "train"])
    p_plot.add_argument("--column", default="reward")
    p_plot.add_argument("--title", default="evaluation reward")

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.add_argument("--seed", type=int, default=0)
    p_grad.add_argument("--tol", type=float, default=1e-4)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    args = make_parser().parse_args(argv)

    if args.command == "train":
        cfg = build_config(args)
        out_dir = cfg.out or "runs/latest"
        os.makedirs(out_dir, exist_ok=True)
        save_config(cfg, os.path.join(out_dir, "config.txt"))
        if args.cure_only:
            run_cure_only(cfg, out_dir)
        else:
            train(cfg, out_dir, resume=args.resume)
        print(f"run complete: {out_dir}")
        return 0

    if args.command == "pretrain":
        cfg = build_config(args)
        if cfg.pretrain.mode == "none":
            raise SystemExit("pretrain.mode is 'none'; set --set pretrain.mode=random|cure")
        out_dir = cfg.out or "runs/latest"
        os.makedirs(out_dir, exist_ok=True)
        save_config(cfg, os.path.join(out_dir, "config.txt"))
        from .train import Trainer
        trainer = Trainer(cfg, out_dir)
        trainer.run_pretrain()
        trainer.save_checkpoint(os.path.join(out_dir, "pretrain.ckpt"))
        print(f"pretraining complete: {out_dir}")
        return 0

    if args.command == "visitation":
        cfg = build_config(args)
        out_dir = cfg.out or "runs/latest"
        os.makedirs(out_dir, exist_ok=True)
        out_csv = os.path.join(out_dir, "visitation.csv")
        results = visitation_experiment(cfg, args.srl_ckpt, args.task_ckpt,
                                        args.cure_ckpt, args.episodes, out_csv)
        for name, r in results.items():
            print(f"{name}: min={r['min']:.6g} mean={r['mean']:.6g} max={r['max']:.6g}")
        print(f"wrote {out_csv}")
        return 0

    if args.command == "plot":
        plot_reward_curves(args.csv, args.out, kind=args.kind,
                           column=args.column, title=args.title)
        print(f"wrote {args.out}")
        return 0

    if args.command == "gradcheck":
        _, worst = run_gradient_suite(seed=args.seed, tol=args.tol)
        return 0 if worst < args.tol else 1

    raise SystemExit(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
