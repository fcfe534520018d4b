"""Command-line entry point: ``ttfs <subcommand> [options]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .baseline import certify_gains
from .config import load_config
from .evaluation import compare, emit_plots, evaluate, read_summary, write_comparison
from .trainer import (Framework, Stage, StagePlan, full_matrix, load_policy, run_ablation,
                      train_stage)
from .env import EnvKind


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None, help="experiment config (INI)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=Path("runs"), help="output directory")
    p.add_argument("--tag", default=None, help="artifact tag (default: seed<seed>)")
    p.add_argument("--paper-scale", action="store_true", help="use the full training budgets")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ttfs", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="baseline-only closed-loop run")
    _common(p)
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--plots", action="store_true")

    p = sub.add_parser("train-tether", help="stage 1: tether policy")
    _common(p)
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--reset", choices=["random", "fixed"], default="random")
    p.add_argument("--raw-obs", action="store_true", help="disable observation normalisation")

    p = sub.add_parser("train-sat", help="stage 2: satellite policy over a frozen tether policy")
    _common(p)
    p.add_argument("--checkpoint", type=Path, default=None, help="tether-stage checkpoint")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--reset", choices=["random", "fixed"], default="random")
    p.add_argument("--raw-obs", action="store_true")
    p.add_argument("--centralized", action="store_true", help="single agent over both subsystems")

    p = sub.add_parser("train-ablation", help="reset x framework x normalisation matrix")
    _common(p)
    p.add_argument("--seeds", type=int, nargs="+", default=None, help="default: seed and seed+1")
    p.add_argument("--episodes", type=int, default=None)
    p.add_argument("--satellite-episodes", type=int, default=None)
    p.add_argument("--cells", nargs="+", default=None,
                   help="subset of cell labels such as random-hierarchical-norm")

    p = sub.add_parser("evaluate", help="deterministic evaluation of trained policies")
    _common(p)
    p.add_argument("--checkpoint", type=Path, action="append", default=[],
                   help="tether, satellite or centralized checkpoint (repeatable)")
    p.add_argument("--t-final", type=float, default=None)
    p.add_argument("--no-plots", action="store_true")

    p = sub.add_parser("compare", help="compare two evaluation summaries")
    p.add_argument("summary_a", type=Path)
    p.add_argument("summary_b", type=Path)
    p.add_argument("--out", type=Path, default=None, help="write the table as CSV")

    p = sub.add_parser("certify-gains", help="Lyapunov certificates for the configured gains")
    p.add_argument("--config", type=Path, default=None)
    p.add_argument("--l-min", type=float, default=None, help="override the certificate tether length")
    return parser


def _tag(args) -> str:
    return args.tag or f"seed{args.seed}"


def _write_eval(report, out: Path, name: str, plots: bool) -> None:
    series = out / "reports" / f"{name}-series.csv"
    summary = out / "reports" / f"{name}-summary.csv"
    report.write(series, summary)
    for key, value in report.summary_rows():
        print(f"{key:22s} {value}")
    print(f"wrote {summary}")
    if plots:
        for path in emit_plots([report], out / "plots" / name):
            print(f"wrote {path}")


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    report = evaluate(cfg, seed=args.seed, t_final=args.t_final)
    _write_eval(report, args.out, f"simulate-{_tag(args)}", args.plots)
    return 0


def _report_stage(result) -> None:
    status = f"converged after {result.converged_at} episodes" if result.converged else "did not converge"
    print(f"{result.plan.name}: {len(result.rewards)} episodes, {status}")
    print(f"wrote {result.checkpoint}")
    print(f"wrote {result.log}")


def cmd_train_tether(args) -> int:
    cfg = load_config(args.config)
    overrides = {"reset_mode": args.reset, "normalize": not args.raw_obs}
    if args.episodes:
        overrides["episodes"] = args.episodes
    plan = StagePlan.from_config(Stage.TETHER, cfg, args.paper_scale, **overrides)
    _report_stage(train_stage(plan, cfg, args.seed, args.out, _tag(args)))
    return 0


def cmd_train_sat(args) -> int:
    cfg = load_config(args.config)
    overrides = {"reset_mode": args.reset, "normalize": not args.raw_obs}
    if args.centralized:
        overrides["framework"] = Framework.CENTRALIZED
    if args.episodes:
        overrides["episodes"] = args.episodes
    plan = StagePlan.from_config(Stage.SATELLITE, cfg, args.paper_scale, **overrides)
    result = train_stage(plan, cfg, args.seed, args.out, _tag(args),
                         tether_checkpoint=None if args.centralized else args.checkpoint)
    _report_stage(result)
    return 0


def cmd_train_ablation(args) -> int:
    cfg = load_config(args.config)
    seeds = args.seeds or [args.seed, args.seed + 1]
    cells = full_matrix()
    if args.cells:
        unknown = set(args.cells) - {c.label for c in cells}
        if unknown:
            raise SystemExit(f"unknown cells: {sorted(unknown)}")
        cells = [c for c in cells if c.label in args.cells]
    if args.episodes:
        episodes = args.episodes
    else:
        episodes = cfg.train.paper_tether_episodes if args.paper_scale else cfg.train.tether_episodes
    rows = run_ablation(cells, seeds, cfg, args.out, _tag(args), episodes, args.satellite_episodes)
    for r in rows:
        print(f"{r['cell']:32s} seed={r['seed']:<4} rank={r['rank']:<3} {r['status']}"
              f" (episodes to convergence: {r['episodes_to_convergence']})")
    print(f"wrote {args.out / 'reports' / f'ablation-{_tag(args)}.csv'}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = load_config(args.config)
    policies = {}
    for path in args.checkpoint:
        pol = load_policy(path)
        policies[pol.kind] = pol
    report = evaluate(cfg, seed=args.seed, t_final=args.t_final,
                      tether_policy=policies.get(EnvKind.TETHER),
                      satellite_policy=policies.get(EnvKind.SATELLITE),
                      centralized_policy=policies.get(EnvKind.CENTRALIZED))
    baseline = evaluate(cfg, seed=args.seed, t_final=args.t_final)
    tag = _tag(args)
    _write_eval(report, args.out, f"evaluate-{tag}", not args.no_plots)
    baseline.write(args.out / "reports" / f"baseline-{tag}-series.csv",
                   args.out / "reports" / f"baseline-{tag}-summary.csv")
    rows = compare(baseline, report)
    write_comparison(rows, args.out / "reports" / f"compare-{tag}.csv")
    _print_table(rows)
    if not args.no_plots:
        emit_plots([baseline, report], args.out / "plots" / f"compare-{tag}")
    return 0


def _print_table(rows) -> None:
    print(f"{'metric':20s} {'a':>14s} {'b':>14s} {'b/a':>10s} {'reduction%':>11s} winner")
    for r in rows:
        print(f"{r['metric']:20s} {r['a']:14.6g} {r['b']:14.6g} {r['ratio']:10.4g} "
              f"{r['reduction_pct']:11.2f} {r['winner']}")


def cmd_compare(args) -> int:
    rows = compare(read_summary(args.summary_a), read_summary(args.summary_b))
    _print_table(rows)
    if args.out:
        write_comparison(rows, args.out)
    return 0


def cmd_certify_gains(args) -> int:
    cfg = load_config(args.config)
    l_min = args.l_min if args.l_min is not None else cfg.gains.l_min
    tether, sat = certify_gains(cfg.gains.gain_set(), cfg.system, l_min)
    print(tether.report())
    print(sat.report())
    return 0 if tether.valid and sat.valid else 1


COMMANDS = {
    "simulate": cmd_simulate,
    "train-tether": cmd_train_tether,
    "train-sat": cmd_train_sat,
    "train-ablation": cmd_train_ablation,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "certify-gains": cmd_certify_gains,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
