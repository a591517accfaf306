"""``strike-wta`` command line interface."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import re
import sys
from pathlib import Path

from . import bench
from . import rng as rngmod
from .engagement import SimOptions, run_episode, write_trace
from .network import WeightsError
from .ppo import TrainConfig, TrainingError, train, train_best_of
from .plotting import PlotInputError, engagement_svg, learning_curve_svg
from .scenario import (
    NOMINAL,
    SCALE_LABELS,
    TABLE_CASES,
    ConfigError,
    ScenarioConfig,
    ScenarioError,
    load_config,
    make_case,
    parse_scale_label,
    sample_episode,
)
from .solvers import save_instance

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 3
EXIT_WEIGHTS = 4
EXIT_ORACLE = 5
EXIT_INPUT = 6

log = logging.getLogger("strike_wta")


def _scenario(args) -> ScenarioConfig:
    if args.config:
        return load_config(args.config)
    return make_case(args.case)


def _episodes(args, default: int) -> int:
    if args.episodes is not None:
        return args.episodes
    return bench.FULL_EPISODES if getattr(args, "full", False) else default


def _split(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def _split_presets(s: str) -> list[str]:
    """Comma list of presets, where each preset itself may be written ``(m,n)``."""
    return [x.strip() for x in re.split(r",(?![^()]*\))", s) if x.strip()]


def cmd_simulate(args) -> int:
    cfg = _scenario(args)
    n = _episodes(args, 1)
    params = None
    if args.policy == "rl":
        params = bench.resolve_weights(args.weights, cfg.m_max, cfg.n_max)
    policy = bench.make_policy(args.policy, params)
    rows = []
    for i in range(n):
        init = sample_episode(cfg, rngmod.episode_seed(args.seed, i))
        a = policy(init, rngmod.generator(args.seed, rngmod.POLICY, i))
        res = run_episode(init, a, SimOptions(record_trace=(i == 0 and args.trace is not None)))
        if i == 0 and args.trace:
            write_trace(res, args.trace, init.true_values)
        rows.append([i, init.m, init.n, f"{res.destroyed_value:g}", f"{res.reward:g}", res.n_intercepted,
                     " ".join(map(str, a))])
    with _open_out(args.out) as fh:
        w = csv.writer(fh)
        w.writerow(["episode", "m", "n", "destroyed_value", "reward", "intercepted", "assignment"])
        w.writerows(rows)
    return EXIT_OK


class _open_out:
    """Context manager yielding a file for ``path`` or stdout for ``None``/'-'."""

    def __init__(self, path):
        self.path = path

    def __enter__(self):
        if self.path in (None, "-"):
            self.fh = sys.stdout
        else:
            Path(self.path).parent.mkdir(parents=True, exist_ok=True)
            self.fh = open(self.path, "w", newline="")
        return self.fh

    def __exit__(self, *exc):
        if self.fh is not sys.stdout:
            self.fh.close()


def cmd_train(args) -> int:
    if args.config:
        try:
            cfg = TrainConfig.from_dict(json.loads(Path(args.config).read_text()))
        except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
            raise ConfigError(f"{args.config}: {exc}") from exc
    elif args.smoke:
        cfg = smoke_config()
    else:
        cfg = TrainConfig()
    over = {}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.episodes is not None:
        over["episodes_per_rollout"] = args.episodes
    if args.iterations is not None:
        over["max_iterations"] = args.iterations
    if args.policy_lr is not None:
        over["policy_lr"] = args.policy_lr
    cfg = TrainConfig.from_dict({**cfg.to_dict(), **over})
    out = Path(args.out or "train_out")
    if args.seeds:
        best, scores = train_best_of(cfg, [int(s) for s in _split(args.seeds)], out)
        print(f"best seed {best}: held-out medians {scores}")
    else:
        _, rows = train(cfg, out, resume=not args.no_resume)
        if rows:
            print(f"{len(rows)} iterations, final mean reward {float(rows[-1]['mean_reward']):.3f}")
    return EXIT_OK


def smoke_config() -> TrainConfig:
    scen = NOMINAL.replace(m_max=8, n_max=5, m_range=(8, 8), n_range=(5, 5), case_label="smoke")
    return TrainConfig(episodes_per_rollout=500, max_iterations=50, scenario=scen)


def cmd_eval(args) -> int:
    cfg = _scenario(args)
    rep = bench.evaluate(cfg.case_label, args.policy, _episodes(args, bench.DESK_EPISODES), args.seed, args.weights,
                         args.jobs, config=cfg, node_budget=args.node_budget, timing=not args.no_timing)
    with _open_out(args.out) as fh:
        _write_reports(fh, [rep])
    return EXIT_OK


def _write_reports(fh, reports, columns=bench.REPORT_COLUMNS):
    w = csv.writer(fh)
    w.writerow(columns)
    for r in reports:
        row = r.row() if hasattr(r, "row") else r
        w.writerow([bench.format_value(row[c]) for c in columns])


def cmd_compare(args) -> int:
    if args.config:
        configs = [load_config(args.config)]
    else:
        cases = _split(args.cases) if args.cases else (list(TABLE_CASES) if args.full else [args.case])
        configs = [make_case(c) for c in cases]
    policies = _split(args.policies)
    for p in policies:
        if p not in bench.POLICIES:
            raise ConfigError(f"unknown policy {p!r}; choose from {', '.join(bench.POLICIES)}")
    reps = bench.compare(None, policies, _episodes(args, bench.DESK_EPISODES), args.seed, None, args.weights,
                         args.jobs, args.node_budget, not args.no_timing, configs=configs)
    with _open_out(args.out) as fh:
        _write_reports(fh, reps)
    return EXIT_OK


def cmd_scale(args) -> int:
    presets = _split_presets(args.presets) if args.presets else list(SCALE_LABELS)
    weights = {}
    for item in args.weights or []:
        if "=" in item:
            label, path = item.split("=", 1)
        else:
            label, path = "(20,12)", item
        size = parse_scale_label(label)
        if size is None:
            raise ConfigError(f"unknown scale preset {label!r}")
        weights[f"({size[0]},{size[1]})"] = path
    if args.untrained:
        for p in presets:
            size = parse_scale_label(p)
            key = f"({size[0]},{size[1]})" if size else p
            if key not in weights and key != "(20,12)":
                weights[key] = bench.UNTRAINED
    rows = bench.scale_bench(presets, _episodes(args, 1000), args.seed, weights, args.jobs,
                             tuple(_split(args.policies)), timing=not args.no_timing)
    with _open_out(args.out) as fh:
        _write_reports(fh, rows, bench.SCALE_COLUMNS)
    return EXIT_OK


def cmd_plot(args) -> int:
    if args.kind == "learning-curve":
        learning_curve_svg(args.input, args.out)
    else:
        engagement_svg(args.input, args.out)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    rep = bench.oracle_check(args.instances, args.seed)
    for line in rep.lines():
        print(line)
    if rep.failures:
        out = Path(args.out or "oracle_failures")
        out.mkdir(parents=True, exist_ok=True)
        for k, inst in enumerate(rep.failures):
            save_instance(inst, out / f"failure_{k:03d}.json")
        print(f"failing instances written to {out}")
    return EXIT_OK if rep.passed else EXIT_ORACLE


def _common_parser(repeat_weights: bool) -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario JSON (overrides --case)")
    common.add_argument("--case", default="Nominal", help="named case, e.g. Nominal or (40,24)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--episodes", type=int)
    common.add_argument("--policy", default="heuristic", choices=bench.POLICIES)
    if repeat_weights:
        common.add_argument("--weights", action="append", help="label=path per preset, repeatable")
    else:
        common.add_argument("--weights", help="policy weights (.npz); default is the packaged (20, 12) policy")
    common.add_argument("--out", help="output path ('-' or omitted: stdout)")
    common.add_argument("--jobs", type=int, default=1)
    common.add_argument("--full", action="store_true", help="full-scale episode counts (30000)")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser(repeat_weights=False)
    timing = argparse.ArgumentParser(add_help=False)
    timing.add_argument("--no-timing", action="store_true", help="leave latency columns empty (bit-reproducible output)")
    timing.add_argument("--node-budget", type=int, default=bench.BENCH_NODE_BUDGET, help="bnb node budget")

    ap = argparse.ArgumentParser(prog="strike-wta", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="run episodes and write per-episode results")
    p.add_argument("--trace", help="write the first episode's trajectory CSV here")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="PPO training")
    p.add_argument("--config", help="training config JSON")
    p.add_argument("--smoke", action="store_true", help="small (8, 5) configuration")
    p.add_argument("--seed", type=int)
    p.add_argument("--episodes", type=int, help="episodes per rollout")
    p.add_argument("--iterations", type=int)
    p.add_argument("--policy-lr", type=float)
    p.add_argument("--seeds", help="comma list of seeds: train each and keep the best")
    p.add_argument("--out", help="output directory")
    p.add_argument("--no-resume", action="store_true")
    p.add_argument("--jobs", type=int, default=1, help="accepted for uniformity; training is single process")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", parents=[common, timing], help="evaluate one policy on one case")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", parents=[common, timing], help="policies x cases table")
    p.add_argument("--cases", help="comma list of cases (default --case; --full: all table cases)")
    p.add_argument("--policies", default="rl,bnb,heuristic")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("scale", parents=[_common_parser(repeat_weights=True), timing], help="scalability presets")
    p.add_argument("--presets", help=f"comma list from {' '.join(SCALE_LABELS)}")
    p.add_argument("--policies", default="rl,heuristic")
    p.add_argument("--untrained", action="store_true",
                   help="use freshly initialized networks for presets without weights (latency only)")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("plot", help="SVG plots")
    p.add_argument("kind", choices=["learning-curve", "engagement"])
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("oracle-check", help="verify solvers against enumeration")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="directory for failing instances")
    p.set_defaults(func=cmd_oracle_check)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ScenarioError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (bench.MissingWeightsError, WeightsError) as exc:
        print(f"weights error: {exc}", file=sys.stderr)
        return EXIT_WEIGHTS
    except PlotInputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
