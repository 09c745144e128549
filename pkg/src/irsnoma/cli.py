"""Command-line entry point: ``irsnoma {train,evaluate,compare,gradcheck,oracle}``.

Every subcommand exits with status 0 only when its invariant checks pass:
hard constraints for ``train`` / ``evaluate`` / ``compare``, the numeric
suites for ``gradcheck`` / ``oracle``.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import checks, harness
from .agent import VARIANTS
from .world import ConfigError


def _seed_list(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            a, b = part.split("-", 1)
            out += range(int(a), int(b) + 1)
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty seed list")
    return tuple(out)


def _variant_list(text: str) -> tuple:
    out = tuple(v.strip() for v in text.split(",") if v.strip())
    for v in out:
        if v not in VARIANTS:
            raise argparse.ArgumentTypeError(f"unknown variant {v!r}; choose from {', '.join(VARIANTS)}")
    return out


def _common(p: argparse.ArgumentParser):
    p.add_argument("--config", type=Path, help="JSON experiment config (keys documented in README)")
    p.add_argument("--preset", choices=harness.PRESETS, default="desk", help="named config used when --config is absent")
    p.add_argument("--seeds", type=_seed_list, help="comma list or ranges, e.g. 0,1,2 or 0-9")
    p.add_argument("--variant", type=_variant_list, help="comma list of " + ", ".join(VARIANTS))
    p.add_argument("--scheme", action="append", help="scheme name from the config (repeatable)")
    p.add_argument("--episodes", type=int, help="episode budget override")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="irsnoma", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train and greedily evaluate (scheme, variant, seed) runs")
    _common(p)

    p = sub.add_parser("evaluate", help="greedy rollout of a saved checkpoint")
    _common(p)
    p.add_argument("--checkpoint", type=Path, required=True)

    p = sub.add_parser("compare", help="every scheme with d3qn plus every variant on the first scheme")
    _common(p)

    p = sub.add_parser("gradcheck", help="backprop against central differences on random nets")
    p.add_argument("--nets", type=int, default=100)
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("oracle", help="brute-force cross-checks on small instances")
    p.add_argument("--trials", type=int, default=1000)
    return parser


def load(args) -> harness.ExperimentConfig:
    cfg = harness.load_config(args.config) if args.config else harness.preset(args.preset)
    over = {}
    if args.seeds:
        over["seeds"] = args.seeds
    if args.variant:
        over["variants"] = args.variant
    if args.episodes is not None:
        over["episodes"] = args.episodes
    if args.out is not None:
        over["output_dir"] = str(args.out)
    return replace(cfg, **over) if over else cfg


def _report(results) -> bool:
    ok = True
    for r in results:
        hard = sum(v for k, v in r.violations.items() if k != "qos")
        ok &= r.hard_ok
        conv = "none" if r.convergence is None else r.convergence
        print(f"{r.scheme:>14} {r.variant:>12} seed {r.seed:<3} greedy sum-rate {r.greedy_sum_rate:9.4f} "
              f"convergence {conv!s:>5} checks {r.checked} hard violations {hard}")
    return ok


def _print_checks(results) -> bool:
    for c in results:
        print(f"{'PASS' if c.ok else 'FAIL'} {c.name} {c.detail}".rstrip())
    return all(c.ok for c in results)


def cmd_train(args) -> bool:
    cfg = load(args)
    schemes = args.scheme or [cfg.scheme().name]
    results = harness.run_suite(cfg, schemes=schemes, jobs=args.jobs)
    return _report(results)


def cmd_compare(args) -> bool:
    cfg = load(args)
    schemes = args.scheme or [s.name for s in cfg.schemes]
    results = harness.run_comparison(cfg, schemes=schemes, jobs=args.jobs)
    ok = _report(results)
    groups = {(r.scheme, r.variant) for r in results}
    if len(groups) >= 2:
        table = harness.compare_variants(results, cfg.episodes)
        for g in table["groups"]:
            print(f"{g['scheme']:>14} {g['variant']:>12} sum-rate {g['sum_rate_mean']:.4f} +- {g['sum_rate_se']:.4f} "
                  f"convergence {g['convergence_mean']:.1f} +- {g['convergence_se']:.1f}")
    return ok


def cmd_evaluate(args) -> bool:
    cfg = load(args)
    spec = cfg.scheme(args.scheme[0] if args.scheme else None)
    variant = cfg.variants[0]
    seed = cfg.seeds[0]
    stats, env = harness.evaluate_checkpoint(cfg, spec, variant, seed, args.checkpoint)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    res = env.grid.resolution
    harness.write_trajectory_rows(out / "trajectories.csv", stats.trajectories, res)
    harness.write_csv(out / "rates.csv", harness.RATE_HEADER, stats.rate_rows)
    harness.write_csv(out / "sumrate_vs_path.csv", harness.PATH_HEADER, harness.sumrate_vs_path(stats, res))
    print(f"greedy sum-rate {stats.mean_sum_rate:.4f} over {stats.steps} steps; "
          f"constraint checks {env.log.checked}, violations {dict(env.log.violations)}")
    return env.log.hard_ok()


def cmd_gradcheck(args) -> bool:
    return _print_checks(checks.gradcheck_suite(args.nets, args.tol, seed=args.seed))


def cmd_oracle(args) -> bool:
    return _print_checks(checks.oracle_suites(args.trials))


COMMANDS = {
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "gradcheck": cmd_gradcheck,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        ok = COMMANDS[args.command](args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
