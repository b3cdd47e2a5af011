"""Command-line entry point: ``busems <subcommand> [options]``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import scenario as sc
from .config import Config, ConfigError, load_config
from .dp import InfeasibleProblemError, RolloutInfeasibleError, rollout, solve_backward
from .hess import InfeasiblePowerError
from .predict import format_rmse_table, save_model, write_passenger_csv, write_weather_csv
from .synth import synth_cycle, synth_passengers
from .vehicle import cycle_to_profile, write_cycle_csv

STRATEGY_NAMES = {"dp-oracle": "dp_oracle", "rule": "pure_rule", "cloud": "cloud"}


class UsageError(Exception):
    pass


def _config(args) -> tuple[Config, Path | None]:
    if args.config is None:
        cfg, base = Config(), None
    else:
        cfg, base = load_config(args.config), Path(args.config).parent
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg, base


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _scenario(args, cfg, base):
    hour = cfg.scenario.peak_hour if args.hour is None else args.hour
    scen = sc.hour_scenario(cfg, hour, base)
    if args.load_factor is not None:
        scen.true_load = args.load_factor
    return scen


def _totals_line(name: str, totals) -> str:
    return (f"{name}: total {totals.total:.6f} USD (aging {totals.aging_cost:.6f}, "
            f"electric {totals.electric_cost:.6f}, penalty {totals.penalty_cost:.6f})")


def cmd_synth_cycle(args) -> int:
    seed = 11 if args.seed is None else args.seed
    cycle = synth_cycle(seed, args.duration)
    path = _out(args) / "cycle.csv"
    write_cycle_csv(cycle, path)
    print(f"wrote {path} ({len(cycle)} samples, max speed {cycle.speed.max():.2f} m/s)")
    return 0


def cmd_synth_passengers(args) -> int:
    cfg = Config().scenario
    seed = cfg.data_seed if args.seed is None else args.seed
    records, weather = synth_passengers(seed, cfg.date("data_start"), cfg.date("data_end"))
    out = _out(args)
    write_passenger_csv(records, out / "passengers.csv")
    write_weather_csv(weather, out / "weather.csv")
    print(f"wrote {out / 'passengers.csv'} ({len(records)} rows) and {out / 'weather.csv'}")
    return 0


def cmd_predict(args) -> int:
    cfg, base = _config(args)
    split = sc.split_ridership(cfg, base)
    models = sc.train_predictors(cfg, split.train)
    table = format_rmse_table(sc.prediction_table(models, split.test))
    out = _out(args)
    (out / "rmse_table.csv").write_text(table)
    for name, m in models.items():
        save_model(m, out / f"{name}.model")
    sys.stdout.write(table)
    return 0


def cmd_solve(args) -> int:
    cfg, base = _config(args)
    setup = sc.build_setup(cfg)
    cycle = sc.load_cycle(cfg, base)
    if args.load_factor is not None:
        load = args.load_factor
    else:
        hour = cfg.scenario.peak_hour if args.hour is None else args.hour
        load = sc.split_ridership(cfg, base).true_load(cfg.scenario.date("eval_date"), hour)
    prof = cycle_to_profile(cycle, setup.vehicle, load)
    if args.horizon is not None:
        prof = dataclasses.replace(prof, demands=prof.demands[:args.horizon])
    init = cfg.scenario.init_state
    sol = solve_backward(prof, setup.grid, init, setup.cost, setup.hess)
    traj = rollout(sol, prof, init)
    path = _out(args) / "trajectory.csv"
    traj.to_csv(path)
    print(f"load factor {load:.4f}, horizon {len(prof)} s")
    print(_totals_line("dp", traj.totals))
    return 0


def cmd_extract_rule(args) -> int:
    cfg, base = _config(args)
    rules = sc.rule_sweep(sc.load_cycle(cfg, base), cfg, sc.build_setup(cfg))
    text = sc.rules_csv(rules)
    (_out(args) / "rules.csv").write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    if args.strategy is None:
        raise UsageError("simulate needs --strategy {dp-oracle,rule,cloud}")
    cfg, base = _config(args)
    scen = _scenario(args, cfg, base)
    strategy = STRATEGY_NAMES[args.strategy]
    ems = sc.ems_config(cfg, strategy, args.horizon, args.replan)
    res = sc.simulate(cfg, scen, strategy, ems=ems)
    res.trajectory.to_csv(_out(args) / f"trajectory_{strategy}.csv")
    print(f"hour {scen.hour:02d}:00, true load factor {scen.true_load:.4f}")
    if res.load_prediction_error is not None:
        print(f"load prediction error {100 * res.load_prediction_error:.2f}%")
    if res.fallback_blocks:
        print(f"planner fell back to the last rule at t = {res.fallback_blocks} s")
    print(_totals_line(strategy, res.totals))
    return 0


def cmd_compare(args) -> int:
    cfg, base = _config(args)
    scen = _scenario(args, cfg, base)
    report = sc.compare(cfg, scen, ems=sc.ems_config(cfg, "cloud", args.horizon, args.replan))
    out = _out(args)
    report.write(out)
    sys.stdout.write((out / "comparison.csv").read_text())
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value configuration file")
    common.add_argument("--seed", type=int, metavar="N")
    common.add_argument("--out", metavar="DIR", default=".", help="output directory (default: .)")
    scen = argparse.ArgumentParser(add_help=False)
    scen.add_argument("--hour", type=int, metavar="H", help="evaluated hour of the held-out day")
    scen.add_argument("--load-factor", type=float, metavar="X", help="override the true load factor")
    scen.add_argument("--horizon", type=int, metavar="S")
    scen.add_argument("--replan", type=int, metavar="S")

    p = argparse.ArgumentParser(prog="busems", description="Battery/supercapacitor bus EMS toolkit.")
    sub = p.add_subparsers(dest="command", metavar="COMMAND")
    s = sub.add_parser("synth-cycle", parents=[common], help="write a synthetic drive cycle")
    s.add_argument("--duration", type=int, default=1200, metavar="S")
    s.set_defaults(func=cmd_synth_cycle)
    sub.add_parser("synth-passengers", parents=[common], help="write synthetic ridership and weather"
                   ).set_defaults(func=cmd_synth_passengers)
    sub.add_parser("predict", parents=[common], help="train the four predictors, print the RMSE table"
                   ).set_defaults(func=cmd_predict)
    sub.add_parser("solve", parents=[common, scen], help="single DP solve and rollout"
                   ).set_defaults(func=cmd_solve)
    sub.add_parser("extract-rule", parents=[common], help="rules over a load-factor sweep"
                   ).set_defaults(func=cmd_extract_rule)
    s = sub.add_parser("simulate", parents=[common, scen], help="run one strategy")
    s.add_argument("--strategy", choices=sorted(STRATEGY_NAMES))
    s.set_defaults(func=cmd_simulate)
    sub.add_parser("compare", parents=[common, scen], help="compare all three strategies"
                   ).set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"busems: error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError, InfeasibleProblemError, RolloutInfeasibleError,
            InfeasiblePowerError) as exc:
        print(f"busems: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
