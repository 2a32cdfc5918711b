"""Command-line front door: simulate, sweep-tau, compare, verify."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .baselines import MECHANISMS, check_tag, prepare_futures
from .futures import FuturesMarket, FuturesOutcome
from .metrics import export_report, render_csv, render_json
from .model import ConfigError, IngestionError, build_scenario, load_config, with_params
from .transaction import run_monte_carlo
from .verification import audit


def _positive(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _add_common(p: argparse.ArgumentParser, runs: int = 100) -> None:
    p.add_argument("--scenario", required=True, help="scenario config (JSON)")
    p.add_argument("--runs", type=_positive, default=runs)
    p.add_argument("--horizon", type=_positive, default=None,
                   help="transactions the futures messages are spread over (defaults to --runs)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario-seed", type=int, default=None,
                   help="seed for drawing the scenario (defaults to --seed)")
    p.add_argument("--out", default=None, help="report path; stdout when omitted")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--workers", type=int, default=None,
                   help="parallel workers (default: HYBRIDMARKET_WORKERS or 1)")
    p.add_argument("--timing", action="store_true", help="measure decision time (not reproducible)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hybridmarket",
                                     description="Futures plus spot resource trading simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo run of one mechanism")
    _add_common(sim)
    sim.add_argument("--mechanism", default="hybrid", choices=MECHANISMS)

    sweep = sub.add_parser("sweep-tau", help="re-sign futures across overbooking rates")
    _add_common(sweep)
    sweep.add_argument("--mechanism", default="hybrid", choices=MECHANISMS)
    sweep.add_argument("--from", dest="tau_from", type=float, default=0.0)
    sweep.add_argument("--to", dest="tau_to", type=float, default=0.5)
    sweep.add_argument("--step", dest="tau_step", type=float, default=0.05)

    comp = sub.add_parser("compare", help="all mechanisms on one scenario and seed")
    _add_common(comp)

    ver = sub.add_parser("verify", help="audit a futures outcome")
    ver.add_argument("--scenario", required=True)
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--mechanism", default="hybrid", choices=("hybrid", "hybrid_no_risk"))
    ver.add_argument("--outcome", default=None,
                     help="JSON overrides of the matching: {'omega': {es: [mu, ...]}, "
                          "'mu_prices': [[mu, es, price], ...]}")
    ver.add_argument("--pareto", action="store_true", help="also run the exhaustive Pareto search")
    return parser


def _scenario(args):
    cfg = load_config(args.scenario)
    seed = args.scenario_seed if getattr(args, "scenario_seed", None) is not None else args.seed
    return cfg, build_scenario(cfg, seed)


def _emit(reports, args) -> None:
    if args.out:
        export_report(reports, args.out, args.format)
    else:
        text = render_json(reports) if args.format == "json" else render_csv(reports)
        sys.stdout.write(text)


def _simulate(args) -> int:
    cfg, sc = _scenario(args)
    report = run_monte_carlo(sc, check_tag(args.mechanism), args.runs, args.seed, args.workers,
                             cfg.delay_ms, args.timing, horizon=args.horizon)
    _emit([report], args)
    return 0


def _sweep(args) -> int:
    cfg, sc = _scenario(args)
    if args.tau_step <= 0 or args.tau_to < args.tau_from:
        raise ConfigError("sweep needs a positive step and --to >= --from")
    reports = []
    n = int(round((args.tau_to - args.tau_from) / args.tau_step)) + 1
    for idx in range(n):
        tau = round(args.tau_from + idx * args.tau_step, 10)
        scenario = with_params(sc, tau=tau)
        r = run_monte_carlo(scenario, args.mechanism, args.runs, args.seed, args.workers,
                            cfg.delay_ms, args.timing, horizon=args.horizon)
        reports.append(replace(r, mechanism=f"{args.mechanism}@tau={tau:g}"))
    _emit(reports, args)
    return 0


def _compare(args) -> int:
    cfg, sc = _scenario(args)
    reports = [run_monte_carlo(sc, m, args.runs, args.seed, args.workers, cfg.delay_ms, args.timing,
                               horizon=args.horizon)
               for m in MECHANISMS]
    _emit(reports, args)
    return 0


def apply_overrides(outcome: FuturesOutcome, scenario, raw: dict) -> FuturesOutcome:
    """Replace the matching and prices of ``outcome`` (used to audit hand-built outcomes)."""
    prices = dict(outcome.mu_prices)
    for mu, es, price in raw.get("mu_prices", []):
        prices[(int(mu), int(es))] = float(price)
    omega = outcome.omega
    if "omega" in raw:
        omega = {int(j): tuple(sorted(int(i) for i in ms)) for j, ms in raw["omega"].items() if ms}
    market = FuturesMarket(scenario, outcome.enforce_risk)
    e_lambda = {}
    for j, members in omega.items():
        booked = sum(1 for s in outcome.slots if s.es == j)
        e_lambda.update({(i, j): v for i, v in market.e_lambda(j, members, prices, booked).items()})
    mu_match = {i: j for j, ms in omega.items() for i in ms}
    return replace(outcome, omega=omega, mu_match=mu_match, mu_prices=prices, e_lambda=e_lambda)


def _verify(args) -> int:
    cfg = load_config(args.scenario)
    sc = build_scenario(cfg, args.seed)
    outcome = prepare_futures(args.mechanism, sc)
    if args.outcome:
        try:
            raw = json.loads(Path(args.outcome).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read outcome {args.outcome}: {exc}") from exc
        outcome = apply_overrides(outcome, sc, raw)
    report = audit(outcome, sc, pareto=args.pareto)
    sys.stdout.write(report.render())
    return 0 if report.passed else 1


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    handlers = {"simulate": _simulate, "sweep-tau": _sweep, "compare": _compare, "verify": _verify}
    try:
        return handlers[args.command](args)
    except (ConfigError, IngestionError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
