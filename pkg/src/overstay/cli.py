"""Command line entry point.

    overstay price-event   --arrival 9 --duration 4 --soc-init 0.2 --soc-need 0.8 --battery 24
    overstay simulate      --seed 3 --out results/
    overstay montecarlo    --episodes 50 --poles 6 --out results/
    overstay sensitivity   --counts 2,4,6,8 --out results/
    overstay init-config   scenario.ini

Exit codes: 0 ok, 2 bad config or input data, 3 infeasible session,
4 pricing solver did not converge.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, Scenario, ScenarioConfig
from .datafiles import DataFileError, demand_stats, dumps_json, write_csv, write_json, write_series_csv
from .plots import plot_day, plot_histograms, plot_sensitivity
from .pricing_solver import bcd_solve
from .simulator import (
    BASELINE,
    CONTROLLED,
    METRICS,
    episode_seeds,
    monte_carlo,
    run_episode,
    sample_day,
    sensitivity_sweep,
)
from .station_model import ChargingSession, InfeasibleSessionError, expected_overstay

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED = 0, 2, 3, 4
OUT_ENV = "OVERSTAY_OUT"
log = logging.getLogger("overstay")


def _scenario(args) -> Scenario:
    cfg = ScenarioConfig.from_ini(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg.simulation.seed = args.seed
    if args.poles is not None:
        cfg.station.poles = args.poles
    if getattr(args, "episodes", None) is not None:
        cfg.simulation.episodes = args.episodes
    return cfg.build()


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get(OUT_ENV) or "results")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_price_event(args) -> int:
    sc = _scenario(args)
    t = sc.tariff
    try:
        session = ChargingSession(
            arrival_step=t.step_of(args.arrival),
            horizon_steps=max(1, int(round(args.duration / t.step_hours))),
            soc_init=args.soc_init,
            soc_need=args.soc_need,
            battery_capacity=args.battery,
            efficiency=sc.station.efficiency,
            p_min=sc.station.p_min,
            p_max=sc.station.p_max,
            u_nom=sc.station.u_nom,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    from .behavior import ExogenousFeatures

    w = ExogenousFeatures(float(t.clock(session.arrival_step)), session.horizon_steps * t.step_hours,
                          args.battery, args.soc_init, args.soc_need)
    try:
        res = bcd_solve(session, t, sc.behavior.params.effective_theta(w), sc.behavior.overstay, sc.solver)
    except InfeasibleSessionError as exc:
        print(f"infeasible session: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    out = res.summary()
    over = sc.solver.lam_g * expected_overstay(sc.behavior.overstay, res.z_star.y)
    out["flex_charging_cost"] = res.costs.h_flex - over
    out["expected_overstay_h"] = expected_overstay(sc.behavior.overstay, res.z_star.y)
    out["session"] = {
        "arrival_step": session.arrival_step,
        "horizon_steps": session.horizon_steps,
        "soc_init": session.soc_init,
        "soc_need": session.soc_need,
        "battery_kwh": session.battery_capacity,
    }
    text = dumps_json(out)
    sys.stdout.write(text)
    if args.out:
        (_out_dir(args) / "price_event.json").write_text(text)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def cmd_simulate(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args)
    day_rng, event_seed = episode_seeds(sc.seed, 1)[0]
    day = sample_day(sc.demand, day_rng, sc.tariff.step_hours)
    runs = {mode: run_episode(day, sc.station, sc.tariff, mode, sc.behavior, sc.solver, event_seed) for mode in (CONTROLLED, BASELINE)}
    for mode, m in runs.items():
        write_series_csv(out / f"day_{mode}.csv", m.series)
    cols = ["mode", "index", "arrival", "choice", "z_flex", "z_asap", "y", "p_flex", "p_asap", "p_leave", "energy_kwh", "overstay_h", "departure"]
    write_csv(out / "day_events.csv", cols, ([r.get(c) for c in cols] for m in runs.values() for r in m.events))
    write_json(out / "day_summary.json", {mode: m.scalars() for mode, m in runs.items()})
    plot_day({mode: m.series for mode, m in runs.items()}, out / "day.svg")
    _report(f"simulated one day with {len(day)} arrivals -> {out}")
    return EXIT_OK


def _progress(k, n):
    if k == n or k % 10 == 0:
        log.info("episode %d/%d", k, n)


def cmd_montecarlo(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args)
    mc = monte_carlo(sc.demand, sc.station, sc.tariff, sc.behavior, sc.solver, sc.episodes, sc.seed, progress=_progress)
    names = list(mc.controlled[0].scalars())
    rows = []
    for k, (c, b) in enumerate(zip(mc.controlled, mc.baseline)):
        rows.append([k, CONTROLLED] + [c.scalars()[n] for n in names])
        rows.append([k, BASELINE] + [b.scalars()[n] for n in names])
    write_csv(out / "montecarlo_episodes.csv", ["episode", "mode"] + names, rows)

    hist_rows, values = [], {}
    for metric in METRICS:
        values[metric] = {mode: mc.values(mode, metric) for mode in (CONTROLLED, BASELINE)}
        edges = np.histogram_bin_edges(np.concatenate(list(values[metric].values())), bins=12)
        for mode, vals in values[metric].items():
            counts, _ = np.histogram(vals, bins=edges)
            hist_rows += [[metric, mode, edges[i], edges[i + 1], int(counts[i])] for i in range(len(counts))]
    write_csv(out / "montecarlo_histogram.csv", ["metric", "mode", "bin_lo", "bin_hi", "count"], hist_rows)
    summary = mc.to_dict()
    summary["demand"] = demand_stats(sc.demand, sc.station.p_max)
    write_json(out / "montecarlo_summary.json", summary)
    plot_histograms(values, out / "montecarlo.svg")
    imp = summary["improvement_pct"]
    _report("improvement vs baseline: " + ", ".join(f"{k} {_pct(v)}" for k, v in imp.items()))
    return EXIT_OK


def cmd_sensitivity(args) -> int:
    sc = _scenario(args)
    out = _out_dir(args)
    counts = [int(c) for c in args.counts.split(",")] if args.counts else sc.pole_counts
    results = sensitivity_sweep(counts, sc.demand, sc.station, sc.tariff, sc.behavior, sc.solver, sc.episodes, sc.seed, progress=_progress)
    rows = []
    for mc in results:
        imp = mc.improvements()
        rows.append([
            mc.poles, imp["net_profit"], imp["overstay_hours"], imp["services_fulfilled"],
            mc.mean(CONTROLLED, "net_profit"), mc.mean(BASELINE, "net_profit"),
            mc.mean(CONTROLLED, "overstay_hours"), mc.mean(BASELINE, "overstay_hours"),
            mc.mean(CONTROLLED, "services_fulfilled"), mc.mean(BASELINE, "services_fulfilled"),
        ])
    cols = [
        "poles", "profit_improvement_pct", "overstay_improvement_pct", "services_improvement_pct",
        "profit_controlled", "profit_baseline", "overstay_controlled", "overstay_baseline",
        "services_controlled", "services_baseline",
    ]
    write_csv(out / "sensitivity.csv", cols, rows)
    plot_sensitivity([r[0] for r in rows], [r[1] for r in rows], [r[2] for r in rows], out / "sensitivity.svg")
    for r in rows:
        _report(f"{r[0]:3d} poles: profit {_pct(r[1])}, overstay {_pct(r[2])}")
    return EXIT_OK


def cmd_init_config(args) -> int:
    path = ScenarioConfig().to_ini(args.path)
    _report(f"wrote default scenario to {path}")
    return EXIT_OK


def _pct(v):
    return "n/a" if v is None else f"{v:+.2f}%"


def _report(msg):
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="scenario INI file (defaults built in)")
    common.add_argument("--seed", type=int)
    common.add_argument("--poles", type=int)
    common.add_argument("--out", help=f"output directory (else ${OUT_ENV}, else ./results)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="overstay", description="Overstay-aware pricing for EV charging stations")
    sub = p.add_subparsers(dest="command", required=True)

    pe = sub.add_parser("price-event", parents=[common], help="price one arriving driver")
    pe.add_argument("--arrival", type=float, default=9.0, help="clock hour")
    pe.add_argument("--duration", type=float, default=4.0, help="declared parking hours")
    pe.add_argument("--soc-init", type=float, default=0.2)
    pe.add_argument("--soc-need", type=float, default=0.8)
    pe.add_argument("--battery", type=float, default=24.0, help="kWh")
    pe.set_defaults(func=cmd_price_event)

    sm = sub.add_parser("simulate", parents=[common], help="one day, controlled and baseline")
    sm.set_defaults(func=cmd_simulate)

    mc = sub.add_parser("montecarlo", parents=[common], help="paired Monte Carlo over episodes")
    mc.add_argument("--episodes", type=int)
    mc.set_defaults(func=cmd_montecarlo)

    se = sub.add_parser("sensitivity", parents=[common], help="Monte Carlo per pole count")
    se.add_argument("--episodes", type=int)
    se.add_argument("--counts", help="comma separated pole counts")
    se.set_defaults(func=cmd_sensitivity)

    ic = sub.add_parser("init-config", help="write the default scenario INI")
    ic.add_argument("path")
    ic.set_defaults(func=cmd_init_config)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DataFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
