"""How BCD behaves across penalty weights and stopping tolerances.

For a batch of seeded random sessions (synthesized DCM scores, the bundled
tariff) this records sweeps to convergence, the final Fenchel-Young gap and
the fitted log-residual slope of the first penalty stage.

    python scripts/convergence_study.py [--sessions 20] [--out results/convergence.csv]
"""

import argparse
from pathlib import Path

import numpy as np

from overstay.config import ScenarioConfig
from overstay.datafiles import write_csv
from overstay.pricing_solver import SolveConfig, bcd_solve
from overstay.simulator import sample_day, session_from_event


def log_residual_slope(trace, stage):
    F = np.asarray(trace)[np.asarray(stage) == 0]
    r = F[:-1] - F[-1]
    keep = r > 1e-12
    if keep.sum() < 3:
        return float("nan")
    return float(np.polyfit(np.flatnonzero(keep), np.log(r[keep]), 1)[0])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sessions", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/convergence.csv")
    args = ap.parse_args()

    sc = ScenarioConfig().build()
    rng = np.random.default_rng(args.seed)
    events = []
    while len(events) < args.sessions:
        events += sample_day(sc.demand, rng, sc.tariff.step_hours)
    rows = []
    for mu in (1.0, 10.0, 100.0):
        for stop_tol in (1e-5, 1e-7):
            cfg = SolveConfig(mu=mu, stop_tol=stop_tol, lam_u=sc.solver.lam_u, max_iters=2000)
            for k, event in enumerate(events[: args.sessions]):
                session, w = session_from_event(event, sc.station, sc.tariff)
                theta = sc.behavior.params.effective_theta(w)
                res = bcd_solve(session, sc.tariff, theta, sc.behavior.overstay, cfg)
                rows.append([mu, stop_tol, k, res.iterations, res.converged, res.fy_gap, res.mu,
                             log_residual_slope(res.trace, res.trace_stage)])
            block = [r for r in rows if r[0] == mu and r[1] == stop_tol]
            its = [r[3] for r in block]
            print(f"mu0={mu:<6g} stop_tol={stop_tol:<6g} sweeps median {np.median(its):6.0f} max {max(its):5d}  "
                  f"converged {sum(r[4] for r in block)}/{len(block)}  max gap {max(r[5] for r in block):.1e}")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["mu0", "stop_tol", "session", "iterations", "converged", "fy_gap", "mu_final", "log_slope"], rows)
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
