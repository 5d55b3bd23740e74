"""Agent-based day simulation of a multi-pole station, Monte Carlo and pole sweeps.

Each arrival that finds a free pole is priced (by ``bcd_solve`` in
controlled mode, at fixed baseline prices otherwise), draws a choice and an
overstay duration, and occupies its pole until departure. Both modes replay
the same sampled day and the same per-event uniforms, so controlled/baseline
differences are paired.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .behavior import (
    ASAP,
    FLEX,
    LEAVE,
    DcmParams,
    ExogenousFeatures,
    FEATURE_NAMES,
    IncentiveVector,
    choice_from_uniform,
    softmax,
)
from .pricing_solver import SolveConfig, ZUpdateError, bcd_solve
from .qp import QpError
from .station_model import (
    ChargingSession,
    InfeasibleSessionError,
    OverstayModel,
    TouTariff,
    expected_overstay,
    flex_cost,
    max_power_profile,
)

log = logging.getLogger(__name__)

CONTROLLED = "controlled"
BASELINE = "baseline"


@dataclass(frozen=True)
class EventRecord:
    arrival_time: float
    parking_duration: float
    energy_requested: float
    battery_capacity: float

    def __post_init__(self):
        if self.parking_duration <= 0:
            raise ValueError(f"parking duration must be positive, got {self.parking_duration}")
        if self.energy_requested < 0:
            raise ValueError(f"requested energy must be >= 0, got {self.energy_requested}")
        if self.battery_capacity <= 0:
            raise ValueError(f"battery capacity must be positive, got {self.battery_capacity}")


@dataclass
class EmpiricalDemand:
    events: list
    days: int = 7
    arrival_jitter: float = 0.25
    duration_jitter: float = 1.0 / 6.0
    day_start: float = 7.0
    day_end: float = 22.0

    def __post_init__(self):
        if not self.events:
            raise ValueError("demand pool is empty")
        if self.days < 1:
            raise ValueError("days must be >= 1")

    @property
    def mean_daily_count(self) -> float:
        return len(self.events) / self.days

    @property
    def mean_duration(self) -> float:
        return float(np.mean([e.parking_duration for e in self.events]))

    def mean_charge_ratio(self, p_max: float = 7.2) -> float:
        return float(np.mean([min(1.0, e.energy_requested / p_max / e.parking_duration) for e in self.events]))

    def mean_idle_hours(self, p_max: float = 7.2) -> float:
        """Average plugged-in time not spent charging; a natural baseline overstay."""
        return float(np.mean([max(0.0, e.parking_duration - e.energy_requested / p_max) for e in self.events]))


@dataclass
class StationConfig:
    poles: int = 6
    p_max: float = 7.2
    u_nom: float = 7.2
    p_min: float = 0.0
    efficiency: float = 1.0
    soc_target: float = 0.9

    def __post_init__(self):
        if self.poles < 1:
            raise ValueError("need at least one pole")


@dataclass
class BehaviorModel:
    params: DcmParams
    overstay: OverstayModel
    baseline: IncentiveVector
    driver_params: DcmParams | None = None  # set to simulate model mismatch

    @property
    def drivers(self) -> DcmParams:
        return self.params if self.driver_params is None else self.driver_params


@dataclass
class EpisodeMetrics:
    mode: str
    net_profit: float
    overstay_hours: float
    services_fulfilled: int
    arrivals: int
    dropped: int
    left: int
    flex: int
    asap: int
    energy_kwh: float
    degraded_events: int
    series: dict = field(default_factory=dict)
    events: list = field(default_factory=list)

    def scalars(self) -> dict:
        return {
            "net_profit": self.net_profit,
            "overstay_hours": self.overstay_hours,
            "services_fulfilled": self.services_fulfilled,
            "arrivals": self.arrivals,
            "dropped": self.dropped,
            "left": self.left,
            "flex": self.flex,
            "asap": self.asap,
            "energy_kwh": self.energy_kwh,
            "degraded_events": self.degraded_events,
        }


# -- DCM parameter synthesis -------------------------------------------------

def _probs(params, z, w):
    return softmax(params.effective_theta(w) @ np.asarray(z, dtype=float))


def check_dcm_properties(params: DcmParams, baseline: IncentiveVector, reference: ExogenousFeatures, h: float = 1e-4) -> dict:
    """The four qualitative preferences, evaluated at baseline prices by central differences."""
    z0 = baseline.as_array()

    def dp(direction, idx):
        d = np.append(np.asarray(direction, dtype=float), 0.0)
        return (_probs(params, z0 + h * d, reference)[idx] - _probs(params, z0 - h * d, reference)[idx]) / (2 * h)

    p0 = _probs(params, z0, reference)
    wa = reference.as_array()
    dur = FEATURE_NAMES.index("parking_duration")

    def p_at_duration(delta):
        vals = dict(zip(FEATURE_NAMES, wa))
        vals["parking_duration"] = wa[dur] + delta
        return _probs(params, z0, ExogenousFeatures(**vals))[FLEX]

    return {
        "asap_preferred": bool(p0[ASAP] > p0[FLEX]),
        "gap_raises_flex": bool(dp([-1.0, 1.0, 0.0], FLEX) > 0),
        "price_raises_leave": bool(dp([1.0, 0.0, 0.0], LEAVE) > 0 and dp([0.0, 1.0, 0.0], LEAVE) > 0),
        "penalty_raises_leave": bool(dp([0.0, 0.0, 1.0], LEAVE) > 0),
        "duration_raises_flex": bool((p_at_duration(h) - p_at_duration(-h)) / (2 * h) > 0),
    }


def synthesize_dcm_params(
    seed,
    baseline: IncentiveVector,
    reference: ExogenousFeatures,
    leave_share: float = 0.04,
    price_sensitivity=(4.0, 7.0),
    penalty_sensitivity=(0.03, 0.06),
    max_tries: int = 100,
) -> DcmParams:
    """Random logit coefficients with the stated qualitative preferences.

    Charging utilities fall with their own price and with the overstay
    penalty; leaving has a flat utility calibrated so that ``leave_share``
    of drivers leave at baseline prices; flex utility grows with the
    declared parking duration but asap wins at the reference session.
    """
    rng = np.random.default_rng(seed)
    dur = FEATURE_NAMES.index("parking_duration")
    for _ in range(max_tries):
        price_sens = rng.uniform(*price_sensitivity, size=2)
        penalty_sens = rng.uniform(*penalty_sensitivity, size=2)
        dur_sens = rng.uniform(0.25, 0.45)
        theta = np.zeros((3, 4))
        theta[FLEX, :3] = [-price_sens[0], 0.0, -penalty_sens[0]]
        theta[ASAP, :3] = [0.0, -price_sens[1], -penalty_sens[1]]
        gamma = np.zeros((3, len(FEATURE_NAMES)))
        gamma[FLEX, dur] = dur_sens
        beta0 = np.zeros(3)
        beta0[FLEX] = -dur_sens * reference.parking_duration - rng.uniform(0.2, 0.6)
        v = DcmParams(theta, gamma, beta0).effective_theta(reference) @ baseline.as_array()
        charge = np.log(np.exp(v[FLEX]) + np.exp(v[ASAP]))
        beta0[LEAVE] = charge + np.log(leave_share / (1.0 - leave_share))
        params = DcmParams(theta, gamma, beta0)
        checks = check_dcm_properties(params, baseline, reference)
        if all(checks.values()):
            return params
    raise RuntimeError(f"could not synthesize DCM parameters with the required properties after {max_tries} tries")


# -- demand ------------------------------------------------------------------

def _truncated_normal(rng, sigma, size, k=2.0):
    out = rng.normal(0.0, sigma, size=size)
    bad = np.abs(out) > k * sigma
    while np.any(bad):
        out[bad] = rng.normal(0.0, sigma, size=int(bad.sum()))
        bad = np.abs(out) > k * sigma
    return out


def sample_day(demand: EmpiricalDemand, rng: np.random.Generator, step_hours: float = 0.25) -> list:
    """Bootstrap one day of arrivals with jitter; sorted by arrival time."""
    count = int(rng.poisson(demand.mean_daily_count))
    if count == 0:
        return []
    idx = rng.integers(0, len(demand.events), size=count)
    t_jit = _truncated_normal(rng, demand.arrival_jitter, count) if demand.arrival_jitter > 0 else np.zeros(count)
    d_jit = _truncated_normal(rng, demand.duration_jitter, count) if demand.duration_jitter > 0 else np.zeros(count)
    day = []
    for i, j in enumerate(idx):
        e = demand.events[j]
        arrival = float(np.clip(e.arrival_time + t_jit[i], demand.day_start, demand.day_end - step_hours))
        duration = max(step_hours, e.parking_duration + d_jit[i])
        day.append(EventRecord(arrival, duration, e.energy_requested, e.battery_capacity))
    day.sort(key=lambda e: e.arrival_time)
    return day


def session_from_event(event: EventRecord, station: StationConfig, tariff: TouTariff):
    """Snap an event onto the tariff grid and convert energy to SOC targets.

    Requested energy is clipped to what p_max can deliver before the declared
    departure (or day end) and to the battery headroom.
    """
    dk = tariff.step_hours
    start = min(max(tariff.step_of(event.arrival_time), 0), tariff.n_steps - 1)
    n = max(1, int(round(event.parking_duration / dk)))
    n = min(n, tariff.n_steps - start)
    B = event.battery_capacity
    deliverable = station.p_max * station.efficiency * n * dk
    energy = min(event.energy_requested, deliverable, B)
    soc_init = max(0.0, station.soc_target - energy / B)
    soc_init = min(soc_init, 1.0 - energy / B)
    soc_need = min(1.0, soc_init + energy / B)
    session = ChargingSession(
        arrival_step=start,
        horizon_steps=n,
        soc_init=soc_init,
        soc_need=soc_need,
        battery_capacity=B,
        efficiency=station.efficiency,
        p_min=station.p_min,
        p_max=station.p_max,
        u_nom=station.u_nom,
    )
    features = ExogenousFeatures(
        time_of_day=float(tariff.clock(start)),
        parking_duration=n * dk,
        battery_capacity=B,
        soc_init=soc_init,
        soc_need=soc_need,
    )
    return session, features


# -- episode -----------------------------------------------------------------

def _event_uniforms(seed: int, index: int):
    g = np.random.default_rng([int(seed), int(index)])
    return g.random(), g.random()


def _overlap(a0, a1, b0, b1):
    return np.clip(np.minimum(a1, b1) - np.maximum(a0, b0), 0.0, None)


def _asap_power(session: ChargingSession, tariff: TouTariff) -> np.ndarray:
    dk = tariff.step_hours
    grid_kwh = (session.soc_need - session.soc_init) * session.battery_capacity / session.efficiency
    steps = tariff.n_steps - session.arrival_step
    power = np.zeros(steps)
    remaining = grid_kwh
    for k in range(steps):
        if remaining <= 1e-12:
            break
        e = min(remaining, session.u_nom * dk)
        power[k] = e / dk
        remaining -= e
    return power


def run_episode(
    day: list,
    station: StationConfig,
    tariff: TouTariff,
    mode: str,
    behavior: BehaviorModel,
    solver: SolveConfig,
    seed: int,
) -> EpisodeMetrics:
    if mode not in (CONTROLLED, BASELINE):
        raise ValueError(f"unknown mode {mode!r}")
    dk = tariff.step_hours
    n_steps = tariff.n_steps
    edges = tariff.day_start + dk * np.arange(n_steps + 1)
    day_end = tariff.day_end

    power = np.zeros(n_steps)
    revenue_step = np.zeros(n_steps)
    cost_step = np.zeros(n_steps)
    fee_step = np.zeros(n_steps)
    occupancy = np.zeros(n_steps)
    overstay_step = np.zeros(n_steps)
    service_step = np.zeros(n_steps)
    departures = []  # departure clock of each served session
    log_rows = []
    counts = {"dropped": 0, "left": 0, "flex": 0, "asap": 0, "degraded": 0}
    energy_total = 0.0

    for i, event in enumerate(day):
        session, features = session_from_event(event, station, tariff)
        t0 = float(edges[session.arrival_step])
        busy = sum(1 for dep in departures if dep > t0 + 1e-12)
        row = {"index": i, "arrival": t0, "mode": mode}
        if busy >= station.poles:
            counts["dropped"] += 1
            row["choice"] = "dropped"
            log_rows.append(row)
            continue

        u_choice, u_over = _event_uniforms(seed, i)
        theta = behavior.params.effective_theta(features)
        x_plan = None
        if mode == CONTROLLED:
            try:
                res = bcd_solve(session, tariff, theta, behavior.overstay, solver)
                z = res.z_star
                if res.v_star[FLEX] > 0:
                    x_plan = res.x_star
            except (ZUpdateError, QpError) as exc:
                log.warning("event %d: pricing failed (%s); using baseline prices", i, exc)
                counts["degraded"] += 1
                z = behavior.baseline
            p = softmax(behavior.drivers.effective_theta(features) @ z.as_array())
        else:
            z = behavior.baseline
            p = softmax(behavior.drivers.effective_theta(features) @ z.as_array())
            p = np.array([p[FLEX], p[ASAP], 0.0]) / (p[FLEX] + p[ASAP])
        choice = choice_from_uniform(p, u_choice)
        row.update(z_flex=z.z_flex, z_asap=z.z_asap, y=z.y, p_flex=p[0], p_asap=p[1], p_leave=p[2], choice=choice)
        if choice == "leave":
            counts["left"] += 1
            log_rows.append(row)
            continue

        s = session.arrival_step
        profile = np.zeros(n_steps)
        if choice == "flex":
            x0 = x_plan if x_plan is not None else max_power_profile(session, tariff)
            _, x = flex_cost(session, tariff, z.z_flex, solver.lam_u, settings=solver.qp, x0=x0)
            u = np.clip(x[session.horizon_steps + 1 :], 0.0, None) if session.p_min >= 0 else x[session.horizon_steps + 1 :]
            profile[s : s + session.horizon_steps] = u
            overstay_start = t0 + session.horizon_steps * dk
            price = z.z_flex
            counts["flex"] += 1
        else:
            ap = _asap_power(session, tariff)
            profile[s:] = ap
            grid_kwh = float(ap.sum() * dk)
            overstay_start = min(t0 + grid_kwh / session.u_nom, day_end)
            price = z.z_asap
            counts["asap"] += 1

        lam = expected_overstay(behavior.overstay, z.y)
        duration = -lam * math.log1p(-u_over) if lam > 0 else 0.0
        departure = min(overstay_start + duration, day_end)
        overstay_start = min(overstay_start, departure)
        departures.append(departure)

        energy = profile * dk
        energy_total += float(energy.sum())
        power += profile
        revenue_step += price * energy
        cost_step += tariff.prices * energy
        ov = _overlap(edges[:-1], edges[1:], overstay_start, departure)
        overstay_step += ov
        fee_step += z.y * ov
        occupancy += _overlap(edges[:-1], edges[1:], t0, departure) / dk
        service_step[s] += 1
        row.update(energy_kwh=float(energy.sum()), overstay_h=float(departure - overstay_start), departure=departure)
        log_rows.append(row)

    profit_step = revenue_step + fee_step - cost_step
    series = {
        "clock": edges[:-1].copy(),
        "net_power_kw": power,
        "cumulative_profit": np.cumsum(profit_step),
        "occupancy": occupancy,
        "cumulative_overstay_h": np.cumsum(overstay_step),
        "cumulative_services": np.cumsum(service_step),
    }
    return EpisodeMetrics(
        mode=mode,
        net_profit=float(profit_step.sum()),
        overstay_hours=float(overstay_step.sum()),
        services_fulfilled=counts["flex"] + counts["asap"],
        arrivals=len(day),
        dropped=counts["dropped"],
        left=counts["left"],
        flex=counts["flex"],
        asap=counts["asap"],
        energy_kwh=energy_total,
        degraded_events=counts["degraded"],
        series=series,
        events=log_rows,
    )


# -- Monte Carlo ---------------------------------------------------------------

METRICS = ("overstay_hours", "net_profit", "services_fulfilled")


def improvement(controlled: float, baseline: float) -> float | None:
    """(controller / baseline - 1) * 100; None when the baseline is zero."""
    if baseline == 0:
        return None
    return (controlled / baseline - 1.0) * 100.0


@dataclass
class MonteCarloSummary:
    poles: int
    episodes: int
    controlled: list
    baseline: list

    def values(self, mode: str, metric: str) -> np.ndarray:
        eps = self.controlled if mode == CONTROLLED else self.baseline
        return np.array([getattr(m, metric) for m in eps], dtype=float)

    def mean(self, mode, metric) -> float:
        return float(self.values(mode, metric).mean())

    def std(self, mode, metric) -> float:
        vals = self.values(mode, metric)
        return float(vals.std(ddof=1)) if len(vals) > 1 else 0.0

    def improvements(self) -> dict:
        return {m: improvement(self.mean(CONTROLLED, m), self.mean(BASELINE, m)) for m in METRICS}

    def paired_differences(self, metric) -> np.ndarray:
        return self.values(CONTROLLED, metric) - self.values(BASELINE, metric)

    def to_dict(self) -> dict:
        stats = {}
        for m in METRICS:
            stats[m] = {
                "controlled_mean": self.mean(CONTROLLED, m),
                "controlled_std": self.std(CONTROLLED, m),
                "baseline_mean": self.mean(BASELINE, m),
                "baseline_std": self.std(BASELINE, m),
            }
        return {"poles": self.poles, "episodes": self.episodes, "metrics": stats, "improvement_pct": self.improvements()}


def episode_seeds(seed: int, episodes: int):
    """Independent (day-sampling generator, per-event seed) pairs per episode."""
    out = []
    for child in np.random.SeedSequence(seed).spawn(episodes):
        day_ss, event_ss = child.spawn(2)
        out.append((np.random.default_rng(day_ss), int(event_ss.generate_state(1)[0])))
    return out


def monte_carlo(
    demand: EmpiricalDemand,
    station: StationConfig,
    tariff: TouTariff,
    behavior: BehaviorModel,
    solver: SolveConfig,
    episodes: int,
    seed: int = 0,
    progress=None,
) -> MonteCarloSummary:
    """Paired controlled/baseline episodes on common random numbers."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    controlled, baseline = [], []
    for k, (day_rng, event_seed) in enumerate(episode_seeds(seed, episodes)):
        day = sample_day(demand, day_rng, tariff.step_hours)
        controlled.append(run_episode(day, station, tariff, CONTROLLED, behavior, solver, event_seed))
        baseline.append(run_episode(day, station, tariff, BASELINE, behavior, solver, event_seed))
        if progress is not None:
            progress(k + 1, episodes)
    return MonteCarloSummary(station.poles, episodes, controlled, baseline)


def sensitivity_sweep(
    pole_counts,
    demand: EmpiricalDemand,
    station: StationConfig,
    tariff: TouTariff,
    behavior: BehaviorModel,
    solver: SolveConfig,
    episodes: int,
    seed: int = 0,
    progress=None,
) -> list:
    """Monte Carlo per pole count, all counts sharing the same sampled days."""
    out = []
    for poles in pole_counts:
        if poles < 1:
            raise ValueError("pole counts must be >= 1")
        out.append(monte_carlo(demand, replace(station, poles=int(poles)), tariff, behavior, solver, episodes, seed, progress))
    return out
