"""Scenario configuration: one INI file with [station], [solver], [behavior],
[simulation] and [paths] sections. Missing keys take the defaults below."""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .behavior import DcmParams, ExogenousFeatures, IncentiveVector
from .datafiles import bundled, load_events
from .pricing_solver import SolveConfig
from .qp import QpSettings
from .simulator import BehaviorModel, EmpiricalDemand, StationConfig, synthesize_dcm_params
from .station_model import OverstayModel, TouTariff, load_tariff


class ConfigError(ValueError):
    pass


@dataclass
class StationSection:
    poles: int = 6
    p_max: float = 7.2
    u_nom: float = 7.2
    p_min: float = 0.0
    efficiency: float = 1.0
    soc_target: float = 0.9
    step_hours: float = 0.25
    day_start: float = 7.0
    day_end: float = 22.0


@dataclass
class SolverSection:
    mu: float = 10.0
    epsilon: float = 1e-2
    stop_tol: float = 1e-5
    max_iters: int = 500
    mu_growth: float = 2.0
    max_restarts: int = 12
    z_lo: float = 0.0
    z_hi: float = 1.0
    y_lo: float | None = None
    y_hi: float | None = None
    lam_u: float = 1e-3
    lam_g: float = 1.0
    qp_tolerance: float = 1e-9
    qp_max_iter: int = 1000


@dataclass
class BehaviorSection:
    dcm_seed: int = 0
    theta: str = ""  # explicit "r1; r2; r3" overrides the synthesized parameters
    gamma: str = ""
    beta0: str = ""
    leave_share: float = 0.02
    price_sensitivity: str = "25, 40"
    penalty_sensitivity: str = "0.03, 0.06"
    lambda_hat: float | None = None  # default: mean idle plug-in time of the event pool
    y_hat: float = 2.0
    baseline_markup: float = 0.10
    reference_time: float = 12.0
    reference_battery: float = 50.0
    reference_soc_init: float = 0.3
    reference_soc_need: float = 0.6


@dataclass
class SimulationSection:
    episodes: int = 50
    seed: int = 1
    pole_counts: str = "2, 3, 4, 5, 6, 30"
    arrival_jitter: float = 0.25
    duration_jitter: float = 1.0 / 6.0
    days: int | None = None


@dataclass
class PathsSection:
    events: str = ""
    tariff: str = ""


SECTIONS = {
    "station": StationSection,
    "solver": SolverSection,
    "behavior": BehaviorSection,
    "simulation": SimulationSection,
    "paths": PathsSection,
}


def _floats(text: str) -> list:
    return [float(t) for t in text.replace(",", " ").split()]


def _matrix(text: str, rows: int, cols: int) -> np.ndarray:
    data = [_floats(r) for r in text.split(";") if r.strip()]
    arr = np.array(data, dtype=float)
    if arr.shape != (rows, cols):
        raise ConfigError(f"expected a {rows}x{cols} matrix, got shape {arr.shape} from {text!r}")
    return arr


@dataclass
class Scenario:
    """Everything a command needs, built and validated from a ScenarioConfig."""

    demand: EmpiricalDemand
    tariff: TouTariff
    station: StationConfig
    behavior: BehaviorModel
    solver: SolveConfig
    episodes: int
    seed: int
    pole_counts: list
    reference: ExogenousFeatures  # features at which the DCM preferences are checked


@dataclass
class ScenarioConfig:
    station: StationSection = field(default_factory=StationSection)
    solver: SolverSection = field(default_factory=SolverSection)
    behavior: BehaviorSection = field(default_factory=BehaviorSection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    paths: PathsSection = field(default_factory=PathsSection)
    base_dir: Path = field(default_factory=Path.cwd, compare=False)

    @classmethod
    def from_ini(cls, path) -> "ScenarioConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser()
        try:
            parser.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        return cls.from_parser(parser, base_dir=path.parent)

    @classmethod
    def from_parser(cls, parser: configparser.ConfigParser, base_dir=None) -> "ScenarioConfig":
        unknown = set(parser.sections()) - set(SECTIONS)
        if unknown:
            raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")
        parts = {}
        for name, klass in SECTIONS.items():
            kwargs = {}
            known = {f.name: f for f in fields(klass)}
            if parser.has_section(name):
                for key, raw in parser.items(name):
                    if key not in known:
                        raise ConfigError(f"[{name}] unknown key {key!r}")
                    kwargs[key] = _convert(known[key], raw, name)
            parts[name] = klass(**kwargs)
        return cls(**parts, base_dir=Path(base_dir) if base_dir else Path.cwd())

    def to_parser(self) -> configparser.ConfigParser:
        parser = configparser.ConfigParser()
        for name in SECTIONS:
            section = getattr(self, name)
            parser[name] = {k: "" if v is None else str(v) for k, v in asdict(section).items()}
        return parser

    def to_ini(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as fh:
            self.to_parser().write(fh)
        return path

    def resolve(self, value: str, default_name: str) -> Path:
        if not value:
            return bundled(default_name)
        p = Path(value)
        return p if p.is_absolute() else (self.base_dir / p)

    def build(self) -> Scenario:
        st, so, be, si = self.station, self.solver, self.behavior, self.simulation
        try:
            tariff = load_tariff(self.resolve(self.paths.tariff, "tou_a10_illustrative.csv"), step_hours=st.step_hours)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"tariff: {exc}") from None
        if abs(tariff.day_start - st.day_start) > 1e-9 or abs(tariff.day_end - st.day_end) > 1e-9:
            raise ConfigError(
                f"tariff covers {tariff.day_start:g}-{tariff.day_end:g}h but the station runs {st.day_start:g}-{st.day_end:g}h"
            )
        try:
            demand = load_events(
                self.resolve(self.paths.events, "events_week.csv"),
                days=si.days,
                arrival_jitter=si.arrival_jitter,
                duration_jitter=si.duration_jitter,
                day_start=st.day_start,
                day_end=st.day_end,
            )
        except (OSError, ValueError) as exc:
            raise ConfigError(f"events: {exc}") from None

        try:
            station = StationConfig(
                poles=st.poles, p_max=st.p_max, u_nom=st.u_nom, p_min=st.p_min,
                efficiency=st.efficiency, soc_target=st.soc_target,
            )
            solver = SolveConfig(
                mu=so.mu, epsilon=so.epsilon, stop_tol=so.stop_tol, max_iters=so.max_iters,
                mu_growth=so.mu_growth, max_restarts=so.max_restarts, z_lo=so.z_lo, z_hi=so.z_hi,
                y_lo=so.y_lo, y_hi=so.y_hi, lam_u=so.lam_u, lam_g=so.lam_g,
                qp=QpSettings(tolerance=so.qp_tolerance, max_iter=so.qp_max_iter),
            )
            lambda_hat = demand.mean_idle_hours(st.p_max) if be.lambda_hat is None else be.lambda_hat
            overstay = OverstayModel(lambda_hat=lambda_hat, y_hat=be.y_hat)
            solver.bounds(be.y_hat)
            base_price = float(np.mean(tariff.prices)) + be.baseline_markup
            baseline = IncentiveVector(base_price, base_price, be.y_hat)
            reference = ExogenousFeatures(
                be.reference_time, demand.mean_duration, be.reference_battery,
                be.reference_soc_init, be.reference_soc_need,
            )
            if be.theta:
                params = DcmParams(
                    _matrix(be.theta, 3, 4),
                    _matrix(be.gamma, 3, 5) if be.gamma else np.zeros((3, 5)),
                    np.array(_floats(be.beta0)) if be.beta0 else np.zeros(3),
                )
            else:
                params = synthesize_dcm_params(
                    be.dcm_seed, baseline, reference, leave_share=be.leave_share,
                    price_sensitivity=tuple(_floats(be.price_sensitivity)),
                    penalty_sensitivity=tuple(_floats(be.penalty_sensitivity)),
                )
            pole_counts = [int(v) for v in _floats(si.pole_counts)]
        except (ValueError, RuntimeError) as exc:
            raise ConfigError(str(exc)) from None
        if si.episodes < 1:
            raise ConfigError("episodes must be >= 1")
        return Scenario(
            demand=demand,
            tariff=tariff,
            station=station,
            behavior=BehaviorModel(params, overstay, baseline),
            solver=solver,
            episodes=si.episodes,
            seed=si.seed,
            pole_counts=pole_counts,
            reference=reference,
        )


def _convert(f, raw: str, section: str):
    raw = raw.strip()
    kind = str(f.type)
    try:
        if raw == "" and "None" in kind:
            return None
        if kind.startswith("int"):
            return int(raw)
        if kind.startswith("float"):
            return float(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {f.name}: cannot parse {raw!r} as {kind.split(' ')[0]}") from None
    return raw
