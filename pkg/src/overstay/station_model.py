"""Per-session cost models for the three driver alternatives.

The flex decision vector is ``x = [SOC_0 .. SOC_N, u_0 .. u_{N-1}]``.
All money is in $, energy in kWh, power in kW, time in hours.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .behavior import IncentiveVector
from .qp import QpSettings, qp_solve


class InfeasibleSessionError(ValueError):
    """The flex QP has no feasible charging profile."""


@dataclass(frozen=True)
class ChargingSession:
    arrival_step: int
    horizon_steps: int
    soc_init: float
    soc_need: float
    battery_capacity: float
    efficiency: float = 1.0
    p_min: float = 0.0
    p_max: float = 7.2
    u_nom: float = 7.2

    def __post_init__(self):
        if not (0.0 <= self.soc_init <= self.soc_need <= 1.0):
            raise ValueError(f"need 0 <= soc_init <= soc_need <= 1, got {self.soc_init}, {self.soc_need}")
        if self.horizon_steps < 1:
            raise ValueError(f"horizon_steps must be >= 1, got {self.horizon_steps}")
        if self.arrival_step < 0:
            raise ValueError(f"arrival_step must be >= 0, got {self.arrival_step}")
        if self.battery_capacity <= 0:
            raise ValueError("battery_capacity must be positive")
        if not (0.0 < self.efficiency <= 1.0):
            raise ValueError(f"efficiency must lie in (0, 1], got {self.efficiency}")
        if self.p_min > self.p_max:
            raise ValueError(f"p_min {self.p_min} exceeds p_max {self.p_max}")
        if not (0.0 < self.u_nom <= self.p_max):
            raise ValueError(f"u_nom must lie in (0, p_max], got {self.u_nom}")

    def soc_gain_per_kw(self, step_hours: float) -> float:
        """SOC added by one step at 1 kW."""
        return step_hours * self.efficiency / self.battery_capacity

    def check_feasible(self, step_hours: float) -> None:
        gain = self.soc_gain_per_kw(step_hours)
        reachable = self.soc_init + self.horizon_steps * gain * self.p_max
        if reachable < self.soc_need - 1e-12:
            raise InfeasibleSessionError(
                f"soc_need {self.soc_need:.4f} unreachable: at p_max={self.p_max} kW over "
                f"{self.horizon_steps} steps the SOC tops out at {reachable:.4f}"
            )
        floor = self.soc_init + self.horizon_steps * gain * self.p_min
        if floor > 1.0 + 1e-12:
            raise InfeasibleSessionError(
                f"p_min={self.p_min} kW over {self.horizon_steps} steps overfills the battery (SOC {floor:.4f})"
            )


@dataclass(frozen=True)
class TouTariff:
    step_hours: float
    prices: np.ndarray
    day_start: float = 7.0
    day_end: float = 22.0

    def __post_init__(self):
        prices = np.asarray(self.prices, dtype=float)
        object.__setattr__(self, "prices", prices)
        if np.any(prices < 0):
            raise ValueError("tariff prices must be nonnegative")
        expected = (self.day_end - self.day_start) / self.step_hours
        if abs(expected - len(prices)) > 1e-9:
            raise ValueError(
                f"tariff has {len(prices)} steps, expected {expected:g} for "
                f"{self.day_start:g}-{self.day_end:g}h at {self.step_hours:g}h steps"
            )

    @property
    def n_steps(self) -> int:
        return len(self.prices)

    def clock(self, step) -> np.ndarray | float:
        return self.day_start + np.asarray(step) * self.step_hours

    def step_of(self, clock_hour: float) -> int:
        return int(math.floor((clock_hour - self.day_start) / self.step_hours + 1e-9))

    def window(self, start: int, n: int) -> np.ndarray:
        """Prices for steps start .. start+n-1, truncated at day_end."""
        return self.prices[start : min(start + n, self.n_steps)]


def _parse_clock(text: str) -> float:
    text = text.strip()
    if ":" in text:
        hh, mm = text.split(":")
        return int(hh) + int(mm) / 60.0
    return float(text)


def load_tariff(path, step_hours: float | None = None) -> TouTariff:
    """Read a ``time,price`` table (time as HH:MM or decimal hours, one row per step)."""
    times, prices = [], []
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ValueError(f"{path}: empty tariff file")
        for lineno, row in enumerate(reader, start=2):
            if not row or not "".join(row).strip():
                continue
            if len(row) < 2:
                raise ValueError(f"{path}:{lineno}: expected 'time,price', got {row!r}")
            try:
                times.append(_parse_clock(row[0]))
                prices.append(float(row[1]))
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
    if len(times) < 2 and step_hours is None:
        raise ValueError(f"{path}: need at least two rows to infer the step size")
    dk = step_hours if step_hours is not None else times[1] - times[0]
    if np.any(np.abs(np.diff(times) - dk) > 1e-6):
        raise ValueError(f"{path}: rows are not evenly spaced at {dk:g} h")
    return TouTariff(step_hours=dk, prices=np.array(prices), day_start=times[0], day_end=times[0] + dk * len(times))


@dataclass(frozen=True)
class OverstayModel:
    lambda_hat: float
    y_hat: float

    def __post_init__(self):
        if self.lambda_hat < 0:
            raise ValueError("lambda_hat must be >= 0")
        if self.y_hat <= 0:
            raise ValueError("y_hat must be > 0")


def expected_overstay(model: OverstayModel, y: float) -> float:
    if y <= 0:
        raise ValueError(f"overstay penalty must be positive, got {y}")
    return model.lambda_hat * model.y_hat / y


@dataclass
class FlexQpData:
    n_steps: int
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    d: np.ndarray

    @property
    def u_slice(self) -> slice:
        return slice(self.n_steps + 1, 2 * self.n_steps + 1)

    @property
    def soc_slice(self) -> slice:
        return slice(0, self.n_steps + 1)

    def objective(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.H @ x + self.f @ x)


def flex_horizon(session: ChargingSession, tariff: TouTariff) -> int:
    n = min(session.horizon_steps, tariff.n_steps - session.arrival_step)
    if n < 1:
        raise InfeasibleSessionError(f"arrival step {session.arrival_step} is outside the tariff grid")
    return n


def build_flex_qp(session: ChargingSession, tariff: TouTariff, z_flex: float, lam_u: float) -> FlexQpData:
    N = session.horizon_steps
    prices = tariff.window(session.arrival_step, N)
    if len(prices) < N:
        raise InfeasibleSessionError(
            f"session runs {N} steps from step {session.arrival_step} but the tariff has {tariff.n_steps} steps"
        )
    session.check_feasible(tariff.step_hours)
    dk = tariff.step_hours
    gain = session.soc_gain_per_kw(dk)
    n = 2 * N + 1

    C = np.zeros((N + 1, n))
    C[0, 0] = 1.0
    for k in range(N):
        C[k + 1, k] = -1.0
        C[k + 1, k + 1] = 1.0
        C[k + 1, N + 1 + k] = -gain
    d = np.zeros(N + 1)
    d[0] = session.soc_init

    A = np.zeros((3 * N + 2, n))
    b = np.zeros(3 * N + 2)
    A[: N + 1, : N + 1] = np.eye(N + 1)
    b[: N + 1] = 1.0
    A[N + 1, N] = -1.0
    b[N + 1] = -session.soc_need
    A[N + 2 : 2 * N + 2, N + 1 :] = np.eye(N)
    b[N + 2 : 2 * N + 2] = session.p_max
    A[2 * N + 2 :, N + 1 :] = -np.eye(N)
    b[2 * N + 2 :] = -session.p_min

    H = np.zeros((n, n))
    H[N + 1 :, N + 1 :] = 2.0 * lam_u * np.eye(N)
    f = np.zeros(n)
    f[N + 1 :] = (prices - z_flex) * dk
    return FlexQpData(n_steps=N, H=H, f=f, A=A, b=b, C=C, d=d)


def max_power_profile(session: ChargingSession, tariff: TouTariff) -> np.ndarray:
    """Feasible x: full power until soc_need is met, then p_min (clipped so SOC <= 1)."""
    N = session.horizon_steps
    gain = session.soc_gain_per_kw(tariff.step_hours)
    soc = np.empty(N + 1)
    u = np.empty(N)
    soc[0] = session.soc_init
    for k in range(N):
        if soc[k] < session.soc_need:
            uk = min(session.p_max, max(session.p_min, (session.soc_need - soc[k]) / gain))
        else:
            uk = session.p_min
        uk = min(uk, max(session.p_min, (1.0 - soc[k]) / gain))
        u[k] = uk
        soc[k + 1] = soc[k] + gain * uk
    return np.concatenate([soc, u])


def flex_cost(session: ChargingSession, tariff: TouTariff, z_flex: float, lam_u: float, qp_solver=qp_solve, settings: QpSettings = QpSettings(), x0=None):
    """Minimized flex charging objective and its minimizer x."""
    qp = build_flex_qp(session, tariff, z_flex, lam_u)
    if x0 is None:
        x0 = max_power_profile(session, tariff)
    res = qp_solver(qp.H, qp.f, qp.A, qp.b, qp.C, qp.d, settings=settings, x0=x0)
    return qp.objective(res.x), res.x


def flex_objective(session: ChargingSession, tariff: TouTariff, z_flex: float, lam_u: float, x) -> float:
    """Flex charging objective evaluated at a given decision vector."""
    N = session.horizon_steps
    u = np.asarray(x, dtype=float)[N + 1 :]
    prices = tariff.window(session.arrival_step, N)
    return float(np.sum(u * (prices - z_flex)) * tariff.step_hours + lam_u * u @ u)


def energy_steps_needed(session: ChargingSession, step_hours: float) -> int:
    if session.u_nom <= 0:
        raise ValueError("u_nom must be positive")
    steps = (session.soc_need - session.soc_init) * session.battery_capacity / (step_hours * session.efficiency * session.u_nom)
    return max(0, math.ceil(steps - 1e-9))


def _asap_prices(session: ChargingSession, tariff: TouTariff) -> np.ndarray:
    return tariff.window(session.arrival_step, energy_steps_needed(session, tariff.step_hours))


def asap_energy(session: ChargingSession, tariff: TouTariff) -> float:
    """Grid energy the asap cost model bills for (u_nom over the charging steps)."""
    return len(_asap_prices(session, tariff)) * session.u_nom * tariff.step_hours


def asap_cost(session: ChargingSession, tariff: TouTariff, z_asap: float) -> float:
    c = _asap_prices(session, tariff)
    return float(np.sum(c - z_asap) * session.u_nom * tariff.step_hours)


def leave_cost(session: ChargingSession, tariff: TouTariff) -> float:
    return asap_cost(session, tariff, 0.0)


@dataclass(frozen=True)
class CostVector:
    h_flex: float
    h_asap: float
    h_leave: float

    def as_array(self) -> np.ndarray:
        return np.array([self.h_flex, self.h_asap, self.h_leave])


def assemble_cost_vector(
    session: ChargingSession,
    tariff: TouTariff,
    z: IncentiveVector,
    x,
    model: OverstayModel,
    lam_g: float,
    lam_u: float,
) -> CostVector:
    overstay = lam_g * expected_overstay(model, z.y)
    return CostVector(
        h_flex=flex_objective(session, tariff, z.z_flex, lam_u, x) + overstay,
        h_asap=asap_cost(session, tariff, z.z_asap) + overstay,
        h_leave=leave_cost(session, tariff),
    )
