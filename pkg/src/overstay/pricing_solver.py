"""Block coordinate descent for the per-arrival pricing problem.

The non-convex expected cost ``softmax(theta @ z) . h(z, x)`` is lifted to
three blocks (z, x, v) by replacing ``v = softmax(theta @ z)`` with a
penalty on the Fenchel-Young gap ``lse(theta z) + lse*(v) - v . theta z``.
The monitored objective is

    F(z, x, v) = v . h(z, x) + mu * gap(theta z, v)

and each block update below is an exact (or converged convex) minimizer of
F in its own block, so F never increases along the iterations.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .behavior import FLEX, IncentiveVector, fenchel_young_gap, lse, softmax
from .qp import QpSettings, qp_solve
from .station_model import (
    ChargingSession,
    CostVector,
    OverstayModel,
    TouTariff,
    asap_energy,
    build_flex_qp,
    expected_overstay,
    leave_cost,
    max_power_profile,
)

log = logging.getLogger(__name__)


class ZUpdateError(RuntimeError):
    def __init__(self, message, grad_norm):
        super().__init__(message)
        self.grad_norm = grad_norm


@dataclass
class SolveConfig:
    mu: float = 10.0
    epsilon: float = 1e-3
    stop_tol: float = 1e-5
    max_iters: int = 500
    mu_growth: float = 2.0
    max_restarts: int = 12
    z_lo: float = 0.0
    z_hi: float = 1.0
    y_lo: float | None = None  # default 0.1 * y_hat
    y_hi: float | None = None  # default 10 * y_hat
    lam_u: float = 1e-2
    lam_g: float = 1.0
    qp: QpSettings = field(default_factory=QpSettings)
    z0: IncentiveVector | None = None
    pg_tol: float = 1e-7
    pg_max_iter: int = 200

    def __post_init__(self):
        if self.mu <= 0 or self.epsilon <= 0 or self.stop_tol <= 0:
            raise ValueError("mu, epsilon and stop_tol must be positive")
        if self.z_lo > self.z_hi:
            raise ValueError("z_lo exceeds z_hi")
        if self.mu_growth < 1.0:
            raise ValueError("mu_growth must be >= 1")

    def bounds(self, y_hat: float) -> tuple[np.ndarray, np.ndarray]:
        y_lo = 0.1 * y_hat if self.y_lo is None else self.y_lo
        y_hi = 10.0 * y_hat if self.y_hi is None else self.y_hi
        if y_lo <= 0 or y_lo > y_hi:
            raise ValueError(f"need 0 < y_lo <= y_hi, got {y_lo}, {y_hi}")
        return np.array([self.z_lo, self.z_lo, y_lo]), np.array([self.z_hi, self.z_hi, y_hi])


class PricingProblem:
    """h(z, x), its z-Jacobian and the flex QP data for one arriving driver."""

    def __init__(self, session: ChargingSession, tariff: TouTariff, theta, overstay: OverstayModel, lam_u: float, lam_g: float):
        self.session = session
        self.tariff = tariff
        self.theta = np.asarray(theta, dtype=float)
        if self.theta.shape != (3, 4):
            raise ValueError(f"theta must be 3x4, got {self.theta.shape}")
        self.overstay = overstay
        self.lam_u = lam_u
        self.lam_g = lam_g
        self.qp = build_flex_qp(session, tariff, 0.0, lam_u)
        self.f_base = self.qp.f.copy()
        self.dk = tariff.step_hours
        self.leave = leave_cost(session, tariff)
        self.asap_kwh = asap_energy(session, tariff)

    def flex_linear(self, z_flex: float) -> np.ndarray:
        f = self.f_base.copy()
        f[self.qp.u_slice] -= z_flex * self.dk
        return f

    def h(self, z, x) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        over = self.lam_g * expected_overstay(self.overstay, z[2])
        x = np.asarray(x, dtype=float)
        flex = 0.5 * x @ self.qp.H @ x + self.flex_linear(z[0]) @ x
        return np.array([flex + over, self.leave - z[1] * self.asap_kwh + over, self.leave])

    def h_jacobian(self, z, x) -> np.ndarray:
        """d h / d (z_flex, z_asap, y); shape (3, 3)."""
        z = np.asarray(z, dtype=float)
        dover = -self.lam_g * self.overstay.lambda_hat * self.overstay.y_hat / z[2] ** 2
        delivered = float(np.sum(np.asarray(x)[self.qp.u_slice])) * self.dk
        return np.array([[-delivered, 0.0, dover], [0.0, -self.asap_kwh, dover], [0.0, 0.0, 0.0]])

    def h_y_curvature(self, z) -> float:
        return 2.0 * self.lam_g * self.overstay.lambda_hat * self.overstay.y_hat / z[2] ** 3

    def objective(self, z, x, v, mu: float) -> float:
        return float(v @ self.h(z, x)) + mu * fenchel_young_gap(self.theta @ z, v)

    def cost_vector(self, z, x) -> CostVector:
        return CostVector(*self.h(z, x))


@dataclass
class BlockState:
    z: np.ndarray
    x: np.ndarray
    v: np.ndarray
    F: float
    iteration: int = 0
    working_set: list | None = None


@dataclass
class SolveResult:
    z_star: IncentiveVector
    x_star: np.ndarray
    v_star: np.ndarray
    objective: float
    fy_gap: float
    model_probs: np.ndarray
    costs: CostVector
    trace: list
    trace_stage: list
    block_trace: list
    iterations: int
    converged: bool
    mu: float

    def summary(self) -> dict:
        return {
            "z_flex": self.z_star.z_flex,
            "z_asap": self.z_star.z_asap,
            "y": self.z_star.y,
            "probabilities": dict(zip(("flex", "asap", "leave"), map(float, self.model_probs))),
            "v": dict(zip(("flex", "asap", "leave"), map(float, self.v_star))),
            "costs": {"flex": self.costs.h_flex, "asap": self.costs.h_asap, "leave": self.costs.h_leave},
            "objective": self.objective,
            "fy_gap": self.fy_gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "mu": self.mu,
        }


def x_update(state: BlockState, problem: PricingProblem, config: SolveConfig) -> np.ndarray:
    """argmin_x v_flex * h_flex(z, x); keeps x when v_flex is zero."""
    if state.v[FLEX] <= 0.0:
        return state.x
    qp = problem.qp
    res = qp_solve(
        qp.H, problem.flex_linear(state.z[0]), qp.A, qp.b, qp.C, qp.d,
        settings=config.qp, x0=state.x, working_set=state.working_set,
    )
    state.working_set = res.working_set
    return res.x


def _z_parts(problem: PricingProblem, x, v, mu):
    theta = problem.theta

    def phi(z):
        u = theta @ z
        return float(v @ problem.h(z, x)) + mu * (lse(u) - float(v @ u))

    def grad(z):
        s = softmax(theta @ z)
        return (problem.h_jacobian(z, x).T @ v + mu * theta[:, :3].T @ (s - v))

    def hess(z):
        s = softmax(theta @ z)
        T = theta[:, :3]
        Hm = mu * T.T @ (np.diag(s) - np.outer(s, s)) @ T
        Hm[2, 2] += (v[0] + v[1]) * problem.h_y_curvature(z)
        return Hm

    return phi, grad, hess


def z_update(state: BlockState, problem: PricingProblem, config: SolveConfig, mu: float | None = None) -> np.ndarray:
    """Minimize v.h(z, x) + mu (lse(theta z) - v.theta z) over the price box.

    Projected Newton on the three free coordinates with an Armijo search along
    the projection arc; the constant coordinate stays pinned at 1.
    """
    mu = config.mu if mu is None else mu
    lo, hi = config.bounds(problem.overstay.y_hat)
    phi, grad, hess = _z_parts(problem, state.x, state.v, mu)

    def full(w):
        return np.append(w, 1.0)

    w = np.clip(state.z[:3], lo, hi)
    f_w = phi(full(w))
    g = grad(full(w))
    for _ in range(config.pg_max_iter):
        pg = w - np.clip(w - g, lo, hi)
        pg_norm = float(np.max(np.abs(pg)))
        if pg_norm <= config.pg_tol:
            return full(w)
        width = hi - lo
        eps = min(1e-8 * float(np.max(width, initial=1.0)), pg_norm)
        active = ((w <= lo + eps) & (g > 0)) | ((w >= hi - eps) & (g < 0))
        free = ~active
        direction = -g.copy()
        if np.any(free):
            Hf = hess(full(w))[np.ix_(free, free)]
            Hf = Hf + 1e-12 * max(1.0, float(np.max(np.abs(Hf)))) * np.eye(Hf.shape[0])
            try:
                newton = -np.linalg.solve(Hf, g[free])
                if newton @ g[free] < 0:
                    direction[free] = newton
            except np.linalg.LinAlgError:
                pass
        t = 1.0
        accepted = False
        for _ in range(60):
            w_new = np.clip(w + t * direction, lo, hi)
            f_new = phi(full(w_new))
            decrease = g @ (w_new - w)
            if f_new <= f_w + 1e-4 * decrease:
                accepted = True
                break
            g_new = grad(full(w_new))
            pg_new = float(np.max(np.abs(w_new - np.clip(w_new - g_new, lo, hi))))
            # round-off tail: accept tiny non-increases that still shrink the projected gradient
            if f_new <= f_w + 1e-14 * (1.0 + abs(f_w)) and pg_new < pg_norm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # fall back to a plain projected-gradient step on the same arc
            direction = -g
            t = 1.0 / max(1.0, float(np.max(np.abs(hess(full(w))))))
            for _ in range(60):
                w_new = np.clip(w + t * direction, lo, hi)
                f_new = phi(full(w_new))
                if f_new <= f_w + 1e-4 * (g @ (w_new - w)):
                    accepted = True
                    break
                t *= 0.5
        if not accepted:
            raise ZUpdateError(f"z-update line search stalled at projected gradient {pg_norm:.3e}", pg_norm)
        w, f_w = w_new, f_new
        g = grad(full(w))
    pg_norm = float(np.max(np.abs(w - np.clip(w - g, lo, hi))))
    if pg_norm <= config.pg_tol:
        return full(w)
    raise ZUpdateError(f"z-update did not converge in {config.pg_max_iter} iterations", pg_norm)


def v_update(state: BlockState, problem: PricingProblem, config: SolveConfig, mu: float | None = None) -> np.ndarray:
    """Closed-form minimizer over the simplex: softmax(theta z - h / mu)."""
    mu = config.mu if mu is None else mu
    return softmax(problem.theta @ state.z - problem.h(state.z, state.x) / mu)


def initial_z(problem: PricingProblem, config: SolveConfig) -> np.ndarray:
    lo, hi = config.bounds(problem.overstay.y_hat)
    if config.z0 is not None:
        z = config.z0.as_array()
    else:
        mean_price = float(np.mean(problem.tariff.prices))
        z = np.array([mean_price, mean_price, problem.overstay.y_hat, 1.0])
    z[:3] = np.clip(z[:3], lo, hi)
    return z


def bcd_solve(session: ChargingSession, tariff: TouTariff, theta, overstay: OverstayModel, config: SolveConfig = SolveConfig()) -> SolveResult:
    """Price one arriving driver.

    ``theta`` is the per-session 3x4 score matrix (exogenous terms already
    folded into the constant column, see ``DcmParams.effective_theta``).
    Runs x -> z -> v sweeps until the objective change drops below
    ``stop_tol``; if the Fenchel-Young gap is still above ``epsilon`` the
    penalty weight is multiplied by ``mu_growth`` and the sweeps resume from
    the current iterate.
    """
    problem = PricingProblem(session, tariff, theta, overstay, config.lam_u, config.lam_g)
    z = initial_z(problem, config)
    x = max_power_profile(session, tariff)
    v = softmax(problem.theta @ z)
    mu = config.mu
    state = BlockState(z=z, x=x, v=v, F=problem.objective(z, x, v, mu))
    trace, trace_stage, block_trace = [state.F], [0], []
    converged = False
    stage = 0
    iters = 0
    while True:
        stage_done = False
        while iters < config.max_iters:
            iters += 1
            state.iteration = iters
            F_prev = state.F
            state.x = x_update(state, problem, config)
            F_x = problem.objective(state.z, state.x, state.v, mu)
            state.z = z_update(state, problem, config, mu)
            F_z = problem.objective(state.z, state.x, state.v, mu)
            state.v = v_update(state, problem, config, mu)
            state.F = problem.objective(state.z, state.x, state.v, mu)
            block_trace.append((stage, F_prev, F_x, F_z, state.F))
            trace.append(state.F)
            trace_stage.append(stage)
            if abs(state.F - F_prev) <= config.stop_tol:
                stage_done = True
                break
        gap = fenchel_young_gap(problem.theta @ state.z, state.v)
        if stage_done and gap <= config.epsilon:
            converged = True
            break
        if not stage_done or stage >= config.max_restarts or config.mu_growth == 1.0:
            break
        stage += 1
        mu *= config.mu_growth
        state.F = problem.objective(state.z, state.x, state.v, mu)
        trace.append(state.F)
        trace_stage.append(stage)

    if not converged:
        log.debug("bcd_solve stopped without converging after %d iterations (gap %.3e)", iters, gap)
    z_star = IncentiveVector.from_array(state.z)
    return SolveResult(
        z_star=z_star,
        x_star=state.x,
        v_star=state.v,
        objective=float(state.v @ problem.h(state.z, state.x)),
        fy_gap=gap,
        model_probs=softmax(problem.theta @ state.z),
        costs=problem.cost_vector(state.z, state.x),
        trace=trace,
        trace_stage=trace_stage,
        block_trace=block_trace,
        iterations=iters,
        converged=converged,
        mu=mu,
    )
