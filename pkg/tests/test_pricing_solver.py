import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import minimize

from overstay.behavior import in_simplex, lse, lse_conjugate, softmax
from overstay.pricing_solver import (
    BlockState,
    PricingProblem,
    SolveConfig,
    _z_parts,
    bcd_solve,
    initial_z,
    v_update,
    x_update,
    z_update,
)
from overstay.station_model import (
    ChargingSession,
    InfeasibleSessionError,
    OverstayModel,
    build_flex_qp,
    flex_cost,
    max_power_profile,
)

from conftest import flat_tariff, pricing_instance, tou_tariff
from oracles import simplex_minimize


def make_state(seed, v=None):
    session, tariff, theta, overstay = pricing_instance(seed)
    cfg = SolveConfig()
    problem = PricingProblem(session, tariff, theta, overstay, cfg.lam_u, cfg.lam_g)
    z = initial_z(problem, cfg)
    x = max_power_profile(session, tariff)
    v = softmax(theta @ z) if v is None else np.asarray(v, dtype=float)
    return BlockState(z=z, x=x, v=v, F=problem.objective(z, x, v, cfg.mu)), problem, cfg


# -- x block -----------------------------------------------------------------

def test_x_update_with_flex_weight_one_is_flex_qp():
    state, problem, cfg = make_state(3, v=[1.0, 0.0, 0.0])
    x = x_update(state, problem, cfg)
    _, x_ref = flex_cost(problem.session, problem.tariff, state.z[0], cfg.lam_u)
    np.testing.assert_allclose(x, x_ref, atol=1e-8)


def test_x_update_invariant_to_flex_weight():
    a, problem, cfg = make_state(4, v=[1.0, 0.0, 0.0])
    b, _, _ = make_state(4, v=[0.5, 0.3, 0.2])
    np.testing.assert_allclose(x_update(a, problem, cfg), x_update(b, problem, cfg), atol=1e-10)


def test_x_update_keeps_x_when_flex_weight_zero():
    state, problem, cfg = make_state(5, v=[0.0, 0.6, 0.4])
    state.x = state.x + 0.0  # fresh array
    assert x_update(state, problem, cfg) is state.x


# -- z block -----------------------------------------------------------------

@pytest.mark.parametrize("seed", range(8))
def test_z_update_gradient_matches_finite_differences(seed):
    state, problem, cfg = make_state(seed)
    state.x = x_update(state, problem, cfg)
    z = z_update(state, problem, cfg)
    phi, grad, _ = _z_parts(problem, state.x, state.v, cfg.mu)
    h = 1e-6
    fd = np.array([(phi(z + h * e) - phi(z - h * e)) / (2 * h) for e in np.eye(4)[:3]])
    np.testing.assert_allclose(grad(z), fd, atol=1e-5)
    lo, hi = cfg.bounds(problem.overstay.y_hat)
    g = grad(z)
    assert np.max(np.abs(z[:3] - np.clip(z[:3] - g, lo, hi))) <= cfg.pg_tol
    assert z[3] == 1.0


@pytest.mark.parametrize("seed", range(6))
def test_z_update_matches_bounded_quasi_newton(seed):
    state, problem, cfg = make_state(seed)
    state.x = x_update(state, problem, cfg)
    z = z_update(state, problem, cfg)
    phi, grad, _ = _z_parts(problem, state.x, state.v, cfg.mu)
    lo, hi = cfg.bounds(problem.overstay.y_hat)
    ref = minimize(
        lambda w: phi(np.append(w, 1.0)), state.z[:3], jac=lambda w: grad(np.append(w, 1.0)),
        method="L-BFGS-B", bounds=list(zip(lo, hi)), options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 5000},
    )
    assert phi(z) <= ref.fun + 1e-9


def test_z_update_small_penalty_pushes_to_upper_bounds():
    state, problem, cfg = make_state(7, v=[0.4, 0.4, 0.2])
    state.x = x_update(state, problem, cfg)
    z = z_update(state, problem, cfg, mu=1e-12)
    _, hi = cfg.bounds(problem.overstay.y_hat)
    np.testing.assert_allclose(z[:3], hi, atol=1e-9)


def test_z_update_with_zero_theta_minimizes_expected_cost():
    session, tariff, _, overstay = pricing_instance(2)
    cfg = SolveConfig()
    problem = PricingProblem(session, tariff, np.zeros((3, 4)), overstay, cfg.lam_u, cfg.lam_g)
    v = np.array([0.3, 0.5, 0.2])
    x = max_power_profile(session, tariff)
    state = BlockState(z=initial_z(problem, cfg), x=x, v=v, F=0.0)
    z = z_update(state, problem, cfg)
    lo, hi = cfg.bounds(overstay.y_hat)
    ref = minimize(
        lambda w: float(v @ problem.h(np.append(w, 1.0), x)), state.z[:3], method="L-BFGS-B",
        bounds=list(zip(lo, hi)),
    )
    assert float(v @ problem.h(z, x)) <= ref.fun + 1e-9


# -- v block -----------------------------------------------------------------

def test_v_update_zero_cost_is_softmax():
    session = ChargingSession(0, 4, 1.0, 1.0, 24.0)
    t = flat_tariff()
    theta = np.random.default_rng(0).normal(size=(3, 4))
    problem = PricingProblem(session, t, theta, OverstayModel(0.0, 2.0), 1e-2, 0.0)
    z = np.array([0.3, 0.2, 2.0, 1.0])
    state = BlockState(z=z, x=max_power_profile(session, t), v=np.full(3, 1 / 3), F=0.0)
    np.testing.assert_allclose(problem.h(z, state.x), 0.0, atol=1e-15)
    np.testing.assert_allclose(v_update(state, problem, SolveConfig()), softmax(theta @ z), atol=1e-15)


def test_v_update_large_penalty_limit():
    state, problem, cfg = make_state(1)
    v = v_update(state, problem, cfg, mu=1e9)
    np.testing.assert_allclose(v, softmax(problem.theta @ state.z), atol=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_v_update_matches_simplex_minimization(seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(scale=3.0, size=3)
    h = rng.normal(scale=5.0, size=3)
    mu = float(rng.uniform(0.5, 50.0))
    closed = softmax(u - h / mu)
    grad = lambda v: h + mu * (np.log(v) + 1.0 - u)  # noqa: E731
    ref = simplex_minimize(grad, 3, step=0.2 / mu, iters=400)
    np.testing.assert_allclose(closed, ref, atol=1e-6)
    J = lambda v: v @ h + mu * (lse_conjugate(v) - v @ u)  # noqa: E731
    for w in rng.dirichlet(np.ones(3), size=50):
        assert J(closed) <= J(w) + 1e-12


# -- bi-convexity ------------------------------------------------------------

def _fy(theta, z, v):
    u = theta @ z
    return lse(u) + lse_conjugate(v) - v @ u


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gap_convex_in_v_for_fixed_z(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(3, 4))
    z = np.append(rng.uniform(0, 1, 3), 1.0)
    v1, v2 = rng.dirichlet(np.ones(3), size=2)
    assert _fy(theta, z, 0.5 * (v1 + v2)) <= 0.5 * (_fy(theta, z, v1) + _fy(theta, z, v2)) + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_gap_convex_in_z_for_fixed_v(seed):
    rng = np.random.default_rng(seed)
    theta = rng.normal(size=(3, 4))
    v = rng.dirichlet(np.ones(3))
    z1, z2 = (np.append(rng.uniform(0, 5, 3), 1.0) for _ in range(2))
    assert _fy(theta, 0.5 * (z1 + z2), v) <= 0.5 * (_fy(theta, z1, v) + _fy(theta, z2, v)) + 1e-12


# -- full solve --------------------------------------------------------------

def test_zero_theta_constant_costs_converge_to_uniform():
    session = ChargingSession(0, 4, 1.0, 1.0, 24.0)
    res = bcd_solve(session, flat_tariff(), np.zeros((3, 4)), OverstayModel(0.0, 2.0), SolveConfig(lam_g=0.0))
    assert res.converged and res.iterations <= 2
    np.testing.assert_allclose(res.v_star, [1 / 3] * 3, atol=1e-12)


@pytest.mark.parametrize("seed", range(8))
def test_solve_result_invariants(seed):
    session, tariff, theta, overstay = pricing_instance(seed)
    cfg = SolveConfig()
    res = bcd_solve(session, tariff, theta, overstay, cfg)
    assert res.converged
    assert res.fy_gap <= cfg.epsilon
    assert abs(res.trace[-1] - res.trace[-2]) <= cfg.stop_tol
    assert in_simplex(res.v_star) and abs(res.v_star.sum() - 1) <= 1e-12
    qp = build_flex_qp(session, tariff, 0.0, cfg.lam_u)
    assert np.max(np.abs(qp.C @ res.x_star - qp.d)) <= 1e-8
    assert np.max(qp.A @ res.x_star - qp.b) <= 1e-8
    lo, hi = cfg.bounds(overstay.y_hat)
    z = res.z_star.as_array()[:3]
    assert np.all(z >= lo) and np.all(z <= hi)
    np.testing.assert_allclose(res.model_probs, softmax(theta @ res.z_star.as_array()), atol=1e-15)


@pytest.mark.parametrize("seed", range(8))
def test_each_block_update_descends(seed):
    session, tariff, theta, overstay = pricing_instance(seed)
    res = bcd_solve(session, tariff, theta, overstay, SolveConfig())
    for _, F0, Fx, Fz, Fv in res.block_trace:
        assert Fx <= F0 + 1e-10 and Fz <= Fx + 1e-10 and Fv <= Fz + 1e-10


def test_gap_shrinks_as_penalty_grows():
    session, tariff, theta, overstay = pricing_instance(11)
    gaps = []
    for mu in (1.0, 10.0, 100.0):
        res = bcd_solve(session, tariff, theta, overstay, SolveConfig(mu=mu, mu_growth=1.0, epsilon=1e3))
        gaps.append(res.fy_gap)
    assert gaps[0] > gaps[1] > gaps[2]


def test_objective_residual_decays_geometrically():
    session, tariff, theta, overstay = pricing_instance(0)
    res = bcd_solve(session, tariff, theta, overstay, SolveConfig(mu_growth=1.0, epsilon=1e3, stop_tol=1e-13))
    F = np.asarray(res.trace)
    r = F[:-1] - F[-1]
    keep = r > 1e-11
    slope = np.polyfit(np.flatnonzero(keep), np.log(r[keep]), 1)[0]
    assert keep.sum() >= 3 and slope < 0


def test_iteration_cap_flags_non_convergence():
    session, tariff, theta, overstay = pricing_instance(0)
    res = bcd_solve(session, tariff, theta, overstay, SolveConfig(max_iters=1, stop_tol=1e-15))
    assert not res.converged and res.iterations == 1


def test_infeasible_session_raises():
    session = ChargingSession(0, 2, 0.0, 1.0, 80.0)
    with pytest.raises(InfeasibleSessionError):
        bcd_solve(session, tou_tariff(), np.zeros((3, 4)), OverstayModel(1.0, 2.0))


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(mu=0.0)
    with pytest.raises(ValueError):
        SolveConfig(z_lo=1.0, z_hi=0.5)
    with pytest.raises(ValueError):
        SolveConfig(y_lo=-1.0).bounds(2.0)
