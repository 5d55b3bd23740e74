import numpy as np
import pytest

from overstay.station_model import ChargingSession, TouTariff


def flat_tariff(price=0.2, step_hours=0.25, day_start=7.0, day_end=22.0):
    n = int(round((day_end - day_start) / step_hours))
    return TouTariff(step_hours, np.full(n, price), day_start, day_end)


def random_session(rng, tariff, max_steps=8, p_max=7.2):
    """A feasible session with a random horizon, battery and SOC window."""
    n = int(rng.integers(1, max_steps + 1))
    battery = float(rng.uniform(8.0, 60.0))
    soc_init = float(rng.uniform(0.0, 0.7))
    reach = min(1.0, soc_init + n * tariff.step_hours * p_max / battery)
    soc_need = float(rng.uniform(soc_init, reach))
    arrival = int(rng.integers(0, tariff.n_steps - n + 1))
    return ChargingSession(arrival, n, soc_init, soc_need, battery, p_max=p_max, u_nom=p_max)


@pytest.fixture
def tariff():
    return flat_tariff()


@pytest.fixture
def tou():
    # cheap morning, expensive 13-18 block, as in the bundled table
    return tou_tariff()


def tou_tariff():
    prices = np.full(60, 0.11)
    prices[6:24] = 0.18
    prices[24:44] = 0.32
    prices[44:58] = 0.18
    return TouTariff(0.25, prices, 7.0, 22.0)


def pricing_instance(seed, tariff=None, max_steps=24):
    """Random feasible session plus a synthesized per-session score matrix."""
    from overstay.behavior import ExogenousFeatures, IncentiveVector
    from overstay.simulator import synthesize_dcm_params
    from overstay.station_model import OverstayModel

    tariff = tou_tariff() if tariff is None else tariff
    rng = np.random.default_rng(seed)
    session = random_session(rng, tariff, max_steps=max_steps)
    base = float(np.mean(tariff.prices)) + 0.1
    baseline = IncentiveVector(base, base, 2.0)
    reference = ExogenousFeatures(12.0, 3.25, 50.0, 0.3, 0.6)
    params = synthesize_dcm_params(seed, baseline, reference, leave_share=0.02, price_sensitivity=(25, 40))
    w = ExogenousFeatures(
        float(tariff.clock(session.arrival_step)), session.horizon_steps * tariff.step_hours,
        session.battery_capacity, session.soc_init, session.soc_need,
    )
    overstay = OverstayModel(float(rng.uniform(0.5, 2.0)), 2.0)
    return session, tariff, params.effective_theta(w), overstay
