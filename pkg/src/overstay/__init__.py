"""Per-arrival pricing for EV charging stations that trades off charging
revenue against the cost of vehicles idling at the pole after charging."""

from .behavior import (
    ChoiceDistribution,
    DcmParams,
    ExogenousFeatures,
    IncentiveVector,
    choice_probabilities,
    fenchel_young_gap,
    lse,
    lse_conjugate,
    softmax,
)
from .pricing_solver import SolveConfig, SolveResult, bcd_solve
from .qp import QpSettings, qp_solve
from .simulator import BehaviorModel, EmpiricalDemand, StationConfig, monte_carlo, run_episode
from .station_model import ChargingSession, OverstayModel, TouTariff

__version__ = "0.1.0"
