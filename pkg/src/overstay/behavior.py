"""Multinomial-logit driver choice model and log-sum-exp helpers.

Alternatives are always ordered (flex, asap, leave). Scores are computed as
``theta_eff @ z`` where ``theta_eff`` folds the exogenous term of each
alternative into the constant column, so the pricing solver only ever sees
a 3x4 matrix acting on the incentive vector.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

ALTERNATIVES = ("flex", "asap", "leave")
FLEX, ASAP, LEAVE = 0, 1, 2
FEATURE_NAMES = ("time_of_day", "parking_duration", "battery_capacity", "soc_init", "soc_need")
SIMPLEX_TOL = 1e-9


class OutsideSimplexError(ValueError):
    """Raised when the negative-entropy conjugate is evaluated off the simplex."""


@dataclass(frozen=True)
class IncentiveVector:
    z_flex: float
    z_asap: float
    y: float

    @property
    def constant(self) -> float:
        return 1.0

    def as_array(self) -> np.ndarray:
        return np.array([self.z_flex, self.z_asap, self.y, 1.0])

    @classmethod
    def from_array(cls, z) -> "IncentiveVector":
        z = np.asarray(z, dtype=float)
        if z.shape != (4,):
            raise ValueError(f"incentive vector must have 4 entries, got shape {z.shape}")
        if z[3] != 1.0:
            raise ValueError(f"constant coordinate must be 1, got {z[3]}")
        return cls(float(z[0]), float(z[1]), float(z[2]))


@dataclass(frozen=True)
class ExogenousFeatures:
    time_of_day: float
    parking_duration: float
    battery_capacity: float
    soc_init: float
    soc_need: float

    def __post_init__(self):
        if not (0.0 <= self.soc_init <= self.soc_need <= 1.0):
            raise ValueError(
                f"need 0 <= soc_init <= soc_need <= 1, got {self.soc_init}, {self.soc_need}"
            )
        if self.parking_duration <= 0:
            raise ValueError(f"parking_duration must be positive, got {self.parking_duration}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_NAMES])


@dataclass
class DcmParams:
    """Logit coefficients.

    theta : (3, 4) weights on [z_flex, z_asap, y, 1], rows (flex, asap, leave)
    gamma : (3, 5) weights on the exogenous features, same row order
    beta0 : (3,) alternative specific constants
    """

    theta: np.ndarray
    gamma: np.ndarray = field(default_factory=lambda: np.zeros((3, len(FEATURE_NAMES))))
    beta0: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=float)
        self.gamma = np.asarray(self.gamma, dtype=float)
        self.beta0 = np.asarray(self.beta0, dtype=float)
        if self.theta.shape != (3, 4):
            raise ValueError(f"theta must be 3x4 (flex, asap, leave), got {self.theta.shape}")
        if self.gamma.shape != (3, len(FEATURE_NAMES)):
            raise ValueError(f"gamma must be 3x{len(FEATURE_NAMES)}, got {self.gamma.shape}")
        if self.beta0.shape != (3,):
            raise ValueError(f"beta0 must have 3 entries, got {self.beta0.shape}")

    def effective_theta(self, w: ExogenousFeatures | None = None) -> np.ndarray:
        """Theta with gamma^T w + beta0 added to the constant column."""
        out = self.theta.copy()
        out[:, 3] += self.beta0
        if w is not None:
            out[:, 3] += self.gamma @ w.as_array()
        return out


@dataclass(frozen=True)
class ChoiceDistribution:
    p_flex: float
    p_asap: float
    p_leave: float

    def __post_init__(self):
        p = self.as_array()
        if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"not a probability vector: {p}")

    def as_array(self) -> np.ndarray:
        return np.array([self.p_flex, self.p_asap, self.p_leave])

    @classmethod
    def from_array(cls, p) -> "ChoiceDistribution":
        p = np.asarray(p, dtype=float)
        return cls(float(p[0]), float(p[1]), float(p[2]))


def lse(u) -> float:
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("lse of an empty vector")
    m = np.max(u)
    return float(m + np.log(np.sum(np.exp(u - m))))


def softmax(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.size == 0:
        raise ValueError("softmax of an empty vector")
    e = np.exp(u - np.max(u))
    return e / e.sum()


def in_simplex(v, tol: float = SIMPLEX_TOL) -> bool:
    v = np.asarray(v, dtype=float)
    return bool(v.size > 0 and np.all(v >= -tol) and abs(v.sum() - 1.0) <= tol)


def lse_conjugate(v) -> float:
    """Negative entropy sum(v ln v) on the simplex.

    Off the simplex the conjugate is +inf; that case raises
    OutsideSimplexError so it can never be mistaken for a finite value.
    """
    v = np.asarray(v, dtype=float)
    if not in_simplex(v):
        raise OutsideSimplexError(f"{v} is not a probability vector")
    v = np.clip(v, 0.0, None)
    pos = v > 0
    return float(np.sum(v[pos] * np.log(v[pos])))


def fenchel_young_gap(u, v) -> float:
    """lse(u) + lse*(v) - u.v; nonnegative, zero iff v == softmax(u)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    return lse(u) + lse_conjugate(v) - float(u @ v)


def choice_probabilities(params: DcmParams, z: IncentiveVector, w: ExogenousFeatures | None = None) -> ChoiceDistribution:
    return ChoiceDistribution.from_array(softmax(params.effective_theta(w) @ z.as_array()))


def sample_choice(dist: ChoiceDistribution, rng: np.random.Generator) -> str:
    """Draw one alternative name; a single uniform is consumed per call."""
    return choice_from_uniform(dist.as_array(), rng.random())


def choice_from_uniform(p, u: float) -> str:
    # inverse CDF, so the same uniform can be replayed against another distribution
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, u * cdf[-1], side="right"))
    return ALTERNATIVES[min(idx, len(p) - 1)]
