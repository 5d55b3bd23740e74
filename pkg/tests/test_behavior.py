import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from overstay.behavior import (
    ChoiceDistribution,
    DcmParams,
    ExogenousFeatures,
    IncentiveVector,
    OutsideSimplexError,
    choice_from_uniform,
    choice_probabilities,
    fenchel_young_gap,
    lse,
    lse_conjugate,
    sample_choice,
    softmax,
)

finite = st.floats(-50, 50, allow_nan=False)
scores = arrays(np.float64, st.integers(1, 6), elements=finite)


def simplex_point(draw_weights):
    w = np.asarray(draw_weights, dtype=float)
    return w / w.sum()


# -- lse / softmax -----------------------------------------------------------

def test_lse_examples():
    assert lse([0, 0, 0]) == pytest.approx(math.log(3), abs=1e-12)
    assert lse([5]) == 5.0
    assert lse([1, 2, 3]) == pytest.approx(math.log(math.e + math.e**2 + math.e**3), rel=1e-14)
    assert lse([1, 2, 3]) == pytest.approx(3.407606, abs=1e-6)


def test_lse_overflow_safe():
    assert lse([1000.0, 1000.0]) == pytest.approx(1000.0 + math.log(2))
    assert lse([-1000.0]) == -1000.0


def test_lse_rejects_empty():
    with pytest.raises(ValueError):
        lse([])


def test_softmax_examples():
    np.testing.assert_allclose(softmax([0, 0, 0]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax([7, 7, 7]), [1 / 3] * 3, atol=1e-15)
    np.testing.assert_allclose(softmax(np.log([1, 2, 3])), [1 / 6, 2 / 6, 3 / 6], atol=1e-15)


@given(scores)
def test_softmax_is_distribution(u):
    p = softmax(u)
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all(p >= 0)


@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-20, 20)))
def test_softmax_strictly_positive_for_moderate_scores(u):
    assert np.all(softmax(u) > 0)


@given(scores, st.floats(-100, 100))
def test_softmax_shift_invariant(u, c):
    np.testing.assert_allclose(softmax(u + c), softmax(u), atol=1e-12)


@given(arrays(np.float64, 3, elements=st.floats(-10, 10)))
def test_softmax_is_gradient_of_lse(u):
    h = 1e-6
    fd = np.array([(lse(u + h * e) - lse(u - h * e)) / (2 * h) for e in np.eye(len(u))])
    np.testing.assert_allclose(softmax(u), fd, atol=1e-6)


# -- conjugate and Fenchel-Young gap ----------------------------------------

def test_lse_conjugate_examples():
    assert lse_conjugate([1 / 3] * 3) == pytest.approx(-math.log(3), abs=1e-12)
    assert lse_conjugate([1.0, 0.0, 0.0]) == 0.0


@pytest.mark.parametrize("v", [[0.5, 0.6, -0.1], [0.2, 0.2, 0.2], [1.1, 0.0, 0.0]])
def test_lse_conjugate_outside_simplex_signals(v):
    with pytest.raises(OutsideSimplexError):
        lse_conjugate(v)


def test_gap_examples():
    u = np.array([1.0, 2.0, 3.0])
    assert abs(fenchel_young_gap(u, softmax(u))) <= 1e-12
    assert fenchel_young_gap([0, 0, 0], [1, 0, 0]) == pytest.approx(math.log(3), abs=1e-12)
    assert abs(fenchel_young_gap([0, 0, 0], [1 / 3] * 3)) <= 1e-12


def test_gap_propagates_outside_simplex():
    with pytest.raises(OutsideSimplexError):
        fenchel_young_gap([0, 0, 0], [0.5, 0.6, -0.1])


@given(
    arrays(np.float64, 3, elements=st.floats(-30, 30)),
    arrays(np.float64, 3, elements=st.floats(0, 1)).filter(lambda w: w.sum() > 1e-3),
)
def test_gap_nonnegative(u, w):
    assert fenchel_young_gap(u, w / w.sum()) >= -1e-12


@given(arrays(np.float64, 3, elements=st.floats(-30, 30)))
def test_gap_zero_at_softmax(u):
    assert abs(fenchel_young_gap(u, softmax(u))) <= 1e-9


@given(
    arrays(np.float64, 3, elements=st.floats(-5, 5)),
    arrays(np.float64, 3, elements=st.floats(0.01, 1)),
)
def test_gap_equals_kl_divergence(u, w):
    # independent oracle: lse(u) + v.ln v - u.v = KL(v || softmax(u))
    v = w / w.sum()
    kl = float(np.sum(v * (np.log(v) - np.log(softmax(u)))))
    assert fenchel_young_gap(u, v) == pytest.approx(kl, abs=1e-10)


# -- choice model ------------------------------------------------------------

def test_incentive_vector_constant_is_one():
    z = IncentiveVector(0.3, 0.4, 2.0)
    np.testing.assert_array_equal(z.as_array(), [0.3, 0.4, 2.0, 1.0])
    with pytest.raises(ValueError):
        IncentiveVector.from_array([0.3, 0.4, 2.0, 0.5])


def test_choice_distribution_validates():
    with pytest.raises(ValueError):
        ChoiceDistribution(0.5, 0.5, 0.1)
    with pytest.raises(ValueError):
        ChoiceDistribution(1.2, -0.2, 0.0)


def test_exogenous_feature_checks():
    with pytest.raises(ValueError):
        ExogenousFeatures(9.0, 2.0, 24.0, 0.8, 0.2)
    with pytest.raises(ValueError):
        ExogenousFeatures(9.0, 0.0, 24.0, 0.2, 0.8)


def test_dcm_params_shape():
    with pytest.raises(ValueError):
        DcmParams(np.zeros((2, 4)), np.zeros((2, 5)), np.zeros(2))


def test_zero_theta_gives_uniform():
    params = DcmParams(np.zeros((3, 4)), np.zeros((3, 5)), np.zeros(3))
    p = choice_probabilities(params, IncentiveVector(0.3, 0.4, 2.0))
    np.testing.assert_allclose(p.as_array(), [1 / 3] * 3, atol=1e-15)


def test_effective_theta_folds_exogenous_terms():
    rng = np.random.default_rng(0)
    params = DcmParams(rng.normal(size=(3, 4)), rng.normal(size=(3, 5)), rng.normal(size=3))
    w = ExogenousFeatures(10.0, 3.0, 40.0, 0.2, 0.7)
    z = IncentiveVector(0.3, 0.35, 2.0)
    direct = params.theta @ z.as_array() + params.gamma @ w.as_array() + params.beta0
    np.testing.assert_allclose(params.effective_theta(w) @ z.as_array(), direct, atol=1e-12)
    np.testing.assert_allclose(choice_probabilities(params, z, w).as_array(), softmax(direct), atol=1e-15)


def test_raising_penalty_raises_leave_probability():
    theta = np.array([[0.0, 0.0, -0.1, 0.0], [0.0, 0.0, -0.1, 0.0], [0.0, 0.0, 0.2, 0.0]])
    params = DcmParams(theta, np.zeros((3, 5)), np.zeros(3))
    lo = choice_probabilities(params, IncentiveVector(0.3, 0.3, 2.0)).p_leave
    hi = choice_probabilities(params, IncentiveVector(0.3, 0.3, 2.0 + 1e-4)).p_leave
    assert hi > lo


@given(st.floats(-10, 10))
def test_common_score_shift_leaves_choice_unchanged(c):
    rng = np.random.default_rng(5)
    params = DcmParams(rng.normal(size=(3, 4)), np.zeros((3, 5)), np.zeros(3))
    shifted = DcmParams(params.theta, np.zeros((3, 5)), np.full(3, c))
    z = IncentiveVector(0.25, 0.3, 1.5)
    np.testing.assert_allclose(
        choice_probabilities(params, z).as_array(), choice_probabilities(shifted, z).as_array(), atol=1e-12
    )


def test_choice_probabilities_deterministic():
    rng = np.random.default_rng(1)
    params = DcmParams(rng.normal(size=(3, 4)), rng.normal(size=(3, 5)), rng.normal(size=3))
    w = ExogenousFeatures(12.0, 4.0, 24.0, 0.2, 0.8)
    z = IncentiveVector(0.2, 0.3, 2.0)
    assert choice_probabilities(params, z, w) == choice_probabilities(params, z, w)


# -- sampling ----------------------------------------------------------------

def test_degenerate_distribution_always_flex():
    rng = np.random.default_rng(0)
    d = ChoiceDistribution(1.0, 0.0, 0.0)
    assert {sample_choice(d, rng) for _ in range(200)} == {"flex"}


def test_sample_choice_deterministic_per_seed():
    d = ChoiceDistribution(0.2, 0.5, 0.3)
    draws = [sample_choice(d, np.random.default_rng(42)) for _ in range(5)]
    assert len(set(draws)) == 1


def test_sample_choice_frequencies():
    rng = np.random.default_rng(2024)
    d = ChoiceDistribution(1 / 3, 1 / 3, 1 / 3)
    draws = [sample_choice(d, rng) for _ in range(30000)]
    for alt in ("flex", "asap", "leave"):
        assert 0.32 <= draws.count(alt) / 30000 <= 0.35


def test_choice_from_uniform_boundaries():
    p = [0.2, 0.5, 0.3]
    assert choice_from_uniform(p, 0.0) == "flex"
    assert choice_from_uniform(p, 0.2) == "asap"
    assert choice_from_uniform(p, 0.6999) == "asap"
    assert choice_from_uniform(p, 0.7) == "leave"
    assert choice_from_uniform([0.0, 1.0, 0.0], 0.0) == "asap"
