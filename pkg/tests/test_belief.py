from fractions import Fraction
from itertools import product

import pytest

from src.backend.belief import (
    BeliefProfile, ImpossibleObservationError, MarginalBelief, OracleSizeError,
    brute_force_joint, init_profile, support_max, update_profile, verify_factorization,
)
from src.backend.channel import ArrivalRates, Feedback

IDLE, SUCCESS = Feedback.IDLE, Feedback.SUCCESS


class TestInitProfile:
    @pytest.mark.parametrize("n_users", [1, 2, 5])
    def test_point_masses(self, n_users):
        profile = init_profile(n_users, ArrivalRates.symmetric(n_users, 0.5))
        assert all(m.pmf == (1.0,) for m in profile.marginals)
        assert profile.support_maxima() == (0,) * n_users

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            init_profile(3, ArrivalRates((0.1, 0.1)))


class TestUpdateProfile:
    def test_first_slot_idle(self):
        profile = update_profile(init_profile(2, ArrivalRates((0.3, 0.5))), IDLE)
        assert profile.marginals[0].pmf == pytest.approx((0.7, 0.3))
        assert profile.marginals[1].pmf == pytest.approx((0.5, 0.5))
        assert profile.slot == 1

    def test_success_conditions_serves_and_convolves(self):
        profile = BeliefProfile(
            (MarginalBelief(0, (0.25, 0.75)), MarginalBelief(1, (1.0,))), 3, (0.2, 0.3))
        updated = update_profile(profile, SUCCESS)
        assert updated.marginals[0].pmf == pytest.approx((0.8, 0.2))
        assert updated.marginals[1].pmf == pytest.approx((0.7, 0.3))

    def test_success_from_empty_queue_is_impossible(self):
        with pytest.raises(ImpossibleObservationError):
            update_profile(init_profile(2, ArrivalRates((0.3, 0.5))), SUCCESS)

    def test_idle_with_surely_nonempty_queue_is_impossible(self):
        profile = BeliefProfile(
            (MarginalBelief(0, (0.0, 1.0)), MarginalBelief(1, (1.0,))), 1, (0.2, 0.3))
        with pytest.raises(ImpossibleObservationError):
            update_profile(profile, IDLE)

    def test_collision_is_impossible(self):
        with pytest.raises(ImpossibleObservationError):
            update_profile(init_profile(2, ArrivalRates((0.3, 0.5))), Feedback.COLLISION)

    def test_marginals_stay_normalized(self):
        profile = init_profile(3, ArrivalRates((0.2, 0.3, 0.4)))
        for fb in (IDLE, SUCCESS, SUCCESS, IDLE, SUCCESS):
            profile = update_profile(profile, fb)
            assert all(abs(m.total - 1.0) < 1e-12 for m in profile.marginals)

    def test_exact_mode_uses_fractions(self):
        profile = update_profile(init_profile(2, ArrivalRates((0.3, 0.5)), exact=True), IDLE)
        assert profile.marginals[0].pmf == (Fraction(7, 10), Fraction(3, 10))


class TestSupportMax:
    def test_point_mass(self):
        assert support_max(init_profile(1, ArrivalRates((0.4,))), 0) == 0

    def test_two_point_support(self):
        profile = update_profile(init_profile(1, ArrivalRates((0.3,))), IDLE)
        assert support_max(profile, 0) == 1

    def test_unselected_user_grows_each_slot(self):
        profile = init_profile(3, ArrivalRates((0.2, 0.3, 0.4)))
        for fb in (IDLE, SUCCESS):
            profile = update_profile(profile, fb)
        assert support_max(profile, 2) == 2


class TestBruteForceJoint:
    def test_single_user_single_slot(self):
        joint = brute_force_joint(1, ArrivalRates((0.5,)), 1)
        assert set(joint) == {(IDLE,)}
        assert joint[(IDLE,)] == pytest.approx({(0,): 0.5, (1,): 0.5})

    def test_two_users_single_slot_matches_recursion(self):
        joint = brute_force_joint(2, ArrivalRates((0.3, 0.6)), 1)[(IDLE,)]
        expected = {(q0, q1): (0.3 if q0 else 0.7) * (0.6 if q1 else 0.4)
                    for q0, q1 in product((0, 1), repeat=2)}
        assert joint == pytest.approx(expected)

    def test_conditionals_are_normalized(self):
        for dist in brute_force_joint(2, ArrivalRates((0.3, 0.6)), 4).values():
            assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("n_users, horizon", [(4, 2), (2, 11)])
    def test_size_limits(self, n_users, horizon):
        with pytest.raises(OracleSizeError):
            brute_force_joint(n_users, ArrivalRates.symmetric(n_users, 0.4), horizon)


class TestFactorization:
    def test_two_users_three_slots(self):
        report = verify_factorization(2, ArrivalRates((0.3, 0.6)), 3)
        assert report.passed
        assert report.max_deviation < 1e-12
        assert report.bounds_match

    def test_exact_rational_mode(self):
        report = verify_factorization(2, ArrivalRates((0.3, 0.5)), 6, exact=True)
        assert report.passed
        assert report.max_deviation == 0

    @pytest.mark.parametrize("rates", [(0.1, 0.2, 0.3), (0.4, 0.1, 0.4), (0.2, 0.2, 0.2)])
    def test_three_users(self, rates):
        report = verify_factorization(3, ArrivalRates(rates), 5)
        assert report.passed, report.first_bound_mismatch


@pytest.mark.slow
@pytest.mark.parametrize("n_users", [2, 3])
def test_factorization_rate_grid(n_users):
    grid = (0.1, 0.2, 0.3, 0.4)
    for rates in product(grid, repeat=n_users):
        if sum(rates) >= 1:
            continue
        report = verify_factorization(n_users, ArrivalRates(rates), 8)
        assert report.passed, (rates, report.first_bound_mismatch)
