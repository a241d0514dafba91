import numpy as np
import pytest

from src.backend.channel import ArrivalRates, ContractViolationError, Feedback
from src.backend.cima import CimaAgent, cima_transition, select_user, update_bounds
from src.backend.simulation import simulate


@pytest.mark.parametrize("bounds, expected", [
    ([0, 0, 0], 0),
    ([2, 5, 5], 1),
    ([1, 0, 3, 3], 2),
])
def test_select_user_smallest_index_among_maxima(bounds, expected):
    assert select_user(bounds) == expected


def test_select_user_empty():
    with pytest.raises(ContractViolationError):
        select_user([])


class TestDecide:
    def test_selected_but_empty(self):
        agent = CimaAgent(0, 2, initial_queue=0, initial_bounds=[0, 0])
        assert agent.decide() == 0
        assert agent.last_selected == 0

    def test_selected_with_packets(self):
        agent = CimaAgent(0, 2, initial_queue=4, initial_bounds=[3, 2])
        assert agent.decide() == 1

    def test_not_selected(self):
        agent = CimaAgent(1, 2, initial_queue=9, initial_bounds=[3, 2])
        assert agent.decide() == 0


class TestUpdateBounds:
    def test_success_keeps_selected_bound(self):
        assert update_bounds([3, 1], Feedback.SUCCESS) == [3, 2]

    def test_idle_resets_selected_bound(self):
        assert update_bounds([3, 1], Feedback.IDLE) == [1, 2]

    def test_first_slot_from_empty_start(self):
        assert update_bounds([0, 0, 0], Feedback.IDLE) == [1, 1, 1]

    def test_collision_is_contract_violation(self):
        with pytest.raises(ContractViolationError):
            update_bounds([1, 1], Feedback.COLLISION)

    def test_input_not_mutated(self):
        bounds = np.array([2, 4])
        update_bounds(bounds, Feedback.SUCCESS)
        assert bounds.tolist() == [2, 4]


class TestOnFeedback:
    def test_selected_success_serves(self):
        agent = CimaAgent(0, 2, initial_queue=2, initial_bounds=[3, 1])
        agent.decide()
        agent.on_feedback(Feedback.SUCCESS, 0)
        assert agent.local_queue == 1
        assert agent.local_bounds == [3, 2]

    def test_not_selected_accumulates(self):
        agent = CimaAgent(1, 2, initial_queue=2, initial_bounds=[3, 1])
        agent.decide()
        agent.on_feedback(Feedback.SUCCESS, 1)
        assert agent.local_queue == 3

    def test_selected_idle_resets_own_bound(self):
        agent = CimaAgent(0, 2, initial_queue=0, initial_bounds=[3, 1])
        agent.decide()
        agent.on_feedback(Feedback.IDLE, 1)
        assert agent.local_queue == 1
        assert agent.local_bounds[0] == 1

    def test_feedback_before_decide(self):
        agent = CimaAgent(0, 2)
        with pytest.raises(ContractViolationError):
            agent.on_feedback(Feedback.IDLE, 0)

    def test_collision(self):
        agent = CimaAgent(0, 2)
        agent.decide()
        with pytest.raises(ContractViolationError):
            agent.on_feedback(Feedback.COLLISION, 0)


def test_transition_feedback_follows_selected_queue():
    q, b, fb = cima_transition([0, 2], [1, 3], [1, 0])
    assert fb == Feedback.SUCCESS
    assert q.tolist() == [1, 1]
    assert b.tolist() == [2, 3]

    q, b, fb = cima_transition([2, 0], [1, 3], [0, 0])
    assert fb == Feedback.IDLE
    assert q.tolist() == [2, 0]
    assert b.tolist() == [2, 1]


@pytest.mark.parametrize("seed", range(5))
def test_all_cima_system_invariants(seed):
    rates = ArrivalRates.asymmetric(6, 0.8)
    trajectory = simulate("cima", rates, 5_000, seed, record_bounds=True)
    audit = trajectory.audit
    assert audit.collisions == 0
    assert audit.replica_mismatches == 0
    assert audit.bound_violations == 0
    assert audit.queue_mismatches == 0
    assert audit.bound_overflows == 0
    assert np.all(trajectory.bounds >= trajectory.queues)

    # Idle になるのは選ばれたユーザーのキューが空のときだけ
    selected = np.argmax(trajectory.bounds[:-1], axis=1)
    empty = trajectory.queues[np.arange(trajectory.horizon), selected] == 0
    assert np.array_equal(trajectory.feedback == int(Feedback.IDLE), empty)


def test_bounds_never_exceed_slot_count():
    trajectory = simulate("cima", ArrivalRates.symmetric(3, 0.3), 2_000, 1, record_bounds=True)
    t = np.arange(trajectory.horizon + 1)
    assert np.all(trajectory.bounds.max(axis=1) <= t + 1)


@pytest.mark.parametrize("bounds", [[2, 5, 5, 1], (2, 5, 5, 1), np.array([2, 5, 5, 1])])
def test_select_user_accepts_any_sequence(bounds):
    assert select_user(bounds) == 1
    assert type(select_user(bounds)) is int


@pytest.mark.parametrize("seed", range(3))
def test_replica_follows_update_bounds(seed):
    rng = np.random.default_rng(seed)
    bounds = [int(b) for b in rng.integers(0, 6, size=4)]
    agent = CimaAgent(2, 4, initial_queue=1, initial_bounds=bounds)
    expected = list(bounds)
    for _ in range(50):
        agent.decide()
        feedback = Feedback.SUCCESS if rng.random() < 0.5 else Feedback.IDLE
        agent.on_feedback(feedback, 0)
        expected = update_bounds(expected, feedback)
        assert agent.local_bounds == expected
        assert all(type(b) is int for b in agent.local_bounds)


COLLISION_USERS = (2, 4, 8, 16, 32, 64)


@pytest.mark.slow
@pytest.mark.parametrize("index, n_users", list(enumerate(COLLISION_USERS)))
def test_collision_free_with_consistent_replicas(index, n_users):
    # 100 本の軌跡を N の候補に順番に割り振る
    rates = ArrivalRates.asymmetric(n_users, 0.8)
    for seed in range(index, 100, len(COLLISION_USERS)):
        audit = simulate("cima", rates, 100_000, seed).audit
        assert audit.audited_slots == 100_000
        assert audit.collisions == 0
        assert audit.replica_mismatches == 0
        assert audit.bound_violations == 0
        assert audit.queue_mismatches == 0
