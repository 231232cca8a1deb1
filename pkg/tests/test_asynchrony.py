import numpy as np
import pytest

from dasyflexa.asynchrony import (ClockPhaseDelay, ClockPhaseSchedule, CyclicSchedule,
                                  DelaySpec, FixedDelay, ScheduleSpec, ShuffledRoundsSchedule,
                                  UniformDelay, VersionedStateStore, max_window_gap,
                                  sample_delay_vector)
from dasyflexa.exceptions import ContractViolation, InvalidArgument
from dasyflexa.partition import make_partition


def scripted_store(max_delay=5):
    """Block 0 is written during iterations 3 and 7, block 1 otherwise."""
    p = make_partition([1, 1])
    store = VersionedStateStore(np.array([-1.0, -2.0]), p, max_delay)
    for k in range(8):
        if k in (3, 7):
            store.record_update(k, 0, [float(k)])
        else:
            store.record_update(k, 1, [100.0 + k])
    return store


def test_scripted_history_reads():
    store = scripted_store()
    assert store.k == 8
    assert store.read_block(0, 3)[0] == 3.0      # x^5 holds the iteration-3 write
    assert store.read_block(0, 0)[0] == 7.0
    assert store.read_block(0, 4)[0] == 3.0      # x^4 is the first iterate after it
    assert store.read_block(0, 5)[0] == -1.0     # x^3 predates it
    assert store.read_block(1, 1)[0] == 106.0


def test_reads_before_start_return_x0():
    p = make_partition([2, 1])
    x0 = np.array([1.0, 2.0, 3.0])
    store = VersionedStateStore(x0, p, 4)
    store.record_update(0, 1, [9.0])
    assert np.array_equal(store.read_block(0, 4), [1.0, 2.0])
    assert store.read_block(1, 4)[0] == 3.0
    assert store.read_block(1, 0)[0] == 9.0
    assert np.array_equal(store.read_delayed([0, 1], [0, 1]), [1.0, 2.0, 3.0])


def test_read_your_write_and_staleness():
    p = make_partition([1, 1])
    store = VersionedStateStore(np.zeros(2), p, 2)
    store.record_update(0, 0, [5.0])
    assert store.read_block(0, 0)[0] == 5.0
    assert store.read_block(0, 1)[0] == 0.0
    assert np.array_equal(store.current, [5.0, 0.0])


def test_contract_violations():
    p = make_partition([1, 1])
    store = VersionedStateStore(np.zeros(2), p, 2)
    store.record_update(0, 0, [1.0])
    with pytest.raises(ContractViolation):
        store.record_update(0, 1, [1.0])          # second write in iteration 0
    with pytest.raises(ContractViolation):
        store.record_update(1, 1, [1.0], expected_agent=0)
    with pytest.raises(ContractViolation):
        store.read_block(0, 3)
    with pytest.raises(ContractViolation):
        store.read_block(0, -1)
    with pytest.raises(InvalidArgument):
        store.record_update(1, 0, [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        VersionedStateStore(np.zeros(3), p, 1)


def test_history_is_pruned():
    p = make_partition([1])
    store = VersionedStateStore(np.zeros(1), p, 3)
    for k in range(100):
        store.record_update(k, 0, [float(k)])
    assert store.history_length(0) <= 4
    for d in range(4):
        assert store.read_block(0, d)[0] == 99.0 - d


def test_uniform_delays_within_bound():
    oracle = UniformDelay(5, seed=1)
    draws = np.concatenate([sample_delay_vector(oracle, k, 0, 1, [0, 1, 2])
                            for k in range(10_000)])
    assert draws.min() == 0 and draws.max() == 5
    assert set(np.unique(draws)) == set(range(6))


def test_own_block_is_fresh():
    oracle = FixedDelay(2)
    d = sample_delay_vector(oracle, 10, 1, 1, [0, 1, 2])
    assert list(d) == [2, 0, 2]
    assert list(sample_delay_vector(oracle, 10, 1, 0, [0, 1])) == [2, 2]


def test_clock_phase_delays_track_last_write():
    oracle = ClockPhaseDelay(5, 3)
    oracle.observe(4, 2)
    assert list(oracle.gradient_delays(7, 0, 2, [1, 2])) == [2, 2]
    assert list(oracle.gradient_delays(30, 0, 2, [1, 2])) == [5, 5]
    assert list(oracle.variable_delays(7, 0, [0, 1])) == [0, 0]


def test_delay_spec_validation():
    with pytest.raises(InvalidArgument):
        DelaySpec("zero", 3)
    with pytest.raises(InvalidArgument):
        DelaySpec("fixed", -1)
    with pytest.raises(InvalidArgument):
        DelaySpec("gaussian", 1).build(2)
    with pytest.raises(InvalidArgument):
        ScheduleSpec("random").build(2)


def test_cyclic_schedule():
    s = CyclicSchedule(3)
    assert s.sequence(7) == [0, 1, 2, 0, 1, 2, 0]
    assert max_window_gap(s.sequence(300), 3) == s.bound == 3


@pytest.mark.parametrize("seed", range(5))
def test_shuffled_rounds_bound(seed):
    s = ShuffledRoundsSchedule(6, seed)
    assert s.bound == 11
    assert max_window_gap(s.sequence(6000), 6) <= s.bound


@pytest.mark.parametrize("seed", range(3))
def test_clock_phase_bound(seed):
    s = ClockPhaseSchedule(5, seed, 5.0, 50.0)
    assert s.bound == 4 * 11 + 1
    assert max_window_gap(s.sequence(20_000), 5) <= s.bound


def test_schedules_are_deterministic():
    for spec in (ScheduleSpec("shuffled-rounds", 3), ScheduleSpec("clock-phase", 3)):
        assert spec.build(4).sequence(200) == spec.build(4).sequence(200)
    a = UniformDelay(4, 9)
    b = UniformDelay(4, 9)
    for k in range(50):
        assert np.array_equal(a.gradient_delays(k, 0, 1, [0, 1]),
                              b.gradient_delays(k, 0, 1, [0, 1]))
