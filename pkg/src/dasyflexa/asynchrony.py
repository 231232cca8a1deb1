"""Delayed reads, delay oracles and activation schedules.

The simulator keeps one global iteration counter ``k``. At every iteration
exactly one agent writes its block. Reads are served by a
:class:`VersionedStateStore` that remembers enough history to reconstruct
any block as it was up to ``D`` iterations ago.
"""

import bisect
from dataclasses import dataclass

import numpy as np

from ._validation import check_nonnegative_int, check_positive, check_positive_int, check_seed
from .exceptions import ContractViolation, InvalidArgument


class VersionedStateStore:
    """Per-block write history supporting reads with bounded delay.

    Block values are stored as ``(stamp, value)`` pairs where ``stamp`` is
    the first global iterate holding that value. A write performed during
    iteration ``k`` therefore gets stamp ``k + 1``. Entries that can no
    longer be reached by a read with delay at most ``D`` are pruned.

    Parameters
    ----------
    x0 : ndarray
        Initial point; reads that reach before iteration 0 return its blocks.
    partition : BlockPartition
    max_delay : int
        Largest delay a read may request.
    """

    def __init__(self, x0, partition, max_delay):
        self.partition = partition
        self.max_delay = check_nonnegative_int(max_delay, "max_delay")
        x0 = np.array(x0, dtype=float, copy=True)
        if x0.shape != (partition.total_dim,):
            raise InvalidArgument(f"x0 must have length {partition.total_dim}")
        self.x = x0
        self.k = 0
        self._stamps = [[0] for _ in range(partition.n_blocks)]
        self._values = [[partition.block(x0, i).copy()] for i in range(partition.n_blocks)]

    @property
    def current(self):
        """Copy of the current iterate ``x^k``."""
        return self.x.copy()

    def read_block(self, j, delay):
        """Block ``j`` of ``x^{k - delay}``."""
        if delay < 0 or delay > self.max_delay:
            raise ContractViolation(
                f"delay {delay} for block {j} outside [0, {self.max_delay}]")
        t = max(self.k - int(delay), 0)
        stamps = self._stamps[j]
        pos = bisect.bisect_right(stamps, t) - 1
        if pos < 0:
            raise ContractViolation(f"history of block {j} does not reach iteration {t}")
        return self._values[j][pos]

    def read_delayed(self, blocks, delays):
        """Stack ``x_l^{k - d_l}`` for ``l`` in ``blocks``."""
        if len(blocks) != len(delays):
            raise InvalidArgument("one delay per block is required")
        return np.concatenate([self.read_block(l, d) for l, d in zip(blocks, delays)])

    def record_update(self, k, i, value, expected_agent=None):
        """Write block ``i`` during iteration ``k`` and advance to ``k + 1``."""
        if k != self.k:
            raise ContractViolation(
                f"update stamped for iteration {k} but the store is at iteration {self.k}")
        if expected_agent is not None and i != expected_agent:
            raise ContractViolation(
                f"agent {i} wrote during iteration {k}, which belongs to agent {expected_agent}")
        value = np.array(value, dtype=float, copy=True)
        sl = self.partition.block_slice(i)
        if value.shape != (sl.stop - sl.start,):
            raise InvalidArgument(f"block {i} must have length {sl.stop - sl.start}")
        self.k += 1
        self.x[sl] = value
        self._stamps[i].append(self.k)
        self._values[i].append(value)
        self._prune(i)

    def _prune(self, i):
        # keep the newest entry at or below the oldest reachable iteration
        oldest = self.k - self.max_delay
        stamps = self._stamps[i]
        pos = bisect.bisect_right(stamps, oldest) - 1
        if pos > 0:
            del stamps[:pos]
            del self._values[i][:pos]

    def history_length(self, i):
        return len(self._stamps[i])


class DelayOracle:
    """Base class. Subclasses emit integer delays in ``[0, D]``."""

    kind = "base"

    def __init__(self, max_delay):
        self.max_delay = check_nonnegative_int(max_delay, "max_delay")

    def _draw(self, k, size):
        raise NotImplementedError

    def variable_delays(self, k, i, blocks):
        """Delays for reading ``x_{N_i}``; the own block is always fresh."""
        d = self._variable(k, i, len(blocks))
        d[list(blocks).index(i)] = 0
        return d

    def _variable(self, k, i, size):
        return self._draw(k, size)

    def gradient_delays(self, k, i, j, blocks):
        """Delays of the point where ``grad_{x_i} f_j`` was evaluated."""
        return self._draw(k, len(blocks))

    def observe(self, k, i):
        """Called after agent ``i`` wrote during iteration ``k``."""


class ZeroDelay(DelayOracle):
    kind = "zero"

    def __init__(self):
        super().__init__(0)

    def _draw(self, k, size):
        return np.zeros(size, dtype=int)


class FixedDelay(DelayOracle):
    kind = "fixed"

    def __init__(self, delay):
        super().__init__(delay)

    def _draw(self, k, size):
        return np.full(size, self.max_delay, dtype=int)


class UniformDelay(DelayOracle):
    """Independent uniform integer delays on ``{0, ..., D}``."""

    kind = "uniform"

    def __init__(self, max_delay, seed):
        super().__init__(max_delay)
        self.rng = np.random.default_rng(check_seed(seed))

    def _draw(self, k, size):
        return self.rng.integers(0, self.max_delay + 1, size=size)


class ClockPhaseDelay(DelayOracle):
    """Delays produced by event-driven communication.

    Agents broadcast their block as soon as they write it, so variable
    reads are fresh. A partial gradient ``grad_{x_i} f_j`` is sent when
    agent ``j`` last updated, so its age is the number of iterations since
    then, capped at ``D``.
    """

    kind = "clock-phase"

    def __init__(self, max_delay, n_agents):
        super().__init__(max_delay)
        self.last_write = np.full(check_positive_int(n_agents, "n_agents"), -1, dtype=np.int64)

    def _variable(self, k, i, size):
        return np.zeros(size, dtype=int)

    def gradient_delays(self, k, i, j, blocks):
        age = k - (self.last_write[j] + 1)
        return np.full(len(blocks), min(self.max_delay, max(int(age), 0)), dtype=int)

    def observe(self, k, i):
        self.last_write[i] = k


class ActivationSchedule:
    """Base class producing the sequence ``i^0, i^1, ...``."""

    kind = "base"

    def __init__(self, n_agents):
        self.n_agents = check_positive_int(n_agents, "n_agents")
        self._seq = []

    @property
    def bound(self):
        """Window length ``B`` in which every agent is guaranteed to appear."""
        raise NotImplementedError

    def _extend(self):
        raise NotImplementedError

    def next_activation(self, k):
        while len(self._seq) <= k:
            self._extend()
        return self._seq[k]

    def sequence(self, length):
        return [self.next_activation(k) for k in range(length)]


class CyclicSchedule(ActivationSchedule):
    kind = "cyclic"

    @property
    def bound(self):
        return self.n_agents

    def _extend(self):
        self._seq.extend(range(self.n_agents))


class ShuffledRoundsSchedule(ActivationSchedule):
    """Rounds of independent random permutations; ``B = 2N - 1``."""

    kind = "shuffled-rounds"

    def __init__(self, n_agents, seed):
        super().__init__(n_agents)
        self.rng = np.random.default_rng(check_seed(seed))

    @property
    def bound(self):
        return 2 * self.n_agents - 1

    def _extend(self):
        self._seq.extend(int(a) for a in self.rng.permutation(self.n_agents))


class ClockPhaseSchedule(ActivationSchedule):
    """Agents fire on local clocks whose periods are redrawn at every tick.

    Each agent waits ``U[period_min, period_max]`` time units between fires.
    Between two fires of one agent every other agent fires at most
    ``floor(period_max / period_min) + 1`` times, which gives the bound
    ``B = (N - 1)(floor(period_max / period_min) + 1) + 1``.
    """

    kind = "clock-phase"

    def __init__(self, n_agents, seed, period_min=5.0, period_max=50.0):
        super().__init__(n_agents)
        self.period_min = check_positive(period_min, "period_min")
        self.period_max = check_positive(period_max, "period_max")
        if self.period_max < self.period_min:
            raise InvalidArgument("period_max must be >= period_min")
        self.rng = np.random.default_rng(check_seed(seed))
        self.next_fire = self.rng.uniform(0.0, self.period_max, self.n_agents)

    @property
    def bound(self):
        ratio = int(np.floor(self.period_max / self.period_min))
        return (self.n_agents - 1) * (ratio + 1) + 1

    def _extend(self):
        i = int(np.argmin(self.next_fire))
        self.next_fire[i] += self.rng.uniform(self.period_min, self.period_max)
        self._seq.append(i)


@dataclass
class ScheduleSpec:
    """Recipe for an activation schedule; built fresh for every run."""

    kind: str = "cyclic"
    seed: int = 0
    period_min: float = 5.0
    period_max: float = 50.0

    def build(self, n_agents):
        if self.kind == "cyclic":
            return CyclicSchedule(n_agents)
        if self.kind == "shuffled-rounds":
            return ShuffledRoundsSchedule(n_agents, self.seed)
        if self.kind == "clock-phase":
            return ClockPhaseSchedule(n_agents, self.seed, self.period_min, self.period_max)
        raise InvalidArgument(f"unknown schedule kind {self.kind!r}")


@dataclass
class DelaySpec:
    """Recipe for a delay oracle. ``D`` is the bound; ``fixed`` emits ``D``."""

    kind: str = "zero"
    D: int = 0
    seed: int = 0

    def __post_init__(self):
        check_nonnegative_int(self.D, "D")
        if self.kind == "zero" and self.D != 0:
            raise InvalidArgument("the zero delay oracle requires D = 0")

    def build(self, n_agents):
        if self.kind == "zero":
            return ZeroDelay()
        if self.kind == "fixed":
            return FixedDelay(self.D)
        if self.kind == "uniform":
            return UniformDelay(self.D, self.seed)
        if self.kind == "clock-phase":
            return ClockPhaseDelay(self.D, n_agents)
        raise InvalidArgument(f"unknown delay kind {self.kind!r}")


def next_activation(schedule, k):
    return schedule.next_activation(k)


def sample_delay_vector(oracle, k, i, j, blocks):
    """Delays ``d^k(i, j)``, one per block in ``blocks`` (= ``N_j``)."""
    if j == i:
        return oracle.variable_delays(k, i, blocks)
    return oracle.gradient_delays(k, i, j, blocks)


def read_delayed(store, blocks, delays):
    return store.read_delayed(blocks, delays)


def record_update(store, k, i, value, expected_agent=None):
    store.record_update(k, i, value, expected_agent)


def max_window_gap(sequence, n_agents):
    """Smallest ``B`` such that every length-``B`` window covers all agents.

    Computed over complete windows of ``sequence``; returns ``None`` if some
    agent never appears.
    """
    seq = np.asarray(sequence)
    worst = 0
    for a in range(n_agents):
        pos = np.flatnonzero(seq == a)
        if pos.size == 0:
            return None
        edges = np.concatenate(([-1], pos, [len(seq)]))
        # a window avoiding agent a fits strictly between two occurrences
        gap = int(np.max(np.diff(edges))) - 1
        worst = max(worst, gap + 1)
    return worst
