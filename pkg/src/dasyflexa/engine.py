"""The asynchronous outer loop, serial simulation and threaded execution.

At global iteration ``k`` one agent ``i``:

1. reads its neighborhood and the partial gradients of the agents that
   depend on it, each possibly delayed;
2. computes the best response ``x_hat_i``;
3. moves ``x_i <- x_i + gamma (x_hat_i - x_i)``;
4. advances the counter.
"""

import logging
import math
import threading
import time
import warnings
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._validation import (check_fraction, check_nonnegative_int, check_positive,
                          check_positive_int, check_seed, check_vector)
from .asynchrony import DelaySpec, ScheduleSpec, VersionedStateStore
from .exceptions import ContractViolation, InvalidArgument, SolverFailure
from .metrics import lyapunov_from_steps, max_safe_stepsize, merit_MV, prox_residual
from .objective import estimate_block_lipschitz
from .surrogate import BestResponseInput, SurrogateSpec, best_response

logger = logging.getLogger(__name__)

__all__ = ["EngineConfig", "Trace", "max_safe_stepsize", "run", "run_parallel", "step"]

TRACE_COLUMNS = ("k", "agent", "V", "MV", "lyapunov", "prox_residual", "messages",
                 "update_norm")


@dataclass
class EngineConfig:
    """Run parameters.

    Parameters
    ----------
    gamma : float
        Relaxation stepsize in (0, 1].
    max_iterations : int
        Iteration cap.
    stop_tolerance : float
        The run stops once the stopping metric is at or below this value.
        Zero disables early stopping.
    stop_metric : {"MV", "prox_residual"}
    surrogate : SurrogateSpec
    schedule : ScheduleSpec
    delay : DelaySpec
    seed : int
        Base seed. Schedule and delay recipes carry their own seeds.
    metrics_stride : int, optional
        Evaluate the merit and the prox residual every this many iterations.
        Defaults to the number of agents.
    theory_mode : bool
        Require ``gamma`` strictly below the safe stepsize.
    lipschitz : float, optional
        Override for the estimated Lipschitz constant.
    target_value : float, optional
        Also stop as soon as the objective is at or below this value, e.g.
        ``V* (1 + 1e-4)`` to stop at a relative error of ``1e-4``.
    record_iterates, record_reads : bool
        Keep every iterate, and every delayed read together with the
        best-response input and output, for offline audits.
    """

    gamma: float = 0.9
    max_iterations: int = 10_000
    stop_tolerance: float = 1e-10
    stop_metric: str = "MV"
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    delay: DelaySpec = field(default_factory=DelaySpec)
    seed: int = 0
    metrics_stride: int = None
    theory_mode: bool = False
    lipschitz: float = None
    target_value: float = None
    record_iterates: bool = False
    record_reads: bool = False

    def __post_init__(self):
        check_fraction(self.gamma, "gamma")
        check_nonnegative_int(self.max_iterations, "max_iterations")
        check_positive(self.stop_tolerance, "stop_tolerance", allow_zero=True)
        if self.stop_metric not in ("MV", "prox_residual"):
            raise InvalidArgument(f"unknown stop metric {self.stop_metric!r}")
        check_seed(self.seed)
        if self.metrics_stride is not None:
            check_positive_int(self.metrics_stride, "metrics_stride")
        if self.lipschitz is not None:
            check_positive(self.lipschitz, "lipschitz")
        if self.theory_mode and self.surrogate.adaptive:
            raise InvalidArgument("the adaptive tau heuristic is not covered by theory mode")


@dataclass
class Trace:
    """Per-iteration records plus run metadata.

    Metric columns hold ``nan`` between stride points. ``agent`` is 1-based,
    with 0 in the ``k = 0`` row.
    """

    columns: dict = field(default_factory=lambda: {c: [] for c in TRACE_COLUMNS})
    staleness: list = field(default_factory=list)
    iterates: list = None
    reads: list = None
    x: np.ndarray = None
    status: str = "running"
    n_iter: int = 0
    gamma: float = None
    L: float = None
    rho: int = None
    D: int = 0
    B: int = None
    taus: list = None
    safe_stepsize: float = None

    @property
    def converged(self):
        return self.status == "converged"

    def __len__(self):
        return len(self.columns["k"])

    def column(self, name):
        return np.asarray(self.columns[name], dtype=float)

    def append(self, **row):
        for c in TRACE_COLUMNS:
            self.columns[c].append(row.get(c, math.nan))

    def write_csv(self, path, extra=None):
        """Write the trace with 17 significant digits.

        ``extra`` maps additional column names to per-row sequences and is
        appended after the fixed columns.
        """
        extra = extra or {}
        names = list(TRACE_COLUMNS) + list(extra)
        cols = [self.columns[c] for c in TRACE_COLUMNS] + [list(v) for v in extra.values()]
        with open(path, "w", newline="") as fh:
            fh.write(",".join(names) + "\n")
            for row in zip(*cols):
                fh.write(",".join(_fmt(v) for v in row) + "\n")


def _fmt(v):
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % v


class _Runner:
    """State shared by the serial and threaded loops."""

    def __init__(self, problem, config, x0):
        self.problem = problem
        self.cfg = config
        n = problem.n_agents
        p = problem.partition
        g = problem.graph
        x0 = np.zeros(problem.dim) if x0 is None else check_vector(x0, problem.dim, "x0")
        self.spec = config.surrogate
        self.taus = np.array([self.spec.tau_for(i) for i in range(n)])
        self.base_taus = self.taus.copy()
        self.stride = config.metrics_stride or n
        self.D = config.delay.D
        self.rho = g.rho()
        self.L = (config.lipschitz if config.lipschitz is not None
                  else estimate_block_lipschitz(problem))
        self.store = VersionedStateStore(x0, p, self.D)
        self.f_vals = np.array([t.value(problem.neighborhood(x0, j))
                                for j, t in enumerate(problem.smooth_terms)])
        self.g_vals = np.array([gi.value(p.block(x0, i))
                                for i, gi in enumerate(problem.nonsmooth_terms)])
        self.others = [tuple(j for j in g.reverse_sets[i] if j != i) for i in range(n)]
        self.msg_cost = [sum(p.block_sizes[i] + p.block_sizes[j] for j in self.others[i])
                         for i in range(n)]
        self.messages = 0
        self.steps = deque(maxlen=max(self.D, 1))
        self.increase_run = np.zeros(n, dtype=int)
        self.safe = (max_safe_stepsize(float(self.taus.min()), self.L, self.rho, self.D)
                     if self.L > 0 else math.inf)
        self._check_stepsize()
        self.trace = Trace(gamma=config.gamma, L=self.L, rho=self.rho, D=self.D,
                           safe_stepsize=self.safe)
        if config.record_iterates:
            self.trace.iterates = [x0.copy()]
        if config.record_reads:
            self.trace.reads = []
        self.V = self._value()
        mv, pr = self._metrics(0)
        self.trace.append(k=0, agent=0, V=self.V, MV=mv, lyapunov=self.V,
                          prox_residual=pr, messages=0, update_norm=0.0)
        self.trace.staleness.append(0)
        self.done = self._stop(mv, pr) or self._reached_target()

    def _check_stepsize(self):
        gamma = self.cfg.gamma
        if gamma < self.safe:
            return
        msg = (f"gamma={gamma} is not below the safe stepsize {self.safe:.6g} "
               f"(tau={self.taus.min():.6g}, L={self.L:.6g}, rho={self.rho}, D={self.D})")
        if self.cfg.theory_mode:
            raise InvalidArgument(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=4)

    def _value(self):
        return math.fsum(self.f_vals) + math.fsum(self.g_vals)

    def _metrics(self, k, force=False):
        if not force and k % self.stride:
            return math.nan, math.nan
        x = self.store.x
        try:
            mv = merit_MV(self.problem, self.spec, x, self.base_taus)
        except SolverFailure as exc:
            # the merit is diagnostic; an inexact inner solve must not end the run
            logger.warning("merit not available at iteration %d: %s", k, exc)
            mv = math.nan
        return mv, prox_residual(self.problem, x)

    def _stop(self, mv, pr):
        tol = self.cfg.stop_tolerance
        metric = mv if self.cfg.stop_metric == "MV" else pr
        return tol > 0 and not math.isnan(metric) and metric <= tol

    def _reached_target(self):
        t = self.cfg.target_value
        return t is not None and self.V <= t

    def gather(self, k, i, oracle):
        """Delayed inputs of agent ``i`` read from the store."""
        problem = self.problem
        g = problem.graph
        p = problem.partition
        reads = [] if self.trace.reads is not None else None
        blocks = g.neighbor_sets[i]
        dv = oracle.variable_delays(k, i, blocks)
        xn = self.store.read_delayed(blocks, dv)
        if reads is not None:
            reads.append((i, blocks, tuple(int(d) for d in dv), xn.copy()))
        grads = {}
        for j in self.others[i]:
            bj = g.neighbor_sets[j]
            dg = oracle.gradient_delays(k, i, j, bj)
            xj = self.store.read_delayed(bj, dg)
            if reads is not None:
                reads.append((j, bj, tuple(int(d) for d in dg), xj.copy()))
            grads[j] = problem.partial_gradient(j, i, xj)
        anchor = p.block(self.store.x, i).copy()
        return BestResponseInput(i, xn, anchor, grads), reads

    def solve(self, k, inp):
        try:
            return best_response(self.problem, self.spec, inp, tau=self.taus[inp.agent],
                                 check=False)
        except SolverFailure as exc:
            raise SolverFailure(f"iteration {k}, agent {inp.agent + 1}: {exc}",
                                best=exc.best, iterations=exc.iterations) from exc

    def commit(self, k, i, inp, x_hat, reads=None, staleness=0):
        problem = self.problem
        p = problem.partition
        delta = x_hat - inp.anchor
        new = inp.anchor + self.cfg.gamma * delta
        self.store.record_update(k, i, new)
        x = self.store.x
        for j in problem.graph.reverse_sets[i]:
            self.f_vals[j] = problem.smooth_terms[j].value(problem.neighborhood(x, j))
        self.g_vals[i] = problem.nonsmooth_terms[i].value(p.block(x, i))
        V_old, self.V = self.V, self._value()
        if not math.isfinite(self.V):
            raise ContractViolation(f"objective became non-finite at iteration {k + 1}")
        step_sq = float(np.sum((new - inp.anchor) ** 2))
        self.steps.append(step_sq)
        lyap = lyapunov_from_steps(self.V, list(self.steps) if self.D else [], self.L,
                                   self.rho, self.D)
        self.messages += self.msg_cost[i]
        if self.spec.adaptive:
            self._adapt(i, self.V > V_old)
        kk = k + 1
        last = kk >= self.cfg.max_iterations
        mv, pr = self._metrics(kk, force=last)
        self.trace.append(k=kk, agent=i + 1, V=self.V, MV=mv, lyapunov=lyap,
                          prox_residual=pr, messages=self.messages,
                          update_norm=float(np.linalg.norm(delta)))
        self.trace.staleness.append(staleness)
        if self.trace.iterates is not None:
            self.trace.iterates.append(x.copy())
        if self.trace.reads is not None:
            self.trace.reads.append({"k": k, "agent": i, "reads": reads, "input": inp,
                                     "x_hat": np.array(x_hat), "tau": float(self.taus[i])})
        self.done = self._stop(mv, pr) or self._reached_target()
        return self.done or last

    def _adapt(self, i, increased):
        if increased:
            self.taus[i] *= 2.0
            self.increase_run[i] = 0
            return
        self.increase_run[i] += 1
        if self.increase_run[i] >= self.spec.patience:
            self.taus[i] = max(self.spec.tau_min, 0.5 * self.taus[i])
            self.increase_run[i] = 0

    def finish(self):
        tr = self.trace
        if len(tr) > 1 and math.isnan(tr.columns["MV"][-1]):
            mv, pr = self._metrics(0, force=True)
            tr.columns["MV"][-1] = mv
            tr.columns["prox_residual"][-1] = pr
            self.done = self._stop(mv, pr) or self._reached_target()
        tr.x = self.store.current
        tr.n_iter = self.store.k
        tr.taus = self.taus.tolist()
        tr.status = "converged" if self.done else "max_iterations"
        return tr


def step(runner, k, schedule, oracle):
    """One iteration of the serial loop; returns True when the run should stop."""
    i = schedule.next_activation(k)
    inp, reads = runner.gather(k, i, oracle)
    x_hat = runner.solve(k, inp)
    stop = runner.commit(k, i, inp, x_hat, reads)
    oracle.observe(k, i)
    return stop


def run(problem, config, x0=None):
    """Simulate the asynchronous method in a single thread.

    The activation order and delays come from the schedule and delay
    recipes in ``config``, so identical inputs give identical traces.

    Raises
    ------
    SolverFailure
        If a best response fails; the partial trace is attached as ``trace``.
    """
    runner = _Runner(problem, config, x0)
    schedule = config.schedule.build(problem.n_agents)
    oracle = config.delay.build(problem.n_agents)
    runner.trace.B = schedule.bound
    k = 0
    stop = runner.done or config.max_iterations == 0
    try:
        while not stop:
            stop = step(runner, k, schedule, oracle)
            k += 1
    except SolverFailure as exc:
        exc.trace = runner.finish()
        exc.trace.status = "solver_failure"
        raise
    trace = runner.finish()
    logger.info("run finished: status=%s iterations=%d V=%.6g", trace.status,
                trace.n_iter, runner.V)
    return trace


class _ZeroOracle:
    def variable_delays(self, k, i, blocks):
        return np.zeros(len(blocks), dtype=int)

    def gradient_delays(self, k, i, j, blocks):
        return np.zeros(len(blocks), dtype=int)


def run_parallel(problem, config, workers, x0=None, stall_timeout=60.0):
    """Run the method with ``workers`` threads sharing one store.

    Worker ``w`` owns the agents ``w, w + workers, ...`` and cycles through
    them. It snapshots the neighborhood of the agent at the current global
    iteration, solves without holding the lock, and commits under the lock.
    If more than ``D`` iterations were committed meanwhile, the worker
    re-reads and re-solves under the lock so no committed update uses
    information older than ``D`` iterations. The global order is the order
    of commits. Metrics are evaluated under the lock on a consistent
    iterate.

    Raises
    ------
    ContractViolation
        If no worker commits for ``stall_timeout`` seconds.
    """
    workers = check_positive_int(workers, "workers")
    runner = _Runner(problem, config, x0)
    n = problem.n_agents
    owned = [list(range(w, n, workers)) for w in range(min(workers, n))]
    runner.trace.B = None
    lock = threading.Lock()
    stop = threading.Event()
    if runner.done or config.max_iterations == 0:
        stop.set()
    errors = []
    zero = _ZeroOracle()
    progress = [time.monotonic()]

    def loop(agents):
        pos = 0
        try:
            while not stop.is_set():
                i = agents[pos % len(agents)]
                pos += 1
                with lock:
                    if stop.is_set():
                        return
                    k_read = runner.store.k
                    inp, reads = runner.gather(k_read, i, zero)
                x_hat = runner.solve(k_read, inp)
                with lock:
                    if stop.is_set():
                        return
                    k = runner.store.k
                    stale = k - k_read
                    if stale > runner.D:
                        inp, reads = runner.gather(k, i, zero)
                        x_hat = runner.solve(k, inp)
                        stale = 0
                    # the own block is written only by this worker, so the anchor is current
                    if runner.commit(k, i, inp, x_hat, reads, staleness=stale):
                        stop.set()
                    progress[0] = time.monotonic()
        except Exception as exc:  # surfaced in the calling thread
            errors.append(exc)
            stop.set()

    threads = [threading.Thread(target=loop, args=(a,), daemon=True) for a in owned]
    for t in threads:
        t.start()
    while any(t.is_alive() for t in threads):
        for t in threads:
            t.join(timeout=0.05)
        if time.monotonic() - progress[0] > stall_timeout and not stop.is_set():
            stop.set()
            raise ContractViolation(
                f"no commit for {stall_timeout}s at iteration {runner.store.k}; "
                f"workers alive: {sum(t.is_alive() for t in threads)}")
    if errors:
        exc = errors[0]
        if isinstance(exc, SolverFailure):
            exc.trace = runner.finish()
            exc.trace.status = "solver_failure"
        raise exc
    return runner.finish()
