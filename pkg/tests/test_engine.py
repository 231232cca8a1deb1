import csv
import warnings

import numpy as np
import pytest

from dasyflexa.asynchrony import DelaySpec, ScheduleSpec
from dasyflexa.engine import TRACE_COLUMNS, EngineConfig, run, run_parallel
from dasyflexa.exceptions import InvalidArgument, SolverFailure
from dasyflexa.objective import L1Norm, PartitionedProblem, estimate_block_lipschitz
from dasyflexa.surrogate import SurrogateSpec

from conftest import dense_ridge_solution, ridge_chain, scalar_quadratic


def lip(prob):
    return estimate_block_lipschitz(prob, method="exact")


def cfg(**kw):
    base = dict(gamma=0.9, max_iterations=200, stop_tolerance=0.0,
                surrogate=SurrogateSpec(tau=1.0))
    base.update(kw)
    return EngineConfig(**base)


def test_scalar_first_step():
    prob = scalar_quadratic(center=1.0)
    t = run(prob, cfg(gamma=1.0, max_iterations=1), x0=np.zeros(1))
    assert t.x[0] == pytest.approx(1.0)
    t = run(prob, cfg(gamma=0.5, max_iterations=1), x0=np.zeros(1))
    assert t.x[0] == pytest.approx(0.5)
    assert list(t.column("k")) == [0, 1]
    assert list(t.column("agent")) == [0, 1]


def test_single_agent_quadratic_closed_form():
    prob = scalar_quadratic(center=3.0)
    t = run(prob, cfg(gamma=0.5, max_iterations=100, surrogate=SurrogateSpec(tau=2.0)),
            x0=np.zeros(1))
    assert abs(t.x[0] - 3.0) <= 1e-8


def test_zero_iterations_gives_initial_row():
    prob = ridge_chain()
    t = run(prob, cfg(max_iterations=0))
    assert len(t) == 1
    assert t.n_iter == 0
    assert t.column("k")[0] == 0
    assert np.array_equal(t.x, np.zeros(prob.dim))


def test_fixed_point_at_stationary_point():
    prob = ridge_chain(seed=4, lam=0.3)
    x_star = dense_ridge_solution(prob, 0.3)
    t = run(prob, cfg(max_iterations=30, delay=DelaySpec("uniform", 3, 1),
                      surrogate=SurrogateSpec(tau=2 * lip(prob)),
                      schedule=ScheduleSpec("shuffled-rounds", 2), record_iterates=True),
            x0=x_star)
    for x in t.iterates:
        assert np.linalg.norm(x - x_star) <= 1e-12


@pytest.mark.parametrize("delay", [DelaySpec("zero"), DelaySpec("fixed", 2),
                                   DelaySpec("uniform", 3, 0), DelaySpec("clock-phase", 3)])
def test_converges_to_ridge_solution(delay):
    prob = ridge_chain(seed=5, lam=0.5)
    x_star = dense_ridge_solution(prob, 0.5)
    L = lip(prob)
    t = run(prob, cfg(gamma=0.5, max_iterations=20_000, stop_tolerance=1e-24,
                      surrogate=SurrogateSpec(tau=2 * L), delay=delay,
                      schedule=ScheduleSpec("clock-phase", 1)))
    assert t.status == "converged"
    assert np.linalg.norm(t.x - x_star) <= 1e-8


def test_one_block_changes_per_iteration():
    prob = ridge_chain(n_agents=4, seed=1)
    t = run(prob, cfg(max_iterations=40, delay=DelaySpec("uniform", 2, 3),
                      schedule=ScheduleSpec("shuffled-rounds", 1), record_iterates=True))
    p = prob.partition
    agents = t.column("agent")
    for k in range(1, len(t.iterates)):
        changed = [i for i in range(4)
                   if not np.array_equal(p.block(t.iterates[k], i), p.block(t.iterates[k - 1], i))]
        assert set(changed) <= {int(agents[k]) - 1}


def test_traces_are_deterministic(tmp_path):
    prob = ridge_chain(seed=2)
    c = cfg(max_iterations=60, delay=DelaySpec("uniform", 2, 7),
            schedule=ScheduleSpec("clock-phase", 7))
    a, b = run(prob, c), run(prob, c)
    a.write_csv(tmp_path / "a.csv")
    b.write_csv(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    with open(tmp_path / "a.csv") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == TRACE_COLUMNS


def test_metric_stride_and_monotone_messages():
    prob = ridge_chain(n_agents=3)
    t = run(prob, cfg(max_iterations=10))
    mv = t.column("MV")
    assert not np.isnan(mv[0]) and not np.isnan(mv[3]) and np.isnan(mv[1])
    assert not np.isnan(mv[-1])
    assert np.all(np.diff(t.column("messages")) > 0)


def test_theory_mode_rejects_large_stepsize():
    prob = ridge_chain()
    bad = cfg(gamma=1.0, theory_mode=True, surrogate=SurrogateSpec(tau=1e-3))
    with pytest.raises(InvalidArgument):
        run(prob, bad)
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        run(prob, cfg(gamma=1.0, max_iterations=1, surrogate=SurrogateSpec(tau=1e-3)))
    assert any("safe stepsize" in str(w.message) for w in rec)


def test_solver_failure_attaches_trace():
    base = ridge_chain(seed=1)
    prob = PartitionedProblem(base.partition, base.graph, base.smooth_terms,
                              [L1Norm(0.1) for _ in range(3)])
    spec = SurrogateSpec(kind="second-order", tau=0.01, tol=1e-15, max_inner_iters=1)
    with pytest.raises(SolverFailure) as err:
        run(prob, cfg(surrogate=spec), x0=np.ones(prob.dim))
    assert err.value.trace.status == "solver_failure"
    assert len(err.value.trace) >= 1


def test_invalid_config():
    with pytest.raises(InvalidArgument):
        EngineConfig(gamma=0.0)
    with pytest.raises(InvalidArgument):
        EngineConfig(gamma=1.5)
    with pytest.raises(InvalidArgument):
        EngineConfig(stop_metric="gap")
    with pytest.raises(InvalidArgument):
        run(ridge_chain(), cfg(), x0=np.zeros(2))


def test_target_value_stop():
    prob = ridge_chain(seed=5, lam=0.5)
    x_star = dense_ridge_solution(prob, 0.5)
    v_star = prob.value(x_star)
    t = run(prob, cfg(gamma=0.5, max_iterations=20_000, surrogate=SurrogateSpec(tau=lip(prob)),
                      target_value=v_star * (1 + 1e-4)))
    assert t.status == "converged"
    assert t.column("V")[-1] <= v_star * (1 + 1e-4)


@pytest.mark.parametrize("workers", [1, 4])
def test_parallel_matches_solution(workers):
    prob = ridge_chain(n_agents=4, seed=6, lam=0.5)
    x_star = dense_ridge_solution(prob, 0.5)
    t = run_parallel(prob, cfg(gamma=0.5, max_iterations=50_000, stop_tolerance=1e-20,
                               surrogate=SurrogateSpec(tau=2 * lip(prob)),
                               delay=DelaySpec("fixed", 3)), workers)
    assert t.status == "converged"
    assert np.linalg.norm(t.x - x_star) <= 1e-7
    assert max(t.staleness) <= 3
