import sys
import warnings

import numpy as np
import pytest

from dasyflexa.objective import (L1Norm, LeastSquaresTerm, PartitionedProblem, SquaredNorm,
                                 ZeroTerm)
from dasyflexa.partition import make_dependency_graph, make_partition


def ridge_chain(n_agents=3, size=2, seed=0, lam=0.1):
    """Chain-coupled least squares with a squared-norm regularizer.

    Agent ``i`` depends on blocks ``i - 1, i, i + 1``. The problem is
    strongly convex, so its minimizer is the unique stationary point.
    """
    rng = np.random.default_rng(seed)
    p = make_partition([size] * n_agents)
    edges = [(i, j) for i in range(n_agents) for j in (i - 1, i + 1) if 0 <= j < n_agents]
    g = make_dependency_graph(n_agents, edges)
    terms = []
    for i in range(n_agents):
        nb = g.neighbor_sets[i]
        dim = size * len(nb)
        M = rng.standard_normal((dim + 2, dim))
        v = rng.standard_normal(dim + 2)
        terms.append(LeastSquaresTerm(i, nb, [size] * len(nb), M, v))
    return PartitionedProblem(p, g, terms, [SquaredNorm(lam) for _ in range(n_agents)])


def dense_ridge_solution(problem, lam):
    """Minimizer of sum ||M_i x_N_i - v_i||^2 + lam/2 ||x||^2 by a linear solve."""
    n = problem.dim
    H = np.zeros((n, n))
    rhs = np.zeros(n)
    for t, idx in zip(problem.smooth_terms, [problem.neighborhood_indices(i)
                                             for i in range(problem.n_agents)]):
        H[np.ix_(idx, idx)] += 2 * t.matrix.T @ t.matrix
        rhs[idx] += 2 * t.matrix.T @ t.target
    return np.linalg.solve(H + lam * np.eye(n), rhs)


def scalar_quadratic(center=1.0):
    """Single agent, f(x) = 1/2 (x - center)^2 written as a least-squares term."""
    p = make_partition([1])
    g = make_dependency_graph(1, [])
    term = LeastSquaresTerm(0, (0,), (1,), np.array([[np.sqrt(0.5)]]),
                            np.array([np.sqrt(0.5) * center]))
    return PartitionedProblem(p, g, [term], [ZeroTerm()])


@pytest.fixture
def chain():
    return ridge_chain()


@pytest.fixture(autouse=True)
def _quiet_stepsize_warnings():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="gamma=.*safe stepsize", category=RuntimeWarning)
        yield


__all__ = ["L1Norm", "dense_ridge_solution", "ridge_chain", "scalar_quadratic"]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        terminalreporter.write_line(results[n])
