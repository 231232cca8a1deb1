import numpy as np
import pytest

from dasyflexa.exceptions import InvalidArgument
from dasyflexa.objective import (BoxIndicator, CallableSmoothTerm, L1Norm, LeastSquaresTerm,
                                 PartitionedProblem, SquaredNorm, ZeroTerm,
                                 estimate_block_lipschitz, eval_objective, partial_gradient,
                                 prox_nonsmooth, soft_threshold)
from dasyflexa.partition import make_dependency_graph, make_partition

from conftest import ridge_chain, scalar_quadratic


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        g[k] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def test_value_is_sum_of_terms(chain):
    rng = np.random.default_rng(1)
    x = rng.standard_normal(chain.dim)
    total = sum(t.value(chain.neighborhood(x, i)) for i, t in enumerate(chain.smooth_terms))
    total += sum(0.5 * 0.1 * np.sum(chain.partition.block(x, i) ** 2) for i in range(3))
    assert eval_objective(chain, x) == pytest.approx(total, rel=1e-14)


def test_full_gradient_matches_fd(chain):
    x = np.random.default_rng(2).standard_normal(chain.dim)
    assert np.allclose(chain.gradient(x), fd_gradient(chain.smooth_value, x), atol=1e-6)


def test_partial_gradient_outside_neighborhood(chain):
    x = np.zeros(chain.dim)
    with pytest.raises(InvalidArgument):
        partial_gradient(chain, 0, 2, chain.neighborhood(x, 0))


def test_partial_gradient_slices_full_term_gradient(chain):
    x = np.random.default_rng(3).standard_normal(chain.dim)
    t = chain.smooth_terms[1]
    xn = chain.neighborhood(x, 1)
    for j in t.neighbors:
        assert np.allclose(partial_gradient(chain, 1, j, xn), t.gradient(xn)[t.local_slice(j)])


def test_prox_rejects_nonpositive_alpha(chain):
    with pytest.raises(InvalidArgument):
        prox_nonsmooth(chain, 0, 0.0, np.zeros(2))


def test_soft_threshold_examples():
    assert soft_threshold(np.array([3.0, -0.5, -2.0]), 1.0).tolist() == [2.0, -0.0, -1.0]


@pytest.mark.parametrize("term, z, alpha", [
    (L1Norm(0.7), np.array([1.5, -0.2, 0.3]), 0.9),
    (SquaredNorm(2.0), np.array([1.0, -3.0]), 0.5),
    (BoxIndicator(-1.0, 0.5), np.array([2.0, -3.0, 0.1]), 1.0),
])
def test_prox_minimizes_on_grid(term, z, alpha):
    # coordinatewise separable: brute force each coordinate on a fine grid
    p = term.prox(alpha, z)
    grid = np.linspace(-4, 4, 80001)
    for k in range(z.size):
        if isinstance(term, BoxIndicator):
            vals = np.where((grid >= -1.0) & (grid <= 0.5), 0.0, np.inf)
        elif isinstance(term, L1Norm):
            vals = term.lam * np.abs(grid)
        else:
            vals = 0.5 * term.lam * grid ** 2
        obj = vals + (grid - z[k]) ** 2 / (2 * alpha)
        assert p[k] == pytest.approx(grid[np.argmin(obj)], abs=2e-4)


def test_lipschitz_of_half_squared_norm_is_one():
    assert estimate_block_lipschitz(scalar_quadratic()) == pytest.approx(1.0, abs=1e-15)


def test_lipschitz_sampled_is_lower_bound():
    prob = ridge_chain(seed=5)
    exact = estimate_block_lipschitz(prob, method="exact")
    sampled = estimate_block_lipschitz(prob, method="sampled", samples=200, seed=1)
    assert sampled <= exact * (1 + 1e-12)
    assert sampled > 0.3 * exact


def test_problem_rejects_mismatched_terms():
    p = make_partition([1, 1])
    g = make_dependency_graph(2, [(0, 1)])
    t0 = LeastSquaresTerm(0, (0,), (1,), np.eye(1), np.zeros(1))
    t1 = LeastSquaresTerm(1, (1,), (1,), np.eye(1), np.zeros(1))
    with pytest.raises(InvalidArgument):
        PartitionedProblem(p, g, [t0, t1], [ZeroTerm(), ZeroTerm()])


def test_callable_term():
    t = CallableSmoothTerm(0, (0,), (2,), lambda x: float(x @ x), lambda x: 2 * x)
    x = np.array([1.0, -2.0])
    assert t.value(x) == 5.0
    assert t.partial_gradient(0, x).tolist() == [2.0, -4.0]
    assert not t.has_hessian
