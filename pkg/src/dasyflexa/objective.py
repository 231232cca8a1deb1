"""Partitioned composite objective ``V(x) = sum_i f_i(x_{N_i}) + sum_i g_i(x_i)``.

Each agent owns one smooth term ``f_i`` (a function of its stacked
neighborhood) and one convex nonsmooth term ``g_i`` of its own block.
Feasible sets are folded into the nonsmooth term: its prox already
projects, so an indicator (:class:`BoxIndicator`) is how a constrained
block is expressed.
"""

import numpy as np

from ._validation import check_positive, check_positive_int, check_seed
from .exceptions import InvalidArgument
from .partition import neighborhood_indices


class SmoothTerm:
    """Base class for a smooth local function ``f_i(x_{N_i})``.

    Parameters
    ----------
    owner : int
        Agent owning the term.
    neighbors : sequence of int
        Ascending block ids the term depends on; must contain ``owner``.
    sizes : sequence of int
        Sizes of those blocks, in the same order.
    """

    #: known global Lipschitz constant of the gradient, if any
    lipschitz = None

    def __init__(self, owner, neighbors, sizes):
        self.owner = int(owner)
        self.neighbors = tuple(int(j) for j in neighbors)
        self.sizes = tuple(int(s) for s in sizes)
        if self.owner not in self.neighbors:
            raise InvalidArgument(f"term of agent {owner} must depend on its own block")
        if list(self.neighbors) != sorted(set(self.neighbors)):
            raise InvalidArgument("neighbors must be strictly ascending")
        if len(self.sizes) != len(self.neighbors):
            raise InvalidArgument("one size per neighbor block is required")
        starts = np.concatenate(([0], np.cumsum(self.sizes)))
        self._slices = {j: slice(int(starts[p]), int(starts[p + 1]))
                        for p, j in enumerate(self.neighbors)}
        self.dim = int(starts[-1])

    def local_slice(self, block):
        """Slice of ``x_{N_i}`` holding ``block``."""
        try:
            return self._slices[block]
        except KeyError:
            raise InvalidArgument(
                f"block {block} is not in the neighborhood of agent {self.owner}") from None

    def value(self, x_nbhd):
        raise NotImplementedError

    def gradient(self, x_nbhd):
        """Gradient with respect to the whole stacked neighborhood."""
        raise NotImplementedError

    def partial_gradient(self, block, x_nbhd):
        return self.gradient(x_nbhd)[self.local_slice(block)]

    @property
    def has_hessian(self):
        return False

    def hessian(self, x_nbhd):
        raise NotImplementedError(f"{type(self).__name__} exposes no Hessian")


class CallableSmoothTerm(SmoothTerm):
    """Smooth term defined by plain callables."""

    def __init__(self, owner, neighbors, sizes, value_fn, grad_fn,
                 hessian_fn=None, lipschitz=None):
        super().__init__(owner, neighbors, sizes)
        self._value = value_fn
        self._grad = grad_fn
        self._hess = hessian_fn
        self.lipschitz = lipschitz

    def value(self, x_nbhd):
        return float(self._value(x_nbhd))

    def gradient(self, x_nbhd):
        return np.asarray(self._grad(x_nbhd), dtype=float)

    @property
    def has_hessian(self):
        return self._hess is not None

    def hessian(self, x_nbhd):
        if self._hess is None:
            return super().hessian(x_nbhd)
        return np.asarray(self._hess(x_nbhd), dtype=float)


class LeastSquaresTerm(SmoothTerm):
    """``weight * ||M x_{N_i} - v||^2``.

    The LASSO local terms are instances of this class with ``weight=1``.
    """

    def __init__(self, owner, neighbors, sizes, matrix, target, weight=1.0):
        super().__init__(owner, neighbors, sizes)
        self.matrix = np.asarray(matrix, dtype=float)
        self.target = np.asarray(target, dtype=float)
        self.weight = float(weight)
        if self.matrix.shape != (self.target.shape[0], self.dim):
            raise InvalidArgument(
                f"matrix must be {self.target.shape[0]}x{self.dim}, got {self.matrix.shape}")
        self._col_blocks = {j: np.ascontiguousarray(self.matrix[:, s].T)
                            for j, s in self._slices.items()}
        self.lipschitz = 2.0 * self.weight * _sym_max_eig(self.matrix.T @ self.matrix)

    def residual(self, x_nbhd):
        return self.matrix @ x_nbhd - self.target

    def value(self, x_nbhd):
        r = self.residual(x_nbhd)
        return self.weight * float(r @ r)

    def gradient(self, x_nbhd):
        return (2.0 * self.weight) * (self.matrix.T @ self.residual(x_nbhd))

    def partial_gradient(self, block, x_nbhd):
        self.local_slice(block)
        return (2.0 * self.weight) * (self._col_blocks[block] @ self.residual(x_nbhd))

    @property
    def has_hessian(self):
        return True

    def hessian(self, x_nbhd=None):
        return 2.0 * self.weight * (self.matrix.T @ self.matrix)


class NonsmoothTerm:
    """Base class for a convex ``g_i`` with a computable prox."""

    def value(self, x):
        raise NotImplementedError

    def prox(self, alpha, z):
        """``argmin_y alpha * g(y) + 0.5 * ||y - z||^2``."""
        raise NotImplementedError


class ZeroTerm(NonsmoothTerm):
    def value(self, x):
        return 0.0

    def prox(self, alpha, z):
        return np.array(z, dtype=float, copy=True)


class L1Norm(NonsmoothTerm):
    """``lam * ||x||_1``; prox is soft thresholding."""

    def __init__(self, lam=1.0):
        self.lam = check_positive(lam, "lam", allow_zero=True)

    def value(self, x):
        return self.lam * float(np.abs(x).sum())

    def prox(self, alpha, z):
        return soft_threshold(z, alpha * self.lam)


class SquaredNorm(NonsmoothTerm):
    """``(lam / 2) * ||x||^2``; prox is ridge shrinkage."""

    def __init__(self, lam=1.0):
        self.lam = check_positive(lam, "lam", allow_zero=True)

    def value(self, x):
        return 0.5 * self.lam * float(x @ x)

    def prox(self, alpha, z):
        return np.asarray(z, dtype=float) / (1.0 + alpha * self.lam)


class BoxIndicator(NonsmoothTerm):
    """Indicator of ``{lower <= x <= upper}``; prox is the projection."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise InvalidArgument("box lower bound exceeds upper bound")

    def value(self, x):
        inside = np.all(x >= self.lower - 1e-12) and np.all(x <= self.upper + 1e-12)
        return 0.0 if inside else np.inf

    def prox(self, alpha, z):
        return np.clip(z, self.lower, self.upper)


def soft_threshold(z, t):
    z = np.asarray(z, dtype=float)
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


class PartitionedProblem:
    """Composite objective split across agents.

    Parameters
    ----------
    partition : BlockPartition
    graph : DependencyGraph
        Must agree with the ``neighbors`` of every smooth term.
    smooth_terms, nonsmooth_terms : list
        One of each per agent, in agent order.
    lipschitz : float, optional
        Known Lipschitz constant used by the stepsize check. Estimated by
        :func:`estimate_block_lipschitz` when omitted.
    """

    def __init__(self, partition, graph, smooth_terms, nonsmooth_terms, lipschitz=None):
        n = partition.n_blocks
        if graph.n_agents != n:
            raise InvalidArgument("graph and partition disagree on the number of agents")
        if len(smooth_terms) != n or len(nonsmooth_terms) != n:
            raise InvalidArgument("exactly one smooth and one nonsmooth term per agent")
        for i, term in enumerate(smooth_terms):
            if term.owner != i:
                raise InvalidArgument(f"smooth term {i} is owned by agent {term.owner}")
            if term.neighbors != graph.neighbor_sets[i]:
                raise InvalidArgument(f"smooth term {i} neighbors do not match the graph")
            if term.sizes != tuple(partition.block_sizes[j] for j in term.neighbors):
                raise InvalidArgument(f"smooth term {i} block sizes do not match the partition")
        self.partition = partition
        self.graph = graph
        self.smooth_terms = list(smooth_terms)
        self.nonsmooth_terms = list(nonsmooth_terms)
        self.lipschitz = lipschitz
        self._nbhd_idx = [neighborhood_indices(i, partition, graph) for i in range(n)]

    @property
    def n_agents(self):
        return self.partition.n_blocks

    @property
    def dim(self):
        return self.partition.total_dim

    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise InvalidArgument(f"x must have length {self.dim}, got shape {x.shape}")
        return x

    def neighborhood(self, x, i):
        return x[self._nbhd_idx[i]]

    def neighborhood_indices(self, i):
        return self._nbhd_idx[i]

    def smooth_value(self, x):
        x = self._check(x)
        return sum(t.value(x[idx]) for t, idx in zip(self.smooth_terms, self._nbhd_idx))

    def nonsmooth_value(self, x):
        x = self._check(x)
        p = self.partition
        return sum(g.value(p.block(x, i)) for i, g in enumerate(self.nonsmooth_terms))

    def value(self, x):
        return self.smooth_value(x) + self.nonsmooth_value(x)

    def gradient(self, x):
        """Full gradient of the smooth part ``F``."""
        x = self._check(x)
        grad = np.zeros(self.dim)
        for t, idx in zip(self.smooth_terms, self._nbhd_idx):
            grad[idx] += t.gradient(x[idx])
        return grad

    def partial_gradient(self, j, i, x_nbhd):
        """``grad_{x_i} f_j`` at the stacked neighborhood ``x_{N_j}``."""
        if i not in self.graph.neighbor_sets[j]:
            raise InvalidArgument(f"block {i} is not in N_{j}")
        return self.smooth_terms[j].partial_gradient(i, x_nbhd)

    def prox(self, i, alpha, z):
        if not alpha > 0:
            raise InvalidArgument(f"prox parameter must be > 0, got {alpha}")
        return self.nonsmooth_terms[i].prox(alpha, z)

    @property
    def has_hessian(self):
        return all(t.has_hessian for t in self.smooth_terms)

    @property
    def is_quadratic(self):
        return all(isinstance(t, LeastSquaresTerm) for t in self.smooth_terms)

    def hessian(self, x):
        x = self._check(x)
        hess = np.zeros((self.dim, self.dim))
        for t, idx in zip(self.smooth_terms, self._nbhd_idx):
            hess[np.ix_(idx, idx)] += t.hessian(x[idx])
        return hess


def eval_objective(problem, x):
    """Value of ``V`` at ``x``."""
    return problem.value(x)


def partial_gradient(problem, j, i, x_nbhd):
    return problem.partial_gradient(j, i, x_nbhd)


def prox_nonsmooth(problem, i, alpha, z):
    return problem.prox(i, alpha, z)


def _sym_max_eig(mat):
    if mat.size == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(mat))))


def estimate_block_lipschitz(problem, samples=200, seed=0, center=None, radius=1.0,
                             method="auto"):
    """Estimate the constant ``L`` used by the stepsize bound.

    ``L`` bounds the Lipschitz constants of the full gradient of ``F`` and of
    every local gradient ``grad f_j`` on its neighborhood. For quadratic
    problems (``method="exact"`` or ``"auto"``) it is the largest Hessian
    eigenvalue magnitude. Otherwise it is the largest observed ratio
    ``||grad(x) - grad(y)|| / ||x - y||`` over seeded random pairs drawn from
    the box ``center +- radius``; this is a lower bound on the true constant.
    """
    samples = check_positive_int(samples, "samples", minimum=2)
    seed = check_seed(seed)
    if problem.lipschitz is not None and method == "auto":
        return float(problem.lipschitz)
    if method == "exact" or (method == "auto" and problem.is_quadratic):
        x0 = np.zeros(problem.dim) if center is None else np.asarray(center, float)
        consts = [_sym_max_eig(problem.hessian(x0))]
        for t, idx in zip(problem.smooth_terms, problem._nbhd_idx):
            consts.append(_sym_max_eig(t.hessian(x0[idx])))
        return max(consts)
    rng = np.random.default_rng(seed)
    c = np.zeros(problem.dim) if center is None else np.asarray(center, float)
    best = 0.0
    for _ in range(samples):
        x = c + radius * rng.uniform(-1.0, 1.0, problem.dim)
        y = c + radius * rng.uniform(-1.0, 1.0, problem.dim)
        dx = np.linalg.norm(x - y)
        if dx == 0:
            continue
        best = max(best, np.linalg.norm(problem.gradient(x) - problem.gradient(y)) / dx)
        for t, idx in zip(problem.smooth_terms, problem._nbhd_idx):
            dl = np.linalg.norm(x[idx] - y[idx])
            if dl > 0:
                best = max(best, np.linalg.norm(t.gradient(x[idx]) - t.gradient(y[idx])) / dl)
    return float(best)
