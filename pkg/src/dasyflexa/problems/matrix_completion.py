"""Distributed matrix completion with a rank-``r`` factorization ``Z ~ X^T Y``.

``X`` is ``r x M`` and ``Y`` is ``r x Ncols``. The first ``ceil(N / 2)``
agents own contiguous ranges of columns of ``X``, the others contiguous
ranges of columns of ``Y``. Every observed entry ``z_mn`` goes to the owner
of ``x_m`` or of ``y_n``, chosen at random. The local function of agent
``i`` is

    f_i = 1/2 sum_{(m, n) in Omega_i} (x_m^T y_n - z_mn)^2

and ``g_i`` is ``lam / 2 ||x_m||^2`` (or ``xi / 2 ||y_n||^2``) summed over
the owned columns. Each ``f_i`` is convex in the own block because an
agent never owns both factors of one of its samples.
"""

from dataclasses import dataclass

import numpy as np

from .._validation import check_fraction, check_positive, check_positive_int, check_seed
from ..exceptions import InvalidArgument
from ..objective import PartitionedProblem, SmoothTerm, SquaredNorm
from ..partition import make_dependency_graph, make_partition
from ..surrogate import mc_best_response


@dataclass
class MatrixCompletionInstance:
    """Observed entries and their distribution across agents.

    Attributes
    ----------
    rows, cols : ndarray
        Indices ``m`` and ``n`` of the observed entries.
    values : ndarray
        Observed ``z_mn``.
    owner : ndarray
        Agent holding each sample.
    x_ranges, y_ranges : list of (start, stop)
        Column ranges of ``X`` and ``Y`` per agent; agents ``0..len(x_ranges)-1``
        own ``X`` columns and the remaining ones own ``Y`` columns.
    """

    M: int
    Ncols: int
    r: int
    rows: np.ndarray
    cols: np.ndarray
    values: np.ndarray
    owner: np.ndarray
    x_ranges: list
    y_ranges: list
    lam: float = 1.0
    xi: float = 1.0

    @property
    def n_agents(self):
        return len(self.x_ranges) + len(self.y_ranges)

    @property
    def n_x_agents(self):
        return len(self.x_ranges)

    def column_owner(self, side, index):
        """Agent owning column ``index`` of ``X`` (``side="x"``) or ``Y``."""
        ranges = self.x_ranges if side == "x" else self.y_ranges
        starts = np.array([a for a, _ in ranges])
        pos = np.searchsorted(starts, index, side="right") - 1
        return pos if side == "x" else pos + self.n_x_agents

    def block_sizes(self):
        return [self.r * (b - a) for a, b in self.x_ranges + self.y_ranges]

    def block_range(self, i):
        nx = self.n_x_agents
        return self.x_ranges[i] if i < nx else self.y_ranges[i - nx]

    def neighbor_blocks(self, i):
        mine = self.owner == i
        if i < self.n_x_agents:
            partners = self.column_owner("y", self.cols[mine])
        else:
            partners = self.column_owner("x", self.rows[mine])
        return tuple(sorted({int(i)} | {int(j) for j in np.atleast_1d(partners)}))

    def split(self, x):
        """Matrices ``X`` (r x M) and ``Y`` (r x Ncols) from the stacked vector."""
        x = np.asarray(x, dtype=float)
        nx = self.r * self.M
        return x[:nx].reshape(self.M, self.r).T, x[nx:].reshape(self.Ncols, self.r).T

    def stack(self, X, Y):
        return np.concatenate([np.asarray(X).T.ravel(), np.asarray(Y).T.ravel()])

    def value(self, x):
        """Monolithic objective."""
        X, Y = self.split(x)
        e = np.einsum("rs,rs->s", X[:, self.rows], Y[:, self.cols]) - self.values
        return float(0.5 * e @ e + 0.5 * self.lam * np.sum(X * X) + 0.5 * self.xi * np.sum(Y * Y))

    def completion(self, x):
        X, Y = self.split(x)
        return X.T @ Y

    def initial_point(self, seed, scale=1.0):
        """Seeded standard normal start (the origin is a stationary point)."""
        rng = np.random.default_rng(check_seed(seed))
        return scale * rng.standard_normal(self.r * (self.M + self.Ncols))

    def to_problem(self, lipschitz=None):
        n = self.n_agents
        p = make_partition(self.block_sizes())
        nbrs = [self.neighbor_blocks(i) for i in range(n)]
        graph = make_dependency_graph(n, [(i, j) for i, s in enumerate(nbrs) for j in s])
        smooth, nonsmooth = [], []
        for i in range(n):
            f, g = mc_local_terms(self, i, nbrs[i])
            smooth.append(f)
            nonsmooth.append(g)
        return PartitionedProblem(p, graph, smooth, nonsmooth, lipschitz=lipschitz)


class MatrixCompletionTerm(SmoothTerm):
    """``1/2 sum_s (u_{a_s}^T v_s - z_s)^2`` over the samples of one agent.

    ``u`` are the owned columns and ``v_s`` the partner column of sample
    ``s``, which lives in another agent's block.
    """

    def __init__(self, owner, neighbors, sizes, r, own_cols, partner_blocks,
                 partner_cols, values):
        super().__init__(owner, neighbors, sizes)
        self.r = int(r)
        self.own_cols = np.asarray(own_cols, dtype=int)
        self.values = np.asarray(values, dtype=float)
        self.n_own = sizes[neighbors.index(owner)] // self.r
        starts = np.array([self.local_slice(j).start for j in partner_blocks], dtype=int)
        base = starts + self.r * np.asarray(partner_cols, dtype=int)
        self._partner_idx = base[:, None] + np.arange(self.r)[None, :]
        self._own_sl = self.local_slice(owner)

    def _parts(self, x_nbhd):
        own = x_nbhd[self._own_sl].reshape(self.n_own, self.r)
        P = x_nbhd[self._partner_idx] if self.values.size else np.zeros((0, self.r))
        U = own[self.own_cols]
        return own, U, P

    def value(self, x_nbhd):
        if not self.values.size:
            return 0.0
        _, U, P = self._parts(x_nbhd)
        e = np.einsum("sr,sr->s", U, P) - self.values
        return float(0.5 * e @ e)

    def gradient(self, x_nbhd):
        grad = np.zeros(self.dim)
        if not self.values.size:
            return grad
        _, U, P = self._parts(x_nbhd)
        e = np.einsum("sr,sr->s", U, P) - self.values
        g_own = np.zeros((self.n_own, self.r))
        np.add.at(g_own, self.own_cols, e[:, None] * P)
        grad[self._own_sl] = g_own.ravel()
        np.add.at(grad, self._partner_idx, e[:, None] * U)
        return grad

    @property
    def has_hessian(self):
        return True

    def hessian(self, x_nbhd):
        H = np.zeros((self.dim, self.dim))
        if not self.values.size:
            return H
        _, U, P = self._parts(x_nbhd)
        e = np.einsum("sr,sr->s", U, P) - self.values
        start = self._own_sl.start
        eye = np.eye(self.r)
        for s in range(self.values.size):
            iu = start + self.r * self.own_cols[s] + np.arange(self.r)
            iv = self._partner_idx[s]
            H[np.ix_(iu, iu)] += np.outer(P[s], P[s])
            H[np.ix_(iv, iv)] += np.outer(U[s], U[s])
            cross = np.outer(P[s], U[s]) + e[s] * eye
            H[np.ix_(iu, iv)] += cross
            H[np.ix_(iv, iu)] += cross.T
        return H

    def partial_solve(self, x_nbhd, tau, linear, nonsmooth):
        """Exact minimizer of the partial-convex subproblem, column by column."""
        lam = getattr(nonsmooth, "lam", None)
        if not isinstance(nonsmooth, SquaredNorm):
            raise InvalidArgument("the closed-form solve needs a squared-norm regularizer")
        own, _, P = self._parts(x_nbhd)
        g = np.asarray(linear, dtype=float).reshape(self.n_own, self.r).T
        sol = mc_best_response(own.T, self.own_cols, P, self.values, g, tau, lam)
        return sol.T.ravel()


def mc_local_terms(instance, i, neighbors=None):
    """Smooth and nonsmooth terms of agent ``i``."""
    inst = instance
    nbrs = inst.neighbor_blocks(i) if neighbors is None else neighbors
    sizes = inst.block_sizes()
    mine = np.flatnonzero(inst.owner == i)
    start, _ = inst.block_range(i)
    if i < inst.n_x_agents:
        own = inst.rows[mine] - start
        other = inst.cols[mine]
        pb = inst.column_owner("y", other)
        pstart = np.array([inst.block_range(j)[0] for j in np.atleast_1d(pb)], dtype=int)
        reg = inst.lam
    else:
        own = inst.cols[mine] - start
        other = inst.rows[mine]
        pb = inst.column_owner("x", other)
        pstart = np.array([inst.block_range(j)[0] for j in np.atleast_1d(pb)], dtype=int)
        reg = inst.xi
    pb = np.atleast_1d(pb)
    term = MatrixCompletionTerm(i, nbrs, [sizes[j] for j in nbrs], inst.r, own, pb,
                                other - pstart if mine.size else [], inst.values[mine])
    return term, SquaredNorm(reg)


def gen_matrix_completion(M, Ncols, r=4, sample_fraction=0.1, N_agents=6, lam=1.0,
                          xi=1.0, seed=0):
    """Random matrix completion instance with standard normal entries.

    ``round(sample_fraction * M * Ncols)`` entries are sampled without
    replacement. The first ``ceil(N_agents / 2)`` agents split the columns
    of ``X`` into contiguous ranges and the rest split ``Y``.

    Raises
    ------
    InvalidArgument
        For degenerate sizes or when there are too few columns per agent.
    """
    M = check_positive_int(M, "M")
    Ncols = check_positive_int(Ncols, "Ncols")
    r = check_positive_int(r, "r")
    sample_fraction = check_fraction(sample_fraction, "sample_fraction")
    N_agents = check_positive_int(N_agents, "N_agents", minimum=2)
    lam = check_positive(lam, "lam")
    xi = check_positive(xi, "xi")
    seed = check_seed(seed)
    if (N_agents + 1) // 2 > M or N_agents // 2 > Ncols:
        raise InvalidArgument("each agent needs at least one column")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((M, Ncols))
    count = int(round(sample_fraction * M * Ncols))
    if count == 0:
        raise InvalidArgument("sample_fraction leaves no observed entries")
    flat = np.sort(rng.choice(M * Ncols, size=count, replace=False))
    rows, cols = np.divmod(flat, Ncols)
    return from_observations((M, Ncols), rows, cols, Z[rows, cols], r, N_agents, lam, xi,
                             rng)


def from_observations(shape, rows, cols, values, r, N_agents, lam, xi, rng):
    """Distribute observed entries ``(rows[s], cols[s], values[s])`` across agents.

    ``rng`` (a generator or a seed) decides, per sample, whether it goes to
    the owner of the row factor or of the column factor.
    """
    M, Ncols = shape
    nx = (N_agents + 1) // 2
    ny = N_agents - nx
    if nx > M or ny > Ncols:
        raise InvalidArgument("each agent needs at least one column")
    rng = np.random.default_rng(rng)
    rows = np.asarray(rows, dtype=int)
    cols = np.asarray(cols, dtype=int)
    count = rows.size
    x_ranges = [(int(c[0]), int(c[-1]) + 1) for c in np.array_split(np.arange(M), nx)]
    y_ranges = [(int(c[0]), int(c[-1]) + 1) for c in np.array_split(np.arange(Ncols), ny)]
    inst = MatrixCompletionInstance(M, Ncols, r, rows, cols,
                                    np.asarray(values, dtype=float),
                                    np.zeros(count, dtype=int), x_ranges, y_ranges, lam, xi)
    to_x = rng.random(count) < 0.5
    inst.owner = np.where(to_x, inst.column_owner("x", rows), inst.column_owner("y", cols))
    return inst
