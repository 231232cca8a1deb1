"""Distributed LASSO: ``min ||A x - b||^2 + lam ||x||_1``.

Rows of ``A`` are split evenly across agents and so are the columns
(the blocks ``x_i``). Agent ``i`` holds ``f_i(x) = ||A_i x - b_i||^2``
built from its rows, so ``sum_i f_i = ||A x - b||^2``, and
``g_i = lam ||x_i||_1``. Its neighbor set collects the column blocks in
which its rows have nonzeros.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import svds

from .._validation import check_fraction, check_positive, check_positive_int, check_seed
from ..exceptions import InvalidArgument, SolverFailure
from ..objective import L1Norm, LeastSquaresTerm, PartitionedProblem, soft_threshold
from ..partition import make_dependency_graph, make_partition


def spectral_norm(A):
    """Largest singular value of a dense or sparse matrix."""
    if min(A.shape) < 3:
        dense = A.toarray() if sp.issparse(A) else np.asarray(A)
        return float(np.linalg.norm(dense, 2))
    s = svds(sp.csr_matrix(A), k=1, return_singular_vectors=False, tol=0,
             random_state=0)
    return float(s[0])


@dataclass
class LassoInstance:
    """A LASSO problem with its row and column partition.

    Attributes
    ----------
    A : scipy.sparse.csr_matrix
    b : ndarray
    lam : float
    row_blocks : list of ndarray
        Rows held by each agent.
    col_sizes : tuple
        Sizes of the column blocks ``x_i``.
    x_true : ndarray or None
        Sparse vector used to generate ``b``.
    """

    A: object
    b: np.ndarray
    lam: float
    row_blocks: list
    col_sizes: tuple
    x_true: np.ndarray = None

    @property
    def n_agents(self):
        return len(self.row_blocks)

    @property
    def shape(self):
        return self.A.shape

    @property
    def partition(self):
        return make_partition(self.col_sizes)

    def local_data(self, i):
        """``(A_i, b_i)`` with ``A_i`` holding only the rows of agent ``i``."""
        rows = self.row_blocks[i]
        return self.A[rows], self.b[rows]

    def neighbor_blocks(self, i):
        p = self.partition
        Ai, _ = self.local_data(i)
        used = np.unique(Ai.indices) if Ai.nnz else np.array([], dtype=int)
        offsets = np.asarray(p.block_offsets)
        blocks = set(np.searchsorted(offsets, used, side="right") - 1)
        blocks.add(i)
        return tuple(sorted(int(j) for j in blocks))

    def value(self, x):
        r = self.A @ x - self.b
        return float(r @ r + self.lam * np.sum(np.abs(x)))

    def lipschitz(self):
        """Lipschitz constant of the full gradient ``2 A^T (A x - b)``."""
        return 2.0 * spectral_norm(self.A) ** 2

    def to_problem(self):
        """Build the :class:`PartitionedProblem`."""
        p = self.partition
        nbrs = [self.neighbor_blocks(i) for i in range(self.n_agents)]
        graph = make_dependency_graph(self.n_agents, [(i, j) for i, s in enumerate(nbrs)
                                                      for j in s])
        smooth, nonsmooth = [], []
        for i in range(self.n_agents):
            smooth.append(lasso_local_terms(self, i, nbrs[i], p)[0])
            nonsmooth.append(L1Norm(self.lam))
        L = max([self.lipschitz()] + [t.lipschitz for t in smooth])
        return PartitionedProblem(p, graph, smooth, nonsmooth, lipschitz=L)


def lasso_local_terms(instance, i, neighbors=None, partition=None):
    """Smooth and nonsmooth terms of agent ``i``.

    The smooth term only stores the columns of ``A_i`` in its neighbor
    blocks, so its value and gradients touch no other block.
    """
    p = instance.partition if partition is None else partition
    nbrs = instance.neighbor_blocks(i) if neighbors is None else neighbors
    Ai, bi = instance.local_data(i)
    cols = np.concatenate([np.arange(p.block_offsets[j], p.block_offsets[j] + p.block_sizes[j])
                           for j in nbrs])
    M = Ai[:, cols].toarray()
    term = LeastSquaresTerm(i, nbrs, [p.block_sizes[j] for j in nbrs], M, bi)
    return term, L1Norm(instance.lam)


def _banded_mask(rng_rows, cols, n_agents, bandwidth, m, n):
    mask = np.zeros((m, n), dtype=bool)
    for i in range(n_agents):
        for t in range(bandwidth + 1):
            mask[np.ix_(rng_rows[i], cols[(i + t) % n_agents])] = True
    return mask


def gen_lasso(m, n, N_agents, density=0.05, sigma_noise=0.1, lam=1.0, seed=0,
              bandwidth=None):
    """Random sparse LASSO instance.

    ``A`` has standard normal entries, of which a fraction ``1 - density``
    is zeroed at random, and is then scaled to unit spectral norm. A
    standard normal ``x_true`` is sparsified the same way and
    ``b = A x_true + sigma_noise * e`` with standard normal ``e``.

    Parameters
    ----------
    bandwidth : int, optional
        If given, the rows of agent ``i`` only touch the column blocks
        ``i, ..., i + bandwidth`` (mod ``N_agents``), which caps every
        neighbor set at ``bandwidth + 1`` blocks.

    Raises
    ------
    InvalidArgument
        For nonpositive dimensions or more agents than rows or columns.
    """
    m = check_positive_int(m, "m")
    n = check_positive_int(n, "n")
    N_agents = check_positive_int(N_agents, "N_agents")
    density = check_fraction(density, "density")
    sigma_noise = check_positive(sigma_noise, "sigma_noise", allow_zero=True)
    lam = check_positive(lam, "lam", allow_zero=True)
    seed = check_seed(seed)
    if N_agents > min(m, n):
        raise InvalidArgument(f"N_agents={N_agents} exceeds min(m, n)={min(m, n)}")
    rng = np.random.default_rng(seed)
    rows = np.array_split(np.arange(m), N_agents)
    cols = np.array_split(np.arange(n), N_agents)
    A = rng.standard_normal((m, n))
    A[rng.random((m, n)) >= density] = 0.0
    if bandwidth is not None:
        bandwidth = check_positive_int(bandwidth, "bandwidth", minimum=0)
        A[~_banded_mask(rows, cols, N_agents, bandwidth, m, n)] = 0.0
    A = sp.csr_matrix(A)
    norm = spectral_norm(A)
    if norm == 0:
        raise InvalidArgument("the generated matrix is zero; increase density")
    A = A / norm
    x_true = rng.standard_normal(n)
    x_true[rng.random(n) >= density] = 0.0
    b = A @ x_true + sigma_noise * rng.standard_normal(m)
    return LassoInstance(sp.csr_matrix(A), b, lam, rows, tuple(len(c) for c in cols), x_true)


def lasso_prox_residual(A, b, lam, x):
    grad = 2.0 * (A.T @ (A @ x - b))
    return float(np.linalg.norm(x - soft_threshold(x - grad, lam)))


def reference_solve_lasso(instance, tol=1e-10, max_iter=200_000, x0=None):
    """Accurate monolithic LASSO solution by restarted FISTA.

    Iterates until ``||x - prox(x - grad F(x))|| <= tol``.

    Returns
    -------
    x_star : ndarray
    V_star : float

    Raises
    ------
    SolverFailure
        If ``max_iter`` iterations do not reach ``tol``.
    """
    tol = check_positive(tol, "tol")
    A, b, lam = instance.A, instance.b, instance.lam
    L = instance.lipschitz()
    n = A.shape[1]
    if L == 0:
        return np.zeros(n), instance.value(np.zeros(n))
    step = 1.0 / L
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    y, t = x.copy(), 1.0
    for it in range(max_iter):
        x_new = soft_threshold(y - step * 2.0 * (A.T @ (A @ y - b)), step * lam)
        # gradient-based restart keeps the sequence monotone in practice
        if (y - x_new) @ (x_new - x) > 0:
            t = 1.0
            y = x_new
        else:
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            y = x_new + ((t - 1.0) / t_new) * (x_new - x)
            t = t_new
        x = x_new
        if it % 10 == 0 and lasso_prox_residual(A, b, lam, x) <= tol:
            return x, instance.value(x)
    if lasso_prox_residual(A, b, lam, x) <= tol:
        return x, instance.value(x)
    raise SolverFailure(f"reference LASSO solve did not reach tol={tol}", best=x,
                        iterations=max_iter)
