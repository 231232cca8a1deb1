"""Strongly convex surrogates and the best-response subproblem.

Agent ``i`` replaces its own smooth term by a surrogate built at a
(possibly delayed) copy of its neighborhood, linearizes the terms of the
other agents that depend on its block, and minimizes the result plus
``g_i``::

    x_hat_i = argmin  f_tilde_i(x_i; y) + <c, x_i - x_i^k> + g_i(x_i)

where ``c`` is the sum of the partial gradients received from the
agents in ``R_i \\ {i}``.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_positive_int
from .exceptions import InvalidArgument, SolverFailure

SURROGATE_KINDS = ("linearized", "second-order", "partial-convex", "custom")


@dataclass
class SurrogateSpec:
    """Surrogate configuration.

    Parameters
    ----------
    kind : str
        One of ``linearized``, ``second-order``, ``partial-convex``, ``custom``.
    tau : float
        Strong convexity modulus of every surrogate.
    tau_overrides : dict, optional
        Per-agent moduli (0-based agent id -> tau).
    adaptive : bool
        Enable the tau heuristic: double an agent's tau when its update
        increases the objective, halve it (down to ``tau_min``) after
        ``patience`` consecutive decreases.
    factory : callable, optional
        For ``kind="custom"``: ``factory(problem, agent, inp, tau)`` returning
        a surrogate object with ``value``, ``gradient``, ``tau`` and
        ``inner_lipschitz``.
    """

    kind: str = "linearized"
    tau: float = 1.0
    tau_overrides: dict = field(default_factory=dict)
    adaptive: bool = False
    tau_min: float = 1e-4
    patience: int = 5
    tol: float = 1e-10
    max_inner_iters: int = 10_000
    factory: object = None

    def __post_init__(self):
        if self.kind not in SURROGATE_KINDS:
            raise InvalidArgument(
                f"unknown surrogate kind {self.kind!r}; expected one of {SURROGATE_KINDS}")
        check_positive(self.tau, "tau")
        for agent, t in self.tau_overrides.items():
            check_positive(t, f"tau override for agent {agent}")
        check_positive(self.tau_min, "tau_min")
        check_positive(self.tol, "tol")
        check_positive_int(self.max_inner_iters, "max_inner_iters")
        if self.kind == "custom" and self.factory is None:
            raise InvalidArgument("custom surrogates need a factory")

    def tau_for(self, agent):
        return float(self.tau_overrides.get(agent, self.tau))


@dataclass
class BestResponseInput:
    """Information agent ``i`` holds when it updates.

    ``x_own_nbhd`` is the delayed neighborhood ``x_{N_i}`` used to build the
    surrogate. Its own block must equal ``anchor`` because an agent always
    sees its current value. ``neighbor_gradients`` maps each ``j`` in
    ``R_i \\ {i}`` to ``grad_{x_i} f_j`` at the delayed point agent ``i`` knows.
    """

    agent: int
    x_own_nbhd: np.ndarray
    anchor: np.ndarray
    neighbor_gradients: dict = field(default_factory=dict)

    def validate(self, problem):
        term = problem.smooth_terms[self.agent]
        if self.x_own_nbhd.shape != (term.dim,):
            raise InvalidArgument(
                f"agent {self.agent} neighborhood must have length {term.dim}")
        own = self.x_own_nbhd[term.local_slice(self.agent)]
        if not np.array_equal(own, self.anchor):
            raise InvalidArgument("the own block inside x_own_nbhd must equal the anchor")
        rev = set(problem.graph.reverse_sets[self.agent]) - {self.agent}
        if set(self.neighbor_gradients) - rev:
            raise InvalidArgument(
                f"gradients supplied from agents outside R_{self.agent}: "
                f"{sorted(set(self.neighbor_gradients) - rev)}")

    def linear_term(self):
        """Sum of the received partial gradients."""
        c = np.zeros_like(self.anchor, dtype=float)
        for j in sorted(self.neighbor_gradients):
            c = c + self.neighbor_gradients[j]
        return c


class LinearizedSurrogate:
    """``<g, x - a> + (tau / 2) ||x - a||^2`` with ``g = grad_{x_i} f_i(y)``."""

    inner_lipschitz = 0.0

    def __init__(self, grad, anchor, tau):
        self.grad = np.asarray(grad, dtype=float)
        self.anchor = np.asarray(anchor, dtype=float)
        self.tau = float(tau)

    def value(self, x):
        d = x - self.anchor
        return float(self.grad @ d + 0.5 * self.tau * (d @ d))

    def gradient(self, x):
        return self.grad + self.tau * (x - self.anchor)


class SecondOrderSurrogate:
    """Second-order model plus ``(tau / 2) ||x - a||^2``."""

    def __init__(self, base_value, grad, hess, anchor, tau):
        self.base_value = float(base_value)
        self.grad = np.asarray(grad, dtype=float)
        self.hess = np.asarray(hess, dtype=float)
        self.anchor = np.asarray(anchor, dtype=float)
        self.tau = float(tau)
        eig = np.linalg.eigvalsh(self.hess) if self.hess.size else np.zeros(1)
        if eig[0] < -1e-10 * max(1.0, abs(eig[-1])):
            raise InvalidArgument("second-order surrogate needs a block-convex term")
        self.inner_lipschitz = float(max(eig[-1], 0.0))

    def value(self, x):
        d = x - self.anchor
        return float(self.base_value + self.grad @ d + 0.5 * d @ (self.hess @ d)
                     + 0.5 * self.tau * (d @ d))

    def gradient(self, x):
        d = x - self.anchor
        return self.grad + self.hess @ d + self.tau * d


class PartialConvexSurrogate:
    """``f_i(x_i, y_rest) + (tau / 2) ||x_i - y_i||^2``.

    The inner Lipschitz constant is the largest eigenvalue of the own-block
    Hessian at the build point, exact when ``f_i`` is quadratic in its own
    block.
    """

    def __init__(self, term, y_nbhd, tau):
        self.term = term
        self.y = np.array(y_nbhd, dtype=float, copy=True)
        self.sl = term.local_slice(term.owner)
        self.anchor = self.y[self.sl].copy()
        self.tau = float(tau)
        h = term.hessian(self.y)[self.sl, self.sl]
        eig = np.linalg.eigvalsh(h) if h.size else np.zeros(1)
        if eig[0] < -1e-10 * max(1.0, abs(eig[-1])):
            raise InvalidArgument("partial-convex surrogate needs f_i convex in the own block")
        self.inner_lipschitz = float(max(eig[-1], 0.0))

    def _point(self, x):
        y = self.y.copy()
        y[self.sl] = x
        return y

    def value(self, x):
        d = x - self.anchor
        return self.term.value(self._point(x)) + 0.5 * self.tau * float(d @ d)

    def gradient(self, x):
        return (self.term.partial_gradient(self.term.owner, self._point(x))
                + self.tau * (x - self.anchor))


def build_linearized(problem, i, inp, tau):
    """Linearized surrogate of ``f_i`` at the delayed neighborhood."""
    grad = problem.partial_gradient(i, i, inp.x_own_nbhd)
    return LinearizedSurrogate(grad, inp.anchor, tau)


def build_surrogate(problem, spec, inp, tau=None):
    i = inp.agent
    tau = spec.tau_for(i) if tau is None else float(tau)
    term = problem.smooth_terms[i]
    if spec.kind == "linearized":
        return build_linearized(problem, i, inp, tau)
    if spec.kind == "second-order":
        if not term.has_hessian:
            raise InvalidArgument("second-order surrogate requires a term exposing its Hessian")
        sl = term.local_slice(i)
        hess = term.hessian(inp.x_own_nbhd)[sl, sl]
        return SecondOrderSurrogate(term.value(inp.x_own_nbhd),
                                    term.partial_gradient(i, inp.x_own_nbhd),
                                    hess, inp.anchor, tau)
    if spec.kind == "partial-convex":
        if not (term.has_hessian or hasattr(term, "partial_solve")):
            raise InvalidArgument(
                "partial-convex surrogate requires a Hessian or a partial solve")
        return PartialConvexSurrogate(term, inp.x_own_nbhd, tau)
    return spec.factory(problem, i, inp, tau)


def solve_subproblem_generic(smooth_grad, tau, inner_lipschitz, anchor, prox,
                             tol=1e-10, max_inner_iters=10_000, x_init=None):
    """Proximal-gradient loop for a strongly convex composite subproblem.

    Minimizes ``phi(x) + g(x)`` where ``smooth_grad`` is the gradient of the
    ``tau``-strongly convex ``phi`` whose gradient is
    ``(tau + inner_lipschitz)``-Lipschitz, and ``prox(alpha, z)`` is the
    prox of ``g``. Stops when successive iterates are within
    ``tol * (1 + ||x||)``.

    Raises
    ------
    SolverFailure
        When ``max_inner_iters`` is reached; ``best`` holds the last iterate.
    """
    check_positive(tol, "tol")
    check_positive(tau, "tau")
    max_inner_iters = check_positive_int(max_inner_iters, "max_inner_iters")
    step = 1.0 / (tau + inner_lipschitz)
    x = np.array(anchor if x_init is None else x_init, dtype=float, copy=True)
    for it in range(1, max_inner_iters + 1):
        x_new = prox(step, x - step * smooth_grad(x))
        gap = np.linalg.norm(x_new - x)
        x = x_new
        if gap <= tol * (1.0 + np.linalg.norm(x)):
            return x
    raise SolverFailure(
        f"inner solver did not converge in {max_inner_iters} iterations", best=x,
        iterations=max_inner_iters)


def mc_best_response(anchor_cols, sample_cols, partners, values, neighbor_grad, tau, lam):
    """Closed-form best response for a block of matrix-completion columns.

    Each owned column ``x_m`` (a column of ``anchor_cols``, shape ``r x c``)
    solves the ``r x r`` positive definite system::

        (sum_n y_n y_n^T + (tau + lam) I) x_m
            = sum_n z_mn y_n + tau x_m^k - g_m

    Parameters
    ----------
    anchor_cols : (r, c) ndarray
        Current owned columns.
    sample_cols : (s,) int ndarray
        Owned column index of every sample held by the agent.
    partners : (s, r) ndarray
        (Delayed) partner column of every sample.
    values : (s,) ndarray
        Observed entries ``z_mn``.
    neighbor_grad : (r, c) ndarray
        Summed partial gradients received for the owned columns.
    """
    anchor_cols = np.asarray(anchor_cols, dtype=float)
    r, c = anchor_cols.shape
    gram = np.zeros((c, r, r))
    rhs = (tau * anchor_cols - neighbor_grad).T.copy()
    if len(sample_cols):
        np.add.at(gram, sample_cols, partners[:, :, None] * partners[:, None, :])
        np.add.at(rhs, sample_cols, values[:, None] * partners)
    gram += (tau + lam) * np.eye(r)
    return np.linalg.solve(gram, rhs[:, :, None])[:, :, 0].T


def best_response(problem, spec, inp, tau=None, check=True):
    """Minimizer of the best-response subproblem for ``inp.agent``.

    The linearized kind and terms offering ``partial_solve`` use closed
    forms; the other kinds use :func:`solve_subproblem_generic`.
    """
    if check:
        inp.validate(problem)
    i = inp.agent
    tau = spec.tau_for(i) if tau is None else float(tau)
    c = inp.linear_term()
    g = problem.nonsmooth_terms[i]
    if spec.kind == "linearized":
        own = problem.partial_gradient(i, i, inp.x_own_nbhd)
        return g.prox(1.0 / tau, inp.anchor - (own + c) / tau)
    term = problem.smooth_terms[i]
    if spec.kind == "partial-convex" and hasattr(term, "partial_solve"):
        return term.partial_solve(inp.x_own_nbhd, tau, c, g)
    sur = build_surrogate(problem, spec, inp, tau)
    return solve_subproblem_generic(
        lambda x: sur.gradient(x) + c, sur.tau, sur.inner_lipschitz, inp.anchor,
        g.prox, tol=spec.tol, max_inner_iters=spec.max_inner_iters)


def optimality_gap(problem, inp, x_hat, tau):
    """Left side minus right side of the best-response optimality inequality.

    Returns ``<sum_j grad_{x_i} f_j, d> + g_i(x_hat) - g_i(x_i^k) + tau ||d||^2``
    with ``d = x_hat - x_i^k``; it is nonpositive for an exact best response.
    """
    i = inp.agent
    d = x_hat - inp.anchor
    total = problem.partial_gradient(i, i, inp.x_own_nbhd) + inp.linear_term()
    g = problem.nonsmooth_terms[i]
    return float(total @ d + g.value(x_hat) - g.value(inp.anchor) + tau * (d @ d))


def gradient_consistency_error(problem, spec, i, y_nbhd, tau=None):
    """Relative mismatch between the surrogate gradient and ``grad_{y_i} f_i``.

    Both are evaluated at the build point, where they must coincide.
    """
    term = problem.smooth_terms[i]
    anchor = y_nbhd[term.local_slice(i)].copy()
    inp = BestResponseInput(i, np.asarray(y_nbhd, float), anchor, {})
    sur = build_surrogate(problem, spec, inp, tau)
    want = problem.partial_gradient(i, i, y_nbhd)
    got = sur.gradient(anchor)
    return float(np.linalg.norm(got - want) / max(1.0, np.linalg.norm(want)))
