"""Stationarity measures, the Lyapunov function, rate fits and theory constants."""

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_nonnegative_int, check_positive, check_positive_int
from .exceptions import InvalidArgument
from .surrogate import BestResponseInput, best_response


def max_safe_stepsize(tau, L, rho, D):
    """Upper bound ``2 tau / (L (2 + rho^2 D^2))`` on the relaxation stepsize.

    The stepsize must be chosen strictly below this value (and at most 1)
    for the convergence guarantees to hold.

    Examples
    --------
    >>> max_safe_stepsize(1.0, 1.0, 1, 0)
    1.0
    """
    tau = check_positive(tau, "tau")
    L = check_positive(L, "L")
    check_positive(rho, "rho")
    if rho < 1:
        raise InvalidArgument(f"rho must be >= 1, got {rho}")
    D = check_nonnegative_int(D, "D")
    return 2.0 * tau / (L * (2.0 + rho ** 2 * D ** 2))


def synchronous_best_response(problem, spec, x, taus=None):
    """Best responses of all agents at the undelayed point ``x``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    p = problem.partition
    for i in range(problem.n_agents):
        grads = {j: problem.partial_gradient(j, i, problem.neighborhood(x, j))
                 for j in problem.graph.reverse_sets[i] if j != i}
        inp = BestResponseInput(i, problem.neighborhood(x, i), p.block(x, i).copy(), grads)
        tau = None if taus is None else taus[i]
        out[p.block_slice(i)] = best_response(problem, spec, inp, tau=tau, check=False)
    return out


def merit_MV(problem, spec, x, taus=None):
    """Squared distance between ``x`` and its synchronous best response."""
    x = np.asarray(x, dtype=float)
    d = synchronous_best_response(problem, spec, x, taus) - x
    return float(d @ d)


def prox_residual(problem, x):
    """``|| x - prox_G(x - grad F(x)) ||_2``, evaluated blockwise."""
    x = np.asarray(x, dtype=float)
    z = x - problem.gradient(x)
    p = problem.partition
    r = np.empty_like(x)
    for i in range(problem.n_agents):
        sl = p.block_slice(i)
        r[sl] = x[sl] - problem.prox(i, 1.0, z[sl])
    return float(np.linalg.norm(r))


def lyapunov_weights(D):
    """Weights ``1, ..., D`` applied to the last ``D`` squared steps, oldest first."""
    return np.arange(1, D + 1, dtype=float)


def lyapunov_from_steps(V_now, step_sq, L, rho, D):
    """Lyapunov value from the last ``D`` squared step norms (oldest first).

    Missing pre-history entries count as zero steps.
    """
    if D == 0:
        return float(V_now)
    s = np.zeros(D)
    tail = np.asarray(step_sq, dtype=float)[-D:]
    if tail.size:
        s[D - tail.size:] = tail
    return float(V_now + 0.5 * D * L * rho ** 2 * (lyapunov_weights(D) @ s))


def lyapunov(V_now, history, L, rho, D):
    """Lyapunov function from an iterate window ``x^{k-D}, ..., x^k``.

    ``history`` lists the ``D + 1`` iterates oldest first; pad with ``x^0``
    before the start of the run.
    """
    D = check_nonnegative_int(D, "D")
    if len(history) != D + 1:
        raise InvalidArgument(f"history must hold D + 1 = {D + 1} iterates")
    h = [np.asarray(v, dtype=float) for v in history]
    steps = [float(np.sum((h[t + 1] - h[t]) ** 2)) for t in range(D)]
    return lyapunov_from_steps(V_now, steps, L, rho, D)


@dataclass
class RateFit:
    """Result of :func:`fit_linear_rate`.

    ``lambda_hat`` comes from the raw values, ``lambda_envelope`` from their
    running minimum.
    """

    lambda_hat: float
    lambda_envelope: float
    slope: float
    intercept: float


def _fit(logv, t):
    A = np.vstack([t, np.ones_like(t)]).T
    (slope, intercept), *_ = np.linalg.lstsq(A, logv, rcond=None)
    return float(slope), float(intercept)


def fit_linear_rate(values, B=1):
    """Estimate the per-iteration contraction factor of a positive sequence.

    ``values[k]`` is sampled at iteration ``k B``. The log of the values is
    regressed on the iteration index and the slope exponentiated.

    Raises
    ------
    InvalidArgument
        If fewer than 5 values are given or any value is not positive.
    """
    v = np.asarray(values, dtype=float)
    B = check_positive_int(B, "B")
    if v.ndim != 1 or v.size < 5:
        raise InvalidArgument("at least 5 values are needed for a rate fit")
    if not np.all(np.isfinite(v)) or np.any(v <= 0):
        raise InvalidArgument("values must be positive; subtract a strict lower bound first")
    t = B * np.arange(v.size, dtype=float)
    slope, intercept = _fit(np.log(v), t)
    env_slope, _ = _fit(np.log(np.minimum.accumulate(v)), t)
    return RateFit(math.exp(slope), math.exp(env_slope), slope, intercept)


@dataclass
class TheoryConstants:
    rho: float
    L: float
    L_m: float
    tau: float
    gamma: float
    N: int
    B: int
    D: int
    kappa: float
    C1: float
    C2: float
    C3: float
    lam: float
    one_minus_lam: float
    alpha1: float
    alpha2: float
    T_eps: object = None

    @property
    def rate_guaranteed(self):
        """Whether the rate constant lies in (0, 1), judged through ``1 - lam``."""
        return 0.0 < self.one_minus_lam < 1.0

    def as_dict(self):
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def theory_constants(tau, L, L_m, rho, gamma, N, B, D, kappa=1.0, V_gap=None, eps=None):
    """Closed-form constants of the complexity and linear-rate bounds.

    ``kappa`` is the error-bound constant, which is not computable in
    general and defaults to 1. When ``V_gap = V(x^0) - min V`` and ``eps``
    are given, ``T_eps = ceil(C1 * V_gap / eps)`` bounds the number of
    iterations needed to bring the merit below ``eps``.

    Raises
    ------
    InvalidArgument
        If an input is not positive, ``B < N``, ``D > B``, or ``gamma`` is
        too large for ``C3`` to be positive.
    """
    tau = check_positive(tau, "tau")
    L = check_positive(L, "L")
    L_m = check_positive(L_m, "L_m")
    rho = check_positive(rho, "rho")
    gamma = check_positive(gamma, "gamma")
    kappa = check_positive(kappa, "kappa")
    N = check_positive_int(N, "N")
    B = check_positive_int(B, "B")
    D = check_nonnegative_int(D, "D")
    if gamma > 1:
        raise InvalidArgument(f"gamma must lie in (0, 1], got {gamma}")
    if B < N:
        raise InvalidArgument(f"B must be >= N, got B={B}, N={N}")
    if D > B:
        raise InvalidArgument(f"D must be <= B, got D={D}, B={B}")
    descent = 2 * tau - gamma * L * (2 + D ** 2 * rho ** 2)
    if descent <= 0:
        raise InvalidArgument(
            f"gamma={gamma} is not below the safe stepsize {max_safe_stepsize(tau, L, rho, D)}")

    g2 = gamma ** 2
    lip = L_m ** 2 + (rho - 1) * L ** 2
    C2 = 3 * g2 * (B + 2 * D - N + 1) * rho * lip / tau ** 2
    C3 = 4 * (2 * (N * C2 + 1) + D * C2 / (3 * (B + 2 * D - N + 1))) / (gamma * descent)
    C1 = C3 * (B + D - 1) if B + D > 1 else C3

    e = kappa ** 2 * (1 + L + N * L_m) ** 2
    beta1 = C2 * (e * (2 * N + 1) + N * (1 + g2)) + e + 1 + g2 * (B - N + 2)
    beta2 = (C2 * (3 * e * (2 * N + 1) + N * (3 + g2)) + 6 * e + 3
             + 0.5 * g2 * (3 * B - 3 * N + 5))
    beta3 = 2 * (L ** 2 + L_m ** 2) * (2 * N * C2 + D * g2 + 1) + 0.5
    beta4 = (2 * C2 * (2 * e * (2 * N + 1) + N * lip) + 2 * e
             + lip * (1 + D * g2) + 2 * g2)
    beta5 = lip * (2 * N * C2 + D * g2 + 2) + g2
    common = (1 - gamma) * (beta3 + (L * gamma * (rho ** 2 * L * D ** 2 * gamma + 1) + 1) / 2)
    alpha1 = common + rho * L * beta1 + beta4
    alpha2 = common + rho * L * beta2 + beta5
    a = 2 * tau - gamma * L * (B * D * rho ** 2 + 2)
    # 1 - lam is kept separately: for small gamma lam rounds to 1 in floating point
    one_minus_lam = 0.5 * g2 * a / (2 * N * alpha1 + 2 * (B - N) * alpha2
                                    + gamma * (2 - gamma) * a)
    lam = 1 - one_minus_lam

    T_eps = None
    if V_gap is not None and eps is not None:
        check_positive(V_gap, "V_gap", allow_zero=True)
        eps = check_positive(eps, "eps")
        T_eps = int(math.ceil(C1 * V_gap / eps))
    return TheoryConstants(rho, L, L_m, tau, gamma, N, B, D, kappa, C1, C2, C3, lam,
                           one_minus_lam, alpha1, alpha2, T_eps)


def scan_gamma_for_rate(tau, L, L_m, rho, N, B, D, kappa=1.0, gamma0=1.0, shrink=0.5,
                        max_steps=200):
    """Halve ``gamma`` from ``gamma0`` until the rate constant lies in (0, 1).

    Returns the resulting :class:`TheoryConstants`, or ``None`` if no
    stepsize in the scan qualifies.
    """
    gamma = min(gamma0, 0.999 * max_safe_stepsize(tau, L, rho, D), 1.0)
    for _ in range(max_steps):
        try:
            tc = theory_constants(tau, L, L_m, rho, gamma, N, B, D, kappa)
        except InvalidArgument:
            tc = None
        if tc is not None and tc.rate_guaranteed:
            return tc
        gamma *= shrink
    return None


def relative_error(values, v_star):
    """``(V - V*) / |V*|``; ``V*`` must be nonzero."""
    if v_star == 0:
        raise InvalidArgument("relative error is undefined for V* = 0")
    return (np.asarray(values, dtype=float) - v_star) / abs(v_star)
