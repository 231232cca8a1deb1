"""scikit-learn style wrappers around the asynchronous solver."""

import warnings

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .asynchrony import DelaySpec, ScheduleSpec
from .engine import EngineConfig, run
from .objective import estimate_block_lipschitz
from .problems.lasso import LassoInstance
from .problems.matrix_completion import from_observations
from .surrogate import SurrogateSpec


def _engine_config(est, L, n_agents):
    tau = L if est.tau is None else est.tau
    delay = (DelaySpec("zero") if est.max_delay == 0
             else DelaySpec("uniform", est.max_delay, est.random_state))
    schedule = ScheduleSpec("cyclic") if est.schedule == "cyclic" else ScheduleSpec(
        est.schedule, est.random_state)
    return EngineConfig(gamma=est.gamma, max_iterations=est.max_iter,
                        stop_tolerance=est.tol, stop_metric=est._stop_metric,
                        surrogate=SurrogateSpec(est.surrogate, tau=tau), schedule=schedule,
                        delay=delay, seed=est.random_state, lipschitz=L)


class DAsyFlexaLasso(RegressorMixin, BaseEstimator):
    """LASSO ``min_w ||X w - y||^2 + lam ||w||_1`` solved by simulated agents.

    Rows and columns of ``X`` are split evenly across ``n_agents``; agent
    ``i`` owns coefficient block ``i`` and the residuals of its rows.

    Parameters
    ----------
    lam : float
        L1 weight.
    n_agents : int
    gamma : float
        Relaxation stepsize.
    tau : float, optional
        Proximal weight of the surrogate; defaults to the Lipschitz constant.
    max_delay : int
        Uniform random delays up to this bound (0 for none).
    schedule : str
        ``cyclic``, ``shuffled-rounds`` or ``clock-phase``.
    max_iter : int
    tol : float
        Stop when the prox residual falls to this value.
    random_state : int

    Attributes
    ----------
    coef_ : ndarray
    n_iter_ : int
    trace_ : Trace
    """

    _stop_metric = "prox_residual"

    def __init__(self, lam=1.0, n_agents=4, gamma=0.9, tau=None, surrogate="linearized",
                 max_delay=0, schedule="cyclic", max_iter=50_000, tol=1e-8, random_state=0):
        self.lam = lam
        self.n_agents = n_agents
        self.gamma = gamma
        self.tau = tau
        self.surrogate = surrogate
        self.max_delay = max_delay
        self.schedule = schedule
        self.max_iter = max_iter
        self.tol = tol
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, accept_sparse="csr", y_numeric=True)
        m, n = X.shape
        N = min(self.n_agents, m, n)
        rows = np.array_split(np.arange(m), N)
        cols = tuple(len(c) for c in np.array_split(np.arange(n), N))
        inst = LassoInstance(sp.csr_matrix(X, dtype=float), np.asarray(y, dtype=float),
                             float(self.lam), rows, cols)
        problem = inst.to_problem()
        L = float(problem.lipschitz) or 1.0
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            trace = run(problem, _engine_config(self, L, N))
        self.coef_ = trace.x
        self.n_iter_ = trace.n_iter
        self.trace_ = trace
        self.n_features_in_ = n
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, accept_sparse="csr")
        return np.asarray(X @ self.coef_).ravel()


class DAsyFlexaMatrixCompletion(BaseEstimator):
    """Low-rank completion of a matrix with missing entries (``NaN``).

    ``fit`` learns factors ``X`` (``rank x M``) and ``Y`` (``rank x N``)
    minimizing the squared error on observed entries plus ridge penalties;
    ``transform`` returns the completed matrix ``X^T Y``.
    """

    _stop_metric = "MV"

    def __init__(self, rank=4, n_agents=6, lam=1.0, xi=1.0, gamma=0.9, tau=None,
                 surrogate="partial-convex", max_delay=0, schedule="cyclic",
                 max_iter=20_000, tol=1e-10, init_scale=1.0, random_state=0):
        self.rank = rank
        self.n_agents = n_agents
        self.lam = lam
        self.xi = xi
        self.gamma = gamma
        self.tau = tau
        self.surrogate = surrogate
        self.max_delay = max_delay
        self.schedule = schedule
        self.max_iter = max_iter
        self.tol = tol
        self.init_scale = init_scale
        self.random_state = random_state

    def fit(self, Z, y=None):
        Z = check_array(Z, ensure_all_finite="allow-nan")
        rows, cols = np.nonzero(~np.isnan(Z))
        inst = from_observations(Z.shape, rows, cols, Z[rows, cols], self.rank,
                                 self.n_agents, self.lam, self.xi, self.random_state)
        x0 = inst.initial_point(self.random_state, self.init_scale)
        problem = inst.to_problem()
        L = estimate_block_lipschitz(problem, samples=50, seed=self.random_state, center=x0,
                                     radius=max(1.0, float(np.max(np.abs(x0)))))
        problem.lipschitz = L
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            trace = run(problem, _engine_config(self, L, inst.n_agents), x0=x0)
        self.X_, self.Y_ = inst.split(trace.x)
        self.n_iter_ = trace.n_iter
        self.trace_ = trace
        self.n_features_in_ = Z.shape[1]
        return self

    def transform(self, Z=None):
        """Completed matrix; ``Z`` is accepted for API symmetry and ignored."""
        check_is_fitted(self, "X_")
        return self.X_.T @ self.Y_

    def fit_transform(self, Z, y=None):
        return self.fit(Z).transform()
