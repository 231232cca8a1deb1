import numpy as np
import pytest
from sklearn.exceptions import NotFittedError
from sklearn.linear_model import Lasso

from dasyflexa import DAsyFlexaLasso, DAsyFlexaMatrixCompletion
from dasyflexa.problems import gen_lasso, gen_matrix_completion


def test_lasso_params_round_trip():
    est = DAsyFlexaLasso(lam=0.3, n_agents=5, max_delay=2)
    params = est.get_params()
    assert params["lam"] == 0.3 and params["max_delay"] == 2
    est.set_params(lam=0.5)
    assert est.lam == 0.5


def test_lasso_matches_sklearn():
    inst = gen_lasso(60, 40, 4, density=0.3, lam=0.1, seed=0)
    X, y = inst.A.toarray(), inst.b
    est = DAsyFlexaLasso(lam=0.1, n_agents=4, tol=1e-12, max_iter=200_000).fit(X, y)
    sk = Lasso(alpha=0.1 / (2 * 60), fit_intercept=False, tol=1e-14, max_iter=100_000).fit(X, y)
    assert np.allclose(est.coef_, sk.coef_, atol=1e-8)
    assert np.allclose(est.predict(X), X @ sk.coef_, atol=1e-7)
    assert est.n_features_in_ == 40


def test_lasso_with_delays_converges():
    inst = gen_lasso(60, 40, 4, density=0.3, lam=0.1, seed=1)
    X, y = inst.A.toarray(), inst.b
    est = DAsyFlexaLasso(lam=0.1, n_agents=4, max_delay=3, schedule="shuffled-rounds",
                         gamma=0.5, tol=1e-9, max_iter=200_000).fit(X, y)
    assert est.trace_.status == "converged"


def test_not_fitted():
    with pytest.raises(NotFittedError):
        DAsyFlexaLasso().predict(np.zeros((2, 3)))
    with pytest.raises(NotFittedError):
        DAsyFlexaMatrixCompletion().transform()


def test_matrix_completion_fit_transform():
    inst = gen_matrix_completion(20, 16, r=2, sample_fraction=0.4, N_agents=4, seed=0)
    Z = np.full((20, 16), np.nan)
    Z[inst.rows, inst.cols] = inst.values
    est = DAsyFlexaMatrixCompletion(rank=2, n_agents=4, max_iter=5000, tol=1e-10)
    full = est.fit_transform(Z)
    assert full.shape == (20, 16)
    assert est.X_.shape == (2, 20) and est.Y_.shape == (2, 16)
    assert np.all(np.isfinite(full))
    assert est.trace_.column("V")[-1] < est.trace_.column("V")[0]
