import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from riskal.estimator import HierarchicalLinearRegressor

FAST = dict(warmup=200, draws=200, chains=2, random_state=3)


@pytest.fixture(scope="module")
def xy():
    rng = np.random.default_rng(0)
    groups = np.repeat([1, 2, 3], 8)
    x = np.tile(6.02 * np.arange(1, 9), 3)
    slope = {1: 0.010, 2: 0.012, 3: 0.009}
    y = np.array([slope[g] * xi + 0.45 for g, xi in zip(groups, x)]) + rng.normal(0, 0.01, x.size)
    return x[:, None], y, groups


def test_params_and_clone():
    est = HierarchicalLinearRegressor(pooling="none", chains=3)
    assert est.get_params()["pooling"] == "none"
    twin = clone(est)
    assert twin.get_params() == est.get_params() and twin is not est
    est.set_params(likelihood="gaussian")
    assert est.likelihood == "gaussian"


def test_fit_predict(xy):
    X, y, g = xy
    est = HierarchicalLinearRegressor(pooling="partial", likelihood="gaussian", **FAST).fit(X, y, groups=g)
    assert est.samples_.draws.shape == (2, 200, 13)
    pred = est.predict(X, groups=g)
    assert np.sqrt(np.mean((pred - y) ** 2)) < 0.03
    assert est.score(X, y, groups=g) > 0.9
    p = est.predict_exceedance([[10.0], [200.0]], groups=[1, 1])
    assert p[0] <= p[1] and p[1] > 0.9
    f = est.predict_failure_probability([[10.0], [200.0]], groups=[2, 2])
    assert f[0] <= f[1]


def test_validation(xy):
    X, y, g = xy
    est = HierarchicalLinearRegressor(**FAST)
    with pytest.raises(NotFittedError):
        est.predict(X)
    with pytest.raises(ValueError, match="one column"):
        est.fit(np.hstack([X, X]), y, groups=g)
    with pytest.raises(ValueError):
        est.fit(X, y[:-1], groups=g)
    with pytest.raises(ValueError, match="one entry per row"):
        est.fit(X, y, groups=g[:-1])
    est.fit(X, y, groups=g)
    with pytest.raises(ValueError, match="unknown group"):
        est.predict(X[:2], groups=[9, 9])
