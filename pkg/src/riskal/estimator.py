"""scikit-learn compatible front end for the population regression models."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import predict as _predict
from .data import PopulationDataset, from_arrays
from .model import build_model
from .sampler import SamplerConfig, sample


class HierarchicalLinearRegressor(RegressorMixin, BaseEstimator):
    """Bayesian straight-line regression over a population of tools.

    ``X`` holds a single column of sliding distance; ``groups`` gives the
    tool id of every row. Parameters mirror the model and sampler settings.

    Attributes
    ----------
    samples_ : PosteriorSamples
    diagnostics_ : Diagnostics
    model_ : ModelSpec
    tool_ids_ : tuple of int
    """

    def __init__(self, pooling="partial", likelihood="cauchy", priors=None, warmup=1000,
                 draws=2000, chains=4, target_accept=0.8, max_tree_depth=10, random_state=0,
                 step_km=6.02):
        self.pooling = pooling
        self.likelihood = likelihood
        self.priors = priors
        self.warmup = warmup
        self.draws = draws
        self.chains = chains
        self.target_accept = target_accept
        self.max_tree_depth = max_tree_depth
        self.random_state = random_state
        self.step_km = step_km

    def _sampler_config(self) -> SamplerConfig:
        seed = 0 if self.random_state is None else int(self.random_state)
        return SamplerConfig(warmup=self.warmup, draws=self.draws, chains=self.chains,
                             target_accept=self.target_accept, max_tree_depth=self.max_tree_depth,
                             seed=seed)

    def fit(self, X, y, groups=None):
        X, y = check_X_y(X, y, y_numeric=True)
        if X.shape[1] != 1:
            raise ValueError(f"X must have exactly one column (sliding distance), got {X.shape[1]}")
        groups = np.zeros(len(y), dtype=int) if groups is None else np.asarray(groups, dtype=int)
        if groups.shape != y.shape:
            raise ValueError("groups must have one entry per row")
        self.n_features_in_ = 1
        return self.fit_dataset(from_arrays(groups, X[:, 0], y, step_km=self.step_km))

    def fit_dataset(self, dataset: PopulationDataset):
        """Fit on the revealed observations of a prepared dataset."""
        self.model_ = build_model(self.pooling, self.likelihood, self.priors, dataset)
        self.samples_, self.diagnostics_ = sample(self.model_, self._sampler_config())
        self.tool_ids_ = dataset.tool_ids
        self.n_features_in_ = 1
        return self

    def _rows(self, X, groups):
        check_is_fitted(self, "samples_")
        X = check_array(X)
        if X.shape[1] != 1:
            raise ValueError("X must have exactly one column")
        groups = (np.full(X.shape[0], self.tool_ids_[0]) if groups is None
                  else np.asarray(groups, dtype=int))
        unknown = set(groups.tolist()) - set(self.tool_ids_)
        if unknown:
            raise ValueError(f"unknown group(s) {sorted(unknown)}")
        return X[:, 0], groups

    def predict(self, X, groups=None):
        """Posterior-mean latent roughness."""
        x, groups = self._rows(X, groups)
        out = np.empty(x.size)
        for k in np.unique(groups):
            sel = groups == k
            out[sel] = _predict.posterior_mean_prediction(self.samples_, int(k), x[sel])
        return out

    def predict_exceedance(self, X, groups=None, s_crit=0.9, mode="latent", seed=0):
        x, groups = self._rows(X, groups)
        return np.array([
            _predict.exceedance_probability(self.samples_, int(k), float(xi), s_crit, mode, seed).probability
            for xi, k in zip(x, groups)])

    def predict_failure_probability(self, X, groups=None, s_crit=0.9):
        """P(failure time < x) per row."""
        x, groups = self._rows(X, groups)
        cache = {}
        out = np.empty(x.size)
        for i, (xi, k) in enumerate(zip(x, groups)):
            if k not in cache:
                cache[k] = _predict.failure_time(self.samples_, int(k), s_crit)
            out[i] = _predict.prob_failure_before(cache[k], float(xi))
        return out

    def score(self, X, y, groups=None, sample_weight=None):
        """Coefficient of determination of the posterior-mean prediction."""
        return r2_score(y, self.predict(X, groups), sample_weight=sample_weight)
