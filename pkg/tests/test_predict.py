import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from riskal.data import from_arrays
from riskal.model import build_model
from riskal.predict import (ExceedanceMode, exceedance_probability, failure_time, forecast,
                            posterior_mean_prediction, prob_failure_before, total_mse)
from riskal.sampler import PosteriorSamples, SamplerConfig, posterior_from_csv, sample


def fixed_posterior(m, c, s=None, family="cauchy"):
    m = np.atleast_1d(np.asarray(m, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    s = np.full_like(m, 0.01) if s is None else np.atleast_1d(np.asarray(s, dtype=float))
    draws = np.stack([m, c, s], axis=-1)[None, :, :]
    return PosteriorSamples(draws, ("m[1]", "c[1]", "gamma[1]"), np.zeros(draws.shape[:2], bool),
                            {1: ("m[1]", "c[1]", "gamma[1]")}, family)


def test_single_draw_forecast():
    fc = forecast(fixed_posterior(0.1, 0.5), 1, [2.0])
    assert fc.latent_draws[0, 0] == pytest.approx(0.7)


def test_empty_grid_and_unknown_tool():
    post = fixed_posterior(0.1, 0.5)
    with pytest.raises(ValueError):
        forecast(post, 1, [])
    with pytest.raises(KeyError):
        forecast(post, 2, [1.0])


def test_exceedance_examples():
    assert exceedance_probability(fixed_posterior(0.1, 0.5), 1, 2.0, 0.9).probability == 0.0
    two = fixed_posterior([0.0, 0.0], [0.85, 0.95])
    est = exceedance_probability(two, 1, 3.0, 0.9)
    assert est.probability == 0.5 and est.n_draws == 2 and est.mode is ExceedanceMode.LATENT
    with pytest.raises(ValueError):
        exceedance_probability(two, 1, -1.0, 0.9)


def test_failure_time_examples():
    assert failure_time(fixed_posterior(0.1, 0.5), 1, 0.9).t_f_draws[0] == pytest.approx(4.0)
    assert failure_time(fixed_posterior(-0.01, 0.5), 1, 0.9).t_f_draws[0] == math.inf
    assert failure_time(fixed_posterior(0.01, 0.95), 1, 0.9).t_f_draws[0] == 0.0
    ftd = failure_time(fixed_posterior([0.2, 1 / 15, 0.04], [0.5, 0.5, 0.5]), 1, 0.9)
    np.testing.assert_allclose(ftd.t_f_draws, [2.0, 6.0, 10.0])
    assert prob_failure_before(ftd, 7.0) == pytest.approx(2 / 3)
    assert prob_failure_before(failure_time(fixed_posterior([-1.0, 0.0], [0.1, 0.2]), 1, 0.9), 1e9) == 0


draw_lists = st.lists(st.tuples(st.floats(1e-4, 0.05), st.floats(0.0, 0.89)), min_size=1, max_size=50)


@given(draw_lists, st.floats(0.0, 200.0))
def test_failure_time_identity_per_draw(draws, t):
    m, c = map(np.array, zip(*draws))
    post = fixed_posterior(m, c)
    lat = forecast(post, 1, [t]).latent_draws[:, 0] > 0.9
    fail = failure_time(post, 1, 0.9).t_f_draws < t
    # crossing-time identity holds draw by draw away from exact ties
    tie = np.isclose(m * t + c, 0.9, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(lat[~tie], fail[~tie])


@given(draw_lists, st.floats(0.0, 100.0), st.floats(0.0, 100.0))
def test_exceedance_monotone_in_distance(draws, a, b):
    post = fixed_posterior(*map(np.array, zip(*draws)))
    lo, hi = sorted((a, b))
    assert (exceedance_probability(post, 1, lo, 0.9).probability
            <= exceedance_probability(post, 1, hi, 0.9).probability)


@given(draw_lists, st.floats(0.0, 2.0), st.floats(0.0, 2.0))
def test_exceedance_antitone_in_threshold(draws, s1, s2):
    post = fixed_posterior(*map(np.array, zip(*draws)))
    lo, hi = sorted((s1, s2))
    assert (exceedance_probability(post, 1, 30.0, lo).probability
            >= exceedance_probability(post, 1, 30.0, hi).probability)


def test_noise_mode_median_is_centered():
    n = 20000
    post = fixed_posterior(np.full(n, 0.01), np.full(n, 0.5), np.full(n, 0.05))
    fc = forecast(post, 1, [10.0], include_noise=True, seed=3)
    resid = fc.predictive_draws[:, 0] - fc.latent_draws[:, 0]
    # Cauchy(0, g) median has asymptotic sd g * pi / (2 sqrt n)
    assert abs(np.median(resid)) < 3 * 0.05 * math.pi / (2 * math.sqrt(n))
    again = forecast(post, 1, [10.0], include_noise=True, seed=3)
    np.testing.assert_array_equal(fc.predictive_draws, again.predictive_draws)


def test_recount_from_exported_csv(tiny_dataset):
    spec = build_model("partial", "cauchy", None, tiny_dataset)
    samples, _ = sample(spec, SamplerConfig(warmup=100, draws=200, chains=2, seed=5))
    back = posterior_from_csv(samples.to_csv_string())
    cols = back.names.index("m[2]"), back.names.index("c[2]")
    m = back.draws[:, :, cols[0]].ravel()
    c = back.draws[:, :, cols[1]].ravel()
    x = 30.0
    count = sum(1 for mi, ci in zip(m, c) if mi * x + ci > 0.9)
    assert exceedance_probability(samples, 2, x, 0.9).probability == count / m.size
    tf_count = sum(1 for mi, ci in zip(m, c)
                   if (0.0 if ci >= 0.9 else ((0.9 - ci) / mi if mi > 0 else math.inf)) < x)
    assert prob_failure_before(failure_time(samples, 2, 0.9), x) == tf_count / m.size


def test_total_mse_examples():
    data = from_arrays([1, 1, 2], [1.0, 2.0, 1.0], [0.6, 0.9, 0.5])
    draws = np.array([[[0.1, 0.5, 0.01, 0.0, 0.5, 0.01]]])
    names = ("m[1]", "c[1]", "gamma[1]", "m[2]", "c[2]", "gamma[2]")
    post = PosteriorSamples(draws, names, np.zeros((1, 1), bool),
                            {1: names[:3], 2: names[3:]})
    rep = total_mse(post, data, {1: [False, True], 2: [True]})
    assert rep.per_tool[1] == pytest.approx(0.04)
    assert rep.per_tool[2] == pytest.approx(0.0)
    assert rep.total == pytest.approx(0.04)
    np.testing.assert_allclose(posterior_mean_prediction(post, 1, [2.0]), [0.7])
    with pytest.raises(ValueError):
        total_mse(post, data, {1: [False, False]})
