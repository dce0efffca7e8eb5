import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from riskal.model import (CauchyHierPriors, GaussianHierPriors, ModelError, Pooling, build_model,
                          constrain, grad_log_posterior, log_posterior, priors_from_dict,
                          priors_to_dict, unconstrain)


def reference_logp(spec, u):
    """Log density rebuilt from scipy.stats, independent of the compiled kernel."""
    p = constrain(spec, u)
    x, y, grp = spec.dataset.arrays(revealed_only=True)
    ids = spec.dataset.tool_ids
    cauchy = spec.likelihood.value == "cauchy"
    noise = stats.cauchy if cauchy else stats.norm
    pri = spec.priors
    lp = 0.0
    for i in range(x.size):
        k = ids[grp[i]]
        m, c, s = (p[n] for n in spec.tool_params(k))
        lp += noise.logpdf(y[i], loc=m * x[i] + c, scale=s)
    noise_scale = pri.gamma_noise_scale if cauchy else pri.noise_scale
    noise_names = [n for n in spec.names if n == spec.noise_name or n.startswith(spec.noise_name + "[")]
    for n in noise_names:
        lp += stats.halfcauchy.logpdf(p[n], scale=noise_scale) + math.log(p[n])
    group_names = [(f"m[{k}]", f"c[{k}]") for k in ids] if spec.pooling is not Pooling.COMPLETE \
        else [("m", "c")]
    if spec.pooling is Pooling.PARTIAL:
        for mn, cn in group_names:
            # offsets are standard normal in the unconstrained coordinates
            lp += stats.norm.logpdf((p[mn] - p["mu_m"]) / p["sigma_m"])
            lp += stats.norm.logpdf((p[cn] - p["mu_c"]) / p["sigma_c"])
        if cauchy:
            lp += stats.gamma.logpdf(p["mu_m"], pri.gamma_shape, scale=pri.gamma_scale) + math.log(p["mu_m"])
            lp += stats.halfcauchy.logpdf(p["sigma_m"], scale=pri.s_sigma_m) + math.log(p["sigma_m"])
            lp += stats.norm.logpdf(p["mu_c"], pri.mu_c_mean, pri.mu_c_sd)
            lp += stats.halfcauchy.logpdf(p["sigma_c"], scale=pri.s_sigma_c) + math.log(p["sigma_c"])
        else:
            lp += stats.norm.logpdf(p["mu_m"], pri.m_alpha[1], pri.s_alpha[1])
            lp += stats.norm.logpdf(p["mu_c"], pri.m_alpha[0], pri.s_alpha[0])
            for n in ("sigma_m", "sigma_c"):
                lp += stats.invgamma.logpdf(p[n], pri.a, scale=pri.b) + math.log(p[n])
    else:
        mu_m, sig_m, mu_c, sig_c = spec.fixed_hyper
        for mn, cn in group_names:
            lp += stats.norm.logpdf(p[mn], mu_m, sig_m) + stats.norm.logpdf(p[cn], mu_c, sig_c)
    return lp


VARIANTS = [(pl, lk) for pl in ("complete", "none", "partial") for lk in ("cauchy", "gaussian")]


@pytest.mark.parametrize("pooling,likelihood", VARIANTS)
def test_logp_matches_scipy_reference(population, pooling, likelihood):
    spec = build_model(pooling, likelihood, None, population)
    rng = np.random.default_rng(3)
    for _ in range(10):
        u = rng.normal(scale=0.7, size=spec.dim)
        assert log_posterior(spec, u) == pytest.approx(reference_logp(spec, u), rel=1e-10, abs=1e-9)


def central_difference(spec, u, h=1e-6):
    g = np.empty(spec.dim)
    for i in range(spec.dim):
        e = np.zeros(spec.dim)
        e[i] = h * max(1.0, abs(u[i]))
        g[i] = (log_posterior(spec, u + e) - log_posterior(spec, u - e)) / (2 * e[i])
    return g


@pytest.mark.parametrize("pooling,likelihood", VARIANTS)
def test_gradient_matches_finite_differences(population, pooling, likelihood):
    spec = build_model(pooling, likelihood, None, population)
    rng = np.random.default_rng(5)
    for _ in range(5):
        u = rng.normal(scale=0.5, size=spec.dim)
        np.testing.assert_allclose(grad_log_posterior(spec, u), central_difference(spec, u),
                                   rtol=1e-6, atol=1e-5)


@pytest.mark.parametrize("pooling,size", [("partial", 25), ("none", 21), ("complete", 3)])
def test_layout_size(population, pooling, size):
    spec = build_model(pooling, "cauchy", None, population)
    assert spec.dim == size
    assert spec.names[-4:] == (["mu_m", "sigma_m", "mu_c", "sigma_c"] if pooling == "partial"
                               else spec.names[-4:])


def test_partial_layout_order(population):
    spec = build_model("partial", "cauchy", None, population)
    assert spec.names[:2] == ["m[1]", "m[2]"]
    assert spec.names[7] == "c[1]" and spec.names[14] == "gamma[1]"
    assert spec.tool_params(3) == ("m[3]", "c[3]", "gamma[3]")
    gspec = build_model("complete", "gaussian", None, population)
    assert gspec.tool_params(3) == ("m", "c", "sigma")


def test_only_revealed_observations_enter(population):
    masks = {t.tool_id: [i < 2 for i in range(len(t))] for t in population.tools}
    full = build_model("partial", "cauchy", None, population)
    part = build_model("partial", "cauchy", None, population.with_masks(masks))
    assert part.args[0].size == 14 < full.args[0].size
    u = np.zeros(full.dim)
    assert log_posterior(part, u) == pytest.approx(reference_logp(part, u), rel=1e-10)


@given(st.lists(st.floats(-3, 3), min_size=25, max_size=25))
def test_constrain_roundtrip(population, vals):
    spec = build_model("partial", "cauchy", None, population)
    u = np.array(vals)
    back = unconstrain(spec, constrain(spec, u))
    np.testing.assert_allclose(back, u, rtol=1e-9, atol=1e-9)


@given(st.lists(st.floats(-20, 20), min_size=25, max_size=25))
def test_positive_parameters_stay_positive(population, vals):
    spec = build_model("partial", "cauchy", None, population)
    p = constrain(spec, np.array(vals))
    for par in spec.layout:
        if par.positive:
            assert p[par.name] > 0


def test_priors_validation_and_roundtrip():
    with pytest.raises(ModelError):
        CauchyHierPriors(s_sigma_m=0)
    with pytest.raises(ModelError):
        GaussianHierPriors(a=-1)
    with pytest.raises(ModelError, match="unknown prior"):
        priors_from_dict("cauchy", {"bogus": 1})
    g = GaussianHierPriors(m_alpha=(0.4, 0.01), s_alpha=(0.5, 0.1))
    assert priors_from_dict("gaussian", priors_to_dict(g)) == g


def test_build_model_errors(population):
    with pytest.raises(ModelError, match="does not match"):
        build_model("partial", "gaussian", CauchyHierPriors(), population)
    hidden = population.with_masks({t.tool_id: [False] * len(t) for t in population.tools})
    with pytest.raises(ModelError, match="no revealed"):
        build_model("partial", "cauchy", None, hidden)
    with pytest.raises(ValueError):
        build_model("pooled", "cauchy", None, population)


def test_non_finite_density_is_an_error(population):
    spec = build_model("complete", "cauchy", None, population)
    with pytest.raises(ModelError):
        log_posterior(spec, np.array([0.0, 0.0, 1e6]))
