"""Straight-line population models as differentiable log posteriors.

Three pooling variants (complete, none, partial) crossed with two
likelihood families (Gaussian, Cauchy). Every model is evaluated on an
unconstrained parameter vector; positive parameters live on the log scale
and, under partial pooling, slopes and intercepts are stored as
standardized offsets from the population mean.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from enum import Enum
from typing import Mapping

import numpy as np

from . import _kernels
from .data import PopulationDataset


class ModelError(ValueError):
    pass


class Pooling(str, Enum):
    COMPLETE = "complete"
    NONE = "none"
    PARTIAL = "partial"


class Likelihood(str, Enum):
    GAUSSIAN = "gaussian"
    CAUCHY = "cauchy"


_POOLING_CODE = {Pooling.COMPLETE: _kernels.COMPLETE, Pooling.NONE: _kernels.NONE,
                 Pooling.PARTIAL: _kernels.PARTIAL}
_LIK_CODE = {Likelihood.GAUSSIAN: _kernels.GAUSSIAN, Likelihood.CAUCHY: _kernels.CAUCHY}


def _check_positive(obj, names):
    for n in names:
        v = getattr(obj, n)
        for item in np.atleast_1d(v):
            if not (math.isfinite(item) and item > 0):
                raise ModelError(f"{type(obj).__name__}.{n} must be > 0, got {v}")


@dataclass(frozen=True)
class CauchyHierPriors:
    """Priors for the Cauchy-likelihood hierarchy.

    Slope mean ~ Gamma(shape, scale); slope sd, intercept sd and each tool's
    noise scale ~ Half-Cauchy; intercept mean ~ Normal.
    """

    gamma_shape: float = 1.0
    gamma_scale: float = 1.0
    s_sigma_m: float = 25.0
    mu_c_mean: float = 0.0
    mu_c_sd: float = 1.0
    s_sigma_c: float = 25.0
    gamma_noise_scale: float = 25.0

    def __post_init__(self):
        _check_positive(self, ["gamma_shape", "gamma_scale", "s_sigma_m", "mu_c_sd",
                               "s_sigma_c", "gamma_noise_scale"])
        if not math.isfinite(self.mu_c_mean):
            raise ModelError("mu_c_mean must be finite")

    family = Likelihood.CAUCHY

    def vector(self) -> np.ndarray:
        return np.array([self.gamma_shape, self.gamma_scale, self.s_sigma_m, self.mu_c_mean,
                         self.mu_c_sd, self.s_sigma_c, self.gamma_noise_scale], dtype=float)

    def fixed_hyper(self) -> tuple[float, float, float, float]:
        # Half-Cauchy has no mean; its median (the scale) stands in.
        return (self.gamma_shape * self.gamma_scale, self.s_sigma_m, self.mu_c_mean, self.s_sigma_c)


@dataclass(frozen=True)
class GaussianHierPriors:
    """Priors for the Gaussian-likelihood hierarchy.

    Weights are ordered (intercept, slope). Population means ~ Normal(m_alpha,
    s_alpha), population sds ~ Inverse-Gamma(a, b), noise sd ~ Half-Cauchy.
    """

    m_alpha: tuple[float, float] = (0.0, 0.0)
    s_alpha: tuple[float, float] = (1.0, 1.0)
    a: float = 3.0
    b: float = 2.0
    noise_scale: float = 25.0

    def __post_init__(self):
        object.__setattr__(self, "m_alpha", tuple(float(v) for v in self.m_alpha))
        object.__setattr__(self, "s_alpha", tuple(float(v) for v in self.s_alpha))
        if len(self.m_alpha) != 2 or len(self.s_alpha) != 2:
            raise ModelError("m_alpha and s_alpha must have two entries (intercept, slope)")
        _check_positive(self, ["s_alpha", "a", "b", "noise_scale"])

    family = Likelihood.GAUSSIAN

    def vector(self) -> np.ndarray:
        return np.array([self.m_alpha[0], self.m_alpha[1], self.s_alpha[0], self.s_alpha[1],
                         self.a, self.b, self.noise_scale], dtype=float)

    def fixed_hyper(self) -> tuple[float, float, float, float]:
        # inverse-gamma mean when it exists, otherwise its mode
        sd = self.b / (self.a - 1.0) if self.a > 1.0 else self.b / (self.a + 1.0)
        return (self.m_alpha[1], sd, self.m_alpha[0], sd)


PRIOR_TYPES = {Likelihood.CAUCHY: CauchyHierPriors, Likelihood.GAUSSIAN: GaussianHierPriors}


def default_priors(likelihood: Likelihood | str):
    return PRIOR_TYPES[Likelihood(likelihood)]()


def priors_from_dict(likelihood: Likelihood | str, doc: Mapping) -> CauchyHierPriors | GaussianHierPriors:
    cls = PRIOR_TYPES[Likelihood(likelihood)]
    known = {f.name for f in fields(cls)}
    unknown = set(doc) - known
    if unknown:
        raise ModelError(f"unknown prior field(s) for {cls.__name__}: {sorted(unknown)}")
    return cls(**{k: (tuple(v) if isinstance(v, list) else v) for k, v in doc.items()})


def priors_to_dict(priors) -> dict:
    return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(priors).items()}


def load_priors_json(likelihood, text: str):
    return priors_from_dict(likelihood, json.loads(text))


@dataclass(frozen=True)
class Param:
    name: str
    transform: str  # identity | log | offset_m | offset_c

    @property
    def positive(self) -> bool:
        return self.transform == "log"


@dataclass(frozen=True)
class ModelSpec:
    pooling: Pooling
    likelihood: Likelihood
    priors: CauchyHierPriors | GaussianHierPriors
    dataset: PopulationDataset
    layout: tuple[Param, ...]
    fixed_hyper: tuple[float, float, float, float]
    _args: tuple = field(repr=False, compare=False)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.layout]

    @property
    def dim(self) -> int:
        return len(self.layout)

    @property
    def positive_mask(self) -> np.ndarray:
        return np.array([p.positive for p in self.layout])

    @property
    def noise_name(self) -> str:
        return "gamma" if self.likelihood is Likelihood.CAUCHY else "sigma"

    @property
    def n_groups(self) -> int:
        return 1 if self.pooling is Pooling.COMPLETE else len(self.dataset.tools)

    def tool_params(self, tool_id: int) -> tuple[str, str, str]:
        """Layout names of (slope, intercept, noise) governing ``tool_id``."""
        if tool_id not in self.dataset.tool_ids:
            raise KeyError(f"unknown tool id {tool_id}")
        if self.pooling is Pooling.COMPLETE:
            return "m", "c", self.noise_name
        return f"m[{tool_id}]", f"c[{tool_id}]", f"{self.noise_name}[{tool_id}]"

    # the sampler consumes these two
    @property
    def logp_fn(self):
        return _kernels.model_logp_grad

    @property
    def args(self) -> tuple:
        return self._args

    def constrain_array(self, U) -> np.ndarray:
        return constrain_array(self, U)


def _layout(pooling: Pooling, likelihood: Likelihood, tool_ids) -> tuple[Param, ...]:
    noise = "gamma" if likelihood is Likelihood.CAUCHY else "sigma"
    if pooling is Pooling.COMPLETE:
        return (Param("m", "identity"), Param("c", "identity"), Param(noise, "log"))
    slope_t, icpt_t = ("offset_m", "offset_c") if pooling is Pooling.PARTIAL else ("identity", "identity")
    out = [Param(f"m[{k}]", slope_t) for k in tool_ids]
    out += [Param(f"c[{k}]", icpt_t) for k in tool_ids]
    out += [Param(f"{noise}[{k}]", "log") for k in tool_ids]
    if pooling is Pooling.PARTIAL:
        out += [Param("mu_m", "log" if likelihood is Likelihood.CAUCHY else "identity"),
                Param("sigma_m", "log"), Param("mu_c", "identity"), Param("sigma_c", "log")]
    return tuple(out)


def build_model(pooling: Pooling | str, likelihood: Likelihood | str, priors, data: PopulationDataset,
                fixed_hyper=None) -> ModelSpec:
    """Assemble a model over the revealed observations of ``data``.

    ``fixed_hyper`` = (mu_m, sigma_m, mu_c, sigma_c) sets the group prior used
    by the complete- and no-pooling variants; it defaults to the priors'
    central values.
    """
    pooling = Pooling(pooling)
    likelihood = Likelihood(likelihood)
    if priors is None:
        priors = default_priors(likelihood)
    if not isinstance(priors, PRIOR_TYPES[likelihood]):
        raise ModelError(f"{type(priors).__name__} does not match the {likelihood.value} likelihood")
    if data is None or data.n_revealed == 0:
        raise ModelError("dataset has no revealed observations")
    fixed = tuple(float(v) for v in (fixed_hyper if fixed_hyper is not None else priors.fixed_hyper()))
    if len(fixed) != 4 or fixed[1] <= 0 or fixed[3] <= 0:
        raise ModelError("fixed_hyper must be (mu_m, sigma_m > 0, mu_c, sigma_c > 0)")
    layout = _layout(pooling, likelihood, data.tool_ids)
    x, y, grp = data.arrays(revealed_only=True)
    G = 1 if pooling is Pooling.COMPLETE else len(data.tools)
    if pooling is Pooling.COMPLETE:
        grp = np.zeros_like(grp)
    args = (np.ascontiguousarray(x), np.ascontiguousarray(y), np.ascontiguousarray(grp, dtype=np.int64),
            G, _POOLING_CODE[pooling], _LIK_CODE[likelihood], priors.vector(),
            np.array(fixed, dtype=float), np.ones(G, dtype=np.int64))
    return ModelSpec(pooling, likelihood, priors, data, layout, fixed, args)


def _check_u(spec: ModelSpec, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != spec.dim:
        raise ModelError(f"parameter vector has length {u.shape[-1]}, layout needs {spec.dim}")
    return u


def constrain_array(spec: ModelSpec, U) -> np.ndarray:
    """Map unconstrained vectors (``(..., dim)``) to constrained values in layout order."""
    U = _check_u(spec, U)
    out = np.empty_like(U)
    tr = [p.transform for p in spec.layout]
    idx = {p.name: i for i, p in enumerate(spec.layout)}
    with np.errstate(over="ignore"):
        for i, t in enumerate(tr):
            if t in ("identity", "offset_m", "offset_c"):
                out[..., i] = U[..., i]
            else:
                out[..., i] = np.exp(U[..., i])
        if spec.pooling is Pooling.PARTIAL:
            mu_m, sig_m = out[..., idx["mu_m"]], out[..., idx["sigma_m"]]
            mu_c, sig_c = out[..., idx["mu_c"]], out[..., idx["sigma_c"]]
            for i, t in enumerate(tr):
                if t == "offset_m":
                    out[..., i] = mu_m + sig_m * U[..., i]
                elif t == "offset_c":
                    out[..., i] = mu_c + sig_c * U[..., i]
    if not np.all(np.isfinite(out)):
        raise ModelError("constrained parameters are not finite")
    return out


def constrain(spec: ModelSpec, u) -> dict[str, float]:
    vals = constrain_array(spec, np.asarray(u, dtype=float).reshape(-1))
    return {p.name: float(v) for p, v in zip(spec.layout, vals)}


def unconstrain(spec: ModelSpec, params: Mapping[str, float]) -> np.ndarray:
    missing = [n for n in spec.names if n not in params]
    if missing:
        raise ModelError(f"missing parameters: {missing}")
    u = np.empty(spec.dim)
    for i, p in enumerate(spec.layout):
        v = float(params[p.name])
        if p.transform == "log":
            if not v > 0:
                raise ModelError(f"{p.name} must be > 0, got {v}")
            u[i] = math.log(v)
        elif p.transform == "offset_m":
            u[i] = (v - params["mu_m"]) / params["sigma_m"]
        elif p.transform == "offset_c":
            u[i] = (v - params["mu_c"]) / params["sigma_c"]
        else:
            u[i] = v
    return u


def log_posterior_and_grad(spec: ModelSpec, u) -> tuple[float, np.ndarray]:
    u = np.ascontiguousarray(_check_u(spec, u), dtype=float)
    lp, grad = _kernels.model_logp_grad(u, spec.args)
    if not math.isfinite(lp):
        raise ModelError(f"log posterior is not finite ({lp})")
    if not np.all(np.isfinite(grad)):
        raise ModelError("gradient has non-finite components")
    return lp, grad


def log_posterior(spec: ModelSpec, u) -> float:
    """Log joint density of revealed data and parameters, in unconstrained
    coordinates (includes the log-Jacobian of the constraining map)."""
    return log_posterior_and_grad(spec, u)[0]


def grad_log_posterior(spec: ModelSpec, u) -> np.ndarray:
    return log_posterior_and_grad(spec, u)[1]
