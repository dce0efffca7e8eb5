"""No-U-turn Hamiltonian Monte Carlo with dual-averaging step-size adaptation.

The trajectory work runs in compiled kernels (see ``_kernels``); this module
handles configuration, initialization, chain fan-out and diagnostics.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Callable, Mapping, NamedTuple

import numpy as np
from scipy import stats

from . import _kernels

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    pass


class InitializationError(SamplerError):
    pass


class InferenceError(SamplerError):
    def __init__(self, message: str, diagnostics: "Diagnostics | None" = None):
        super().__init__(message)
        self.diagnostics = diagnostics


class DiagnosticsError(ValueError):
    pass


@dataclass(frozen=True)
class SamplerConfig:
    warmup: int = 1000
    draws: int = 2000
    chains: int = 4
    target_accept: float = 0.8
    max_tree_depth: int = 10
    seed: int = 0
    init_jitter: float = 1.0
    algorithm: str = "nuts"  # or "hmc" (fixed trajectory length, for debugging)
    n_leapfrog: int = 10
    adapt_metric: bool = True
    threads: int = 1

    def __post_init__(self):
        for name in ("warmup", "draws", "chains", "n_leapfrog", "threads"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"SamplerConfig.{name} must be >= 1")
        if not 0.0 < self.target_accept < 1.0:
            raise ValueError("SamplerConfig.target_accept must lie in (0, 1)")
        if not 1 <= self.max_tree_depth <= _kernels.MAX_DEPTH_CAP:
            raise ValueError(f"SamplerConfig.max_tree_depth must lie in [1, {_kernels.MAX_DEPTH_CAP}]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValueError("SamplerConfig.seed must be an unsigned 64-bit integer")
        if not self.init_jitter >= 0:
            raise ValueError("SamplerConfig.init_jitter must be >= 0")
        if self.algorithm not in ("nuts", "hmc"):
            raise ValueError("SamplerConfig.algorithm must be 'nuts' or 'hmc'")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "SamplerConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValueError(f"unknown sampler field(s): {sorted(unknown)}")
        return cls(**doc)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Diagnostics:
    mean_accept: float
    divergences: int
    rhat: dict[str, float]
    ess_bulk: dict[str, float]
    degenerate: tuple[str, ...] = ()
    tree_depth_saturations: int = 0
    step_size: tuple[float, ...] = ()

    @property
    def max_rhat(self) -> float:
        vals = [v for v in self.rhat.values() if math.isfinite(v)]
        return max(vals) if vals else math.nan

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class PosteriorSamples:
    """Post-warmup draws in constrained space, shaped ``(chains, draws, params)``.

    ``tool_params`` maps tool id to the (slope, intercept, noise) column
    names; ``noise_family`` says how to simulate observation noise.
    """

    draws: np.ndarray
    names: tuple[str, ...]
    divergent: np.ndarray
    tool_params: Mapping[int, tuple[str, str, str]] = field(default_factory=dict)
    noise_family: str = "cauchy"

    def __post_init__(self):
        if self.draws.ndim != 3 or self.draws.shape[2] != len(self.names):
            raise ValueError("draws must be (chains, draws, params) matching names")
        if self.divergent.shape != self.draws.shape[:2]:
            raise ValueError("divergent flags must be (chains, draws)")

    @property
    def n_chains(self) -> int:
        return self.draws.shape[0]

    @property
    def n_draws(self) -> int:
        """Total retained draws over all chains."""
        return self.draws.shape[0] * self.draws.shape[1]

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(f"unknown parameter {name!r}") from None

    def flat(self, name: str) -> np.ndarray:
        return self.draws[:, :, self.index(name)].reshape(-1)

    def tool_draws(self, tool_id: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if tool_id not in self.tool_params:
            raise KeyError(f"unknown tool id {tool_id}")
        m, c, s = self.tool_params[tool_id]
        return self.flat(m), self.flat(c), self.flat(s)

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["chain", "iter", *self.names])
        for ch in range(self.draws.shape[0]):
            for it in range(self.draws.shape[1]):
                w.writerow([ch, it, *(repr(float(v)) for v in self.draws[ch, it])])
        return buf.getvalue()

    def summary(self, diagnostics: Diagnostics | None = None) -> dict:
        out = {}
        for i, name in enumerate(self.names):
            v = self.draws[:, :, i].reshape(-1)
            q05, q95 = np.quantile(v, [0.05, 0.95])
            entry = {"mean": float(v.mean()), "sd": float(v.std(ddof=1)) if v.size > 1 else 0.0,
                     "q05": float(q05), "q95": float(q95)}
            if diagnostics is not None:
                entry["rhat"] = diagnostics.rhat.get(name, math.nan)
                entry["ess_bulk"] = diagnostics.ess_bulk.get(name, math.nan)
            out[name] = entry
        return out

    def summary_json(self, diagnostics: Diagnostics | None = None) -> str:
        return json.dumps(self.summary(diagnostics), indent=2, sort_keys=False, allow_nan=True)


def posterior_from_csv(text: str, tool_params=None, noise_family: str = "cauchy") -> PosteriorSamples:
    rows = list(csv.reader(io.StringIO(text)))
    header = rows[0]
    if header[:2] != ["chain", "iter"]:
        raise ValueError("posterior CSV must start with chain,iter columns")
    data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    chains = data[:, 0].astype(int)
    n_chains = chains.max() + 1
    per = data.shape[0] // n_chains
    draws = data[:, 2:].reshape(n_chains, per, -1)
    return PosteriorSamples(draws, tuple(header[2:]), np.zeros((n_chains, per), dtype=bool),
                            tool_params or {}, noise_family)


# ---------------------------------------------------------------------------
# integrator and adaptation primitives


class PhasePoint(NamedTuple):
    position: np.ndarray
    momentum: np.ndarray
    divergent: bool = False


def leapfrog(state: PhasePoint, step: float, grad: Callable[[np.ndarray], np.ndarray],
             inv_metric=None) -> PhasePoint:
    """One velocity-Verlet step of Hamiltonian dynamics.

    ``grad`` returns the gradient of the log density (not the potential).
    """
    q = np.asarray(state.position, dtype=float)
    p = np.asarray(state.momentum, dtype=float)
    inv = np.ones_like(q) if inv_metric is None else np.asarray(inv_metric, dtype=float)
    p_half = p + 0.5 * step * np.asarray(grad(q))
    q_new = q + step * inv * p_half
    g_new = np.asarray(grad(q_new))
    p_new = p_half + 0.5 * step * g_new
    bad = not (np.all(np.isfinite(q_new)) and np.all(np.isfinite(p_new)))
    return PhasePoint(q_new, p_new, bad)


@dataclass(frozen=True)
class DualAveragingState:
    log_step: float
    log_step_bar: float = 0.0
    h_bar: float = 0.0
    mu: float = 0.0
    count: int = 0
    target_accept: float = 0.8
    gamma: float = 0.05
    t0: float = 10.0
    kappa: float = 0.75

    @classmethod
    def start(cls, step_size: float, target_accept: float = 0.8) -> "DualAveragingState":
        return cls(math.log(step_size), 0.0, 0.0, math.log(10.0 * step_size), 0, target_accept)

    @property
    def step_size(self) -> float:
        return math.exp(self.log_step)

    @property
    def final_step_size(self) -> float:
        """Averaged iterate; the step size frozen once warmup ends."""
        return math.exp(self.log_step_bar)


def dual_average_update(state: DualAveragingState, accept_stat: float) -> DualAveragingState:
    if not 0.0 <= accept_stat <= 1.0:
        raise ValueError(f"accept_stat must lie in [0, 1], got {accept_stat}")
    arr = np.array([state.log_step, state.log_step_bar, state.h_bar, state.mu, float(state.count)])
    _kernels.dual_average_step(arr, float(accept_stat), state.target_accept, state.gamma,
                               state.t0, state.kappa)
    return DualAveragingState(float(arr[0]), float(arr[1]), float(arr[2]), float(arr[3]),
                              int(arr[4]), state.target_accept, state.gamma, state.t0, state.kappa)


# ---------------------------------------------------------------------------
# diagnostics


def _split_chains(x: np.ndarray) -> np.ndarray:
    n = x.shape[1]
    half = n // 2
    return np.concatenate([x[:, :half], x[:, n - half:]], axis=0)


def _rank_normalize(x: np.ndarray) -> np.ndarray:
    r = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((r - 0.375) / (x.size + 0.25))


def _basic_rhat(x: np.ndarray) -> float:
    n = x.shape[1]
    w = np.mean(np.var(x, axis=1, ddof=1))
    b = n * np.var(np.mean(x, axis=1), ddof=1)
    var_hat = (n - 1) / n * w + b / n
    return float(np.sqrt(var_hat / w))


def _autocov(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    m = 1 << int(np.ceil(np.log2(2 * n)))
    xc = x - x.mean(axis=-1, keepdims=True)
    f = np.fft.rfft(xc, n=m, axis=-1)
    return np.fft.irfft(f * np.conj(f), n=m, axis=-1)[..., :n] / n


def _ess(x: np.ndarray) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence."""
    m, n = x.shape
    if n < 4:
        return math.nan
    acov = _autocov(x)
    chain_mean = x.mean(axis=1)
    mean_var = np.mean(acov[:, 0]) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(chain_mean, ddof=1)
    rho = np.zeros(n)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if rho_even + rho_odd >= 0.0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    total = m * n
    tau = -1.0 + 2.0 * np.sum(rho[: max_t + 1]) + rho[max_t + 1]
    tau = max(tau, 1.0 / np.log10(total))
    return float(total / tau)


def split_rhat(x: np.ndarray) -> float:
    """Rank-normalized split R-hat (max of bulk and folded variants).

    ``x`` is ``(chains, draws)``. Returns NaN for constant input.
    """
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0 or not np.all(np.isfinite(x)):
        return math.nan
    s = _split_chains(x)
    bulk = _basic_rhat(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _basic_rhat(_rank_normalize(folded)) if np.ptp(folded) > 0 else bulk
    return max(bulk, tail)


def ess_bulk(x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if np.ptp(x) == 0 or not np.all(np.isfinite(x)):
        return math.nan
    return _ess(_rank_normalize(_split_chains(x)))


def diagnostics(samples: PosteriorSamples, accept: np.ndarray | None = None,
                tree_depth_saturations: int = 0, step_size=()) -> Diagnostics:
    c, d, _ = samples.draws.shape
    if c < 2 or d < 4:
        raise DiagnosticsError(f"need >= 2 chains and >= 4 draws each, got {c} x {d}")
    rhat, ess, degenerate = {}, {}, []
    for i, name in enumerate(samples.names):
        col = samples.draws[:, :, i]
        rhat[name] = split_rhat(col)
        ess[name] = ess_bulk(col)
        if math.isnan(rhat[name]):
            degenerate.append(name)
    mean_accept = float(np.mean(accept)) if accept is not None else math.nan
    return Diagnostics(mean_accept, int(samples.divergent.sum()), rhat, ess, tuple(degenerate),
                       int(tree_depth_saturations), tuple(float(s) for s in step_size))


# ---------------------------------------------------------------------------
# driver


def initial_point(target, seed: int, chain: int, jitter: float, tries: int = 100) -> np.ndarray:
    rng = np.random.default_rng([int(seed), int(chain), 0x1A17])
    for _ in range(tries):
        u = np.ascontiguousarray(rng.uniform(-jitter, jitter, target.dim))
        lp, g = target.logp_fn(u, target.args)
        if math.isfinite(lp) and np.all(np.isfinite(g)):
            return u
    raise InitializationError(f"no finite log density found in {tries} initial draws (chain {chain})")


def _run_one(target, config: SamplerConfig, chain: int):
    u0 = initial_point(target, config.seed, chain, config.init_jitter)
    return _kernels.run_chain(target.logp_fn, target.args, u0, int(config.warmup), int(config.draws),
                              np.uint64(config.seed), chain, float(config.target_accept),
                              int(config.max_tree_depth), config.algorithm == "nuts",
                              int(config.n_leapfrog), bool(config.adapt_metric))


def sample(target, config: SamplerConfig | None = None) -> tuple[PosteriorSamples, Diagnostics]:
    """Draw from ``target`` (a ``ModelSpec`` or reference target).

    Each chain depends only on ``(config.seed, chain index)``.
    """
    config = config or SamplerConfig()
    chains = range(config.chains)
    if config.threads > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            results = list(pool.map(lambda ch: _run_one(target, config, ch), chains))
    else:
        results = [_run_one(target, config, ch) for ch in chains]

    w = config.warmup
    U = np.stack([r[0] for r in results])
    draws = target.constrain_array(U)
    divergent = np.stack([r[2][w:] for r in results])
    accept = np.stack([r[1][w:] for r in results])
    saturated = int(sum(np.sum(r[3][w:] >= config.max_tree_depth) for r in results))
    steps = [float(r[5]) for r in results]
    tool_params = {}
    if hasattr(target, "tool_params"):
        tool_params = {k: target.tool_params(k) for k in target.dataset.tool_ids}
    family = getattr(getattr(target, "likelihood", None), "value", "gaussian")
    samples = PosteriorSamples(draws, tuple(target.names), divergent, tool_params, family)
    if config.algorithm == "nuts" and saturated:
        log.warning("%d transitions hit max_tree_depth=%d", saturated, config.max_tree_depth)

    try:
        diag = diagnostics(samples, accept, saturated, steps)
    except DiagnosticsError:
        nan = {n: math.nan for n in samples.names}
        diag = Diagnostics(float(np.mean(accept)), int(divergent.sum()), nan, dict(nan), (),
                           saturated, tuple(steps))

    for ch in range(config.chains):
        if divergent[ch].all():
            raise InferenceError(f"chain {ch}: every retained transition diverged", diag)
    return samples, diag
