"""Forecasts and risk quantities derived from posterior draws."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Mapping

import numpy as np

from .data import PopulationDataset
from .sampler import PosteriorSamples


class ExceedanceMode(str, Enum):
    LATENT = "latent"
    WITH_NOISE = "noise"


@dataclass(frozen=True)
class Forecast:
    tool_id: int
    x_grid: np.ndarray
    latent_draws: np.ndarray
    predictive_draws: np.ndarray | None = None

    def to_csv_string(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tool_id", "x", "mean", "q05", "q50", "q95"])
        src = self.latent_draws if self.predictive_draws is None else self.predictive_draws
        q = np.quantile(src, [0.05, 0.5, 0.95], axis=0)
        mean = self.latent_draws.mean(axis=0)
        for j, x in enumerate(self.x_grid):
            w.writerow([self.tool_id, repr(float(x)), repr(float(mean[j])),
                        repr(float(q[0, j])), repr(float(q[1, j])), repr(float(q[2, j]))])
        return buf.getvalue()


@dataclass(frozen=True)
class ExceedanceEstimate:
    probability: float
    mode: ExceedanceMode
    x_eval: float
    n_draws: int


@dataclass(frozen=True)
class FailureTimeDistribution:
    tool_id: int
    t_f_draws: np.ndarray


def _noise(samples: PosteriorSamples, scale: np.ndarray, shape, rng) -> np.ndarray:
    z = rng.standard_cauchy(shape) if samples.noise_family == "cauchy" else rng.standard_normal(shape)
    return z * scale[:, None]


def forecast(samples: PosteriorSamples, tool: int, x_grid, include_noise: bool = False,
             seed: int = 0) -> Forecast:
    x = np.atleast_1d(np.asarray(x_grid, dtype=float))
    if x.size == 0:
        raise ValueError("x_grid is empty")
    m, c, s = samples.tool_draws(tool)
    latent = m[:, None] * x[None, :] + c[:, None]
    pred = None
    if include_noise:
        rng = np.random.default_rng([int(seed), int(tool), 0x0153])
        pred = latent + _noise(samples, s, latent.shape, rng)
    return Forecast(tool, x, latent, pred)


def exceedance_probability(samples: PosteriorSamples, tool: int, x_eval: float, s_crit: float,
                           mode: ExceedanceMode | str = ExceedanceMode.LATENT,
                           seed: int = 0) -> ExceedanceEstimate:
    """Fraction of draws whose forecast at ``x_eval`` exceeds ``s_crit``."""
    if not x_eval >= 0:
        raise ValueError(f"x_eval must be >= 0, got {x_eval}")
    mode = ExceedanceMode(mode)
    fc = forecast(samples, tool, [x_eval], include_noise=mode is ExceedanceMode.WITH_NOISE, seed=seed)
    vals = fc.latent_draws[:, 0] if mode is ExceedanceMode.LATENT else fc.predictive_draws[:, 0]
    n = vals.size
    return ExceedanceEstimate(int(np.count_nonzero(vals > s_crit)) / n, mode, float(x_eval), n)


def failure_time(samples: PosteriorSamples, tool: int, s_crit: float) -> FailureTimeDistribution:
    """Per-draw sliding distance at which the latent line first reaches ``s_crit``.

    Lines already at or above the threshold fail at 0; flat or falling lines
    below it never fail (``inf``).
    """
    m, c, _ = samples.tool_draws(tool)
    t_f = np.full(m.shape, np.inf)
    rising = m > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t_f[rising] = (s_crit - c[rising]) / m[rising]
    t_f[c >= s_crit] = 0.0
    return FailureTimeDistribution(tool, t_f)


def prob_failure_before(ftd: FailureTimeDistribution, t: float) -> float:
    if not t >= 0:
        raise ValueError(f"t must be >= 0, got {t}")
    return int(np.count_nonzero(ftd.t_f_draws < t)) / ftd.t_f_draws.size


def posterior_mean_prediction(samples: PosteriorSamples, tool: int, x) -> np.ndarray:
    return forecast(samples, tool, x).latent_draws.mean(axis=0)


@dataclass(frozen=True)
class MSEReport:
    per_tool: Mapping[int, float]
    total: float


def total_mse(samples: PosteriorSamples, dataset: PopulationDataset,
              heldout: Mapping[int, np.ndarray]) -> MSEReport:
    """Held-out squared error of the posterior-mean line.

    ``heldout`` maps tool id to a boolean mask over that tool's observations.
    Per-tool values are means; ``total`` is their sum.
    """
    per_tool = {}
    for tool_id, mask in heldout.items():
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            continue
        series = dataset.tool(tool_id)
        pred = posterior_mean_prediction(samples, tool_id, series.x[mask])
        per_tool[tool_id] = float(np.mean((pred - series.y[mask]) ** 2))
    if not per_tool:
        raise ValueError("held-out set is empty")
    return MSEReport(per_tool, math.fsum(per_tool.values()))
