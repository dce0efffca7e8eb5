"""Closed-form reference targets for validating the sampler.

They expose the same surface the sampler reads from a ``ModelSpec``
(``logp_fn``, ``args``, ``names``, ``dim``, ``constrain_array``) and carry
their analytic posterior moments.
"""

from __future__ import annotations

import numpy as np

from . import _kernels


class DiagonalGaussianTarget:
    def __init__(self, mean, sd):
        self.mean = np.ascontiguousarray(mean, dtype=float)
        self.sd = np.ascontiguousarray(sd, dtype=float)
        if self.mean.shape != self.sd.shape or np.any(self.sd <= 0):
            raise ValueError("mean and sd must match in shape and sd must be > 0")

    @classmethod
    def standard(cls, dim: int) -> "DiagonalGaussianTarget":
        return cls(np.zeros(dim), np.ones(dim))

    logp_fn = staticmethod(_kernels.diag_gaussian_logp_grad)

    @property
    def args(self):
        return (self.mean, self.sd)

    @property
    def dim(self) -> int:
        return self.mean.size

    @property
    def names(self) -> list[str]:
        return [f"x[{i}]" for i in range(self.dim)]

    def constrain_array(self, U):
        return np.asarray(U, dtype=float)


class GaussianMeanTarget:
    """Posterior of a mean under known-sd Gaussian noise and a Normal prior."""

    def __init__(self, y, noise_sd: float = 1.0, prior_mean: float = 0.0, prior_sd: float = 10.0):
        self.y = np.ascontiguousarray(y, dtype=float)
        self.noise_sd = float(noise_sd)
        self.prior_mean = float(prior_mean)
        self.prior_sd = float(prior_sd)

    logp_fn = staticmethod(_kernels.gaussian_mean_logp_grad)

    @property
    def args(self):
        return (self.y, self.noise_sd, self.prior_mean, self.prior_sd)

    dim = 1
    names = ["mu"]

    def constrain_array(self, U):
        return np.asarray(U, dtype=float)

    def posterior(self) -> tuple[float, float]:
        prec = self.y.size / self.noise_sd ** 2 + 1.0 / self.prior_sd ** 2
        var = 1.0 / prec
        mean = var * (self.y.sum() / self.noise_sd ** 2 + self.prior_mean / self.prior_sd ** 2)
        return mean, float(np.sqrt(var))
