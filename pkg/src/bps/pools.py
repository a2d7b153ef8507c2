"""Baseline density-combination methods: sequential BMA and equal-weight
arithmetic (linear) and geometric (logarithmic) opinion pools."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.integrate import simpson

from .densities import ForecastDensity


@dataclass(frozen=True)
class BmaState:
    """Model probabilities over the J agents."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs",
                           np.asarray(self.probs, dtype=float).ravel())
        if np.any(self.probs < 0):
            raise ValueError("model probabilities must be non-negative")
        if abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("model probabilities must sum to one")

    @staticmethod
    def uniform(n: int) -> "BmaState":
        return BmaState(np.full(n, 1.0 / n))


def bma_update(state: BmaState, density_values: np.ndarray) -> BmaState:
    """One Bayes update of model probabilities from predictive density
    values at the realized outcome."""
    v = np.asarray(density_values, dtype=float).ravel()
    if v.shape != state.probs.shape:
        raise ValueError("density values must match the probability vector")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("density values must be finite and non-negative")
    w = state.probs * v
    total = w.sum()
    if total <= 0:
        raise ValueError("all model likelihoods are zero; BMA update undefined")
    return BmaState(w / total)


def _variance_proxy(d: ForecastDensity) -> float:
    var = d.variance()
    if np.isfinite(var):
        return var
    # heavy-tailed T with dof <= 2: bounded stand-in for windowing only
    return float(d.scale * 25.0)


class MixturePool:
    """Finite mixture of forecast densities with fixed weights."""

    def __init__(self, densities: Sequence[ForecastDensity],
                 weights: np.ndarray):
        if len(densities) == 0:
            raise ValueError("need at least one density")
        weights = np.asarray(weights, dtype=float).ravel()
        if weights.shape[0] != len(densities):
            raise ValueError("one weight per density required")
        if np.any(weights < 0) or weights.sum() <= 0:
            raise ValueError("weights must be non-negative and not all zero")
        self.densities = list(densities)
        self.weights = weights / weights.sum()

    def pdf(self, y):
        vals = [w * d.pdf(y) for w, d in zip(self.weights, self.densities)]
        return np.sum(vals, axis=0)

    def logpdf(self, y):
        return np.log(self.pdf(y))

    def mean(self) -> float:
        return float(sum(w * d.mean()
                         for w, d in zip(self.weights, self.densities)))

    def variance(self) -> float:
        mu = self.mean()
        second = sum(w * (d.variance() + d.mean() ** 2)
                     for w, d in zip(self.weights, self.densities))
        return float(second - mu * mu)

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        comp = rng.choice(len(self.densities), size=size, p=self.weights)
        out = np.empty(size)
        for j, d in enumerate(self.densities):
            mask = comp == j
            cnt = int(mask.sum())
            if cnt:
                out[mask] = d.sample(cnt, rng)
        return out


def linear_pool(densities: Sequence[ForecastDensity]) -> MixturePool:
    """Equal-weight arithmetic mean of forecast densities."""
    return MixturePool(densities, np.full(len(densities), 1.0 / len(densities)))


class LogarithmicPool:
    """Equal-weight geometric mean of densities, normalized numerically.

    Normalization integrates exp(mean log density) on a bounded window,
    mean of component means +/- `window_sds` pooled standard deviations,
    by the trapezoid rule on `nodes` points.  Wide enough that T tails
    at practical dof contribute negligibly outside.
    """

    def __init__(self, densities: Sequence[ForecastDensity],
                 window_sds: float = 12.0, nodes: int = 4096):
        if len(densities) == 0:
            raise ValueError("need at least one density")
        self.densities = list(densities)
        center = np.mean([d.mean() for d in densities])
        pooled_var = np.mean([_variance_proxy(d) + (d.mean() - center) ** 2
                              for d in densities])
        half = window_sds * np.sqrt(pooled_var)
        self.grid = np.linspace(center - half, center + half, nodes)
        avg_log = self._avg_logpdf(self.grid)
        self._grid_density = np.exp(avg_log)
        self.norm = float(simpson(self._grid_density, x=self.grid))
        if not np.isfinite(self.norm) or self.norm <= 0:
            raise ValueError("logarithmic pool is not integrable on the window")

    def _avg_logpdf(self, y):
        return np.mean([d.logpdf(y) for d in self.densities], axis=0)

    def pdf(self, y):
        return np.exp(self._avg_logpdf(y)) / self.norm

    def logpdf(self, y):
        return self._avg_logpdf(y) - np.log(self.norm)

    def mean(self) -> float:
        dens = self._grid_density / self.norm
        return float(simpson(self.grid * dens, x=self.grid))

    def variance(self) -> float:
        dens = self._grid_density / self.norm
        mu = self.mean()
        return float(simpson((self.grid - mu) ** 2 * dens, x=self.grid))


def log_pool(densities: Sequence[ForecastDensity],
             window_sds: float = 12.0, nodes: int = 4096) -> LogarithmicPool:
    """Equal-weight harmonic-mean-style (geometric) pool of densities."""
    return LogarithmicPool(densities, window_sds=window_sds, nodes=nodes)
