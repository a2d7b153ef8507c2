"""Sequential forecast evaluation: MSFE and LPDR trajectories, density
evaluation at outcomes, and posterior dependence diagnostics on latent
agent states (Monte-Carlo empirical R-squared)."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Union

import numpy as np

from .densities import ForecastDensity, kde_pdf


@dataclass
class EvalSeries:
    """Cumulative accuracy trajectories for one method at one horizon."""

    method: str
    horizon: int
    msfe: np.ndarray
    lpdr: np.ndarray
    fsd: np.ndarray

    def __post_init__(self):
        self.msfe = np.asarray(self.msfe, dtype=float).ravel()
        self.lpdr = np.asarray(self.lpdr, dtype=float).ravel()
        self.fsd = np.asarray(self.fsd, dtype=float).ravel()
        if not (len(self.msfe) == len(self.lpdr) == len(self.fsd)):
            raise ValueError("metric series must have equal lengths")
        if np.any(self.msfe < 0):
            raise ValueError("MSFE cannot be negative")


@dataclass
class DependenceSeries:
    """Per-time dependence of each latent agent state on the others."""

    complete: np.ndarray        # (T, J): R^2 of x_j on all other agents
    paired: np.ndarray          # (T, C(J,2)): squared correlations
    pair_labels: list[tuple[int, int]]
    singular: np.ndarray        # (T,) bool: covariance was singular at t


def msfe(point_forecasts: np.ndarray, outcomes: np.ndarray) -> np.ndarray:
    """Running mean of squared forecast errors."""
    f = np.asarray(point_forecasts, dtype=float).ravel()
    y = np.asarray(outcomes, dtype=float).ravel()
    if f.size == 0:
        raise ValueError("no forecasts to evaluate")
    if f.shape != y.shape:
        raise ValueError("forecasts and outcomes must have equal lengths")
    sq = (f - y) ** 2
    return np.cumsum(sq) / np.arange(1, f.size + 1)


def lpdr(method_density_values: np.ndarray,
         baseline_density_values: np.ndarray) -> np.ndarray:
    """Cumulative log predictive density ratio against the baseline.

    Positive favors the method, negative the baseline; the baseline
    against itself is identically zero.
    """
    m = np.asarray(method_density_values, dtype=float).ravel()
    b = np.asarray(baseline_density_values, dtype=float).ravel()
    if m.shape != b.shape:
        raise ValueError("density value series must have equal lengths")
    if np.any(m <= 0) or np.any(b <= 0):
        raise ValueError("density values must be strictly positive")
    return np.cumsum(np.log(m) - np.log(b))


def density_value(density_or_sample: Union[ForecastDensity, np.ndarray],
                  y: float) -> float:
    """Predictive density at y: analytic for normal/T, Gaussian-kernel
    estimate (Silverman bandwidth) for sample sets."""
    if isinstance(density_or_sample, ForecastDensity):
        return float(density_or_sample.pdf(y))
    sample = np.asarray(density_or_sample, dtype=float).ravel()
    if sample.size == 0:
        raise ValueError("empty sample")
    return float(kde_pdf(sample, y))


def mc_empirical_r2(latent_draws: np.ndarray,
                    singular_tol: float = 1e12) -> DependenceSeries:
    """Dependence diagnostics from posterior draws of the latent states.

    `latent_draws` has shape (n_draws, T, J).  At each t the empirical
    covariance across draws yields the complete-conditional R^2 of each
    agent on all others (via the Schur complement) and pairwise squared
    correlations.  A singular covariance flags the time point and
    reports R^2 = 1 for the affected agents.
    """
    x = np.asarray(latent_draws, dtype=float)
    if x.ndim != 3:
        raise ValueError("latent draws must have shape (n_draws, T, J)")
    N, T, J = x.shape
    if N < 2:
        raise ValueError("need at least two draws")
    pairs = list(combinations(range(J), 2))
    complete = np.zeros((T, J))
    paired = np.zeros((T, len(pairs)))
    singular = np.zeros(T, dtype=bool)
    tiny = 1e-300
    for t in range(T):
        S = np.atleast_2d(np.cov(x[:, t, :], rowvar=False))
        var = np.diag(S).copy()
        for j in range(J):
            if var[j] <= tiny:
                complete[t, j] = 1.0
                singular[t] = True
                continue
            rest = [i for i in range(J) if i != j]
            if not rest:
                complete[t, j] = 0.0
                continue
            Srr = S[np.ix_(rest, rest)]
            Srj = S[rest, j]
            if np.linalg.cond(Srr) > singular_tol:
                singular[t] = True
                sol = np.linalg.pinv(Srr) @ Srj
            else:
                sol = np.linalg.solve(Srr, Srj)
            cond_var = var[j] - Srj @ sol
            complete[t, j] = float(np.clip(1.0 - cond_var / var[j], 0.0, 1.0))
        for idx, (i, j) in enumerate(pairs):
            denom = var[i] * var[j]
            if denom <= tiny:
                paired[t, idx] = 1.0
                singular[t] = True
            else:
                paired[t, idx] = float(np.clip(S[i, j] ** 2 / denom, 0.0, 1.0))
    return DependenceSeries(complete, paired, pairs, singular)
