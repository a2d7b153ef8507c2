"""Step-ahead forecast densities exchanged between agents and the synthesis.

A density is normal, Student-T, or a raw sample set.  The `scale` field
is the squared scale throughout: the variance for a normal, and the T
scale parameter such that (x - loc)/sqrt(scale) is standard Student-T.
Sample sets are summarized by their empirical moments and evaluated via
Gaussian kernel density estimates with Silverman bandwidth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.stats as st

NORMAL = "normal"
STUDENT_T = "student-t"
SAMPLES = "samples"


def silverman_bandwidth(draws: np.ndarray) -> float:
    """Silverman's rule of thumb for a Gaussian KDE over 1-d draws."""
    draws = np.asarray(draws, dtype=float).ravel()
    n = draws.size
    if n < 2:
        raise ValueError("need at least two draws for a bandwidth")
    sd = draws.std(ddof=1)
    iqr = np.subtract(*np.percentile(draws, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        spread = max(abs(draws[0]), 1.0) * 1e-12
    return 0.9 * spread * n ** (-0.2)


def kde_pdf(draws: np.ndarray, y, bandwidth: Optional[float] = None):
    """Gaussian KDE evaluated at y (scalar or array)."""
    draws = np.asarray(draws, dtype=float).ravel()
    if draws.size == 0:
        raise ValueError("empty sample")
    bw = silverman_bandwidth(draws) if bandwidth is None else float(bandwidth)
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(y_arr)
    # chunked to bound the (len(y) x n_draws) intermediate
    step = max(1, int(4e6 / max(draws.size, 1)))
    for i in range(0, y_arr.size, step):
        block = y_arr[i:i + step]
        z = (block[:, None] - draws[None, :]) / bw
        out[i:i + step] = np.exp(-0.5 * z * z).mean(axis=1) / (bw * np.sqrt(2 * np.pi))
    return out if np.ndim(y) else float(out[0])


@dataclass(frozen=True)
class ForecastDensity:
    """An agent's step-ahead predictive distribution."""

    kind: str
    loc: float
    scale: float
    dof: Optional[float] = None
    draws: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in (NORMAL, STUDENT_T, SAMPLES):
            raise ValueError(f"unknown density kind {self.kind!r}")
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.kind == STUDENT_T:
            if self.dof is None or self.dof <= 0:
                raise ValueError("student-t density needs dof > 0")
        if self.kind == SAMPLES:
            if self.draws is None or np.asarray(self.draws).size == 0:
                raise ValueError("samples density needs a non-empty draw set")

    @staticmethod
    def normal(loc: float, scale: float) -> "ForecastDensity":
        return ForecastDensity(NORMAL, float(loc), float(scale))

    @staticmethod
    def student_t(loc: float, scale: float, dof: float) -> "ForecastDensity":
        return ForecastDensity(STUDENT_T, float(loc), float(scale), dof=float(dof))

    @staticmethod
    def from_samples(draws: np.ndarray) -> "ForecastDensity":
        draws = np.asarray(draws, dtype=float).ravel()
        if draws.size < 2:
            raise ValueError("need at least two draws")
        return ForecastDensity(SAMPLES, float(draws.mean()),
                               float(max(draws.var(ddof=1), 1e-300)), draws=draws)

    @property
    def sd(self) -> float:
        return float(np.sqrt(self.variance()))

    def mean(self) -> float:
        return float(self.loc)

    def variance(self) -> float:
        if self.kind == NORMAL:
            return float(self.scale)
        if self.kind == STUDENT_T:
            if self.dof <= 2:
                return float("inf")
            return float(self.scale * self.dof / (self.dof - 2.0))
        return float(np.var(self.draws, ddof=1))

    def pdf(self, y):
        if self.kind == NORMAL:
            return st.norm.pdf(y, loc=self.loc, scale=np.sqrt(self.scale))
        if self.kind == STUDENT_T:
            return st.t.pdf(y, df=self.dof, loc=self.loc, scale=np.sqrt(self.scale))
        return kde_pdf(self.draws, y)

    def logpdf(self, y):
        if self.kind == NORMAL:
            return st.norm.logpdf(y, loc=self.loc, scale=np.sqrt(self.scale))
        if self.kind == STUDENT_T:
            return st.t.logpdf(y, df=self.dof, loc=self.loc, scale=np.sqrt(self.scale))
        return np.log(kde_pdf(self.draws, y))

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        root = np.sqrt(self.scale)
        if self.kind == NORMAL:
            return self.loc + root * rng.standard_normal(size)
        if self.kind == STUDENT_T:
            return self.loc + root * rng.standard_t(self.dof, size)
        return rng.choice(self.draws, size=size, replace=True)
