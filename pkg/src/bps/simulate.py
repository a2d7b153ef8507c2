"""Synthetic series with random regime switching among the four standard
generating forms, for validating the synthesis pipeline end to end.

The target series switches generating model at random times; two
auxiliary predictor series follow fixed AR(1) processes.  True regime
labels are emitted alongside the data for later diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd


@dataclass(frozen=True)
class RegimeSpec:
    """One generating model: intercept plus lagged linear terms."""

    name: str
    intercept: float
    terms: tuple[tuple[str, int, float], ...]  # (series, lag, coefficient)

    def __post_init__(self):
        terms = tuple((str(s), int(l), float(c)) for s, l, c in self.terms)
        object.__setattr__(self, "terms", terms)
        if any(l < 1 for _, l, _ in terms):
            raise ValueError("regime lags must be >= 1")

    @property
    def max_lag(self) -> int:
        return max((l for _, l, _ in self.terms), default=0)


@dataclass(frozen=True)
class AuxSpec:
    """Fixed AR(1) generator for a predictor series."""

    name: str
    const: float
    ar: float
    sd: float

    def __post_init__(self):
        if not (0 <= self.ar < 1):
            raise ValueError("aux AR coefficient must be in [0, 1)")
        if self.sd < 0:
            raise ValueError("aux noise sd must be non-negative")


@dataclass(frozen=True)
class SimConfig:
    """Regime-switching generator configuration."""

    length: int
    regimes: tuple[RegimeSpec, ...]
    switch: Union[float, np.ndarray]  # per-period probability or explicit path
    noise: float
    seed: int
    target: str = "p"
    aux: tuple[AuxSpec, ...] = ()
    warmup: int = 24
    start_year: int = 1960

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("length must be >= 1")
        if not self.regimes:
            raise ValueError("need at least one regime")
        if self.noise < 0:
            raise ValueError("noise sd must be non-negative")
        if isinstance(self.switch, (int, float)):
            if not (0.0 <= float(self.switch) <= 1.0):
                raise ValueError("switch probability must be in [0, 1]")
        else:
            path = np.asarray(self.switch, dtype=int)
            if path.shape != (self.length,):
                raise ValueError("explicit regime path must have one label per period")
            if path.min() < 0 or path.max() >= len(self.regimes):
                raise ValueError("regime path labels out of range")
            object.__setattr__(self, "switch", path)


def default_sim_config(seed: int, length: int = 200, switch: float = 0.02,
                       noise: float = 0.25) -> SimConfig:
    """Four regimes mirroring the standard agent designs on (p, r, u)."""
    regimes = (
        RegimeSpec("ar1", 0.10, (("p", 1, 0.95),)),
        RegimeSpec("full3", 1.20, (("p", 1, 0.35), ("p", 2, 0.15), ("p", 3, 0.10),
                                   ("r", 1, 0.20), ("r", 3, -0.10),
                                   ("u", 1, -0.25), ("u", 2, 0.10))),
        RegimeSpec("ar3", 0.40, (("p", 1, 0.55), ("p", 2, 0.25), ("p", 3, 0.10))),
        RegimeSpec("factor1", 0.20, (("p", 1, 0.50), ("r", 1, 0.35), ("u", 1, -0.30))),
    )
    aux = (AuxSpec("r", const=0.15, ar=0.92, sd=0.12),
           AuxSpec("u", const=0.30, ar=0.95, sd=0.10))
    return SimConfig(length=length, regimes=regimes, switch=switch,
                     noise=noise, seed=seed, aux=aux)


def quarter_labels(n: int, start_year: int = 1960) -> list[str]:
    return [f"{start_year + i // 4}Q{i % 4 + 1}" for i in range(n)]


def generate(cfg: SimConfig) -> tuple[pd.DataFrame, np.ndarray]:
    """Emit (series table, regime path), both reproducible from cfg.seed."""
    rng = np.random.default_rng(cfg.seed)
    total = cfg.warmup + cfg.length
    n_regimes = len(cfg.regimes)

    series: dict[str, np.ndarray] = {}
    for a in cfg.aux:
        x = np.empty(total)
        mean = a.const / (1.0 - a.ar)
        sd0 = a.sd / np.sqrt(1.0 - a.ar ** 2) if a.sd > 0 else 0.0
        x[0] = mean + sd0 * rng.standard_normal()
        shocks = rng.standard_normal(total - 1)
        for t in range(1, total):
            x[t] = a.const + a.ar * x[t - 1] + a.sd * shocks[t - 1]
        series[a.name] = x

    if isinstance(cfg.switch, np.ndarray):
        regimes = np.concatenate([np.full(cfg.warmup, cfg.switch[0]), cfg.switch])
    else:
        regimes = np.empty(total, dtype=int)
        regimes[0] = 0
        flips = rng.random(total - 1)
        for t in range(1, total):
            if flips[t - 1] < cfg.switch:
                others = [r for r in range(n_regimes) if r != regimes[t - 1]]
                regimes[t] = others[rng.integers(len(others))] if others else 0
            else:
                regimes[t] = regimes[t - 1]

    max_lag = max(r.max_lag for r in cfg.regimes)
    p = np.empty(total)
    level0 = cfg.regimes[0].intercept / max(
        1.0 - sum(c for s, _, c in cfg.regimes[0].terms if s == cfg.target), 0.05)
    p[:max_lag] = level0
    shocks = rng.standard_normal(total)
    for t in range(max_lag, total):
        reg = cfg.regimes[regimes[t]]
        mu = reg.intercept
        for name, lag, coef in reg.terms:
            src = p if name == cfg.target else series[name]
            mu += coef * src[t - lag]
        p[t] = mu + cfg.noise * shocks[t]
    series[cfg.target] = p

    labels = quarter_labels(cfg.length, cfg.start_year)
    cols = {cfg.target: p[cfg.warmup:]}
    for a in cfg.aux:
        cols[a.name] = series[a.name][cfg.warmup:]
    table = pd.DataFrame(cols, index=pd.Index(labels, name="date"))
    return table, regimes[cfg.warmup:].astype(int)


def write_series_csv(table: pd.DataFrame, path: Union[str, Path]) -> None:
    """Same CSV schema the ingestion step reads: date column plus series."""
    table.to_csv(path, index=True)


def write_regime_csv(regimes: np.ndarray, dates: Sequence[str],
                     path: Union[str, Path]) -> None:
    pd.DataFrame({"date": list(dates), "regime": regimes}).to_csv(path, index=False)
