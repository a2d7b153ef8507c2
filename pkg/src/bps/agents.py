"""Forecasting agents: lag/factor discount DLMs emitting Student-T densities.

Each agent is a univariate DLM with an intercept plus lagged predictors
drawn from a multivariate series table.  One-step densities are the
analytic conjugate predictives; multi-step densities are built by
simulating coefficient/volatility paths forward under the discount
evolutions, feeding simulated target values back into that series' own
lags, and moment-matching a Student-T to the simulated outcomes.
Predictors from other series have no generating model here, so their
unobserved future lags stay frozen at the last observed value.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from .densities import ForecastDensity, NORMAL, SAMPLES, STUDENT_T
from .dlm import (Discounts, DlmPosterior, PredictiveStats, evolve_prior,
                  filter_update, one_step_predict)

DEFAULT_AGENT_DISCOUNTS = Discounts(state=0.99, vol=0.95)

# floor for moment-matched dof: the T variance must exist
_MIN_SIM_DOF = 2.2


def default_agent_prior(n_coeffs: int, n0: float = 2.0, s0: float = 0.01) -> DlmPosterior:
    """Vague conjugate prior: theta_0 | v_0 ~ N(0, (v_0/s_0) I)."""
    return DlmPosterior(np.zeros(n_coeffs), np.eye(n_coeffs), n0, s0)


@dataclass(frozen=True)
class AgentSpec:
    """An agent's design: named lagged predictors plus an intercept."""

    name: str
    predictors: tuple[tuple[str, int], ...]
    discounts: Discounts = DEFAULT_AGENT_DISCOUNTS
    prior: Optional[DlmPosterior] = None

    def __post_init__(self):
        preds = tuple((str(s), int(l)) for s, l in self.predictors)
        object.__setattr__(self, "predictors", preds)
        if any(lag < 1 for _, lag in preds):
            raise ValueError("all predictor lags must be >= 1")

    @property
    def dim(self) -> int:
        return 1 + len(self.predictors)

    @property
    def max_lag(self) -> int:
        return max((lag for _, lag in self.predictors), default=0)

    def initial_posterior(self) -> DlmPosterior:
        if self.prior is not None:
            if self.prior.dim != self.dim:
                raise ValueError(
                    f"prior dim {self.prior.dim} != design dim {self.dim}")
            return self.prior.copy()
        return default_agent_prior(self.dim)


def default_agent_specs(target: str, aux: Sequence[str]) -> list[AgentSpec]:
    """The four standard designs: AR(1), full lag-3, AR(3), factor lag-1."""
    if len(aux) != 2:
        raise ValueError("default agent set needs exactly two auxiliary series")
    a, b = aux
    lag3 = lambda s: [(s, 1), (s, 2), (s, 3)]
    return [
        AgentSpec("M1", tuple([(target, 1)])),
        AgentSpec("M2", tuple(lag3(target) + lag3(a) + lag3(b))),
        AgentSpec("M3", tuple(lag3(target))),
        AgentSpec("M4", tuple([(target, 1), (a, 1), (b, 1)])),
    ]


@dataclass
class FittedAgent:
    """An agent's sequential analysis over a series table."""

    spec: AgentSpec
    target: str
    series: dict[str, np.ndarray]
    start: int
    posteriors: list[Optional[DlmPosterior]]
    stats: list[Optional[PredictiveStats]]

    @property
    def n_rows(self) -> int:
        return len(self.posteriors)

    def regressors(self, t: int) -> np.ndarray:
        """Design vector for target time t, values all observed before t."""
        F = np.empty(self.spec.dim)
        F[0] = 1.0
        for i, (name, lag) in enumerate(self.spec.predictors):
            F[i + 1] = self.series[name][t - lag]
        return F

    def forecast(self, t_issue: int, k: int,
                 rng: Optional[np.random.Generator] = None,
                 n_paths: int = 5000) -> ForecastDensity:
        return agent_forecast(self, t_issue, k, rng=rng, n_paths=n_paths)


def build_agent(spec: AgentSpec, data: pd.DataFrame, target: str) -> FittedAgent:
    """Filter an agent over the whole table, keeping the posterior at each t."""
    needed = {target} | {name for name, _ in spec.predictors}
    missing = needed - set(data.columns)
    if missing:
        raise ValueError(f"agent {spec.name}: missing series {sorted(missing)}")
    series = {name: data[name].to_numpy(dtype=float) for name in needed}
    T = len(data)
    start = spec.max_lag
    if start >= T:
        raise ValueError(f"agent {spec.name}: series shorter than max lag")
    y = series[target]
    posteriors: list[Optional[DlmPosterior]] = [None] * T
    stats: list[Optional[PredictiveStats]] = [None] * T
    post = spec.initial_posterior()
    fitted = FittedAgent(spec, target, series, start, posteriors, stats)
    for t in range(start, T):
        F = fitted.regressors(t)
        if not (np.all(np.isfinite(F)) and np.isfinite(y[t])):
            raise ValueError(
                f"agent {spec.name}: missing data in required lags at row {t}")
        post, st = filter_update(post, F, y[t], spec.discounts)
        posteriors[t] = post
        stats[t] = st
    return fitted


def agent_forecast(fitted: FittedAgent, t_issue: int, k: int,
                   rng: Optional[np.random.Generator] = None,
                   n_paths: int = 5000) -> ForecastDensity:
    """Agent's k-step-ahead density for y_{t_issue+k}, issued at t_issue.

    k = 1 is the analytic conjugate Student-T.  k > 1 simulates paths
    under the discount evolutions and moment-matches a Student-T with
    dof = vol^(k-1) * n_t.
    """
    if k < 1:
        raise ValueError("horizon must be >= 1")
    if t_issue < fitted.start or t_issue >= fitted.n_rows:
        raise ValueError(
            f"no fitted state at t={t_issue} (agent starts at {fitted.start})")
    post = fitted.posteriors[t_issue]
    d = fitted.spec.discounts
    if k == 1:
        prior = evolve_prior(post, d)
        F = fitted.regressors(t_issue + 1)
        ps = one_step_predict(prior, F)
        return ForecastDensity.student_t(ps.f, ps.q, ps.dof)
    if rng is None:
        raise ValueError("multi-step forecasts require an rng")
    sim = _simulate_k_step(fitted, post, t_issue, k, rng, n_paths)
    dof = max(d.vol ** (k - 1) * post.n, _MIN_SIM_DOF)
    loc = float(sim.mean())
    var = float(sim.var(ddof=1))
    scale = max(var * (dof - 2.0) / dof, 1e-300)
    return ForecastDensity.student_t(loc, scale, dof)


def _simulate_k_step(fitted: FittedAgent, post: DlmPosterior, t_issue: int,
                     k: int, rng: np.random.Generator, n_paths: int) -> np.ndarray:
    spec = fitted.spec
    d = spec.discounts
    p = spec.dim
    n_t, s_t = post.n, post.s
    # posterior draws of (theta, v) at the forecast origin
    g = rng.gamma(n_t / 2.0, 2.0 / (n_t * s_t), size=n_paths)
    v = 1.0 / g
    cholC = np.linalg.cholesky(post.C + 1e-12 * np.eye(p))
    theta = post.m + (rng.standard_normal((n_paths, p)) @ cholC.T) \
        * np.sqrt(v / s_t)[:, None]
    cholW = None
    if d.state < 1.0:
        W = post.C * (1.0 - d.state) / d.state
        cholW = np.linalg.cholesky(W + 1e-12 * np.eye(p))
    simulated = np.empty((n_paths, k))
    n_i = n_t
    F = np.empty((n_paths, p))
    F[:, 0] = 1.0
    for i in range(1, k + 1):
        if d.vol < 1.0:
            gam = rng.beta(d.vol * n_i / 2.0, (1.0 - d.vol) * n_i / 2.0,
                           size=n_paths)
            v = v * d.vol / gam
            n_i = d.vol * n_i
        if cholW is not None:
            theta = theta + (rng.standard_normal((n_paths, p)) @ cholW.T) \
                * np.sqrt(v / s_t)[:, None]
        tau = t_issue + i
        for j, (name, lag) in enumerate(spec.predictors):
            idx = tau - lag
            if idx <= t_issue:
                F[:, j + 1] = fitted.series[name][idx]
            elif name == fitted.target:
                F[:, j + 1] = simulated[:, idx - t_issue - 1]
            else:
                F[:, j + 1] = fitted.series[name][t_issue]
        mu = np.einsum("ij,ij->i", F, theta)
        simulated[:, i - 1] = mu + np.sqrt(v) * rng.standard_normal(n_paths)
    return simulated[:, k - 1]


@dataclass
class AgentPanel:
    """T x J grid of k-step densities aligned to the outcomes they target.

    Row i targets outcome index `start + i`; the cell (i, j) was issued
    at t = start + i - horizon using information through that time only.
    """

    horizon: int
    start: int
    outcomes: np.ndarray
    densities: list[list[ForecastDensity]]
    names: list[str]
    dates: Optional[list] = None
    _arrays: Optional[tuple] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.outcomes = np.asarray(self.outcomes, dtype=float).ravel()
        if len(self.densities) != self.outcomes.shape[0]:
            raise ValueError("density grid and outcomes must align")
        J = len(self.names)
        if any(len(row) != J for row in self.densities):
            raise ValueError("density grid must be rectangular")

    @property
    def T(self) -> int:
        return len(self.densities)

    @property
    def J(self) -> int:
        return len(self.names)

    def cell(self, i: int, j: int) -> ForecastDensity:
        return self.densities[i][j]

    def truncate(self, n_rows: int) -> "AgentPanel":
        """First n_rows targets, sharing cells (for expanding windows)."""
        if not (1 <= n_rows <= self.T):
            raise ValueError(f"cannot truncate panel of {self.T} to {n_rows}")
        return AgentPanel(self.horizon, self.start, self.outcomes[:n_rows],
                          self.densities[:n_rows], self.names,
                          None if self.dates is None else self.dates[:n_rows])

    def moment_arrays(self):
        """(locs, scales, dofs, is_t, is_sample) arrays, cached."""
        if self._arrays is None:
            T, J = self.T, self.J
            locs = np.empty((T, J))
            scales = np.empty((T, J))
            dofs = np.ones((T, J))
            is_t = np.zeros((T, J), dtype=bool)
            is_sample = np.zeros((T, J), dtype=bool)
            for i in range(T):
                for j in range(J):
                    dme = self.densities[i][j]
                    locs[i, j] = dme.loc
                    scales[i, j] = dme.scale
                    if dme.kind == STUDENT_T:
                        is_t[i, j] = True
                        dofs[i, j] = dme.dof
                    elif dme.kind == SAMPLES:
                        is_sample[i, j] = True
            self._arrays = (locs, scales, dofs, is_t, is_sample)
        return self._arrays


def assemble_panel(agents: Sequence[FittedAgent], data: pd.DataFrame,
                   window: tuple[int, int], k: int, seed: int = 0,
                   n_paths: int = 5000) -> AgentPanel:
    """Panel of k-step densities for targets in window = (t0, t1) inclusive.

    Cell (t, j) is agent j's density for y_t issued at t - k.  Multi-step
    cells get a dedicated RNG substream keyed by (seed, k, agent, t) so
    any cell can be recomputed bit-identically in isolation.
    """
    t0, t1 = window
    if not agents:
        raise ValueError("need at least one agent")
    target = agents[0].target
    n_rows = len(data)
    if not (0 <= t0 <= t1 < n_rows):
        raise ValueError(f"window {window} outside data range [0, {n_rows})")
    min_issue = max(a.start for a in agents)
    if t0 - k < min_issue:
        raise ValueError(
            f"window starts too early: target {t0} at horizon {k} needs an "
            f"agent state at {t0 - k}, first available is {min_issue}")
    y = data[target].to_numpy(dtype=float)
    names = [a.spec.name for a in agents]
    grid: list[list[ForecastDensity]] = []
    for t in range(t0, t1 + 1):
        row = []
        for j, agent in enumerate(agents):
            if k == 1:
                row.append(agent_forecast(agent, t - 1, 1))
            else:
                rng = np.random.default_rng(
                    np.random.SeedSequence((seed, k, j, t)))
                row.append(agent_forecast(agent, t - k, k, rng=rng,
                                          n_paths=n_paths))
        grid.append(row)
    dates = list(data.index[t0:t1 + 1])
    return AgentPanel(k, t0, y[t0:t1 + 1], grid, names, dates)
