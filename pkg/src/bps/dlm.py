"""Conjugate discount dynamic linear model: filtering, prediction, FFBS.

The model is the standard univariate DLM with unknown observational
variance,

    y_t     = F_t' theta_t + nu_t,        nu_t ~ N(0, v_t),
    theta_t = theta_{t-1} + omega_t,      omega_t ~ N(0, v_t W_t),

closed under normal/inverse-gamma filtering.  Evolution variances are
never materialized: a state discount inflates the coefficient scale
matrix each step (R_t = C_{t-1}/state), and a volatility discount decays
the degrees of freedom (beta-gamma random-walk volatility).  The
posterior at any time is summarized by (m, C, n, s) with

    theta_t | v_t ~ N(m_t, C_t v_t / s_t),   1/v_t ~ G(n_t/2, n_t s_t/2).

Backward sampling draws exact joint trajectories of (theta_{1:T}, v_{1:T})
conditional on the filtered summaries, for use inside MCMC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover - numba is a declared dependency
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]

        def wrap(f):
            return f

        return wrap


class FilterDegeneracyError(RuntimeError):
    """Raised when a one-step forecast scale q_t becomes non-positive."""


@dataclass(frozen=True)
class Discounts:
    """Discount pair: `state` acts on C/theta, `vol` acts on n/v."""

    state: float
    vol: float

    def __post_init__(self):
        if not (0.0 < self.state <= 1.0):
            raise ValueError(f"state discount must be in (0, 1], got {self.state}")
        if not (0.0 < self.vol <= 1.0):
            raise ValueError(f"vol discount must be in (0, 1], got {self.vol}")


@dataclass
class DlmPosterior:
    """Normal/inverse-gamma summary (m, C, n, s) of a DLM state posterior."""

    m: np.ndarray
    C: np.ndarray
    n: float
    s: float

    def __post_init__(self):
        self.m = np.atleast_1d(np.asarray(self.m, dtype=float))
        self.C = np.atleast_2d(np.asarray(self.C, dtype=float))
        self.n = float(self.n)
        self.s = float(self.s)
        p = self.m.shape[0]
        if self.C.shape != (p, p):
            raise ValueError(f"C must be {p}x{p}, got {self.C.shape}")
        self.C = 0.5 * (self.C + self.C.T)
        if self.n <= 0:
            raise ValueError(f"degrees of freedom must be > 0, got {self.n}")
        if self.s <= 0:
            raise ValueError(f"volatility estimate must be > 0, got {self.s}")
        eigs = np.linalg.eigvalsh(self.C)
        if eigs.min() < -1e-10 * max(1.0, eigs.max()):
            raise ValueError("C is not positive semi-definite")

    @property
    def dim(self) -> int:
        return self.m.shape[0]

    def copy(self) -> "DlmPosterior":
        return DlmPosterior(self.m.copy(), self.C.copy(), self.n, self.s)


@dataclass
class PredictiveStats:
    """One-step predictive summaries: y_t ~ T_dof(f, q), plus update terms."""

    f: float
    q: float
    dof: float
    e: Optional[float] = None
    A: Optional[np.ndarray] = None
    r: Optional[float] = None


@dataclass
class StateTrajectory:
    """A joint draw of coefficients and volatilities over t = 1..T."""

    thetas: np.ndarray  # (T, p)
    vols: np.ndarray    # (T,)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.vols = np.atleast_1d(np.asarray(self.vols, dtype=float))
        if self.thetas.shape[0] != self.vols.shape[0]:
            raise ValueError("thetas and vols must have equal length")
        if np.any(self.vols <= 0):
            raise ValueError("all volatilities must be positive")


@dataclass
class FilterResult:
    """Stacked filtering output over t = 1..T (arrays indexed 0..T-1)."""

    ms: np.ndarray  # (T, p)
    Cs: np.ndarray  # (T, p, p)
    ns: np.ndarray  # (T,)
    ss: np.ndarray  # (T,)
    fs: np.ndarray  # (T,)
    qs: np.ndarray  # (T,)
    es: np.ndarray  # (T,)

    def __len__(self) -> int:
        return self.ms.shape[0]

    def posterior_at(self, t: int) -> DlmPosterior:
        return DlmPosterior(self.ms[t].copy(), self.Cs[t].copy(),
                            float(self.ns[t]), float(self.ss[t]))

    @property
    def terminal(self) -> DlmPosterior:
        return self.posterior_at(len(self) - 1)


def evolve_prior(post: DlmPosterior, d: Discounts) -> DlmPosterior:
    """Discount evolution from time t-1 posterior to time t prior.

    Point estimates are unchanged; uncertainty inflates: C' = C/state,
    n' = vol * n.
    """
    return DlmPosterior(post.m.copy(), post.C / d.state, d.vol * post.n, post.s)


def one_step_predict(prior: DlmPosterior, F: np.ndarray) -> PredictiveStats:
    """One-step predictive T_dof(f, q) implied by an evolved prior."""
    F = np.asarray(F, dtype=float).ravel()
    if F.shape[0] != prior.dim:
        raise ValueError(f"regressor dim {F.shape[0]} != state dim {prior.dim}")
    f = float(F @ prior.m)
    q = float(F @ prior.C @ F + prior.s)
    return PredictiveStats(f=f, q=q, dof=prior.n)


def filter_update(post: DlmPosterior, F: np.ndarray, y: float,
                  d: Discounts) -> tuple[DlmPosterior, PredictiveStats]:
    """One filtering step: evolve the time t-1 posterior, observe y_t, update.

    Returns the time t posterior together with the one-step predictive
    statistics (f, q, dof, e, A, r) computed along the way.
    """
    F = np.asarray(F, dtype=float).ravel()
    if F.shape[0] != post.dim:
        raise ValueError(f"regressor dim {F.shape[0]} != state dim {post.dim}")
    R = post.C / d.state
    n_prior = d.vol * post.n
    f = float(F @ post.m)
    q = float(F @ R @ F + post.s)
    if q <= 0.0:
        raise FilterDegeneracyError(f"non-positive forecast scale q={q}")
    e = float(y) - f
    A = R @ F / q
    n_new = n_prior + 1.0
    r = (n_prior + e * e / q) / n_new
    s_new = r * post.s
    m_new = post.m + A * e
    C_new = r * (R - q * np.outer(A, A))
    C_new = 0.5 * (C_new + C_new.T)
    stats = PredictiveStats(f=f, q=q, dof=n_prior, e=e, A=A, r=r)
    return DlmPosterior(m_new, C_new, n_new, s_new), stats


@njit(cache=True)
def _filter_loop(y, F, m0, C0, n0, s0, dstate, dvol):
    T, p = F.shape
    ms = np.empty((T, p))
    Cs = np.empty((T, p, p))
    ns = np.empty(T)
    ss = np.empty(T)
    fs = np.empty(T)
    qs = np.empty(T)
    es = np.empty(T)
    m = m0.copy()
    C = C0.copy()
    n = n0
    s = s0
    for t in range(T):
        R = C / dstate
        npr = dvol * n
        Ft = F[t]
        RF = R @ Ft
        f = Ft @ m
        q = Ft @ RF + s
        if q <= 0.0:
            return ms, Cs, ns, ss, fs, qs, es, t
        e = y[t] - f
        A = RF / q
        n = npr + 1.0
        r = (npr + e * e / q) / n
        s = r * s
        m = m + A * e
        C = r * (R - q * np.outer(A, A))
        C = 0.5 * (C + C.T)
        ms[t] = m
        Cs[t] = C
        ns[t] = n
        ss[t] = s
        fs[t] = f
        qs[t] = q
        es[t] = e
    return ms, Cs, ns, ss, fs, qs, es, -1


@njit(cache=True)
def _backward_loop(ms, Cs, ns, ss, dstate, dvol, z, gunit):
    T, p = ms.shape
    thetas = np.empty((T, p))
    vols = np.empty(T)
    L = T - 1
    vinv = gunit[L] * 2.0 / (ns[L] * ss[L])
    if vinv < 1e-300:
        vinv = 1e-300
    vols[L] = 1.0 / vinv
    cov = Cs[L] * (vols[L] / ss[L])
    cov = 0.5 * (cov + cov.T)
    eps = 1e-12 * (1.0 + np.trace(cov) / p)
    for i in range(p):
        cov[i, i] += eps
    Lch = np.linalg.cholesky(cov)
    thetas[L] = ms[L] + Lch @ z[L]
    for t in range(L - 1, -1, -1):
        gam = gunit[t] * 2.0 / (ns[t] * ss[t])
        vinv = dvol / vols[t + 1] + gam
        vols[t] = 1.0 / vinv
        mean = ms[t] + dstate * (thetas[t + 1] - ms[t])
        if 1.0 - dstate < 1e-14:
            thetas[t] = mean
        else:
            cov = Cs[t] * ((1.0 - dstate) * vols[t] / ss[t])
            cov = 0.5 * (cov + cov.T)
            eps = 1e-12 * (1.0 + np.trace(cov) / p)
            for i in range(p):
                cov[i, i] += eps
            Lch = np.linalg.cholesky(cov)
            thetas[t] = mean + Lch @ z[t]
    return thetas, vols


def forward_filter(y: np.ndarray, F: np.ndarray, prior: DlmPosterior,
                   d: Discounts) -> FilterResult:
    """Filter a series y_{1:T} with per-time regressors F (T x p)."""
    y = np.asarray(y, dtype=float).ravel()
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[0] != y.shape[0]:
        raise ValueError("y and F must have the same number of rows")
    if F.shape[1] != prior.dim:
        raise ValueError(f"regressor dim {F.shape[1]} != state dim {prior.dim}")
    ms, Cs, ns, ss, fs, qs, es, bad = _filter_loop(
        y, F, prior.m, prior.C, prior.n, prior.s, d.state, d.vol)
    if bad >= 0:
        raise FilterDegeneracyError(f"non-positive forecast scale at t={bad}")
    return FilterResult(ms, Cs, ns, ss, fs, qs, es)


def _filtered_arrays(filtered):
    if isinstance(filtered, FilterResult):
        return filtered.ms, filtered.Cs, filtered.ns, filtered.ss
    posts = list(filtered)
    if not posts:
        raise ValueError("filtered sequence is empty")
    ms = np.stack([p.m for p in posts])
    Cs = np.stack([p.C for p in posts])
    ns = np.array([p.n for p in posts])
    ss = np.array([p.s for p in posts])
    return ms, Cs, ns, ss


def backward_sample(filtered: Union[FilterResult, Sequence[DlmPosterior]],
                    d: Discounts, rng: np.random.Generator) -> StateTrajectory:
    """Draw one joint trajectory (theta_{1:T}, v_{1:T}) given filter output.

    The terminal pair is drawn from the final normal/inverse-gamma
    posterior; earlier times recurse backwards,

        1/v_t     = vol/v_{t+1} + gamma_t,
                    gamma_t ~ G((1-vol) n_t/2, n_t s_t/2),
        theta_t   ~ N(m_t + state (theta_{t+1} - m_t),
                      C_t (1-state) v_t/s_t).

    Unit discounts degenerate correctly: vol = 1 gives a volatility
    constant within the draw, state = 1 a constant coefficient vector.
    """
    ms, Cs, ns, ss = _filtered_arrays(filtered)
    T, p = ms.shape
    z = rng.standard_normal((T, p))
    shapes = np.empty(T)
    shapes[:-1] = (1.0 - d.vol) * ns[:-1] / 2.0
    shapes[-1] = ns[-1] / 2.0
    gunit = rng.gamma(shapes) if T > 1 else np.array([rng.gamma(shapes[0])])
    thetas, vols = _backward_loop(ms, Cs, ns, ss, d.state, d.vol, z, gunit)
    return StateTrajectory(thetas, vols)


def ffbs(y: np.ndarray, F: np.ndarray, prior: DlmPosterior, d: Discounts,
         rng: np.random.Generator) -> tuple[StateTrajectory, FilterResult]:
    """Forward filter then backward sample; returns the draw and the filter."""
    filt = forward_filter(y, F, prior, d)
    return backward_sample(filt, d, rng), filt
