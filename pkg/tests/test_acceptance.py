"""Acceptance suite: one test per release criterion, at pinned tolerances.

Each test prints a PASS line on success (run with `pytest -s` to see them
as they complete).  Criterion 6 runs the full rolling simulation study
and dominates the runtime; everything else finishes in seconds.
"""

import time
from pathlib import Path

import numpy as np
import pytest
import scipy.stats as st

from bps.agents import AgentPanel
from bps.densities import ForecastDensity
from bps.dlm import Discounts, DlmPosterior, StateTrajectory, forward_filter
from bps.evaluation import lpdr, msfe
from bps.pipeline import PipelineConfig, run_pipeline
from bps.pools import BmaState, bma_update
from bps.simulate import default_sim_config, generate, write_series_csv
from bps.synthesis import (BpsConfig, McmcSettings, gibbs, init_latents,
                           latent_conditional, sample_latents)

from oracles import condition_joint_normal, static_nig_posterior


def _report(criterion: str, detail: str = ""):
    print(f"\nPASS {criterion}" + (f" ({detail})" if detail else ""))


def test_criterion_1_filter_matches_static_regression():
    """Unit-discount filtering equals batch conjugate regression, <=1e-10."""
    t0 = time.time()
    rng = np.random.default_rng(2024)
    T, p = 50, 3
    X = np.column_stack([np.ones(T), rng.standard_normal((T, p - 1))])
    y = X @ np.array([0.5, -0.2, 0.8]) + 0.3 * rng.standard_normal(T)
    prior = DlmPosterior(np.zeros(p), np.eye(p), 4.0, 0.25)
    filt = forward_filter(y, X, prior, Discounts(1.0, 1.0))
    mT, CT, nT, sT = static_nig_posterior(X, y, prior.m, prior.C,
                                          prior.n, prior.s)
    np.testing.assert_allclose(filt.ms[-1], mT, rtol=1e-10)
    np.testing.assert_allclose(filt.Cs[-1], CT, rtol=1e-10)
    assert abs(filt.ns[-1] - nT) <= 1e-10 * nT
    assert abs(filt.ss[-1] - sT) <= 1e-10 * sT
    elapsed = time.time() - t0
    assert elapsed < 1.0
    _report("criterion 1: filter-oracle equivalence", f"{elapsed:.2f}s")


def test_criterion_2_latent_conditional_matches_joint_normal():
    """100 random J=3 conditionals match dense conditioning, <=1e-8."""
    t0 = time.time()
    rng = np.random.default_rng(7)
    for _ in range(100):
        J = 3
        theta = rng.standard_normal(J + 1) * 1.5
        v = rng.uniform(0.05, 3.0)
        h = rng.standard_normal(J) * 2
        H = rng.uniform(0.1, 4.0, size=J)
        y = rng.standard_normal() * 3
        lc = latent_conditional(theta, v, y, h, H)
        th = theta[1:]
        mu = np.concatenate([[theta[0] + th @ h], h])
        Sigma = np.zeros((J + 1, J + 1))
        Sigma[0, 0] = v + th @ (H * th)
        Sigma[0, 1:] = Sigma[1:, 0] = H * th
        Sigma[1:, 1:] = np.diag(H)
        mean, cov = condition_joint_normal(mu, Sigma, 0, y)
        np.testing.assert_allclose(lc.mean, mean, atol=1e-8)
        np.testing.assert_allclose(lc.cov, cov, atol=1e-8)
    elapsed = time.time() - t0
    assert elapsed < 1.0
    _report("criterion 2: latent-conditional oracle", f"{elapsed:.2f}s")


def test_criterion_3_scale_mixture_marginal_ks():
    """Zero-loading chain reproduces the Student-T agent density (KS)."""
    t0 = time.time()
    dof = 5.0
    panel = AgentPanel(1, 0, np.array([0.0]),
                       [[ForecastDensity.student_t(0.0, 1.0, dof=dof)]], ["A"])
    traj = StateTrajectory(np.zeros((1, 2)), np.ones(1))
    rng = np.random.default_rng(31)
    state = init_latents(panel, rng)
    n_sweeps = 10_000
    xs = np.empty(n_sweeps)
    for i in range(n_sweeps):
        state = sample_latents(traj, panel, state.phi, rng)
        xs[i] = state.x[0, 0]
    pval = st.kstest(xs, st.t(df=dof).cdf).pvalue
    elapsed = time.time() - t0
    assert pval > 0.01, f"KS p-value {pval:.4f}"
    assert elapsed < 30.0
    _report("criterion 3: scale-mixture marginal",
            f"KS p={pval:.3f}, {elapsed:.1f}s")


def test_criterion_4_tiny_joint_gibbs_vs_grid():
    """T=1, J=1 Gibbs marginals match a dense grid posterior, <=0.02."""
    t0 = time.time()
    y_obs, h, H = 0.5, 0.2, 0.3
    m0 = np.array([0.0, 0.5])
    C0 = np.eye(2)
    n0, s0 = 6.0, 0.5
    bs, dv = 0.9, 0.9
    panel = AgentPanel(1, 0, np.array([y_obs]),
                       [[ForecastDensity.normal(h, H)]], ["A"])
    cfg = BpsConfig(Discounts(bs, dv), DlmPosterior(m0, C0, n0, s0),
                    mcmc=McmcSettings(burn=2000, retained=20_000))
    draws = gibbs(np.array([y_obs]), panel, cfg, np.random.default_rng(0))
    th0 = draws.thetas[:, 0, 0]
    th1 = draws.thetas[:, 0, 1]
    vv = draws.vols[:, 0]
    xx = draws.x[:, 0, 0]

    # dense grid over (theta0, theta1, v) with numeric integration over x
    R = C0 / bs
    npr = dv * n0
    vd = st.invgamma(a=npr / 2.0, scale=npr * s0 / 2.0)

    def axis(samples, n=201, pad=6.0):
        return np.linspace(samples.mean() - pad * samples.std(),
                           samples.mean() + pad * samples.std(), n)

    n_t, n_v, n_x = 201, 161, 201
    t0g, t1g, xg = axis(th0, n_t), axis(th1, n_t), axis(xx, n_x)
    vg = np.exp(np.linspace(np.log(max(vd.ppf(1e-9), 1e-6)),
                            np.log(np.quantile(vv, 1 - 1e-4) * 6), n_v))
    px_prior = np.exp(-0.5 * (xg - h) ** 2 / H) / np.sqrt(2 * np.pi * H)
    resid2 = ((y_obs - t0g)[:, None, None]
              - t1g[None, :, None] * xg[None, None, :]) ** 2
    lt0 = (t0g - m0[0]) ** 2 / R[0, 0]
    lt1 = (t1g - m0[1]) ** 2 / R[1, 1]
    post = np.empty((n_t, n_t, n_v))
    px_marg = np.zeros(n_x)
    buf = np.empty_like(resid2)
    for iv, v in enumerate(vg):
        np.multiply(resid2, -0.5 / v, out=buf)
        np.exp(buf, out=buf)
        lik = (buf * px_prior).sum(axis=2) / np.sqrt(v)
        w0 = np.exp(-0.5 * lt0 * s0 / v) / np.sqrt(v)
        w1 = np.exp(-0.5 * lt1 * s0 / v) / np.sqrt(v)
        wv = vd.pdf(v) * v  # log-spaced grid Jacobian
        post[:, :, iv] = wv * (w0[:, None] * w1[None, :]) * lik
        px_marg += wv / np.sqrt(v) * (
            w1 @ (w0 @ buf.reshape(n_t, -1)).reshape(n_t, n_x))
    post /= post.sum()
    px_marg *= px_prior

    def sup_err(samples, grid, marg):
        marg = marg / marg.sum()
        cdf = np.cumsum(marg) - 0.5 * marg
        qs = np.linspace(0.002, 0.998, 499)
        return float(np.abs(np.interp(np.quantile(samples, qs), grid, cdf)
                            - qs).max())

    errs = {
        "theta0": sup_err(th0, t0g, post.sum(axis=(1, 2))),
        "theta1": sup_err(th1, t1g, post.sum(axis=(0, 2))),
        "v": sup_err(vv, vg, post.sum(axis=(0, 1))),
        "x": sup_err(xx, xg, px_marg),
    }
    elapsed = time.time() - t0
    for name, err in errs.items():
        assert err <= 0.02, f"{name} sup-CDF error {err:.4f}"
    assert elapsed < 120.0
    detail = ", ".join(f"{k}={v:.4f}" for k, v in errs.items())
    _report("criterion 4: tiny-joint Gibbs correctness",
            f"{detail}, {elapsed:.0f}s")


def test_criterion_5_self_consistency_coverage():
    """Data generated by the synthesis model itself: 90% posterior
    intervals cover the true coefficient paths at >=80% of points."""
    t0 = time.time()
    rng = np.random.default_rng(512)
    T, J = 200, 3
    locs = np.empty((T, J))
    locs[0] = (1.0, 2.0, 1.5)
    for t in range(1, T):
        locs[t] = 2.0 + 0.9 * (locs[t - 1] - 2.0) + 0.25 * rng.standard_normal(J)
    H = np.full((T, J), 0.16)
    theta_true = np.empty((T, 1 + J))
    theta_true[0] = (0.0, 0.5, 0.3, 0.2)
    for t in range(1, T):
        theta_true[t] = theta_true[t - 1] + 0.02 * rng.standard_normal(1 + J)
    v_true = 0.04
    x_true = locs + np.sqrt(H) * rng.standard_normal((T, J))
    y = (theta_true[:, 0] + np.einsum("tj,tj->t", theta_true[:, 1:], x_true)
         + np.sqrt(v_true) * rng.standard_normal(T))
    cells = [[ForecastDensity.normal(locs[t, j], H[t, j]) for j in range(J)]
             for t in range(T)]
    panel = AgentPanel(1, 0, y, cells, [f"A{j}" for j in range(J)])
    cfg = BpsConfig(Discounts(0.95, 0.99),
                    DlmPosterior(np.zeros(1 + J), np.eye(1 + J), 10.0, 0.01),
                    mcmc=McmcSettings(burn=500, retained=2000))
    draws = gibbs(y, panel, cfg, np.random.default_rng(99))
    lo = np.quantile(draws.thetas, 0.05, axis=0)
    hi = np.quantile(draws.thetas, 0.95, axis=0)
    covered = (theta_true >= lo) & (theta_true <= hi)
    coverage = covered.mean()
    elapsed = time.time() - t0
    assert coverage >= 0.80, f"coverage {coverage:.3f}"
    assert elapsed < 300.0
    _report("criterion 5: self-consistency coverage",
            f"coverage={coverage:.3f}, {elapsed:.0f}s")


def test_criterion_7_evaluation_identities():
    """LPDR self-baseline 0; perfect-forecast MSFE 0; BMA batch==seq."""
    vals = np.array([0.3, 0.7, 1.1, 0.2])
    assert np.all(lpdr(vals, vals) == 0.0)
    y = np.array([1.0, -0.5, 2.0])
    assert np.all(msfe(y, y) == 0.0)
    rng = np.random.default_rng(5)
    dens = rng.uniform(0.01, 3.0, size=(50, 4))
    state = BmaState.uniform(4)
    for row in dens:
        state = bma_update(state, row)
    batched = np.full(4, 0.25) * np.exp(np.log(dens).sum(axis=0))
    batched /= batched.sum()
    np.testing.assert_allclose(state.probs, batched, atol=1e-10)
    _report("criterion 7: evaluation identities")


def _toy_pipeline_config(tmp_path: Path, out_name: str) -> PipelineConfig:
    csv = tmp_path / "toy.csv"
    if not csv.exists():
        table, _ = generate(default_sim_config(seed=2718, length=40))
        write_series_csv(table, csv)
    return PipelineConfig(
        data_path=csv, target="p",
        train_end="1964Q4", calib_end="1967Q2", test_end="1969Q4",
        horizons=(1, 2), mcmc=McmcSettings(burn=50, retained=200),
        seed=11, out_dir=tmp_path / out_name, agent_paths=800)


def test_criterion_8_pipeline_determinism(tmp_path):
    """Same seed, single worker: byte-identical metrics across runs."""
    t0 = time.time()
    run_pipeline(_toy_pipeline_config(tmp_path, "run1"))
    run_pipeline(_toy_pipeline_config(tmp_path, "run2"))
    b1 = (tmp_path / "run1" / "metrics.csv").read_bytes()
    b2 = (tmp_path / "run2" / "metrics.csv").read_bytes()
    assert b1 == b2
    _report("criterion 8: pipeline determinism", f"{time.time()-t0:.0f}s")


def test_criterion_9_no_lookahead_audit(tmp_path):
    """Look-ahead audit flags zero violations on the toy pipeline."""
    result = run_pipeline(_toy_pipeline_config(tmp_path, "run"))
    assert result.summary["audit"]["enabled"]
    assert result.audit_violations == []
    _report("criterion 9: no-look-ahead audit", "0 violations")
