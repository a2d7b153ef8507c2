"""End-to-end sequential forecasting pipeline.

Protocol: agents filter through a training period; combination methods
calibrate through a second period; over the test period every target
quarter gets forecasts from all enabled methods, with the synthesis
model refit by MCMC at each issue time on an expanding window starting
at the calibration period.  No forecast may use information at or after
its target time minus its horizon; an audit re-derives issuance times
and recomputes agent densities from truncated data to enforce this.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import pandas as pd
import yaml

from .agents import (AgentPanel, AgentSpec, FittedAgent, agent_forecast,
                     assemble_panel, build_agent, default_agent_prior,
                     default_agent_specs)
from .densities import ForecastDensity
from .dlm import Discounts, DlmPosterior, FilterDegeneracyError
from .evaluation import lpdr, mc_empirical_r2, msfe
from .pools import BmaState, LogarithmicPool, MixturePool, bma_update, linear_pool
from .synthesis import (BpsConfig, LatentStates, McmcSettings, PosteriorDraws,
                        default_bps_config, forecast_k_components, gibbs)


class ConfigError(Exception):
    """Invalid pipeline configuration (exit code 2)."""


class DataError(Exception):
    """Unusable input data (exit code 3)."""


class PipelineError(RuntimeError):
    """Numerical or model failure, annotated with (t, k, method) context."""


METHOD_BMA = "BMA"
METHOD_LINP = "LinP"
METHOD_LOGP = "LogP"
METHOD_BPS = "BPS"

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")


def _date_key(label: str):
    m = _QUARTER_RE.match(str(label).strip())
    if m:
        return (int(m.group(1)), int(m.group(2)))
    return (str(label),)


def ingest(path: Union[str, Path], date_column: str = "date",
           rename: Optional[dict] = None) -> pd.DataFrame:
    """Load a date-indexed numeric series table from CSV.

    Rows come out sorted with strictly increasing dates; duplicate dates
    are an error.  `rename` maps internal series names to CSV columns.
    Values are used as supplied; no unit transformation happens here.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    try:
        raw = pd.read_csv(path)
    except Exception as exc:
        raise DataError(f"cannot parse {path}: {exc}") from exc
    if date_column not in raw.columns:
        raise DataError(f"missing date column {date_column!r} in {path}")
    cols = {}
    for name, col in (rename or {}).items():
        if col not in raw.columns:
            raise DataError(f"missing mapped column {col!r} in {path}")
        cols[name] = col
    if not cols:
        cols = {c: c for c in raw.columns if c != date_column}
    dates = raw[date_column].astype(str)
    dup = dates[dates.duplicated()]
    if not dup.empty:
        raise DataError(f"duplicate date {dup.iloc[0]!r} in {path}")
    table = pd.DataFrame(index=pd.Index(dates, name=date_column))
    for name, col in cols.items():
        vals = pd.to_numeric(raw[col], errors="coerce")
        if vals.isna().any():
            bad = dates[vals.isna()].iloc[0]
            raise DataError(f"non-numeric value in column {col!r} at {bad!r}")
        table[name] = vals.to_numpy(dtype=float)
    keys = [_date_key(d) for d in table.index]
    if len({len(k) for k in keys}) != 1:
        raise DataError("mixed date label formats")
    order = sorted(range(len(keys)), key=keys.__getitem__)
    return table.iloc[order]


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed for one full pipeline run."""

    data_path: Path
    target: str
    train_end: str
    calib_end: str
    test_end: str
    horizons: tuple[int, ...] = (1,)
    agent_specs: tuple[AgentSpec, ...] = ()
    date_column: str = "date"
    series_map: Optional[dict] = None
    methods: frozenset = frozenset({"agents", "bma", "linear", "log"})
    customized: bool = True
    mcmc: McmcSettings = field(default_factory=McmcSettings)
    bps_overrides: dict = field(default_factory=dict)  # horizon -> BpsConfig kwargs
    seed: int = 0
    out_dir: Path = Path("bps_out")
    workers: int = 1
    audit: bool = True
    warm_start: bool = False
    agent_paths: int = 5000

    def __post_init__(self):
        object.__setattr__(self, "data_path", Path(self.data_path))
        object.__setattr__(self, "out_dir", Path(self.out_dir))
        object.__setattr__(self, "horizons",
                           tuple(sorted(set(int(k) for k in self.horizons))))
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigError("horizons must be a non-empty set of ints >= 1")
        unknown = set(self.methods) - {"agents", "bma", "linear", "log"}
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")


def load_config(config_path: Optional[Union[str, Path]] = None,
                overrides: Optional[dict] = None) -> PipelineConfig:
    """Build a PipelineConfig from a YAML key-value file plus overrides.

    CLI flags take precedence over file values.  See README for the
    documented schema.
    """
    doc = {}
    if config_path is not None:
        p = Path(config_path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text()) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse config {p}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config file must be a mapping")
    overrides = dict(overrides or {})
    mcmc_override = overrides.pop("mcmc", None)
    doc.update({k: v for k, v in overrides.items() if v is not None})
    try:
        periods = doc["periods"]
        data_path = doc["data"]
        target = doc["target"]
    except KeyError as exc:
        raise ConfigError(f"missing required config key {exc}") from exc
    mcmc_doc = dict(doc.get("mcmc", {}) or {})
    if mcmc_override:
        mcmc_doc.update(mcmc_override)
    mcmc = McmcSettings(burn=int(mcmc_doc.get("burn", 3000)),
                        retained=int(mcmc_doc.get("retained", 5000)),
                        thin=int(mcmc_doc.get("thin", 1)))
    specs = tuple(_parse_agent_spec(a) for a in doc.get("agents", []))
    bps_overrides = {}
    for key, k in (("bps", 1), ("bps_k", None)):
        if key in doc:
            bps_overrides[k] = dict(doc[key])
    methods = doc.get("methods")
    try:
        return PipelineConfig(
            data_path=data_path,
            target=str(target),
            train_end=str(periods["train_end"]),
            calib_end=str(periods["calib_end"]),
            test_end=str(periods["test_end"]),
            horizons=tuple(doc.get("horizons", [1])),
            agent_specs=specs,
            date_column=str(doc.get("date_column", "date")),
            series_map=doc.get("series"),
            methods=frozenset(methods) if methods is not None
                    else PipelineConfig.methods,
            customized=bool(doc.get("customized", True)),
            mcmc=mcmc,
            bps_overrides=bps_overrides,
            seed=int(doc.get("seed", 0)),
            out_dir=Path(doc.get("out", "bps_out")),
            workers=int(doc.get("workers", 1)),
            audit=bool(doc.get("audit", True)),
            warm_start=bool(doc.get("warm_start", False)),
            agent_paths=int(doc.get("agent_paths", 5000)),
        )
    except KeyError as exc:
        raise ConfigError(f"missing required config key {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _parse_agent_spec(doc: dict) -> AgentSpec:
    try:
        preds = tuple((str(s), int(l)) for s, l in doc["predictors"])
        disc = doc.get("discounts")
        discounts = (Discounts(float(disc[0]), float(disc[1]))
                     if disc else Discounts(0.99, 0.95))
        prior = None
        if "n0" in doc or "s0" in doc:
            prior = default_agent_prior(1 + len(preds),
                                        n0=float(doc.get("n0", 2.0)),
                                        s0=float(doc.get("s0", 0.01)))
        return AgentSpec(str(doc["name"]), preds, discounts, prior)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad agent spec {doc!r}: {exc}") from exc


@dataclass
class ForecastRecord:
    method: str
    horizon: int
    issue_idx: int
    target_idx: int
    mean: float
    sd: float
    density: float
    window_end: int  # last data row index that influenced this forecast


@dataclass
class PipelineResult:
    config: PipelineConfig
    forecasts: pd.DataFrame
    metrics: pd.DataFrame
    summary: dict
    posterior_theta: pd.DataFrame
    posterior_latents: pd.DataFrame
    posterior_r2: pd.DataFrame
    audit_violations: list[str]
    out_files: list[Path]


def _position_of(data: pd.DataFrame, label: str, what: str) -> int:
    matches = np.flatnonzero(data.index == label)
    if matches.size != 1:
        raise ConfigError(f"{what} {label!r} not found in data dates")
    return int(matches[0])


def _bps_config_for(cfg: PipelineConfig, n_agents: int, k: int) -> BpsConfig:
    base = default_bps_config(n_agents, horizon=k, mcmc=cfg.mcmc)
    over = cfg.bps_overrides.get(k if k == 1 else None, {})
    kwargs = {}
    if "discounts" in over:
        d = over["discounts"]
        kwargs["discounts"] = Discounts(float(d[0]), float(d[1]))
    prior_kw = {}
    for key in ("n0", "s0"):
        if key in over:
            prior_kw[key] = float(over[key])
    if prior_kw:
        p = base.prior
        kwargs["prior"] = DlmPosterior(
            p.m, p.C, prior_kw.get("n0", p.n), prior_kw.get("s0", p.s))
    if "is_proposals" in over:
        kwargs["is_proposals"] = int(over["is_proposals"])
    return replace(base, **kwargs) if kwargs else base


def run_pipeline(cfg: PipelineConfig) -> PipelineResult:
    """Run the full protocol and write the result bundle to cfg.out_dir."""
    data = ingest(cfg.data_path, cfg.date_column, cfg.series_map)
    if cfg.target not in data.columns:
        raise ConfigError(f"target series {cfg.target!r} not in data")
    i_train = _position_of(data, cfg.train_end, "train_end")
    i_calib = _position_of(data, cfg.calib_end, "calib_end")
    i_test = _position_of(data, cfg.test_end, "test_end")
    if not (i_train < i_calib < i_test):
        raise ConfigError("periods must satisfy train_end < calib_end < test_end")

    specs = cfg.agent_specs
    if not specs:
        others = [c for c in data.columns if c != cfg.target]
        if len(others) < 2:
            raise ConfigError("default agent set needs two non-target series; "
                              "provide explicit agent specs")
        specs = tuple(default_agent_specs(cfg.target, others[:2]))
    try:
        agents = [build_agent(s, data, cfg.target) for s in specs]
    except ValueError as exc:
        raise DataError(str(exc)) from exc

    t0 = i_train + 1  # first synthesis-window target (calibration start)
    kmax = max(max(cfg.horizons), 1)
    min_issue = max(a.start for a in agents)
    if t0 - kmax <= min_issue:
        raise ConfigError(
            f"training period too short: calibration start {cfg.calib_end!r} "
            f"needs agent states {kmax} steps earlier")
    if i_calib - max(cfg.horizons) <= t0:
        raise ConfigError("calibration period too short for the horizons")

    panel_horizons = sorted(set(cfg.horizons) | {1})
    panels = {}
    for k in panel_horizons:
        panels[k] = assemble_panel(agents, data, (t0, i_test), k,
                                   seed=cfg.seed, n_paths=cfg.agent_paths)
    bps_cfgs = {k: _bps_config_for(cfg, len(agents), k) for k in panel_horizons}

    y = data[cfg.target].to_numpy(dtype=float)
    test_targets = list(range(i_calib + 1, i_test + 1))
    records: list[ForecastRecord] = []

    for k in cfg.horizons:
        records.extend(_baseline_records(cfg, panels[k], k, test_targets))
    records.extend(_synthesis_records(cfg, panels, bps_cfgs, test_targets))

    records.sort(key=lambda r: (r.horizon, r.method, r.target_idx))
    forecasts = _records_frame(records, data)
    metrics = _metrics_frame(cfg, records, data, y)
    theta_df, lat_df, r2_df, retro_note = _retrospective(
        cfg, panels, bps_cfgs, data)

    violations: list[str] = []
    if cfg.audit:
        violations = audit_no_lookahead(cfg, data, records, panels, specs)

    summary = _summary(cfg, metrics, data, violations)
    out_files = _write_outputs(cfg, forecasts, metrics, summary,
                               theta_df, lat_df, r2_df)
    return PipelineResult(cfg, forecasts, metrics, summary,
                          theta_df, lat_df, r2_df, violations, out_files)


def _baseline_records(cfg: PipelineConfig, panel: AgentPanel, k: int,
                      test_targets: list[int]) -> list[ForecastRecord]:
    records = []
    t0 = panel.start
    y = panel.outcomes
    want_agents = "agents" in cfg.methods
    want_bma = "bma" in cfg.methods
    want_lin = "linear" in cfg.methods
    want_log = "log" in cfg.methods
    pdf_grid = None
    if want_bma:
        pdf_grid = np.empty((panel.T, panel.J))
        for i in range(panel.T):
            for j in range(panel.J):
                pdf_grid[i, j] = panel.cell(i, j).pdf(y[i])
        probs_after = np.empty((panel.T, panel.J))
        state = BmaState.uniform(panel.J)
        for i in range(panel.T):
            try:
                state = bma_update(state, pdf_grid[i])
            except ValueError as exc:
                raise PipelineError(
                    f"BMA at horizon {k}, target row {i}: {exc}") from exc
            probs_after[i] = state.probs
    for t in test_targets:
        i = t - t0
        s = t - k
        cells = panel.densities[i]
        try:
            if want_agents:
                for j, name in enumerate(panel.names):
                    d = cells[j]
                    records.append(ForecastRecord(
                        name, k, s, t, d.mean(), d.sd, float(d.pdf(y[i])), s))
            if want_lin:
                pool = linear_pool(cells)
                records.append(ForecastRecord(
                    METHOD_LINP, k, s, t, pool.mean(),
                    float(np.sqrt(pool.variance())), float(pool.pdf(y[i])), s))
            if want_log:
                pool = LogarithmicPool(cells)
                records.append(ForecastRecord(
                    METHOD_LOGP, k, s, t, pool.mean(),
                    float(np.sqrt(pool.variance())), float(pool.pdf(y[i])), s))
            if want_bma:
                # probabilities through outcomes observed at the issue time
                probs = probs_after[s - t0]
                mix = MixturePool(cells, probs)
                records.append(ForecastRecord(
                    METHOD_BMA, k, s, t, mix.mean(),
                    float(np.sqrt(mix.variance())), float(mix.pdf(y[i])), s))
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(
                f"baseline method at horizon {k}, target {t}: {exc}") from exc
    return records


def _make_synthesis_task(cfg: PipelineConfig, panels: dict, bps_cfgs: dict,
                         tset: set, kind: str, kfit: int, s: int,
                         ks: list[int]) -> dict:
    """Self-contained payload for one issue-time refit (picklable)."""
    panel = panels[1] if kind == "direct" else panels[kfit]
    window = panel.truncate(s - panel.start + 1)
    targets = []
    for k in ks:
        t = s + k
        if t not in tset:
            continue
        i = t - panels[k].start
        targets.append((k, t, panels[k].densities[i],
                        float(panels[k].outcomes[i])))
    return {
        "kind": kind, "kfit": kfit, "s": s, "seed": cfg.seed,
        "window": window,
        "bcfg": bps_cfgs[1] if kind == "direct" else bps_cfgs[kfit],
        "targets": targets,
        "label": METHOD_BPS if kind == "direct" else f"BPS({kfit})",
    }


def _run_synthesis_task(task: dict,
                        init: Optional[LatentStates] = None
                        ) -> tuple[list[ForecastRecord], LatentStates]:
    kind, kfit, s = task["kind"], task["kfit"], task["s"]
    label, bcfg, window = task["label"], task["bcfg"], task["window"]
    try:
        rng = np.random.default_rng(np.random.SeedSequence(
            (task["seed"], 7, kfit if kind == "custom" else 0, s)))
        init = _extend_warm(init, window, rng) if init is not None else None
        draws = gibbs(window.outcomes, window, bcfg, rng, init_state=init)
        records = []
        for k, t, cells, y_t in task["targets"]:
            # forecast density is the exact normal mixture over draws;
            # evaluating it directly keeps tails honest in log scores
            fc = forecast_k_components(draws, cells, k, bcfg, rng)
            records.append(ForecastRecord(
                label, k, s, t, fc.mean(),
                float(np.sqrt(fc.variance())), fc.pdf(y_t), s))
        return records, LatentStates(draws.x[-1], draws.phi[-1])
    except (FilterDegeneracyError, np.linalg.LinAlgError, ValueError) as exc:
        raise PipelineError(
            f"{label} at horizon {kfit}, issue index {s}: {exc}") from exc


def _synthesis_records(cfg: PipelineConfig, panels: dict, bps_cfgs: dict,
                       test_targets: list[int]) -> list[ForecastRecord]:
    """Per-issue-time MCMC refits and forecasts for BPS and BPS(k).

    Every task derives its RNG from (seed, model, issue), so the output
    is identical however tasks are partitioned across workers.
    """
    tset = set(test_targets)
    direct_needs: dict[int, list[int]] = {}
    for k in cfg.horizons:
        for t in test_targets:
            direct_needs.setdefault(t - k, []).append(k)
    plan = [("direct", 1, s, sorted(ks)) for s, ks in sorted(direct_needs.items())]
    if cfg.customized:
        for k in cfg.horizons:
            if k == 1:
                continue  # customized at k=1 is the standard model
            plan.extend(("custom", k, t - k, [k]) for t in test_targets)
    tasks = [_make_synthesis_task(cfg, panels, bps_cfgs, tset, *item)
             for item in plan]
    records: list[ForecastRecord] = []
    if cfg.workers > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            for recs, _ in pool.map(_run_synthesis_task, tasks):
                records.extend(recs)
        return records
    warm: dict[tuple, LatentStates] = {}
    for task in tasks:
        key = (task["kind"], task["kfit"])
        init = warm.get(key) if cfg.warm_start else None
        recs, last = _run_synthesis_task(task, init=init)
        records.extend(recs)
        if cfg.warm_start:
            warm[key] = last
    return records


def _extend_warm(prev: Optional[LatentStates], window: AgentPanel,
                 rng: np.random.Generator) -> Optional[LatentStates]:
    from .synthesis import init_latents
    if prev is None:
        return None
    T = window.T
    Tp = prev.x.shape[0]
    if Tp >= T:
        return LatentStates(prev.x[:T], prev.phi[:T])
    fresh = init_latents(window, rng)
    x = np.vstack([prev.x, fresh.x[Tp:]])
    phi = np.vstack([prev.phi, fresh.phi[Tp:]])
    return LatentStates(x, phi)


def _records_frame(records: list[ForecastRecord], data: pd.DataFrame) -> pd.DataFrame:
    dates = list(data.index)
    return pd.DataFrame({
        "method": [r.method for r in records],
        "horizon": [r.horizon for r in records],
        "issue_date": [dates[r.issue_idx] for r in records],
        "target_date": [dates[r.target_idx] for r in records],
        "mean": [r.mean for r in records],
        "sd": [r.sd for r in records],
        "density_at_outcome": [r.density for r in records],
    })


def _baseline_label(cfg: PipelineConfig, k: int) -> str:
    return f"BPS({k})" if (k > 1 and cfg.customized) else METHOD_BPS


def _metrics_frame(cfg: PipelineConfig, records: list[ForecastRecord],
                   data: pd.DataFrame, y: np.ndarray) -> pd.DataFrame:
    dates = list(data.index)
    rows = []
    by_mk: dict[tuple, list[ForecastRecord]] = {}
    for r in records:
        by_mk.setdefault((r.horizon, r.method), []).append(r)
    for (k, method), recs in sorted(by_mk.items()):
        recs.sort(key=lambda r: r.target_idx)
        base_label = _baseline_label(cfg, k)
        base = sorted(by_mk[(k, base_label)], key=lambda r: r.target_idx)
        if [r.target_idx for r in base] != [r.target_idx for r in recs]:
            raise PipelineError(
                f"metrics at horizon {k}, method {method}: "
                "target coverage differs from the baseline")
        points = np.array([r.mean for r in recs])
        outs = np.array([y[r.target_idx] for r in recs])
        dens = np.array([r.density for r in recs])
        base_dens = np.array([r.density for r in base])
        ms = msfe(points, outs)
        lp = (np.zeros(len(recs)) if method == base_label
              else lpdr(dens, base_dens))
        for i, r in enumerate(recs):
            rows.append((method, k, dates[r.target_idx],
                         float(ms[i]), float(lp[i]), r.sd))
    return pd.DataFrame(rows, columns=["method", "horizon", "t",
                                       "msfe", "lpdr", "fsd"])


def _retrospective(cfg: PipelineConfig, panels: dict, bps_cfgs: dict,
                   data: pd.DataFrame):
    theta_rows, lat_rows, r2_rows = [], [], []
    dates = list(data.index)
    note = {}
    retro_keys = sorted({k if (k > 1 and cfg.customized) else 1
                         for k in cfg.horizons})
    for k in retro_keys:
        panel = panels[k]
        bcfg = bps_cfgs[k]
        label = _baseline_label(cfg, k)
        rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 11, k)))
        draws = gibbs(panel.outcomes, panel, bcfg, rng)
        names = ["intercept"] + list(panel.names)
        qs = np.quantile(draws.thetas, [0.025, 0.975], axis=0)
        mean = draws.thetas.mean(axis=0)
        for i in range(panel.T):
            d = dates[panel.start + i]
            for c, cname in enumerate(names):
                theta_rows.append((label, k, d, cname, mean[i, c],
                                   qs[0, i, c], qs[1, i, c]))
        xq = np.quantile(draws.x, [0.025, 0.975], axis=0)
        xm = draws.x.mean(axis=0)
        err = panel.outcomes[None, :, None] - draws.x
        eq = np.quantile(err, [0.025, 0.975], axis=0)
        em = err.mean(axis=0)
        for i in range(panel.T):
            d = dates[panel.start + i]
            for j, aname in enumerate(panel.names):
                lat_rows.append((label, k, d, aname,
                                 xm[i, j], xq[0, i, j], xq[1, i, j],
                                 em[i, j], eq[0, i, j], eq[1, i, j]))
        dep = mc_empirical_r2(draws.x)
        for i in range(panel.T):
            d = dates[panel.start + i]
            for j, aname in enumerate(panel.names):
                r2_rows.append((label, k, d, "complete", aname,
                                dep.complete[i, j]))
            for idx, (a, b) in enumerate(dep.pair_labels):
                pl = f"{panel.names[a]}|{panel.names[b]}"
                r2_rows.append((label, k, d, "paired", pl, dep.paired[i, idx]))
        if k == max(cfg.horizons):
            note["retro_draws"] = draws.n_draws
    theta_df = pd.DataFrame(theta_rows, columns=[
        "model", "horizon", "t", "coef", "mean", "lo95", "hi95"])
    lat_df = pd.DataFrame(lat_rows, columns=[
        "model", "horizon", "t", "agent", "x_mean", "x_lo95", "x_hi95",
        "err_mean", "err_lo95", "err_hi95"])
    r2_df = pd.DataFrame(r2_rows, columns=[
        "model", "horizon", "t", "kind", "label", "r2"])
    return theta_df, lat_df, r2_df, note


def audit_no_lookahead(cfg: PipelineConfig, data: pd.DataFrame,
                       records: list[ForecastRecord], panels: dict,
                       specs: Sequence[AgentSpec]) -> list[str]:
    """Re-derive issuance times and recompute agent densities from
    truncated data; returns human-readable violation descriptions."""
    violations = []
    dates = list(data.index)
    seen = set()
    for r in records:
        if r.target_idx - r.horizon != r.issue_idx:
            violations.append(
                f"{r.method} h={r.horizon} target {dates[r.target_idx]}: "
                f"issue index {r.issue_idx} != target - horizon")
        if r.window_end > r.issue_idx:
            violations.append(
                f"{r.method} h={r.horizon} target {dates[r.target_idx]}: "
                f"used data through row {r.window_end} after issue {r.issue_idx}")
        key = (r.method, r.horizon, r.target_idx)
        if key in seen:
            violations.append(f"duplicate forecast for {key}")
        seen.add(key)
    # agent cells: rebuild on truncated data, must reproduce bit-identically
    i_calib = _position_of(data, cfg.calib_end, "calib_end")
    for k, panel in panels.items():
        targets = [panel.start + i for i in range(panel.T)
                   if panel.start + i > i_calib]
        for t in targets:
            issue = t - k
            trunc = data.iloc[:issue + 1]
            for j, spec in enumerate(specs):
                rebuilt = build_agent(spec, trunc, cfg.target)
                if k == 1:
                    d = agent_forecast(rebuilt, issue, 1)
                else:
                    rng = np.random.default_rng(
                        np.random.SeedSequence((cfg.seed, k, j, t)))
                    d = agent_forecast(rebuilt, issue, k, rng=rng,
                                       n_paths=cfg.agent_paths)
                stored = panel.cell(t - panel.start, j)
                if not (np.isclose(d.loc, stored.loc, rtol=1e-9, atol=1e-12)
                        and np.isclose(d.scale, stored.scale, rtol=1e-9, atol=1e-12)):
                    violations.append(
                        f"agent {spec.name} h={k} target {dates[t]}: density "
                        "changes when later data is removed (look-ahead)")
    return violations


def _summary(cfg: PipelineConfig, metrics: pd.DataFrame, data: pd.DataFrame,
             violations: list[str]) -> dict:
    table = {}
    for k in cfg.horizons:
        sub = metrics[metrics.horizon == k]
        base_label = _baseline_label(cfg, k)
        last = sub.groupby("method").tail(1).set_index("method")
        base_msfe = float(last.loc[base_label, "msfe"])
        table[str(k)] = {
            m: {
                "msfe": float(row.msfe),
                "pct_vs_bps": (0.0 if m == base_label else
                               float((1.0 - row.msfe / base_msfe) * 100.0)),
                "lpdr": float(row.lpdr),
                "fsd_mean": float(sub[sub.method == m].fsd.mean()),
            }
            for m, row in last.iterrows()
        }
    return {
        "seed": cfg.seed,
        "target": cfg.target,
        "periods": {"train_end": cfg.train_end, "calib_end": cfg.calib_end,
                    "test_end": cfg.test_end},
        "horizons": list(cfg.horizons),
        "baseline": {str(k): _baseline_label(cfg, k) for k in cfg.horizons},
        "mcmc": {"burn": cfg.mcmc.burn, "retained": cfg.mcmc.retained,
                 "thin": cfg.mcmc.thin},
        "table": table,
        "audit": {"enabled": cfg.audit, "violations": len(violations),
                  "details": violations[:20]},
    }


def _write_outputs(cfg: PipelineConfig, forecasts, metrics, summary,
                   theta_df, lat_df, r2_df) -> list[Path]:
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)
    files = []

    def _csv(df: pd.DataFrame, name: str):
        path = out / name
        df.to_csv(path, index=False, float_format="%.12g", lineterminator="\n")
        files.append(path)

    _csv(forecasts, "forecasts.csv")
    _csv(metrics, "metrics.csv")
    _csv(theta_df, "posterior_theta.csv")
    _csv(lat_df, "posterior_latents.csv")
    _csv(r2_df, "posterior_r2.csv")
    spath = out / "summary.json"
    spath.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    files.append(spath)
    return files
