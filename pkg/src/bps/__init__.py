"""Dynamic Bayesian predictive synthesis of forecast densities."""

from .agents import (AgentPanel, AgentSpec, FittedAgent, agent_forecast,
                     assemble_panel, build_agent, default_agent_prior,
                     default_agent_specs)
from .densities import ForecastDensity
from .dlm import (Discounts, DlmPosterior, FilterDegeneracyError, FilterResult,
                  PredictiveStats, StateTrajectory, backward_sample,
                  evolve_prior, ffbs, filter_update, forward_filter,
                  one_step_predict)
from .evaluation import (DependenceSeries, EvalSeries, density_value, lpdr,
                         mc_empirical_r2, msfe)
from .pipeline import (ConfigError, DataError, PipelineConfig, PipelineError,
                       PipelineResult, audit_no_lookahead, ingest, load_config,
                       run_pipeline)
from .pools import (BmaState, LogarithmicPool, MixturePool, bma_update,
                    linear_pool, log_pool)
from .simulate import (AuxSpec, RegimeSpec, SimConfig, default_sim_config,
                       generate)
from .synthesis import (BpsConfig, ForecastComponents, LatentConditional,
                        LatentStates, McmcSettings, PosteriorDraws,
                        default_bps_config, forecast_k_components,
                        forecast_k_direct, forecast_one_step, gibbs,
                        init_latents, latent_conditional, run_bps_k,
                        sample_latents)

__version__ = "0.1.0"
