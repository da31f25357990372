"""Speculative parallel sampling for diffusion models in localization coordinates."""

from .engine import (
    RunStats,
    SpeculationWindow,
    VerifierResult,
    build_proposals,
    compute_target_means,
    default_theta,
    run_record,
    sample_asd,
    verify,
)
from .experiments import (
    EXPERIMENTS,
    SCHEMA,
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    default_config,
    load_config,
    run_experiment,
    standard_target,
    summarize,
    target_from_spec,
    target_to_spec,
)
from .grs import GrsOutcome, gaussian_tv, grs_step
from .numerics import QuadratureError, adaptive_simpson, bisect_increasing
from .schedules import (
    DdpmSchedule,
    HorizonError,
    InvalidScheduleError,
    ReparamMap,
    TimeGrid,
    compute_alpha,
    compute_r,
    euler_forward_step,
    make_ve_schedule,
    make_vp_schedule,
    ou_schedule,
    parse_schedule_spec,
    sl_time_of_ddpm,
)
from .sequential import (
    DenoisedOutput,
    Trajectory,
    denoised_output,
    sample_sequential,
    target_mean,
)
from .stats import (
    SlopeFit,
    TwoSampleReport,
    energy_statistic,
    energy_test,
    exchangeability_test,
    fit_scaling,
    ks_per_dim_test,
    sample_increment_blocks,
)
from .tape import RandomTape, TapeError
from .targets import (
    CountingOracle,
    McEstimate,
    MixtureTarget,
    OracleStats,
    PosteriorMeanOracle,
    UnreliableEstimateError,
    counted,
    covariance_trace,
    monte_carlo_posterior_mean,
    posterior_mean,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "CountingOracle",
    "DdpmSchedule",
    "DenoisedOutput",
    "EXPERIMENTS",
    "ExperimentConfig",
    "ExperimentResult",
    "GrsOutcome",
    "HorizonError",
    "InvalidScheduleError",
    "McEstimate",
    "MixtureTarget",
    "OracleStats",
    "PosteriorMeanOracle",
    "QuadratureError",
    "RandomTape",
    "ReparamMap",
    "RunStats",
    "SCHEMA",
    "SlopeFit",
    "SpeculationWindow",
    "TapeError",
    "TimeGrid",
    "Trajectory",
    "TwoSampleReport",
    "UnreliableEstimateError",
    "VerifierResult",
    "adaptive_simpson",
    "bisect_increasing",
    "build_proposals",
    "compute_alpha",
    "compute_r",
    "compute_target_means",
    "counted",
    "covariance_trace",
    "default_config",
    "default_theta",
    "denoised_output",
    "energy_statistic",
    "energy_test",
    "euler_forward_step",
    "exchangeability_test",
    "fit_scaling",
    "gaussian_tv",
    "grs_step",
    "ks_per_dim_test",
    "load_config",
    "make_ve_schedule",
    "make_vp_schedule",
    "monte_carlo_posterior_mean",
    "ou_schedule",
    "parse_schedule_spec",
    "posterior_mean",
    "run_experiment",
    "run_record",
    "sample_asd",
    "sample_increment_blocks",
    "sample_sequential",
    "sl_time_of_ddpm",
    "standard_target",
    "summarize",
    "target_from_spec",
    "target_mean",
    "target_to_spec",
    "verify",
]
