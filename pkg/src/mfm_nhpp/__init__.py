"""Intensity clustering for gridded spatial point patterns with a
mixture-of-finite-mixtures Poisson model and a collapsed Gibbs sampler."""

from .assessment import MetricsReport, lpml, mae, rand_index
from .geo_ingest import GridCounts, PointPattern, RawEvent, bin_counts, parse_usgs_csv, to_unit_square
from .gibbs import ChainState, PosteriorDraws, init_state, run_chain, update_assignment, update_lambdas
from .mfm_model import (
    LogVnTable,
    MfmConfig,
    NumericalError,
    build_log_vn,
    k_prior_log_pmf,
    log_marginal_count,
    poisson_log_pmf,
)
from .sim_bench import ScenarioSpec, generate_counts, run_replicates
from .summary import FitSummary, coclustering_mean, dahl_select, k_posterior, posterior_mean_intensity, summarize

__version__ = "0.1.0"
