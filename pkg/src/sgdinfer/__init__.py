"""Confidence intervals and covariance estimates from fixed-step-size SGD.

The package turns one long constant-step SGD trajectory into a cloud of
rescaled parameter samples (segment averages spread apart by a
model-specific factor) that behave like bootstrap replicates, then builds
intervals, covariances and prediction intervals from them. Classical
baselines (nonparametric bootstrap, normal approximations from sandwich or
observed-information covariance) and simulation harnesses for measuring
coverage live alongside.
"""

from .core import RngStream, empirical_quantile, invert_spd, sample_covariance, spectral_norm
from .models import BatchSpec, Dataset, Family, ModelSpec, PsiMode, scaling_factor
from .solver import FitResult, MaxIterationsError, fit_erm, fisher_information, sandwich_covariance
from .inference import (
    AutocorrelationResult,
    CiTable,
    DivergenceError,
    InferenceSamples,
    SegmentRun,
    SgdConfig,
    confidence_intervals,
    inference_covariance,
    prediction_interval,
    rescale_samples,
    run_sgd_segments,
    segment_autocorrelation,
    write_iterate_trace,
)
from .baselines import (
    BootstrapConfig,
    BootstrapFailure,
    bootstrap_intervals,
    bootstrap_samples,
    normal_approx_cis,
)

__version__ = "0.1.0"
