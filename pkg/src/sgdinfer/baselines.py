"""Reference methods the SGD intervals are compared against.

Two baselines: the nonparametric bootstrap (resample rows, refit, take
quantiles of the refitted estimates) and plug-in normal approximation
intervals built from an estimated limit covariance divided by n.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .core import RngStream, empirical_quantile
from .inference import CiTable
from .models import Dataset, ModelSpec
from .solver import MaxIterationsError, fit_erm

__all__ = [
    "BootstrapConfig",
    "BootstrapFailure",
    "bootstrap_samples",
    "bootstrap_intervals",
    "normal_approx_cis",
]


class BootstrapFailure(RuntimeError):
    """Raised when too many bootstrap refits fail to converge."""


@dataclass(frozen=True)
class BootstrapConfig:
    replicates: int = 200
    solver_tol: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.replicates, (int, np.integer)) or self.replicates < 1:
            raise ValueError(f"replicates must be a positive integer, got {self.replicates!r}")
        if not (np.isfinite(self.solver_tol) and self.solver_tol > 0):
            raise ValueError(f"solver_tol must be positive and finite, got {self.solver_tol}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")


def bootstrap_samples(
    model: ModelSpec,
    data: Dataset,
    config: BootstrapConfig,
    theta_hat=None,
    with_iterations: bool = False,
):
    """Refit the model on row-resampled copies of the data.

    Replicate r draws its rows from the stream keyed by
    (config.seed, (r,)), so any subset of replicates can be reproduced
    without rerunning the others. Refits warm-start at the full-data fit
    (computed here when ``theta_hat`` is not supplied). A replicate whose
    refit does not converge is skipped with a warning naming the
    replicate; if more than 10 percent are skipped the whole run fails,
    since the surviving quantiles would be biased.

    Returns the (kept_replicates, p) array of refitted estimates; with
    ``with_iterations`` a (samples, iterations) pair where the count sums
    solver iterations over kept replicates, a closed-form refit counting
    as one.
    """
    if theta_hat is None:
        theta_hat = fit_erm(model, data, tol=config.solver_tol).theta_hat
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1)
    rows = []
    iterations = 0
    failed = 0
    for rep in range(config.replicates):
        gen = RngStream(config.seed, (rep,)).generator()
        take = gen.integers(0, data.n, size=data.n)
        resampled = data.subset(take)
        try:
            fit = fit_erm(model, resampled, tol=config.solver_tol, theta_init=theta_hat)
        except MaxIterationsError:
            failed += 1
            warnings.warn(
                f"bootstrap replicate {rep} failed to converge and was skipped",
                RuntimeWarning,
                stacklevel=2,
            )
            continue
        rows.append(fit.theta_hat)
        iterations += max(fit.iterations, 1)
    if failed > 0.10 * config.replicates:
        raise BootstrapFailure(
            f"{failed} of {config.replicates} bootstrap refits failed to converge; "
            "the skip rate exceeds 10 percent so quantiles would be unreliable"
        )
    samples = np.array(rows)
    if with_iterations:
        return samples, iterations
    return samples


def bootstrap_intervals(samples: np.ndarray, level: float = 0.95) -> CiTable:
    """Per-coordinate quantile intervals from bootstrap refits."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 2:
        raise ValueError(f"samples must be 2-d (replicates, p), got shape {samples.shape}")
    p = samples.shape[1]
    lower = np.empty(p)
    upper = np.empty(p)
    for j in range(p):
        lower[j] = empirical_quantile(samples[:, j], (1.0 - level) / 2.0)
        upper[j] = empirical_quantile(samples[:, j], (1.0 + level) / 2.0)
    return CiTable(level=float(level), lower=lower, upper=upper)


def normal_approx_cis(
    theta_hat: np.ndarray,
    limit_covariance: np.ndarray,
    n_obs: int,
    level: float = 0.95,
) -> CiTable:
    """theta_hat[i] +/- z * sqrt(limit_covariance[i, i] / n_obs) with z the
    standard normal quantile at (1 + level) / 2."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    if n_obs < 1:
        raise ValueError(f"n_obs must be a positive integer, got {n_obs}")
    theta_hat = np.asarray(theta_hat, dtype=np.float64).reshape(-1)
    cov = np.asarray(limit_covariance, dtype=np.float64)
    p = theta_hat.shape[0]
    if cov.shape != (p, p):
        raise ValueError(f"covariance has shape {cov.shape}, expected {(p, p)}")
    diag = np.diag(cov)
    if np.any(diag < 0) or not np.all(np.isfinite(diag)):
        raise ValueError("covariance diagonal must be finite and non-negative")
    z = float(ndtri((1.0 + level) / 2.0))
    half = z * np.sqrt(diag / n_obs)
    return CiTable(level=float(level), lower=theta_hat - half, upper=theta_hat + half)
