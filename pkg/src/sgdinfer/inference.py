"""Fixed-step SGD runs, segment averaging, and the intervals built from them.

The pipeline: run a single constant-step-size SGD chain, discard a burn-in
prefix, then chop the remainder into ``segments`` blocks of
``segment_len + discard`` steps. Averaging the first ``segment_len``
iterates of each block gives one draw per block; dropping the trailing
``discard`` iterates decorrelates consecutive draws. Rescaling the draws
about the point estimate by ``sqrt(scale * segment_len / n)`` turns their
spread into an estimate of the sampling distribution of the underlying
M-estimator, from which quantile intervals and a covariance estimate
follow directly.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .core import RngStream, empirical_quantile, sample_covariance
from .models import (
    BatchSpec,
    Dataset,
    Family,
    ModelSpec,
    PsiMode,
    _check_theta,
    _require_response,
)

__all__ = [
    "DivergenceError",
    "SgdConfig",
    "SegmentRun",
    "InferenceSamples",
    "CiTable",
    "AutocorrelationResult",
    "run_sgd_segments",
    "rescale_samples",
    "confidence_intervals",
    "inference_covariance",
    "prediction_interval",
    "segment_autocorrelation",
    "write_iterate_trace",
]


class DivergenceError(RuntimeError):
    """The SGD iterate left the usable region (non-finite, or non-positive
    for scalar families whose parameter must stay positive)."""

    def __init__(self, step: int, total: int):
        self.step = step
        super().__init__(
            f"sgd iterate became unusable at step {step} of {total}; "
            "reduce the step size or start closer to the optimum"
        )


@dataclass(frozen=True)
class SgdConfig:
    """Chain layout for one segment run.

    eta: constant step size.
    segment_len: iterates averaged per segment.
    discard: iterates dropped between segments.
    burn_in: iterates dropped before the first segment.
    segments: number of segments (one parameter draw each).
    batch: mini-batch sizes.
    theta_init: optional start point; family default used when omitted.
    seed: master seed for the index stream.
    """

    eta: float
    segment_len: int
    discard: int
    burn_in: int
    segments: int
    batch: BatchSpec = BatchSpec()
    theta_init: Optional[np.ndarray] = None
    seed: int = 0

    def __post_init__(self):
        if not (np.isfinite(self.eta) and self.eta > 0):
            raise ValueError(f"eta must be a positive finite float, got {self.eta}")
        for name in ("segment_len", "segments"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"{name} must be a positive integer, got {v!r}")
        for name in ("discard", "burn_in"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 0:
                raise ValueError(f"{name} must be a non-negative integer, got {v!r}")
        if not isinstance(self.seed, (int, np.integer)) or self.seed < 0:
            raise ValueError(f"seed must be a non-negative integer, got {self.seed!r}")

    @property
    def total_steps(self) -> int:
        return self.burn_in + self.segments * (self.segment_len + self.discard)


@dataclass(frozen=True)
class SegmentRun:
    """Output of one chain: per-segment iterate averages, their mean, the
    number of stochastic-gradient steps taken, and the optional full
    iterate trace (rows are steps 0..total, row 0 is the start point)."""

    segment_averages: np.ndarray
    point_estimate: np.ndarray
    gradient_evaluations: int
    trace: Optional[np.ndarray] = None


@dataclass(frozen=True)
class InferenceSamples:
    """Rescaled parameter draws plus the quantities used to build them."""

    samples: np.ndarray
    theta_hat: np.ndarray
    scale_factor: float
    segment_len: int
    n_obs: int


@dataclass(frozen=True)
class CiTable:
    """Per-coordinate two-sided interval endpoints at one level."""

    level: float
    lower: np.ndarray
    upper: np.ndarray


class AutocorrelationResult(NamedTuple):
    value: float
    degenerate: bool


def _default_start(model: ModelSpec, p: int) -> np.ndarray:
    if model.family in (Family.EXPONENTIAL_MLE, Family.POISSON_MLE):
        return np.ones(p)
    return np.zeros(p)


def _draw_without_replacement(gen: np.random.Generator, steps: int, n: int, k: int) -> np.ndarray:
    """steps x k index matrix, each row k distinct values in [0, n)."""
    if k == n:
        return np.tile(np.arange(n, dtype=np.int64), (steps, 1))
    if 3 * k <= n:
        # rejection: duplicates are rare, redraw only offending rows
        idx = gen.integers(0, n, size=(steps, k), dtype=np.int64)
        while True:
            srt = np.sort(idx, axis=1)
            bad = np.nonzero((srt[:, 1:] == srt[:, :-1]).any(axis=1))[0]
            if bad.size == 0:
                return idx
            idx[bad] = gen.integers(0, n, size=(bad.size, k), dtype=np.int64)
    out = np.empty((steps, k), dtype=np.int64)
    for row in range(steps):
        out[row] = gen.permutation(n)[:k]
    return out


def run_sgd_segments(
    model: ModelSpec,
    data: Dataset,
    config: SgdConfig,
    record_trace: bool = False,
) -> SegmentRun:
    """Run the chain and return segment averages and their mean.

    All sampling indices are drawn up front from a stream keyed by
    ``config.seed``, so a given (model, data, config) triple always yields
    bit-identical output. The two index factors of the modified logistic
    gradient come from distinct child streams and are independent.
    """
    p = data.p
    theta0 = config.theta_init
    if theta0 is None:
        theta0 = _default_start(model, p)
    theta0 = np.ascontiguousarray(_check_theta(model, theta0, data))

    total = config.total_steps
    root = RngStream(config.seed)
    trace = np.zeros((total + 1, p)) if record_trace else np.zeros((1, 1))

    x = data.features
    b, t, d, r = config.burn_in, config.segment_len, config.discard, config.segments
    eta = float(config.eta)

    if model.family is Family.LOGISTIC_MODIFIED:
        _require_response(model, data)
        gen_psi = root.child(0).generator()
        gen_ups = root.child(1).generator()
        if config.batch.s_psi > data.n and model.psi_mode is PsiMode.WITHOUT_REPLACEMENT:
            raise ValueError(
                f"s_psi={config.batch.s_psi} exceeds n={data.n} for sampling without replacement"
            )
        if model.psi_mode is PsiMode.WITHOUT_REPLACEMENT:
            idx_psi = _draw_without_replacement(gen_psi, total, data.n, config.batch.s_psi)
        else:
            idx_psi = gen_psi.integers(0, data.n, size=(total, config.batch.s_psi), dtype=np.int64)
        idx_ups = gen_ups.integers(0, data.n, size=(total, config.batch.s_upsilon), dtype=np.int64)
        avgs, _, bad = _kernels.chain_logistic_modified(
            x, data.response, idx_psi, idx_ups, model.c, theta0,
            eta, b, t, d, r, trace, record_trace,
        )
    else:
        gen = root.generator()
        idx = gen.integers(0, data.n, size=(total, config.batch.size), dtype=np.int64)
        if model.family is Family.MEAN_ESTIMATION:
            avgs, _, bad = _kernels.chain_mean(x, idx, theta0, eta, b, t, d, r, trace, record_trace)
        elif model.family is Family.LINEAR_REGRESSION:
            _require_response(model, data)
            avgs, _, bad = _kernels.chain_linear(
                x, data.response, idx, theta0, eta, b, t, d, r, trace, record_trace
            )
        elif model.family is Family.LOGISTIC_VANILLA:
            _require_response(model, data)
            avgs, _, bad = _kernels.chain_logistic(
                x, data.response, idx, theta0, eta, b, t, d, r, trace, record_trace
            )
        elif model.family is Family.EXPONENTIAL_MLE:
            avgs, _, bad = _kernels.chain_exponential(
                x[:, 0], idx, theta0, eta, b, t, d, r, trace, record_trace
            )
        elif model.family is Family.POISSON_MLE:
            avgs, _, bad = _kernels.chain_poisson(
                x[:, 0], idx, theta0, eta, b, t, d, r, trace, record_trace
            )
        else:
            raise ValueError(f"unsupported family {model.family}")

    if bad >= 0:
        raise DivergenceError(int(bad), total)

    return SegmentRun(
        segment_averages=avgs,
        point_estimate=avgs.mean(axis=0),
        gradient_evaluations=total,
        trace=trace if record_trace else None,
    )


def rescale_samples(
    run: SegmentRun,
    scale_factor: float,
    n_obs: int,
    segment_len: int,
    theta_hat: Optional[np.ndarray] = None,
) -> InferenceSamples:
    """Pull segment averages toward the point estimate so their spread
    matches the estimator's sampling noise at sample size ``n_obs``.

    Each draw becomes ``center + sqrt(scale_factor * segment_len / n_obs)
    * (average - center)``. The center defaults to the run's own point
    estimate; pass ``theta_hat`` to recentre on an external fit.
    """
    if not (np.isfinite(scale_factor) and scale_factor > 0):
        raise ValueError(f"scale_factor must be positive and finite, got {scale_factor}")
    if segment_len < 1:
        raise ValueError(f"segment_len must be a positive integer, got {segment_len}")
    if n_obs < 1:
        raise ValueError(f"n_obs must be a positive integer, got {n_obs}")
    center = run.point_estimate if theta_hat is None else np.asarray(theta_hat, dtype=np.float64)
    if center.shape != run.point_estimate.shape:
        raise ValueError(
            f"theta_hat has shape {center.shape}, expected {run.point_estimate.shape}"
        )
    factor = np.sqrt(scale_factor * segment_len / n_obs)
    samples = center + factor * (run.segment_averages - center)
    return InferenceSamples(
        samples=samples,
        theta_hat=np.array(center, copy=True),
        scale_factor=float(scale_factor),
        segment_len=int(segment_len),
        n_obs=int(n_obs),
    )


def confidence_intervals(samples: InferenceSamples, level: float = 0.95) -> CiTable:
    """Per-coordinate two-sided quantile intervals from the rescaled draws."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    draws = samples.samples
    if draws.shape[0] < 2:
        raise ValueError(f"need at least 2 draws for quantile intervals, got {draws.shape[0]}")
    lo_q, hi_q = (1.0 - level) / 2.0, (1.0 + level) / 2.0
    p = draws.shape[1]
    lower = np.empty(p)
    upper = np.empty(p)
    for j in range(p):
        lower[j] = empirical_quantile(draws[:, j], lo_q)
        upper[j] = empirical_quantile(draws[:, j], hi_q)
    return CiTable(level=float(level), lower=lower, upper=upper)


def inference_covariance(samples: InferenceSamples) -> np.ndarray:
    """Covariance of the rescaled draws: estimates the estimator's
    sampling covariance at the run's ``n_obs`` (not the per-observation
    limit covariance, which is this times ``n_obs``)."""
    return sample_covariance(samples.samples)


def prediction_interval(samples: InferenceSamples, x: np.ndarray, level: float = 0.95):
    """Quantile interval for the linear score ``x @ theta`` under the
    rescaled draws. Returns a (lower, upper) pair of floats."""
    if not (0.0 < level < 1.0):
        raise ValueError(f"level must lie strictly inside (0, 1), got {level}")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != samples.samples.shape[1]:
        raise ValueError(
            f"x has length {x.shape[0]}, draws have {samples.samples.shape[1]} coordinates"
        )
    if not np.all(np.isfinite(x)):
        raise ValueError("x must be finite")
    if samples.samples.shape[0] < 2:
        raise ValueError(
            f"need at least 2 draws for quantile intervals, got {samples.samples.shape[0]}"
        )
    scores = samples.samples @ x
    lo = empirical_quantile(scores, (1.0 - level) / 2.0)
    hi = empirical_quantile(scores, (1.0 + level) / 2.0)
    return float(lo), float(hi)


def segment_autocorrelation(run: SegmentRun) -> AutocorrelationResult:
    """Lag-1 correlation of consecutive segment averages, computed on the
    coordinate with the largest variance. A diagnostic for choosing the
    discard length: values near zero mean segments act independent.

    Returns ``degenerate=True`` (with value 0.0) when either lagged slice
    is constant, which makes the correlation undefined.
    """
    avgs = run.segment_averages
    if avgs.shape[0] < 3:
        raise ValueError(
            f"need at least 3 segments for a lag-1 correlation, got {avgs.shape[0]}"
        )
    coord = int(np.argmax(avgs.var(axis=0)))
    series = avgs[:, coord]
    a, b = series[:-1], series[1:]
    sa, sb = a.std(), b.std()
    if sa == 0.0 or sb == 0.0:
        return AutocorrelationResult(0.0, True)
    value = float(np.mean((a - a.mean()) * (b - b.mean())) / (sa * sb))
    return AutocorrelationResult(value, False)


def write_iterate_trace(run: SegmentRun, path) -> None:
    """Dump the recorded trace as CSV with columns step,coord_0,...,coord_{p-1}."""
    if run.trace is None:
        raise ValueError("run has no trace; pass record_trace=True to run_sgd_segments")
    p = run.trace.shape[1]
    header = "step," + ",".join(f"coord_{j}" for j in range(p))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(header + "\n")
        for i, row in enumerate(run.trace):
            fh.write(str(i) + "," + ",".join(format(v, ".17g") for v in row) + "\n")
