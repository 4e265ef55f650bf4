"""Model families: losses, gradients, Hessians and stochastic gradients.

Six estimation problems share one interface. Five of them are empirical
risk minimizers of a per-observation loss

    mean estimation        f_i(theta) = 1/2 ||x_i - theta||^2
    linear regression      f_i(theta) = 1/2 (theta'x_i - y_i)^2
    logistic regression    k_i(theta) = log(1 + exp(-y_i theta'x_i)),  y_i in {-1,+1}
    exponential MLE        f_i(theta) = -log(theta) + theta x_i,       theta > 0
    Poisson MLE            f_i(theta) = -x_i log(theta) + theta,       theta > 0

and the sixth, the squared shifted logistic risk

    f(theta) = 1/2 (c + k(theta))^2,   k(theta) = mean_i k_i(theta), c > 0,

is not an average of per-sample terms; its stochastic gradient multiplies
two independently subsampled factors (a scalar risk estimate and a gradient
estimate) so that the product is unbiased for (c + k) grad k.

Mini-batches draw indices uniformly with replacement and average the
per-sample gradients; each estimation family also exposes the factor
``scaling_factor`` used to spread segment averages into parameter samples.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .core import RngStream, _as_generator

__all__ = [
    "Family",
    "PsiMode",
    "ModelSpec",
    "BatchSpec",
    "Dataset",
    "loss",
    "gradient",
    "per_sample_gradients",
    "hessian",
    "gradient_at_indices",
    "stochastic_gradient",
    "modified_logistic_stochastic_gradient",
    "psi_factor_second_moment",
    "scaling_factor",
    "underlying_model",
]


class Family(enum.Enum):
    MEAN_ESTIMATION = "mean_estimation"
    LINEAR_REGRESSION = "linear_regression"
    LOGISTIC_VANILLA = "logistic_vanilla"
    LOGISTIC_MODIFIED = "logistic_modified"
    EXPONENTIAL_MLE = "exponential_mle"
    POISSON_MLE = "poisson_mle"


class PsiMode(enum.Enum):
    """How the scalar factor's sub-sample is drawn in the modified family."""

    WITH_REPLACEMENT = "with_replacement"
    WITHOUT_REPLACEMENT = "without_replacement"


_SCALAR_FAMILIES = (Family.EXPONENTIAL_MLE, Family.POISSON_MLE)
_LOGISTIC_FAMILIES = (Family.LOGISTIC_VANILLA, Family.LOGISTIC_MODIFIED)


@dataclass(frozen=True)
class ModelSpec:
    """A model family plus the modified-logistic parameters.

    ``c`` (positive level shift) and ``psi_mode`` apply only to
    ``Family.LOGISTIC_MODIFIED`` and default to 1.0 / with-replacement.
    """

    family: Family
    c: float = 1.0
    psi_mode: PsiMode = PsiMode.WITH_REPLACEMENT

    def __post_init__(self):
        if not isinstance(self.family, Family):
            raise ValueError(f"unknown model family: {self.family!r}")
        if self.family is Family.LOGISTIC_MODIFIED and not self.c > 0:
            raise ValueError("modified logistic requires c > 0")


@dataclass(frozen=True)
class BatchSpec:
    """Mini-batch sizes. ``size`` drives the plain families; the modified
    logistic family draws ``s_psi`` indices for the scalar factor and
    ``s_upsilon`` for the gradient factor."""

    size: int = 1
    s_psi: int = 1
    s_upsilon: int = 1

    def __post_init__(self):
        for name in ("size", "s_psi", "s_upsilon"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or v < 1:
                raise ValueError(f"BatchSpec.{name} must be a positive integer")


class Dataset:
    """Feature matrix plus optional response vector.

    ``features`` is coerced to a C-contiguous (n, p) float array;
    ``response`` to length n. Entries must be finite.
    """

    __slots__ = ("features", "response")

    def __init__(self, features, response=None):
        x = np.ascontiguousarray(features, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError(f"Dataset: features must be a non-empty (n, p) array, got shape {x.shape}")
        if not np.isfinite(x).all():
            raise ValueError("Dataset: features contain non-finite values")
        self.features = x
        if response is None:
            self.response = None
        else:
            y = np.ascontiguousarray(response, dtype=float).ravel()
            if y.shape[0] != x.shape[0]:
                raise ValueError(
                    f"Dataset: response length {y.shape[0]} does not match {x.shape[0]} rows"
                )
            if not np.isfinite(y).all():
                raise ValueError("Dataset: response contains non-finite values")
            self.response = y

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def p(self) -> int:
        return self.features.shape[1]

    def subset(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        out = Dataset.__new__(Dataset)
        out.features = self.features[idx]
        out.response = None if self.response is None else self.response[idx]
        return out


def _check_theta(model: ModelSpec, theta, data: Dataset) -> np.ndarray:
    th = np.asarray(theta, dtype=float).ravel()
    if th.shape[0] != data.p:
        raise ValueError(f"theta has length {th.shape[0]}, features have p={data.p}")
    if not np.isfinite(th).all():
        raise ValueError("theta contains non-finite values")
    if model.family in _SCALAR_FAMILIES:
        if data.p != 1:
            raise ValueError(f"{model.family.value} expects one feature column, got p={data.p}")
        if th[0] <= 0.0:
            raise ValueError(f"{model.family.value} requires theta > 0, got {th[0]}")
    return th


def _require_response(model: ModelSpec, data: Dataset) -> np.ndarray:
    if data.response is None:
        raise ValueError(f"{model.family.value} requires a response vector")
    if model.family in _LOGISTIC_FAMILIES:
        bad = ~np.isin(data.response, (-1.0, 1.0))
        if bad.any():
            raise ValueError(
                f"logistic labels must be -1 or +1; first offending row {int(np.argmax(bad))}"
            )
    return data.response


def _logistic_margins(theta, data: Dataset) -> np.ndarray:
    return data.response * (data.features @ theta)


def _logistic_losses(theta, data: Dataset) -> np.ndarray:
    # log(1 + exp(-z)) evaluated stably for either sign of z
    return np.logaddexp(0.0, -_logistic_margins(theta, data))


def _logistic_per_sample_gradients(theta, data: Dataset) -> np.ndarray:
    z = _logistic_margins(theta, data)
    return (-data.response * expit(-z))[:, None] * data.features


def _logistic_risk_hessian(theta, data: Dataset) -> np.ndarray:
    z = _logistic_margins(theta, data)
    w = expit(z) * expit(-z)
    return (data.features * w[:, None]).T @ data.features / data.n


def loss(model: ModelSpec, theta, data: Dataset) -> float:
    """Average objective value at ``theta``."""
    th = _check_theta(model, theta, data)
    fam = model.family
    if fam is Family.MEAN_ESTIMATION:
        diff = data.features - th
        return float(0.5 * np.mean(np.sum(diff * diff, axis=1)))
    if fam is Family.LINEAR_REGRESSION:
        y = _require_response(model, data)
        r = data.features @ th - y
        return float(0.5 * np.mean(r * r))
    if fam is Family.LOGISTIC_VANILLA:
        _require_response(model, data)
        return float(np.mean(_logistic_losses(th, data)))
    if fam is Family.LOGISTIC_MODIFIED:
        _require_response(model, data)
        k = float(np.mean(_logistic_losses(th, data)))
        return 0.5 * (model.c + k) ** 2
    x = data.features[:, 0]
    if fam is Family.EXPONENTIAL_MLE:
        return float(np.mean(-np.log(th[0]) + th[0] * x))
    if fam is Family.POISSON_MLE:
        return float(np.mean(-x * np.log(th[0]) + th[0]))
    raise ValueError(f"unknown family {fam!r}")


def per_sample_gradients(model: ModelSpec, theta, data: Dataset) -> np.ndarray:
    """The (n, p) matrix of per-observation gradients.

    Defined for the five sample-average families; the modified logistic
    objective is not an average over observations.
    """
    th = _check_theta(model, theta, data)
    fam = model.family
    if fam is Family.MEAN_ESTIMATION:
        return th[None, :] - data.features
    if fam is Family.LINEAR_REGRESSION:
        y = _require_response(model, data)
        return (data.features @ th - y)[:, None] * data.features
    if fam is Family.LOGISTIC_VANILLA:
        _require_response(model, data)
        return _logistic_per_sample_gradients(th, data)
    if fam is Family.EXPONENTIAL_MLE:
        return (data.features[:, 0] - 1.0 / th[0])[:, None]
    if fam is Family.POISSON_MLE:
        return (1.0 - data.features[:, 0] / th[0])[:, None]
    raise ValueError(
        "per_sample_gradients is undefined for the modified logistic objective; "
        "use modified_logistic_stochastic_gradient or gradient"
    )


def gradient(model: ModelSpec, theta, data: Dataset) -> np.ndarray:
    """Full gradient of the objective at ``theta``."""
    th = _check_theta(model, theta, data)
    if model.family is Family.LOGISTIC_MODIFIED:
        _require_response(model, data)
        k = float(np.mean(_logistic_losses(th, data)))
        grad_k = _logistic_per_sample_gradients(th, data).mean(axis=0)
        return (model.c + k) * grad_k
    return per_sample_gradients(model, th, data).mean(axis=0)


def hessian(model: ModelSpec, theta, data: Dataset) -> np.ndarray:
    """Full Hessian of the objective at ``theta``."""
    th = _check_theta(model, theta, data)
    fam = model.family
    if fam is Family.MEAN_ESTIMATION:
        return np.eye(data.p)
    if fam is Family.LINEAR_REGRESSION:
        _require_response(model, data)
        return data.features.T @ data.features / data.n
    if fam is Family.LOGISTIC_VANILLA:
        _require_response(model, data)
        return _logistic_risk_hessian(th, data)
    if fam is Family.LOGISTIC_MODIFIED:
        _require_response(model, data)
        k = float(np.mean(_logistic_losses(th, data)))
        grad_k = _logistic_per_sample_gradients(th, data).mean(axis=0)
        return np.outer(grad_k, grad_k) + (model.c + k) * _logistic_risk_hessian(th, data)
    x = data.features[:, 0]
    if fam is Family.EXPONENTIAL_MLE:
        return np.array([[1.0 / th[0] ** 2]])
    if fam is Family.POISSON_MLE:
        return np.array([[float(np.mean(x)) / th[0] ** 2]])
    raise ValueError(f"unknown family {fam!r}")


def gradient_at_indices(model: ModelSpec, theta, data: Dataset, indices) -> np.ndarray:
    """Average per-sample gradient over explicitly given rows."""
    idx = np.asarray(indices, dtype=np.int64).ravel()
    if idx.size == 0:
        raise ValueError("gradient_at_indices: empty index set")
    if idx.min() < 0 or idx.max() >= data.n:
        raise ValueError("gradient_at_indices: index out of range")
    return per_sample_gradients(model, theta, data.subset(idx)).mean(axis=0)


def stochastic_gradient(model: ModelSpec, theta, data: Dataset, batch: BatchSpec, rng) -> np.ndarray:
    """Mini-batch gradient: ``batch.size`` indices uniform with replacement.

    Unbiased for :func:`gradient`. Not defined for the modified logistic
    family, which has its own two-factor estimator.
    """
    if model.family is Family.LOGISTIC_MODIFIED:
        raise ValueError(
            "stochastic_gradient is undefined for the modified logistic family; "
            "use modified_logistic_stochastic_gradient"
        )
    gen = _as_generator(rng)
    idx = gen.integers(0, data.n, size=batch.size)
    return gradient_at_indices(model, theta, data, idx)


def _spawned_child(gen: np.random.Generator) -> np.random.Generator:
    seed = int(gen.integers(0, 2**63 - 1))
    return RngStream(seed).generator()


def modified_logistic_stochastic_gradient(
    model: ModelSpec, theta, data: Dataset, batch: BatchSpec, rng
) -> np.ndarray:
    """Two-factor stochastic gradient for the squared shifted logistic risk.

    Draws ``batch.s_psi`` indices for the scalar factor
    ``c + mean(k_i)`` (with or without replacement per ``model.psi_mode``)
    and, from an independent sub-stream, ``batch.s_upsilon`` indices with
    replacement for the gradient factor ``mean(grad k_i)``; returns their
    product. The factors are independent conditional on ``theta``, which
    makes the product unbiased for the full gradient.
    """
    if model.family is not Family.LOGISTIC_MODIFIED:
        raise ValueError("modified_logistic_stochastic_gradient requires the modified family")
    th = _check_theta(model, theta, data)
    _require_response(model, data)
    gen = _as_generator(rng)
    psi_gen = _spawned_child(gen)
    ups_gen = _spawned_child(gen)
    if model.psi_mode is PsiMode.WITHOUT_REPLACEMENT:
        if batch.s_psi > data.n:
            raise ValueError(f"s_psi={batch.s_psi} exceeds n={data.n} without replacement")
        psi_idx = psi_gen.choice(data.n, size=batch.s_psi, replace=False)
    else:
        psi_idx = psi_gen.integers(0, data.n, size=batch.s_psi)
    ups_idx = ups_gen.integers(0, data.n, size=batch.s_upsilon)
    losses = _logistic_losses(th, data)
    psi = model.c + float(losses[psi_idx].mean())
    grads = _logistic_per_sample_gradients(th, data)
    upsilon = grads[ups_idx].mean(axis=0)
    return psi * upsilon


def psi_factor_second_moment(model: ModelSpec, theta, data: Dataset, s_psi: int) -> float:
    """Exact second moment of the scalar factor ``c + mean(k_i over s_psi draws)``.

    Closed forms for both sampling modes; collapses to
    ``mean((c + k_i)^2)`` at ``s_psi = 1`` and, without replacement at
    ``s_psi = n``, to ``(c + k)^2``.
    """
    if model.family is not Family.LOGISTIC_MODIFIED:
        raise ValueError("psi_factor_second_moment requires the modified family")
    th = _check_theta(model, theta, data)
    _require_response(model, data)
    if not isinstance(s_psi, (int, np.integer)) or s_psi < 1:
        raise ValueError("s_psi must be a positive integer")
    n = data.n
    shifted = model.c + _logistic_losses(th, data)
    mean_sq = float(np.mean(shifted**2))
    mean_shifted = float(np.mean(shifted))
    s = float(s_psi)
    if model.psi_mode is PsiMode.WITH_REPLACEMENT:
        return mean_sq / s + (s - 1.0) / s * mean_shifted**2
    if s_psi > n:
        raise ValueError(f"s_psi={s_psi} exceeds n={n} without replacement")
    if n == 1:
        return mean_sq
    first = (1.0 - (s - 1.0) / (n - 1.0)) / s * mean_sq
    second = (s - 1.0) / s * n / (n - 1.0) * mean_shifted**2
    return first + second


def scaling_factor(model: ModelSpec, theta_hat, data: Dataset, batch: BatchSpec) -> float:
    """Sample-spreading factor for the rescaling step.

    Mini-batch-mean families spread by the batch size; the modified
    logistic family spreads by ``(c + k)^2`` over the exact second moment
    of its scalar factor.
    """
    if model.family is not Family.LOGISTIC_MODIFIED:
        return float(batch.size)
    th = _check_theta(model, theta_hat, data)
    _require_response(model, data)
    k = float(np.mean(_logistic_losses(th, data)))
    kg = psi_factor_second_moment(model, th, data, batch.s_psi)
    return (model.c + k) ** 2 / kg


def underlying_model(model: ModelSpec) -> ModelSpec:
    """The sample-average model whose minimizer the family targets.

    The modified logistic objective shares its minimizer with plain
    logistic regression; covariance targets (sandwich, observed
    information) are computed on that underlying risk.
    """
    if model.family is Family.LOGISTIC_MODIFIED:
        return ModelSpec(Family.LOGISTIC_VANILLA)
    return model
