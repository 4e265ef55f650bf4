"""Exact empirical-risk minimization and plug-in covariance estimates."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import invert_spd
from .models import (
    Dataset,
    Family,
    ModelSpec,
    gradient,
    hessian,
    loss,
    per_sample_gradients,
    underlying_model,
)

__all__ = [
    "FitResult",
    "MaxIterationsError",
    "fit_erm",
    "sandwich_covariance",
    "fisher_information",
]


@dataclass(frozen=True)
class FitResult:
    theta_hat: np.ndarray
    iterations: int
    final_gradient_norm: float


class MaxIterationsError(RuntimeError):
    """Newton failed to reach the gradient tolerance.

    ``last_iterate`` holds the final parameter vector, ``gradient_norm``
    its gradient norm.
    """

    def __init__(self, last_iterate: np.ndarray, gradient_norm: float, max_iter: int):
        self.last_iterate = last_iterate
        self.gradient_norm = gradient_norm
        super().__init__(
            f"Newton did not converge in {max_iter} iterations "
            f"(gradient norm {gradient_norm:.3e})"
        )


def _closed_form(model: ModelSpec, data: Dataset):
    fam = model.family
    if fam is Family.MEAN_ESTIMATION:
        return data.features.mean(axis=0)
    if fam is Family.LINEAR_REGRESSION:
        if data.response is None:
            raise ValueError("linear_regression requires a response vector")
        xtx = data.features.T @ data.features / data.n
        xty = data.features.T @ data.response / data.n
        return invert_spd(xtx) @ xty
    if fam is Family.EXPONENTIAL_MLE:
        xbar = float(data.features[:, 0].mean())
        if xbar <= 0.0:
            raise ValueError("exponential MLE undefined: sample mean is not positive")
        return np.array([1.0 / xbar])
    if fam is Family.POISSON_MLE:
        xbar = float(data.features[:, 0].mean())
        if xbar <= 0.0:
            raise ValueError("Poisson MLE undefined: sample mean is not positive")
        return np.array([xbar])
    return None


def fit_erm(
    model: ModelSpec,
    data: Dataset,
    tol: float = 1e-10,
    max_iter: int = 100,
    theta_init=None,
) -> FitResult:
    """Minimize the empirical risk exactly.

    Families with a closed-form minimizer (mean, linear regression,
    exponential and Poisson MLE) return it directly with ``iterations=0``.
    The logistic families run damped Newton from ``theta_init`` (zeros by
    default) until the gradient norm drops below ``tol``; exceeding
    ``max_iter`` raises :class:`MaxIterationsError` carrying the last
    iterate.
    """
    closed = _closed_form(model, data)
    if closed is not None:
        g = gradient(model, closed, data)
        return FitResult(closed, 0, float(np.linalg.norm(g)))

    if theta_init is None:
        theta = np.zeros(data.p)
    else:
        theta = np.asarray(theta_init, dtype=float).ravel().copy()
        if theta.shape[0] != data.p:
            raise ValueError(f"theta_init has length {theta.shape[0]}, expected {data.p}")

    current = loss(model, theta, data)
    for it in range(max_iter):
        g = gradient(model, theta, data)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return FitResult(theta, it, gnorm)
        step = invert_spd(hessian(model, theta, data)) @ g
        descent = float(g @ step)
        alpha = 1.0
        while alpha > 1e-12:
            candidate = theta - alpha * step
            value = loss(model, candidate, data)
            if np.isfinite(value) and value <= current - 1e-4 * alpha * descent:
                break
            alpha /= 2.0
        else:
            # no acceptable step length; stop at the floor
            raise MaxIterationsError(theta, gnorm, max_iter)
        theta = candidate
        current = value

    gnorm = float(np.linalg.norm(gradient(model, theta, data)))
    if gnorm <= tol:
        return FitResult(theta, max_iter, gnorm)
    raise MaxIterationsError(theta, gnorm, max_iter)


def sandwich_covariance(model: ModelSpec, theta_hat, data: Dataset) -> np.ndarray:
    """Heteroskedasticity-robust covariance H^-1 G H^-1 at ``theta_hat``.

    H is the Hessian of the underlying per-observation risk, G the second
    moment of its per-observation gradients. For the modified logistic
    family both are computed on the plain logistic risk, whose minimizer
    the family shares.
    """
    base = underlying_model(model)
    grads = per_sample_gradients(base, theta_hat, data)
    g_mat = grads.T @ grads / data.n
    h_inv = invert_spd(hessian(base, theta_hat, data))
    cov = h_inv @ g_mat @ h_inv
    return (cov + cov.T) / 2.0


def fisher_information(model: ModelSpec, theta_hat, data: Dataset) -> np.ndarray:
    """Observed information: the underlying risk's Hessian at ``theta_hat``."""
    return hessian(underlying_model(model), theta_hat, data)
