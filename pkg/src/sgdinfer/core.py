"""Shared numerical primitives and deterministic random streams.

Everything downstream (solvers, the SGD inference engine, experiment
harnesses) builds on the handful of utilities in this module, so their
contracts are kept deliberately small and strict: inputs are validated,
errors carry enough context to act on, and all randomness flows through
:class:`RngStream` so that results are reproducible bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg.lapack import dpotrf, dpotri

__all__ = [
    "NotPositiveDefiniteError",
    "RngStream",
    "empirical_quantile",
    "sample_covariance",
    "invert_spd",
    "spectral_norm",
]


class NotPositiveDefiniteError(ValueError):
    """Raised when a Cholesky factorization hits a non-positive pivot.

    ``pivot`` is the 1-based index of the leading minor that failed.
    """

    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(
            f"matrix is not positive definite: leading minor of order {pivot} "
            "has a non-positive pivot"
        )


@dataclass(frozen=True)
class RngStream:
    """A named, splittable source of pseudo-random numbers.

    Two streams built from the same ``(master_seed, path)`` yield identical
    draws; streams with different paths are statistically independent by
    construction (Philox keyed through ``numpy.random.SeedSequence`` spawn
    keys). Streams are stateless handles: each call to :meth:`generator`
    returns a fresh generator positioned at the start of the stream.

    Parameters
    ----------
    master_seed : int
        Non-negative seed shared by a whole run.
    path : tuple of int
        Spawn-key path selecting one stream under the master seed. The
        one-argument form ``RngStream(seed)`` addresses the root stream;
        ``RngStream(seed, 3)`` addresses top-level stream 3.
    """

    master_seed: int
    path: tuple = field(default=(0,))

    def __init__(self, master_seed: int, path=(0,)):
        if not isinstance(master_seed, (int, np.integer)) or master_seed < 0:
            raise ValueError("master_seed must be a non-negative integer")
        if isinstance(path, (int, np.integer)):
            path = (int(path),)
        path = tuple(int(i) for i in path)
        if any(i < 0 for i in path):
            raise ValueError("stream path entries must be non-negative")
        object.__setattr__(self, "master_seed", int(master_seed))
        object.__setattr__(self, "path", path)

    def child(self, index: int) -> "RngStream":
        """Return the sub-stream at ``index`` under this stream."""
        return RngStream(self.master_seed, self.path + (int(index),))

    def generator(self) -> np.random.Generator:
        """A fresh ``numpy.random.Generator`` at the start of this stream."""
        seq = np.random.SeedSequence(entropy=self.master_seed, spawn_key=self.path)
        return np.random.Generator(np.random.Philox(seq))


def _as_generator(rng) -> np.random.Generator:
    # Ops accept either a stateless RngStream or an already-advancing
    # Generator; sequential callers pass the latter.
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng)!r}")


def empirical_quantile(samples, q: float) -> float:
    """Linear-interpolation empirical quantile of a 1-d sample.

    Sorts the samples and evaluates at fractional position ``(len-1)*q``,
    interpolating linearly between order statistics. ``q`` must lie in
    ``[0, 1]`` and ``samples`` must be non-empty and finite.
    """
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("empirical_quantile: empty sample")
    if not np.isfinite(q) or q < 0.0 or q > 1.0:
        raise ValueError(f"empirical_quantile: q={q!r} outside [0, 1]")
    if not np.isfinite(x).all():
        raise ValueError("empirical_quantile: samples contain non-finite values")
    x = np.sort(x)
    h = (x.size - 1) * float(q)
    lo = int(np.floor(h))
    hi = int(np.ceil(h))
    if lo == hi:
        return float(x[lo])
    return float(x[lo] + (h - lo) * (x[hi] - x[lo]))


def sample_covariance(samples) -> np.ndarray:
    """Unbiased sample covariance of row-stacked vectors.

    ``samples`` is a sequence of length-p vectors (or an (R, p) array),
    R >= 2. Returns the (p, p) matrix with denominator R - 1, symmetrized
    exactly.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise ValueError("sample_covariance: expected a sequence of equal-length vectors")
    r = x.shape[0]
    if r < 2:
        raise ValueError(f"sample_covariance: need at least 2 samples, got {r}")
    if not np.isfinite(x).all():
        raise ValueError("sample_covariance: samples contain non-finite values")
    centered = x - x.mean(axis=0)
    cov = centered.T @ centered / (r - 1)
    return (cov + cov.T) / 2.0


def invert_spd(m) -> np.ndarray:
    """Invert a symmetric positive definite matrix via Cholesky.

    Raises :class:`NotPositiveDefiniteError` naming the failing pivot when
    the matrix is not positive definite, and ``ValueError`` when it is not
    square, finite and symmetric.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"invert_spd: expected a square matrix, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise ValueError("invert_spd: matrix contains non-finite values")
    scale = np.abs(a).max()
    if not np.allclose(a, a.T, atol=1e-8 * max(scale, 1.0)):
        raise ValueError("invert_spd: matrix is not symmetric")
    c, info = dpotrf(a, lower=1)
    if info > 0:
        raise NotPositiveDefiniteError(pivot=int(info))
    if info < 0:
        raise ValueError(f"invert_spd: illegal value in argument {-info}")
    inv, info = dpotri(c, lower=1)
    if info != 0:
        raise NotPositiveDefiniteError(pivot=int(info))
    # dpotri fills one triangle only
    inv = np.tril(inv) + np.tril(inv, -1).T
    return (inv + inv.T) / 2.0


def spectral_norm(m, rel_tol: float = 1e-9, max_iter: int = 100_000) -> float:
    """Largest singular value via power iteration on ``m.T @ m``.

    Deterministic: the start vector comes from a fixed internal stream.
    Iterates until the Rayleigh quotient is stable to ``rel_tol``.
    """
    a = np.asarray(m, dtype=float)
    if a.ndim != 2:
        raise ValueError(f"spectral_norm: expected a matrix, got ndim={a.ndim}")
    if not np.isfinite(a).all():
        raise ValueError("spectral_norm: matrix contains non-finite values")
    if a.size == 0:
        return 0.0
    gram = a.T @ a
    scale = np.abs(gram).max()
    if scale == 0.0:
        return 0.0
    v = RngStream(0x5EC7, (0,)).generator().standard_normal(gram.shape[0])
    v /= np.linalg.norm(v)
    prev = 0.0
    for _ in range(max_iter):
        w = gram @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            # v landed in the null space; restart deterministically
            v = np.ones(gram.shape[0]) / np.sqrt(gram.shape[0])
            prev = 0.0
            continue
        v = w / norm
        rayleigh = float(v @ (gram @ v))
        if abs(rayleigh - prev) <= rel_tol * max(rayleigh, scale * 1e-30):
            return float(np.sqrt(max(rayleigh, 0.0)))
        prev = rayleigh
    return float(np.sqrt(max(prev, 0.0)))
