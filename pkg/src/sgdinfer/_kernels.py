"""Jitted inner loops for the SGD segment runner.

One kernel per model family, all with the same shape: run ``b`` burn-in
steps, then ``R`` blocks of ``t + d`` steps, averaging the first ``t``
post-update iterates of each block into a row of ``avgs`` and discarding
the trailing ``d``. Indices are pre-drawn outside (kernels consume no
randomness) so the jitted code is a pure function and streams stay
bit-stable. Kernels never raise: a non-finite (or out-of-domain) iterate
sets the returned ``bad_step`` to the offending global step index and the
wrapper turns that into an error. ``fastmath`` stays off so results are
reproducible across thread counts and machines with the same wheel.
"""

import numpy as np
from numba import njit

__all__ = [
    "chain_mean",
    "chain_linear",
    "chain_logistic",
    "chain_logistic_modified",
    "chain_exponential",
    "chain_poisson",
]


@njit(cache=True, inline="always")
def _expit(z):
    if z >= 0.0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


@njit(cache=True, inline="always")
def _log1pexp(z):
    # log(1 + exp(z)), stable for large |z|
    if z <= 0.0:
        return np.log1p(np.exp(z))
    return z + np.log1p(np.exp(-z))


@njit(cache=True)
def chain_mean(x, idx, theta0, eta, b, t, d, r, trace, want_trace):
    n, p = x.shape
    s = idx.shape[1]
    theta = theta0.copy()
    avgs = np.zeros((r, p))
    acc = np.zeros(p)
    step = 0
    if want_trace:
        trace[0] = theta
    for block in range(b + r * (t + d)):
        for j in range(p):
            acc_g = 0.0
            for m in range(s):
                acc_g += x[idx[step, m], j]
            theta[j] -= eta * (theta[j] - acc_g / s)
        ok = True
        for j in range(p):
            if not np.isfinite(theta[j]):
                ok = False
        if want_trace:
            trace[step + 1] = theta
        if not ok:
            return avgs, theta, step
        if step >= b:
            within = (step - b) % (t + d)
            if within < t:
                for j in range(p):
                    acc[j] += theta[j]
                if within == t - 1:
                    seg = (step - b) // (t + d)
                    for j in range(p):
                        avgs[seg, j] = acc[j] / t
                        acc[j] = 0.0
        step += 1
    return avgs, theta, -1


@njit(cache=True)
def chain_linear(x, y, idx, theta0, eta, b, t, d, r, trace, want_trace):
    n, p = x.shape
    s = idx.shape[1]
    theta = theta0.copy()
    avgs = np.zeros((r, p))
    acc = np.zeros(p)
    g = np.zeros(p)
    step = 0
    if want_trace:
        trace[0] = theta
    for block in range(b + r * (t + d)):
        for j in range(p):
            g[j] = 0.0
        for m in range(s):
            i = idx[step, m]
            dot = 0.0
            for j in range(p):
                dot += x[i, j] * theta[j]
            resid = (dot - y[i]) / s
            for j in range(p):
                g[j] += resid * x[i, j]
        ok = True
        for j in range(p):
            theta[j] -= eta * g[j]
            if not np.isfinite(theta[j]):
                ok = False
        if want_trace:
            trace[step + 1] = theta
        if not ok:
            return avgs, theta, step
        if step >= b:
            within = (step - b) % (t + d)
            if within < t:
                for j in range(p):
                    acc[j] += theta[j]
                if within == t - 1:
                    seg = (step - b) // (t + d)
                    for j in range(p):
                        avgs[seg, j] = acc[j] / t
                        acc[j] = 0.0
        step += 1
    return avgs, theta, -1


@njit(cache=True)
def chain_logistic(x, y, idx, theta0, eta, b, t, d, r, trace, want_trace):
    n, p = x.shape
    s = idx.shape[1]
    theta = theta0.copy()
    avgs = np.zeros((r, p))
    acc = np.zeros(p)
    g = np.zeros(p)
    step = 0
    if want_trace:
        trace[0] = theta
    for block in range(b + r * (t + d)):
        for j in range(p):
            g[j] = 0.0
        for m in range(s):
            i = idx[step, m]
            dot = 0.0
            for j in range(p):
                dot += x[i, j] * theta[j]
            w = -y[i] * _expit(-y[i] * dot) / s
            for j in range(p):
                g[j] += w * x[i, j]
        ok = True
        for j in range(p):
            theta[j] -= eta * g[j]
            if not np.isfinite(theta[j]):
                ok = False
        if want_trace:
            trace[step + 1] = theta
        if not ok:
            return avgs, theta, step
        if step >= b:
            within = (step - b) % (t + d)
            if within < t:
                for j in range(p):
                    acc[j] += theta[j]
                if within == t - 1:
                    seg = (step - b) // (t + d)
                    for j in range(p):
                        avgs[seg, j] = acc[j] / t
                        acc[j] = 0.0
        step += 1
    return avgs, theta, -1


@njit(cache=True)
def chain_logistic_modified(x, y, idx_psi, idx_ups, c, theta0, eta, b, t, d, r, trace, want_trace):
    n, p = x.shape
    s_psi = idx_psi.shape[1]
    s_ups = idx_ups.shape[1]
    theta = theta0.copy()
    avgs = np.zeros((r, p))
    acc = np.zeros(p)
    g = np.zeros(p)
    step = 0
    if want_trace:
        trace[0] = theta
    for block in range(b + r * (t + d)):
        psi = 0.0
        for m in range(s_psi):
            i = idx_psi[step, m]
            dot = 0.0
            for j in range(p):
                dot += x[i, j] * theta[j]
            psi += _log1pexp(-y[i] * dot)
        psi = c + psi / s_psi
        for j in range(p):
            g[j] = 0.0
        for m in range(s_ups):
            i = idx_ups[step, m]
            dot = 0.0
            for j in range(p):
                dot += x[i, j] * theta[j]
            w = -y[i] * _expit(-y[i] * dot) / s_ups
            for j in range(p):
                g[j] += w * x[i, j]
        ok = True
        for j in range(p):
            theta[j] -= eta * psi * g[j]
            if not np.isfinite(theta[j]):
                ok = False
        if want_trace:
            trace[step + 1] = theta
        if not ok:
            return avgs, theta, step
        if step >= b:
            within = (step - b) % (t + d)
            if within < t:
                for j in range(p):
                    acc[j] += theta[j]
                if within == t - 1:
                    seg = (step - b) // (t + d)
                    for j in range(p):
                        avgs[seg, j] = acc[j] / t
                        acc[j] = 0.0
        step += 1
    return avgs, theta, -1


@njit(cache=True)
def chain_exponential(x, idx, theta0, eta, b, t, d, r, trace, want_trace):
    # scalar rate parameter; iterates must stay positive
    s = idx.shape[1]
    theta = theta0[0]
    avgs = np.zeros((r, 1))
    acc = 0.0
    step = 0
    if want_trace:
        trace[0, 0] = theta
    for block in range(b + r * (t + d)):
        m = 0.0
        for q in range(s):
            m += x[idx[step, q]]
        theta -= eta * (m / s - 1.0 / theta)
        if want_trace:
            trace[step + 1, 0] = theta
        if not (np.isfinite(theta) and theta > 0.0):
            return avgs, np.array([theta]), step
        if step >= b:
            within = (step - b) % (t + d)
            if within < t:
                acc += theta
                if within == t - 1:
                    avgs[(step - b) // (t + d), 0] = acc / t
                    acc = 0.0
        step += 1
    return avgs, np.array([theta]), -1


@njit(cache=True)
def chain_poisson(x, idx, theta0, eta, b, t, d, r, trace, want_trace):
    s = idx.shape[1]
    theta = theta0[0]
    avgs = np.zeros((r, 1))
    acc = 0.0
    step = 0
    if want_trace:
        trace[0, 0] = theta
    for block in range(b + r * (t + d)):
        m = 0.0
        for q in range(s):
            m += x[idx[step, q]]
        theta -= eta * (1.0 - m / (s * theta))
        if want_trace:
            trace[step + 1, 0] = theta
        if not (np.isfinite(theta) and theta > 0.0):
            return avgs, np.array([theta]), step
        if step >= b:
            within = (step - b) % (t + d)
            if within < t:
                acc += theta
                if within == t - 1:
                    avgs[(step - b) // (t + d), 0] = acc / t
                    acc = 0.0
        step += 1
    return avgs, np.array([theta]), -1
