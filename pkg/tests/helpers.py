"""Shared oracles for the test suite."""

import numpy as np
from scipy import special

from volterra_mv.solver import Partition, ParticleEnsemble


def ensemble_from_paths(X, T=1.0, A=None, Mart=None):
    X = np.asarray(X, dtype=float)
    if X.ndim == 2:
        X = X[..., None]
    N, M1, d = X.shape
    return ParticleEnsemble(X=X, A=A, Mart=Mart, dW=np.zeros((N, M1 - 1, d)), partition=Partition.uniform(M1 - 1, T))


def brownian_paths(N, M, T=1.0, seed=0):
    rs = np.random.default_rng(seed)
    inc = rs.normal(scale=np.sqrt(T / M), size=(N, M))
    return np.concatenate([np.zeros((N, 1)), np.cumsum(inc, axis=1)], axis=1)


def rl_covariance(times, alpha):
    """Cov(X_s, X_t) for X_t = int_0^t (t-u)^{-alpha} dB_u, s <= t, via the Euler integral
    t^{1-alpha} t'^{-alpha} / (1-alpha) * 2F1(alpha, 1; 2-alpha; t/t')."""
    t = np.asarray(times, dtype=float)
    s, tp = np.minimum.outer(t, t), np.maximum.outer(t, t)
    C = s ** (1 - alpha) * tp ** (-alpha) / (1 - alpha) * special.hyp2f1(alpha, 1.0, 2 - alpha, s / tp)
    return C


def rl_paths(N, M, alpha, T=1.0, seed=0):
    """Exact Gaussian Riemann-Liouville samples on a uniform grid (covariance factorization)."""
    times = np.linspace(0, T, M + 1)[1:]
    L = np.linalg.cholesky(rl_covariance(times, alpha))
    z = np.random.default_rng(seed).normal(size=(N, M))
    return np.concatenate([np.zeros((N, 1)), z @ L.T], axis=1)


# criterion number -> one-line verdict, printed at the end of the session
ACCEPTANCE_LOG = {}
