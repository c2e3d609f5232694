"""Shared reference computations for the test suite.

Everything here is deliberately independent of the package internals:
brute-force dense linear algebra only, so the fast implementations have
something honest to be checked against.
"""

import numpy as np


def relsq(a, b):
    """Squared relative l2 distance ||a - b||^2 / ||b||^2."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.sum((a - b) ** 2) / np.sum(b**2))


def rel(a, b):
    """Relative l2 distance ||a - b|| / ||b||."""
    return float(np.sqrt(relsq(a, b)))


def dense_posterior_mean(A, Y, gamma, beta, sigma2):
    """Exact joint posterior mean of all frames under the AR(1) chain prior.

    Stacks every unknown (coefficient, frame) into one vector, builds the
    full joint precision (block-diagonal chain priors plus one likelihood
    block per frame) and solves it densely. Returns an (n, n_frames) array.
    """
    m, n = A.shape
    n_frames = Y.shape[1]
    tt = np.arange(n_frames)
    lag_cov = beta ** np.abs(np.subtract.outer(tt, tt))
    lag_prec = np.linalg.inv(lag_cov)
    prec = np.zeros((n * n_frames, n * n_frames))
    for i in range(n):
        block = slice(i * n_frames, (i + 1) * n_frames)
        prec[block, block] = lag_prec / gamma[i]
    gram = A.T @ A / sigma2
    rhs = np.zeros(n * n_frames)
    for t in range(n_frames):
        idx = np.arange(n) * n_frames + t
        prec[np.ix_(idx, idx)] += gram
        rhs[idx] = A.T @ Y[:, t] / sigma2
    return np.linalg.solve(prec, rhs).reshape(n, n_frames)
