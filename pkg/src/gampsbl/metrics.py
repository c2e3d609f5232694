"""Error metrics in decibels."""

import numpy as np

# Exact recovery would be -inf dB; it is reported as this floor instead so
# downstream aggregation never sees infinities.
NMSE_FLOOR_DB = -150.0


def nmse_db(x_hat, x_true):
    """Normalized mean squared error ``10 log10(||x_hat - x||^2 / ||x||^2)``.

    Raises if the reference is identically zero; exact recovery returns
    the floor value ``NMSE_FLOOR_DB``.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    x_true = np.asarray(x_true, dtype=float)
    den = float(np.sum(x_true**2))
    if den == 0.0:
        raise ValueError("x_true is identically zero; NMSE is undefined")
    ratio = float(np.sum((x_hat - x_true) ** 2)) / den
    if ratio == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(ratio), NMSE_FLOOR_DB)


def tnmse_db(X_hat, X_true):
    """Frame-averaged NMSE in dB: the per-frame error ratios are averaged
    first, then converted. Frames are columns. Every frame of the
    reference must be nonzero."""
    X_hat = np.asarray(X_hat, dtype=float)
    X_true = np.asarray(X_true, dtype=float)
    if X_hat.ndim == 1:
        X_hat = X_hat[:, None]
    if X_true.ndim == 1:
        X_true = X_true[:, None]
    den = np.sum(X_true**2, axis=0)
    if np.any(den == 0.0):
        raise ValueError("a frame of X_true is identically zero; NMSE is undefined")
    ratios = np.sum((X_hat - X_true) ** 2, axis=0) / den
    mean_ratio = float(np.mean(ratios))
    if mean_ratio == 0.0:
        return NMSE_FLOOR_DB
    return max(10.0 * np.log10(mean_ratio), NMSE_FLOOR_DB)
