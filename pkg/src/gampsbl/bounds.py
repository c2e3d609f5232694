"""Lower-bound estimators that are told the true support and parameters.

Benchmarks only: neither is a practical solver, both exist to show how
close the blind solvers get to estimators with oracle side information.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .exact import SingularSystemError
from .gamp import DampingConfig, choose_damping, precompute_s
from .mmv import MmvState, TemporalMessages, estep_mmv


def genie_mmse(A, y, sigma2, support):
    """Linear MMSE estimate restricted to the true support.

    Assumes unit prior variance on the support coefficients and the true
    noise variance. Entries off the support are exactly zero; an empty
    support returns the zero vector.
    """
    n = A.shape[1]
    x = np.zeros(n)
    support = np.asarray(support, dtype=int)
    if support.size == 0:
        return x
    a_s = A[:, support]
    cov = a_s @ a_s.T
    cov[np.diag_indices(cov.shape[0])] += sigma2
    try:
        cho = cho_factor(cov, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "support-restricted measurement covariance is not positive definite",
            condition=np.linalg.cond(cov),
        ) from exc
    x[support] = a_s.T @ cho_solve(cho, y)
    return x


@dataclass
class SksResult:
    """Output of the support-aware temporal smoother."""

    x_hat: np.ndarray
    inner_iters: int
    converged: bool
    damping: DampingConfig


def sks(problem, gamma_rows=1.0, damping=None, eps_gamp=1e-12, k_max=20000):
    """Support-aware temporal smoother bound for a multi-frame problem.

    Runs the temporal E-step on the support-restricted matrix with the
    true noise variance, true lag-1 correlation and the true row variances
    (``gamma_rows``, scalar or per-support-row). No hyperparameter is
    learned. With one frame and ``beta = 0`` this reduces to
    :func:`genie_mmse` when ``gamma_rows`` is 1.

    Returns
    -------
    SksResult
        ``x_hat`` has shape (n, n_frames) with zeros off the support.
        ``converged=False`` flags an E-step that hit ``k_max``.
    """
    support = np.asarray(problem.support, dtype=int)
    n, n_frames = problem.n, problem.n_frames
    x = np.zeros((n, n_frames))
    if support.size == 0:
        return SksResult(x, 0, True, DampingConfig())
    a_s = problem.A[:, support]
    gamma = np.broadcast_to(np.asarray(gamma_rows, dtype=float), (support.size,)).copy()
    if np.any(gamma <= 0):
        raise ValueError("gamma_rows must be positive")
    cfg = damping if damping is not None else choose_damping(a_s)
    cfg = DampingConfig(
        theta_s=cfg.theta_s,
        theta_x=cfg.theta_x,
        k_max=k_max,
        eps_gamp=eps_gamp,
        bound_met=cfg.bound_met,
    )
    st = MmvState.cold_start(problem.m, support.size, n_frames, tau_x0=gamma)
    msgs = TemporalMessages.init(support.size, n_frames, gamma)
    iters, converged = estep_mmv(
        a_s, precompute_s(a_s), problem.Y, gamma, problem.beta, problem.sigma2,
        cfg, st, msgs,
    )
    x[support] = st.X
    return SksResult(x, iters, converged, cfg)
