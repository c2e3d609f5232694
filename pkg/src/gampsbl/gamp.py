"""Damped Gaussian approximate message passing for a linear-Gaussian model.

One inner solver: given fixed prior variances ``gamma``, noise variance
``sigma2`` and measurement matrix ``A``, iterate scalarized message
updates until the mean estimate stabilizes. Damping applies to the mean
updates ``s`` and ``x_hat`` only, never to the variance recursions. At a
fixed point the mean equals the exact Gaussian posterior mean for any
``A``, which is what makes this loop a drop-in E-step.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np


class GampDivergenceError(RuntimeError):
    """Raised when the message-passing state stops being finite."""

    def __init__(self, iteration):
        super().__init__(f"non-finite message-passing state at inner iteration {iteration}")
        self.iteration = iteration


@dataclass
class DampingConfig:
    """Damping factors and inner-loop stopping parameters."""

    theta_s: float = 1.0
    theta_x: float = 1.0
    k_max: int = 200
    eps_gamp: float = 1e-8
    bound_met: bool = True

    def __post_init__(self):
        for name in ("theta_s", "theta_x"):
            val = getattr(self, name)
            if not 0.0 < val <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1], got {val}")
        if self.k_max < 1:
            raise ValueError(f"k_max must be >= 1, got {self.k_max}")
        if not self.eps_gamp > 0:
            raise ValueError(f"eps_gamp must be positive, got {self.eps_gamp}")


@dataclass
class GampState:
    """Message-passing state; carries over between warm-started calls."""

    x_hat: np.ndarray
    tau_x: np.ndarray
    s: np.ndarray
    tau_s: np.ndarray
    r: np.ndarray
    tau_r: np.ndarray
    p: np.ndarray
    tau_p: np.ndarray

    @classmethod
    def cold_start(cls, m, n, tau_x0):
        """Zero means, prior variances: the standard cold start."""
        tau_x0 = np.broadcast_to(np.asarray(tau_x0, dtype=float), (n,)).copy()
        if np.any(tau_x0 <= 0):
            raise ValueError("tau_x0 must be strictly positive")
        return cls(
            x_hat=np.zeros(n),
            tau_x=tau_x0,
            s=np.zeros(m),
            tau_s=np.zeros(m),
            r=np.zeros(n),
            tau_r=np.full(n, np.inf),
            p=np.zeros(m),
            tau_p=np.zeros(m),
        )

    def copy(self):
        return GampState(**{k: np.copy(v) for k, v in self.__dict__.items()})


def precompute_s(A):
    """Componentwise squared matrix used by all variance recursions."""
    return A * A


def gx_gaussian(r, tau_r, gamma):
    """Posterior mean and its derivative for a zero-mean Gaussian prior.

    Input channel: estimate x ~ N(0, gamma) from the pseudo-observation
    r = x + N(0, tau_r). Returns ``(mean, derivative)``; the posterior
    variance is ``tau_r * derivative``.
    """
    g = gamma / (gamma + tau_r)
    return g * r, g


def gs_awgn(p, tau_p, y, sigma2):
    """Output-channel update for additive Gaussian noise.

    ``tau_p`` is a precision here: the channel estimate is
    z ~ N(p/tau_p, 1/tau_p) observed as y = z + N(0, sigma2). Returns the
    raw (undamped) ``s`` update and its variance ``tau_s``.
    """
    s_raw = (p / tau_p - y) / (sigma2 + 1.0 / tau_p)
    tau_s = tau_p / (1.0 + sigma2 * tau_p)
    return s_raw, tau_s


def gamp_iterate(A, S, y, gamma, sigma2, state, cfg, iter_hook=None):
    """Run the damped inner loop until the mean estimate stabilizes.

    Parameters
    ----------
    A : ndarray (m, n)
    S : ndarray (m, n)
        ``A * A`` componentwise (see :func:`precompute_s`).
    y : ndarray (m,)
    gamma : ndarray (n,)
        Fixed prior variances for this call (>= 0).
    sigma2 : float
        Working noise variance (> 0).
    state : GampState
        Starting point; pass a cold start or the previous call's state.
    cfg : DampingConfig
    iter_hook : callable, optional
        Called as ``iter_hook(k, rel_change_sq)`` after every iteration.

    Returns
    -------
    (GampState, int, bool)
        Final state, iterations used, and whether the relative squared
        change of ``x_hat`` dropped below ``cfg.eps_gamp``.

    Raises
    ------
    GampDivergenceError
        If the state becomes NaN or infinite.
    """
    x_hat = state.x_hat
    tau_x = state.tau_x
    s = state.s
    th_s, th_x = cfg.theta_s, cfg.theta_x
    converged = False
    k = 0
    tau_p = state.tau_p
    p = state.p
    tau_s = state.tau_s
    tau_r = state.tau_r
    r = state.r
    for k in range(1, cfg.k_max + 1):
        tau_p = 1.0 / (S @ tau_x)
        p = s + tau_p * (A @ x_hat)
        s_raw, tau_s = gs_awgn(p, tau_p, y, sigma2)
        s = (1.0 - th_s) * s + th_s * s_raw
        tau_r = 1.0 / (S.T @ tau_s)
        r = x_hat - tau_r * (A.T @ s)
        gx, gpx = gx_gaussian(r, tau_r, gamma)
        tau_x = tau_r * gpx
        x_new = (1.0 - th_x) * x_hat + th_x * gx
        # a diverging iterate overflows these sums; the inf lands in the
        # finiteness check below, so the overflow itself is not an error
        with np.errstate(over="ignore"):
            num = float(np.sum((x_new - x_hat) ** 2))
            den = float(np.sum(x_new**2))
        if not (math.isfinite(num) and math.isfinite(den)):
            raise GampDivergenceError(k)
        x_hat = x_new
        rel = num / den if den > 0.0 else (0.0 if num == 0.0 else math.inf)
        if iter_hook is not None:
            iter_hook(k, rel)
        if rel < cfg.eps_gamp:
            converged = True
            break
    out = GampState(
        x_hat=x_hat, tau_x=tau_x, s=s, tau_s=tau_s, r=r, tau_r=tau_r, p=p, tau_p=tau_p
    )
    return out, k, converged


def damping_threshold(theta_s, theta_x, m, n):
    """Convergence margin for damping factors on an m x n problem.

    The damped loop is expected to converge whenever this value exceeds
    the squared spectral-to-Frobenius norm ratio of the matrix. Larger is
    safer; the value grows as either damping factor shrinks.
    """
    if not 0.0 < theta_s <= 1.0:
        raise ValueError(f"theta_s must lie in (0, 1], got {theta_s}")
    if not 0.0 < theta_x <= 1.0:
        raise ValueError(f"theta_x must lie in (0, 1], got {theta_x}")
    if m < 1 or n < 1:
        raise ValueError("m and n must be positive")
    return 2.0 * ((2.0 - theta_x) * n + theta_x * m) / (theta_x * theta_s * m * n)


def spectral_norm_sq(A, tol=1e-4, max_iter=1000, seed=0):
    """Largest squared singular value via power iteration on the Gram operator.

    Deterministic for a given matrix (fixed internal seed). Converges to
    ``tol`` relative accuracy or stops at ``max_iter``.
    """
    m, n = A.shape
    rng = np.random.default_rng(seed)
    if m <= n:
        op = lambda v: A @ (A.T @ v)
        dim = m
    else:
        op = lambda v: A.T @ (A @ v)
        dim = n
    v = rng.standard_normal(dim)
    nv = np.linalg.norm(v)
    if nv == 0.0:
        return 0.0
    v /= nv
    lam_prev = 0.0
    lam = 0.0
    for _ in range(max_iter):
        w = op(v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v = w / nw
        if abs(lam - lam_prev) <= tol * abs(lam):
            break
        lam_prev = lam
    return lam


_THETA_GRID = tuple(round(0.1 * i, 1) for i in range(10, 0, -1))


def choose_damping(A, safety=1.1, k_max=200, eps_gamp=1e-8):
    """Pick the largest grid damping factor with a convergence margin.

    Walks theta over {1.0, 0.9, ..., 0.1} (theta_s = theta_x) and returns
    the first value whose :func:`damping_threshold` is at least ``safety``
    times the squared spectral-to-Frobenius ratio of ``A``. If no grid
    point qualifies the weakest one (0.1) is returned with
    ``bound_met=False`` and a warning.
    """
    if safety < 0:
        raise ValueError(f"safety must be non-negative, got {safety}")
    m, n = A.shape
    ratio = spectral_norm_sq(A) / float(np.sum(A * A))
    for theta in _THETA_GRID:
        if damping_threshold(theta, theta, m, n) >= safety * ratio:
            return DampingConfig(theta, theta, k_max=k_max, eps_gamp=eps_gamp)
    warnings.warn(
        "no damping factor on the grid satisfies the convergence margin; "
        "falling back to theta=0.1",
        RuntimeWarning,
    )
    return DampingConfig(0.1, 0.1, k_max=k_max, eps_gamp=eps_gamp, bound_met=False)
