"""Sparse Bayesian learning for multiple measurement vectors with AR(1) rows.

Frames share a measurement matrix and a common sparsity profile; each
active coefficient row evolves as a stationary first-order autoregressive
process with known lag-1 correlation ``beta``. The E-step combines the
per-frame damped message-passing loop with exact Gaussian chain messages
passed forward and backward in time. Messages entering a frame act as a
Gaussian prior with mean/variance built from the forward pair
``(eta, psi)`` and the backward pair ``(theta, phi)``.

Backward messages are stored in natural parameters (``theta/phi`` and
``1/phi``) so that the no-information boundary at the last frame and the
``beta = 0`` case involve no infinities or divisions by zero.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exact import GAMMA_FLOOR, resolve_working_sigma2
from .gamp import DampingConfig, GampDivergenceError, GampState, choose_damping, precompute_s
from .smv import SolveResult, SolverDivergenceError


@dataclass
class TemporalMessages:
    """Gaussian chain messages for every coefficient row and frame.

    ``eta``/``psi`` are the forward message mean/variance. The backward
    message is kept as ``theta_w = theta/phi`` and ``phi_prec = 1/phi``;
    zeros encode the no-information message.
    """

    eta: np.ndarray
    psi: np.ndarray
    theta_w: np.ndarray
    phi_prec: np.ndarray

    @classmethod
    def init(cls, n, n_frames, gamma):
        psi = np.tile(np.asarray(gamma, dtype=float)[:, None], (1, n_frames))
        return cls(
            eta=np.zeros((n, n_frames)),
            psi=psi,
            theta_w=np.zeros((n, n_frames)),
            phi_prec=np.zeros((n, n_frames)),
        )

    def backward_mean_var(self):
        """Backward messages as (mean, variance); no-information gives
        mean 0 and infinite variance."""
        pos = self.phi_prec > 0
        safe = np.where(pos, self.phi_prec, 1.0)
        phi = np.where(pos, 1.0 / safe, np.inf)
        theta = np.where(pos, self.theta_w / safe, 0.0)
        return theta, phi

    def prior_natural(self):
        """Combined per-frame prior in natural parameters (weight, precision)."""
        return self.eta / self.psi + self.theta_w, 1.0 / self.psi + self.phi_prec


def forward_pass(msgs, r, tau_r, gamma, beta):
    """Refresh forward messages left to right.

    Frame 0 always restarts at the marginal prior (mean 0, variance
    ``gamma``). Later frames combine the previous frame's forward message
    with its pseudo-observation ``(r, tau_r)`` and push the result through
    the AR(1) transition. ``r=None`` (before the first within-frame
    update) propagates the prior alone.
    """
    n_frames = msgs.eta.shape[1]
    msgs.eta[:, 0] = 0.0
    msgs.psi[:, 0] = gamma
    bsq = beta * beta
    for t in range(1, n_frames):
        if r is None:
            h = msgs.psi[:, t - 1]
            mu = msgs.eta[:, t - 1]
        else:
            prec = 1.0 / msgs.psi[:, t - 1] + 1.0 / tau_r[:, t - 1]
            h = 1.0 / prec
            mu = (msgs.eta[:, t - 1] / msgs.psi[:, t - 1] + r[:, t - 1] / tau_r[:, t - 1]) * h
        msgs.eta[:, t] = beta * mu
        msgs.psi[:, t] = bsq * h + (1.0 - bsq) * gamma


def backward_pass(msgs, r, tau_r, gamma, beta):
    """Refresh backward messages right to left.

    The last frame carries the no-information message. With ``beta = 0``
    frames decouple, so every backward message is no-information; the
    natural-parameter recursion yields that limit without dividing by
    ``beta``.
    """
    n_frames = msgs.eta.shape[1]
    msgs.theta_w[:, n_frames - 1] = 0.0
    msgs.phi_prec[:, n_frames - 1] = 0.0
    if beta == 0.0:
        msgs.theta_w[:] = 0.0
        msgs.phi_prec[:] = 0.0
        return
    bsq = beta * beta
    for t in range(n_frames - 2, -1, -1):
        prec_c = msgs.phi_prec[:, t + 1] + 1.0 / tau_r[:, t + 1]
        w_c = msgs.theta_w[:, t + 1] + r[:, t + 1] / tau_r[:, t + 1]
        pos = prec_c > 0
        with np.errstate(divide="ignore"):
            v_c = np.where(pos, 1.0 / np.where(pos, prec_c, 1.0), np.inf)
        mu_c = np.where(pos, w_c / np.where(pos, prec_c, 1.0), 0.0)
        den = v_c + (1.0 - bsq) * gamma
        msgs.phi_prec[:, t] = bsq / den
        msgs.theta_w[:, t] = beta * mu_c / den


def _within_frames(A, S, Y, X, Tau_x, Sm, prior_w, prior_prec, sigma2, th_s, th_x):
    """One damped message-passing update of every frame (columns).

    The per-frame input channel is the Gaussian prior provided in natural
    parameters; everything else matches the single-vector inner loop.
    Returns the updated arrays plus the relative squared change averaged
    over frames.
    """
    tau_p = 1.0 / (S @ Tau_x)
    P = Sm + tau_p * (A @ X)
    s_raw = (P / tau_p - Y) / (sigma2 + 1.0 / tau_p)
    tau_s = tau_p / (1.0 + sigma2 * tau_p)
    Sm = (1.0 - th_s) * Sm + th_s * s_raw
    Tau_r = 1.0 / (S.T @ tau_s)
    R = X - Tau_r * (A.T @ Sm)
    G = 1.0 / (1.0 / Tau_r + prior_prec)
    F = (R / Tau_r + prior_w) * G
    X_new = (1.0 - th_x) * X + th_x * F
    # overflow here signals divergence; the caller checks for finiteness
    with np.errstate(over="ignore"):
        num = np.sum((X_new - X) ** 2, axis=0)
        den = np.sum(X_new**2, axis=0)
    ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num == 0, 0.0, np.inf))
    return X_new, G, Sm, R, Tau_r, tau_s, P, tau_p, float(np.mean(ratios))


def within_update(frame, y_t, A, S, msgs, t, sigma2, cfg):
    """One damped update of frame ``t`` given the current chain messages.

    ``frame`` is a :class:`~gampsbl.gamp.GampState`; a new state is
    returned, the input is not modified.
    """
    prior_w = msgs.eta[:, t] / msgs.psi[:, t] + msgs.theta_w[:, t]
    prior_prec = 1.0 / msgs.psi[:, t] + msgs.phi_prec[:, t]
    X, G, Sm, R, Tau_r, tau_s, P, tau_p, _ = _within_frames(
        A,
        S,
        y_t[:, None],
        frame.x_hat[:, None],
        frame.tau_x[:, None],
        frame.s[:, None],
        prior_w[:, None],
        prior_prec[:, None],
        sigma2,
        cfg.theta_s,
        cfg.theta_x,
    )
    return GampState(
        x_hat=X[:, 0],
        tau_x=G[:, 0],
        s=Sm[:, 0],
        tau_s=tau_s[:, 0],
        r=R[:, 0],
        tau_r=Tau_r[:, 0],
        p=P[:, 0],
        tau_p=tau_p[:, 0],
    )


@dataclass
class MmvState:
    """Per-frame message-passing state, frames as columns."""

    X: np.ndarray
    Tau_x: np.ndarray
    Sm: np.ndarray
    R: np.ndarray | None = None
    Tau_r: np.ndarray | None = None

    @classmethod
    def cold_start(cls, m, n, n_frames, tau_x0):
        tau = np.tile(np.asarray(tau_x0, dtype=float)[:, None], (1, n_frames))
        return cls(X=np.zeros((n, n_frames)), Tau_x=tau, Sm=np.zeros((m, n_frames)))


def refresh_messages(msgs, r, tau_r, gamma, beta, theta_msg=1.0):
    """One forward plus one backward sweep, damped toward the new values.

    ``theta_msg = 1`` replaces the messages with the fresh sweep;
    smaller values move the stored messages only part of the way, with
    the convex combination taken in natural parameters so no-information
    components stay exact. Both sweeps read the same ``(r, tau_r)``
    snapshot.
    """
    if theta_msg >= 1.0 or beta == 0.0:
        # decoupled frames carry no message content worth smoothing
        forward_pass(msgs, r, tau_r, gamma, beta)
        backward_pass(msgs, r, tau_r, gamma, beta)
        return
    psi_old = msgs.psi.copy()
    w_old = msgs.eta / psi_old
    theta_w_old = msgs.theta_w.copy()
    phi_prec_old = msgs.phi_prec.copy()
    forward_pass(msgs, r, tau_r, gamma, beta)
    backward_pass(msgs, r, tau_r, gamma, beta)
    keep = 1.0 - theta_msg
    prec = keep / psi_old + theta_msg / msgs.psi
    w = keep * w_old + theta_msg * msgs.eta / msgs.psi
    msgs.psi = 1.0 / prec
    msgs.eta = w * msgs.psi
    msgs.theta_w = keep * theta_w_old + theta_msg * msgs.theta_w
    msgs.phi_prec = keep * phi_prec_old + theta_msg * msgs.phi_prec
    # the first frame's forward message is the marginal prior by
    # definition, not a tracked quantity
    msgs.eta[:, 0] = 0.0
    msgs.psi[:, 0] = gamma


def estep_mmv(A, S, Y, gamma, beta, sigma2, cfg, st, msgs, theta_msg=1.0, iter_hook=None):
    """Run the temporal E-step to its own convergence.

    Schedule per inner iteration: refresh the chain messages (forward
    then backward, both from the previous iteration's pseudo-observations,
    damped by ``theta_msg``), then one within-frame update of every frame.
    Before the first within update the forward sweep propagates the prior
    alone and the backward messages stay at no-information. Stops when the
    frame-averaged relative squared change of the means drops below
    ``cfg.eps_gamp`` or after ``cfg.k_max`` iterations. Mutates ``st`` and
    ``msgs``; returns ``(iters, converged)``.
    """
    converged = False
    k = 0
    for k in range(1, cfg.k_max + 1):
        if st.R is None:
            forward_pass(msgs, None, None, gamma, beta)
        else:
            refresh_messages(msgs, st.R, st.Tau_r, gamma, beta, theta_msg)
        prior_w, prior_prec = msgs.prior_natural()
        X, G, Sm, R, Tau_r, _, _, _, rel = _within_frames(
            A, S, Y, st.X, st.Tau_x, st.Sm, prior_w, prior_prec, sigma2,
            cfg.theta_s, cfg.theta_x,
        )
        if not math.isfinite(rel):
            raise GampDivergenceError(k)
        st.X, st.Tau_x, st.Sm, st.R, st.Tau_r = X, G, Sm, R, Tau_r
        if iter_hook is not None:
            iter_hook(k, rel)
        if rel < cfg.eps_gamp:
            converged = True
            break
    return k, converged


def m_step_mmv(X, Tau_x, beta):
    """Prior variance update from the per-frame posterior moments.

    Averages the expected squared innovations of the AR(1) chain; the
    cross moment of adjacent frames is approximated as
    ``x[t] x[t-1] + beta * tau[t-1]``. With one frame this reduces exactly
    to the single-vector update ``x^2 + tau``. The result is clamped below
    at the shared variance floor.
    """
    if not abs(beta) < 1.0:
        raise ValueError(f"beta must satisfy |beta| < 1, got {beta}")
    n_frames = X.shape[1]
    if n_frames == 1:
        return np.maximum(X[:, 0] ** 2 + Tau_x[:, 0], GAMMA_FLOOR)
    bsq = beta * beta
    m2 = X**2 + Tau_x
    cross = X[:, 1:] * X[:, :-1] + beta * Tau_x[:, :-1]
    acc = np.sum(m2[:, 1:] + bsq * m2[:, :-1] - 2.0 * beta * cross, axis=1)
    return np.maximum((m2[:, 0] + acc / (1.0 - bsq)) / n_frames, GAMMA_FLOOR)


@dataclass
class GgampTsblOptions:
    """Outer-loop options for the multi-frame solver.

    The noise variance is fixed (``sigma2_value``, or the inflated true
    value when None); learning it from data is not supported here.
    ``k_max`` and ``eps_gamp`` shape the automatically chosen damping
    configuration and are ignored when ``damping`` is supplied.

    ``theta_msg`` damps the chain-message refresh the same way
    ``theta_s``/``theta_x`` damp the within-frame updates. The undamped
    refresh is transiently unstable for underdetermined frames once the
    lag-1 correlation is strong, so the default is conservative; on
    divergence the solver retries from scratch with the factor halved.
    Tolerances default tighter than the single-vector solver because the
    damped messages move the means slowly near the stop threshold.
    """

    damping: DampingConfig | None = None
    i_max: int = 1000
    eps_em: float = 1e-12
    gamma0: float = 1.0
    k_max: int = 2000
    eps_gamp: float = 1e-10
    sigma2_value: float | None = None
    theta_msg: float = 0.1
    max_retries: int = 3


def _mean_relative_change_sq(X_new, X_old):
    num = np.sum((X_new - X_old) ** 2, axis=0)
    den = np.sum(X_new**2, axis=0)
    ratios = np.where(den > 0, num / np.where(den > 0, den, 1.0), np.where(num == 0, 0.0, np.inf))
    return float(np.mean(ratios))


def _solve_mmv_once(A, S, Y, beta, sigma2, cfg, opts, theta_msg):
    m, n = A.shape
    n_frames = Y.shape[1]
    gamma = np.full(n, float(opts.gamma0))
    st = MmvState.cold_start(m, n, n_frames, tau_x0=gamma)
    msgs = TemporalMessages.init(n, n_frames, gamma)
    X_prev = np.zeros((n, n_frames))
    inner_per_em = []
    inner_flags = []
    inner_total = 0
    converged = False
    it = 0
    for it in range(1, opts.i_max + 1):
        try:
            iters, inner_ok = estep_mmv(
                A, S, Y, gamma, beta, sigma2, cfg, st, msgs, theta_msg
            )
        except GampDivergenceError as exc:
            raise SolverDivergenceError(
                em_iter=it,
                inner_iter=exc.iteration,
                last_state=st,
                gamma=gamma,
                sigma2=sigma2,
            ) from exc
        inner_total += iters
        inner_per_em.append(iters)
        inner_flags.append(inner_ok)
        gamma = np.maximum(m_step_mmv(st.X, st.Tau_x, beta), GAMMA_FLOOR)
        if _mean_relative_change_sq(st.X, X_prev) < opts.eps_em:
            converged = True
            break
        X_prev = st.X.copy()
    return SolveResult(
        x_hat=st.X,
        gamma=gamma,
        sigma2=sigma2,
        em_iters=it,
        inner_iters_total=inner_total,
        converged=converged,
        damping=cfg,
        inner_iters_per_em=inner_per_em,
        inner_converged=inner_flags,
        cost_trace=None,
        theta_msg=theta_msg,
    )


def solve_mmv(problem, opts=None):
    """Recover the sparse frame matrix of a multi-frame problem.

    Outer loop learns the shared row variances ``gamma``; each iteration
    warm-starts the temporal E-step from the previous state (including the
    chain messages) and applies :func:`m_step_mmv` with the variance
    floor. A diverging run is restarted from scratch with the message
    damping factor halved, up to ``opts.max_retries`` times; the factor
    actually used is reported on the result.

    Returns
    -------
    SolveResult
        With ``x_hat`` of shape (n, n_frames).
    """
    opts = opts or GgampTsblOptions()
    if not opts.gamma0 > 0:
        raise ValueError(f"gamma0 must be positive, got {opts.gamma0}")
    if not 0.0 < opts.theta_msg <= 1.0:
        raise ValueError(f"theta_msg must be in (0, 1], got {opts.theta_msg}")
    A, Y, beta = problem.A, problem.Y, problem.beta
    sigma2, _ = resolve_working_sigma2("fixed", opts.sigma2_value, problem.sigma2)
    S = precompute_s(A)
    cfg = opts.damping
    if cfg is None:
        cfg = choose_damping(A, k_max=opts.k_max, eps_gamp=opts.eps_gamp)
    theta_msg = opts.theta_msg
    for retry in range(opts.max_retries + 1):
        try:
            return _solve_mmv_once(A, S, Y, beta, sigma2, cfg, opts, theta_msg)
        except SolverDivergenceError:
            if retry == opts.max_retries:
                raise
            theta_msg *= 0.5
