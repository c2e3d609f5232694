"""Scikit-learn style regression estimators wrapping the solvers.

These follow the linear-model convention: ``fit(X, y)`` learns a sparse
coefficient vector for the design matrix ``X``, ``predict`` is the linear
map. Unlike the benchmark entry points they never see ground truth; the
noise variance is either supplied or learned where the solver supports
it.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datasets import MmvProblem
from .exact import EmSblOptions, _em_sbl_core
from .gamp import DampingConfig
from .mmv import GgampTsblOptions, solve_mmv
from .smv import GgampSblOptions, _solve_smv_core


def _resolve_noise(noise_var, y):
    """Initial working noise variance for data-only fits."""
    if noise_var == "em":
        guess = 0.01 * float(np.var(y))
        return (guess if guess > 0 else 1e-6), True
    value = float(noise_var)
    if not value > 0:
        raise ValueError(f"noise_var must be positive or 'em', got {noise_var!r}")
    return value, False


class EmSblRegression(RegressorMixin, BaseEstimator):
    """Sparse Bayesian learning by exact expectation maximization.

    Parameters
    ----------
    noise_var : float or "em", default="em"
        Observation noise variance; ``"em"`` learns it from the data
        starting at one percent of the target variance.
    max_iter : int, default=1000
        Maximum EM iterations.
    tol : float, default=1e-8
        Stop when the relative squared change of the mean estimate drops
        below this.

    Attributes
    ----------
    coef_ : ndarray (n_features,)
        Posterior mean of the coefficients.
    gamma_ : ndarray (n_features,)
        Learned prior variances; small values mark pruned coefficients.
    noise_var_ : float
        Final working noise variance.
    n_iter_ : int
    converged_ : bool
    """

    def __init__(self, noise_var="em", max_iter=1000, tol=1e-8):
        self.noise_var = noise_var
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype="float64", y_numeric=True)
        sigma2, learn = _resolve_noise(self.noise_var, y)
        opts = EmSblOptions(i_max=self.max_iter, eps_em=self.tol)
        result = _em_sbl_core(X, y, sigma2, learn, opts)
        self.coef_ = result.posterior.x_hat
        self.gamma_ = result.state.gamma
        self.noise_var_ = result.state.sigma2
        self.n_iter_ = result.em_iters
        self.converged_ = result.converged
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype="float64")
        return X @ self.coef_


class GgampSblRegression(RegressorMixin, BaseEstimator):
    """Sparse Bayesian learning with the damped message-passing E-step.

    Same model as :class:`EmSblRegression` but each E-step runs the
    matrix-multiply-only inner loop, which scales to much larger designs.

    Parameters
    ----------
    noise_var : float or "em", default="em"
    theta : float or None, default=None
        Damping factor for the mean updates; None selects it from the
        spectral properties of ``X``.
    max_iter : int, default=1000
    tol : float, default=1e-8
    k_max : int, default=200
        Inner-loop iteration cap per E-step.
    eps_gamp : float, default=1e-8
        Inner-loop stopping tolerance.

    Attributes
    ----------
    coef_, gamma_, noise_var_, n_iter_, converged_ : as in
        :class:`EmSblRegression`.
    n_inner_iter_ : int
        Total inner iterations across all E-steps.
    theta_ : float
        Damping factor actually used.
    """

    def __init__(
        self,
        noise_var="em",
        theta=None,
        max_iter=1000,
        tol=1e-8,
        k_max=200,
        eps_gamp=1e-8,
    ):
        self.noise_var = noise_var
        self.theta = theta
        self.max_iter = max_iter
        self.tol = tol
        self.k_max = k_max
        self.eps_gamp = eps_gamp

    def _damping(self):
        if self.theta is None:
            return None
        return DampingConfig(
            theta_s=self.theta,
            theta_x=self.theta,
            k_max=self.k_max,
            eps_gamp=self.eps_gamp,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype="float64", y_numeric=True)
        sigma2, learn = _resolve_noise(self.noise_var, y)
        opts = GgampSblOptions(
            damping=self._damping(),
            i_max=self.max_iter,
            eps_em=self.tol,
            k_max=self.k_max,
            eps_gamp=self.eps_gamp,
        )
        result = _solve_smv_core(X, y, sigma2, learn, opts)
        self.coef_ = result.x_hat
        self.gamma_ = result.gamma
        self.noise_var_ = result.sigma2
        self.n_iter_ = result.em_iters
        self.n_inner_iter_ = result.inner_iters_total
        self.converged_ = result.converged
        self.theta_ = result.damping.theta_x
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype="float64")
        return X @ self.coef_


class GgampTsblRegression(RegressorMixin, BaseEstimator):
    """Joint-sparse multi-target recovery with AR(1) temporal structure.

    Fits targets ``y`` of shape (n_samples, n_targets) where all targets
    share one sparsity profile and each coefficient row drifts with lag-1
    correlation ``temporal_corr`` across targets.

    Parameters
    ----------
    noise_var : float, default=1.0
        Observation noise variance (must be supplied; it is not learned
        in the multi-target model).
    temporal_corr : float, default=0.0
        Known lag-1 correlation of each coefficient row across targets.
    theta_msg : float, default=0.1
        Damping factor for the temporal chain-message refresh.
    theta, max_iter, tol, k_max, eps_gamp : as in
        :class:`GgampSblRegression` (the tolerances default tighter
        here; see the solver options).

    Attributes
    ----------
    coef_ : ndarray (n_targets, n_features)
    gamma_ : ndarray (n_features,)
    n_iter_, n_inner_iter_, converged_, theta_ : as above.
    """

    def __init__(
        self,
        noise_var=1.0,
        temporal_corr=0.0,
        theta=None,
        theta_msg=0.1,
        max_iter=1000,
        tol=1e-12,
        k_max=2000,
        eps_gamp=1e-10,
    ):
        self.noise_var = noise_var
        self.temporal_corr = temporal_corr
        self.theta = theta
        self.theta_msg = theta_msg
        self.max_iter = max_iter
        self.tol = tol
        self.k_max = k_max
        self.eps_gamp = eps_gamp

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype="float64", multi_output=True, y_numeric=True)
        if y.ndim == 1:
            y = y[:, None]
        if not float(self.noise_var) > 0:
            raise ValueError(f"noise_var must be positive, got {self.noise_var}")
        if not abs(self.temporal_corr) < 1:
            raise ValueError(
                f"temporal_corr must satisfy |corr| < 1, got {self.temporal_corr}"
            )
        damping = None
        if self.theta is not None:
            damping = DampingConfig(
                theta_s=self.theta,
                theta_x=self.theta,
                k_max=self.k_max,
                eps_gamp=self.eps_gamp,
            )
        problem = MmvProblem(
            A=X,
            Y=y,
            X_true=np.zeros((X.shape[1], y.shape[1])),
            sigma2=float(self.noise_var),
            beta=float(self.temporal_corr),
            support=np.arange(0),
        )
        opts = GgampTsblOptions(
            damping=damping,
            i_max=self.max_iter,
            eps_em=self.tol,
            k_max=self.k_max,
            eps_gamp=self.eps_gamp,
            sigma2_value=float(self.noise_var),
            theta_msg=float(self.theta_msg),
        )
        result = solve_mmv(problem, opts)
        self.coef_ = result.x_hat.T
        self.gamma_ = result.gamma
        self.n_iter_ = result.em_iters
        self.n_inner_iter_ = result.inner_iters_total
        self.converged_ = result.converged
        self.theta_ = result.damping.theta_x
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype="float64")
        out = X @ self.coef_.T
        return out[:, 0] if out.shape[1] == 1 else out
