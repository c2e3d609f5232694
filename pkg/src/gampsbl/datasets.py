"""Synthetic measurement matrices and sparse recovery problem generators.

The i.i.d., nonzero-mean and column-correlated ensembles draw base
Gaussians with entry variance 1/n_cols, so their expected squared
Frobenius norm equals n_rows; the ill-conditioned ensemble is rescaled to
that norm exactly. The low-rank product keeps the conventional
(H @ G) / n_cols scale of its two standard-normal factors instead.
"""

import math
from dataclasses import dataclass, field

import numpy as np

ENSEMBLE_KINDS = (
    "iid_gaussian",
    "column_correlated",
    "low_rank_product",
    "ill_conditioned",
    "nonzero_mean",
)


@dataclass(frozen=True)
class EnsembleSpec:
    """Description of a random measurement-matrix ensemble.

    Parameters
    ----------
    kind : str
        One of ``ENSEMBLE_KINDS``.
    rows : int
        Number of measurements (rows). Must not exceed ``cols``.
    cols : int
        Signal dimension (columns).
    parameter : float
        Structure knob. Meaning depends on ``kind``:
        lag-1 column correlation for ``column_correlated``, inner-rank
        ratio rank/cols for ``low_rank_product``, condition number for
        ``ill_conditioned``, entry mean for ``nonzero_mean``. Ignored for
        ``iid_gaussian``.
    seed : int
        Seed of the generator that draws the matrix.
    """

    kind: str
    rows: int
    cols: int
    parameter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ENSEMBLE_KINDS:
            raise ValueError(
                f"kind must be one of {ENSEMBLE_KINDS}, got {self.kind!r}"
            )
        if int(self.rows) != self.rows or self.rows < 1:
            raise ValueError(f"rows must be a positive integer, got {self.rows}")
        if int(self.cols) != self.cols or self.cols < 1:
            raise ValueError(f"cols must be a positive integer, got {self.cols}")
        if self.rows > self.cols:
            raise ValueError(
                f"rows must not exceed cols, got rows={self.rows} cols={self.cols}"
            )
        if not math.isfinite(self.parameter):
            raise ValueError(f"parameter must be finite, got {self.parameter}")
        if self.kind == "column_correlated" and not 0.0 <= self.parameter < 1.0:
            raise ValueError(
                f"parameter (lag-1 correlation) must lie in [0, 1), got {self.parameter}"
            )
        if self.kind == "low_rank_product":
            if self.parameter <= 0.0:
                raise ValueError(
                    f"parameter (rank ratio) must be positive, got {self.parameter}"
                )
            if self.inner_rank() < 1:
                raise ValueError(
                    f"parameter (rank ratio) {self.parameter} rounds to rank 0"
                )
        if self.kind == "ill_conditioned":
            if self.parameter < 1.0:
                raise ValueError(
                    f"parameter (condition number) must be >= 1, got {self.parameter}"
                )
            if self.rows == 1 and self.parameter > 1.0:
                raise ValueError(
                    "parameter (condition number) must be 1 when rows == 1"
                )

    def inner_rank(self):
        """Effective inner rank for the low-rank product ensemble.

        The requested rank round(parameter * cols) is capped at ``rows``;
        ratios at or above rows/cols all produce a full-rank product.
        """
        return min(int(round(self.parameter * self.cols)), self.rows)

    def to_config_text(self):
        """Serialize to ``key=value`` lines (one field per line)."""
        return (
            f"kind={self.kind}\n"
            f"rows={self.rows}\n"
            f"cols={self.cols}\n"
            f"parameter={self.parameter!r}\n"
            f"seed={self.seed}\n"
        )

    @classmethod
    def from_config_text(cls, text):
        """Inverse of :meth:`to_config_text`."""
        fields = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            fields[key.strip()] = value.strip()
        try:
            return cls(
                kind=fields["kind"],
                rows=int(fields["rows"]),
                cols=int(fields["cols"]),
                parameter=float(fields["parameter"]),
                seed=int(fields["seed"]),
            )
        except KeyError as exc:
            raise ValueError(f"missing ensemble field {exc.args[0]!r}") from exc


@dataclass
class SmvProblem:
    """Single measurement vector instance: y = A x_true + noise."""

    A: np.ndarray
    y: np.ndarray
    x_true: np.ndarray
    sigma2: float
    support: np.ndarray
    spec: EnsembleSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        m, n = self.A.shape
        if self.y.shape != (m,):
            raise ValueError(f"y must have shape ({m},), got {self.y.shape}")
        if self.x_true.shape != (n,):
            raise ValueError(f"x_true must have shape ({n},), got {self.x_true.shape}")
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def k(self):
        return len(self.support)


@dataclass
class MmvProblem:
    """Multiple measurement vectors with a common support and AR(1) rows.

    Frames are stored as columns: ``Y`` is (m, n_frames) and ``X_true`` is
    (n, n_frames). Each active row of ``X_true`` follows a stationary AR(1)
    process with lag-1 correlation ``beta``.
    """

    A: np.ndarray
    Y: np.ndarray
    X_true: np.ndarray
    sigma2: float
    beta: float
    support: np.ndarray
    spec: EnsembleSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        m, n = self.A.shape
        if self.Y.ndim != 2 or self.Y.shape[0] != m:
            raise ValueError(f"Y must have shape ({m}, n_frames), got {self.Y.shape}")
        if self.X_true.shape != (n, self.Y.shape[1]):
            raise ValueError(
                f"X_true must have shape ({n}, {self.Y.shape[1]}), got {self.X_true.shape}"
            )
        if not self.sigma2 > 0:
            raise ValueError(f"sigma2 must be positive, got {self.sigma2}")
        if not abs(self.beta) < 1:
            raise ValueError(f"beta must satisfy |beta| < 1, got {self.beta}")

    @property
    def m(self):
        return self.A.shape[0]

    @property
    def n(self):
        return self.A.shape[1]

    @property
    def n_frames(self):
        return self.Y.shape[1]

    @property
    def k(self):
        return len(self.support)


def generate_matrix(spec):
    """Draw one matrix from the ensemble described by ``spec``.

    Deterministic: the same spec (including seed) always produces the
    byte-identical matrix.
    """
    rng = np.random.default_rng(spec.seed)
    m, n = spec.rows, spec.cols
    scale = 1.0 / math.sqrt(n)

    if spec.kind == "iid_gaussian":
        return rng.normal(0.0, scale, (m, n))

    if spec.kind == "nonzero_mean":
        return rng.normal(spec.parameter, scale, (m, n))

    if spec.kind == "column_correlated":
        rho = spec.parameter
        w = rng.normal(0.0, scale, (m, n))
        a = np.empty((m, n))
        a[:, 0] = w[:, 0]
        c = math.sqrt(1.0 - rho * rho)
        for j in range(1, n):
            a[:, j] = rho * a[:, j - 1] + c * w[:, j]
        return a

    if spec.kind == "low_rank_product":
        r = spec.inner_rank()
        h = rng.standard_normal((m, r))
        g = rng.standard_normal((r, n))
        return (h @ g) / n

    if spec.kind == "ill_conditioned":
        kappa = spec.parameter
        b = rng.standard_normal((m, n))
        u, _, vt = np.linalg.svd(b, full_matrices=False)
        if m == 1:
            svals = np.array([1.0])
        else:
            svals = kappa ** (-np.arange(m) / (m - 1))
        svals = svals * math.sqrt(m / np.sum(svals**2))
        return (u * svals) @ vt

    raise ValueError(f"unknown ensemble kind {spec.kind!r}")


def _validate_signal_args(n, k, snr_db):
    if int(k) != k or not 1 <= k <= n:
        raise ValueError(f"k must be an integer in [1, {n}], got {k}")
    if not math.isfinite(snr_db):
        raise ValueError(f"snr_db must be finite, got {snr_db}")


def generate_smv(spec, k, snr_db, signal_seed):
    """Generate a single-measurement-vector problem.

    The support has exactly ``k`` entries drawn uniformly without
    replacement; nonzero coefficients are standard normal. The noise
    variance is calibrated per instance so that the realized
    ``||A x||^2 / (m * sigma2)`` equals ``10**(snr_db/10)``.
    """
    a = generate_matrix(spec)
    m, n = a.shape
    _validate_signal_args(n, k, snr_db)
    rng = np.random.default_rng(signal_seed)
    support = np.sort(rng.choice(n, size=int(k), replace=False))
    x = np.zeros(n)
    x[support] = rng.standard_normal(int(k))
    z = a @ x
    signal_power = float(np.sum(z**2))
    if signal_power == 0.0:
        raise ValueError("realized signal power is zero; cannot calibrate noise")
    sigma2 = signal_power / (m * 10.0 ** (snr_db / 10.0))
    y = z + rng.normal(0.0, math.sqrt(sigma2), m)
    return SmvProblem(A=a, y=y, x_true=x, sigma2=sigma2, support=support, spec=spec)


def generate_mmv(spec, k, n_frames, beta, snr_db, signal_seed, gamma_rows=1.0):
    """Generate a multiple-measurement-vector problem with AR(1) rows.

    Active rows evolve as ``x[t] = beta * x[t-1] + sqrt(1-beta^2) * v[t]``
    with ``v[t] ~ N(0, gamma_rows)``, so every frame has the stationary
    marginal variance ``gamma_rows``. Noise is calibrated against the
    total realized signal energy across frames.
    """
    a = generate_matrix(spec)
    m, n = a.shape
    _validate_signal_args(n, k, snr_db)
    if int(n_frames) != n_frames or n_frames < 1:
        raise ValueError(f"n_frames must be a positive integer, got {n_frames}")
    if not abs(beta) < 1:
        raise ValueError(f"beta must satisfy |beta| < 1, got {beta}")
    k = int(k)
    n_frames = int(n_frames)
    gamma_rows = np.broadcast_to(np.asarray(gamma_rows, dtype=float), (k,))
    if np.any(gamma_rows <= 0):
        raise ValueError("gamma_rows must be positive")

    rng = np.random.default_rng(signal_seed)
    support = np.sort(rng.choice(n, size=k, replace=False))
    std = np.sqrt(gamma_rows)
    xs = np.empty((k, n_frames))
    xs[:, 0] = std * rng.standard_normal(k)
    c = math.sqrt(1.0 - beta * beta)
    for t in range(1, n_frames):
        xs[:, t] = beta * xs[:, t - 1] + c * std * rng.standard_normal(k)
    x = np.zeros((n, n_frames))
    x[support] = xs

    z = a @ x
    signal_power = float(np.sum(z**2))
    if signal_power == 0.0:
        raise ValueError("realized signal power is zero; cannot calibrate noise")
    sigma2 = signal_power / (m * n_frames * 10.0 ** (snr_db / 10.0))
    y = z + rng.normal(0.0, math.sqrt(sigma2), (m, n_frames))
    return MmvProblem(
        A=a, Y=y, X_true=x, sigma2=sigma2, beta=beta, support=support, spec=spec
    )
