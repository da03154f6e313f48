"""Exact 1-D Gaussian-process regression over integer sample indices.

The covariance is an Exp-Sine-Squared (periodic) kernel plus a white-noise
kernel. Hyperparameters are fitted by maximizing the log marginal likelihood
with bounded L-BFGS-B over log-parameters, using analytic gradients.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.optimize import minimize

__all__ = [
    "EssKernelParams",
    "FitBounds",
    "ForcePattern",
    "GPFitError",
    "GPModel",
    "Posterior",
    "WhiteKernelParams",
    "fit",
    "gram",
    "kernel_eval",
    "log_marginal_likelihood",
    "predict",
    "z_scores",
]

log = logging.getLogger(__name__)

JITTER_START = 1e-10
JITTER_MAX = 1e-4
STD_FLOOR = 1e-8
_PARAM_NAMES = ("sigma_p2", "length_scale", "period", "sigma_w2")


class GPFitError(RuntimeError):
    """Raised when the training covariance cannot be factorized."""


@dataclass(frozen=True)
class EssKernelParams:
    sigma_p2: float
    length_scale: float
    period: float

    def __post_init__(self):
        if not (self.sigma_p2 > 0 and self.length_scale > 0 and self.period > 0):
            raise ValueError(f"ESS parameters must be positive: {self}")


@dataclass(frozen=True)
class WhiteKernelParams:
    sigma_w2: float

    def __post_init__(self):
        if not self.sigma_w2 >= 0:
            raise ValueError(f"sigma_w2 must be non-negative: {self}")


@dataclass(frozen=True)
class ForcePattern:
    """Window of force magnitudes; sample ``i`` has time index ``start_index + i``."""

    start_index: int
    magnitudes: np.ndarray

    def __post_init__(self):
        mags = np.asarray(self.magnitudes, dtype=float)
        if mags.ndim != 1:
            raise ValueError("magnitudes must be one-dimensional")
        if np.any(mags < 0):
            raise ValueError("force magnitudes must be non-negative")
        object.__setattr__(self, "magnitudes", mags)

    def __len__(self):
        return len(self.magnitudes)

    @property
    def indices(self) -> np.ndarray:
        return self.start_index + np.arange(len(self.magnitudes))


@dataclass(frozen=True)
class FitBounds:
    """(low, high) per hyperparameter. Equal ends freeze that parameter."""

    sigma_p2: tuple[float, float] = (1e-4, 1e3)
    length_scale: tuple[float, float] = (1e-2, 1e2)
    period: tuple[float, float] | None = None  # defaults to [0.5 T*, 2 T*]
    sigma_w2: tuple[float, float] = (1e-6, 1e1)

    def resolved(self, period_init: float) -> list[tuple[float, float]]:
        period = self.period if self.period is not None else (0.5 * period_init, 2.0 * period_init)
        out = [self.sigma_p2, self.length_scale, period, self.sigma_w2]
        for name, (lo, hi) in zip(_PARAM_NAMES, out):
            if not 0 < lo <= hi:
                raise ValueError(f"invalid bounds for {name}: ({lo}, {hi})")
        return out


@dataclass(frozen=True)
class Posterior:
    mean: np.ndarray
    std: np.ndarray

    def __len__(self):
        return len(self.mean)


@dataclass(frozen=True, eq=False)
class GPModel:
    ess: EssKernelParams
    white: WhiteKernelParams
    obs_noise: float
    train_inputs: np.ndarray
    train_targets: np.ndarray
    offset: float = 0.0
    log_likelihood: float = float("nan")
    converged: bool = True
    jitter: float = 0.0
    _chol: np.ndarray = field(default=None, repr=False)
    _alpha: np.ndarray = field(default=None, repr=False)


def _ess(ess: EssKernelParams, lag) -> np.ndarray:
    s = np.sin(np.pi * np.abs(lag) / ess.period)
    return ess.sigma_p2 * np.exp(-2.0 / ess.length_scale**2 * s * s)


def kernel_eval(ess: EssKernelParams, white: WhiteKernelParams, ti, tj) -> float:
    """Sum-kernel covariance between two sample indices."""
    value = float(_ess(ess, float(ti) - float(tj)))
    if ti == tj:
        value += white.sigma_w2
    return value


def gram(ess: EssKernelParams, white: WhiteKernelParams, a, b) -> np.ndarray:
    """Covariance matrix between index vectors ``a`` and ``b``.

    The white term is added only where ``a[i] == b[j]``.
    """
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    lag = a[:, None] - b[None, :]
    K = _ess(ess, lag)
    if white.sigma_w2:
        K = K + white.sigma_w2 * (lag == 0)
    return K


def _cholesky(K: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor with adaptive diagonal jitter."""
    scale = float(np.mean(np.diag(K))) or 1.0
    jitter = 0.0
    while True:
        A = K if jitter == 0.0 else K + (jitter * scale) * np.eye(len(K))
        L, info = lapack.dpotrf(A, lower=1, clean=1)
        if info == 0:
            return L, jitter
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * (1 + 1e-9):
            raise GPFitError("covariance matrix is not positive definite even with maximal jitter")


def _is_unit_grid(t: np.ndarray) -> bool:
    return len(t) > 2 and bool(np.all(np.diff(t) == 1.0))


def _durbin(r: np.ndarray):
    """Levinson-Durbin on a symmetric Toeplitz first column.

    Returns (first column of the inverse, log-determinant), or None when a
    prediction-error variance turns non-positive (matrix not SPD).
    """
    n = len(r)
    a = np.zeros(n - 1)
    err = r[0]
    if not err > 0:
        return None
    logdet = math.log(err)
    for k in range(1, n):
        kappa = (r[k] - a[: k - 1] @ r[k - 1 : 0 : -1]) / err
        if k > 1:
            a[: k - 1] -= kappa * a[k - 2 :: -1]
        a[k - 1] = kappa
        err *= 1.0 - kappa * kappa
        if not err > 0:
            return None
        logdet += math.log(err)
    return np.concatenate(([1.0], -a)) / err, logdet


def _inverse_diagonal_sums(x: np.ndarray) -> np.ndarray:
    """Sum of each sub-diagonal of a symmetric Toeplitz inverse.

    ``x`` is the inverse's first column; Gohberg-Semencul writes the inverse as
    (L(x)L(x)^T - L(z)L(z)^T)/x[0] with z = (0, x[n-1], ..., x[1]), whose
    diagonal sums are weighted autocorrelations.
    """
    n = len(x)
    z = np.concatenate(([0.0], x[:0:-1]))
    w = n - np.arange(n, dtype=float)
    acf = np.correlate(w * x, x, mode="full")[n - 1 :] - np.correlate(w * z, z, mode="full")[n - 1 :]
    return acf / x[0]


def _lml_grad_toeplitz(logp: np.ndarray, n: int, y: np.ndarray, obs_noise: float, need_grad: bool):
    sigma_p2, ell, period, sigma_w2 = np.exp(logp)
    lag = np.arange(n, dtype=float)
    arg = np.pi * lag / period
    s = np.sin(arg)
    e = np.exp(-2.0 / ell**2 * s * s)
    col = sigma_p2 * e
    col[0] += sigma_w2 + obs_noise
    scale = col[0]
    jitter = 0.0
    while True:
        r = col.copy()
        r[0] += jitter * scale
        out = _durbin(r)
        if out is not None:
            break
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * (1 + 1e-9):
            raise GPFitError("covariance matrix is not positive definite even with maximal jitter")
    x, logdet = out
    alpha = linalg.solve_toeplitz(r, y, check_finite=False)
    lml = -0.5 * y @ alpha - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi)
    if not need_grad:
        return lml, None
    w = np.correlate(alpha, alpha, mode="full")[n - 1 :] - _inverse_diagonal_sums(x)
    w[1:] *= 2.0  # off-diagonal lags occur above and below the diagonal
    dk_p = sigma_p2 * e
    dk_l = dk_p * (4.0 / ell**2) * s * s
    dk_T = dk_p * (4.0 / ell**2) * s * np.cos(arg) * arg
    return lml, 0.5 * np.array([w @ dk_p, w @ dk_l, w @ dk_T, sigma_w2 * w[0]])


def _lml_and_grad(logp: np.ndarray, t: np.ndarray, y: np.ndarray, obs_noise: float, need_grad: bool = True):
    """Log marginal likelihood and its gradient w.r.t. log-hyperparameters.

    Unit-spaced inputs (every force window) take the O(n^2) Toeplitz route;
    anything else goes through a dense Cholesky factorization.
    """
    if _is_unit_grid(t):
        return _lml_grad_toeplitz(logp, len(t), y, obs_noise, need_grad)
    return _lml_grad_dense(logp, t, y, obs_noise, need_grad)


def _lml_grad_dense(logp: np.ndarray, t: np.ndarray, y: np.ndarray, obs_noise: float, need_grad: bool = True):
    sigma_p2, ell, period, sigma_w2 = np.exp(logp)
    n = len(t)
    lag = np.abs(t[:, None] - t[None, :])
    arg = np.pi * lag / period
    s = np.sin(arg)
    E = np.exp(-2.0 / ell**2 * s * s)
    K = sigma_p2 * E
    K[np.diag_indices(n)] += sigma_w2 + obs_noise
    L, _ = _cholesky(K)
    alpha = linalg.cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2 * math.pi)
    if not need_grad:
        return lml, None
    Kinv, info = lapack.dpotri(L, lower=1)
    if info != 0:
        raise GPFitError("failed to invert covariance factor")
    Kinv = np.tril(Kinv) + np.tril(Kinv, -1).T
    W = np.outer(alpha, alpha) - Kinv
    dK_p = sigma_p2 * E
    dK_l = dK_p * (4.0 / ell**2) * s * s
    dK_T = dK_p * (4.0 / ell**2) * s * np.cos(arg) * arg
    traces = [np.sum(W * dK_p), np.sum(W * dK_l), np.sum(W * dK_T), sigma_w2 * np.trace(W)]
    return lml, 0.5 * np.array(traces)


def log_marginal_likelihood(
    ess: EssKernelParams,
    white: WhiteKernelParams,
    inputs,
    targets,
    obs_noise: float = 0.0,
    gradient: bool = False,
):
    """Log marginal likelihood of (already de-meaned) targets.

    With ``gradient=True`` also returns d(lml)/d(log theta) for
    (sigma_p2, length_scale, period, sigma_w2).
    """
    if white.sigma_w2 == 0.0 and gradient:
        raise ValueError("gradient in log-space needs sigma_w2 > 0")
    logp = np.log([ess.sigma_p2, ess.length_scale, ess.period, max(white.sigma_w2, 1e-300)])
    t = np.asarray(inputs, dtype=float)
    y = np.asarray(targets, dtype=float)
    if white.sigma_w2 == 0.0:
        K = gram(ess, white, t, t)
        K[np.diag_indices(len(t))] += obs_noise
        L, _ = _cholesky(K)
        alpha = linalg.cho_solve((L, True), y)
        return -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(t) * math.log(2 * math.pi)
    lml, grad = _lml_and_grad(logp, t, y, obs_noise, need_grad=gradient)
    return (lml, grad) if gradient else lml


# log10 multipliers for (sigma_p2, length_scale, sigma_w2) at each restart
_RESTARTS = [(0, 0, 0), (1, 0.5, -1), (-1, -0.5, 1), (0, 1, 0), (0, -1, 0)]


def _start_points(x0: np.ndarray, lo: np.ndarray, hi: np.ndarray, n_starts: int) -> list[np.ndarray]:
    starts = []
    for k in range(n_starts):
        dp, dl, dw = _RESTARTS[k % len(_RESTARTS)]
        x = x0 + np.log(10.0) * np.array([dp, dl, 0.0, dw])
        starts.append(np.clip(x, lo, hi))
    return starts


def fit(
    pattern: ForcePattern,
    ess: EssKernelParams,
    white: WhiteKernelParams,
    obs_noise: float = 0.0,
    bounds: FitBounds | None = None,
    n_starts: int = 3,
    maxiter: int = 200,
    demean: bool = True,
) -> GPModel:
    """Fit hyperparameters by maximizing the log marginal likelihood.

    ``ess.period`` is the periodicity prior T*; it is both the starting point
    and the center of the default period bounds. The returned model keeps the
    Cholesky factor of the training covariance for prediction.

    If the optimizer does not converge the best iterate is kept and
    ``model.converged`` is False.
    """
    if len(pattern) < 2:
        raise ValueError("need at least two training samples")
    bounds = bounds or FitBounds()
    box = np.log(np.array(bounds.resolved(ess.period)))
    lo, hi = box[:, 0], box[:, 1]
    free = hi > lo
    t = pattern.indices.astype(float)
    f = pattern.magnitudes
    offset = float(f.mean()) if demean else 0.0
    y = f - offset

    x0 = np.log([ess.sigma_p2, ess.length_scale, ess.period, max(white.sigma_w2, 1e-12)])
    x0 = np.clip(x0, lo, hi)

    def ascend(start: np.ndarray, mask: np.ndarray):
        def objective(z):
            x = start.copy()
            x[mask] = z
            try:
                lml, grad = _lml_and_grad(x, t, y, obs_noise)
            except GPFitError:
                return 1e25, np.zeros(mask.sum())
            return -lml, -grad[mask]

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            res = minimize(
                objective,
                start[mask],
                jac=True,
                method="L-BFGS-B",
                bounds=list(zip(lo[mask], hi[mask])),
                options={"maxiter": maxiter},
            )
        x = start.copy()
        x[mask] = res.x
        return x, float(res.fun), bool(res.success)

    best_x, best_val, converged = x0.copy(), np.inf, False
    if free.any():
        for start in _start_points(x0, lo, hi, max(1, n_starts)):
            x, val, ok = ascend(start, free)
            if val < best_val:
                best_x, best_val, converged = x, val, ok
        if not np.isfinite(best_val) or best_val >= 1e25:
            raise GPFitError("covariance matrix is not positive definite at any optimizer iterate")
        if not converged:
            log.warning("GP hyperparameter optimization did not converge; keeping best iterate")
    else:
        converged = True

    sigma_p2, ell, period, sigma_w2 = np.exp(best_x)
    return condition(
        EssKernelParams(sigma_p2, ell, period),
        WhiteKernelParams(sigma_w2),
        pattern,
        obs_noise=obs_noise,
        demean=demean,
        converged=converged,
    )


def condition(
    ess: EssKernelParams,
    white: WhiteKernelParams,
    pattern: ForcePattern,
    obs_noise: float = 0.0,
    demean: bool = True,
    converged: bool = True,
) -> GPModel:
    """Build a model on ``pattern`` with fixed hyperparameters (no optimization)."""
    t = pattern.indices.astype(float)
    f = pattern.magnitudes
    offset = float(f.mean()) if demean else 0.0
    y = f - offset
    K = gram(ess, white, t, t)
    K[np.diag_indices(len(t))] += obs_noise
    L, jitter = _cholesky(K)
    alpha = linalg.cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * len(t) * math.log(2 * math.pi)
    return GPModel(
        ess=ess,
        white=white,
        obs_noise=obs_noise,
        train_inputs=t,
        train_targets=f,
        offset=offset,
        log_likelihood=float(lml),
        converged=converged,
        jitter=jitter,
        _chol=L,
        _alpha=alpha,
    )


def predict(model: GPModel, test_inputs) -> Posterior:
    """Posterior mean and standard deviation at ``test_inputs``.

    The standard deviation includes the white-noise term, so it describes a
    new noisy observation at that index.
    """
    ts = np.asarray(test_inputs, dtype=float).ravel()
    if ts.size == 0:
        return Posterior(np.empty(0), np.empty(0))
    Ks = gram(model.ess, model.white, ts, model.train_inputs)
    mean = Ks @ model._alpha + model.offset
    v = linalg.solve_triangular(model._chol, Ks.T, lower=True, check_finite=False)
    prior = model.ess.sigma_p2 + model.white.sigma_w2
    var = prior - np.einsum("ij,ij->j", v, v)
    return Posterior(mean, np.sqrt(np.maximum(var, 0.0)))


def z_scores(posterior: Posterior, observed) -> np.ndarray:
    """Standardized residuals of ``observed`` against the posterior."""
    observed = np.asarray(observed, dtype=float)
    if observed.shape != posterior.mean.shape:
        raise ValueError(f"length mismatch: {observed.shape} vs {posterior.mean.shape}")
    return (observed - posterior.mean) / np.maximum(posterior.std, STD_FLOOR)


def with_period(ess: EssKernelParams, period: float) -> EssKernelParams:
    return replace(ess, period=period)
