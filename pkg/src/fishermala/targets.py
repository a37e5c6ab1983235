"""Log-posterior assembly for Bayesian inversion.

A posterior is built from a Gaussian prior ``N(m, C)``, Gaussian observation
noise ``N(0, Sigma)``, a forward model ``F`` and data ``y``:

    log pi(x) = -Phi(x) - 1/2 (x - m)^T C^{-1} (x - m) + const,
    Phi(x)    = 1/2 (F(x) - y)^T Sigma^{-1} (F(x) - y).

Log-densities are only tracked up to an additive constant.
"""

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .forward import DomainError

__all__ = [
    "TargetEval",
    "GaussianPrior",
    "GaussianNoiseModel",
    "Posterior",
    "LinearGaussianPosterior",
    "GaussianTarget",
    "potential",
    "log_posterior_eval",
    "linear_posterior_moments",
    "gaussian_score_target",
    "squared_exponential_covariance",
]


@dataclass(frozen=True)
class TargetEval:
    """A point bundled with its log-density and score.

    When the point lies outside the forward model's domain the log-density is
    ``-inf`` and the score is all-NaN; samplers treat such points as rejected.
    """

    x: np.ndarray
    log_density: float
    score: np.ndarray

    @property
    def finite(self):
        return bool(np.isfinite(self.log_density) and np.all(np.isfinite(self.score)))


def _invalid_eval(x):
    return TargetEval(x, -np.inf, np.full_like(x, np.nan))


def squared_exponential_covariance(grid, gamma, length):
    """``gamma * exp(-(x_i - x_j)^2 / (2 length^2))`` on a 1-D grid."""
    grid = np.asarray(grid, dtype=float)
    diff = grid[:, None] - grid[None, :]
    return gamma * np.exp(-0.5 * (diff / length) ** 2)


class GaussianPrior:
    """Gaussian prior with a Cholesky factor cached at construction.

    Parameters
    ----------
    covariance : array_like, shape (d, d)
        Symmetric positive definite covariance.
    mean : array_like, optional
        Defaults to the zero vector.
    """

    def __init__(self, covariance, mean=None):
        self.covariance = np.array(covariance, dtype=float)
        d = self.covariance.shape[0]
        self.mean = np.zeros(d) if mean is None else np.array(mean, dtype=float)
        self.chol = sla.cholesky(self.covariance, lower=True)

    @classmethod
    def isotropic(cls, d, variance):
        return cls(variance * np.eye(d))

    @classmethod
    def squared_exponential(cls, grid, gamma, length, jitter=1e-10):
        """Spatially correlated prior; ``jitter * gamma`` is added to the diagonal."""
        C = squared_exponential_covariance(grid, gamma, length)
        C[np.diag_indices_from(C)] += jitter * gamma
        return cls(C)

    @property
    def dim(self):
        return self.mean.shape[0]

    def precision_apply(self, x):
        return sla.cho_solve((self.chol, True), x - self.mean)

    def precision(self):
        return sla.cho_solve((self.chol, True), np.eye(self.dim))

    def log_density(self, x):
        dx = x - self.mean
        return -0.5 * float(dx @ self.precision_apply(x))

    def sample(self, rng, size=None):
        if size is None:
            return self.mean + self.chol @ rng.standard_normal(self.dim)
        eta = rng.standard_normal((size, self.dim))
        return self.mean + eta @ self.chol.T


class GaussianNoiseModel:
    """Zero-mean Gaussian observation noise ``N(0, Sigma)``.

    Diagonal covariances (the usual ``eps^2 I``) skip the dense factorization.
    """

    def __init__(self, covariance):
        self.covariance = np.array(covariance, dtype=float)
        off = self.covariance - np.diag(np.diag(self.covariance))
        if not np.any(off):
            var = np.diag(self.covariance).copy()
            if np.any(var <= 0):
                raise np.linalg.LinAlgError("noise variances must be positive")
            self._inv_var = 1.0 / var
            self._chol = np.sqrt(var)
        else:
            self._inv_var = None
            self._chol = sla.cholesky(self.covariance, lower=True)

    @classmethod
    def isotropic(cls, eps, n):
        return cls(eps**2 * np.eye(n))

    @property
    def dim(self):
        return self.covariance.shape[0]

    def solve(self, r):
        """Return ``Sigma^{-1} r``."""
        if self._inv_var is not None:
            return (self._inv_var * r.T).T
        return sla.cho_solve((self._chol, True), r)

    def sample(self, rng):
        eta = rng.standard_normal(self.dim)
        if self._inv_var is not None:
            return self._chol * eta
        return self._chol @ eta


class Posterior:
    """Unnormalized posterior ``exp(-Phi(x)) N(x; m, C)``.

    ``forward`` is any callable mapping a parameter vector to predicted
    observations.  It must also provide ``jacobian(x)``; if it provides
    ``value_and_jacobian(x)`` that is used so the base solve is shared.
    """

    def __init__(self, prior, noise, forward, data):
        self.prior = prior
        self.noise = noise
        self.forward = forward
        self.data = np.array(data, dtype=float)
        if self.data.shape[0] != noise.dim:
            raise ValueError(
                f"data length {self.data.shape[0]} does not match noise dimension {noise.dim}"
            )
        n_obs = getattr(forward, "n_obs", None)
        if n_obs is not None and n_obs != noise.dim:
            raise ValueError(f"forward output length {n_obs} does not match noise dimension {noise.dim}")
        n_in = getattr(forward, "n_in", None)
        if n_in is not None and n_in != prior.dim:
            raise ValueError(f"forward input length {n_in} does not match prior dimension {prior.dim}")

    @property
    def dim(self):
        return self.prior.dim

    def potential(self, x):
        return potential(self, x)

    def evaluate(self, x):
        return log_posterior_eval(self, x)


def potential(posterior, x):
    """Data misfit ``Phi(x)``; ``inf`` outside the forward model's domain."""
    x = np.asarray(x, dtype=float)
    try:
        r = posterior.forward(x) - posterior.data
    except DomainError:
        return np.inf
    return 0.5 * float(r @ posterior.noise.solve(r))


def log_posterior_eval(posterior, x):
    """Unnormalized log-posterior and its gradient at ``x``.

    The score is ``-C^{-1}(x - m) - J(x)^T Sigma^{-1} (F(x) - y)`` with ``J``
    the Jacobian of the forward model.
    """
    x = np.array(x, dtype=float)
    fwd = posterior.forward
    try:
        if hasattr(fwd, "value_and_jacobian"):
            fx, J = fwd.value_and_jacobian(x)
        else:
            fx, J = fwd(x), fwd.jacobian(x)
    except DomainError:
        return _invalid_eval(x)
    r = fx - posterior.data
    w = posterior.noise.solve(r)
    prec_x = posterior.prior.precision_apply(x)
    log_density = -0.5 * float(r @ w) - 0.5 * float((x - posterior.prior.mean) @ prec_x)
    score = -prec_x - J.T @ w
    return TargetEval(x, log_density, score)


@dataclass(frozen=True)
class LinearGaussianPosterior:
    """Closed-form posterior ``N(mean, covariance)`` of a linear model."""

    mean: np.ndarray
    covariance: np.ndarray

    def log_density(self, x):
        dx = np.asarray(x) - self.mean
        return -0.5 * float(dx @ np.linalg.solve(self.covariance, dx))


def linear_posterior_moments(F, prior, noise, y):
    """Posterior moments of ``y = F x + noise`` under a Gaussian prior.

    ``C_post = (C^{-1} + F^T Sigma^{-1} F)^{-1}`` and
    ``mu_post = C_post (F^T Sigma^{-1} y + C^{-1} m)``; the second term
    vanishes for the zero-mean priors used throughout.

    Raises
    ------
    numpy.linalg.LinAlgError
        If the assembled precision is not positive definite.
    """
    F = np.atleast_2d(np.asarray(F, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    prior_prec = prior.precision()
    precision = prior_prec + F.T @ noise.solve(F)
    precision = 0.5 * (precision + precision.T)
    cf = sla.cho_factor(precision, lower=True)
    cov = sla.cho_solve(cf, np.eye(F.shape[1]))
    cov = 0.5 * (cov + cov.T)
    mean = cov @ (F.T @ noise.solve(y) + prior_prec @ prior.mean)
    return LinearGaussianPosterior(mean, cov)


class GaussianTarget:
    """Gaussian target with exact scores and exact i.i.d. sampling.

    For a Gaussian the Fisher information ``E[s s^T]`` is the precision
    matrix, which makes this the reference target for the rate experiment.
    """

    def __init__(self, mean, covariance):
        self.mean = np.array(mean, dtype=float)
        self.covariance = np.array(covariance, dtype=float)
        self.chol = sla.cholesky(self.covariance, lower=True)
        self.fisher = sla.cho_solve((self.chol, True), np.eye(self.dim))

    @property
    def dim(self):
        return self.mean.shape[0]

    def evaluate(self, x):
        x = np.array(x, dtype=float)
        score = -sla.cho_solve((self.chol, True), x - self.mean)
        return TargetEval(x, 0.5 * float((x - self.mean) @ score), score)

    def sample(self, rng, size):
        return self.mean + rng.standard_normal((size, self.dim)) @ self.chol.T

    def sample_scores(self, rng, size):
        # s = -P (x - m) with x - m = L eta gives s = -L^{-T} eta
        eta = rng.standard_normal((size, self.dim))
        return -sla.solve_triangular(self.chol, eta.T, lower=True, trans="T").T


def gaussian_score_target(mean, covariance):
    return GaussianTarget(mean, covariance)
