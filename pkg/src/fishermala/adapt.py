"""Adaptation state for the samplers.

Three independent mechanisms live here:

* :class:`FisherAdapter` keeps the square root of the damped inverse
  empirical Fisher matrix, fed by Rao-Blackwellized score increments.
* :class:`CovarianceAdapter` is the running mean/covariance recursion used by
  the covariance-adaptive MALA baseline.
* :class:`StepSizeController` nudges the scalar step size towards a target
  acceptance rate.

:class:`StochasticFisherEstimate` is the full-matrix stochastic-approximation
form of the Fisher estimate, used to study its convergence rate.

All state objects are frozen; ``*_step`` functions return updated copies.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .linalg import SqrtPreconditioner, sqrt_init, sqrt_update

__all__ = [
    "AdaptationStateError",
    "FisherAdapter",
    "CovarianceAdapter",
    "StepSizeController",
    "StochasticFisherEstimate",
    "fisher_signal",
    "fisher_adapt_step",
    "stochastic_fisher_step",
    "covariance_adapt_step",
    "step_size_update",
    "normalized_step",
    "harmonic_rate",
    "power_rate",
    "constant_rate",
]

ALPHA_STAR = 0.574


class AdaptationStateError(RuntimeError):
    """Adapter queried before it holds enough history."""


def fisher_signal(alpha, score_x, score_y):
    """Rao-Blackwellized score increment ``sqrt(alpha) (s(y) - s(x))``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"acceptance probability out of range: {alpha!r}")
    return np.sqrt(alpha) * (np.asarray(score_y) - np.asarray(score_x))


@dataclass(frozen=True)
class FisherAdapter:
    """Square root of ``(lam I + sum_i s_i s_i^T)^{-1}`` after ``n`` signals.

    Before the first signal the factor is the identity.
    """

    R: SqrtPreconditioner
    n: int = 0
    lam: float = 10.0

    @classmethod
    def start(cls, d, lam=10.0):
        if not lam > 0:
            raise ValueError(f"damping must be positive, got {lam!r}")
        return cls(SqrtPreconditioner.identity(d), 0, float(lam))


def fisher_adapt_step(adapter, signal):
    if adapter.n == 0:
        R = sqrt_init(signal, adapter.lam)
    else:
        R = sqrt_update(adapter.R, signal)
    return replace(adapter, R=R, n=adapter.n + 1)


# -- learning-rate schedules for the stochastic-approximation form ---------


def harmonic_rate(n):
    return 1.0 / n


def power_rate(kappa):
    if not 0.5 < kappa <= 1.0:
        raise ValueError("kappa must lie in (0.5, 1]")

    def rate(n):
        return float(n) ** -kappa

    return rate


def constant_rate(value):
    def rate(n):
        return value

    return rate


@dataclass(frozen=True)
class StochasticFisherEstimate:
    """Stochastic-approximation estimate of the Fisher matrix.

    ``Ihat`` may carry leading batch axes (``(..., d, d)``) so that many
    independent replicates can be advanced in one call.
    """

    Ihat: Optional[np.ndarray] = None
    n: int = 0
    schedule: Callable[[int], float] = harmonic_rate
    lam: float = 10.0


def _outer(s):
    return s[..., :, None] * s[..., None, :]


def stochastic_fisher_step(est, s):
    """``Ihat_n = (1 - g_n) Ihat_{n-1} + g_n s s^T`` with ``Ihat_1 = s s^T + lam I``."""
    s = np.asarray(s, dtype=float)
    ss = _outer(s)
    if est.n == 0 and est.Ihat is None:
        return replace(est, Ihat=ss + est.lam * np.eye(s.shape[-1]), n=1)
    n = est.n + 1
    g = est.schedule(n)
    if not 0.0 < g <= 1.0:
        raise ValueError(f"learning rate must lie in (0, 1], got {g!r}")
    return replace(est, Ihat=(1.0 - g) * est.Ihat + g * ss, n=n)


@dataclass(frozen=True)
class CovarianceAdapter:
    """Running mean and damped covariance of visited states."""

    mu: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None
    n: int = 0
    lam: float = 10.0

    @property
    def covariance(self):
        if self.C is None:
            raise AdaptationStateError("covariance needs at least two samples")
        return self.C


def covariance_adapt_step(adapter, x):
    """One step of the running covariance recursion.

    ``mu_n = (n-1)/n mu_{n-1} + x_n / n`` and
    ``C_n = (n-2)/(n-1) C_{n-1} + (x_n - mu_{n-1})(x_n - mu_{n-1})^T / n``,
    started from ``mu_1 = x_1`` and ``C_2 = 1/2 (x_2 - mu_1)(x_2 - mu_1)^T + lam I``.
    """
    x = np.array(x, dtype=float)
    if adapter.n == 0:
        return replace(adapter, mu=x, n=1)
    n = adapter.n + 1
    dx = x - adapter.mu
    mu = ((n - 1) / n) * adapter.mu + x / n
    if n == 2:
        C = 0.5 * np.outer(dx, dx) + adapter.lam * np.eye(x.shape[0])
    else:
        C = ((n - 2) / (n - 1)) * adapter.C + np.outer(dx, dx) / n
    return replace(adapter, mu=mu, C=C, n=n)


@dataclass(frozen=True)
class StepSizeController:
    """Multiplicative step-size adaptation towards ``alpha_star``.

    ``floor`` keeps ``sigma2`` away from zero; frozen controllers ignore
    updates.
    """

    sigma2: float
    rho: float = 0.015
    alpha_star: float = ALPHA_STAR
    frozen: bool = False
    floor: float = 1e-8

    def freeze(self):
        return replace(self, frozen=True)


def step_size_update(ctrl, alpha):
    """``sigma2 <- sigma2 [1 + rho (alpha - alpha_star)]`` unless frozen."""
    if ctrl.frozen:
        return ctrl
    sigma2 = ctrl.sigma2 * (1.0 + ctrl.rho * (alpha - ctrl.alpha_star))
    return replace(ctrl, sigma2=max(sigma2, ctrl.floor))


def normalized_step(ctrl, R):
    """Step size divided by the average eigenvalue of the preconditioner.

    ``R`` is a :class:`SqrtPreconditioner` (average eigenvalue of ``R R^T``),
    any object with ``trace()`` and ``d``, or a full preconditioner matrix.
    """
    if hasattr(R, "trace") and hasattr(R, "d"):
        tr, d = R.trace(), R.d
    else:
        R = np.asarray(R)
        tr, d = float(np.trace(R)), R.shape[0]
    if not tr > 0:
        raise ValueError(f"preconditioner trace must be positive, got {tr!r}")
    return ctrl.sigma2 / (tr / d)
