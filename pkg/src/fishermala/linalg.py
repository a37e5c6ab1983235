"""Rank-one kernels for the square-root preconditioner.

The preconditioner is the inverse of a damped sum of outer products,

    M_n = (lam * I + sum_i s_i s_i^T)^{-1},

and is carried around through a square-root factor ``R`` with
``R @ R.T == M``.  Each new signal costs two matrix-vector products and one
outer-product update, so the factor never has to be recomputed from scratch.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SqrtPreconditioner",
    "sqrt_init",
    "sqrt_update",
    "woodbury_update",
    "trace_normalize",
]


@dataclass(frozen=True)
class SqrtPreconditioner:
    """Square-root factor ``R`` of a preconditioner ``M = R R^T``.

    ``R`` is a dense ``d x d`` array that is not triangular in general.
    Instances are treated as immutable; the update functions return new ones.
    """

    R: np.ndarray

    @classmethod
    def identity(cls, d):
        return cls(np.eye(d))

    @property
    def d(self):
        return self.R.shape[0]

    def matrix(self):
        """Return the full preconditioner ``R R^T``."""
        return self.R @ self.R.T

    def apply(self, v):
        """Return ``M v`` computed as ``R (R^T v)`` in O(d^2)."""
        return self.R @ (self.R.T @ v)

    def trace(self):
        # tr(R R^T) is the squared Frobenius norm of R
        return float(np.sum(self.R * self.R))


def _rank_one_correction(R, phi, r):
    return R - (r / (1.0 + phi @ phi)) * np.outer(R @ phi, phi)


def sqrt_init(s1, lam):
    """Factor of ``(s1 s1^T + lam I)^{-1}`` in closed form.

    Parameters
    ----------
    s1 : array_like, shape (d,)
        First adaptation signal.
    lam : float
        Damping, must be positive.

    Returns
    -------
    SqrtPreconditioner
    """
    if not lam > 0:
        raise ValueError(f"damping must be positive, got {lam!r}")
    s1 = np.asarray(s1, dtype=float)
    d = s1.shape[0]
    ss = float(s1 @ s1)
    r1 = 1.0 / (1.0 + np.sqrt(lam / (lam + ss)))
    R = (np.eye(d) - r1 * np.outer(s1, s1) / (lam + ss)) / np.sqrt(lam)
    return SqrtPreconditioner(R)


def sqrt_update(pre, s):
    """Fold one signal into the factor: ``M_new = (M^{-1} + s s^T)^{-1}``.

    With ``phi = R^T s`` the update is
    ``R - r (R phi) phi^T / (1 + phi^T phi)`` where
    ``r = 1 / (1 + sqrt(1 / (1 + phi^T phi)))``.
    """
    s = np.asarray(s, dtype=float)
    R = pre.R
    phi = R.T @ s
    r = 1.0 / (1.0 + np.sqrt(1.0 / (1.0 + phi @ phi)))
    return SqrtPreconditioner(_rank_one_correction(R, phi, r))


def woodbury_update(M, s):
    """Full-matrix Woodbury step ``M - M s s^T M / (1 + s^T M s)``.

    The result is symmetrized to stop round-off asymmetry from accumulating
    over long update chains.
    """
    M = np.asarray(M, dtype=float)
    s = np.asarray(s, dtype=float)
    Ms = M @ s
    out = M - np.outer(Ms, Ms) / (1.0 + s @ Ms)
    return 0.5 * (out + out.T)


def trace_normalize(M):
    """Rescale ``M`` so that its average eigenvalue is one (trace equals d)."""
    M = np.asarray(M, dtype=float)
    tr = np.trace(M)
    if not tr > 0:
        raise ValueError(f"trace must be positive, got {tr!r}")
    return M * (M.shape[0] / tr)
