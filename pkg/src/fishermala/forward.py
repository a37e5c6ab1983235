"""Forward models for the two 1-D inverse problems.

Heat source problem
    ``u_t - u_xx = f(x)`` on (0, 1) x (0, T], ``u = 0`` on the boundary,
    ``u(x, 0) = sin(pi x)``.  The map from the source ``f`` (on the interior
    grid nodes) to the final state ``u(., T)`` is affine,
    ``u(., T) = F f + g``, and is assembled once.

Neumann parameter identification
    ``-u'' + q u = f`` on (0, 1), ``u'(0) = u'(1) = 0``, with
    ``q(x) = theta_0 + sum_k theta_{2k-1} sin(2 pi k x) + theta_{2k} cos(2 pi k x)``.
    The state is observed at the interior grid nodes.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "DomainError",
    "thomas",
    "LinearForwardModel",
    "HeatSourceOperator",
    "heat_assemble",
    "heat_truth_source",
    "heat_synthesize",
    "SyntheticDataset",
    "q_field",
    "neumann_source",
    "bvp_solve",
    "NeumannBvpModel",
    "neumann_synthesize",
    "frechet_fd",
    "nested_indices",
]


class DomainError(ValueError):
    """Parameter lies outside the set where the forward problem is solvable."""


def thomas(sub, diag, sup, rhs):
    """Solve a tridiagonal system by the Thomas algorithm.

    Parameters
    ----------
    sub, sup : array_like, shape (n - 1,)
        Sub- and super-diagonal.
    diag : array_like, shape (n,)
    rhs : array_like, shape (n,) or (n, k)
        Several right-hand sides are solved at once when ``rhs`` is 2-D.

    No pivoting is done; the systems assembled here are diagonally dominant.
    """
    rhs = np.asarray(rhs, dtype=float)
    if rhs.ndim == 1:
        return np.array(_thomas_scalar(list(sub), list(diag), list(sup), rhs.tolist()))
    return _ThomasFactor(sub, diag, sup).solve(rhs)


def _thomas_scalar(a, b, c, d):
    # python floats: this runs in the sampler's inner loop for small n
    n = len(b)
    cp = [0.0] * n
    dp = [0.0] * n
    cp[0] = c[0] / b[0] if n > 1 else 0.0
    dp[0] = d[0] / b[0]
    for i in range(1, n):
        m = b[i] - a[i - 1] * cp[i - 1]
        if i < n - 1:
            cp[i] = c[i] / m
        dp[i] = (d[i] - a[i - 1] * dp[i - 1]) / m
    x = dp
    for i in range(n - 2, -1, -1):
        x[i] = dp[i] - cp[i] * x[i + 1]
    return x


class _ThomasFactor:
    """Forward-elimination coefficients of a fixed tridiagonal matrix."""

    def __init__(self, sub, diag, sup):
        a = np.asarray(sub, dtype=float)
        b = np.asarray(diag, dtype=float)
        c = np.asarray(sup, dtype=float)
        n = b.shape[0]
        cp = np.zeros(n)
        inv = np.zeros(n)
        inv[0] = 1.0 / b[0]
        if n > 1:
            cp[0] = c[0] * inv[0]
        for i in range(1, n):
            inv[i] = 1.0 / (b[i] - a[i - 1] * cp[i - 1])
            if i < n - 1:
                cp[i] = c[i] * inv[i]
        self.a, self.cp, self.inv = a, cp, inv

    def solve(self, rhs):
        a, cp, inv = self.a, self.cp, self.inv
        x = np.array(rhs, dtype=float)
        n = x.shape[0]
        x[0] *= inv[0]
        for i in range(1, n):
            x[i] = (x[i] - a[i - 1] * x[i - 1]) * inv[i]
        for i in range(n - 2, -1, -1):
            x[i] -= cp[i] * x[i + 1]
        return x


class LinearForwardModel:
    """Affine forward map ``x -> F x + offset`` with its exact Jacobian."""

    def __init__(self, F, offset=None):
        self.F = np.atleast_2d(np.asarray(F, dtype=float))
        self.offset = np.zeros(self.F.shape[0]) if offset is None else np.asarray(offset, dtype=float)

    @property
    def n_obs(self):
        return self.F.shape[0]

    @property
    def n_in(self):
        return self.F.shape[1]

    def __call__(self, x):
        return self.F @ x + self.offset

    def jacobian(self, x=None):
        return self.F

    def value_and_jacobian(self, x):
        return self(x), self.F


def nested_indices(n_coarse, n_fine):
    """Indices of the fine interior nodes that coincide with the coarse ones.

    Interior nodes sit at ``(i + 1) / (n + 1)``, so the grids nest when
    ``n_fine + 1`` is a multiple of ``n_coarse + 1``.
    """
    if n_fine <= n_coarse:
        raise ValueError(f"fine grid ({n_fine}) must be strictly finer than the inversion grid ({n_coarse})")
    k, rem = divmod(n_fine + 1, n_coarse + 1)
    if rem:
        raise ValueError(f"grids with {n_coarse} and {n_fine} interior nodes do not nest")
    return k * np.arange(1, n_coarse + 1) - 1


# ---------------------------------------------------------------------------
# heat source problem


_THETA = {"crank-nicolson": 0.5, "backward-euler": 1.0}


class HeatSourceOperator:
    """Affine source-to-final-state map of the heat problem.

    The operator is itself a forward model: calling it on a source vector
    returns ``F f + g``.  ``F`` is assembled on first access by running the
    time stepper on every unit source at once.

    Parameters
    ----------
    n_x : int
        Number of interior grid nodes (the inversion dimension).
    n_t : int
        Number of time steps.
    T : float
        Final time.
    scheme : {"crank-nicolson", "backward-euler"}
    """

    def __init__(self, n_x, n_t, T, scheme="crank-nicolson"):
        if n_x < 2 or n_t < 2:
            raise ValueError("need at least two grid nodes and two time steps")
        if not T > 0:
            raise ValueError("final time must be positive")
        if scheme not in _THETA:
            raise ValueError(f"unknown time scheme {scheme!r}")
        self.n_x, self.n_t, self.T, self.scheme = int(n_x), int(n_t), float(T), scheme
        self.h = 1.0 / (self.n_x + 1)
        self.dt = self.T / self.n_t
        self.grid = self.h * np.arange(1, self.n_x + 1)
        theta = _THETA[scheme]
        k = 1.0 / self.h**2
        # implicit part I + theta dt A with A = -Laplacian
        self._implicit = theta * self.dt
        self._explicit = (1.0 - theta) * self.dt
        off = np.full(self.n_x - 1, -self._implicit * k)
        self._factor = _ThomasFactor(off, np.full(self.n_x, 1.0 + 2.0 * self._implicit * k), off)

    @property
    def n_obs(self):
        return self.n_x

    @property
    def n_in(self):
        return self.n_x

    def _laplacian(self, u):
        # A u for A = -d^2/dx^2 with zero Dirichlet values
        out = 2.0 * u
        out[1:] -= u[:-1]
        out[:-1] -= u[1:]
        return out / self.h**2

    def _march(self, u0, forcing):
        u = np.array(u0, dtype=float)
        for _ in range(self.n_t):
            rhs = u + forcing
            if self._explicit:
                rhs -= self._explicit * self._laplacian(u)
            u = self._factor.solve(rhs)
        return u

    def solve(self, f, u0=None):
        """Final-time state for source ``f``; ``u0`` defaults to ``sin(pi x)``."""
        u0 = np.sin(np.pi * self.grid) if u0 is None else u0
        return self._march(u0, self.dt * np.asarray(f, dtype=float))

    @cached_property
    def F(self):
        return self._march(np.zeros((self.n_x, self.n_x)), self.dt * np.eye(self.n_x))

    @cached_property
    def g(self):
        return self._march(np.sin(np.pi * self.grid), 0.0)

    def __call__(self, f):
        return self.F @ f + self.g

    def jacobian(self, f=None):
        return self.F

    def value_and_jacobian(self, f):
        return self(f), self.F

    def linear_model(self):
        return LinearForwardModel(self.F, self.g)


def heat_assemble(n_x, n_t, T, scheme="crank-nicolson"):
    return HeatSourceOperator(n_x, n_t, T, scheme)


def heat_truth_source(x):
    """Reference heat source ``2 pi^2 sin(pi x)``."""
    return 2.0 * np.pi**2 * np.sin(np.pi * np.asarray(x))


@dataclass
class SyntheticDataset:
    """Noisy observations together with the exact parameter that produced them."""

    y: np.ndarray
    noise_level: float
    truth: np.ndarray
    seed: int
    grid: dict = field(default_factory=dict)
    noiseless: np.ndarray = None


def heat_synthesize(op_fine, n_x, truth, eps, seed):
    """Noisy final-state data generated on ``op_fine`` and restricted to ``n_x`` nodes.

    Parameters
    ----------
    op_fine : HeatSourceOperator
        Data-generation operator; must nest with the inversion grid.
    n_x : int
        Interior nodes of the inversion grid.
    truth : callable
        Exact source ``f(x)``, evaluated on both grids.
    eps : float
        Noise standard deviation.
    seed : int
    """
    idx = nested_indices(n_x, op_fine.n_x)
    noiseless = op_fine.solve(truth(op_fine.grid))[idx]
    rng = np.random.default_rng(seed)
    y = noiseless + eps * rng.standard_normal(n_x)
    coarse = op_fine.grid[idx]
    return SyntheticDataset(
        y=y,
        noise_level=float(eps),
        truth=np.asarray(truth(coarse), dtype=float),
        seed=int(seed),
        grid={"n_x": int(n_x), "n_x_fine": op_fine.n_x, "n_t_fine": op_fine.n_t, "T": op_fine.T,
              "scheme": op_fine.scheme},
        noiseless=noiseless,
    )


# ---------------------------------------------------------------------------
# Neumann parameter identification


def q_field(theta, x):
    """Trigonometric expansion ``theta_0 + sum_k theta sin(2 pi k x) + theta cos(2 pi k x)``."""
    theta = np.asarray(theta, dtype=float)
    if theta.shape[0] % 2 != 1:
        raise ValueError("coefficient vector must have odd length (1, sin, cos, ...)")
    q = np.full_like(np.asarray(x, dtype=float), theta[0])
    for k in range(1, (theta.shape[0] - 1) // 2 + 1):
        q = q + theta[2 * k - 1] * np.sin(2 * np.pi * k * x) + theta[2 * k] * np.cos(2 * np.pi * k * x)
    return q


def neumann_source(theta_true=(2.0, 1.0, 1.0)):
    """Source ``q(x) cos(pi x) + pi^2 cos(pi x)`` whose exact state is ``cos(pi x)``."""
    theta_true = np.asarray(theta_true, dtype=float)

    def f(x):
        return (q_field(theta_true, x) + np.pi**2) * np.cos(np.pi * x)

    return f


def bvp_solve(theta, n_x, source=None, q_min=1e-8):
    """Solve ``-u'' + q u = f`` with zero-flux ends on ``n_x + 1`` nodes.

    Second-order centered differences; the Neumann conditions use ghost
    points, and the first and last rows are halved so the matrix is
    symmetric.

    Parameters
    ----------
    theta : array_like
        Coefficients of ``q`` in the trigonometric basis.
    n_x : int
        Number of grid intervals; nodes are ``i / n_x`` for ``i = 0..n_x``.
    source : callable or array_like, optional
        Right-hand side ``f``; defaults to :func:`neumann_source`.
    q_min : float
        Smallest admissible value of ``q`` on the grid.

    Returns
    -------
    numpy.ndarray, shape (n_x + 1,)

    Raises
    ------
    DomainError
        If ``q`` drops below ``q_min`` at any node.
    """
    x = np.linspace(0.0, 1.0, n_x + 1)
    q = q_field(theta, x)
    if not np.all(q >= q_min):
        raise DomainError(f"q falls below {q_min} on the grid (min {q.min():.3g})")
    if source is None:
        source = neumann_source()
    f = source(x) if callable(source) else np.asarray(source, dtype=float)
    diag, off, rhs = _neumann_system(q, f, 1.0 / n_x)
    return np.array(_thomas_scalar(off, diag, off, rhs))


def _neumann_system(q, f, h):
    k = 1.0 / h**2
    diag = 2.0 * k + q
    rhs = np.array(f, dtype=float)
    diag[0] = k + 0.5 * q[0]
    diag[-1] = k + 0.5 * q[-1]
    rhs[0] *= 0.5
    rhs[-1] *= 0.5
    off = [-k] * (q.shape[0] - 1)
    return diag.tolist(), off, rhs.tolist()


def neumann_matrix(theta, n_x):
    """Dense system matrix of :func:`bvp_solve` (used for residual checks)."""
    x = np.linspace(0.0, 1.0, n_x + 1)
    diag, off, _ = _neumann_system(q_field(theta, x), np.zeros(n_x + 1), 1.0 / n_x)
    return np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)


def frechet_fd(model, theta, h=1e-6, fx=None):
    """One-sided perturbation Jacobian of ``model`` at ``theta``.

    Column ``i`` is ``(model(theta + h_i e_i) - model(theta)) / h_i`` with
    ``h_i = h * max(1, |theta_i|)``.

    Raises
    ------
    DomainError
        If a perturbed parameter leaves the model's domain; the message names
        the column.
    """
    theta = np.asarray(theta, dtype=float)
    if fx is None:
        fx = np.asarray(model(theta))
    J = np.empty((fx.shape[0], theta.shape[0]))
    for i in range(theta.shape[0]):
        hi = h * max(1.0, abs(theta[i]))
        tp = theta.copy()
        tp[i] += hi
        try:
            J[:, i] = (model(tp) - fx) / hi
        except DomainError as exc:
            raise DomainError(f"Jacobian column {i}: {exc}") from exc
    return J


class NeumannBvpModel:
    """Coefficient-to-interior-state map of the Neumann problem.

    Parameters
    ----------
    n_x : int
        Grid intervals (observations are the ``n_x - 1`` interior nodes).
    n_coef : int
        Length of ``theta`` (odd).
    source : callable, optional
        Defaults to :func:`neumann_source` of the reference coefficients.
    fd_step : float
        Relative perturbation for :func:`frechet_fd`.
    """

    def __init__(self, n_x=100, n_coef=3, source=None, q_min=1e-8, fd_step=1e-6):
        self.n_x = int(n_x)
        self.n_in = int(n_coef)
        self.q_min = q_min
        self.fd_step = fd_step
        self.grid = np.linspace(0.0, 1.0, self.n_x + 1)
        src = neumann_source() if source is None else source
        self._f = src(self.grid) if callable(src) else np.asarray(src, dtype=float)

    @property
    def n_obs(self):
        return self.n_x - 1

    def state(self, theta):
        return bvp_solve(theta, self.n_x, self._f, self.q_min)

    def __call__(self, theta):
        return self.state(theta)[1:-1]

    def jacobian(self, theta):
        return frechet_fd(self, theta, self.fd_step)

    def value_and_jacobian(self, theta):
        fx = self(theta)
        return fx, frechet_fd(self, theta, self.fd_step, fx=fx)


def neumann_synthesize(theta_true, n_x, eps, seed, fine_factor=2):
    """Noisy interior observations generated on a ``fine_factor``-times finer grid."""
    if fine_factor < 2:
        raise ValueError("data must be generated on a strictly finer grid")
    fine = NeumannBvpModel(n_x * fine_factor, len(theta_true), neumann_source(theta_true))
    noiseless = fine.state(theta_true)[fine_factor:-fine_factor:fine_factor]
    rng = np.random.default_rng(seed)
    y = noiseless + eps * rng.standard_normal(noiseless.shape[0])
    return SyntheticDataset(
        y=y,
        noise_level=float(eps),
        truth=np.asarray(theta_true, dtype=float),
        seed=int(seed),
        grid={"n_x": int(n_x), "n_x_fine": int(n_x * fine_factor)},
        noiseless=noiseless,
    )
