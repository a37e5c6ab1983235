"""Chain-quality and accuracy metrics.

ACF uses the biased autocovariance estimator centred on the sample mean of
each coordinate.  The integrated autocorrelation time is truncated at a fixed
lag ``L`` and floored at one, so ESS never exceeds the chain length.
"""

from dataclasses import dataclass

import numpy as np

from .adapt import StochasticFisherEstimate, constant_rate, harmonic_rate, stochastic_fisher_step
from .linalg import trace_normalize

__all__ = [
    "AcfResult",
    "EssReport",
    "RateCurve",
    "acf",
    "ess",
    "relative_error",
    "precond_convergence",
    "rate_experiment",
    "esjd",
    "ess_time_curve",
    "credible_intervals",
]


@dataclass(frozen=True)
class AcfResult:
    rho: np.ndarray
    lag: int


@dataclass(frozen=True)
class EssReport:
    iat: np.ndarray
    ess_per_dim: np.ndarray
    ess: float
    n_samples: int


@dataclass(frozen=True)
class RateCurve:
    n: np.ndarray
    errors: np.ndarray
    slope: float
    intercept: float
    final_estimates: np.ndarray = None


def _autocorr(x, L):
    # x: (N, k) columns; FFT autocovariance, zero-padded against wrap-around
    n = x.shape[0]
    xc = x - x.mean(axis=0)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    fx = np.fft.rfft(xc, n=nfft, axis=0)
    acov = np.fft.irfft(fx * np.conj(fx), n=nfft, axis=0)[: L + 1] / n
    var = acov[0]
    if np.any(var <= 0):
        raise ValueError("series with zero variance has undefined autocorrelation")
    rho = acov / var
    rho[0] = 1.0
    return rho


def acf(series, L):
    """Autocorrelation ``rho_k = gamma_k / gamma_0`` for ``k = 0..L``.

    Raises
    ------
    ValueError
        If ``L`` is out of range or the series is constant.
    """
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("acf expects a 1-D series")
    if not 1 <= L < x.shape[0]:
        raise ValueError(f"lag limit must satisfy 1 <= L < N, got L={L}, N={x.shape[0]}")
    return AcfResult(_autocorr(x[:, None], L)[:, 0], int(L))


def ess(chain, L):
    """Per-coordinate IAT/ESS and the monolithic ESS ``N / max_i tau_i``.

    Parameters
    ----------
    chain : array_like, shape (N, d) or (N,)
    L : int
        Truncation lag of ``tau = 1 + 2 sum_{k=1}^{L} rho_k``.
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    n = x.shape[0]
    if not 1 <= L < n:
        raise ValueError(f"lag limit must satisfy 1 <= L < N, got L={L}, N={n}")
    rho = _autocorr(x, L)
    tau = np.maximum(1.0, 1.0 + 2.0 * rho[1:].sum(axis=0))
    per_dim = n / tau
    return EssReport(tau, per_dim, float(n / tau.max()), n)


def relative_error(estimate, truth):
    """``100 * ||estimate - truth|| / ||truth||``."""
    truth = np.asarray(truth, dtype=float)
    nt = np.linalg.norm(truth)
    if nt == 0:
        raise ValueError("relative error undefined for a zero reference")
    return float(100.0 * np.linalg.norm(np.asarray(estimate) - truth) / nt)


def precond_convergence(snapshots, reference):
    """Frobenius distance between trace-normalized snapshots and reference."""
    ref = trace_normalize(reference)
    return np.array([np.linalg.norm(trace_normalize(M) - ref) for M in snapshots])


def _log_grid(n_min, n_max, n_points):
    grid = np.unique(np.round(np.geomspace(n_min, n_max, n_points)).astype(int))
    return grid


def rate_experiment(target, schedule="harmonic", n_max=10_000, replicates=100, rng_seed=0,
                    lam=10.0, init=None, n_min=100, n_points=25):
    """Mean-squared Frobenius error of the stochastic Fisher estimate vs ``n``.

    Each replicate feeds i.i.d. exact scores ``target.sample_scores`` into
    :func:`stochastic_fisher_step`; all replicates advance together.

    Parameters
    ----------
    target : object
        Provides ``fisher`` (the exact Fisher matrix) and
        ``sample_scores(rng, size)``.
    schedule : {"harmonic", "constant"} or callable
        ``"harmonic"`` is ``1/n``; ``"constant"`` is full replacement (rate 1).
    init : array_like, optional
        Starting estimate; by default ``s_1 s_1^T + lam I``.
    n_min, n_points : int
        Errors are recorded on ``n_points`` log-spaced values in
        ``[n_min, n_max]``; the slope is fitted on those.

    Returns
    -------
    RateCurve
    """
    if replicates < 1:
        raise ValueError("need at least one replicate")
    if schedule == "harmonic":
        rate = harmonic_rate
    elif schedule == "constant":
        rate = constant_rate(1.0)
    elif callable(schedule):
        rate = schedule
    else:
        raise ValueError(f"unknown schedule {schedule!r}")
    rng = np.random.default_rng(rng_seed)
    fisher = np.asarray(target.fisher, dtype=float)
    d = fisher.shape[0]
    grid = _log_grid(n_min, n_max, n_points)
    keep = set(grid.tolist())
    est = StochasticFisherEstimate(schedule=rate, lam=lam)
    if init is not None:
        est = StochasticFisherEstimate(np.broadcast_to(init, (replicates, d, d)).copy(), 1, rate, lam)
    errors = []
    block = 512
    n = est.n
    while n < n_max:
        scores = target.sample_scores(rng, block * replicates).reshape(block, replicates, d)
        for s in scores:
            est = stochastic_fisher_step(est, s)
            n = est.n
            if n in keep:
                diff = est.Ihat - fisher
                errors.append(np.mean(np.sum(diff * diff, axis=(-2, -1))))
            if n >= n_max:
                break
    errors = np.array(errors)
    with np.errstate(divide="ignore"):
        logs = np.log(errors)
    if np.all(np.isfinite(logs)):
        slope, intercept = np.polyfit(np.log(grid), logs, 1)
    else:
        slope = intercept = float("nan")
    return RateCurve(grid, errors, float(slope), float(intercept), est.Ihat)


def esjd(record):
    """Mean squared jump ``||x_{n+1} - x_n||^2`` over the collection phase.

    Accepts a :class:`~fishermala.samplers.ChainRecord` or a plain sample
    array.
    """
    x = record.collection() if hasattr(record, "collection") else np.asarray(record, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least two samples")
    jumps = np.diff(x, axis=0)
    return float(np.mean(np.sum(jumps * jumps, axis=1)))


def ess_time_curve(samples, wall_times, L, n_points=20):
    """Monolithic ESS of growing prefixes of a chain against elapsed time."""
    samples = np.asarray(samples, dtype=float)
    wall = np.asarray(wall_times, dtype=float)
    wall = wall - wall[0]
    n = samples.shape[0]
    sizes = np.unique(np.linspace(max(2 * L + 2, n // n_points), n, n_points).astype(int))
    out = []
    for m in sizes:
        try:
            value = ess(samples[:m], L).ess
        except ValueError:
            value = float("nan")
        out.append((float(wall[m - 1]), int(m), value))
    return out


def credible_intervals(samples, level=0.95):
    """Equal-tailed empirical credible intervals, one row per coordinate."""
    lo = 50.0 * (1.0 - level)
    return np.percentile(np.asarray(samples), [lo, 100.0 - lo], axis=0).T
