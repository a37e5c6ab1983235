"""MCMC kernels and the chain driver.

Samplers
--------
``"fisher"``
    MALA preconditioned by the adaptively estimated inverse Fisher matrix,
    carried as a square-root factor and updated from Rao-Blackwellized score
    increments.
``"adamala"``
    MALA preconditioned by the running covariance of the chain.
``"mala"``
    Plain MALA with identity preconditioner and step-size adaptation.
``"pcn"``
    Preconditioned Crank-Nicolson with a fixed step ``beta``.

All MALA variants use the trace-normalized proposal

    y = x + (s2/2) M grad log pi(x) + sqrt(s2) R eta,   s2 = sigma2 / (tr(M)/d),

with ``M = R R^T``.

The driver runs, in order: an initialization phase of plain MALA that only
tunes ``sigma2`` (``n_init`` iterations), a covariance warm-up of another
``n_init`` plain MALA iterations for ``"adamala"``, the remaining burn-in with
full adaptation, and a collection phase with frozen step size (and, by
default, frozen preconditioner).  The first two phases count towards
``burn_in``.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .adapt import (
    ALPHA_STAR,
    CovarianceAdapter,
    FisherAdapter,
    StepSizeController,
    covariance_adapt_step,
    fisher_adapt_step,
    fisher_signal,
    normalized_step,
    step_size_update,
)
from .linalg import SqrtPreconditioner
from .targets import TargetEval

__all__ = [
    "SAMPLERS",
    "ChainError",
    "ConfigError",
    "CholeskyPreconditioner",
    "ProposalParams",
    "ChainState",
    "PcnParams",
    "SamplerConfig",
    "ChainRecord",
    "mala_propose",
    "mala_h",
    "mala_log_ratio",
    "mala_accept_prob",
    "pcn_propose",
    "pcn_step",
    "run_chain",
]

logger = logging.getLogger(__name__)

SAMPLERS = ("fisher", "adamala", "mala", "pcn")

# σ² below this tends to stall nonlinear problems
SIGMA2_WARN = 1e-7


class ChainError(RuntimeError):
    """Target evaluation failed inside a chain."""

    def __init__(self, iteration, cause):
        super().__init__(f"target evaluation failed at iteration {iteration}: {cause!r}")
        self.iteration = iteration
        self.cause = cause


class ConfigError(ValueError):
    """Invalid sampler or experiment configuration."""


class CholeskyPreconditioner:
    """Full preconditioner matrix with a Cholesky factor for the noise term."""

    def __init__(self, M):
        self.M = np.asarray(M, dtype=float)
        self.R = sla.cholesky(self.M, lower=True)

    @property
    def d(self):
        return self.M.shape[0]

    def matrix(self):
        return self.M

    def apply(self, v):
        return self.M @ v

    def trace(self):
        return float(np.trace(self.M))


@dataclass(frozen=True)
class ProposalParams:
    """Preconditioner (``R`` with ``R R^T = M``) and normalized step size."""

    pre: object
    sigma2_R: float

    def __post_init__(self):
        if not self.sigma2_R > 0:
            raise ValueError(f"normalized step size must be positive, got {self.sigma2_R!r}")


@dataclass(frozen=True)
class ChainState:
    """Current point of a chain.

    MALA kernels carry ``eval`` (log-density and score); pCN only needs the
    data misfit ``potential``.
    """

    x: np.ndarray
    iteration: int = 0
    eval: Optional[TargetEval] = None
    potential: float = float("nan")

    @classmethod
    def from_eval(cls, ev, iteration=0):
        return cls(ev.x, iteration, eval=ev)


@dataclass(frozen=True)
class PcnParams:
    beta: float
    prior: object

    def __post_init__(self):
        if not 0.0 < self.beta < 1.0:
            raise ValueError(f"pCN step must lie in (0, 1), got {self.beta!r}")


def mala_propose(state, params, rng=None, eta=None):
    """Langevin proposal ``x + (s2/2) M s(x) + sqrt(s2) R eta``.

    ``eta`` is drawn from ``rng`` unless given, which makes the map
    deterministic for testing.
    """
    x, score = state.eval.x, state.eval.score
    if eta is None:
        eta = rng.standard_normal(x.shape[0])
    s2 = params.sigma2_R
    return x + (0.5 * s2) * params.pre.apply(score) + np.sqrt(s2) * (params.pre.R @ eta)


def mala_h(u, v, score_v, M_apply, sigma2_R):
    """``h(u, v) = 1/2 (u - v - (s2/4) M s(v))^T s(v)``.

    ``exp(h(x, y) - h(y, x))`` is the proposal-density ratio
    ``q(x | y) / q(y | x)`` of the Langevin proposal.
    """
    return 0.5 * float((u - v - 0.25 * sigma2_R * M_apply(score_v)) @ score_v)


def mala_log_ratio(cur, prop, params):
    """Log Metropolis-Hastings ratio for a move ``cur.x -> prop.x``."""
    M_apply = params.pre.apply
    s2 = params.sigma2_R
    return (
        prop.log_density
        + mala_h(cur.x, prop.x, prop.score, M_apply, s2)
        - cur.log_density
        - mala_h(prop.x, cur.x, cur.score, M_apply, s2)
    )


def mala_accept_prob(state, proposal_eval, params):
    """``min(1, exp(log ratio))``; invalid proposals get probability zero."""
    cur = state.eval if isinstance(state, ChainState) else state
    if not proposal_eval.finite:
        return 0.0
    lr = mala_log_ratio(cur, proposal_eval, params)
    if np.isnan(lr):
        return 0.0
    return float(np.exp(min(0.0, lr)))


def pcn_propose(x, params, rng=None, eta=None):
    """``sqrt(1 - beta^2) x + beta L eta`` with ``L L^T`` the prior covariance."""
    if eta is None:
        eta = rng.standard_normal(x.shape[0])
    b = params.beta
    return np.sqrt(1.0 - b * b) * x + b * (params.prior.chol @ eta)


def pcn_step(state, params, potential_fn, rng, eta=None):
    """One pCN transition; accepts with ``min(1, exp(Phi(x) - Phi(y)))``.

    Returns
    -------
    (ChainState, bool)
    """
    y = pcn_propose(state.x, params, rng, eta)
    phi_y = potential_fn(y)
    u = rng.random()
    if np.isfinite(phi_y):
        alpha = float(np.exp(min(0.0, state.potential - phi_y)))
    else:
        alpha = 0.0
    nxt = state.iteration + 1
    if u < alpha:
        return ChainState(y, nxt, potential=phi_y), True
    return ChainState(state.x, nxt, potential=state.potential), False


@dataclass
class SamplerConfig:
    """Run-length and tuning parameters for :func:`run_chain`.

    ``burn_in`` includes the initialization (and, for ``"adamala"``, the
    covariance warm-up) iterations.
    """

    burn_in: int
    n_samples: int
    n_init: int = 500
    lam: float = 10.0
    rho: float = 0.015
    alpha_star: float = ALPHA_STAR
    sigma2_init: Optional[float] = None
    sigma2_floor: float = 1e-8
    beta: Optional[float] = None
    adapt_during_collection: bool = False
    snapshot_every: int = 0
    keep_burnin: bool = True
    x0: Optional[np.ndarray] = None
    max_init_draws: int = 10000

    def validate(self, kind):
        if kind not in SAMPLERS:
            raise ConfigError(f"unknown sampler {kind!r}; expected one of {SAMPLERS}")
        if self.n_samples < 1 or self.burn_in < 0:
            raise ConfigError("burn_in must be >= 0 and n_samples >= 1")
        if kind == "pcn":
            if self.beta is None or not 0.0 < self.beta < 1.0:
                raise ConfigError(f"pcn needs beta in (0, 1), got {self.beta!r}")
            return
        if not self.lam > 0:
            raise ConfigError(f"lam must be positive, got {self.lam!r}")
        if not 0.0 < self.alpha_star < 1.0:
            raise ConfigError(f"alpha_star must lie in (0, 1), got {self.alpha_star!r}")
        # rho (alpha - alpha*) > -1 keeps the multiplicative update positive
        if not 0.0 <= self.rho < 1.0 / self.alpha_star:
            raise ConfigError(f"rho out of range: {self.rho!r}")
        n_pre = self.n_init * (2 if kind == "adamala" else 1)
        if self.burn_in < n_pre:
            raise ConfigError(f"burn_in ({self.burn_in}) shorter than the initialization phase ({n_pre})")
        if self.sigma2_init is not None and self.sigma2_init < SIGMA2_WARN:
            logger.warning("initial sigma2 %.3g is below %.0e", self.sigma2_init, SIGMA2_WARN)


@dataclass
class ChainRecord:
    """Sample path of one chain.

    Per-iteration arrays all have the same length.  ``phase_marks`` holds the
    absolute iteration at which each phase starts (plus ``"end"``);
    ``offset`` is the absolute iteration of the first stored row, which is
    nonzero when burn-in rows were dropped.
    """

    kind: str
    samples: np.ndarray
    accept: np.ndarray
    sigma2: np.ndarray
    wall_times: np.ndarray
    phase_marks: dict
    seed: int
    offset: int = 0
    n_invalid: int = 0
    snapshot_iters: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    snapshots: Optional[np.ndarray] = None

    @property
    def d(self):
        return self.samples.shape[1]

    def _collect_slice(self):
        return slice(self.phase_marks["collect"] - self.offset, self.phase_marks["end"] - self.offset)

    def collection(self):
        return self.samples[self._collect_slice()]

    def collection_accept(self):
        return self.accept[self._collect_slice()]

    def acceptance_rate(self):
        return float(np.mean(self.collection_accept()))

    def posterior_mean(self):
        return self.collection().mean(axis=0)

    def same_path(self, other):
        """Bitwise equality of everything except wall-clock timings."""
        if self.kind != other.kind or self.seed != other.seed or self.offset != other.offset:
            return False
        if self.phase_marks != other.phase_marks or self.n_invalid != other.n_invalid:
            return False
        pairs = [(self.samples, other.samples), (self.accept, other.accept),
                 (self.sigma2, other.sigma2), (self.snapshot_iters, other.snapshot_iters)]
        if (self.snapshots is None) != (other.snapshots is None):
            return False
        if self.snapshots is not None:
            pairs.append((self.snapshots, other.snapshots))
        return all(a.shape == b.shape and a.tobytes() == b.tobytes() for a, b in pairs)


def _initial_point(target, config, rng):
    if config.x0 is not None:
        return np.array(config.x0, dtype=float), None
    prior = getattr(target, "prior", None)
    d = target.dim
    for _ in range(config.max_init_draws):
        x = prior.sample(rng) if prior is not None else rng.standard_normal(d)
        ev = _evaluate(target, x, 0)
        if ev.finite:
            return x, ev
    raise ChainError(0, ValueError("no admissible initial point drawn from the prior"))


def _evaluate(target, x, iteration):
    try:
        return target.evaluate(x)
    except Exception as exc:  # noqa: BLE001 - re-raised with context
        raise ChainError(iteration, exc) from exc


class _Recorder:
    def __init__(self, kind, total, keep_from, d, seed, snapshot_every):
        n = total - keep_from
        self.kind, self.seed, self.keep_from = kind, seed, keep_from
        self.samples = np.empty((n, d))
        self.accept = np.zeros(n, dtype=bool)
        self.sigma2 = np.empty(n)
        self.wall = np.empty(n)
        self.snapshot_every = snapshot_every
        self.snap_iters, self.snaps = [], []
        self.t0 = time.perf_counter()

    def push(self, it, x, accepted, sigma2):
        k = it - self.keep_from
        if k >= 0:
            self.samples[k] = x
            self.accept[k] = accepted
            self.sigma2[k] = sigma2
            self.wall[k] = time.perf_counter() - self.t0

    def snapshot(self, n_adapt, matrix_fn):
        if self.snapshot_every and n_adapt % self.snapshot_every == 0:
            self.snap_iters.append(n_adapt)
            self.snaps.append(matrix_fn())

    def finish(self, marks, n_invalid):
        snaps = np.array(self.snaps) if self.snaps else None
        return ChainRecord(
            kind=self.kind, samples=self.samples, accept=self.accept, sigma2=self.sigma2,
            wall_times=self.wall, phase_marks=marks, seed=self.seed, offset=self.keep_from,
            n_invalid=n_invalid, snapshot_iters=np.array(self.snap_iters, dtype=np.int64),
            snapshots=snaps,
        )


def run_chain(kind, target, config, rng_seed):
    """Run one chain of sampler ``kind`` on ``target``.

    Parameters
    ----------
    kind : {"fisher", "adamala", "mala", "pcn"}
    target : object
        MALA variants need ``evaluate(x) -> TargetEval`` and ``dim``; pCN
        needs ``prior`` (zero-mean :class:`GaussianPrior`) and
        ``potential(x)``.  Initial points are drawn from ``target.prior``
        when present (redrawn until admissible), else from ``N(0, I)``.
    config : SamplerConfig
    rng_seed : int or numpy.random.SeedSequence
        Seeds a PCG64 generator; Gaussian draws use numpy's
        ``standard_normal``.

    Returns
    -------
    ChainRecord

    Raises
    ------
    ChainError
        If the target raises anything other than a domain violation.
    """
    config.validate(kind)
    rng = np.random.default_rng(rng_seed)
    seed = int(rng_seed) if isinstance(rng_seed, (int, np.integer)) else int(rng_seed.entropy)
    if kind == "pcn":
        return _run_pcn(target, config, rng, seed)
    return _run_mala(kind, target, config, rng, seed)


def _run_pcn(target, config, rng, seed):
    params = PcnParams(config.beta, target.prior)
    if config.x0 is not None:
        x = np.array(config.x0, dtype=float)
        phi = target.potential(x)
    else:
        for _ in range(config.max_init_draws):
            x = target.prior.sample(rng)
            phi = target.potential(x)
            if np.isfinite(phi):
                break
        else:
            raise ChainError(0, ValueError("no admissible initial point drawn from the prior"))
    state = ChainState(x, 0, potential=phi)
    total = config.burn_in + config.n_samples
    rec = _Recorder("pcn", total, 0 if config.keep_burnin else config.burn_in, x.shape[0], seed, 0)

    def potential_fn(y):
        try:
            return target.potential(y)
        except Exception as exc:  # noqa: BLE001
            raise ChainError(state.iteration, exc) from exc

    b2 = config.beta**2
    for it in range(total):
        state, accepted = pcn_step(state, params, potential_fn, rng)
        rec.push(it, state.x, accepted, b2)
    marks = {"burn_in": 0, "collect": config.burn_in, "end": total}
    return rec.finish(marks, 0)


def _run_mala(kind, target, config, rng, seed):
    x, cur = _initial_point(target, config, rng)
    if cur is None:
        cur = _evaluate(target, x, 0)
        if not cur.finite:
            raise ChainError(0, ValueError("initial point has non-finite log-density"))
    d = x.shape[0]
    sigma2 = config.sigma2_init if config.sigma2_init is not None else 0.1 * d ** (-1.0 / 3.0)
    ctrl = StepSizeController(sigma2, config.rho, config.alpha_star, floor=config.sigma2_floor)

    n_init = config.n_init
    n_warm = n_init if kind == "adamala" else 0
    total = config.burn_in + config.n_samples
    marks = {"init": 0}
    if kind == "adamala":
        marks["warmup"] = n_init
    marks["adapt"] = n_init + n_warm
    marks["collect"] = config.burn_in
    marks["end"] = total

    rec = _Recorder(kind, total, 0 if config.keep_burnin else config.burn_in, d, seed,
                    config.snapshot_every)
    identity = SqrtPreconditioner.identity(d)
    fisher = FisherAdapter.start(d, config.lam) if kind == "fisher" else None
    cov = CovarianceAdapter(lam=config.lam) if kind == "adamala" else None
    pre = identity
    n_invalid = 0
    n_adapt = 0
    warned = False

    for it in range(total):
        if it == marks["adapt"] and kind != "mala":
            if kind == "fisher":
                pre = fisher.R
            else:
                pre = CholeskyPreconditioner(cov.covariance)
        if it == marks["collect"]:
            ctrl = ctrl.freeze()
        adapting_pre = kind != "mala" and it >= marks["adapt"] and (
            it < marks["collect"] or config.adapt_during_collection
        )
        params = ProposalParams(pre, normalized_step(ctrl, pre))

        y = mala_propose(ChainState.from_eval(cur), params, rng)
        prop = _evaluate(target, y, it)
        if prop.finite:
            alpha = mala_accept_prob(cur, prop, params)
        else:
            alpha = 0.0
            n_invalid += 1
        accepted = rng.random() < alpha

        if adapting_pre and kind == "fisher":
            if prop.finite:
                signal = fisher_signal(alpha, cur.score, prop.score)
            else:
                signal = np.zeros(d)
            fisher = fisher_adapt_step(fisher, signal)
            pre = fisher.R
        ctrl = step_size_update(ctrl, alpha)
        if not warned and ctrl.sigma2 < SIGMA2_WARN:
            logger.warning("%s: sigma2 fell to %.3g at iteration %d", kind, ctrl.sigma2, it)
            warned = True

        if accepted:
            cur = prop

        if kind == "adamala" and (marks["warmup"] <= it < marks["adapt"] or adapting_pre):
            cov = covariance_adapt_step(cov, cur.x)
            if adapting_pre:
                pre = CholeskyPreconditioner(cov.covariance)

        if adapting_pre and it < marks["collect"]:
            n_adapt += 1
            rec.snapshot(n_adapt, pre.matrix)
        rec.push(it, cur.x, accepted, ctrl.sigma2)

    return rec.finish(marks, n_invalid)
