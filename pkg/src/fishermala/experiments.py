"""Experiment configuration, orchestration and run artifacts.

Configs are INI files read with :mod:`configparser`.  Sections:

``[experiment]``
    ``id`` (heat-source, neumann-id, gaussian-rate, gaussian-sanity),
    ``samplers``, ``seed``, ``replicates``, ``workers``, ``data_seed``.
``[model]``
    Problem size and noise; keys depend on the experiment.
``[prior]`` and optional ``[prior.pcn]``
    ``kind = isotropic`` with ``variance``, or ``kind = squared-exponential``
    with ``gamma``, ``length``, ``jitter``.  ``[prior.pcn]`` overrides the
    prior seen by pCN only.
``[sampler]``
    Run lengths and tuning constants (see :class:`SamplerConfig`).
``[diagnostics]``
    ``lag`` and ``level`` (credible-interval mass).
``[rate]``
    ``n_max``, ``n_min``, ``n_points``, ``schedule`` for gaussian-rate.

Every artifact records the normalized config and its hash.
"""

import configparser
import csv
import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .diagnostics import credible_intervals, esjd, ess, precond_convergence, rate_experiment, relative_error
from .forward import (
    HeatSourceOperator,
    LinearForwardModel,
    NeumannBvpModel,
    SyntheticDataset,
    heat_synthesize,
    heat_truth_source,
    neumann_source,
    neumann_synthesize,
)
from .samplers import SAMPLERS, ConfigError, SamplerConfig, run_chain
from .targets import (
    GaussianNoiseModel,
    GaussianPrior,
    GaussianTarget,
    Posterior,
    linear_posterior_moments,
)

__all__ = [
    "EXPERIMENTS",
    "OUTPUT_ENV",
    "ExperimentConfig",
    "Problem",
    "RunArtifact",
    "load_config",
    "parse_config",
    "config_hash",
    "output_root",
    "build_problem",
    "random_covariance",
    "chain_seeds",
    "run_experiment",
    "run_rate",
    "summarize_chain",
    "aggregate",
    "SUMMARY_COLUMNS",
    "TABLE_COLUMNS",
]

logger = logging.getLogger(__name__)

EXPERIMENTS = ("heat-source", "neumann-id", "gaussian-rate", "gaussian-sanity")
OUTPUT_ENV = "FISHERMALA_OUT"

SUMMARY_COLUMNS = [
    "experiment", "config_hash", "sampler", "replicate", "seed", "err_pct", "mean_error",
    "ess", "acceptance", "wall_time", "sigma2_final", "n_invalid", "n_samples",
]
TABLE_COLUMNS = [
    "experiment", "sampler", "n_runs",
    "err_pct_mean", "err_pct_std", "ess_mean", "ess_std",
    "acceptance_mean", "acceptance_std", "wall_time_mean", "wall_time_std",
]

_MODEL_DEFAULTS = {
    "heat-source": {"n_x": 100, "n_t": 200, "T": 1.0, "scheme": "crank-nicolson", "noise": 0.01},
    "neumann-id": {"n_x": 100, "n_coef": 3, "theta_true": [2.0, 1.0, 1.0], "noise": 0.01,
                   "fine_factor": 2, "fd_step": 1e-6, "q_min": 1e-8},
    "gaussian-rate": {"d": 5, "covariance": "random", "eig_min": 0.1, "eig_max": 1.0, "cov_seed": 0},
    "gaussian-sanity": {"d": 10, "covariance": "random", "eig_min": 0.1, "eig_max": 1.0, "cov_seed": 0},
}
_PRIOR_DEFAULTS = {
    "heat-source": {"kind": "isotropic", "variance": 1.5},
    "neumann-id": {"kind": "isotropic", "variance": 0.1},
    "gaussian-rate": {},
    "gaussian-sanity": {},
}
_INT_KEYS = {"n_x", "n_t", "n_coef", "fine_factor", "d", "cov_seed"}
_FLOAT_KEYS = {"T", "noise", "fd_step", "q_min", "eig_min", "eig_max", "variance", "gamma",
               "length", "jitter"}


@dataclass
class ExperimentConfig:
    """Validated experiment description.

    ``model``, ``prior`` and ``prior_pcn`` are plain dictionaries whose keys
    depend on ``experiment``; the rest are typed fields.
    """

    experiment: str
    samplers: list
    seed: int = 0
    replicates: int = 1
    workers: int = 1
    data_seed: int = 0
    model: dict = field(default_factory=dict)
    prior: dict = field(default_factory=dict)
    prior_pcn: Optional[dict] = None
    sampler: dict = field(default_factory=dict)
    lag: int = 500
    level: float = 0.95
    rate: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)

    def sampler_config(self, kind):
        s = dict(self.sampler)
        if kind != "pcn":
            s.pop("beta", None)
        return SamplerConfig(**s)


def _fail(section, key, msg):
    raise ConfigError(f"[{section}] {key}: {msg}")


def _get(cp, section, key, conv, default=None, required=False):
    if not cp.has_option(section, key):
        if required:
            _fail(section, key, "missing required field")
        return default
    raw = cp.get(section, key).strip()
    try:
        return conv(raw)
    except ValueError as exc:
        _fail(section, key, f"cannot parse {raw!r} ({exc})")


def _float_list(raw):
    return [float(v) for v in raw.replace(",", " ").split()]


def _bool(raw):
    low = raw.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def _typed_section(cp, section, defaults):
    out = {k: (list(v) if isinstance(v, list) else v) for k, v in defaults.items()}
    if not cp.has_section(section):
        return out
    for key in cp.options(section):
        if key in _INT_KEYS:
            out[key] = _get(cp, section, key, int)
        elif key in _FLOAT_KEYS:
            out[key] = _get(cp, section, key, float)
        elif key == "theta_true":
            out[key] = _get(cp, section, key, _float_list)
        else:
            out[key] = cp.get(section, key).strip()
    return out


_SAMPLER_FIELDS = {
    "burn_in": int, "n_samples": int, "n_init": int, "lam": float, "rho": float,
    "alpha_star": float, "sigma2_init": float, "sigma2_floor": float, "beta": float,
    "snapshot_every": int, "adapt_during_collection": _bool, "keep_burnin": _bool,
}


def parse_config(text):
    """Parse INI ``text`` into a validated :class:`ExperimentConfig`.

    Raises
    ------
    ConfigError
        With a ``[section] key: reason`` message for the first bad field.
    """
    # keys are case-sensitive ("T")
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    if not cp.has_section("experiment"):
        raise ConfigError("[experiment] section is missing")
    exp = _get(cp, "experiment", "id", str, required=True)
    if exp not in EXPERIMENTS:
        _fail("experiment", "id", f"unknown experiment {exp!r}; expected one of {EXPERIMENTS}")
    samplers = _get(cp, "experiment", "samplers", lambda r: [s.strip() for s in r.split(",") if s.strip()],
                    default=[] if exp == "gaussian-rate" else ["fisher"])
    for s in samplers:
        if s not in SAMPLERS:
            _fail("experiment", "samplers", f"unknown sampler {s!r}; expected one of {SAMPLERS}")
    cfg = ExperimentConfig(
        experiment=exp,
        samplers=samplers,
        seed=_get(cp, "experiment", "seed", int, 0),
        replicates=_get(cp, "experiment", "replicates", int, 1),
        workers=_get(cp, "experiment", "workers", int, 1),
        data_seed=_get(cp, "experiment", "data_seed", int, 0),
        model=_typed_section(cp, "model", _MODEL_DEFAULTS[exp]),
        prior=_typed_section(cp, "prior", _PRIOR_DEFAULTS[exp]),
        prior_pcn=_typed_section(cp, "prior.pcn", {}) if cp.has_section("prior.pcn") else None,
        lag=_get(cp, "diagnostics", "lag", int, 500) if cp.has_section("diagnostics") else 500,
        level=_get(cp, "diagnostics", "level", float, 0.95) if cp.has_section("diagnostics") else 0.95,
    )
    if cp.has_section("sampler"):
        for key in cp.options("sampler"):
            if key not in _SAMPLER_FIELDS:
                _fail("sampler", key, "unknown field")
            cfg.sampler[key] = _get(cp, "sampler", key, _SAMPLER_FIELDS[key])
    if cp.has_section("rate"):
        cfg.rate = {
            "n_max": _get(cp, "rate", "n_max", int, 10_000),
            "n_min": _get(cp, "rate", "n_min", int, 100),
            "n_points": _get(cp, "rate", "n_points", int, 25),
            "schedule": _get(cp, "rate", "schedule", str, "harmonic"),
        }
    elif exp == "gaussian-rate":
        cfg.rate = {"n_max": 10_000, "n_min": 100, "n_points": 25, "schedule": "harmonic"}
    validate(cfg)
    return cfg


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text)


def _positive(section, key, value):
    if value is None or not value > 0:
        _fail(section, key, f"must be positive, got {value!r}")


def validate(cfg):
    """Field-level checks beyond parsing; raises :class:`ConfigError`."""
    for key in ("replicates", "workers"):
        _positive("experiment", key, getattr(cfg, key))
    m = cfg.model
    if cfg.experiment == "heat-source":
        for key in ("n_x", "n_t", "T", "noise"):
            _positive("model", key, m[key])
        if m["scheme"] not in ("crank-nicolson", "backward-euler"):
            _fail("model", "scheme", f"unknown scheme {m['scheme']!r}")
    elif cfg.experiment == "neumann-id":
        for key in ("n_x", "n_coef", "noise", "fd_step", "q_min"):
            _positive("model", key, m[key])
        if len(m["theta_true"]) != m["n_coef"]:
            _fail("model", "theta_true", f"needs {m['n_coef']} values")
        if m["fine_factor"] < 2:
            _fail("model", "fine_factor", "data grid must be strictly finer (>= 2)")
    else:
        _positive("model", "d", m["d"])
        if m["covariance"] not in ("identity", "random"):
            _fail("model", "covariance", f"expected identity or random, got {m['covariance']!r}")
        if not 0 < m["eig_min"] <= m["eig_max"]:
            _fail("model", "eig_min", "need 0 < eig_min <= eig_max")
    for section, prior in (("prior", cfg.prior), ("prior.pcn", cfg.prior_pcn)):
        if not prior:
            continue
        kind = prior.get("kind", "isotropic")
        if kind == "isotropic":
            _positive(section, "variance", prior.get("variance"))
        elif kind == "squared-exponential":
            _positive(section, "gamma", prior.get("gamma"))
            _positive(section, "length", prior.get("length"))
        else:
            _fail(section, "kind", f"unknown prior kind {kind!r}")
    if cfg.experiment == "gaussian-rate":
        r = cfg.rate
        if r["schedule"] not in ("harmonic", "constant"):
            _fail("rate", "schedule", f"expected harmonic or constant, got {r['schedule']!r}")
        if not 1 <= r["n_min"] < r["n_max"]:
            _fail("rate", "n_min", "need 1 <= n_min < n_max")
        return
    if not cfg.samplers:
        _fail("experiment", "samplers", "at least one sampler is required")
    for key in ("burn_in", "n_samples"):
        if key not in cfg.sampler:
            _fail("sampler", key, "missing required field")
    _positive("diagnostics", "lag", cfg.lag)
    if cfg.lag >= cfg.sampler["n_samples"]:
        _fail("diagnostics", "lag", f"must be below n_samples ({cfg.sampler['n_samples']})")
    if not 0 < cfg.level < 1:
        _fail("diagnostics", "level", "must lie in (0, 1)")
    for kind in cfg.samplers:
        try:
            cfg.sampler_config(kind).validate(kind)
        except ConfigError as exc:
            raise ConfigError(f"[sampler] ({kind}) {exc}") from exc
        except TypeError as exc:
            raise ConfigError(f"[sampler] {exc}") from exc


def config_hash(cfg):
    """SHA-256 (first 16 hex digits) of the canonical JSON form of ``cfg``."""
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def output_root(default="fishermala-out"):
    return Path(os.environ.get(OUTPUT_ENV, default))


# -- problem construction ---------------------------------------------------


@dataclass
class Problem:
    """Targets for each sampler plus reference quantities.

    ``reference_cov`` is the exact posterior covariance when one is
    available (linear problems), used for the preconditioner-convergence
    curve and for moment checks.
    """

    targets: dict
    truth: np.ndarray
    dataset: Optional[SyntheticDataset] = None
    reference_mean: Optional[np.ndarray] = None
    reference_cov: Optional[np.ndarray] = None


def random_covariance(d, eig_min=0.1, eig_max=1.0, seed=0):
    """``Q diag(eigs) Q^T`` with Haar-random ``Q`` and log-spaced eigenvalues."""
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    q = q * np.sign(np.diag(r))
    eigs = np.geomspace(eig_min, eig_max, d)
    C = (q * eigs) @ q.T
    return 0.5 * (C + C.T)


def _gaussian_cov(model):
    d = model["d"]
    if model["covariance"] == "identity":
        return np.eye(d)
    return random_covariance(d, model["eig_min"], model["eig_max"], model["cov_seed"])


def _make_prior(spec, grid, d):
    if spec.get("kind", "isotropic") == "isotropic":
        return GaussianPrior.isotropic(d, spec["variance"])
    return GaussianPrior.squared_exponential(grid, spec["gamma"], spec["length"], spec.get("jitter", 1e-10))


def build_problem(cfg):
    """Assemble data, targets and references for ``cfg``."""
    m = cfg.model
    if cfg.experiment == "heat-source":
        n_x = m["n_x"]
        op = HeatSourceOperator(n_x, m["n_t"], m["T"], scheme=m["scheme"])
        fine = HeatSourceOperator(2 * n_x + 1, m["n_t"], m["T"], scheme=m["scheme"])
        ds = heat_synthesize(fine, n_x, heat_truth_source, m["noise"], cfg.data_seed)
        fwd = op.linear_model()
        noise = GaussianNoiseModel.isotropic(m["noise"], n_x)
        prior = _make_prior(cfg.prior, op.grid, n_x)
        post = Posterior(prior, noise, fwd, ds.y)
        targets = {"default": post}
        if cfg.prior_pcn:
            targets["pcn"] = Posterior(_make_prior(cfg.prior_pcn, op.grid, n_x), noise, fwd, ds.y)
        lin = linear_posterior_moments(fwd.F, prior, noise, ds.y - fwd.offset)
        return Problem(targets, ds.truth, ds, lin.mean, lin.covariance)
    if cfg.experiment == "neumann-id":
        theta = np.array(m["theta_true"], dtype=float)
        src = neumann_source(theta)
        ds = neumann_synthesize(theta, m["n_x"], m["noise"], cfg.data_seed, m["fine_factor"])
        model = NeumannBvpModel(m["n_x"], m["n_coef"], src, q_min=m["q_min"], fd_step=m["fd_step"])
        noise = GaussianNoiseModel.isotropic(m["noise"], model.n_obs)
        prior = _make_prior(cfg.prior, None, m["n_coef"])
        targets = {"default": Posterior(prior, noise, model, ds.y)}
        if cfg.prior_pcn:
            targets["pcn"] = Posterior(_make_prior(cfg.prior_pcn, None, m["n_coef"]), noise, model, ds.y)
        return Problem(targets, theta, ds)
    # Gaussian experiments: prior N(0, 2S), identity forward map, noise N(0, 2S)
    # and data 0 give the posterior N(0, S) with a non-trivial misfit for pCN.
    S = _gaussian_cov(m)
    d = S.shape[0]
    if cfg.experiment == "gaussian-rate":
        return Problem({"default": GaussianTarget(np.zeros(d), S)}, np.zeros(d), None, np.zeros(d), S)
    post = Posterior(GaussianPrior(2.0 * S), GaussianNoiseModel(2.0 * S), LinearForwardModel(np.eye(d)),
                     np.zeros(d))
    return Problem({"default": post}, np.zeros(d), None, np.zeros(d), S)


def chain_seeds(seed, replicates):
    """Seed for every (replicate, sampler) pair.

    Each replicate gets a child of ``SeedSequence(seed)``, which is split
    again over the full sampler list so that a chain's seed does not depend
    on which other samplers are configured.
    """
    out = {}
    for r, child in enumerate(np.random.SeedSequence(seed).spawn(replicates)):
        for k, grand in zip(SAMPLERS, child.spawn(len(SAMPLERS))):
            out[(r, k)] = int(grand.generate_state(1, np.uint64)[0] >> np.uint64(1))
    return out


# -- running ----------------------------------------------------------------


@dataclass
class RunArtifact:
    """Everything a ``run`` produced, as paths plus in-memory summaries."""

    directory: Path
    config: ExperimentConfig
    config_hash: str
    summary: list
    chains: dict = field(default_factory=dict)


def summarize_chain(record, problem, lag, level=0.95, reference_cov=None):
    """Diagnostics dictionary and summary numbers for one chain."""
    coll = record.collection()
    mean = coll.mean(axis=0)
    truth = problem.truth
    rep = ess(coll, lag)
    ci = credible_intervals(coll, level)
    nt = float(np.linalg.norm(truth))
    diag = {
        "posterior_mean": mean,
        "credible_intervals": ci,
        "credible_level": level,
        "covers_truth": bool(np.all((ci[:, 0] <= truth) & (truth <= ci[:, 1]))),
        "err_pct": relative_error(mean, truth) if nt > 0 else None,
        "mean_error": float(np.linalg.norm(mean - truth)),
        "iat": rep.iat,
        "ess_per_dim": rep.ess_per_dim,
        "ess": rep.ess,
        "lag": lag,
        "esjd": esjd(coll),
        "acceptance": record.acceptance_rate(),
        "sigma2_final": float(record.sigma2[-1]),
        "n_invalid": record.n_invalid,
    }
    if problem.reference_cov is not None and problem.dataset is None:
        cov = np.cov(coll, rowvar=False)
        ref = problem.reference_cov
        diag["cov_rel_err"] = float(np.linalg.norm(cov - ref) / np.linalg.norm(ref))
    ref_cov = reference_cov if reference_cov is not None else problem.reference_cov
    if record.snapshots is not None and ref_cov is not None:
        diag["frobenius"] = {
            "iterations": record.snapshot_iters,
            "errors": precond_convergence(record.snapshots, ref_cov),
        }
    return diag


def _run_one(cfg_dict, kind, replicate, seed, directory):
    cfg = ExperimentConfig(**cfg_dict)
    problem = build_problem(cfg)
    target = problem.targets.get(kind, problem.targets["default"])
    t0 = time.perf_counter()
    record = run_chain(kind, target, cfg.sampler_config(kind), seed)
    wall = time.perf_counter() - t0
    h = config_hash(cfg)
    stem = Path(directory) / f"{kind}-r{replicate:02d}"
    io.write_chain(record, stem, extra={"config_hash": h, "experiment": cfg.experiment,
                                        "replicate": replicate})
    diag = summarize_chain(record, problem, cfg.lag, cfg.level)
    diag.update({"sampler": kind, "replicate": replicate, "seed": seed, "config_hash": h,
                 "wall_time": wall, "chain": stem.name + ".chain"})
    io.write_json(diag, f"{stem}.diag.json")
    row = {
        "experiment": cfg.experiment, "config_hash": h, "sampler": kind, "replicate": replicate,
        "seed": seed, "err_pct": diag["err_pct"], "mean_error": diag["mean_error"],
        "ess": diag["ess"], "acceptance": diag["acceptance"], "wall_time": wall,
        "sigma2_final": diag["sigma2_final"], "n_invalid": record.n_invalid,
        "n_samples": int(record.collection().shape[0]),
    }
    return row, record


def _write_summary(rows, directory):
    io.write_json({"format": "fishermala-summary", "version": io.FORMAT_VERSION, "rows": rows},
                  directory / "summary.json")
    _write_csv(rows, SUMMARY_COLUMNS, directory / "summary.csv")


def _write_csv(rows, columns, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: ("" if row.get(k) is None else row.get(k)) for k in columns})


def _prepare_dir(cfg, out_dir):
    h = config_hash(cfg)
    directory = Path(out_dir) if out_dir is not None else output_root() / f"{cfg.experiment}-{h}"
    directory.mkdir(parents=True, exist_ok=True)
    io.write_json({"format": "fishermala-artifact", "version": io.FORMAT_VERSION,
                   "experiment": cfg.experiment, "config": cfg.to_dict(), "config_hash": h},
                  directory / "artifact.json")
    return directory, h


def run_experiment(cfg, out_dir=None, keep_records=False):
    """Run every (replicate, sampler) chain of ``cfg`` and write the artifact.

    Chains run in a process pool when ``cfg.workers > 1``.  Returns a
    :class:`RunArtifact`; chain records are kept in memory only on request.
    """
    if cfg.experiment == "gaussian-rate":
        return run_rate(cfg, out_dir)
    directory, h = _prepare_dir(cfg, out_dir)
    problem = build_problem(cfg)
    if problem.dataset is not None:
        io.write_dataset(problem.dataset, directory / "dataset.json")
    seeds = chain_seeds(cfg.seed, cfg.replicates)
    jobs = [(r, k, seeds[(r, k)]) for r in range(cfg.replicates) for k in cfg.samplers]
    cfg_dict = cfg.to_dict()
    results = []
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futs = [pool.submit(_run_one, cfg_dict, k, r, s, directory) for r, k, s in jobs]
            results = [f.result() for f in futs]
    else:
        for r, k, s in jobs:
            logger.info("running %s replicate %d", k, r)
            results.append(_run_one(cfg_dict, k, r, s, directory))
    rows = [row for row, _ in results]
    _write_summary(rows, directory)
    chains = {(row["replicate"], row["sampler"]): rec for row, rec in results} if keep_records else {}
    return RunArtifact(directory, cfg, h, rows, chains)


def run_rate(cfg, out_dir=None):
    """Stochastic Fisher estimate error against ``n``; writes ``rate.json``."""
    if cfg.experiment != "gaussian-rate":
        raise ConfigError(f"[experiment] id: rate needs gaussian-rate, got {cfg.experiment!r}")
    directory, h = _prepare_dir(cfg, out_dir)
    problem = build_problem(cfg)
    r = cfg.rate
    curve = rate_experiment(problem.targets["default"], schedule=r["schedule"], n_max=r["n_max"],
                            replicates=cfg.replicates, rng_seed=cfg.seed,
                            lam=float(cfg.sampler.get("lam", 10.0)), n_min=r["n_min"],
                            n_points=r["n_points"])
    out = {"format": "fishermala-rate", "version": io.FORMAT_VERSION, "config_hash": h,
           "n": curve.n, "errors": curve.errors, "slope": curve.slope, "intercept": curve.intercept,
           "replicates": cfg.replicates, "schedule": r["schedule"]}
    io.write_json(out, directory / "rate.json")
    row = {"experiment": cfg.experiment, "config_hash": h, "slope": curve.slope}
    return RunArtifact(directory, cfg, h, [row], {"curve": curve})


def aggregate(rows):
    """Mean and sample standard deviation per sampler.

    Raises
    ------
    ConfigError
        If the rows come from more than one experiment.
    """
    exps = sorted({row["experiment"] for row in rows})
    if len(exps) > 1:
        raise ConfigError(f"cannot aggregate mixed experiments: {exps}")
    out = []
    for kind in sorted({row["sampler"] for row in rows}, key=lambda k: SAMPLERS.index(k)):
        sub = [row for row in rows if row["sampler"] == kind]
        agg = {"experiment": exps[0], "sampler": kind, "n_runs": len(sub)}
        for key in ("err_pct", "ess", "acceptance", "wall_time"):
            vals = np.array([np.nan if row.get(key) is None else float(row[key]) for row in sub])
            agg[f"{key}_mean"] = float(np.mean(vals))
            agg[f"{key}_std"] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out.append(agg)
    return out
