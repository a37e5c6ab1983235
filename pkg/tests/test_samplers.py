import numpy as np
import pytest
from scipy import stats

from fishermala.forward import DomainError, LinearForwardModel
from fishermala.linalg import SqrtPreconditioner
from fishermala.samplers import (
    ChainError,
    ChainState,
    CholeskyPreconditioner,
    ConfigError,
    PcnParams,
    ProposalParams,
    SamplerConfig,
    mala_accept_prob,
    mala_h,
    mala_log_ratio,
    mala_propose,
    pcn_propose,
    pcn_step,
    run_chain,
)
from fishermala.targets import GaussianNoiseModel, GaussianPrior, GaussianTarget, Posterior, TargetEval


def _state(target, x):
    return ChainState.from_eval(target.evaluate(np.atleast_1d(np.asarray(x, dtype=float))))


def _params(d, s2, M=None):
    pre = SqrtPreconditioner.identity(d) if M is None else CholeskyPreconditioner(M)
    return ProposalParams(pre, s2)


STD1 = GaussianTarget(np.zeros(1), np.eye(1))


class TestMalaPropose:
    def test_zero_score_zero_noise(self):
        st_ = ChainState.from_eval(TargetEval(np.array([1.0, 2.0]), 0.0, np.zeros(2)))
        np.testing.assert_array_equal(mala_propose(st_, _params(2, 0.3), eta=np.zeros(2)), [1.0, 2.0])

    def test_plug_in(self):
        st_ = ChainState.from_eval(TargetEval(np.array([0.0]), 0.0, np.array([2.0])))
        y = mala_propose(st_, _params(1, 0.04), eta=np.array([0.5]))
        np.testing.assert_allclose(y, [0.14])

    def test_moments(self):
        M = np.array([[2.0, 0.5], [0.5, 1.0]])
        x, s = np.array([0.3, -0.2]), np.array([1.0, -2.0])
        st_ = ChainState.from_eval(TargetEval(x, 0.0, s))
        params = _params(2, 0.25, M)
        rng = np.random.default_rng(0)
        n = 100_000
        ys = np.array([mala_propose(st_, params, rng) for _ in range(n)])
        mean = x + 0.125 * M @ s
        cov = 0.25 * M
        se = np.sqrt(np.diag(cov) / n)
        assert np.all(np.abs(ys.mean(axis=0) - mean) <= 4 * se)
        np.testing.assert_allclose(np.cov(ys, rowvar=False), cov, rtol=0.03, atol=0.005)

    def test_identity_preconditioner_reduces_to_plain_mala(self):
        rng = np.random.default_rng(1)
        x, s, eta = rng.standard_normal((3, 4))
        st_ = ChainState.from_eval(TargetEval(x, 0.0, s))
        y = mala_propose(st_, _params(4, 0.3), eta=eta)
        np.testing.assert_array_equal(y, x + 0.15 * s + np.sqrt(0.3) * eta)


class TestMalaH:
    def test_trivial(self):
        assert mala_h(np.ones(2), np.ones(2), np.zeros(2), lambda v: v, 0.5) == 0.0

    def test_bracket_vanishes(self):
        v, s = np.array([0.5, -1.0]), np.array([1.0, 3.0])
        u = v + 0.25 * 0.8 * s
        assert mala_h(u, v, s, lambda w: w, 0.8) == pytest.approx(0.0, abs=1e-15)

    def test_hand_value(self):
        assert mala_h(np.array([2.0]), np.array([0.0]), np.array([1.0]), lambda w: w, 4.0) == pytest.approx(0.5)


class TestAcceptance:
    def test_same_point(self):
        st_ = _state(STD1, [0.7])
        assert mala_accept_prob(st_, st_.eval, _params(1, 0.5)) == 1.0

    def test_small_step(self):
        st_ = _state(STD1, [0.0])
        y = mala_propose(st_, _params(1, 1e-6), np.random.default_rng(0))
        assert mala_accept_prob(st_, STD1.evaluate(y), _params(1, 1e-6)) >= 0.999

    def test_independent_oracle(self):
        # Metropolis-Hastings with explicit Gaussian proposal densities
        x, y, s2 = 0.0, 0.5, 1.0

        def logq(b, a):
            return stats.norm.logpdf(b, loc=a + 0.5 * s2 * (-a), scale=np.sqrt(s2))

        logpi = stats.norm.logpdf
        expected = min(1.0, np.exp(logpi(y) + logq(x, y) - logpi(x) - logq(y, x)))
        got = mala_accept_prob(_state(STD1, [x]), STD1.evaluate(np.array([y])), _params(1, s2))
        assert got == pytest.approx(expected, rel=1e-12)

    def test_ratio_reversibility(self):
        S = np.array([[1.0, 0.4, 0.0], [0.4, 2.0, 0.3], [0.0, 0.3, 0.5]])
        t = GaussianTarget(np.array([0.1, 0.0, -0.3]), S)
        params = _params(3, 0.7, np.diag([1.0, 2.0, 0.5]))
        rng = np.random.default_rng(2)
        for _ in range(10):
            a, b = t.evaluate(rng.standard_normal(3)), t.evaluate(rng.standard_normal(3))
            assert mala_log_ratio(a, b, params) + mala_log_ratio(b, a, params) == pytest.approx(0.0, abs=1e-10)

    def test_invalid_proposal(self):
        st_ = _state(STD1, [0.0])
        bad = TargetEval(np.array([1.0]), -np.inf, np.array([np.nan]))
        assert mala_accept_prob(st_, bad, _params(1, 0.5)) == 0.0
        nan = TargetEval(np.array([1.0]), np.nan, np.array([0.0]))
        assert mala_accept_prob(st_, nan, _params(1, 0.5)) == 0.0

    def test_params_validation(self):
        with pytest.raises(ValueError):
            ProposalParams(SqrtPreconditioner.identity(2), 0.0)


class TestPcn:
    def test_plug_in(self):
        params = PcnParams(0.6, GaussianPrior(np.eye(1)))
        np.testing.assert_allclose(pcn_propose(np.array([1.0]), params, eta=np.array([0.25])), [0.95])

    def test_small_beta(self):
        params = PcnParams(1e-9, GaussianPrior(np.eye(2)))
        np.testing.assert_allclose(pcn_propose(np.array([1.0, -2.0]), params, eta=np.zeros(2)), [1.0, -2.0])

    def test_flat_potential_always_accepts(self):
        params = PcnParams(0.5, GaussianPrior(np.eye(3)))
        rng = np.random.default_rng(0)
        state = ChainState(np.zeros(3), potential=0.0)
        for _ in range(200):
            state, acc = pcn_step(state, params, lambda y: 0.0, rng)
            assert acc

    def test_constant_shift_invariance(self):
        params = PcnParams(0.4, GaussianPrior(np.eye(2)))

        def run(shift):
            rng = np.random.default_rng(7)
            state = ChainState(np.ones(2), potential=0.5 * 2 + shift)
            flags = []
            for _ in range(300):
                state, acc = pcn_step(state, params, lambda y: 0.5 * float(y @ y) + shift, rng)
                flags.append(acc)
            return flags

        assert run(0.0) == run(123.0)

    def test_beta_range(self):
        with pytest.raises(ValueError):
            PcnParams(1.0, GaussianPrior(np.eye(1)))


def _small_posterior(d=3):
    return Posterior(GaussianPrior(2.0 * np.eye(d)), GaussianNoiseModel(2.0 * np.eye(d)),
                     LinearForwardModel(np.eye(d)), np.zeros(d))


class TestRunChain:
    @pytest.mark.parametrize("kind", ["fisher", "adamala", "mala", "pcn"])
    def test_reproducible(self, kind):
        cfg = SamplerConfig(burn_in=1200, n_samples=300, n_init=100, beta=0.5)
        a = run_chain(kind, _small_posterior(), cfg, 42)
        b = run_chain(kind, _small_posterior(), cfg, 42)
        assert a.same_path(b)
        c = run_chain(kind, _small_posterior(), cfg, 43)
        assert not a.same_path(c)

    @pytest.mark.parametrize("kind", ["fisher", "adamala", "mala"])
    def test_record_layout(self, kind):
        cfg = SamplerConfig(burn_in=1000, n_samples=500, n_init=100, snapshot_every=50)
        rec = run_chain(kind, _small_posterior(), cfg, 0)
        n = 1500
        assert rec.samples.shape == (n, 3)
        assert rec.accept.shape == rec.sigma2.shape == rec.wall_times.shape == (n,)
        marks = rec.phase_marks
        order = [marks[k] for k in ("init", "warmup", "adapt", "collect", "end") if k in marks]
        assert order == sorted(order)
        assert marks["adapt"] == (200 if kind == "adamala" else 100)
        assert rec.collection().shape == (500, 3)
        # step size frozen in collection
        assert np.all(rec.sigma2[1000:] == rec.sigma2[1000])
        assert np.all(np.diff(rec.wall_times) >= 0)
        if kind != "mala":
            assert rec.snapshots is not None and rec.snapshots.shape[1:] == (3, 3)

    def test_fisher_identity_phase_matches_mala(self):
        # during initialization both run plain MALA on the same random stream
        cfg = SamplerConfig(burn_in=600, n_samples=10, n_init=300)
        a = run_chain("fisher", _small_posterior(), cfg, 5)
        b = run_chain("mala", _small_posterior(), cfg, 5)
        np.testing.assert_array_equal(a.samples[:301], b.samples[:301])

    def test_drop_burnin(self):
        cfg = SamplerConfig(burn_in=500, n_samples=200, n_init=100, keep_burnin=False)
        full = run_chain("fisher", _small_posterior(), SamplerConfig(burn_in=500, n_samples=200, n_init=100), 3)
        rec = run_chain("fisher", _small_posterior(), cfg, 3)
        assert rec.offset == 500 and rec.samples.shape[0] == 200
        np.testing.assert_array_equal(rec.collection(), full.collection())

    def test_acceptance_converges_during_burnin(self):
        target = GaussianTarget(np.zeros(5), np.diag([0.2, 0.5, 1.0, 2.0, 4.0]))
        cfg = SamplerConfig(burn_in=8000, n_samples=1000)
        rec = run_chain("fisher", target, cfg, 9)
        tail = rec.accept[6000:8000].mean()
        assert abs(tail - 0.574) <= 0.05

    def test_invalid_proposals_are_rejections(self):
        class Wall:
            dim = 1
            prior = GaussianPrior(0.01 * np.eye(1), mean=np.array([1.0]))

            def evaluate(self, x):
                if x[0] < 0:
                    return TargetEval(x, -np.inf, np.full(1, np.nan))
                return TargetEval(x, -0.5 * float(x @ x), -x)

        cfg = SamplerConfig(burn_in=1000, n_samples=1000, n_init=100, sigma2_init=4.0)
        rec = run_chain("fisher", Wall(), cfg, 1)
        assert rec.n_invalid > 0
        assert np.all(rec.samples >= 0)

    def test_other_failures_carry_iteration(self):
        class Broken:
            dim = 2
            calls = 0

            def evaluate(self, x):
                self.calls += 1
                if self.calls > 20:
                    raise RuntimeError("solver blew up")
                return TargetEval(x, -0.5 * float(x @ x), -x)

        with pytest.raises(ChainError) as info:
            run_chain("mala", Broken(), SamplerConfig(burn_in=100, n_samples=10, n_init=10), 0)
        assert info.value.iteration == 19
        assert "iteration 19" in str(info.value)

    def test_domain_failure_in_initial_draws(self):
        class Nowhere:
            dim = 1
            prior = GaussianPrior(np.eye(1))

            def evaluate(self, x):
                return TargetEval(x, -np.inf, np.full(1, np.nan))

        with pytest.raises(ChainError):
            run_chain("mala", Nowhere(), SamplerConfig(burn_in=10, n_samples=10, n_init=5, max_init_draws=20), 0)

    @pytest.mark.parametrize(
        "kind, kwargs",
        [
            ("nuts", {}),
            ("pcn", {"beta": None}),
            ("fisher", {"lam": 0.0}),
            ("fisher", {"burn_in": 100, "n_init": 500}),
            ("adamala", {"burn_in": 700, "n_init": 500}),
            ("fisher", {"rho": -0.1}),
            ("fisher", {"n_samples": 0}),
        ],
    )
    def test_config_validation(self, kind, kwargs):
        base = {"burn_in": 2000, "n_samples": 100}
        base.update(kwargs)
        with pytest.raises(ConfigError):
            run_chain(kind, _small_posterior(), SamplerConfig(**base), 0)

    def test_domain_error_type(self):
        assert issubclass(DomainError, ValueError)
