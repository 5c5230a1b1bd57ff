import numpy as np
import pytest

from hardedge.core import OrderedConfig, SdeParams
from hardedge.errors import DomainError, StepFailure
from hardedge.rng import RandomSource, ZeroNoise
from hardedge.sde import (
    HermitianState,
    SmoothFunction,
    eigen_drift,
    eigenvalues,
    evolve_1d_ensemble,
    evolve_ensemble,
    generator_apply,
    log_drift,
    simulate,
    step_1d,
    step_eigen_sde,
    step_log_sde,
    step_matrix_sde,
)

PLAIN = SdeParams(eta=0.0, rescaled=False)
WIDE = SdeParams(eta=0.0, rescaled=False, dt_max=0.1)


def sum_sq() -> SmoothFunction:
    return SmoothFunction(
        value=lambda x: float(np.sum(x**2)),
        gradient=lambda x: 2.0 * x,
        hessian=lambda x: 2.0 * np.eye(x.size),
    )


class TestEigenStep:
    def test_drift_only_n1_plain(self):
        out, rep = step_eigen_sde(OrderedConfig([1.0]), WIDE, 0.1, ZeroNoise())
        assert out.values[0] == pytest.approx(1.05)
        assert rep.substeps == 1 and rep.accepted_dt == 0.1

    def test_drift_only_n2_plain(self):
        dt = 1e-4
        out, _ = step_eigen_sde(OrderedConfig([2.0, 1.0]), PLAIN, dt, ZeroNoise())
        np.testing.assert_allclose(out.values, [2.0 + 2.5 * dt, 1.0 - 1.5 * dt])

    def test_n1_rescaled_equals_plain(self):
        p = SdeParams(eta=0.0, rescaled=True, dt_max=0.1)
        out, _ = step_eigen_sde(OrderedConfig([1.0]), p, 0.1, ZeroNoise())
        assert out.values[0] == pytest.approx(1.05)

    def test_requires_interior(self):
        with pytest.raises(DomainError):
            step_eigen_sde(OrderedConfig([1.0, 1.0]), PLAIN, 0.01, ZeroNoise())

    def test_step_failure_on_impossible_state(self):
        # with dt_max = 1 the halving floor is 1e-12; across a 5e-13 gap the
        # interaction kick at that dt is ~2, so positivity always fails
        cfg = OrderedConfig([1.0 + 5e-13, 1.0])
        with pytest.raises(StepFailure):
            step_eigen_sde(cfg, SdeParams(dt_max=1.0), 1.0, ZeroNoise())

    def test_noise_increment_scales_linearly(self):
        # diffusion part of the Euler update is x * dw: exactly 1-homogeneous
        rng1 = RandomSource(42, 0)
        rng2 = RandomSource(42, 0)
        c = 3.7
        dt = 1e-5
        base = np.array([2.0, 1.0])
        out1, _ = step_eigen_sde(OrderedConfig(base), SdeParams(eta=0.0), dt, rng1)
        out2, _ = step_eigen_sde(OrderedConfig(c * base), SdeParams(eta=0.0), dt, rng2)
        drift1 = eigen_drift(base, SdeParams(eta=0.0))
        drift2 = eigen_drift(c * base, SdeParams(eta=0.0))
        noise1 = out1.values - base - drift1 * dt
        noise2 = out2.values - c * base - drift2 * dt
        np.testing.assert_allclose(noise2, c * noise1, rtol=1e-12)
        # eta part and interaction are 1-homogeneous; the constant is not
        np.testing.assert_allclose(
            drift2, c * drift1 + 0.5 * (1 - c), rtol=1e-12
        )


class TestLogStep:
    def test_stationary_point_n1_rescaled(self):
        p = SdeParams(eta=0.0, rescaled=True, dt_max=0.01)
        out, _ = step_log_sde(OrderedConfig([1.0]), p, 0.01, ZeroNoise())
        assert out.values[0] == pytest.approx(1.0)

    def test_drift_n1_rescaled_x2(self):
        p = SdeParams(eta=0.0, rescaled=True, dt_max=0.01)
        dt = 0.01
        out, _ = step_log_sde(OrderedConfig([2.0]), p, dt, ZeroNoise())
        assert out.values[0] == pytest.approx(2.0 * np.exp((-0.5 + 0.25) * dt))

    def test_ito_consistency_of_drifts(self):
        # exact algebraic identity: log drift = eigen drift / x - 1/2
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = np.sort(rng.uniform(0.2, 5.0, 6))[::-1]
            for params in (PLAIN, SdeParams(eta=1.3, rescaled=True)):
                np.testing.assert_allclose(
                    log_drift(x, params),
                    eigen_drift(x, params) / x - 0.5,
                    rtol=1e-12,
                )

    def test_one_step_agreement_on_shared_noise(self):
        # pathwise gap between the two integrators is O(dt) with a modest
        # constant; the Ito correction prevents anything better
        dt = 1e-4
        cfg = OrderedConfig([2.0, 1.0])
        a, _ = step_eigen_sde(cfg, PLAIN, dt, RandomSource(5, 1))
        b, _ = step_log_sde(cfg, PLAIN, dt, RandomSource(5, 1))
        assert np.max(np.abs(a.values - b.values)) < 10 * dt

    def test_positivity_automatic(self):
        cfg = OrderedConfig([1e-6])
        out, _ = step_log_sde(cfg, SdeParams(eta=5.0), 1e-3, RandomSource(6))
        assert out.values[0] > 0


class TestSimulate:
    def test_path_stays_interior(self):
        traj = simulate(
            OrderedConfig([3.0, 2.0, 1.0]),
            SdeParams(eta=0.5),
            horizon=0.2,
            save_times=[0.05, 0.1, 0.2],
            rng=RandomSource(7),
        )
        assert traj.times == (0.0, 0.05, 0.1, 0.2)
        for s in traj.states:
            assert s.is_strictly_interior()

    def test_zero_noise_is_deterministic(self):
        kw = dict(
            params=SdeParams(eta=1.0),
            horizon=0.1,
            save_times=[0.1],
            integrator="eigen",
        )
        a = simulate(OrderedConfig([2.0, 1.0]), rng=ZeroNoise(), **kw)
        b = simulate(OrderedConfig([2.0, 1.0]), rng=ZeroNoise(), **kw)
        np.testing.assert_array_equal(a.states[-1].values, b.states[-1].values)

    def test_seeded_reproducibility(self):
        kw = dict(
            params=SdeParams(eta=0.0),
            horizon=0.05,
            save_times=[0.05],
        )
        a = simulate(OrderedConfig([2.0, 1.0]), rng=RandomSource(11, 3), **kw)
        b = simulate(OrderedConfig([2.0, 1.0]), rng=RandomSource(11, 3), **kw)
        np.testing.assert_array_equal(a.states[-1].values, b.states[-1].values)

    def test_save_time_validation(self):
        with pytest.raises(DomainError):
            simulate(OrderedConfig([1.0]), PLAIN, 1.0, [2.0], ZeroNoise())


class TestEnsemble:
    def test_matches_single_path_layout(self):
        x0 = np.array([[3.0, 2.0, 1.0]] * 4)
        out, failed = evolve_ensemble(x0, SdeParams(eta=0.0), 0.05, 1e-3, RandomSource(8))
        assert out.shape == (4, 3)
        assert not failed.any()
        assert np.all(np.diff(out, axis=1) < 0) and np.all(out[:, -1] > 0)

    def test_failed_replicas_freeze(self):
        # unresolvable near-tie: with a gap below the halving floor every
        # replica freezes and is flagged rather than crashing the ensemble
        x0 = np.array([[1.0 + 5e-13, 1.0]] * 3)
        out, failed = evolve_ensemble(
            x0, SdeParams(dt_max=1.0), 1.0, 1.0, RandomSource(9), integrator="eigen"
        )
        assert failed.all()
        np.testing.assert_array_equal(out, x0)


class TestMatrixStep:
    def test_scalar_drift_reduction(self):
        h = HermitianState([[1.0]])
        out = step_matrix_sde(h, PLAIN, 0.1, ZeroNoise())
        assert out.entries[0, 0].real == pytest.approx(1.05)

    def test_drift_at_zero(self):
        h = HermitianState(np.zeros((3, 3)))
        out = step_matrix_sde(h, SdeParams(eta=0.7), 0.01, ZeroNoise())
        np.testing.assert_allclose(out.entries, 0.005 * np.eye(3), atol=1e-15)

    def test_trace_drift_linearity(self):
        rng = np.random.default_rng(1)
        a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        h = HermitianState(a @ a.conj().T / 4)
        eta, dt = 1.3, 1e-5
        out = step_matrix_sde(h, SdeParams(eta=eta), dt, ZeroNoise())
        tr0 = np.trace(h.entries).real
        tr1 = np.trace(out.entries).real
        want = tr0 + (-(eta + 4) / 2 * tr0 + 4 / 2 * (1 + tr0)) * dt
        assert tr1 == pytest.approx(want, rel=1e-10)

    def test_projection_keeps_psd(self):
        h = HermitianState(np.diag([1e-8, 0.0]))
        state = h.entries
        rng = RandomSource(10)
        for _ in range(50):
            state = step_matrix_sde(HermitianState(state), PLAIN, 1e-3, rng).entries
            w = np.linalg.eigvalsh(state)
            assert w.min() >= -1e-14

    def test_hermitian_validation(self):
        with pytest.raises(DomainError):
            HermitianState([[0.0, 1.0], [0.0, 0.0]])


class TestEigenvalues:
    def test_sorted(self):
        out = eigenvalues(HermitianState(np.diag([3.0, 1.0, 2.0])))
        np.testing.assert_allclose(out.values, [3.0, 2.0, 1.0])

    def test_rank_one(self):
        v = np.array([0.5, 0.5, 0.5, 0.5])
        out = eigenvalues(HermitianState(np.outer(v, v)))
        np.testing.assert_allclose(out.values, [1.0, 0.0, 0.0, 0.0], atol=1e-12)

    def test_trace_identity(self):
        rng = np.random.default_rng(2)
        a = rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6))
        h = a @ a.conj().T
        out = eigenvalues(HermitianState(h))
        assert out.values.sum() == pytest.approx(np.trace(h).real, rel=1e-9)


class Test1d:
    def test_entrance_from_zero(self):
        assert step_1d(0.0, 3, 1.0, 0.01, ZeroNoise()) == pytest.approx(0.005)

    def test_drift_n1(self):
        out = step_1d(1.0, 1, 0.0, 0.01, ZeroNoise())
        assert out == pytest.approx(1.0 + 0.5 * 0.01)

    def test_n1_parameterisation_matches_eigen_sde(self):
        # (1 - eta/2 - N) x + 1/2 at N=1 equals the plain N=1 particle drift
        for eta in (0.0, 1.0, -0.5):
            for x in (0.3, 1.0, 2.5):
                d1 = (1.0 - eta / 2.0 - 1.0) * x + 0.5
                d2 = eigen_drift(np.array([x]), SdeParams(eta=eta, rescaled=False))[0]
                assert d1 == pytest.approx(d2, rel=1e-12)

    def test_batch_evolution_positive(self):
        out = evolve_1d_ensemble(np.zeros(100), 2, 1.0, 0.5, 1e-3, RandomSource(12))
        assert np.all(out >= 0) and out.mean() > 0


class TestGenerator:
    def test_linear_function(self):
        f = SmoothFunction(
            value=lambda x: float(np.sum(x)),
            gradient=lambda x: np.ones_like(x),
            hessian=lambda x: np.zeros((x.size, x.size)),
        )
        assert generator_apply(f, OrderedConfig([2.0, 1.0]), 0.0) == pytest.approx(1.0)

    def test_constant_function(self):
        f = SmoothFunction(
            value=lambda x: 1.0,
            gradient=lambda x: np.zeros_like(x),
            hessian=lambda x: np.zeros((x.size, x.size)),
        )
        assert generator_apply(f, OrderedConfig([3.0, 1.0]), 2.0) == 0.0

    def test_sum_of_squares(self):
        assert generator_apply(sum_sq(), OrderedConfig([2.0, 1.0]), 0.0) == pytest.approx(12.0)

    def test_martingale_increment_small_n(self):
        # (E[f(X_d)] - f(x))/d approximates L f within Monte Carlo error
        x0 = np.array([2.0, 1.0])
        delta = 1e-3
        n = 30_000
        ens, failed = evolve_ensemble(
            np.tile(x0, (n, 1)), PLAIN, delta, delta / 5, RandomSource(13), "eigen"
        )
        assert not failed.any()
        f = sum_sq()
        vals = np.sum(ens**2, axis=1)
        est = (vals.mean() - f.value(x0)) / delta
        se = vals.std() / np.sqrt(n) / delta
        want = generator_apply(f, OrderedConfig(x0), 0.0)
        assert abs(est - want) < 3 * se + 50 * delta
