import math

import numpy as np
import pytest

from metriplex import stochastic as sd
from metriplex import systems
from metriplex.poisson import HamiltonianSystem, ScalarField
from metriplex.errors import ConfigError, DegenerateError, InsufficientSamplesError, NumericalError
from metriplex.stochastic import DensityGrid, Ensemble, FrictionModel, NoiseModel


def ensemble(x, D=0.2, beta=1.0, seed=7, mode="fixed"):
    return Ensemble(np.asarray(x, float), NoiseModel(D, seed), FrictionModel(mode, beta, D))


def gaussian_samples(rng, beta, n):
    """Exact draws from exp(-beta (p^2 + q^2) / 2)."""
    return rng.standard_normal((n, 2)) / math.sqrt(beta)


class TestModels:
    def test_fluctuation_dissipation_relation(self):
        fr = FrictionModel.fixed(2.5, 0.4)
        assert fr.gamma == 0.5 * 2.5 * 0.4
        assert FrictionModel.from_gamma(fr.gamma, 0.4).beta == pytest.approx(2.5)

    @pytest.mark.parametrize("kwargs", [{"mode": "warm"}, {"update_every": 0}])
    def test_bad_friction(self, kwargs):
        with pytest.raises(ConfigError):
            FrictionModel(**{"mode": "fixed", "beta": 1.0, "D": 0.1, **kwargs})

    def test_gamma_without_noise(self):
        with pytest.raises(ConfigError):
            FrictionModel.from_gamma(0.1, 0.0)

    def test_negative_noise(self):
        with pytest.raises(ConfigError):
            NoiseModel(-1.0)

    def test_non_finite_particles(self):
        with pytest.raises(NumericalError):
            ensemble([[np.inf, 0.0]])


class TestDrift:
    def test_damped_rotation(self, canonical):
        fr = FrictionModel.from_gamma(0.1, 0.2)
        np.testing.assert_allclose(sd.drift(canonical, [1.0, 0.0], fr), [-0.1, 1.0], atol=1e-15)

    def test_without_friction_is_hamiltonian_flow(self, rigid, rng):
        from metriplex.poisson import hamiltonian_vector_field

        x = rng.standard_normal((10, 3))
        np.testing.assert_array_equal(
            sd.drift(rigid, x, FrictionModel.fixed(0.0, 0.3)), hamiltonian_vector_field(rigid, x)
        )

    def test_zero_at_critical_point(self, rigid):
        assert np.all(sd.drift(rigid, [0.0, 0.0, 0.0], FrictionModel.fixed(1.0, 1.0)) == 0.0)

    def test_friction_dissipates_energy(self, rigid, rng):
        """-gamma grad H . g grad H is never positive."""
        x = rng.standard_normal((50, 3))
        v = sd.drift(rigid, x, FrictionModel.fixed(1.0, 1.0))
        assert np.all(np.sum(v * rigid.hamiltonian.grad(x), axis=-1) <= 1e-12)


class TestStep:
    def test_rejects_bad_dt(self, canonical):
        with pytest.raises(ConfigError):
            sd.step_stratonovich(ensemble([[1.0, 0.0]]), canonical, 0.0)

    def test_rejects_unknown_scheme(self, canonical):
        with pytest.raises(ConfigError, match="unknown scheme"):
            sd.step_stratonovich(ensemble([[1.0, 0.0]]), canonical, 0.1, scheme="euler")

    def test_rejects_dimension_mismatch(self, rigid):
        with pytest.raises(ConfigError):
            sd.step_stratonovich(ensemble([[1.0, 0.0]]), rigid, 0.1)

    def test_noise_free_local_error_at_least_third_order(self, rigid):
        """One Heun step without noise has an energy error of O(dt^3) or better."""
        x0 = np.array([[1.0, 0.8, 0.3]])
        H0 = rigid.hamiltonian(x0)[0]
        errs = []
        for dt in (0.04, 0.02):
            x1 = sd.step_stratonovich(ensemble(x0, D=0.0, beta=0.0), rigid, dt).particles
            errs.append(abs(rigid.hamiltonian(x1)[0] - H0))
        assert errs[0] / errs[1] >= 7.0

    def test_noise_free_energy_over_unit_time(self, canonical):
        res = sd.evolve(ensemble([[1.0, 0.5]], D=0.0, beta=0.0), canonical, 1e-3, 1000, record_every=1000)
        H = canonical.hamiltonian(res.ensemble.particles)[0]
        assert abs(H - 0.625) / 0.625 <= 1e-8

    def test_same_seed_same_trajectory(self, rigid, rng):
        x = rng.standard_normal((300, 3))
        a = sd.evolve(ensemble(x, seed=3), rigid, 0.01, 20, record_every=20).ensemble.particles
        b = sd.evolve(ensemble(x, seed=3), rigid, 0.01, 20, record_every=20).ensemble.particles
        c = sd.evolve(ensemble(x, seed=4), rigid, 0.01, 20, record_every=20).ensemble.particles
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_threads_do_not_change_result(self, rigid, rng):
        x = rng.standard_normal((1000, 3))
        serial = sd.step_stratonovich(ensemble(x), rigid, 0.01, threads=1)
        parallel = sd.step_stratonovich(ensemble(x), rigid, 0.01, threads=4)
        assert np.array_equal(serial.particles, parallel.particles)

    def test_blow_up_is_reported(self, canonical):
        ens = ensemble([[1.0, 0.0]], D=0.0, beta=0.0)
        with pytest.raises(NumericalError, match="finite range") as err:
            sd.evolve(ens, canonical, 100.0, 50)
        assert err.value.last_good_time is not None

    def test_fixed_mode_keeps_relation(self, canonical, rng):
        res = sd.evolve(ensemble(rng.standard_normal((50, 2)), beta=1.5), canonical, 0.01, 5)
        fr = res.ensemble.friction
        assert fr.mode == "fixed" and fr.gamma == 0.5 * 1.5 * 0.2
        assert res.betas_used == [1.5]


class TestCasimirPreservation:
    @pytest.mark.parametrize("scheme,tol", [("heun", 1e-3), ("midpoint", 1e-10)])
    def test_per_particle_drift(self, rigid, rng, scheme, tol):
        x = rng.standard_normal((200, 3))
        C = rigid.casimirs[0]
        res = sd.evolve(ensemble(x, D=0.2, beta=1.0), rigid, 1e-3, 1000, record_every=1000, scheme=scheme)
        drift = np.abs(C(res.ensemble.particles) - C(x)) / np.abs(C(x))
        assert np.max(drift) <= tol


class TestEvolve:
    @pytest.mark.parametrize("kwargs", [{"steps": 0}, {"record_every": 0}])
    def test_bad_counts(self, canonical, kwargs):
        args = {"steps": 5, "record_every": 1, **kwargs}
        with pytest.raises(ConfigError):
            sd.evolve(ensemble([[1.0, 0.0]]), canonical, 0.01, args["steps"], args["record_every"])

    def test_record_schedule(self, canonical, rng):
        res = sd.evolve(ensemble(rng.standard_normal((40, 2))), canonical, 0.01, 7, record_every=3)
        np.testing.assert_allclose([r.t for r in res.records], [0.0, 0.03, 0.06, 0.07])
        header, rows = sd.diagnostics_table(res.records, 0)
        assert header == ["t", "E", "S", "beta"] and len(rows) == 4

    def test_means_are_exact(self, rigid, rng):
        x = rng.standard_normal((64, 3))
        d = sd.diagnostics(ensemble(x), rigid)
        assert d.E_mean == float(np.mean(rigid.hamiltonian(x)))
        assert d.casimir_means[0] == float(np.mean(rigid.casimirs[0](x)))
        assert "plug-in" in d.entropy_estimator

    def test_adaptive_updates_friction(self, canonical, rng):
        x = gaussian_samples(rng, 1.0, 4000)
        res = sd.evolve(ensemble(x, mode="adaptive"), canonical, 0.01, 20, record_every=20, density_cells=12)
        assert len(res.betas_used) == 3
        assert all(b == pytest.approx(1.0, abs=0.15) for b in res.betas_used[1:])

    def test_adaptive_needs_low_dimension(self):
        sys = systems.get_system("chm", K=1)
        with pytest.raises(ConfigError, match="n <= 3"):
            sd.evolve(ensemble(np.zeros((4, sys.n)), mode="adaptive"), sys, 0.01, 1)

    def test_thermalizes_to_equipartition(self, canonical):
        """Moments of the stationary cloud at beta = 1 within three standard errors."""
        n = 4000
        x0 = np.tile([1.0, 0.0], (n, 1))
        res = sd.evolve(ensemble(x0, D=0.5, beta=1.0, seed=11), canonical, 0.02, 1500, record_every=1500)
        p, q = res.ensemble.particles.T
        for val, target in ((p * p, 1.0), (q * q, 1.0), (p * q, 0.0)):
            se = np.std(val) / math.sqrt(n)
            assert abs(np.mean(val) - target) <= 3 * se


class TestBetaEstimator:
    def test_gaussian_samples(self, canonical, rng):
        x = gaussian_samples(rng, 2.0, 100_000)
        grid = DensityGrid.around(x, 64)
        assert sd.estimate_beta_samples(canonical, x, grid) == pytest.approx(2.0, abs=0.1)

    def test_casimir_multiplier_cancels(self, rigid, rng):
        """Samples from exp(-beta H - mu C) on the rigid body still return beta."""
        beta, mu = 1.0, 0.8
        x = rng.standard_normal((800_000, 3)) * 1.6
        w = np.exp(-beta * rigid.hamiltonian(x) - mu * rigid.casimirs[0](x) + 0.5 * np.sum(x * x, -1) / 1.6**2)
        keep = rng.random(len(x)) < w / w.max()
        s = x[keep]
        assert sd.estimate_beta_samples(rigid, s, DensityGrid.around(s, 24)) == pytest.approx(beta, rel=0.1)

    def test_single_particle(self, canonical):
        x = np.array([[0.3, 0.1]])
        with pytest.raises(InsufficientSamplesError):
            sd.estimate_beta_samples(canonical, x, DensityGrid.around(x, 8))

    def test_sparse_histogram(self, canonical, rng):
        x = rng.standard_normal((200, 2))
        with pytest.raises(InsufficientSamplesError, match="coarser grid"):
            sd.estimate_beta_samples(canonical, x, DensityGrid.around(x, 64))

    def test_critical_points_only(self, canonical, rng):
        """A flat Hamiltonian leaves every sample at a critical point."""
        flat = ScalarField("flat", lambda x: np.zeros(np.shape(x)[:-1]), lambda x: np.zeros(np.shape(x)))
        sys = HamiltonianSystem("flat", canonical.operator, flat)
        x = rng.standard_normal((20_000, 2))
        with pytest.raises(DegenerateError):
            sd.estimate_beta_samples(sys, x, DensityGrid.around(x, 8))


class TestEntropyEstimate:
    def test_uniform_unit_box(self, rng):
        x = rng.random((200_000, 2))
        grid = DensityGrid((0.0, 0.0), (1.0, 1.0), (20, 20))
        assert abs(sd.entropy_estimate(x, grid)) <= 5e-3

    def test_standard_gaussian(self, rng):
        x = rng.standard_normal((100_000, 2))
        S = sd.entropy_estimate(x, DensityGrid.around(x, 64))
        assert S == pytest.approx(math.log(2 * math.pi * math.e), rel=0.02)

    def test_empty(self):
        with pytest.raises(InsufficientSamplesError):
            sd.entropy_estimate(np.zeros((0, 2)), DensityGrid((0, 0), (1, 1), (4, 4)))
