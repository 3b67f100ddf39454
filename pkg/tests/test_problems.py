"""Oracle tests for the ODE integrator, the SIR problem, and Hellinger quadrature."""

import numpy as np
import pytest

from krmap import kernels
from krmap.errors import ArgumentError, NumericalError
from krmap.polybasis import BasisFamily, Family
from krmap.problems import (
    AnalyticTarget,
    CsirModel,
    csir_true_parameters,
    quadrature_hellinger,
    rk45_integrate,
    tensor_grid,
)


class TestRk45:
    def test_exponential_decay(self):
        t = np.linspace(0.5, 3.0, 6)
        out = rk45_integrate(lambda t, y: -y, np.array([1.0]), t)
        assert np.abs(out[:, 0] - np.exp(-t)).max() < 1e-6

    def test_harmonic_oscillator_energy(self):
        f = lambda t, y: np.array([y[1], -y[0]])
        t = np.linspace(1.0, 20.0, 10)
        out = rk45_integrate(f, np.array([1.0, 0.0]), t, 1e-9, 1e-9)
        energy = out[:, 0] ** 2 + out[:, 1] ** 2
        assert np.abs(energy - 1.0).max() < 1e-6
        assert np.abs(out[-1, 0] - np.cos(20.0)).max() < 1e-6

    def test_rejects_bad_times(self):
        with pytest.raises(ArgumentError):
            rk45_integrate(lambda t, y: -y, np.array([1.0]), np.array([-1.0, 2.0]))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_stiffness_raises(self):
        with pytest.raises(NumericalError):
            rk45_integrate(lambda t, y: np.array([np.inf]), np.array([1.0]),
                           np.array([1.0]))


class TestCsir:
    @pytest.mark.parametrize("ncomp", [1, 2, 3])
    def test_population_conserved(self, ncomp):
        x = csir_true_parameters(ncomp) + 0.2
        states = kernels.csir_integrate(x, ncomp, 5.0 * np.arange(1, 7) / 6.0,
                                        1e-8, 1e-8)
        assert np.abs(states.sum(axis=1) - 100.0 * ncomp).max() < 1e-5

    @pytest.mark.parametrize("ncomp", [1, 2])
    def test_numba_matches_numpy_fallback(self, ncomp):
        x = csir_true_parameters(ncomp) + 0.3
        t = 5.0 * np.arange(1, 7) / 6.0
        a = kernels.csir_integrate(x, ncomp, t, 1e-8, 1e-8)
        b = kernels._csir_integrate_np(x, ncomp, t, 1e-8, 1e-8)
        assert np.abs(a - b).max() < 1e-10

    def test_infected_decreases_without_contact(self):
        # theta = 0 gives pure decay of the infected compartment
        model = CsirModel(1)
        traj = model.infected(np.array([0.0, 1.0]))[0]
        assert np.all(np.diff(traj) < 0)
        assert np.abs(traj[-1] - np.exp(-5.0)).max() < 1e-4

    def test_simulate_data_reproducible(self):
        model = CsirModel(2)
        a = model.simulate_data(csir_true_parameters(2), 11)
        b = model.simulate_data(csir_true_parameters(2), 11)
        assert np.array_equal(a, b)
        assert a.shape == (2, 6)

    def test_potential_zero_on_noiseless_data(self):
        model = CsirModel(1)
        x_true = csir_true_parameters(1)
        model.data = model.infected(x_true)
        assert model.potential(x_true)[0] < 1e-10

    def test_potential_batching_subsets(self):
        model = CsirModel(1, data=np.ones((1, 6)))
        x = np.array([[0.4, 1.2]])
        full = model.potential(x)[0]
        parts = sum(model.potential(x, [j])[0] for j in range(6))
        assert np.isclose(full, parts, rtol=1e-12)

    def test_eval_counter(self):
        model = CsirModel(1, data=np.ones((1, 6)))
        model.reset_evals()
        model.potential(np.tile([0.5, 0.5], (7, 1)))
        assert model.n_evals == 7

    def test_potential_native_change_of_coordinates(self):
        model = CsirModel(1, data=np.ones((1, 6)))
        z = np.array([[-0.5, 0.25]])
        x = np.array([[0.5, 1.25]])  # linear map of [0,2] onto [-1,1]
        assert np.isclose(model.potential_native(z)[0], model.potential(x)[0])


class TestAnalyticTargets:
    def test_bump_is_quadratic(self):
        t = AnalyticTarget("gaussian_bump", dim=3, sharpness=4.0)
        x = np.array([[0.1, -0.2, 0.3]])
        assert np.isclose(t.potential(x)[0], 4.0 * np.sum(x ** 2))
        assert np.isclose(t.log_density_unnorm(x)[0], -t.potential(x)[0])

    def test_banana_requires_2d(self):
        with pytest.raises(ArgumentError):
            AnalyticTarget("banana", dim=3)

    def test_unknown_kind(self):
        with pytest.raises(ArgumentError):
            AnalyticTarget("volcano")


class TestTensorGrid:
    def test_weights_sum_to_one(self, family):
        _, w = tensor_grid(family, 2, 7)
        assert np.isclose(w.sum(), 1.0, atol=1e-12)

    def test_integrates_polynomial(self):
        fam = BasisFamily(Family.LEGENDRE)
        pts, w = tensor_grid(fam, 2, 5)
        # E[x^2 y^2] under uniform on [-1,1]^2 is 1/9
        assert np.isclose(w @ (pts[:, 0] ** 2 * pts[:, 1] ** 2), 1.0 / 9.0)


class TestQuadratureHellinger:
    def test_identical_densities(self):
        fam = BasisFamily(Family.LEGENDRE)
        f = lambda z: -np.sum(z ** 2, axis=1)
        assert quadrature_hellinger(f, f, fam, 2, 40) < 1e-12

    def test_shifted_gaussians_closed_form(self):
        # Bhattacharyya of N(0,1) vs N(1,1) is exp(-1/8)
        fam = BasisFamily(Family.HERMITE)
        f1 = lambda z: -0.5 * z[:, 0] ** 2
        f2 = lambda z: -0.5 * (z[:, 0] - 1.0) ** 2
        d = quadrature_hellinger(f1, f2, fam, 1, 120)
        assert abs(d - np.sqrt(1.0 - np.exp(-0.125))) < 1e-6

    def test_uniform_against_half_uniform(self):
        # overlap integral of U(-1,1) and U(0,1) is 1/sqrt(2)
        fam = BasisFamily(Family.LEGENDRE)
        f1 = lambda z: np.zeros(z.shape[0])
        f2 = lambda z: np.where(z[:, 0] > 0.0, 0.0, -np.inf)
        d = quadrature_hellinger(f1, f2, fam, 1, 4000)
        assert abs(d - np.sqrt(1.0 - 2.0 ** -0.5)) < 1e-3

    def test_normalization_invariance(self):
        fam = BasisFamily(Family.LEGENDRE)
        f1 = lambda z: -np.sum(z ** 2, axis=1)
        f2 = lambda z: -np.sum(z ** 2, axis=1) + 7.3  # same density, other scale
        assert quadrature_hellinger(f1, f2, fam, 2, 40) < 1e-12

    def test_dimension_cap(self):
        fam = BasisFamily(Family.LEGENDRE)
        f = lambda z: np.zeros(z.shape[0])
        with pytest.raises(ArgumentError):
            quadrature_hellinger(f, f, fam, 4, 10)
