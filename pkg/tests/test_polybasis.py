"""Oracle tests for basis families, antiderivatives, domain maps, and quantiles."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.stats import norm

from krmap.errors import ArgumentError, DomainError
from krmap.polybasis import (
    BasisFamily,
    DomainMap,
    Family,
    UnivariatePdf,
    cheb2_nodes,
    collocate_to_chebyshev2,
    eval_chebyshev2_poly,
    sample_reference,
)


def interior_points(fam: BasisFamily, n: int, rng) -> np.ndarray:
    xi = rng.uniform(0.02, 0.98, n)
    return fam.weight_quantile(xi)


def squared_poly_coeffs(fam: BasisFamily, c: np.ndarray) -> np.ndarray:
    """Coefficients of (sum c_j psi_j)^2 in the same basis, via Gauss rule."""
    deg = len(c) - 1
    nodes, w = fam.gauss_rule(2 * deg + 1)
    vals = (fam.eval_basis(deg, nodes) @ c) ** 2
    return (vals * w) @ fam.eval_basis(2 * deg, nodes)


class TestOrthonormality:
    def test_gram_is_identity(self, family):
        nodes, w = family.gauss_rule(31)
        psi = family.eval_basis(30, nodes)
        gram = (psi * w[:, None]).T @ psi
        assert np.abs(gram - np.eye(31)).max() < 1e-10

    def test_gauss_rule_integrates_weight(self, family):
        _, w = family.gauss_rule(12)
        assert np.isclose(w.sum(), 1.0, atol=1e-12)


class TestAntiderivatives:
    def test_matches_adaptive_quadrature(self, family, rng):
        # Psi_k(b) - Psi_k(a) must equal the integral of psi_k * lambda
        for _ in range(20):
            a, b = np.sort(interior_points(family, 2, rng))
            vals = family.antiderivatives(12, np.array([a, b]))
            for k in range(13):
                ref, _ = quad(
                    lambda t, k=k: family.eval_basis(k, np.array([t]))[0, k]
                    * family.weight(np.array([t]))[0], a, b, epsabs=1e-12)
                assert abs((vals[1, k] - vals[0, k]) - ref) < 1e-9

    def test_left_limit_consistency(self, family):
        # Psi_k at the left end of the support equals antiderivatives_left
        left = family.antiderivatives_left(8)
        lo = family.weight_quantile(np.array([1e-13]))
        vals = family.antiderivatives(8, lo)
        assert np.abs(vals[0] - left).max() < 1e-5

    def test_degree_zero_is_weight_cdf(self, family, rng):
        x = interior_points(family, 16, rng)
        vals = family.antiderivatives(0, x)[:, 0]
        left = family.antiderivatives_left(0)[0]
        assert np.abs((vals - left) - family.weight_cdf(x)).max() < 1e-12


class TestWeightCdf:
    @pytest.mark.parametrize("kind,x,expected", [
        (Family.LEGENDRE, 0.5, 0.75),
        (Family.CHEBYSHEV1, 0.5, 0.5 + np.arcsin(0.5) / np.pi),
        (Family.CHEBYSHEV2, 0.5,
         0.5 + (0.5 * np.sqrt(0.75) + np.arcsin(0.5)) / np.pi),
        (Family.HERMITE, 0.5, norm.cdf(0.5)),
        (Family.LAGUERRE, 0.5, 1.0 - np.exp(-0.5)),
    ])
    def test_closed_forms(self, kind, x, expected):
        fam = BasisFamily(kind)
        assert np.isclose(fam.weight_cdf(np.array([x]))[0], expected, atol=1e-12)

    def test_quantile_roundtrip(self, family):
        xi = np.linspace(0.01, 0.99, 33)
        x = family.weight_quantile(xi)
        assert np.abs(family.weight_cdf(x) - xi).max() < 1e-9

    def test_sample_reference_matches_quantile(self, family):
        xi = np.array([0.12, 0.5, 0.88])
        assert np.allclose(sample_reference(family, xi),
                           family.weight_quantile(xi))


class TestChebyshevEvaluation:
    @pytest.mark.parametrize("kind", [Family.CHEBYSHEV1, Family.CHEBYSHEV2])
    def test_trig_and_recurrence_agree(self, kind):
        # evaluation switches formulas near the endpoints; both must agree
        fam = BasisFamily(kind)
        x = np.array([1.0 - 1e-9, 1.0 - 1e-13, -1.0 + 1e-13, 0.999999])
        psi = fam.eval_basis(20, x)
        if kind == Family.CHEBYSHEV1:
            theta = np.arccos(x)
            ref = np.cos(np.outer(theta, np.arange(21)))
            ref[:, 1:] *= np.sqrt(2.0)
        else:
            theta = np.arccos(np.clip(x, -1, 1))
            n = np.arange(1, 22)
            with np.errstate(invalid="ignore"):
                ref = np.sin(np.outer(theta, n)) / np.sin(theta)[:, None]
        assert np.abs(psi - ref).max() < 1e-6

    def test_collocation_roundtrip(self):
        # degree-2n polynomial is reproduced exactly from its node values
        n = 5
        nodes = cheb2_nodes(n)
        vals = 1.0 + nodes ** 2 - 0.3 * nodes ** (2 * n)
        coeffs = collocate_to_chebyshev2(vals, n)
        x = np.linspace(-0.99, 0.99, 50)
        ref = 1.0 + x ** 2 - 0.3 * x ** (2 * n)
        assert np.abs(eval_chebyshev2_poly(coeffs, x) - ref).max() < 1e-11


class TestDomainMap:
    @pytest.mark.parametrize("dm,lo,hi", [
        (DomainMap.linear(0.0, 2.0), 0.01, 1.99),
        (DomainMap.logarithmic(), -5.0, 5.0),
        (DomainMap.algebraic(), -20.0, 20.0),
    ])
    def test_roundtrip_and_jacobian(self, dm, lo, hi):
        x = np.linspace(lo, hi, 41)
        z = dm.forward(x)
        assert np.abs(dm.inverse(z) - x).max() < 1e-9
        h = 1e-6 * np.maximum(np.abs(x), 1.0)
        fd = (dm.forward(x + h) - dm.forward(x - h)) / (2 * h)
        assert np.abs(dm.dforward(x) - fd).max() < 1e-5
        assert np.abs(np.log(dm.dforward(x)) - dm.log_dforward(x)).max() < 1e-10

    def test_linear_map_range(self):
        dm = DomainMap.linear(0.0, 2.0)
        assert np.allclose(dm.forward(np.array([0.0, 1.0, 2.0])), [-1.0, 0.0, 1.0])

    def test_invalid_linear_interval(self):
        with pytest.raises(ArgumentError):
            DomainMap.linear(1.0, 1.0)


class TestUnivariatePdf:
    def test_legendre_quadratic_closed_form(self):
        # psi_1^2 lambda on [-1,1] is 1.5 x^2 with cdf (x^3+1)/2
        fam = BasisFamily(Family.LEGENDRE)
        nodes, w = fam.gauss_rule(3)
        vals = fam.eval_basis(1, nodes)[:, 1] ** 2
        coeffs = (vals * w) @ fam.eval_basis(2, nodes)
        p = UnivariatePdf(fam, coeffs, 1.0)
        x = np.array([-0.7, 0.2, 0.9])
        assert np.allclose(p.pdf(x), 1.5 * x ** 2, atol=1e-12)
        assert np.allclose(p.cdf(x), (x ** 3 + 1) / 2, atol=1e-12)
        assert np.allclose(p.ppf((x ** 3 + 1) / 2), x, atol=1e-9)

    def test_out_of_support_rejected(self):
        fam = BasisFamily(Family.LAGUERRE)
        p = UnivariatePdf(fam, np.array([1.0]), 1.0)
        with pytest.raises(DomainError):
            p.pdf(np.array([-0.5]))

    def test_batched_coefficients(self, rng):
        # a (n, m) coefficient array acts as n independent conditionals
        fam = BasisFamily(Family.HERMITE)
        coeffs = np.stack([squared_poly_coeffs(fam, rng.standard_normal(3))
                           for _ in range(4)])
        zeta = coeffs[:, 0]  # <q, psi_0> is the total integral
        batch = UnivariatePdf(fam, coeffs, zeta)
        xi = np.full(4, 0.37)
        x = batch.ppf(xi)
        singles = [UnivariatePdf(fam, coeffs[i], float(zeta[i])).ppf(
            np.array([0.37]))[0] for i in range(4)]
        assert np.allclose(x, singles, atol=1e-10)

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=25, deadline=None)
    def test_ppf_cdf_roundtrip_property(self, seed):
        g = np.random.default_rng(seed)
        fam = BasisFamily(list(Family)[seed % 5])
        c = g.standard_normal(4)
        p = UnivariatePdf(fam, squared_poly_coeffs(fam, c), float(c @ c))
        xi = g.uniform(0.01, 0.99, 8)
        assert np.abs(p.cdf(p.ppf(xi)) - xi).max() < 1e-8
