import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from metriplex import poisson as pc
from metriplex import systems
from metriplex.config import load_raw
from metriplex.errors import ConfigError

SO3_SPEC = load_raw("configs/polynomial_sde.toml")["system"]["polynomial"]


class TestRegistry:
    def test_names(self):
        assert {"canonical2d", "rigid-body", "corrupted-demo", "chm"} <= set(systems.list_systems())

    def test_unknown_name(self):
        with pytest.raises(ConfigError, match="unknown system"):
            systems.get_system("nosuch")

    def test_bad_parameter(self):
        with pytest.raises(ConfigError, match="bad parameters"):
            systems.get_system("canonical2d", mass=2.0)

    def test_chm_parameters_forwarded(self):
        assert systems.get_system("chm", K=1).n == 9

    def test_register(self):
        systems.register_system("twice", lambda: systems.canonical_2d(omega=2.0))
        assert systems.get_system("twice").params == {"omega": 2.0}


class TestPolynomial:
    def test_from_terms_and_derivative(self):
        p = systems.Polynomial.from_terms([[2.0, [2, 1]], [-1.0, [0, 3]]], 2)
        x = np.array([1.5, -0.5])
        assert p(x) == pytest.approx(2 * 1.5 ** 2 * -0.5 + 0.125)
        np.testing.assert_allclose(p.gradient(x), [4 * 1.5 * -0.5, 2 * 1.5 ** 2 - 3 * 0.25])

    @pytest.mark.parametrize("terms", [[[1.0]], [[1.0, [1, -1]]], [[1.0, [1, 0, 0]]]])
    def test_bad_terms(self, terms):
        with pytest.raises(ConfigError):
            systems.Polynomial.from_terms(terms, 2)


class TestPolynomialSystem:
    """A hand-written so(3) table must reproduce the built-in rigid body."""

    @given(arrays(np.float64, (4, 3), elements=st.floats(-3, 3)))
    def test_matches_rigid_body(self, x):
        poly = systems.polynomial_system(SO3_SPEC)
        rigid = systems.rigid_body()
        np.testing.assert_allclose(poly.operator(x), rigid.operator(x), atol=1e-14)
        np.testing.assert_allclose(poly.operator.derivatives(x), rigid.operator.derivatives(x), atol=1e-14)
        np.testing.assert_allclose(poly.hamiltonian(x), rigid.hamiltonian(x), rtol=1e-12, atol=1e-14)

    def test_identities(self, rng):
        poly = systems.polynomial_system(SO3_SPEC)
        x = rng.standard_normal((50, 3))
        assert pc.jacobi_residual(poly, x) <= 1e-12
        assert np.max(np.abs(pc.casimir_residual(poly, 0, x))) <= 1e-12
        assert poly.casimirs[0].name == "C1"

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="unknown key"):
            systems.polynomial_system({**SO3_SPEC, "colour": 1})

    def test_missing_hamiltonian(self):
        spec = {k: v for k, v in SO3_SPEC.items() if k != "hamiltonian"}
        with pytest.raises(ConfigError, match="hamiltonian"):
            systems.polynomial_system(spec)

    def test_lower_triangle_entry_rejected(self):
        spec = dict(SO3_SPEC, operator=[{"i": 2, "j": 1, "terms": [[1.0, [0, 0, 1]]]}])
        with pytest.raises(ConfigError, match="i < j"):
            systems.polynomial_system(spec)
