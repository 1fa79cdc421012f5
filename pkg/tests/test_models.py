"""
Tests for the spin models
"""

import numpy as np
import pytest
from scipy import linalg

from src.models import (
    all_zero_state,
    anisotropic_heisenberg,
    chain_edges,
    square_plaquette_edges,
    total_magnetization,
    transverse_ising,
    unitary_expectations,
)
from src.operators import commutator, identity, kron, random_density, random_hermitian, sigma_x, sigma_z


class TestLattices:
    """Edge lists"""

    def test_plaquette(self):
        edges = square_plaquette_edges()
        assert len(edges) == 4
        degree = np.bincount(np.array(edges).ravel())
        assert list(degree) == [2, 2, 2, 2]

    def test_chain(self):
        assert len(chain_edges(4, periodic=True)) == 4
        assert len(chain_edges(4, periodic=False)) == 3
        assert chain_edges(2, periodic=True) == [(0, 1)]


class TestHamiltonians:
    """Model operators"""

    def test_heisenberg_hermitian(self):
        h = anisotropic_heisenberg(4, square_plaquette_edges(), 2.0, 0.2, 0.1)
        assert h.is_hermitian()
        assert h.layout == (2, 2, 2, 2)

    def test_isotropic_conserves_magnetization(self):
        h = anisotropic_heisenberg(4, square_plaquette_edges(), 1.0, 0.0, 0.0)
        assert commutator(h, total_magnetization(4)).allclose(0.0 * identity((2,) * 4), atol=1e-12)

    def test_transverse_ising_two_sites(self):
        h = transverse_ising(2, 0.5, 1.5, periodic=True)
        expected = (0.5 * kron(sigma_z(), sigma_z())
                    + 1.5 * kron(sigma_x(), identity((2,)))
                    + 1.5 * kron(identity((2,)), sigma_x()))
        assert h.allclose(expected)

    def test_all_zero_magnetization(self):
        assert total_magnetization(3).expect(all_zero_state(3)) == pytest.approx(3.0)


class TestUnitaryExpectations:
    """Closed-system oracle"""

    def test_matches_expm(self):
        rng = np.random.default_rng(12)
        h = random_hermitian(4, rng, norm=2.0, layout=(2, 2))
        rho = random_density(4, rng, (2, 2)).op
        obs = random_hermitian(4, rng, layout=(2, 2))
        times = [0.0, 0.3, 1.7]
        got = unitary_expectations(h, rho, obs, times)
        for t, value in zip(times, got):
            u = linalg.expm(-1j * h.data * t)
            expected = np.trace(obs.data @ u @ rho.data @ u.conj().T).real
            assert value == pytest.approx(expected, abs=1e-10)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
