"""
Tests for the Lindblad engine
"""

import math

import numpy as np
import pytest

from src.lindblad import (
    IntegrationError,
    IntegratorConfig,
    Lindbladian,
    ancilla_block,
    evolve,
    evolve_trajectory,
    evolve_with_exponent,
    integrate,
    lindblad_rhs,
)
from src.operators import (
    DensityMatrix,
    Operator,
    kron,
    plus_state,
    random_density,
    random_hermitian,
    random_operator,
    sigma_minus,
    sigma_x,
    sigma_z,
)
from src.workers import parallel_map
from tests.oracles import exact_lindblad


def _random_problem(seed: int, dim: int = 4, n_jumps: int = 2):
    rng = np.random.default_rng(seed)
    h = random_hermitian(dim, rng, norm=2.0)
    jumps = [0.5 * random_operator(dim, rng) for _ in range(n_jumps)]
    rho0 = random_density(dim, rng)
    return h, jumps, rho0


class TestIntegratorConfig:
    """Step control"""

    def test_automatic_step(self):
        cfg = IntegratorConfig()
        assert cfg.step_for(0.0) == 1e-3
        assert cfg.step_for(100.0) == pytest.approx(1e-4)
        assert cfg.step_for(1.0) == 1e-3

    def test_explicit_step(self):
        assert IntegratorConfig(dt=0.01).step_for(1000.0) == 0.01

    def test_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(method="euler")
        with pytest.raises(ValueError):
            IntegratorConfig(dt=-1.0)
        with pytest.raises(ValueError):
            IntegratorConfig(max_steps=0)


class TestLindbladian:
    """Construction and generator"""

    def test_layout_from_terms(self):
        lind = Lindbladian(sigma_x(), [sigma_z()])
        assert lind.layout == (2,)
        assert not lind.is_time_dependent

    def test_non_hermitian_hamiltonian(self):
        with pytest.raises(ValueError):
            Lindbladian(sigma_minus(), [])

    def test_layout_mismatch(self):
        with pytest.raises(ValueError):
            Lindbladian(sigma_x(), [kron(sigma_z(), sigma_z())])

    def test_time_dependent_needs_layout(self):
        with pytest.raises(ValueError):
            Lindbladian(lambda t: sigma_x(), [])
        lind = Lindbladian(lambda t: t * sigma_x(), [], (2,))
        assert lind.is_time_dependent

    def test_decay_constant(self):
        lind = Lindbladian(None, [math.sqrt(0.3) * sigma_minus(), math.sqrt(0.2) * sigma_z()], (2,))
        assert lind.decay_constant() == pytest.approx(0.5)

    def test_rhs_matches_superoperator(self):
        h, jumps, rho0 = _random_problem(1)
        from tests.oracles import lindblad_superoperator, unvec, vec
        expected = unvec(lindblad_superoperator(h.data, [j.data for j in jumps]) @ vec(rho0.data), 4)
        got = lindblad_rhs(Lindbladian(h, jumps), rho0)
        assert np.allclose(got.data, expected, atol=1e-12)

    def test_diagonal_jumps_use_mask(self):
        """Dephasing goes through the elementwise mask and still matches D[L]"""
        lind = Lindbladian(None, [math.sqrt(0.4) * sigma_z()], (2,))
        assert lind.generator().mask is not None
        out = lindblad_rhs(lind, plus_state())
        assert np.allclose(out.data, [[0, -0.4], [-0.4, 0]])

    def test_addition(self):
        total = Lindbladian(sigma_x(), [sigma_z()]) + Lindbladian(sigma_z(), [sigma_minus()])
        assert len(total.jumps) == 2
        assert total.hamiltonian.allclose(sigma_x() + sigma_z())


class TestEvolve:
    """Integration against the dense superoperator exponential"""

    @pytest.mark.parametrize("method", ["rk4", "rk45"])
    def test_matches_oracle(self, method):
        h, jumps, rho0 = _random_problem(7)
        state = evolve(Lindbladian(h, jumps), rho0, 1.5, IntegratorConfig(method=method, rtol=1e-10, atol=1e-12))
        expected = exact_lindblad(h.data, [j.data for j in jumps], rho0.data, 1.5)
        assert np.abs(state.data - expected).max() < 1e-7

    def test_trace_and_positivity_preserved(self):
        h, jumps, rho0 = _random_problem(11)
        state = evolve(Lindbladian(h, jumps), rho0, 2.0)
        state.check(trace_tol=1e-8)

    def test_zero_time_returns_input(self):
        state = evolve(Lindbladian(sigma_x(), [sigma_z()]), plus_state(), 0.0)
        assert state.op.allclose(plus_state())

    def test_negative_time(self):
        with pytest.raises(ValueError):
            evolve(Lindbladian(sigma_x(), []), plus_state(), -1.0)

    def test_layout_mismatch(self):
        with pytest.raises(ValueError):
            evolve(Lindbladian(sigma_x(), []), kron(plus_state(), plus_state()), 1.0)

    def test_dephasing_decay(self):
        gamma, t = 0.2, 1.3
        state = evolve(Lindbladian(None, [math.sqrt(gamma) * sigma_z()], (2,)), plus_state(), t)
        assert state.expect(sigma_x()).real == pytest.approx(math.exp(-2 * gamma * t), abs=1e-10)

    def test_role_carried(self):
        joint = DensityMatrix(kron(plus_state(), plus_state()), DensityMatrix.JOINT)
        lind = Lindbladian(kron(sigma_x(), sigma_x()), [])
        assert evolve(lind, joint, 0.1).role == DensityMatrix.JOINT

    def test_trajectory_matches_single_runs(self):
        h, jumps, rho0 = _random_problem(5)
        lind = Lindbladian(h, jumps)
        times = [0.0, 0.4, 1.0]
        states = evolve_trajectory(lind, rho0, times)
        for t, state in zip(times, states):
            expected = exact_lindblad(h.data, [j.data for j in jumps], rho0.data, t)
            assert np.abs(state.data - expected).max() < 1e-8

    def test_trajectory_rejects_unsorted_times(self):
        with pytest.raises(ValueError):
            evolve_trajectory(Lindbladian(sigma_x(), []), plus_state(), [1.0, 0.5])

    def test_time_dependent_hamiltonian(self):
        """H(t) = w(t) sigma_z rotates the phase by int w"""
        lind = Lindbladian(lambda t: (1.0 + t) * sigma_z(), [], (2,))
        state = evolve(lind, plus_state(), 1.0)
        phase = 2 * (1.0 + 0.5)
        assert state.data[0, 1] == pytest.approx(0.5 * np.exp(-1j * phase), abs=1e-9)

    def test_rk4_is_fourth_order(self):
        """Halving dt cuts the error against the superoperator exponential by at least 12x"""
        h, jumps, rho0 = _random_problem(13)
        expected = exact_lindblad(h.data, [j.data for j in jumps], rho0.data, 1.0)
        errors = []
        for dt in (0.1, 0.05):
            state = evolve(Lindbladian(h, jumps), rho0, 1.0, IntegratorConfig(dt=dt))
            errors.append(np.abs(state.data - expected).max())
        assert errors[0] / errors[1] >= 12.0

    def test_trace_conserved_at_largest_dimension(self):
        """Seven qubits plus a qutrit ancilla"""
        rng = np.random.default_rng(21)
        layout = (2,) * 7 + (3,)
        h = random_hermitian(384, rng, norm=1.0, layout=layout)
        jumps = [0.3 * random_operator(384, rng, layout=layout) for _ in range(2)]
        rho0 = random_density(384, rng, layout=layout)
        state = evolve(Lindbladian(h, jumps), rho0, 0.05, IntegratorConfig(dt=0.01))
        assert state.layout == layout
        assert abs(state.trace() - 1.0) < 1e-10
        assert np.allclose(state.data, state.data.conj().T, atol=1e-12)

    def test_time_dependent_from_threads(self):
        """One time-dependent Lindbladian evolved concurrently gives the serial answer"""
        rate = lambda t: 0.2 * (1.0 + math.sin(t))
        lind = Lindbladian(lambda t: (1.0 + t) * sigma_x(), [lambda t: math.sqrt(rate(t)) * sigma_minus()], (2,))
        cfg = IntegratorConfig(dt=0.01)
        serial = evolve(lind, plus_state(), 1.0, cfg).data
        results = parallel_map(lambda _: evolve(lind, plus_state(), 1.0, cfg).data, range(8), threads=4)
        for data in results:
            assert np.array_equal(data, serial)

    def test_time_dependent_generator_follows_time(self):
        lind = Lindbladian(lambda t: t * sigma_z(), [], (2,))
        rho = plus_state().data
        assert not np.allclose(lind.generator(0.0)(rho), lind.generator(1.0)(rho))
        assert np.allclose(lind.generator(0.0)(rho), 0.0)


class TestIntegrate:
    """Failure modes of the raw integrator"""

    def test_step_budget(self):
        cfg = IntegratorConfig(dt=1e-3, max_steps=10)
        with pytest.raises(IntegrationError):
            integrate(lambda t, y: -y, np.eye(2), 0.0, 1.0, cfg)

    def test_non_finite(self):
        cfg = IntegratorConfig(dt=0.1)
        with pytest.raises(IntegrationError):
            integrate(lambda t, y: y * np.inf, np.eye(2), 0.0, 1.0, cfg)

    def test_backwards_interval(self):
        with pytest.raises(ValueError):
            integrate(lambda t, y: y, np.eye(2), 1.0, 0.0, IntegratorConfig())

    def test_grid_reported(self):
        grids = []
        integrate(lambda t, y: -y, np.eye(2), 0.0, 1.0, IntegratorConfig(dt=0.25), on_grid=grids.append)
        assert np.allclose(grids[0], [0.0, 0.25, 0.5, 0.75, 1.0])


class TestExponentAndBlocks:
    """Accumulated decay exponent and ancilla block extraction"""

    def test_exponent_for_time_dependent_rate(self):
        """a(t) = gamma(t) for sigma_z with rate gamma(t) = 0.1 + 0.2 t"""
        rate = lambda t: 0.1 + 0.2 * t
        lind = Lindbladian(None, [lambda t: math.sqrt(rate(t)) * sigma_z()], (2,))
        state, exponent = evolve_with_exponent(lind, plus_state(), 2.0)
        assert exponent == pytest.approx(0.1 * 2 + 0.1 * 4, rel=1e-9)
        assert state.expect(sigma_x()).real == pytest.approx(math.exp(-2 * exponent), abs=1e-9)

    def test_exponent_zero_time(self):
        _, exponent = evolve_with_exponent(Lindbladian(sigma_x(), [sigma_z()]), plus_state(), 0.0)
        assert exponent == 0.0

    def test_exponent_linear_rate(self):
        """a(s) = gamma (1 + s) accumulates gamma (t + t^2 / 2)"""
        gamma, t = 0.3, 1.5
        lind = Lindbladian(None, [lambda s: math.sqrt(gamma * (1.0 + s)) * sigma_z()], (2,))
        _, exponent = evolve_with_exponent(lind, plus_state(), t)
        assert exponent == pytest.approx(gamma * (t + t ** 2 / 2), rel=1e-9)
        _, explicit = evolve_with_exponent(lind, plus_state(), t, decay=lambda s: gamma * (1.0 + s))
        assert explicit == pytest.approx(gamma * (t + t ** 2 / 2), rel=1e-9)

    def test_exponent_layout_mismatch(self):
        with pytest.raises(ValueError):
            evolve_with_exponent(Lindbladian(sigma_x(), [sigma_z()]), kron(plus_state(), plus_state()), 1.0)

    def test_ancilla_block(self):
        rng = np.random.default_rng(2)
        rho = random_density(2, rng).op
        w = kron(rho, plus_state())
        assert np.allclose(ancilla_block(w, 0, 1).data, 0.5 * rho.data)
        assert ancilla_block(w, 1, 1).layout == (2,)

    def test_ancilla_block_range(self):
        with pytest.raises(ValueError):
            ancilla_block(kron(plus_state(), plus_state()), 0, 2)
        with pytest.raises(ValueError):
            ancilla_block(plus_state(), 0, 1)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
