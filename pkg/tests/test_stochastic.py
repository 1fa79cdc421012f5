"""
Tests for the stochastic unraveling
"""

import math

import numpy as np
import pytest

from src.lindblad import evolve
from src.operators import (
    Operator,
    embed_local,
    identity,
    kron,
    plus_state,
    projector,
    random_density,
    random_hermitian,
    sigma_minus,
    sigma_x,
    sigma_z,
    tensor_power,
    zeros,
)
from src.stochastic import (
    QUADRATURE_NODES,
    ConvergenceReport,
    StochasticRun,
    _quadrature_factors,
    convergence_report,
    deterministic_evolution,
    expected_step,
    one_step_defect,
    run_ensemble,
    trajectory_states,
)
from tests.oracles import exact_unitary


ZERO = Operator(np.zeros((2, 2)))


def _dephased_product(n: int, gamma: float, t: float) -> np.ndarray:
    """|+>^n under independent sigma_z dephasing: 2^-n exp(-2 gamma t popcount(i ^ j))"""
    d = 2 ** n
    index = np.arange(d)
    flips = np.vectorize(lambda x: bin(x).count("1"))(index[:, None] ^ index[None, :])
    return np.exp(-2.0 * gamma * t * flips) / d


class TestStochasticRun:
    """Validation of ensemble settings"""

    def test_valid(self):
        run = StochasticRun([sigma_z()], [0.1])
        assert isinstance(run.couplings, tuple)
        assert run.rates == (0.1,)

    @pytest.mark.parametrize("kwargs", [
        {"dt": 0.0},
        {"trajectories": 0},
    ])
    def test_bad_numbers(self, kwargs):
        with pytest.raises(ValueError):
            StochasticRun([sigma_z()], [0.1], **kwargs)

    def test_rate_count(self):
        with pytest.raises(ValueError):
            StochasticRun([sigma_z()], [0.1, 0.2])

    def test_negative_rate(self):
        with pytest.raises(ValueError):
            StochasticRun([sigma_z()], [-0.1])

    def test_non_hermitian_coupling(self):
        with pytest.raises(ValueError):
            StochasticRun([sigma_minus()], [0.1])

    def test_mixed_layouts(self):
        with pytest.raises(ValueError):
            StochasticRun([sigma_z(), kron(sigma_z(), sigma_z())], [0.1, 0.1])

    def test_target_lindbladian(self):
        lind = StochasticRun([sigma_z()], [0.3]).lindbladian(sigma_x())
        assert lind.decay_constant() == pytest.approx(0.3)


class TestExpectedStep:
    """Quadrature average of one stochastic step"""

    def test_pure_dephasing_is_exact(self):
        """E[exp(-2i sqrt(g) dW)] = exp(-2 g dt) on the coherence"""
        run = StochasticRun([sigma_z()], [0.2], dt=0.05)
        out = expected_step(ZERO, run, plus_state())
        assert out.data[0, 1] == pytest.approx(0.5 * math.exp(-2 * 0.2 * 0.05), abs=1e-12)

    def test_defect_is_second_order(self):
        run = StochasticRun([sigma_z()], [0.5])
        coarse = one_step_defect(sigma_x(), run, plus_state(), step=1e-2)
        fine = one_step_defect(sigma_x(), run, plus_state(), step=1e-3)
        assert 50.0 < coarse / fine < 200.0

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_defect_is_second_order_for_random_instances(self, seed):
        rng = np.random.default_rng(seed)
        h = random_hermitian(4, rng, norm=1.0)
        couplings = [random_hermitian(4, rng, norm=1.0) for _ in range(2)]
        rho = random_density(4, rng)
        run = StochasticRun(couplings, [0.3, 0.2])
        coarse = one_step_defect(h, run, rho, step=1e-2)
        fine = one_step_defect(h, run, rho, step=1e-3)
        assert 50.0 < coarse / fine < 200.0

    def test_channel_split_is_second_order(self):
        """Four channels exceed the joint grid and are averaged one at a time"""
        layout = (2, 2)
        couplings = [embed_local(op, site, layout) for op in (sigma_z(), sigma_x()) for site in (0, 1)]
        run = StochasticRun(couplings, [0.2, 0.1, 0.3, 0.15])
        assert len(_quadrature_factors(zeros(layout), run, 1e-2)) == 5
        rng = np.random.default_rng(3)
        h = random_hermitian(4, rng, norm=1.0, layout=layout)
        rho = random_density(4, rng, layout=layout)
        coarse = one_step_defect(h, run, rho, step=1e-2)
        fine = one_step_defect(h, run, rho, step=1e-3)
        assert 50.0 < coarse / fine < 200.0


class TestDeterministicEvolution:
    """Infinite-ensemble limit at finite dt"""

    def test_dephasing_has_no_bias(self):
        run = StochasticRun([sigma_z()], [0.1], dt=0.1)
        limit = deterministic_evolution(ZERO, run, plus_state(), 1.0)
        assert limit.data[0, 1].real == pytest.approx(0.5 * math.exp(-0.2), abs=1e-10)

    def test_bias_shrinks_with_dt(self):
        h = sigma_x()
        oracle = evolve(StochasticRun([sigma_z()], [0.3]).lindbladian(h), plus_state(), 1.0).data
        biases = []
        for dt in (0.1, 0.01):
            run = StochasticRun([sigma_z()], [0.3], dt=dt)
            biases.append(np.abs(deterministic_evolution(h, run, plus_state(), 1.0).data - oracle).max())
        assert biases[1] < 0.2 * biases[0]

    def test_six_qubit_dephasing(self):
        """One channel per qubit: 1 + 6 * nodes unitaries instead of nodes^6"""
        n, gamma, t = 6, 0.1, 0.5
        layout = (2,) * n
        couplings = [embed_local(sigma_z(), site, layout) for site in range(n)]
        run = StochasticRun(couplings, [gamma] * n, dt=0.1)
        factors = _quadrature_factors(zeros(layout), run, run.dt)
        assert sum(len(weights) for _, weights in factors) == 1 + n * QUADRATURE_NODES
        rho0 = tensor_power(plus_state(), n).with_layout(layout)
        limit = deterministic_evolution(zeros(layout), run, rho0, t)
        assert np.abs(limit.data - _dephased_product(n, gamma, t)).max() < 1e-10


class TestRunEnsemble:
    """Monte Carlo trajectory averages"""

    def test_dephasing_matches_lindblad(self):
        gamma, t = 0.1, 1.0
        run = StochasticRun([sigma_z()], [gamma], dt=0.01, trajectories=4000, seed=3)
        result = run_ensemble(ZERO, run, plus_state(), t)
        expected = 0.5 * math.exp(-2 * gamma * t)
        assert abs(result.state.data[0, 1] - expected) <= 4 * result.stderr[0, 1]
        assert result.trajectories == 4000
        result.state.check()

    def test_noiseless_is_unitary(self):
        """gamma = 0 reproduces exp(-iHt) rho exp(iHt)"""
        rng = np.random.default_rng(5)
        h = random_hermitian(4, rng, norm=1.5)
        rho0 = random_density(4, rng)
        run = StochasticRun([random_hermitian(4, rng)], [0.0], dt=0.01, trajectories=20, seed=2)
        result = run_ensemble(h, run, rho0, 0.7)
        assert np.abs(result.state.data - exact_unitary(h.data, rho0.data, 0.7)).max() < 1e-10

    def test_ancilla_coupled_dephasing(self):
        """Two qubits plus ancilla with G = sigma_z (qubit 1) sigma_z (ancilla)"""
        layout = (2, 2, 2)
        rng = np.random.default_rng(7)
        h = random_hermitian(8, rng, norm=1.0, layout=layout)
        g = kron(identity((2,)), sigma_z(), sigma_z())
        rho0 = random_density(8, rng, layout=layout)
        run = StochasticRun([g], [0.2], dt=0.01, trajectories=2000, seed=11)
        t = 0.5
        oracle = evolve(run.lindbladian(h), rho0, t).data
        limit = deterministic_evolution(h, run, rho0, t).data
        result = run_ensemble(h, run, rho0, t)
        bias = np.abs(limit - oracle)
        assert bias.max() < 5e-3
        assert np.all(np.abs(result.state.data - oracle) <= 5 * result.stderr + bias + 1e-10)

    def test_each_trajectory_is_a_state(self):
        rng = np.random.default_rng(9)
        h = random_hermitian(4, rng, norm=1.0)
        run = StochasticRun([random_hermitian(4, rng) for _ in range(2)], [0.3, 0.1],
                            dt=0.05, trajectories=50, seed=6)
        states = trajectory_states(h, run, random_density(4, rng), 1.0)
        assert len(states) == 50
        for state in states:
            assert abs(state.trace() - 1.0) < 1e-12
            assert state.is_hermitian(1e-12)
            assert np.linalg.eigvalsh(state.data).min() > -1e-12

    def test_seeded_reproducibility(self):
        run = StochasticRun([sigma_z()], [0.2], dt=0.05, trajectories=700, seed=8)
        a = run_ensemble(sigma_x(), run, plus_state(), 0.5, threads=1)
        b = run_ensemble(sigma_x(), run, plus_state(), 0.5, threads=3)
        assert np.array_equal(a.state.data, b.state.data)

    def test_zero_time(self):
        run = StochasticRun([sigma_z()], [0.2], trajectories=10, seed=1)
        result = run_ensemble(sigma_x(), run, plus_state(), 0.0)
        assert result.state.op.allclose(plus_state())

    def test_errors(self):
        run = StochasticRun([sigma_z()], [0.2], trajectories=10)
        with pytest.raises(ValueError):
            run_ensemble(sigma_x(), run, plus_state(), -1.0)
        with pytest.raises(ValueError):
            run_ensemble(kron(sigma_x(), sigma_x()), run, plus_state(), 1.0)
        with pytest.raises(ValueError):
            trajectory_states(sigma_x(), run, plus_state(), -1.0)


class TestConvergenceReport:
    """Error grid over step size and trajectory count"""

    def test_rows_and_flags(self, capsys):
        run = StochasticRun([sigma_z()], [0.2], seed=4)
        report = convergence_report(sigma_x(), run, plus_state(), 0.5, [0.1, 0.05], [50, 200],
                                    bias_threshold=1e-12)
        assert len(report.rows) == 4
        assert len(report.flagged) == 4
        assert len(report.rows[0].as_list()) == len(ConvergenceReport.HEADER)
        assert report.mc_slope is not None
        assert "⚠" in capsys.readouterr().out

    def test_coarse_step_is_flagged(self, capsys):
        """dt = 0.1 / gamma trips the default bias threshold, dt = 0.01 does not"""
        gamma = 0.1
        run = StochasticRun([sigma_z()], [gamma], seed=5)
        report = convergence_report(sigma_x(), run, projector(0), 3.0, [0.1 / gamma, 0.01], [20])
        coarse, fine = report.rows
        assert coarse.flagged and not fine.flagged
        assert fine.bias < coarse.bias
        assert "⚠ dt=1" in capsys.readouterr().out

    def test_monte_carlo_slope(self):
        n = 3
        layout = (2,) * n
        couplings = [embed_local(sigma_z(), site, layout) for site in range(n)]
        run = StochasticRun(couplings, [0.1] * n, seed=12)
        rho0 = tensor_power(plus_state(), n).with_layout(layout)
        report = convergence_report(zeros(layout), run, rho0, 1.0, [0.05], [100, 1000, 10_000], repeats=4)
        assert not report.flagged
        assert report.mc_slope == pytest.approx(-0.5, abs=0.15)

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            convergence_report(ZERO, StochasticRun([sigma_z()], [0.1]), plus_state(), 1.0, [], [10])


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
