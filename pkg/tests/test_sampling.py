"""
Tests for the shot sampler
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.lindblad import evolve
from src.mitigation import build_single_qubit_plan, joint_lindbladian, noisy_lindbladian
from src.noise import NoiseModel
from src.operators import Operator, identity, kron, plus_state, random_density, sigma_x, sigma_z
from src.sampling import (
    MeasurementSpec,
    RunningMoments,
    ShotEstimate,
    empirical_overhead,
    hoeffding_coverage,
    make_rng,
    mitigated_estimate,
    required_shots,
    sample_counts,
    sample_estimate,
    sample_outcomes,
    variance_series,
)


def _dephasing_setup(gamma: float = 0.1, t: float = 2.0):
    noise = NoiseModel.uniform_local(1, {"sigma_z": gamma})
    plan = build_single_qubit_plan(noise)
    h = Operator(np.zeros((2, 2)))
    w = evolve(joint_lindbladian(h, plan), plan.joint_initial_state(plus_state()), t)
    noisy = evolve(noisy_lindbladian(h, noise), plus_state(), t)
    return plan, w, noisy


class TestMeasurementSpec:
    """Eigenvalue grouping and Born probabilities"""

    def test_degenerate_groups(self):
        spec = MeasurementSpec(kron(sigma_x(), sigma_x()))
        assert np.allclose(spec.values, [-1.0, 1.0])
        assert spec.outcome_range == pytest.approx(2.0)
        total = spec.projector(0) + spec.projector(1)
        assert total.allclose(identity((2, 2)), atol=1e-12)

    def test_probabilities(self):
        spec = MeasurementSpec(sigma_z())
        probs = spec.probabilities(plus_state())
        assert np.allclose(probs, [0.5, 0.5])
        assert spec.exact_mean(plus_state()) == pytest.approx(0.0)

    def test_rejects_non_hermitian(self):
        with pytest.raises(ValueError):
            MeasurementSpec(Operator([[0, 1], [0, 0]]))

    def test_rejects_unphysical_state(self):
        spec = MeasurementSpec(sigma_z())
        with pytest.raises(ValueError):
            spec.probabilities(Operator([[1.5, 0], [0, -0.5]]))
        with pytest.raises(ValueError):
            spec.probabilities(Operator([[0.5, 0], [0, 0.2]]))

    def test_layout_mismatch(self):
        spec = MeasurementSpec(sigma_z())
        with pytest.raises(ValueError):
            spec.probabilities(kron(plus_state(), plus_state()))


class TestRunningMoments:
    """Mergeable streaming moments"""

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(min_value=-5, max_value=5), min_size=2, max_size=60),
           st.integers(min_value=1, max_value=59))
    def test_merge_matches_direct(self, values, cut):
        cut = min(cut, len(values) - 1)
        data = np.array(values)
        left = RunningMoments.from_counts(data[:cut], np.ones(cut))
        right = RunningMoments.from_counts(data[cut:], np.ones(len(data) - cut))
        merged = left.merge(right)
        assert merged.n == len(data)
        assert merged.mean == pytest.approx(data.mean(), abs=1e-9)
        assert merged.variance == pytest.approx(data.var(ddof=1), abs=1e-8)

    def test_empty_merge(self):
        moments = RunningMoments(3, 1.0, 2.0)
        assert RunningMoments().merge(moments).mean == 1.0
        assert moments.merge(RunningMoments()).n == 3
        assert RunningMoments.from_counts(np.array([1.0]), np.array([0])).n == 0


class TestSampling:
    """Drawing shots and forming estimates"""

    def test_seeded_reproducibility(self):
        rng = np.random.default_rng(0)
        rho = random_density(2, rng).op
        spec = MeasurementSpec(sigma_x())
        a = sample_outcomes(rho, spec, 100, seed=42)
        b = sample_outcomes(rho, spec, 100, seed=42)
        assert np.array_equal(a, b)
        assert set(np.unique(a)) <= {-1.0, 1.0}

    def test_streams_differ(self):
        assert make_rng(1, 0).random() != make_rng(1, 1).random()

    def test_counts_sum(self):
        counts = sample_counts(plus_state(), MeasurementSpec(sigma_z()), 1000, seed=3)
        assert counts.sum() == 1000

    def test_zero_shots(self):
        with pytest.raises(ValueError):
            sample_outcomes(plus_state(), MeasurementSpec(sigma_z()), 0)
        with pytest.raises(ValueError):
            sample_estimate(plus_state(), MeasurementSpec(sigma_z()), 0)
        with pytest.raises(ValueError):
            mitigated_estimate([], 1.0)

    def test_mitigated_estimate(self):
        est = mitigated_estimate([1.0, -1.0, 1.0, 1.0], prefactor=2.0)
        assert est.mean == pytest.approx(1.0)
        assert est.raw_mean == pytest.approx(0.5)
        assert est.stderr == pytest.approx(2.0 * math.sqrt(1.0 / 4))

    def test_single_shot_has_zero_variance(self):
        est = mitigated_estimate([1.0], prefactor=1.0)
        assert est.raw_variance == 0.0
        with pytest.raises(ValueError):
            ShotEstimate(0, 0.0, 0.0, 1.0, 0.0, 0.0)

    def test_thread_independent(self):
        plan, w, _ = _dephasing_setup()
        spec = MeasurementSpec(plan.joint_observable(sigma_x()))
        one = sample_estimate(w, spec, 50_000, plan.prefactor(2.0), seed=9, batch_size=7_000, threads=1)
        many = sample_estimate(w, spec, 50_000, plan.prefactor(2.0), seed=9, batch_size=7_000, threads=4)
        assert one.mean == many.mean
        assert one.stderr == many.stderr

    def test_estimate_covers_ideal(self):
        plan, w, _ = _dephasing_setup()
        spec = MeasurementSpec(plan.joint_observable(sigma_x()))
        est = sample_estimate(w, spec, 200_000, plan.prefactor(2.0), seed=11)
        assert est.covers(1.0)
        assert est.to_dict()["n"] == 200_000

    def test_variance_series_shrinks(self):
        plan, w, _ = _dephasing_setup()
        spec = MeasurementSpec(plan.joint_observable(sigma_x()))
        small, large = variance_series(w, spec, [1_000, 100_000], seed=5)
        assert large.stderr < small.stderr

    def test_stderr_slope(self):
        """Standard error falls as n^-1/2"""
        plan, w, _ = _dephasing_setup()
        spec = MeasurementSpec(plan.joint_observable(sigma_x()))
        shots = [1_000, 10_000, 100_000]
        series = variance_series(w, spec, shots, seed=13)
        slope = np.polyfit(np.log(shots), np.log([est.stderr for est in series]), 1)[0]
        assert slope == pytest.approx(-0.5, abs=0.05)

    def test_mitigated_estimate_is_unbiased(self):
        """Average over 200 seeds agrees with the exact rescaled expectation"""
        plan, w, _ = _dephasing_setup()
        spec = MeasurementSpec(plan.joint_observable(sigma_x()))
        prefactor = plan.prefactor(2.0)
        means = np.array([
            mitigated_estimate(sample_outcomes(w, spec, 2_000, seed=1000 + s), prefactor).mean
            for s in range(200)
        ])
        exact = prefactor * spec.exact_mean(w)
        assert exact == pytest.approx(1.0, abs=1e-6)
        assert abs(means.mean() - exact) <= 4 * means.std(ddof=1) / math.sqrt(len(means))


class TestShotBounds:
    """Hoeffding shot counts and sampling overhead"""

    def test_required_shots_formula(self):
        n = required_shots(0.1, 0.1, 0.1, 2.0, 2.0)
        expected = math.exp(0.8) * 4.0 * math.log(20.0) / (2 * 0.01)
        assert n == math.ceil(expected)

    def test_required_shots_validation(self):
        with pytest.raises(ValueError):
            required_shots(0.0, 0.1, 0.1, 1.0, 2.0)
        with pytest.raises(ValueError):
            required_shots(0.1, 1.0, 0.1, 1.0, 2.0)
        with pytest.raises(ValueError):
            required_shots(0.1, 0.1, 0.1, 1.0, 0.0)
        with pytest.raises(ValueError):
            required_shots(0.1, 0.1, -0.1, 1.0, 2.0)

    def test_overhead_near_exponential(self):
        """Variance ratio at gamma = 0.1, t = 2 lies within a factor 1.5 of e^{4at}"""
        plan, w, noisy = _dephasing_setup()
        spec_mit = MeasurementSpec(plan.joint_observable(sigma_x()))
        spec_noisy = MeasurementSpec(sigma_x())
        ratios = [
            empirical_overhead(w, spec_mit, noisy, spec_noisy, 100_000, seed=100 + 2 * rep,
                               prefactor=plan.prefactor(2.0))
            for rep in range(50)
        ]
        predicted = math.exp(4 * plan.a * 2.0)
        assert predicted / 1.5 <= np.mean(ratios) <= 1.5 * predicted

    def test_overhead_undefined_for_deterministic_noisy(self):
        spec = MeasurementSpec(sigma_z())
        up = Operator(np.diag([1.0, 0.0]))
        with pytest.raises(ValueError):
            empirical_overhead(plus_state(), MeasurementSpec(sigma_x()), up, spec, 100, seed=1)

    def test_overhead_grows_from_one(self):
        """sigma_z on |+>: both estimators have unit raw variance, so the ratio is the squared prefactor"""
        overheads = []
        for t in (0.0, 0.5, 1.0, 2.0):
            plan, w, noisy = _dephasing_setup(t=t)
            overheads.append(empirical_overhead(
                w, MeasurementSpec(plan.joint_observable(sigma_z())), noisy, MeasurementSpec(sigma_z()),
                100_000, seed=31, prefactor=plan.prefactor(t),
            ))
        assert overheads[0] == pytest.approx(1.0, abs=0.05)
        assert all(b > a for a, b in zip(overheads, overheads[1:]))

    def test_hoeffding_coverage(self):
        plan, w, _ = _dephasing_setup()
        spec = MeasurementSpec(plan.joint_observable(sigma_x()))
        coverage = hoeffding_coverage(w, spec, plan.prefactor(2.0), plan.a, 2.0,
                                      epsilon=0.1, delta=0.1, trials=200, seed=21)
        assert coverage >= 0.9


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
