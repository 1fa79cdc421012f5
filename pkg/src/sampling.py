"""
MitLindblad Shot Sampler
Finite-shot joint measurements, mitigated estimators and shot-count bounds
"""

import math
from dataclasses import asdict, dataclass
from typing import List, Optional, Sequence, Union

import numpy as np
from scipy import linalg

from .operators import DensityMatrix, Operator, as_operator
from .workers import parallel_map


# Eigenvalues closer than this share one projector
GROUP_TOL = 1e-9

# Born probabilities below -PROB_TOL mean the state is not physical
PROB_TOL = 1e-9

# Shots per independent RNG stream
DEFAULT_BATCH = 200_000


def make_rng(seed: Optional[int], stream: int = 0) -> np.random.Generator:
    """Counter-based generator for one task stream of a master seed"""
    sequence = np.random.SeedSequence(seed)
    child = sequence.spawn(stream + 1)[stream]
    return np.random.Generator(np.random.Philox(child))


class MeasurementSpec:
    """Projective measurement of a Hermitian observable, grouped by eigenvalue"""

    def __init__(self, observable: Operator, group_tol: float = GROUP_TOL):
        if not observable.is_hermitian(1e-10):
            raise ValueError("Measured observable must be Hermitian")
        self.observable = observable
        hermitian_part = 0.5 * (observable.data + observable.data.conj().T)
        eigenvalues, self._vectors = linalg.eigh(hermitian_part)

        # eigh returns ascending eigenvalues, so groups are contiguous runs
        groups = np.zeros(len(eigenvalues), dtype=int)
        values = [eigenvalues[0]]
        for index in range(1, len(eigenvalues)):
            if eigenvalues[index] - values[-1] > group_tol:
                values.append(eigenvalues[index])
            groups[index] = len(values) - 1
        self._groups = groups
        self.values = np.array(
            [eigenvalues[groups == g].mean() for g in range(len(values))]
        )

    @property
    def outcome_range(self) -> float:
        return float(self.values[-1] - self.values[0])

    def projector(self, index: int) -> Operator:
        v = self._vectors[:, self._groups == index]
        return Operator(v @ v.conj().T, self.observable.layout)

    def probabilities(self, w: Union[Operator, DensityMatrix]) -> np.ndarray:
        """
        Born probabilities Tr[P_r W], clamped and renormalized.

        Raises:
            ValueError: a probability is below -PROB_TOL or the total is not 1
        """
        w = as_operator(w)
        if w.layout != self.observable.layout:
            raise ValueError(
                f"State layout {list(w.layout)} does not match observable {list(self.observable.layout)}"
            )
        rotated = np.sum(self._vectors.conj() * (w.data @ self._vectors), axis=0).real
        probs = np.bincount(self._groups, weights=rotated, minlength=len(self.values))
        if probs.min() < -PROB_TOL:
            raise ValueError(f"Negative outcome probability {probs.min():.3e}: state is not physical")
        probs = np.clip(probs, 0.0, None)
        total = probs.sum()
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"Outcome probabilities sum to {total:.6g}, state is not normalized")
        return probs / total

    def exact_mean(self, w: Union[Operator, DensityMatrix]) -> float:
        return float(self.observable.expect(as_operator(w)).real)

    def __repr__(self) -> str:
        return f"MeasurementSpec(outcomes={len(self.values)}, layout={list(self.observable.layout)})"


@dataclass
class ShotEstimate:
    """Mitigated estimate prefactor * mean(outcomes) with its standard error"""

    n: int
    mean: float
    stderr: float
    prefactor: float
    raw_mean: float
    raw_variance: float
    seed: Optional[int] = None

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("A shot estimate needs at least one shot")

    def covers(self, value: float, k: float = 4.0) -> bool:
        return abs(self.mean - value) <= k * self.stderr + 1e-12

    def to_dict(self) -> dict:
        return asdict(self)


class RunningMoments:
    """Streaming count, mean and M2 that merge associatively"""

    def __init__(self, n: int = 0, mean: float = 0.0, m2: float = 0.0):
        self.n = n
        self.mean = mean
        self.m2 = m2

    @classmethod
    def from_counts(cls, values: np.ndarray, counts: np.ndarray) -> "RunningMoments":
        n = int(counts.sum())
        if n == 0:
            return cls()
        mean = float(np.dot(values, counts) / n)
        m2 = float(np.dot(counts, (values - mean) ** 2))
        return cls(n, mean, m2)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        if other.n == 0:
            return RunningMoments(self.n, self.mean, self.m2)
        if self.n == 0:
            return RunningMoments(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return RunningMoments(n, mean, m2)

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for a single sample)"""
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0


def sample_outcomes(w: Union[Operator, DensityMatrix], spec: MeasurementSpec, n: int,
                    seed: Optional[int] = None, stream: int = 0) -> np.ndarray:
    """n i.i.d. measurement outcomes (eigenvalues of the observable)"""
    if n < 1:
        raise ValueError("Shot count must be at least 1")
    probs = spec.probabilities(w)
    rng = make_rng(seed, stream)
    return rng.choice(spec.values, size=n, p=probs)


def sample_counts(w: Union[Operator, DensityMatrix], spec: MeasurementSpec, n: int,
                  seed: Optional[int] = None, stream: int = 0) -> np.ndarray:
    """Outcome histogram of n shots, aligned with spec.values"""
    if n < 1:
        raise ValueError("Shot count must be at least 1")
    probs = spec.probabilities(w)
    rng = make_rng(seed, stream)
    return rng.multinomial(n, probs)


def mitigated_estimate(outcomes: Sequence[float], prefactor: float,
                       seed: Optional[int] = None) -> ShotEstimate:
    """
    prefactor * n^-1 sum_i outcome_i.

    Raises:
        ValueError: no outcomes
    """
    outcomes = np.asarray(outcomes, dtype=float)
    if outcomes.size == 0:
        raise ValueError("Cannot estimate from an empty outcome list")
    n = outcomes.size
    raw_mean = float(outcomes.mean())
    raw_variance = float(outcomes.var(ddof=1)) if n > 1 else 0.0
    return ShotEstimate(
        n=n,
        mean=prefactor * raw_mean,
        stderr=prefactor * math.sqrt(raw_variance / n),
        prefactor=prefactor,
        raw_mean=raw_mean,
        raw_variance=raw_variance,
        seed=seed,
    )


def _estimate_from_moments(moments: RunningMoments, prefactor: float, seed: Optional[int]) -> ShotEstimate:
    return ShotEstimate(
        n=moments.n,
        mean=prefactor * moments.mean,
        stderr=prefactor * math.sqrt(moments.variance / moments.n),
        prefactor=prefactor,
        raw_mean=moments.mean,
        raw_variance=moments.variance,
        seed=seed,
    )


def sample_estimate(
    w: Union[Operator, DensityMatrix],
    spec: MeasurementSpec,
    n: int,
    prefactor: float = 1.0,
    seed: Optional[int] = None,
    batch_size: int = DEFAULT_BATCH,
    threads: Optional[int] = None
) -> ShotEstimate:
    """
    Mitigated estimate from n shots, drawn in independent batches.

    Each batch owns an RNG stream, so the result does not depend on thread scheduling.
    """
    if n < 1:
        raise ValueError("Shot count must be at least 1")
    probs = spec.probabilities(w)
    sizes = [batch_size] * (n // batch_size)
    if n % batch_size:
        sizes.append(n % batch_size)

    def draw(task):
        stream, size = task
        counts = make_rng(seed, stream).multinomial(size, probs)
        return RunningMoments.from_counts(spec.values, counts)

    moments = RunningMoments()
    for part in parallel_map(draw, list(enumerate(sizes)), threads):
        moments = moments.merge(part)
    return _estimate_from_moments(moments, prefactor, seed)


def required_shots(epsilon: float, delta: float, a_eff: float, t: float, outcome_range: float) -> int:
    """
    Hoeffding shot count for |estimate - truth| <= epsilon with probability 1 - delta.

    n = ceil(e^{4 a_eff t} R^2 log(2/delta) / (2 epsilon^2))
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not 0 < delta < 1:
        raise ValueError("delta must be in the interval (0,1)")
    if outcome_range <= 0:
        raise ValueError("Outcome range must be positive")
    if t < 0 or a_eff < 0:
        raise ValueError("Time and decay constant must be non-negative")
    n = math.exp(4.0 * a_eff * t) * outcome_range ** 2 * math.log(2.0 / delta) / (2.0 * epsilon ** 2)
    return max(1, math.ceil(n))


def empirical_overhead(
    w_mit: Union[Operator, DensityMatrix],
    spec_mit: MeasurementSpec,
    w_noisy: Union[Operator, DensityMatrix],
    spec_noisy: MeasurementSpec,
    n: int,
    seed: Optional[int] = None,
    prefactor: float = 1.0
) -> float:
    """
    Variance of the mitigated estimator over that of the noisy one at equal n.

    Raises:
        ValueError: the noisy estimator has zero variance
    """
    mit = sample_estimate(w_mit, spec_mit, n, prefactor, seed, threads=1)
    noisy = sample_estimate(w_noisy, spec_noisy, n, 1.0, None if seed is None else seed + 1, threads=1)
    if noisy.raw_variance == 0:
        raise ValueError("Noisy estimator has zero variance; overhead undefined")
    return prefactor ** 2 * mit.raw_variance / noisy.raw_variance


def hoeffding_coverage(
    w: Union[Operator, DensityMatrix],
    spec: MeasurementSpec,
    prefactor: float,
    a_eff: float,
    t: float,
    epsilon: float,
    delta: float,
    trials: int,
    seed: Optional[int] = None
) -> float:
    """Fraction of trials whose estimate at the Hoeffding shot count lands within epsilon"""
    n = required_shots(epsilon, delta, a_eff, t, spec.outcome_range)
    truth = prefactor * spec.exact_mean(w)
    probs = spec.probabilities(w)
    hits = 0
    for trial in range(trials):
        counts = make_rng(seed, trial).multinomial(n, probs)
        estimate = prefactor * float(np.dot(spec.values, counts)) / n
        hits += abs(estimate - truth) <= epsilon
    return hits / trials


def variance_series(w: Union[Operator, DensityMatrix], spec: MeasurementSpec,
                    shot_counts: Sequence[int], seed: Optional[int] = None) -> List[ShotEstimate]:
    """Estimates at several shot counts, each from its own stream"""
    return [sample_estimate(w, spec, n, 1.0, None if seed is None else seed + index, threads=1)
            for index, n in enumerate(shot_counts)]
