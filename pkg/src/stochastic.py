"""
MitLindblad Stochastic Unraveling
Dissipators D[G] with Hermitian G realized as averages over white-noise Hamiltonians
"""

import itertools
import math
import time
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .lindblad import IntegratorConfig, Lindbladian, evolve, lindblad_rhs
from .operators import DensityMatrix, Operator, as_operator
from .workers import parallel_map


# Trajectories propagated together in one array
TRAJECTORY_BATCH = 500

# Gauss-Hermite nodes per noise channel for the expected one-step channel
QUADRATURE_NODES = 8

# Largest joint Gauss-Hermite grid; more channels are averaged one at a time
TENSOR_GRID_LIMIT = 512

# Rows whose deterministic step bias exceeds this are flagged
BIAS_THRESHOLD = 1e-2


@dataclass(frozen=True)
class StochasticRun:
    """
    Ensemble settings for H(t) = H + sum_k sqrt(gamma_k) eta_k(t) G_k.

    With <eta_k(t) eta_k(t')> = delta(t - t') the average obeys
    d rho/dt = -i[H, rho] + sum_k gamma_k D[G_k](rho).
    """

    couplings: Tuple[Operator, ...]
    rates: Tuple[float, ...]
    dt: float = 1e-3
    trajectories: int = 1000
    seed: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.trajectories < 1:
            raise ValueError("Need at least one trajectory")
        if len(self.couplings) != len(self.rates):
            raise ValueError("One rate per coupling operator")
        if any(rate < 0 for rate in self.rates):
            raise ValueError("Rates must be non-negative")
        layouts = {g.layout for g in self.couplings}
        if len(layouts) > 1:
            raise ValueError("Coupling operators must share a layout")
        for g in self.couplings:
            if not g.is_hermitian(1e-10):
                raise ValueError("Stochastic unraveling needs Hermitian coupling operators")

    def lindbladian(self, hamiltonian: Operator) -> Lindbladian:
        """Master equation the ensemble converges to"""
        jumps = [math.sqrt(rate) * g for g, rate in zip(self.couplings, self.rates)]
        return Lindbladian(hamiltonian, jumps, hamiltonian.layout)


@dataclass
class EnsembleResult:
    """Trajectory average with its elementwise standard error"""

    state: DensityMatrix
    stderr: np.ndarray
    trajectories: int


def _steps(t: float, dt: float) -> Tuple[int, float]:
    n = max(1, math.ceil(t / dt - 1e-9))
    return n, t / n


def _unitaries(generators: np.ndarray) -> np.ndarray:
    """exp(-i X) for a stack of Hermitian X"""
    eigenvalues, vectors = np.linalg.eigh(generators)
    phases = np.exp(-1j * eigenvalues)
    return (vectors * phases[..., None, :]) @ np.conj(np.swapaxes(vectors, -1, -2))


def _evolve_batch(h: np.ndarray, couplings: np.ndarray, amplitudes: np.ndarray,
                  rho0: np.ndarray, steps: int, step: float, size: int,
                  rng: np.random.Generator) -> np.ndarray:
    """Final states of a batch of trajectories"""
    states = np.broadcast_to(rho0, (size,) + rho0.shape).copy()
    sqrt_step = math.sqrt(step)
    for _ in range(steps):
        increments = rng.normal(0.0, sqrt_step, size=(size, len(amplitudes)))
        generators = h * step + np.einsum("mk,kij->mij", increments * amplitudes, couplings)
        u = _unitaries(generators)
        states = u @ states @ np.conj(np.swapaxes(u, -1, -2))
    return states


def _propagate_batch(*args) -> Tuple[np.ndarray, np.ndarray]:
    """Sum and sum of |.|^2 over a batch of trajectories"""
    states = _evolve_batch(*args)
    return states.sum(axis=0), (np.abs(states) ** 2).sum(axis=0)


def run_ensemble(
    hamiltonian: Operator,
    run: StochasticRun,
    rho0,
    t: float,
    threads: Optional[int] = None
) -> EnsembleResult:
    """
    Average exp(-i(H dt + sum_k sqrt(gamma_k) G_k dW_k)) updates over trajectories.

    Args:
        hamiltonian: Coherent part
        run: Couplings, rates, step, trajectory count and seed
        rho0: Initial state
        t: Final time

    Returns:
        Averaged state and elementwise standard error of the mean
    """
    role = rho0.role if isinstance(rho0, DensityMatrix) else DensityMatrix.SYSTEM
    rho0 = as_operator(rho0)
    if hamiltonian.layout != rho0.layout:
        raise ValueError("Hamiltonian and state layouts differ")
    if run.couplings and run.couplings[0].layout != rho0.layout:
        raise ValueError("Coupling and state layouts differ")
    if t < 0:
        raise ValueError("Evolution time must be non-negative")

    d = rho0.dim
    couplings = np.array([g.data for g in run.couplings]).reshape(len(run.couplings), d, d)
    amplitudes = np.sqrt(np.array(run.rates, dtype=float))
    steps, step = _steps(t, run.dt) if t > 0 else (0, 0.0)

    sizes = [TRAJECTORY_BATCH] * (run.trajectories // TRAJECTORY_BATCH)
    if run.trajectories % TRAJECTORY_BATCH:
        sizes.append(run.trajectories % TRAJECTORY_BATCH)
    streams = np.random.SeedSequence(run.seed).spawn(len(sizes))

    def task(item):
        stream, size = item
        rng = np.random.Generator(np.random.Philox(stream))
        return _propagate_batch(hamiltonian.data, couplings, amplitudes, rho0.data,
                                steps, step, size, rng)

    total = np.zeros((d, d), dtype=complex)
    total_sq = np.zeros((d, d))
    for part_sum, part_sq in parallel_map(task, list(zip(streams, sizes)), threads):
        total += part_sum
        total_sq += part_sq

    m = run.trajectories
    mean = total / m
    if m > 1:
        variance = np.clip((total_sq - m * np.abs(mean) ** 2) / (m - 1), 0.0, None)
        stderr = np.sqrt(variance / m)
    else:
        stderr = np.zeros((d, d))
    mean = 0.5 * (mean + mean.conj().T)
    return EnsembleResult(DensityMatrix(Operator(mean, rho0.layout), role), stderr, m)


def trajectory_states(hamiltonian: Operator, run: StochasticRun, rho0, t: float) -> List[Operator]:
    """Final state of every trajectory, drawn from a single stream"""
    rho0 = as_operator(rho0)
    if hamiltonian.layout != rho0.layout:
        raise ValueError("Hamiltonian and state layouts differ")
    if t < 0:
        raise ValueError("Evolution time must be non-negative")
    d = rho0.dim
    couplings = np.array([g.data for g in run.couplings]).reshape(len(run.couplings), d, d)
    amplitudes = np.sqrt(np.array(run.rates, dtype=float))
    steps, step = _steps(t, run.dt) if t > 0 else (0, 0.0)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(run.seed)))
    states = _evolve_batch(hamiltonian.data, couplings, amplitudes, rho0.data,
                           steps, step, run.trajectories, rng)
    return [Operator(state, rho0.layout) for state in states]


QuadratureFactor = Tuple[np.ndarray, np.ndarray]


def _quadrature_factors(hamiltonian: Operator, run: StochasticRun, step: float,
                        nodes: int = QUADRATURE_NODES) -> List[QuadratureFactor]:
    """
    Unitaries and weights whose successive weighted conjugations give the expected step.

    Small channel counts use the joint tensor Gauss-Hermite rule. Beyond
    TENSOR_GRID_LIMIT grid points the coherent part and each channel are
    averaged in turn, which costs k * nodes unitaries. The split is exact for
    mutually commuting H and G_k and otherwise adds O(dt^2) per step.
    """
    points, weights = hermegauss(nodes)
    weights = weights / math.sqrt(2.0 * math.pi)
    k = len(run.couplings)
    kicks = [math.sqrt(rate * step) * g.data for g, rate in zip(run.couplings, run.rates)]

    if nodes ** k <= TENSOR_GRID_LIMIT:
        generators, grid_weights = [], []
        for combo in itertools.product(range(nodes), repeat=k):
            x = hamiltonian.data * step
            for channel, index in enumerate(combo):
                x = x + points[index] * kicks[channel]
            generators.append(x)
            grid_weights.append(np.prod([weights[i] for i in combo]))
        return [(_unitaries(np.array(generators)), np.array(grid_weights))]

    factors = [(_unitaries(hamiltonian.data[None] * step), np.ones(1))]
    for kick in kicks:
        factors.append((_unitaries(points[:, None, None] * kick[None]), weights))
    return factors


def _average_conjugation(unitaries: np.ndarray, weights: np.ndarray, rho: np.ndarray) -> np.ndarray:
    conjugated = unitaries @ rho @ np.conj(np.swapaxes(unitaries, -1, -2))
    return np.tensordot(weights, conjugated, axes=1)


def _apply_factors(factors: List[QuadratureFactor], rho: np.ndarray) -> np.ndarray:
    for unitaries, weights in factors:
        rho = _average_conjugation(unitaries, weights, rho)
    return rho


def expected_step(hamiltonian: Operator, run: StochasticRun, rho, step: Optional[float] = None) -> Operator:
    """E[U rho U^dag] over one stochastic step, by quadrature"""
    rho = as_operator(rho)
    factors = _quadrature_factors(hamiltonian, run, step or run.dt)
    return Operator(_apply_factors(factors, rho.data), rho.layout)


def one_step_defect(hamiltonian: Operator, run: StochasticRun, rho, step: Optional[float] = None) -> float:
    """max |E[U rho U^dag] - rho - dt L(rho)|; shrinks as dt^2"""
    rho = as_operator(rho)
    step = step or run.dt
    expected = expected_step(hamiltonian, run, rho, step)
    generator = lindblad_rhs(run.lindbladian(hamiltonian), rho)
    return float(np.abs(expected.data - rho.data - step * generator.data).max())


def deterministic_evolution(hamiltonian: Operator, run: StochasticRun, rho0, t: float) -> Operator:
    """Infinite-ensemble limit at fixed dt: the expected step applied repeatedly"""
    rho = as_operator(rho0)
    steps, step = _steps(t, run.dt)
    factors = _quadrature_factors(hamiltonian, run, step)
    data = rho.data
    for _ in range(steps):
        data = _apply_factors(factors, data)
    return Operator(data, rho.layout)


@dataclass
class ConvergenceRow:
    dt: float
    trajectories: int
    max_abs_error: float
    mean_error: float
    wall_time: float
    bias: float
    flagged: bool

    def as_list(self) -> list:
        return [self.dt, self.trajectories, self.max_abs_error, self.mean_error,
                self.wall_time, self.bias, int(self.flagged)]


@dataclass
class ConvergenceReport:
    rows: List[ConvergenceRow] = field(default_factory=list)
    mc_slope: Optional[float] = None

    HEADER = ["dt", "M", "max_abs_error", "mean_error", "wall_time", "bias", "flagged"]

    @property
    def flagged(self) -> List[ConvergenceRow]:
        return [row for row in self.rows if row.flagged]


def convergence_report(
    hamiltonian: Operator,
    template: StochasticRun,
    rho0,
    t: float,
    dt_grid: Sequence[float],
    m_grid: Sequence[int],
    repeats: int = 1,
    bias_threshold: float = BIAS_THRESHOLD,
    cfg: Optional[IntegratorConfig] = None,
    threads: Optional[int] = None
) -> ConvergenceReport:
    """
    Error against the Lindblad solution over a (dt, M) grid.

    Errors are averaged over `repeats` seeds derived from the template seed.
    The Monte Carlo slope is the log-log fit of mean error against M at the
    finest dt.
    """
    if not dt_grid or not m_grid:
        raise ValueError("Convergence grids must be non-empty")
    rho0 = as_operator(rho0)
    oracle = evolve(template.lindbladian(hamiltonian), rho0, t, cfg).data
    base_seed = template.seed if template.seed is not None else 0

    report = ConvergenceReport()
    for dt in dt_grid:
        bias = float(np.abs(
            deterministic_evolution(hamiltonian, replace(template, dt=dt), rho0, t).data - oracle
        ).max())
        for m in m_grid:
            start = time.perf_counter()
            max_errors, mean_errors = [], []
            for r in range(repeats):
                run = replace(template, dt=dt, trajectories=m, seed=base_seed + 1000 * r)
                result = run_ensemble(hamiltonian, run, rho0, t, threads)
                deviation = np.abs(result.state.data - oracle)
                max_errors.append(float(deviation.max()))
                mean_errors.append(float(deviation.mean()))
            elapsed = (time.perf_counter() - start) / repeats
            report.rows.append(ConvergenceRow(
                dt=dt,
                trajectories=m,
                max_abs_error=float(np.mean(max_errors)),
                mean_error=float(np.mean(mean_errors)),
                wall_time=elapsed,
                bias=bias,
                flagged=bias > bias_threshold,
            ))

    finest = min(dt_grid)
    points = [(row.trajectories, row.mean_error) for row in report.rows if row.dt == finest]
    if len(points) >= 2:
        ms, errors = zip(*points)
        report.mc_slope = float(np.polyfit(np.log(ms), np.log(errors), 1)[0])

    for row in report.flagged:
        print(f"⚠ dt={row.dt:g}: step bias {row.bias:.3e} exceeds {bias_threshold:.1e}")
    return report
