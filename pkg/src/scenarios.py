"""
MitLindblad Scenarios
End-to-end runs of the three benchmark experiments and their CSV output
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg
from scipy.signal import find_peaks

from .ancilla_noise import build_corrected_plan
from .lindblad import IntegratorConfig, evolve, evolve_trajectory
from .mitigation import MitigationPlan, joint_lindbladian, noisy_lindbladian, raw_expectation
from .models import (
    all_zero_state,
    all_zero_vector,
    anisotropic_heisenberg,
    ising_coupling,
    square_plaquette_edges,
    total_magnetization,
    transverse_field,
    transverse_ising,
    unitary_expectations,
)
from .noise import NoiseModel
from .operators import DensityMatrix, Operator
from .sampling import MeasurementSpec, ShotEstimate, sample_estimate, DEFAULT_BATCH
from .settings import ConfigError
from .workers import parallel_map


# Fraction of the spectral maximum a peak has to reach
PEAK_HEIGHT = 0.1


# --- configuration ---------------------------------------------------------------

def _coerce(name: str, value: Any, default: Any) -> Any:
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"'{name}' must be true or false, got {value!r}")
        return value
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or float(value) != int(value):
            raise ConfigError(f"'{name}' must be an integer, got {value!r}")
        return int(value)
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"'{name}' must be a number, got {value!r}")
        return float(value)
    return value


class _ConfigMixin:
    """from_dict/to_dict over dataclass fields with type checks"""

    @classmethod
    def from_dict(cls, data: Dict[str, Any]):
        if not isinstance(data, dict):
            raise ConfigError(f"{cls.__name__} block must be an object")
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"Unknown {cls.__name__} keys: {', '.join(unknown)}")
        defaults = cls()
        values = {
            name: _coerce(name, value, getattr(defaults, name))
            for name, value in data.items()
        }
        config = cls(**values)
        config.validate()
        return config

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _time_grid(t_max: float, t_step: float) -> np.ndarray:
    count = int(round(t_max / t_step))
    return np.round(np.arange(count + 1) * t_step, 12)


@dataclass
class HeisenbergConfig(_ConfigMixin):
    """Anisotropic Heisenberg model on a 2x2 plaquette"""

    j: float = 2.0
    anisotropy: float = 0.2
    h: float = 0.1
    gamma_z: float = 0.03
    gamma_minus: float = 0.03
    ancilla_noise: bool = True
    t_max: float = 3.0
    t_step: float = 0.05
    shots: int = 1_000_000

    @property
    def jx(self) -> float:
        return self.j * (1 + self.anisotropy)

    @property
    def jy(self) -> float:
        return self.j * (1 - self.anisotropy)

    @property
    def jz(self) -> float:
        return self.j

    def validate(self) -> None:
        if self.gamma_z < 0 or self.gamma_minus < 0:
            raise ConfigError("Noise rates must be non-negative")
        if self.t_max < 0 or self.t_step <= 0:
            raise ConfigError("Need t_max >= 0 and t_step > 0")
        if self.shots < 1:
            raise ConfigError("shots must be at least 1")

    def times(self) -> np.ndarray:
        return _time_grid(self.t_max, self.t_step)


@dataclass
class QuenchConfig(_ConfigMixin):
    """Transverse-field Ising ring quenched from all spins up"""

    n: int = 4
    j: float = 0.2
    h: float = 1.0
    gamma_z: float = 0.1
    t_max: float = 6.0
    t_step: float = 0.05
    shots: int = 5_000_000

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("Quench chain needs n >= 2")
        if self.gamma_z < 0:
            raise ConfigError("gamma_z must be non-negative")
        if self.t_max < 0 or self.t_step <= 0:
            raise ConfigError("Need t_max >= 0 and t_step > 0")
        if self.shots < 1:
            raise ConfigError("shots must be at least 1")

    def times(self) -> np.ndarray:
        return _time_grid(self.t_max, self.t_step)


@dataclass
class FloquetConfig(_ConfigMixin):
    """Binary drive: J sum ZZ for delta_t, then h sum X for period - delta_t"""

    n: int = 6
    j: float = 1.0
    h: float = 1.0
    delta_t: float = 0.5
    period: float = 1.0
    cycles: int = 20
    gamma: float = 0.025
    ancilla_noise: bool = True
    shots: int = 10_000_000

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("Floquet chain needs n >= 2")
        if not 0 < self.delta_t < self.period:
            raise ConfigError("Need 0 < delta_t < period")
        if self.cycles < 2:
            raise ConfigError("Need at least two cycles for a spectrum")
        if self.gamma < 0:
            raise ConfigError("gamma must be non-negative")
        if self.shots < 1:
            raise ConfigError("shots must be at least 1")


SCENARIOS = {
    "heisenberg": HeisenbergConfig,
    "quench": QuenchConfig,
    "floquet": FloquetConfig,
}

ScenarioConfig = Union[HeisenbergConfig, QuenchConfig, FloquetConfig]


def scenario_config_from_dict(data: Dict[str, Any]) -> ScenarioConfig:
    """
    Parse {"scenario": name, name: {...parameters...}}.

    Raises:
        ConfigError: unknown scenario, missing block, bad types or values
    """
    if not isinstance(data, dict):
        raise ConfigError("Scenario configuration must be an object")
    name = data.get("scenario")
    if name not in SCENARIOS:
        raise ConfigError(f"Unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
    if name not in data:
        raise ConfigError(f"Missing parameter block '{name}'")
    return SCENARIOS[name].from_dict(data[name])


def load_scenario_config(path: Union[str, Path]) -> ScenarioConfig:
    path = Path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)
    except OSError as e:
        raise ConfigError(f"Cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return scenario_config_from_dict(data)


def scenario_name(config: ScenarioConfig) -> str:
    for name, cls in SCENARIOS.items():
        if isinstance(config, cls):
            return name
    raise ConfigError(f"Not a scenario configuration: {type(config).__name__}")


# --- shared pieces ---------------------------------------------------------------

def point_seeds(seed: Optional[int], count: int) -> List[Optional[int]]:
    """One child seed per grid point"""
    if seed is None:
        return [None] * count
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count)]


def _sample_points(states: Sequence[DensityMatrix], spec: MeasurementSpec, prefactors: Sequence[float],
                   shots: int, seed: Optional[int], threads: Optional[int],
                   batch_size: int) -> List[ShotEstimate]:
    seeds = point_seeds(seed, len(states))

    def task(index: int) -> ShotEstimate:
        return sample_estimate(states[index], spec, shots, prefactors[index], seeds[index],
                               batch_size=batch_size, threads=1)

    return parallel_map(task, range(len(states)), threads)


def _scenario_noise(n: int, rates: Dict[str, float], ancilla: bool) -> NoiseModel:
    return NoiseModel.uniform_local(n, rates, rates if ancilla else None)


# --- Heisenberg ------------------------------------------------------------------

@dataclass
class HeisenbergResult:
    times: np.ndarray
    ideal: np.ndarray
    noisy: np.ndarray
    mitigated: np.ndarray
    partial: np.ndarray
    mitigated_exact: np.ndarray
    stderr: np.ndarray
    plan: MitigationPlan

    HEADER = ["t", "ideal", "noisy", "mitigated", "partial", "stderr"]

    def csv_tables(self) -> Dict[str, Tuple[List[str], List[list]]]:
        rows = [list(row) for row in zip(self.times, self.ideal, self.noisy, self.mitigated,
                                         self.partial, self.stderr)]
        return {"heisenberg.csv": (self.HEADER, rows)}


def run_heisenberg(
    cfg: HeisenbergConfig,
    integrator: Optional[IntegratorConfig] = None,
    seed: Optional[int] = None,
    exact: bool = False,
    threads: Optional[int] = None,
    batch_size: int = DEFAULT_BATCH
) -> HeisenbergResult:
    """
    Ideal, noisy, mitigated and partially mitigated total magnetization.

    The partial curve drops the ancilla-noise part of the prefactor.
    """
    n = 4
    times = cfg.times()
    hamiltonian = anisotropic_heisenberg(n, square_plaquette_edges(), cfg.j, cfg.anisotropy, cfg.h)
    magnetization = total_magnetization(n)
    rho0 = all_zero_state(n)
    noise = _scenario_noise(n, {"sigma_z": cfg.gamma_z, "sigma_minus": cfg.gamma_minus}, cfg.ancilla_noise)
    plan = build_corrected_plan(noise)

    ideal = unitary_expectations(hamiltonian, rho0, magnetization, times)
    noisy_states = evolve_trajectory(noisy_lindbladian(hamiltonian, noise), rho0, times, integrator)
    noisy = np.array([s.expect(magnetization).real for s in noisy_states])

    joint_states = evolve_trajectory(joint_lindbladian(hamiltonian, plan), plan.joint_initial_state(rho0),
                                     times, integrator)
    raw = np.array([raw_expectation(w, magnetization, plan).real for w in joint_states])
    full = np.array([plan.prefactor(t) for t in times])
    partial_factor = np.array([plan.prefactor(t, include_ancilla_correction=False) for t in times])
    mitigated_exact = full * raw

    if exact:
        mitigated, partial, stderr = mitigated_exact, partial_factor * raw, np.zeros_like(times)
    else:
        spec = MeasurementSpec(plan.joint_observable(magnetization))
        estimates = _sample_points(joint_states, spec, full, cfg.shots, seed, threads, batch_size)
        mitigated = np.array([e.mean for e in estimates])
        stderr = np.array([e.stderr for e in estimates])
        partial = partial_factor * np.array([e.raw_mean for e in estimates])

    return HeisenbergResult(times, ideal, noisy, mitigated, partial, mitigated_exact, stderr, plan)


# --- quench ------------------------------------------------------------------------

def rate_function(echo: np.ndarray, n: int) -> np.ndarray:
    """-(1/N) log echo, NaN where the echo is not positive"""
    echo = np.asarray(echo, dtype=float)
    rates = np.full(echo.shape, np.nan)
    positive = echo > 0
    rates[positive] = -np.log(echo[positive]) / n
    return rates


@dataclass
class QuenchResult:
    times: np.ndarray
    r_ideal: np.ndarray
    r_noisy: np.ndarray
    r_mitigated: np.ndarray
    r_mitigated_exact: np.ndarray
    stderr: np.ndarray
    log_trace: np.ndarray
    shift_slope: float
    masked: List[float] = field(default_factory=list)

    HEADER = ["t", "r_ideal", "r_noisy", "r_mitigated", "stderr"]

    def csv_tables(self) -> Dict[str, Tuple[List[str], List[list]]]:
        rows = [list(row) for row in zip(self.times, self.r_ideal, self.r_noisy, self.r_mitigated, self.stderr)]
        return {"quench.csv": (self.HEADER, rows)}


def run_quench(
    cfg: QuenchConfig,
    integrator: Optional[IntegratorConfig] = None,
    seed: Optional[int] = None,
    exact: bool = False,
    threads: Optional[int] = None,
    batch_size: int = DEFAULT_BATCH
) -> QuenchResult:
    """
    Loschmidt rate functions after a quench of the Ising ring.

    The mitigated echo is the mitigated expectation of |psi0><psi0|; with
    dephasing on every spin and on the ancilla the log of the raw trace
    differs from the ideal rate by a term linear in t.
    """
    n = cfg.n
    times = cfg.times()
    hamiltonian = transverse_ising(n, cfg.j, cfg.h, periodic=True)
    rho0 = all_zero_state(n)
    noise = _scenario_noise(n, {"sigma_z": cfg.gamma_z}, True)
    plan = build_corrected_plan(noise)

    ideal_echo = unitary_expectations(hamiltonian, rho0, rho0, times)
    noisy_states = evolve_trajectory(noisy_lindbladian(hamiltonian, noise), rho0, times, integrator)
    noisy_echo = np.array([s.expect(rho0).real for s in noisy_states])

    joint_states = evolve_trajectory(joint_lindbladian(hamiltonian, plan), plan.joint_initial_state(rho0),
                                     times, integrator)
    raw = np.array([raw_expectation(w, rho0, plan).real for w in joint_states])
    prefactors = np.array([plan.prefactor(t) for t in times])
    exact_echo = prefactors * raw

    if exact:
        echo, echo_err = exact_echo, np.zeros_like(times)
    else:
        spec = MeasurementSpec(plan.joint_observable(rho0))
        estimates = _sample_points(joint_states, spec, prefactors, cfg.shots, seed, threads, batch_size)
        echo = np.array([e.mean for e in estimates])
        echo_err = np.array([e.stderr for e in estimates])

    r_mitigated = rate_function(echo, n)
    masked = [float(t) for t, value in zip(times, echo) if value <= 0]
    if masked:
        print(f"⚠ Masked {len(masked)} non-positive echo values (first at t={masked[0]:g})")
    with np.errstate(divide="ignore", invalid="ignore"):
        stderr = np.where(echo > 0, echo_err / (n * np.abs(echo)), np.nan)
        log_trace = np.where(raw > 0, np.log(np.where(raw > 0, raw, 1.0)), np.nan)

    return QuenchResult(
        times=times,
        r_ideal=rate_function(ideal_echo, n),
        r_noisy=rate_function(noisy_echo, n),
        r_mitigated=r_mitigated,
        r_mitigated_exact=rate_function(exact_echo, n),
        stderr=stderr,
        log_trace=log_trace,
        shift_slope=2.0 * plan.a / n + 2.0 * plan.delta / n,
        masked=masked,
    )


# --- Floquet -----------------------------------------------------------------------

def power_spectrum(series: Sequence[float], period: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Mean-subtracted |DFT|^2 normalized to unit maximum.

    Returns:
        (frequencies in units of 1/period, spectrum)
    """
    series = np.asarray(series, dtype=float)
    transformed = np.fft.rfft(series - series.mean())
    spectrum = np.abs(transformed) ** 2
    peak = spectrum.max()
    if peak > 0:
        spectrum = spectrum / peak
    return np.fft.rfftfreq(len(series), d=period), spectrum


def spectral_peaks(spectrum: Sequence[float], height: float = PEAK_HEIGHT) -> List[int]:
    """Bins of interior local maxima above height * max"""
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.max() <= 0:
        return []
    peaks, _ = find_peaks(spectrum, height=height * spectrum.max())
    return [int(p) for p in peaks]


@dataclass
class FloquetResult:
    cycles: np.ndarray
    times: np.ndarray
    ideal: np.ndarray
    noisy: np.ndarray
    mitigated: np.ndarray
    mitigated_exact: np.ndarray
    stderr: np.ndarray
    frequencies: np.ndarray
    spectrum_ideal: np.ndarray
    spectrum_noisy: np.ndarray
    spectrum_mitigated: np.ndarray
    spectrum_mitigated_exact: np.ndarray

    SERIES_HEADER = ["n", "t", "ideal", "noisy", "mitigated", "stderr"]
    SPECTRUM_HEADER = ["f", "ideal", "noisy", "mitigated"]

    def peaks(self) -> Dict[str, List[int]]:
        return {
            "ideal": spectral_peaks(self.spectrum_ideal),
            "noisy": spectral_peaks(self.spectrum_noisy),
            "mitigated": spectral_peaks(self.spectrum_mitigated),
            "mitigated_exact": spectral_peaks(self.spectrum_mitigated_exact),
        }

    def csv_tables(self) -> Dict[str, Tuple[List[str], List[list]]]:
        series = [list(row) for row in zip(self.cycles, self.times, self.ideal, self.noisy,
                                           self.mitigated, self.stderr)]
        spectrum = [list(row) for row in zip(self.frequencies, self.spectrum_ideal,
                                             self.spectrum_noisy, self.spectrum_mitigated)]
        return {
            "floquet_series.csv": (self.SERIES_HEADER, series),
            "floquet_spectrum.csv": (self.SPECTRUM_HEADER, spectrum),
        }


def _stroboscopic(first, second, state, cfg: FloquetConfig, integrator) -> List[DensityMatrix]:
    """State after each full period, starting with the initial one"""
    current = state if isinstance(state, DensityMatrix) else DensityMatrix(state)
    states = [current]
    for _ in range(cfg.cycles):
        current = evolve(first, current, cfg.delta_t, integrator)
        current = evolve(second, current, cfg.period - cfg.delta_t, integrator)
        states.append(current)
    return states


def run_floquet(
    cfg: FloquetConfig,
    integrator: Optional[IntegratorConfig] = None,
    seed: Optional[int] = None,
    exact: bool = False,
    threads: Optional[int] = None,
    batch_size: int = DEFAULT_BATCH
) -> FloquetResult:
    """Stroboscopic magnetization and its power spectrum under dephasing"""
    n = cfg.n
    h1 = ising_coupling(n, cfg.j, periodic=False)
    h2 = transverse_field(n, cfg.h)
    magnetization = total_magnetization(n)
    rho0 = all_zero_state(n)
    cycles = np.arange(cfg.cycles + 1)
    times = cycles * cfg.period

    floquet = linalg.expm(-1j * h2.data * (cfg.period - cfg.delta_t)) @ linalg.expm(-1j * h1.data * cfg.delta_t)
    psi = all_zero_vector(n)
    ideal = []
    for _ in cycles:
        ideal.append(float(np.vdot(psi, magnetization.data @ psi).real))
        psi = floquet @ psi
    ideal = np.array(ideal)

    noise = _scenario_noise(n, {"sigma_z": cfg.gamma}, cfg.ancilla_noise)
    noisy_states = _stroboscopic(noisy_lindbladian(h1, noise), noisy_lindbladian(h2, noise), rho0, cfg, integrator)
    noisy = np.array([s.expect(magnetization).real for s in noisy_states])

    plan = build_corrected_plan(noise)
    joint_states = _stroboscopic(joint_lindbladian(h1, plan), joint_lindbladian(h2, plan),
                                 plan.joint_initial_state(rho0), cfg, integrator)
    raw = np.array([raw_expectation(w, magnetization, plan).real for w in joint_states])
    prefactors = np.array([plan.prefactor(t) for t in times])
    mitigated_exact = prefactors * raw

    if exact:
        mitigated, stderr = mitigated_exact, np.zeros(len(times))
    else:
        spec = MeasurementSpec(plan.joint_observable(magnetization))
        estimates = _sample_points(joint_states, spec, prefactors, cfg.shots, seed, threads, batch_size)
        mitigated = np.array([e.mean for e in estimates])
        stderr = np.array([e.stderr for e in estimates])

    frequencies, spectrum_ideal = power_spectrum(ideal, cfg.period)
    return FloquetResult(
        cycles=cycles,
        times=times,
        ideal=ideal,
        noisy=noisy,
        mitigated=mitigated,
        mitigated_exact=mitigated_exact,
        stderr=stderr,
        frequencies=frequencies,
        spectrum_ideal=spectrum_ideal,
        spectrum_noisy=power_spectrum(noisy, cfg.period)[1],
        spectrum_mitigated=power_spectrum(mitigated, cfg.period)[1],
        spectrum_mitigated_exact=power_spectrum(mitigated_exact, cfg.period)[1],
    )


# --- dispatch and output -----------------------------------------------------------

RUNNERS = {
    "heisenberg": run_heisenberg,
    "quench": run_quench,
    "floquet": run_floquet,
}


def run_scenario(config: ScenarioConfig, **kwargs):
    """Run whichever scenario the configuration describes"""
    return RUNNERS[scenario_name(config)](config, **kwargs)


def format_value(value: Any, digits: int = 12) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        if math.isnan(value):
            return "nan"
        return f"{float(value):.{digits}g}"
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Sequence[Sequence[Any]],
              digits: int = 12) -> Path:
    """
    Write a table with floats at the given significant digits.

    Raises:
        OSError: path not writable
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value, digits) for value in row])
    return path


def write_result(result, out_dir: Union[str, Path], digits: int = 12) -> List[Path]:
    """Every CSV table of a scenario result"""
    out_dir = Path(out_dir)
    written = []
    for name, (header, rows) in result.csv_tables().items():
        written.append(write_csv(out_dir / name, header, rows, digits))
    return written
