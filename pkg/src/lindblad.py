"""
MitLindblad Lindblad Engine
Lindbladians, master-equation integration and ancilla-block extraction
"""

import math
import threading
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp

from .operators import (
    DensityMatrix,
    Operator,
    as_operator,
    hermitian_lambda_max,
    jump_sum,
    spectral_norm,
    zeros,
)


TimeOperator = Union[Operator, Callable[[float], Operator]]

# Positivity slack before a warning is printed
POSITIVITY_WARN = 1e-6

# Trace drift budget after evolution
TRACE_BUDGET = 1e-8


class IntegrationError(RuntimeError):
    """Raised when an evolution cannot be completed (NaN, step exhaustion)"""


@dataclass(frozen=True)
class IntegratorConfig:
    """Integrator choice and step control"""

    method: str = "rk4"
    dt: Optional[float] = None
    rtol: float = 1e-8
    atol: float = 1e-10
    max_steps: int = 10_000_000

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"Unknown integrator method: {self.method}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.rtol <= 0 or self.atol <= 0:
            raise ValueError("rtol and atol must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be at least 1")

    def step_for(self, rate_scale: float) -> float:
        """Fixed step: explicit dt, else min(1e-3, 0.01 / (|H| + a))"""
        if self.dt is not None:
            return self.dt
        if rate_scale <= 0:
            return 1e-3
        return min(1e-3, 0.01 / rate_scale)


class Lindbladian:
    """Hamiltonian plus jump operators (rates absorbed as amplitudes)"""

    def __init__(
        self,
        hamiltonian: Optional[TimeOperator],
        jumps: Sequence[TimeOperator] = (),
        layout: Optional[Sequence[int]] = None
    ):
        """
        Args:
            hamiltonian: Hermitian operator, callable t -> operator, or None for H = 0
            jumps: Jump operators sqrt(gamma) L, each static or callable
            layout: Required when the layout cannot be read off a static term
        """
        self.hamiltonian = hamiltonian
        self.jumps: Tuple[TimeOperator, ...] = tuple(jumps)
        self.layout = self._resolve_layout(layout)

        if isinstance(hamiltonian, Operator) and not hamiltonian.is_hermitian():
            raise ValueError("Hamiltonian must be Hermitian")
        for jump in self.jumps:
            if isinstance(jump, Operator) and jump.layout != self.layout:
                raise ValueError(
                    f"Jump layout {list(jump.layout)} does not match {list(self.layout)}"
                )

        self._cache: Optional[_Generator] = None
        self._cache_lock = threading.Lock()

    def _resolve_layout(self, layout: Optional[Sequence[int]]) -> Tuple[int, ...]:
        if layout is not None:
            layout = tuple(layout)
        candidates = [self.hamiltonian, *self.jumps]
        for term in candidates:
            if isinstance(term, Operator):
                if layout is None:
                    layout = term.layout
                elif term.layout != layout:
                    raise ValueError(
                        f"Term layout {list(term.layout)} does not match {list(layout)}"
                    )
        if layout is None:
            raise ValueError("Layout must be given when every term is time-dependent")
        return layout

    @property
    def is_time_dependent(self) -> bool:
        return any(callable(term) and not isinstance(term, Operator)
                   for term in (self.hamiltonian, *self.jumps))

    def terms_at(self, t: float) -> Tuple[Operator, List[Operator]]:
        """Hamiltonian and jump operators sampled at time t"""
        h = self._sample(self.hamiltonian, t) if self.hamiltonian is not None else zeros(self.layout)
        if h.layout != self.layout:
            raise ValueError(f"Hamiltonian layout at t={t} does not match {list(self.layout)}")
        if not h.is_hermitian():
            raise ValueError(f"Hamiltonian is not Hermitian at t={t}")
        jumps = []
        for term in self.jumps:
            jump = self._sample(term, t)
            if jump.layout != self.layout:
                raise ValueError(f"Jump layout at t={t} does not match {list(self.layout)}")
            jumps.append(jump)
        return h, jumps

    @staticmethod
    def _sample(term: TimeOperator, t: float) -> Operator:
        return term if isinstance(term, Operator) else term(t)

    def generator(self, t: float = 0.0) -> "_Generator":
        """Compiled right-hand side at time t (cached for static Lindbladians)"""
        if self.is_time_dependent:
            return _Generator(*self.terms_at(t))
        with self._cache_lock:
            if self._cache is None:
                self._cache = _Generator(*self.terms_at(0.0))
            return self._cache

    def decay_constant(self, t: float = 0.0) -> float:
        """a(t) = lambda_max(sum_k L_k(t)^dag L_k(t))"""
        _, jumps = self.terms_at(t)
        if not jumps:
            return 0.0
        return hermitian_lambda_max(jump_sum(jumps, self.layout))

    def rate_scale(self, t: float = 0.0) -> float:
        """|H| + a, the scale entering the automatic step rule"""
        h, _ = self.terms_at(t)
        return spectral_norm(h) + self.decay_constant(t)

    def __add__(self, other: "Lindbladian") -> "Lindbladian":
        if self.layout != other.layout:
            raise ValueError("Cannot add Lindbladians with different layouts")
        return Lindbladian(
            _sum_hamiltonians(self.hamiltonian, other.hamiltonian),
            self.jumps + other.jumps,
            self.layout,
        )

    def __repr__(self) -> str:
        kind = "time-dependent" if self.is_time_dependent else "static"
        return f"Lindbladian({kind}, layout={list(self.layout)}, jumps={len(self.jumps)})"


def _sum_hamiltonians(a: Optional[TimeOperator], b: Optional[TimeOperator]) -> Optional[TimeOperator]:
    if a is None:
        return b
    if b is None:
        return a
    if isinstance(a, Operator) and isinstance(b, Operator):
        return a + b
    return lambda t: Lindbladian._sample(a, t) + Lindbladian._sample(b, t)


class _Generator:
    """
    Matrix-product form of the Lindbladian.

    rhs = -i (H_eff rho - rho H_eff^dag) + sum_k L_k rho L_k^dag with
    H_eff = H - i/2 sum_k L_k^dag L_k. Diagonal jumps collapse into a single
    elementwise mask so that dephasing costs O(d^2).
    """

    def __init__(self, hamiltonian: Operator, jumps: List[Operator]):
        d = hamiltonian.dim
        heff = hamiltonian.data.astype(complex).copy()
        mask = np.zeros((d, d), dtype=complex)
        has_mask = False
        dense = []
        for jump in jumps:
            l = jump.data
            heff -= 0.5j * (l.conj().T @ l)
            if jump.is_diagonal():
                diag = np.diag(l)
                mask += np.outer(diag, diag.conj())
                has_mask = True
            else:
                dense.append((l, l.conj().T))
        self.heff = heff
        self.heff_dag = heff.conj().T
        self.mask = mask if has_mask else None
        self.dense = dense

    def __call__(self, rho: np.ndarray) -> np.ndarray:
        out = -1j * (self.heff @ rho - rho @ self.heff_dag)
        if self.mask is not None:
            out += self.mask * rho
        for l, l_dag in self.dense:
            out += l @ rho @ l_dag
        return out


def lindblad_rhs(lindbladian: Lindbladian, rho: Union[Operator, DensityMatrix], t: float = 0.0) -> Operator:
    """-i[H, rho] + sum_k D[L_k](rho)"""
    rho = as_operator(rho)
    if rho.layout != lindbladian.layout:
        raise ValueError(
            f"State layout {list(rho.layout)} does not match Lindbladian {list(lindbladian.layout)}"
        )
    return Operator(lindbladian.generator(t)(rho.data), rho.layout)


RHS = Callable[[float, np.ndarray], np.ndarray]
StepHook = Callable[[float, float], None]


def integrate(
    rhs: RHS,
    y0: np.ndarray,
    t0: float,
    t1: float,
    cfg: IntegratorConfig,
    rate_scale: float = 0.0,
    on_grid: Optional[Callable[[np.ndarray], None]] = None
) -> np.ndarray:
    """
    Integrate dy/dt = rhs(t, y) from t0 to t1.

    Args:
        rhs: Right-hand side on matrices
        y0: Initial matrix
        t0, t1: Time interval (t1 >= t0)
        cfg: Integrator configuration
        rate_scale: |H| + a for the automatic step rule
        on_grid: Receives the time grid actually used (for quadratures)

    Returns:
        y(t1)

    Raises:
        IntegrationError: NaN/inf encountered, step budget exhausted, solver failure
    """
    if t1 < t0:
        raise ValueError("Integration interval must be forward in time")
    if t1 == t0:
        if on_grid is not None:
            on_grid(np.array([t0]))
        return y0.copy()

    if cfg.method == "rk45":
        return _integrate_rk45(rhs, y0, t0, t1, cfg, on_grid)

    h_max = cfg.step_for(rate_scale)
    steps = max(1, math.ceil((t1 - t0) / h_max - 1e-9))
    if steps > cfg.max_steps:
        raise IntegrationError(f"Step budget exhausted: {steps} steps needed, max_steps={cfg.max_steps}")
    h = (t1 - t0) / steps

    y = y0.astype(complex, copy=True)
    for n in range(steps):
        t = t0 + n * h
        k1 = rhs(t, y)
        k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
        k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
        k4 = rhs(t + h, y + h * k3)
        y = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.isfinite(y).all():
            raise IntegrationError(f"Non-finite state at t={t + h:.6g} (step {n + 1} of {steps})")

    if on_grid is not None:
        on_grid(t0 + h * np.arange(steps + 1))
    return y


def _integrate_rk45(rhs: RHS, y0: np.ndarray, t0: float, t1: float,
                    cfg: IntegratorConfig, on_grid) -> np.ndarray:
    shape = y0.shape

    def flat_rhs(t, y):
        return rhs(t, y.reshape(shape)).ravel()

    solution = solve_ivp(
        flat_rhs,
        t_span=(t0, t1),
        y0=y0.astype(complex).ravel(),
        method="RK45",
        rtol=cfg.rtol,
        atol=cfg.atol,
    )
    if not solution.success:
        raise IntegrationError(f"Adaptive integration failed: {solution.message}")
    if len(solution.t) - 1 > cfg.max_steps:
        raise IntegrationError(f"Step budget exhausted: {len(solution.t) - 1} adaptive steps")
    y = solution.y[:, -1].reshape(shape)
    if not np.isfinite(y).all():
        raise IntegrationError("Non-finite state at the end of adaptive integration")
    if on_grid is not None:
        on_grid(solution.t)
    return y


def _lindblad_rhs_fn(lindbladian: Lindbladian) -> RHS:
    if lindbladian.is_time_dependent:
        return lambda t, y: lindbladian.generator(t)(y)
    gen = lindbladian.generator()
    return lambda t, y: gen(y)


def _rate_scale(lindbladian: Lindbladian, t0: float, t1: float) -> float:
    if lindbladian.is_time_dependent:
        return max(lindbladian.rate_scale(t0), lindbladian.rate_scale(t1))
    return lindbladian.rate_scale()


def _check_state(rho0: Operator, rho: np.ndarray, role: str) -> DensityMatrix:
    result = DensityMatrix(Operator(rho, rho0.layout), role)
    drift = abs(result.trace() - rho0.trace())
    if drift > TRACE_BUDGET:
        print(f"⚠ Trace drifted by {drift:.2e} during evolution")
    smallest = result.min_eigenvalue()
    if smallest < -POSITIVITY_WARN:
        print(f"⚠ Evolved state has eigenvalue {smallest:.3e} (positivity slack exceeded)")
    return result


def _role_of(rho0: Union[Operator, DensityMatrix]) -> str:
    return rho0.role if isinstance(rho0, DensityMatrix) else DensityMatrix.SYSTEM


def evolve(
    lindbladian: Lindbladian,
    rho0: Union[Operator, DensityMatrix],
    t: float,
    cfg: Optional[IntegratorConfig] = None,
    t0: float = 0.0
) -> DensityMatrix:
    """
    Evolve a density matrix under the master equation up to time t.

    Args:
        lindbladian: Generator of the dynamics
        rho0: State at time t0
        t: Final time (t >= t0)
        cfg: Integrator configuration (default RK4 with the automatic step rule)
        t0: Start time, relevant for time-dependent Lindbladians

    Returns:
        Evolved state; role carried over from rho0
    """
    if t < t0:
        raise ValueError(f"Evolution time must be >= {t0}, got {t}")
    cfg = cfg or IntegratorConfig()
    role = _role_of(rho0)
    start = as_operator(rho0)
    if start.layout != lindbladian.layout:
        raise ValueError(
            f"State layout {list(start.layout)} does not match Lindbladian {list(lindbladian.layout)}"
        )
    if t == t0:
        return DensityMatrix(start, role)

    rho = integrate(
        _lindblad_rhs_fn(lindbladian), start.data, t0, t, cfg,
        rate_scale=_rate_scale(lindbladian, t0, t),
    )
    return _check_state(start, rho, role)


def evolve_trajectory(
    lindbladian: Lindbladian,
    rho0: Union[Operator, DensityMatrix],
    times: Sequence[float],
    cfg: Optional[IntegratorConfig] = None
) -> List[DensityMatrix]:
    """
    Evolve once and record the state at each requested time.

    Args:
        times: Non-decreasing, non-negative sample times

    Returns:
        One state per requested time
    """
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("Sample times must be non-negative and non-decreasing")
    cfg = cfg or IntegratorConfig()
    role = _role_of(rho0)
    start = as_operator(rho0)
    if start.layout != lindbladian.layout:
        raise ValueError("State layout does not match the Lindbladian")

    rhs = _lindblad_rhs_fn(lindbladian)
    scale = _rate_scale(lindbladian, 0.0, times[-1] if times else 0.0)
    states = []
    current, now = start.data, 0.0
    for t in times:
        current = integrate(rhs, current, now, t, cfg, rate_scale=scale)
        now = t
        states.append(DensityMatrix(Operator(current, start.layout), role))
    if states:
        _check_state(start, states[-1].data, role)
    return states


def _simpson_over_steps(a: Callable[[float], float], grid: np.ndarray) -> float:
    """Composite Simpson rule using the midpoint of every grid step"""
    total = 0.0
    for left, right in zip(grid[:-1], grid[1:]):
        h = right - left
        total += h / 6.0 * (a(left) + 4.0 * a(0.5 * (left + right)) + a(right))
    return total


def evolve_with_exponent(
    lindbladian: Lindbladian,
    rho0: Union[Operator, DensityMatrix],
    t: float,
    cfg: Optional[IntegratorConfig] = None,
    decay: Optional[Callable[[float], float]] = None
) -> Tuple[DensityMatrix, float]:
    """
    Evolve and return the accumulated decay exponent int_0^t a(s) ds.

    Args:
        decay: a(s); defaults to lambda_max of the Lindbladian's own jumps

    Returns:
        (state at t, exponent)
    """
    cfg = cfg or IntegratorConfig()
    decay = decay or lindbladian.decay_constant
    grid_holder: List[np.ndarray] = []
    role = _role_of(rho0)
    start = as_operator(rho0)
    if start.layout != lindbladian.layout:
        raise ValueError("State layout does not match the Lindbladian")

    if t < 0:
        raise ValueError("Evolution time must be non-negative")
    if t == 0:
        return DensityMatrix(start, role), 0.0

    rho = integrate(
        _lindblad_rhs_fn(lindbladian), start.data, 0.0, t, cfg,
        rate_scale=_rate_scale(lindbladian, 0.0, t),
        on_grid=grid_holder.append,
    )
    exponent = _simpson_over_steps(decay, grid_holder[0])
    return _check_state(start, rho, role), exponent


def ancilla_block(w: Union[Operator, DensityMatrix], i: int, j: int) -> Operator:
    """
    <i|W|j> on the last layout factor.

    Returns:
        Operator on the remaining (system) factors
    """
    w = as_operator(w)
    if len(w.layout) < 2:
        raise ValueError("ancilla_block needs at least one system factor and one ancilla factor")
    d_anc = w.layout[-1]
    if not (0 <= i < d_anc and 0 <= j < d_anc):
        raise ValueError(f"Ancilla indices ({i}, {j}) out of range for dimension {d_anc}")
    d_sys = w.dim // d_anc
    blocks = w.data.reshape(d_sys, d_anc, d_sys, d_anc)
    return Operator(blocks[:, i, :, j], w.layout[:-1])
