"""
MitLindblad Mitigation Protocols
Engineered ancilla dissipation plans and the post-processing that undoes noise
"""

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad

from .lindblad import Lindbladian, TimeOperator
from .noise import NoiseModel, encode_matrix, operator_support
from .operators import (
    DensityMatrix,
    Operator,
    as_operator,
    embed_local,
    hermitian_lambda_max,
    identity,
    jump_sum,
    kron,
    ketbra,
    plus_state,
    psd_sqrt,
    pure_state,
    sigma_x,
    sigma_z,
    tensor_power,
)


# S is treated as zero when max|S| <= SIMPLIFIED_RTOL * a
SIMPLIFIED_RTOL = 1e-10

# Imaginary residue allowed on a mitigated value, relative to its scale
IMAG_RTOL = 1e-9

# Ratio denominators below this are treated as zero
RATIO_FLOOR = 1e-12


class Variant:
    SINGLE_QUBIT = "single-qubit"
    SIMPLIFIED_PAULI = "simplified-pauli"
    ALT_QUBIT = "alt-qubit-projector"
    MULTI_ANCILLA = "multi-ancilla"
    QUTRIT = "qutrit"

    ALL = (SINGLE_QUBIT, SIMPLIFIED_PAULI, ALT_QUBIT, MULTI_ANCILLA, QUTRIT)


class UnrecoverableExponentError(ZeroDivisionError):
    """The ancilla normalization Tr[(I x meas) W] vanished"""


@dataclass(frozen=True)
class MitigationPlan:
    """
    Complete recipe for one protocol variant.

    joint_jumps are the engineered jumps only; the experimental noise the plan
    was built for is kept in system_noise (amplitudes) and noise.
    """

    variant: str
    system_layout: Tuple[int, ...]
    ancilla_layout: Tuple[int, ...]
    joint_jumps: Tuple[TimeOperator, ...]
    a: float
    measurement: Operator
    initial_ancilla: Operator
    system_noise: Tuple[TimeOperator, ...] = ()
    delta: float = 0.0
    noise: Optional[NoiseModel] = None
    decay: Optional[Callable[[float], float]] = None
    ancilla_groups: Tuple[Tuple[int, ...], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.variant not in Variant.ALL:
            raise ValueError(f"Unknown plan variant: {self.variant}")
        if self.a < 0:
            raise ValueError(f"Decay constant must be non-negative, got {self.a}")
        for jump in self.joint_jumps:
            if isinstance(jump, Operator) and jump.layout != self.joint_layout:
                raise ValueError(
                    f"Joint jump layout {list(jump.layout)} does not match {list(self.joint_layout)}"
                )

    @property
    def joint_layout(self) -> Tuple[int, ...]:
        return self.system_layout + self.ancilla_layout

    @property
    def n_ancillas(self) -> int:
        return len(self.ancilla_layout)

    @property
    def time_dependent(self) -> bool:
        return self.decay is not None

    def decay_integral(self, t: float) -> float:
        """int_0^t a(s) ds"""
        if self.decay is None:
            return self.a * t
        value, _ = quad(self.decay, 0.0, t, limit=200)
        return value

    def exponent(self, t: float, include_ancilla_correction: bool = True) -> float:
        """2 int a + 2 Delta t; without the correction only the system part"""
        base = 2.0 * self.decay_integral(t)
        if include_ancilla_correction:
            base += 2.0 * self.delta * t
        return base

    def prefactor(self, t: float, include_ancilla_correction: bool = True) -> float:
        return math.exp(self.exponent(t, include_ancilla_correction))

    def joint_initial_state(self, rho: Union[Operator, DensityMatrix]) -> DensityMatrix:
        """rho (x) initial ancilla state"""
        rho = as_operator(rho)
        if rho.layout != self.system_layout:
            raise ValueError(
                f"State layout {list(rho.layout)} does not match plan system layout "
                f"{list(self.system_layout)}"
            )
        return DensityMatrix(kron(rho, self.initial_ancilla), DensityMatrix.JOINT)

    def joint_observable(self, observable: Operator) -> Operator:
        """A (x) measurement operator"""
        if observable.layout != self.system_layout:
            raise ValueError(
                f"Observable layout {list(observable.layout)} does not match plan system layout "
                f"{list(self.system_layout)}"
            )
        return kron(observable, self.measurement)

    def summary(self) -> str:
        return f"{self.variant}: a={self.a:.6g}, delta={self.delta:.6g}, jumps={len(self.joint_jumps)}"

    def to_dict(self) -> dict:
        """JSON-shaped description; time-dependent jumps are listed by count only"""
        jumps = [
            {"layout": list(jump.layout), "matrix": encode_matrix(jump.data)}
            for jump in self.joint_jumps if isinstance(jump, Operator)
        ]
        data = {
            "variant": self.variant,
            "a": self.a,
            "delta": self.delta,
            "system_layout": list(self.system_layout),
            "ancilla_layout": list(self.ancilla_layout),
            "measurement": encode_matrix(self.measurement.data),
            "initial_ancilla": encode_matrix(self.initial_ancilla.data),
            "joint_jumps": jumps,
            "time_dependent": self.time_dependent,
        }
        if self.ancilla_groups:
            data["ancilla_groups"] = [list(group) for group in self.ancilla_groups]
        return data


def _qubit_sqrt_s(amplitudes: Sequence[Operator], layout: Tuple[int, ...],
                  factor: float = 1.0) -> Tuple[float, Optional[Operator]]:
    """a and sqrt(factor * S); the root is None when S vanishes"""
    if not amplitudes:
        return 0.0, None
    total = jump_sum(amplitudes, layout)
    a = hermitian_lambda_max(total)
    s = a * identity(layout) - total
    if s.scale() <= SIMPLIFIED_RTOL * max(a, np.finfo(float).tiny):
        return a, None
    return a, psd_sqrt(factor * s)


def _check_noise(noise: NoiseModel, ancilla_dim: int) -> None:
    if noise.ancilla_jumps and noise.ancilla_dim != ancilla_dim:
        raise ValueError(
            f"Noise declares a {noise.ancilla_dim}-level ancilla, plan needs {ancilla_dim}"
        )


def build_single_qubit_plan(noise: NoiseModel) -> MitigationPlan:
    """
    Qubit-ancilla plan with jumps L (x) sz, sqrt(S) (x) sz and sqrt(S) (x) I.

    Downgrades to simplified-pauli when S = aI - sum L^dag L vanishes.
    """
    _check_noise(noise, 2)
    layout = noise.system_layout
    amplitudes = noise.system_amplitudes()
    a, root = _qubit_sqrt_s(amplitudes, layout)

    jumps = [kron(l, sigma_z()) for l in amplitudes]
    variant = Variant.SIMPLIFIED_PAULI
    if root is not None:
        jumps += [kron(root, sigma_z()), kron(root, identity((2,)))]
        variant = Variant.SINGLE_QUBIT

    return MitigationPlan(
        variant=variant,
        system_layout=layout,
        ancilla_layout=(2,),
        joint_jumps=tuple(jumps),
        a=a,
        measurement=sigma_x(),
        initial_ancilla=plus_state(),
        system_noise=tuple(amplitudes),
        noise=noise,
    )


def build_alt_qubit_plan(noise: NoiseModel) -> MitigationPlan:
    """Qubit-ancilla plan with projector jumps sqrt(2S) (x) |0><0| and sqrt(2S) (x) |1><1|"""
    _check_noise(noise, 2)
    layout = noise.system_layout
    amplitudes = noise.system_amplitudes()
    a, root = _qubit_sqrt_s(amplitudes, layout, factor=2.0)

    jumps = [kron(l, sigma_z()) for l in amplitudes]
    if root is not None:
        jumps += [kron(root, ketbra(0, 0, 2)), kron(root, ketbra(1, 1, 2))]

    return MitigationPlan(
        variant=Variant.ALT_QUBIT,
        system_layout=layout,
        ancilla_layout=(2,),
        joint_jumps=tuple(jumps),
        a=a,
        measurement=sigma_x(),
        initial_ancilla=plus_state(),
        system_noise=tuple(amplitudes),
        noise=noise,
    )


def qutrit_sigma_z() -> Operator:
    return Operator(np.diag([1.0, -1.0, 0.0]))


def qutrit_sigma_x() -> Operator:
    return ketbra(0, 1, 3) + ketbra(1, 0, 3)


def qutrit_chi_state() -> Operator:
    return pure_state([1.0, 1.0, 0.0])


def build_qutrit_plan(noise: NoiseModel) -> MitigationPlan:
    """
    Three-level ancilla plan.

    Levels 0 and 1 carry the coherence, level 2 absorbs the sqrt(2S) jumps.
    """
    _check_noise(noise, 3)
    layout = noise.system_layout
    amplitudes = noise.system_amplitudes()
    a, root = _qubit_sqrt_s(amplitudes, layout, factor=2.0)

    jumps = [kron(l, qutrit_sigma_z()) for l in amplitudes]
    if root is not None:
        jumps += [kron(root, ketbra(2, 0, 3)), kron(root, ketbra(2, 1, 3))]

    return MitigationPlan(
        variant=Variant.QUTRIT,
        system_layout=layout,
        ancilla_layout=(3,),
        joint_jumps=tuple(jumps),
        a=a,
        measurement=qutrit_sigma_x(),
        initial_ancilla=qutrit_chi_state(),
        system_noise=tuple(amplitudes),
        noise=noise,
    )


def _ancilla_groups(n_sites: int, site_map: Optional[Dict[int, int]]) -> List[Tuple[int, ...]]:
    if site_map is None:
        return [(site,) for site in range(n_sites)]
    missing = [site for site in range(n_sites) if site not in site_map]
    if missing:
        raise ValueError(f"Site map does not assign sites {missing}")
    labels = sorted(set(site_map.values()))
    return [tuple(sorted(s for s in range(n_sites) if site_map[s] == label)) for label in labels]


def build_multi_ancilla_plan(noise: NoiseModel, site_map: Optional[Dict[int, int]] = None) -> MitigationPlan:
    """
    One qubit ancilla per group of system sites.

    Args:
        noise: Noise whose jumps each act inside a single group
        site_map: System site -> ancilla label; default one ancilla per site

    Raises:
        ValueError: a jump spans several groups
    """
    _check_noise(noise, 2)
    if noise.correlated:
        raise ValueError("Correlated noise is supported for single-ancilla plans only")
    layout = noise.system_layout
    groups = _ancilla_groups(len(layout), site_map)
    n_anc = len(groups)
    anc_layout = (2,) * n_anc
    group_of = {site: index for index, group in enumerate(groups) for site in group}

    per_group: List[List[Operator]] = [[] for _ in groups]
    for jump in noise.system_jumps:
        if jump.rate == 0:
            continue
        support = jump.sites or operator_support(jump.operator)
        owners = {group_of[site] for site in support}
        if len(owners) > 1:
            raise ValueError(
                f"Jump '{jump.label}' on sites {list(support)} spans several ancilla groups"
            )
        owner = owners.pop() if owners else 0
        per_group[owner].append(jump.amplitude())

    joint_layout = layout + anc_layout
    anc_identity = identity(anc_layout)

    def on_ancilla(system_op: Operator, local: Operator, ancilla: int) -> Operator:
        return kron(system_op, embed_local(local, ancilla, anc_layout)).with_layout(joint_layout)

    jumps: List[Operator] = []
    a_total = 0.0
    for index, amplitudes in enumerate(per_group):
        a_local, root = _qubit_sqrt_s(amplitudes, layout)
        a_total += a_local
        jumps += [on_ancilla(l, sigma_z(), index) for l in amplitudes]
        if root is not None:
            jumps.append(on_ancilla(root, sigma_z(), index))
            jumps.append(kron(root, anc_identity).with_layout(joint_layout))

    return MitigationPlan(
        variant=Variant.MULTI_ANCILLA,
        system_layout=layout,
        ancilla_layout=anc_layout,
        joint_jumps=tuple(jumps),
        a=a_total,
        measurement=tensor_power(sigma_x(), n_anc).with_layout(anc_layout),
        initial_ancilla=tensor_power(plus_state(), n_anc).with_layout(anc_layout),
        system_noise=tuple(noise.system_amplitudes()),
        noise=noise,
        ancilla_groups=tuple(groups),
    )


def build_time_dependent_plan(jump_fns: Sequence[Callable[[float], Operator]],
                              layout: Sequence[int]) -> MitigationPlan:
    """
    Single-qubit plan for noise L_k(t) that changes in time.

    Args:
        jump_fns: t -> sqrt(gamma_k(t)) L_k(t) on the system layout
        layout: System layout

    Returns:
        Plan with a(t) = lambda_max(sum L^dag(t) L(t)); the prefactor uses its integral
    """
    layout = tuple(layout)
    jump_fns = tuple(jump_fns)

    @lru_cache(maxsize=64)
    def decomposition(t: float) -> Tuple[float, Optional[Operator]]:
        amplitudes = [fn(t) for fn in jump_fns]
        return _qubit_sqrt_s(amplitudes, layout)

    def decay(t: float) -> float:
        return decomposition(float(t))[0]

    def root_term(ancilla: Operator) -> Callable[[float], Operator]:
        def term(t: float) -> Operator:
            _, root = decomposition(float(t))
            if root is None:
                return Operator(np.zeros((math.prod(layout) * 2,) * 2), layout + (2,))
            return kron(root, ancilla)
        return term

    def correlated_term(fn: Callable[[float], Operator]) -> Callable[[float], Operator]:
        return lambda t: kron(fn(t), sigma_z())

    jumps = [correlated_term(fn) for fn in jump_fns]
    jumps += [root_term(sigma_z()), root_term(identity((2,)))]

    return MitigationPlan(
        variant=Variant.SINGLE_QUBIT,
        system_layout=layout,
        ancilla_layout=(2,),
        joint_jumps=tuple(jumps),
        a=decay(0.0),
        measurement=sigma_x(),
        initial_ancilla=plus_state(),
        system_noise=jump_fns,
        decay=decay,
    )


def build_plan(noise: NoiseModel, variant: str = Variant.SINGLE_QUBIT,
               site_map: Optional[Dict[int, int]] = None) -> MitigationPlan:
    """Dispatch on the variant name (simplified-pauli builds the single-qubit plan)"""
    if variant in (Variant.SINGLE_QUBIT, Variant.SIMPLIFIED_PAULI):
        plan = build_single_qubit_plan(noise)
        if variant == Variant.SIMPLIFIED_PAULI and plan.variant != Variant.SIMPLIFIED_PAULI:
            raise ValueError("Noise is not Pauli-like: S = aI - sum L^dag L does not vanish")
        return plan
    if variant == Variant.ALT_QUBIT:
        return build_alt_qubit_plan(noise)
    if variant == Variant.MULTI_ANCILLA:
        return build_multi_ancilla_plan(noise, site_map)
    if variant == Variant.QUTRIT:
        return build_qutrit_plan(noise)
    raise ValueError(f"Unknown plan variant: {variant}")


def _lift(term: TimeOperator, ancilla_layout: Tuple[int, ...], joint_layout: Tuple[int, ...]) -> TimeOperator:
    anc_identity = identity(ancilla_layout)
    if isinstance(term, Operator):
        return kron(term, anc_identity).with_layout(joint_layout)
    return lambda t: kron(term(t), anc_identity).with_layout(joint_layout)


def noisy_lindbladian(hamiltonian: TimeOperator, noise: NoiseModel) -> Lindbladian:
    """Unmitigated system dynamics"""
    return Lindbladian(hamiltonian, noise.system_amplitudes(), noise.system_layout)


def joint_lindbladian(hamiltonian: TimeOperator, plan: MitigationPlan,
                      noise: Optional[NoiseModel] = None) -> Lindbladian:
    """
    Experimental noise plus engineered dissipation on system (x) ancillas.

    Args:
        hamiltonian: System Hamiltonian (static or t -> operator)
        plan: Mitigation plan
        noise: Noise actually present; defaults to the noise the plan was built for

    Returns:
        Lindbladian on the joint layout
    """
    joint = plan.joint_layout
    anc = plan.ancilla_layout
    sys_dim = math.prod(plan.system_layout)

    if noise is None:
        experimental = list(plan.system_noise)
        ancilla_jumps, correlated = [], []
        if plan.noise is not None:
            ancilla_jumps, correlated = plan.noise.ancilla_jumps, plan.noise.correlated
    else:
        if noise.system_layout != plan.system_layout:
            raise ValueError("Noise model and plan disagree on the system layout")
        experimental = noise.system_amplitudes()
        ancilla_jumps, correlated = noise.ancilla_jumps, noise.correlated

    jumps: List[TimeOperator] = [_lift(l, anc, joint) for l in experimental]
    jumps += list(plan.joint_jumps)

    for jump in ancilla_jumps:
        if jump.rate == 0:
            continue
        if jump.operator.dim != anc[0]:
            raise ValueError(
                f"Ancilla jump of dimension {jump.operator.dim} does not fit a {anc[0]}-level ancilla"
            )
        for index in range(len(anc)):
            local = embed_local(jump.amplitude(), index, anc)
            jumps.append(kron(identity(plan.system_layout), local).with_layout(joint))

    if correlated and plan.n_ancillas != 1:
        raise ValueError("Correlated noise is supported for single-ancilla plans only")
    for jump in correlated:
        if jump.rate == 0:
            continue
        system_op = jump.system_operator(plan.system_layout)
        jumps.append(math.sqrt(jump.rate) * kron(system_op, jump.ancilla_operator()))

    if isinstance(hamiltonian, Operator) and hamiltonian.dim != sys_dim:
        raise ValueError("Hamiltonian dimension does not match the plan's system")
    lifted_h = None if hamiltonian is None else _lift(hamiltonian, anc, joint)
    return Lindbladian(lifted_h, jumps, joint)


def _real_part(value: complex, scale: float) -> float:
    if abs(value.imag) > IMAG_RTOL * max(1.0, scale):
        print(f"⚠ Discarding imaginary residue {value.imag:.3e} on a mitigated value")
    return float(value.real)


def _check_joint(w: Operator, plan: MitigationPlan) -> None:
    if w.layout != plan.joint_layout:
        raise ValueError(
            f"Joint state layout {list(w.layout)} does not match plan layout {list(plan.joint_layout)}"
        )


def raw_expectation(w: Union[Operator, DensityMatrix], observable: Operator, plan: MitigationPlan) -> complex:
    """Tr[(A (x) meas) W]"""
    w = as_operator(w)
    _check_joint(w, plan)
    return plan.joint_observable(observable).expect(w)


def mitigated_expectation(
    w: Union[Operator, DensityMatrix],
    observable: Operator,
    plan: MitigationPlan,
    t: float,
    exponent: Optional[float] = None,
    include_ancilla_correction: bool = True
) -> float:
    """
    e^{exponent} Tr[(A (x) meas) W(t)].

    Args:
        exponent: Overrides the plan's 2(a + Delta)t, e.g. an integral from evolve_with_exponent
        include_ancilla_correction: False drops the 2 Delta t term
    """
    if exponent is None:
        exponent = plan.exponent(t, include_ancilla_correction)
    raw = raw_expectation(w, observable, plan)
    value = math.exp(exponent) * raw
    return _real_part(value, abs(value))


def ratio_expectation(w: Union[Operator, DensityMatrix], observable: Operator, plan: MitigationPlan) -> float:
    """
    Tr[(A (x) meas) W] / Tr[(I (x) meas) W]; needs neither a nor Delta.

    Raises:
        UnrecoverableExponentError: the denominator vanished
    """
    numerator = raw_expectation(w, observable, plan)
    denominator = raw_expectation(w, identity(plan.system_layout), plan)
    if abs(denominator) <= RATIO_FLOOR:
        raise UnrecoverableExponentError(
            f"Ancilla normalization {abs(denominator):.3e} is below {RATIO_FLOOR:.0e}"
        )
    value = numerator / denominator
    return _real_part(value, abs(value))


def estimate_decay_rate(w: Union[Operator, DensityMatrix], plan: MitigationPlan, t: float) -> float:
    """a + Delta read off the normalization identity: -log Tr[(I (x) meas) W] / 2t"""
    if t <= 0:
        raise ValueError("Decay-rate estimation needs t > 0")
    norm = raw_expectation(w, identity(plan.system_layout), plan).real
    if norm <= RATIO_FLOOR:
        raise UnrecoverableExponentError(f"Ancilla normalization {norm:.3e} is not positive")
    return -math.log(norm) / (2.0 * t)


def with_delta(plan: MitigationPlan, delta: float) -> MitigationPlan:
    return replace(plan, delta=float(delta))
