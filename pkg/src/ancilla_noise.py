"""
MitLindblad Ancilla Noise
Post-processing corrections for noise on the ancilla and on system-ancilla pairs
"""

import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .lindblad import IntegratorConfig, evolve, integrate, ancilla_block
from .mitigation import (
    MitigationPlan,
    Variant,
    build_plan,
    build_single_qubit_plan,
    joint_lindbladian,
)
from .noise import AncillaJump, NoiseModel
from .operators import (
    Operator,
    as_operator,
    dissipator_apply,
    identity,
    kron,
    local_operator,
    random_hermitian,
    spectral_norm,
)


# Residual of the proportionality fit, relative to the jump strength
NU_RESIDUAL = 1e-10

# Fixed seed for the random probe states used to classify noise
PROBE_SEED = 20240917
PROBE_TRIALS = 3


class UncorrectableNoiseError(ValueError):
    """Ancilla noise whose effect on the coherence block is not a pure decay"""


def coherence_nu(jumps: Sequence[Operator], system_layout: Sequence[int], ancilla_dim: int) -> Optional[float]:
    """
    Proportionality constant nu in <0|sum_k D[J_k](W)|1> = -nu W_01.

    Probed on random joint states whose coherence blocks satisfy W_01 = W_10 = B
    with B Hermitian, which is the form the protocol keeps them in.

    Returns:
        nu, or None when the contribution is not proportional to W_01
    """
    system_layout = tuple(system_layout)
    layout = system_layout + (ancilla_dim,)
    ds = math.prod(system_layout)
    dim = ds * ancilla_dim
    for jump in jumps:
        if jump.layout != layout:
            raise ValueError(f"Jump layout {list(jump.layout)} does not match {list(layout)}")

    strength = max(1.0, sum(spectral_norm(j) ** 2 for j in jumps))
    rng = np.random.default_rng(PROBE_SEED)
    estimates = []
    for _ in range(PROBE_TRIALS):
        w = random_hermitian(dim, rng).data.copy()
        b = random_hermitian(ds, rng).data
        blocks = w.reshape(ds, ancilla_dim, ds, ancilla_dim)
        blocks[:, 0, :, 1] = b
        blocks[:, 1, :, 0] = b
        state = Operator(w, layout)

        total = np.zeros((dim, dim), dtype=complex)
        for jump in jumps:
            total += dissipator_apply(jump, state).data
        out = total.reshape(ds, ancilla_dim, ds, ancilla_dim)
        c01, c10 = out[:, 0, :, 1], out[:, 1, :, 0]

        nu = -float(np.vdot(b, c01).real / np.vdot(b, b).real)
        tolerance = NU_RESIDUAL * strength * float(np.abs(b).max())
        residual = max(np.abs(c01 + nu * b).max(), np.abs(c10 + nu * b).max())
        if residual > tolerance:
            return None
        estimates.append(nu)

    if max(estimates) - min(estimates) > NU_RESIDUAL * strength:
        return None
    nu = float(np.mean(estimates))
    if nu < -NU_RESIDUAL * strength:
        return None
    return max(nu, 0.0)


def ancilla_nu(operator: Operator) -> Optional[float]:
    """nu for ancilla noise D[I (x) M]; M is 2x2 or 3x3"""
    if operator.dim not in (2, 3):
        raise ValueError(f"Ancilla operator must be 2x2 or 3x3, got dimension {operator.dim}")
    system = identity((2,))
    return coherence_nu([kron(system, operator)], (2,), operator.dim)


def ancilla_delta(ancilla_jumps: Iterable[AncillaJump], n_ancillas: int = 1) -> float:
    """
    Delta = 1/2 sum_m nu_m Gamma_m, once per ancilla.

    Raises:
        UncorrectableNoiseError: a jump is not proportional on the coherence block
    """
    total = 0.0
    for jump in ancilla_jumps:
        if jump.rate == 0:
            continue
        nu = ancilla_nu(jump.operator)
        if nu is None:
            raise UncorrectableNoiseError(
                f"Ancilla noise '{jump.label}' does not act as a pure decay on the coherence"
            )
        total += nu * jump.rate
    return 0.5 * total * n_ancillas


def effective_exponent(plan: MitigationPlan, ancilla_jumps: Iterable[AncillaJump], t: float) -> float:
    """2 int_0^t a + sum_m nu_m Gamma_m t (per ancilla)"""
    delta = ancilla_delta(ancilla_jumps, plan.n_ancillas)
    return 2.0 * plan.decay_integral(t) + 2.0 * delta * t


def _require_pauli(p: Operator) -> None:
    eye = np.eye(p.dim)
    if not p.is_hermitian(1e-10) or not np.allclose(p.data @ p.data, eye, atol=1e-10):
        raise ValueError("Correlated noise compensation needs a Hermitian unitary system operator")


def correlated_noise_compensation(p: Operator, kind: str, rate: float = 1.0) -> Tuple[List[Operator], float]:
    """
    Extra engineered jumps and Delta for correlated noise rate * D[P (x) sigma].

    sigma_plus/sigma_minus decay the coherence directly; sigma_z needs an added
    D[P (x) I] at the same rate before the combined effect is a pure decay.

    Returns:
        (extra joint jumps as amplitudes, Delta contribution)
    """
    _require_pauli(p)
    if kind not in ("sigma_plus", "sigma_minus", "sigma_z"):
        raise ValueError(f"Unsupported correlated noise kind: {kind}")
    if rate < 0:
        raise ValueError("Correlated noise rate must be non-negative")

    correlated = kron(p, local_operator(kind))
    extra: List[Operator] = []
    if kind == "sigma_z":
        extra.append(kron(p, identity((2,))))

    nu = coherence_nu([correlated, *extra], p.layout, 2)
    if nu is None:
        raise UncorrectableNoiseError(f"Correlated {kind} noise is not correctable")
    return [math.sqrt(rate) * op for op in extra], 0.5 * nu * rate


def with_ancilla_noise(plan: MitigationPlan, noise: Optional[NoiseModel] = None) -> MitigationPlan:
    """
    Plan whose Delta (and extra jumps) absorb the ancilla and correlated noise.

    Raises:
        UncorrectableNoiseError: some ancilla noise cannot be undone in post-processing
    """
    noise = noise or plan.noise
    if noise is None:
        return plan
    delta = ancilla_delta(noise.ancilla_jumps, plan.n_ancillas)

    extra: List[Operator] = []
    if noise.correlated:
        if plan.n_ancillas != 1 or plan.ancilla_layout != (2,):
            raise ValueError("Correlated noise is supported for single qubit-ancilla plans only")
        for jump in noise.correlated:
            if jump.rate == 0:
                continue
            jumps, contribution = correlated_noise_compensation(
                jump.system_operator(plan.system_layout), jump.kind, jump.rate
            )
            extra += jumps
            delta += contribution

    return replace(plan, delta=delta, joint_jumps=plan.joint_jumps + tuple(extra))


def build_corrected_plan(noise: NoiseModel, variant: str = Variant.SINGLE_QUBIT,
                         site_map=None) -> MitigationPlan:
    """Build a plan and fold in every ancilla-side correction"""
    plan = with_ancilla_noise(build_plan(noise, variant, site_map), noise)
    print(f"✓ Plan {plan.summary()}")
    return plan


def ancilla_miscalibration_factor(nu: float, epsilon: float, t: float) -> float:
    """Multiplicative bias e^{nu eps t} when post-processing assumes rate Gamma + eps"""
    return math.exp(nu * epsilon * t)


@dataclass
class ResidualBlocks:
    """Coherence block <0|W|1> from the joint run and from the direct residual equation"""

    joint: Operator
    direct: Operator
    a_estimated: float

    def max_deviation(self) -> float:
        return float(np.abs(self.joint.data - self.direct.data).max())


def residual_dynamics(
    noise_true: NoiseModel,
    noise_estimated: NoiseModel,
    hamiltonian: Operator,
    rho0,
    t: float,
    cfg: Optional[IntegratorConfig] = None
) -> ResidualBlocks:
    """
    Coherence block when the plan is built from mis-estimated rates.

    The direct equation is dB/dt = -i[H, B] - sum_k eps_k D[L_k](B) - 2 a_est B
    with eps_k = estimated rate - true rate.

    Raises:
        ValueError: the two noise models do not share their jump operators
    """
    if len(noise_true.system_jumps) != len(noise_estimated.system_jumps):
        raise ValueError("True and estimated noise must list the same jumps")
    for true_jump, est_jump in zip(noise_true.system_jumps, noise_estimated.system_jumps):
        if not true_jump.operator.allclose(est_jump.operator, atol=1e-12):
            raise ValueError("True and estimated noise must share their jump operators")

    cfg = cfg or IntegratorConfig()
    rho0 = as_operator(rho0)
    plan = build_single_qubit_plan(noise_estimated.without_ancilla_noise())
    lindbladian = joint_lindbladian(hamiltonian, plan, noise_true.without_ancilla_noise())
    w = evolve(lindbladian, plan.joint_initial_state(rho0), t, cfg)
    joint = ancilla_block(w, 0, 1)

    h = hamiltonian.data
    a_est = plan.a
    terms = []
    for true_jump, est_jump in zip(noise_true.system_jumps, noise_estimated.system_jumps):
        eps = est_jump.rate - true_jump.rate
        if eps != 0:
            l = true_jump.operator.data
            terms.append((eps, l, l.conj().T, l.conj().T @ l))

    def rhs(_, b):
        out = -1j * (h @ b - b @ h) - 2.0 * a_est * b
        for eps, l, l_dag, ldl in terms:
            out -= eps * (l @ b @ l_dag - 0.5 * (ldl @ b + b @ ldl))
        return out

    scale = spectral_norm(hamiltonian) + a_est + sum(abs(eps) * spectral_norm(Operator(ldl))
                                                    for eps, _, _, ldl in terms)
    b = integrate(rhs, 0.5 * rho0.data, 0.0, t, cfg, rate_scale=scale)
    return ResidualBlocks(joint, Operator(b, rho0.layout), a_est)
