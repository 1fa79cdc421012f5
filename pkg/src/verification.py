"""
MitLindblad Protocol Verification
Random-instance checks of exact noise cancellation and plan equivalence
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .lindblad import IntegratorConfig, evolve_trajectory
from .mitigation import (
    MitigationPlan,
    build_alt_qubit_plan,
    build_multi_ancilla_plan,
    build_qutrit_plan,
    build_single_qubit_plan,
    joint_lindbladian,
    mitigated_expectation,
    ratio_expectation,
)
from .models import unitary_expectations
from .noise import NoiseModel, SystemJump
from .operators import Operator, random_density, random_hermitian, random_operator
from .workers import parallel_map


DEFAULT_TIMES = (0.5, 1.0, 2.0)


@dataclass
class ProtocolInstance:
    """Random Hamiltonian, noise, initial state and observable"""

    hamiltonian: Operator
    noise: NoiseModel
    rho0: Operator
    observable: Operator
    local: bool


def random_instance(
    n_qubits: int,
    rng: np.random.Generator,
    max_jumps: int = 3,
    max_h_norm: float = 5.0,
    max_rate: float = 0.5,
    local: bool = False
) -> ProtocolInstance:
    """
    Draw one instance.

    Args:
        local: Single-site jumps (so the multi-ancilla plan applies)
    """
    layout = (2,) * n_qubits
    dim = 2 ** n_qubits
    hamiltonian = random_hermitian(dim, rng, norm=rng.uniform(0.5, max_h_norm), layout=layout)
    n_jumps = int(rng.integers(1, max_jumps + 1))
    jumps = []
    for _ in range(n_jumps):
        rate = float(rng.uniform(0.05, max_rate))
        if local:
            site = int(rng.integers(n_qubits))
            jumps.append(SystemJump.on_site(random_operator(2, rng), site, rate, layout))
        else:
            jumps.append(SystemJump.from_operator(random_operator(dim, rng, layout), rate, "random"))
    noise = NoiseModel(layout, tuple(jumps))
    rho0 = random_density(dim, rng, layout).op
    observable = random_hermitian(dim, rng, norm=1.0, layout=layout)
    return ProtocolInstance(hamiltonian, noise, rho0, observable, local)


def mitigated_series(instance: ProtocolInstance, plan: MitigationPlan, times: Sequence[float],
                     cfg: Optional[IntegratorConfig] = None) -> List[float]:
    """Exact-trace mitigated expectation at each time"""
    states = evolve_trajectory(joint_lindbladian(instance.hamiltonian, plan),
                               plan.joint_initial_state(instance.rho0), times, cfg)
    return [mitigated_expectation(w, instance.observable, plan, t) for w, t in zip(states, times)]


@dataclass
class InstanceReport:
    index: int
    max_deviation: float
    ratio_deviation: float
    equivalence: dict = field(default_factory=dict)

    @property
    def max_equivalence(self) -> float:
        return max(self.equivalence.values(), default=0.0)


@dataclass
class VerificationReport:
    qubits: int
    trials: int
    seed: Optional[int]
    instances: List[InstanceReport] = field(default_factory=list)

    @property
    def max_deviation(self) -> float:
        return max((r.max_deviation for r in self.instances), default=0.0)

    @property
    def max_equivalence(self) -> float:
        return max((r.max_equivalence for r in self.instances), default=0.0)

    def passed(self, tolerance: float = 1e-5) -> bool:
        return self.max_deviation <= tolerance and self.max_equivalence <= tolerance

    def to_dict(self) -> dict:
        return {
            "qubits": self.qubits,
            "trials": self.trials,
            "seed": self.seed,
            "max_deviation": self.max_deviation,
            "max_equivalence": self.max_equivalence,
            "instances": [
                {
                    "index": r.index,
                    "max_deviation": r.max_deviation,
                    "ratio_deviation": r.ratio_deviation,
                    "equivalence": r.equivalence,
                }
                for r in self.instances
            ],
        }


def verify_instance(instance: ProtocolInstance, index: int = 0, times: Sequence[float] = DEFAULT_TIMES,
                    cfg: Optional[IntegratorConfig] = None, equivalence: bool = True) -> InstanceReport:
    """Deviation from the unitary oracle, and from the single-qubit plan for the other variants"""
    times = list(times)
    oracle = unitary_expectations(instance.hamiltonian, instance.rho0, instance.observable, times)

    plan = build_single_qubit_plan(instance.noise)
    states = evolve_trajectory(joint_lindbladian(instance.hamiltonian, plan),
                               plan.joint_initial_state(instance.rho0), times, cfg)
    reference = np.array([mitigated_expectation(w, instance.observable, plan, t)
                          for w, t in zip(states, times)])
    ratios = np.array([ratio_expectation(w, instance.observable, plan) for w in states])

    report = InstanceReport(
        index=index,
        max_deviation=float(np.abs(reference - oracle).max()),
        ratio_deviation=float(np.abs(ratios - reference).max()),
    )
    if equivalence:
        others = {
            "alt-qubit-projector": build_alt_qubit_plan(instance.noise),
            "qutrit": build_qutrit_plan(instance.noise),
        }
        if instance.local:
            others["multi-ancilla"] = build_multi_ancilla_plan(instance.noise)
        for name, other in others.items():
            values = np.array(mitigated_series(instance, other, times, cfg))
            report.equivalence[name] = float(np.abs(values - reference).max())
    return report


def run_protocol_suite(
    qubits: int,
    trials: int,
    seed: Optional[int] = None,
    times: Sequence[float] = DEFAULT_TIMES,
    cfg: Optional[IntegratorConfig] = None,
    threads: Optional[int] = None,
    equivalence: bool = True
) -> VerificationReport:
    """
    Exact-cancellation suite over random instances.

    Odd-numbered trials use single-site jumps so the multi-ancilla plan is covered.
    """
    if qubits < 1 or trials < 1:
        raise ValueError("Need at least one qubit and one trial")
    streams = np.random.SeedSequence(seed).spawn(trials)

    def task(index: int) -> InstanceReport:
        rng = np.random.default_rng(streams[index])
        instance = random_instance(qubits, rng, local=index % 2 == 1)
        return verify_instance(instance, index, times, cfg, equivalence)

    report = VerificationReport(qubits, trials, seed)
    report.instances = parallel_map(task, range(trials), threads)
    return report
