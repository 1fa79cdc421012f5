"""
MitLindblad Noise Model
System, ancilla and correlated system-ancilla jump operators with a JSON codec
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .operators import (
    Operator,
    embed_local,
    embed_string,
    hermitian_lambda_max,
    jump_sum,
    local_operator,
)


CORRELATED_KINDS = ("sigma_plus", "sigma_minus", "sigma_z")

OperatorSpec = Union[str, Operator]


def encode_matrix(matrix: np.ndarray) -> List[List[List[float]]]:
    """Nested [re, im] pairs, row by row"""
    return [[[float(z.real), float(z.imag)] for z in row] for row in np.asarray(matrix)]


def decode_matrix(value) -> np.ndarray:
    """Inverse of encode_matrix; plain real entries are accepted too"""
    array = np.asarray(value, dtype=float)
    if array.ndim == 3 and array.shape[-1] == 2:
        return array[..., 0] + 1j * array[..., 1]
    if array.ndim == 2:
        return array.astype(complex)
    raise ValueError(f"Cannot decode matrix of shape {array.shape}; expected rows of [re, im] pairs")


def _resolve_local(spec: OperatorSpec) -> Tuple[Operator, str]:
    if isinstance(spec, Operator):
        return spec, "custom"
    return local_operator(spec), spec


def operator_support(op: Operator, atol: float = 1e-12) -> Tuple[int, ...]:
    """Factors on which an operator acts nontrivially"""
    layout = op.layout
    n = len(layout)
    if n == 1:
        return (0,)
    tensor = op.data.reshape(layout + layout)
    support = []
    for k, d in enumerate(layout):
        reduced = np.trace(tensor, axis1=k, axis2=n + k) / d
        expanded = np.expand_dims(reduced, axis=(k, n + k))
        eye_shape = [1] * (2 * n)
        eye_shape[k] = d
        eye_shape[n + k] = d
        rebuilt = expanded * np.eye(d).reshape(eye_shape)
        if not np.allclose(rebuilt, tensor, rtol=0.0, atol=atol):
            support.append(k)
    return tuple(support)


@dataclass(frozen=True)
class SystemJump:
    """Experimental noise channel: rate times D[operator] on the system"""

    operator: Operator
    rate: float
    sites: Tuple[int, ...]
    label: str = "custom"
    local: Optional[Operator] = None

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"Jump rate must be non-negative, got {self.rate}")

    @classmethod
    def on_site(cls, spec: OperatorSpec, site: int, rate: float,
                layout: Sequence[int]) -> "SystemJump":
        """Local jump on one site"""
        op, label = _resolve_local(spec)
        return cls(embed_local(op, site, layout), float(rate), (site,), label, op)

    @classmethod
    def from_operator(cls, op: Operator, rate: float, label: str = "custom") -> "SystemJump":
        """Jump given on the full system layout; support is inferred"""
        return cls(op, float(rate), operator_support(op), label)

    def amplitude(self) -> Operator:
        """sqrt(rate) * L"""
        return math.sqrt(self.rate) * self.operator

    def to_dict(self) -> dict:
        if self.local is not None and len(self.sites) == 1:
            operator = self.label if self.label != "custom" else encode_matrix(self.local.data)
            return {"operator": operator, "site": self.sites[0], "rate": self.rate}
        return {"operator": encode_matrix(self.operator.data), "rate": self.rate, "label": self.label}


@dataclass(frozen=True)
class AncillaJump:
    """Ancilla noise Gamma * D[I (x) M]; M lives on a single ancilla"""

    operator: Operator
    rate: float
    label: str = "custom"

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"Ancilla rate must be non-negative, got {self.rate}")

    @classmethod
    def named(cls, spec: OperatorSpec, rate: float) -> "AncillaJump":
        op, label = _resolve_local(spec)
        return cls(op, float(rate), label)

    def amplitude(self) -> Operator:
        return math.sqrt(self.rate) * self.operator

    def to_dict(self) -> dict:
        operator = self.label if self.label != "custom" else encode_matrix(self.operator.data)
        return {"operator": operator, "rate": self.rate}


@dataclass(frozen=True)
class CorrelatedJump:
    """Correlated system-ancilla noise Gamma * D[P (x) sigma], P a Pauli string"""

    pauli: Tuple[str, ...]
    kind: str
    rate: float

    def __post_init__(self):
        if self.kind not in CORRELATED_KINDS:
            raise ValueError(f"Unsupported correlated noise kind: {self.kind}")
        if self.rate < 0:
            raise ValueError(f"Correlated rate must be non-negative, got {self.rate}")
        for name in self.pauli:
            if name not in ("identity", "sigma_x", "sigma_y", "sigma_z"):
                raise ValueError(f"Correlated noise needs a Pauli string, got factor {name}")

    def system_operator(self, layout: Sequence[int]) -> Operator:
        if len(self.pauli) != len(layout):
            raise ValueError(
                f"Pauli string has {len(self.pauli)} factors, system has {len(layout)}"
            )
        return embed_string([local_operator(name) for name in self.pauli], layout)

    def ancilla_operator(self) -> Operator:
        return local_operator(self.kind)

    def to_dict(self) -> dict:
        return {"pauli": list(self.pauli), "kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class NoiseModel:
    """Everything that acts on the joint state besides the engineered dissipation"""

    system_layout: Tuple[int, ...]
    system_jumps: Tuple[SystemJump, ...] = ()
    ancilla_dim: int = 2
    ancilla_jumps: Tuple[AncillaJump, ...] = ()
    correlated: Tuple[CorrelatedJump, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "system_layout", tuple(self.system_layout))
        object.__setattr__(self, "system_jumps", tuple(self.system_jumps))
        object.__setattr__(self, "ancilla_jumps", tuple(self.ancilla_jumps))
        object.__setattr__(self, "correlated", tuple(self.correlated))
        if self.ancilla_dim not in (2, 3):
            raise ValueError(f"Ancilla dimension must be 2 or 3, got {self.ancilla_dim}")
        for jump in self.system_jumps:
            if jump.operator.layout != self.system_layout:
                raise ValueError(
                    f"System jump layout {list(jump.operator.layout)} does not match "
                    f"{list(self.system_layout)}"
                )
        for jump in self.ancilla_jumps:
            if jump.operator.dim != self.ancilla_dim:
                raise ValueError(
                    f"Ancilla jump of dimension {jump.operator.dim} on a "
                    f"{self.ancilla_dim}-level ancilla"
                )
        if self.correlated and self.ancilla_dim != 2:
            raise ValueError("Correlated noise is defined for qubit ancillas only")
        for jump in self.correlated:
            jump.system_operator(self.system_layout)

    @classmethod
    def uniform_local(
        cls,
        n_qubits: int,
        rates: Dict[str, float],
        ancilla_rates: Optional[Dict[str, float]] = None,
        ancilla_dim: int = 2
    ) -> "NoiseModel":
        """
        Same local channels on every qubit.

        Args:
            n_qubits: Number of system qubits
            rates: Operator name -> rate, applied to each site
            ancilla_rates: Operator name -> rate on the ancilla
        """
        layout = (2,) * n_qubits
        jumps = [
            SystemJump.on_site(name, site, rate, layout)
            for site in range(n_qubits)
            for name, rate in rates.items()
            if rate > 0
        ]
        ancilla = [AncillaJump.named(name, rate) for name, rate in (ancilla_rates or {}).items() if rate > 0]
        return cls(layout, tuple(jumps), ancilla_dim, tuple(ancilla))

    @property
    def system_dim(self) -> int:
        return math.prod(self.system_layout)

    def system_amplitudes(self) -> List[Operator]:
        return [jump.amplitude() for jump in self.system_jumps if jump.rate > 0]

    def jump_sum(self) -> Operator:
        """sum_k gamma_k L_k^dag L_k"""
        return jump_sum(self.system_amplitudes(), self.system_layout)

    def decay_constant(self) -> float:
        if not self.system_jumps:
            return 0.0
        return hermitian_lambda_max(self.jump_sum())

    def without_ancilla_noise(self) -> "NoiseModel":
        return replace(self, ancilla_jumps=(), correlated=())

    def with_system_rates(self, rates: Sequence[float]) -> "NoiseModel":
        """Same channels, new rates (one per system jump)"""
        if len(rates) != len(self.system_jumps):
            raise ValueError(f"Expected {len(self.system_jumps)} rates, got {len(rates)}")
        jumps = tuple(replace(jump, rate=float(rate)) for jump, rate in zip(self.system_jumps, rates))
        return replace(self, system_jumps=jumps)

    def scale_system_rates(self, factor: float) -> "NoiseModel":
        return self.with_system_rates([jump.rate * factor for jump in self.system_jumps])

    def to_dict(self) -> dict:
        return {
            "system": {
                "layout": list(self.system_layout),
                "jumps": [jump.to_dict() for jump in self.system_jumps],
            },
            "ancilla": {
                "dimension": self.ancilla_dim,
                "jumps": [jump.to_dict() for jump in self.ancilla_jumps],
            },
            "correlated": [jump.to_dict() for jump in self.correlated],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseModel":
        """
        Parse a noise description.

        The system block gives either "qubits": n or an explicit "layout".
        Operators are names understood by local_operator or matrices of
        [re, im] pairs; a matrix without "site" spans the whole system.

        Raises:
            ValueError: malformed description
        """
        if not isinstance(data, dict) or "system" not in data:
            raise ValueError("Noise description needs a 'system' block")
        system = data["system"]
        if "layout" in system:
            layout = tuple(int(d) for d in system["layout"])
        elif "qubits" in system:
            layout = (2,) * int(system["qubits"])
        else:
            raise ValueError("System block needs 'qubits' or 'layout'")

        jumps = []
        for entry in system.get("jumps", []):
            rate = float(entry["rate"])
            spec = entry["operator"]
            local = spec if isinstance(spec, str) else Operator(decode_matrix(spec))
            if "site" in entry:
                jumps.append(SystemJump.on_site(local, int(entry["site"]), rate, layout))
            elif isinstance(local, str):
                raise ValueError(f"Named operator {local} needs a 'site'")
            else:
                jumps.append(SystemJump.from_operator(local.with_layout(layout), rate,
                                                      entry.get("label", "custom")))

        ancilla = data.get("ancilla", {})
        ancilla_dim = int(ancilla.get("dimension", 2))
        ancilla_jumps = []
        for entry in ancilla.get("jumps", []):
            spec = entry["operator"]
            local = spec if isinstance(spec, str) else Operator(decode_matrix(spec))
            ancilla_jumps.append(AncillaJump.named(local, float(entry["rate"])))

        correlated = [
            CorrelatedJump(tuple(entry["pauli"]), entry["kind"], float(entry["rate"]))
            for entry in data.get("correlated", [])
        ]
        return cls(layout, tuple(jumps), ancilla_dim, tuple(ancilla_jumps), tuple(correlated))

    def __str__(self) -> str:
        return (f"NoiseModel({len(self.system_jumps)} system, {len(self.ancilla_jumps)} ancilla, "
                f"{len(self.correlated)} correlated jumps on {list(self.system_layout)})")
