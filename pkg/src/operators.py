"""
MitLindblad Operator Core
Dense complex operators with an explicit tensor-factor layout
"""

import math
from typing import Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import linalg


# Relative tolerance for Hermiticity checks: max|A - A^dag| <= tol * max|A|
HERMITIAN_RTOL = 1e-12

# Eigenvalues above -PSD_CLAMP * scale are numerical noise and clamped to zero
PSD_CLAMP = 1e-10

# Eigenvalues below -PSD_REJECT * scale mean the input is not PSD
PSD_REJECT = 1e-6

Layout = Tuple[int, ...]


class Operator:
    """Dense complex square matrix that knows its tensor-factor layout"""

    __slots__ = ("_data", "_layout")
    __array_priority__ = 1000

    def __init__(self, data, layout: Optional[Sequence[int]] = None):
        """
        Create an operator.

        Args:
            data: Square matrix (anything numpy can turn into a 2D array)
            layout: Local dimensions of the tensor factors (default: one factor)
        """
        matrix = np.array(data, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"Operator data must be a square matrix, got shape {matrix.shape}")

        dim = matrix.shape[0]
        if layout is None:
            layout = (dim,)
        layout = tuple(int(d) for d in layout)
        if any(d < 1 for d in layout):
            raise ValueError(f"Layout entries must be positive, got {layout}")
        if math.prod(layout) != dim:
            raise ValueError(
                f"Layout {layout} has product {math.prod(layout)}, matrix dimension is {dim}"
            )

        matrix.setflags(write=False)
        self._data = matrix
        self._layout = layout

    @property
    def data(self) -> np.ndarray:
        """Read-only matrix"""
        return self._data

    @property
    def layout(self) -> Layout:
        return self._layout

    @property
    def dim(self) -> int:
        return self._data.shape[0]

    def dag(self) -> "Operator":
        """Hermitian conjugate"""
        return Operator(self._data.conj().T, self._layout)

    def trace(self) -> complex:
        return complex(np.trace(self._data))

    def scale(self) -> float:
        """Largest absolute entry, used as the reference for relative tolerances"""
        return float(np.abs(self._data).max()) if self.dim else 0.0

    def is_hermitian(self, rtol: float = HERMITIAN_RTOL) -> bool:
        """Check max|A - A^dag| <= rtol * max|A|"""
        deviation = float(np.abs(self._data - self._data.conj().T).max())
        return deviation <= rtol * max(self.scale(), np.finfo(float).tiny)

    def is_diagonal(self) -> bool:
        off = self._data - np.diag(np.diag(self._data))
        return not np.any(off)

    def expect(self, state: "Operator") -> complex:
        """Tr[self @ state]"""
        _check_same_layout(self, state)
        return complex(np.sum(self._data * state.data.T))

    def allclose(self, other: "Operator", atol: float = 1e-12) -> bool:
        if self._layout != other.layout:
            return False
        return bool(np.allclose(self._data, other.data, rtol=0.0, atol=atol))

    def with_layout(self, layout: Sequence[int]) -> "Operator":
        """Same matrix, different factorization of its dimension"""
        return Operator(self._data, layout)

    def __matmul__(self, other: "Operator") -> "Operator":
        _check_same_layout(self, other)
        return Operator(self._data @ other.data, self._layout)

    def __add__(self, other: "Operator") -> "Operator":
        _check_same_layout(self, other)
        return Operator(self._data + other.data, self._layout)

    def __sub__(self, other: "Operator") -> "Operator":
        _check_same_layout(self, other)
        return Operator(self._data - other.data, self._layout)

    def __neg__(self) -> "Operator":
        return Operator(-self._data, self._layout)

    def __mul__(self, scalar: Union[int, float, complex]) -> "Operator":
        if not np.isscalar(scalar):
            raise TypeError("Operators multiply with scalars only; use @ for products")
        return Operator(self._data * scalar, self._layout)

    __rmul__ = __mul__

    def __truediv__(self, scalar: Union[int, float, complex]) -> "Operator":
        return Operator(self._data / scalar, self._layout)

    def __repr__(self) -> str:
        return f"Operator(dim={self.dim}, layout={list(self._layout)})"


class DensityMatrix:
    """System (rho) or joint system-ancilla (W) state"""

    SYSTEM = "system"
    JOINT = "joint"

    def __init__(self, op: Operator, role: str = SYSTEM):
        if role not in (self.SYSTEM, self.JOINT):
            raise ValueError(f"Unknown density matrix role: {role}")
        self.op = op
        self.role = role

    @property
    def data(self) -> np.ndarray:
        return self.op.data

    @property
    def layout(self) -> Layout:
        return self.op.layout

    @property
    def dim(self) -> int:
        return self.op.dim

    def trace(self) -> complex:
        return self.op.trace()

    def min_eigenvalue(self) -> float:
        hermitian_part = 0.5 * (self.data + self.data.conj().T)
        return float(linalg.eigvalsh(hermitian_part)[0])

    def expect(self, observable: Operator) -> complex:
        return observable.expect(self.op)

    def check(self, trace_tol: float = 1e-9, hermitian_rtol: float = 1e-10,
              positivity_slack: float = 1e-8) -> None:
        """
        Validate trace, Hermiticity and positivity.

        Raises:
            ValueError: if any of the three conditions fails
        """
        trace = self.trace()
        if abs(trace - 1.0) > trace_tol:
            raise ValueError(f"Density matrix trace is {trace:.3e}, expected 1")
        if not self.op.is_hermitian(hermitian_rtol):
            raise ValueError("Density matrix is not Hermitian")
        smallest = self.min_eigenvalue()
        if smallest < -positivity_slack:
            raise ValueError(f"Density matrix has negative eigenvalue {smallest:.3e}")

    def __repr__(self) -> str:
        return f"DensityMatrix(role={self.role}, layout={list(self.layout)})"


def _check_same_layout(a: Operator, b: Operator) -> None:
    if a.layout != b.layout:
        raise ValueError(f"Layout mismatch: {list(a.layout)} vs {list(b.layout)}")


def as_operator(value: Union[Operator, DensityMatrix]) -> Operator:
    return value.op if isinstance(value, DensityMatrix) else value


# --- construction --------------------------------------------------------------

def identity(layout: Sequence[int]) -> Operator:
    layout = tuple(layout)
    return Operator(np.eye(math.prod(layout)), layout)


def zeros(layout: Sequence[int]) -> Operator:
    layout = tuple(layout)
    dim = math.prod(layout)
    return Operator(np.zeros((dim, dim)), layout)


def kron(a: Operator, b: Operator, *more: Operator) -> Operator:
    """Tensor product; the layout is the concatenation of the factor layouts"""
    result = Operator(np.kron(a.data, b.data), a.layout + b.layout)
    for op in more:
        result = Operator(np.kron(result.data, op.data), result.layout + op.layout)
    return result


def tensor_power(op: Operator, n: int) -> Operator:
    if n < 1:
        raise ValueError("Tensor power needs n >= 1")
    result = op
    for _ in range(n - 1):
        result = kron(result, op)
    return result


def embed_local(op: Operator, site: int, layout: Sequence[int]) -> Operator:
    """
    Place a local operator on one factor, identity elsewhere.

    Args:
        op: Local operator (dimension must equal layout[site])
        site: Factor index
        layout: Target layout

    Returns:
        Operator on the full layout
    """
    layout = tuple(layout)
    if not 0 <= site < len(layout):
        raise ValueError(f"Site {site} out of range for {len(layout)} factors")
    if op.dim != layout[site]:
        raise ValueError(f"Operator dimension {op.dim} does not match factor dimension {layout[site]}")

    left = math.prod(layout[:site])
    right = math.prod(layout[site + 1:])
    data = np.kron(np.kron(np.eye(left), op.data), np.eye(right))
    return Operator(data, layout)


def embed_string(local_ops: Sequence[Operator], layout: Sequence[int]) -> Operator:
    """Tensor product of one local operator per factor"""
    if len(local_ops) != len(layout):
        raise ValueError("Need exactly one local operator per layout factor")
    result = local_ops[0]
    for op in local_ops[1:]:
        result = kron(result, op)
    return result.with_layout(layout)


def ket(index: int, dim: int) -> np.ndarray:
    vec = np.zeros(dim, dtype=complex)
    vec[index] = 1.0
    return vec


def ketbra(i: int, j: int, dim: int) -> Operator:
    """|i><j| on a single factor"""
    data = np.zeros((dim, dim), dtype=complex)
    data[i, j] = 1.0
    return Operator(data)


def projector(i: int, dim: int = 2) -> Operator:
    return ketbra(i, i, dim)


def pure_state(vector: Sequence[complex], layout: Optional[Sequence[int]] = None) -> Operator:
    """|psi><psi| for a (normalized on the way in) state vector"""
    vec = np.asarray(vector, dtype=complex).ravel()
    norm = np.linalg.norm(vec)
    if norm == 0:
        raise ValueError("Zero state vector")
    vec = vec / norm
    return Operator(np.outer(vec, vec.conj()), layout)


# Single-qubit operators. Basis |0>, |1> with sigma_z |0> = |0>;
# sigma_minus = |0><1| so that sigma_minus^dag sigma_minus = |1><1|.

def sigma_x() -> Operator:
    return Operator([[0, 1], [1, 0]])


def sigma_y() -> Operator:
    return Operator([[0, -1j], [1j, 0]])


def sigma_z() -> Operator:
    return Operator([[1, 0], [0, -1]])


def sigma_minus() -> Operator:
    return Operator([[0, 1], [0, 0]])


def sigma_plus() -> Operator:
    return Operator([[0, 0], [1, 0]])


def plus_state() -> Operator:
    return pure_state([1, 1])


LOCAL_OPERATORS: Dict[str, Callable[[], Operator]] = {
    "identity": lambda: identity((2,)),
    "sigma_x": sigma_x,
    "sigma_y": sigma_y,
    "sigma_z": sigma_z,
    "sigma_minus": sigma_minus,
    "sigma_plus": sigma_plus,
    "projector_0": lambda: projector(0),
    "projector_1": lambda: projector(1),
}


def local_operator(name: str) -> Operator:
    """
    Look up a named local operator.

    Qubit names are the keys of LOCAL_OPERATORS; qutrit transitions are
    written "ketbra_<i><j>" with 0-based levels, e.g. "ketbra_02".
    """
    if name in LOCAL_OPERATORS:
        return LOCAL_OPERATORS[name]()
    if name.startswith("ketbra_") and len(name) == 9 and name[7:].isdigit():
        i, j = int(name[7]), int(name[8])
        if max(i, j) > 2:
            raise ValueError(f"Qutrit level out of range in {name}")
        return ketbra(i, j, 3)
    raise ValueError(f"Unknown local operator: {name}")


# --- spectral routines ---------------------------------------------------------

def _require_hermitian(a: Operator, what: str) -> None:
    if not a.is_hermitian():
        raise ValueError(f"{what} requires a Hermitian operator")


def hermitian_lambda_max(a: Operator) -> float:
    """Largest eigenvalue of a Hermitian operator"""
    _require_hermitian(a, "hermitian_lambda_max")
    hermitian_part = 0.5 * (a.data + a.data.conj().T)
    return float(linalg.eigvalsh(hermitian_part)[-1])


def hermitian_lambda_min(a: Operator) -> float:
    _require_hermitian(a, "hermitian_lambda_min")
    hermitian_part = 0.5 * (a.data + a.data.conj().T)
    return float(linalg.eigvalsh(hermitian_part)[0])


def psd_sqrt(a: Operator) -> Operator:
    """
    Principal square root of a Hermitian positive semi-definite operator.

    Eigenvalues in [-PSD_REJECT, 0) relative to max|A| are clamped to zero.

    Raises:
        ValueError: non-Hermitian input or a significantly negative eigenvalue
    """
    _require_hermitian(a, "psd_sqrt")
    scale = a.scale()
    if scale == 0.0:
        return zeros(a.layout)

    hermitian_part = 0.5 * (a.data + a.data.conj().T)
    eigenvalues, vectors = linalg.eigh(hermitian_part)
    smallest = eigenvalues[0]
    if smallest < -PSD_REJECT * scale:
        raise ValueError(f"psd_sqrt input has negative eigenvalue {smallest:.3e}")
    if smallest < -PSD_CLAMP * scale:
        print(f"⚠ psd_sqrt clamped eigenvalue {smallest:.3e} to zero")

    roots = np.sqrt(np.clip(eigenvalues, 0.0, None))
    root = (vectors * roots) @ vectors.conj().T
    return Operator(0.5 * (root + root.conj().T), a.layout)


def spectral_norm(a: Operator) -> float:
    if a.dim == 0:
        return 0.0
    return float(np.linalg.norm(a.data, 2))


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def dissipator_apply(jump: Operator, rho: Union[Operator, DensityMatrix]) -> Operator:
    """D[L](rho) = L rho L^dag - 1/2 {L^dag L, rho}"""
    rho = as_operator(rho)
    _check_same_layout(jump, rho)
    l, r = jump.data, rho.data
    ldl = l.conj().T @ l
    return Operator(l @ r @ l.conj().T - 0.5 * (ldl @ r + r @ ldl), rho.layout)


def jump_sum(jumps: Iterable[Operator], layout: Sequence[int]) -> Operator:
    """Sum of L^dag L over a set of jump operators"""
    total = np.zeros((math.prod(layout),) * 2, dtype=complex)
    for jump in jumps:
        total += jump.data.conj().T @ jump.data
    return Operator(0.5 * (total + total.conj().T), layout)


# --- random instances ----------------------------------------------------------

def random_hermitian(dim: int, rng: np.random.Generator, norm: Optional[float] = None,
                     layout: Optional[Sequence[int]] = None) -> Operator:
    """Random Hermitian matrix; rescaled to the given spectral norm if requested"""
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    h = 0.5 * (g + g.conj().T)
    if norm is not None:
        h *= norm / np.linalg.norm(h, 2)
    return Operator(h, layout)


def random_operator(dim: int, rng: np.random.Generator,
                    layout: Optional[Sequence[int]] = None) -> Operator:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return Operator(g / np.sqrt(2 * dim), layout)


def random_density(dim: int, rng: np.random.Generator,
                   layout: Optional[Sequence[int]] = None) -> DensityMatrix:
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = g @ g.conj().T
    rho /= np.trace(rho).real
    return DensityMatrix(Operator(rho, layout))
