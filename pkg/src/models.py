"""
MitLindblad Spin Models
Qubit Hamiltonians and observables used by the scenarios
"""

from typing import List, Sequence, Tuple

import numpy as np
from scipy import linalg

from .operators import (
    Operator,
    embed_local,
    ket,
    pure_state,
    sigma_x,
    sigma_y,
    sigma_z,
    zeros,
)


Edge = Tuple[int, int]


def square_plaquette_edges() -> List[Edge]:
    """Nearest neighbours of a 2x2 square: sites 0 1 on top, 2 3 below"""
    return [(0, 1), (0, 2), (1, 3), (2, 3)]


def chain_edges(n: int, periodic: bool) -> List[Edge]:
    edges = [(i, i + 1) for i in range(n - 1)]
    if periodic and n > 2:
        edges.append((n - 1, 0))
    return edges


def _pair(op: Operator, i: int, j: int, layout: Tuple[int, ...]) -> Operator:
    return embed_local(op, i, layout) @ embed_local(op, j, layout)


def _field(op: Operator, n: int) -> Operator:
    layout = (2,) * n
    total = zeros(layout)
    for site in range(n):
        total = total + embed_local(op, site, layout)
    return total


def anisotropic_heisenberg(n: int, edges: Sequence[Edge], j: float, anisotropy: float,
                           h: float) -> Operator:
    """
    sum_<ij> [Jx XX + Jy YY + Jz ZZ] - h sum_i Y_i

    Jx = J(1 + anisotropy), Jy = J(1 - anisotropy), Jz = J.
    """
    layout = (2,) * n
    jx, jy, jz = j * (1 + anisotropy), j * (1 - anisotropy), j
    total = zeros(layout)
    for a, b in edges:
        total = total + jx * _pair(sigma_x(), a, b, layout)
        total = total + jy * _pair(sigma_y(), a, b, layout)
        total = total + jz * _pair(sigma_z(), a, b, layout)
    return total - h * _field(sigma_y(), n)


def ising_coupling(n: int, j: float, periodic: bool) -> Operator:
    """J sum_i Z_i Z_{i+1}"""
    layout = (2,) * n
    total = zeros(layout)
    for a, b in chain_edges(n, periodic):
        total = total + j * _pair(sigma_z(), a, b, layout)
    return total


def transverse_field(n: int, h: float) -> Operator:
    """h sum_i X_i"""
    return h * _field(sigma_x(), n)


def transverse_ising(n: int, j: float, h: float, periodic: bool = True) -> Operator:
    return ising_coupling(n, j, periodic) + transverse_field(n, h)


def total_magnetization(n: int) -> Operator:
    """sum_i Z_i"""
    return _field(sigma_z(), n)


def all_zero_state(n: int) -> Operator:
    return pure_state(ket(0, 2 ** n), (2,) * n)


def all_zero_vector(n: int) -> np.ndarray:
    return ket(0, 2 ** n)


def unitary_expectations(hamiltonian: Operator, rho0: Operator, observable: Operator,
                         times: Sequence[float]) -> np.ndarray:
    """Tr[A e^{-iHt} rho0 e^{iHt}] from one eigendecomposition"""
    energies, vectors = linalg.eigh(hamiltonian.data)
    rho = vectors.conj().T @ rho0.data @ vectors
    obs = vectors.conj().T @ observable.data @ vectors
    weights = obs.T * rho
    gaps = energies[:, None] - energies[None, :]
    return np.array([np.sum(weights * np.exp(-1j * gaps * t)).real for t in times])
