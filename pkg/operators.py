#!/usr/bin/env python3
"""
Operator algebra for the counterdiabatic annealing simulator.
Builds the orthonormal Hermitian operator basis, maps density matrices to
coherence vectors and back, and assembles Lindbladian supermatrices in that basis.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, Sequence

import numpy as np
from scipy.linalg import hadamard

from exceptions import InvalidDimensionError, InvalidGeneratorError, InvalidRateError

logger = logging.getLogger(__name__)

HERMITICITY_TOLERANCE = 1e-10

PAULI = {
    'I': np.eye(2, dtype=complex),
    'X': np.array([[0, 1], [1, 0]], dtype=complex),
    'Y': np.array([[0, -1j], [1j, 0]], dtype=complex),
    'Z': np.array([[1, 0], [0, -1]], dtype=complex),
}


@dataclass(frozen=True, eq=False)
class OperatorBasis:
    """Orthonormal Hermitian basis {sigma_i} of D x D operators, element 0 the identity."""
    dim: int
    elements: np.ndarray  # shape (D^2, D, D)

    @property
    def size(self) -> int:
        return self.dim * self.dim

    @property
    def to_hs(self) -> np.ndarray:
        """Row-major vec(rho) -> coherence coefficients r_i = Tr(sigma_i^dag rho) / D."""
        return self.elements.conj().reshape(self.size, self.size) / self.dim

    @property
    def from_hs(self) -> np.ndarray:
        """Coherence coefficients -> row-major vec(rho) = sum_i r_i sigma_i."""
        return self.elements.reshape(self.size, self.size).T

    def __repr__(self) -> str:
        return f"OperatorBasis(dim={self.dim})"


@dataclass(frozen=True, eq=False)
class CoherenceVector:
    """Expansion coefficients of an operator in an OperatorBasis."""
    basis: OperatorBasis
    r: np.ndarray

    @property
    def trace(self) -> complex:
        return self.basis.dim * self.r[0]


@dataclass(frozen=True, eq=False)
class Superoperator:
    """D^2 x D^2 supermatrix with M_jk = <<sigma_j | L[sigma_k]>>."""
    basis: OperatorBasis
    matrix: np.ndarray

    def _check(self, other: 'Superoperator') -> None:
        if other.basis.dim != self.basis.dim:
            raise InvalidDimensionError(
                f"Supermatrices on D={self.basis.dim} and D={other.basis.dim} cannot be combined")

    def __add__(self, other: 'Superoperator') -> 'Superoperator':
        self._check(other)
        return Superoperator(self.basis, self.matrix + other.matrix)

    def __sub__(self, other: 'Superoperator') -> 'Superoperator':
        self._check(other)
        return Superoperator(self.basis, self.matrix - other.matrix)

    def __mul__(self, scalar: complex) -> 'Superoperator':
        return Superoperator(self.basis, scalar * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Superoperator):
            self._check(other)
            return Superoperator(self.basis, self.matrix @ other.matrix)
        if isinstance(other, CoherenceVector):
            return CoherenceVector(self.basis, self.matrix @ other.r)
        return self.matrix @ other

    def trace_row_error(self) -> float:
        """Largest entry of row 0; zero for a trace-preserving generator."""
        return float(np.max(np.abs(self.matrix[0])))


def _as_matrix(A, name: str = 'operator') -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidDimensionError(f"{name} must be a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidDimensionError(f"{name} has non-finite entries")
    return A


def check_hermitian(H, name: str = 'Hamiltonian') -> np.ndarray:
    """Return H as a complex array, raising InvalidGeneratorError if it is not Hermitian."""
    H = _as_matrix(H, name)
    scale = max(np.linalg.norm(H), np.finfo(float).tiny)
    residual = np.linalg.norm(H - H.conj().T)
    if residual > HERMITICITY_TOLERANCE * scale:
        logger.error(f"{name} is not Hermitian (residual {residual:.3e})")
        raise InvalidGeneratorError(f"{name} is not Hermitian (residual {residual:.3e})")
    return H


@lru_cache(maxsize=None)
def build_basis(D: int) -> OperatorBasis:
    """
    Build the orthonormal Hermitian operator basis for a D-dimensional Hilbert space.

    Order: identity; for each pair l < m (row-major) the symmetric then the
    antisymmetric off-diagonal element scaled to unit norm; then D - 1 traceless
    diagonal elements obtained by Gram-Schmidt on Hadamard sign patterns.
    """
    if not isinstance(D, (int, np.integer)) or D < 2:
        logger.error(f"Invalid Hilbert space dimension: {D}")
        raise InvalidDimensionError(f"Basis dimension must be an integer >= 2, got {D}")
    D = int(D)
    off = np.sqrt(D / 2.0)
    elements = [np.eye(D, dtype=complex)]

    for l in range(D):
        for m in range(l + 1, D):
            sym = np.zeros((D, D), dtype=complex)
            sym[l, m] = sym[m, l] = off
            anti = np.zeros((D, D), dtype=complex)
            anti[l, m] = -1j * off
            anti[m, l] = 1j * off
            elements.extend([sym, anti])

    n_pad = 1 << (D - 1).bit_length()
    accepted = [np.ones(D)]
    for row in hadamard(n_pad)[1:, :D].astype(float):
        v = row.copy()
        for u in accepted:
            v -= (u @ v / D) * u
        norm = np.sqrt(v @ v / D)
        if norm < 1e-10:
            continue
        accepted.append(v / norm)
        if len(accepted) == D:
            break
    elements.extend(np.diag(v).astype(complex) for v in accepted[1:])

    stacked = np.array(elements)
    stacked.setflags(write=False)
    logger.debug(f"Built operator basis with {len(elements)} elements for D={D}")
    return OperatorBasis(D, stacked)


def hs_inner(A, B) -> complex:
    """Hilbert-Schmidt scalar product Tr(A^dag B) / D."""
    A = _as_matrix(A, 'A')
    B = _as_matrix(B, 'B')
    if A.shape != B.shape:
        raise InvalidDimensionError(f"Shape mismatch in hs_inner: {A.shape} vs {B.shape}")
    return complex(np.vdot(A, B) / A.shape[0])


def hs_norm(M) -> float:
    """Frobenius norm sqrt(Tr(M^dag M)) of a matrix or supermatrix."""
    if isinstance(M, Superoperator):
        M = M.matrix
    return float(np.linalg.norm(M))


def vectorize(rho, basis: OperatorBasis) -> CoherenceVector:
    rho = _as_matrix(rho, 'rho')
    if rho.shape[0] != basis.dim:
        raise InvalidDimensionError(f"rho has dimension {rho.shape[0]}, basis has {basis.dim}")
    return CoherenceVector(basis, basis.to_hs @ rho.reshape(-1))


def devectorize(r: CoherenceVector) -> np.ndarray:
    basis = r.basis
    coefficients = np.asarray(r.r, dtype=complex)
    if coefficients.shape != (basis.size,):
        raise InvalidDimensionError(
            f"Coherence vector has {coefficients.shape} entries, expected {basis.size}")
    return (basis.from_hs @ coefficients).reshape(basis.dim, basis.dim)


def _from_liouville(S: np.ndarray, basis: OperatorBasis) -> Superoperator:
    return Superoperator(basis, basis.to_hs @ S @ basis.from_hs)


def unitary_superop(H, basis: OperatorBasis) -> Superoperator:
    """Supermatrix of rho -> -i[H, rho]."""
    H = check_hermitian(H)
    if H.shape[0] != basis.dim:
        raise InvalidDimensionError(f"H has dimension {H.shape[0]}, basis has {basis.dim}")
    eye = np.eye(basis.dim)
    S = -1j * (np.kron(H, eye) - np.kron(eye, H.T))
    return _from_liouville(S, basis)


def dissipator_superop(L_ops: Sequence, rates: Sequence[float], basis: OperatorBasis) -> Superoperator:
    """Supermatrix of rho -> sum_k gamma_k (L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho})."""
    if len(L_ops) != len(rates):
        raise InvalidDimensionError(f"{len(L_ops)} jump operators but {len(rates)} rates")
    D = basis.dim
    eye = np.eye(D)
    S = np.zeros((D * D, D * D), dtype=complex)
    for L, rate in zip(L_ops, rates):
        if rate < 0:
            logger.error(f"Negative Lindblad rate: {rate}")
            raise InvalidRateError(f"Lindblad rates must be nonnegative, got {rate}")
        L = _as_matrix(L, 'jump operator')
        if L.shape[0] != D:
            raise InvalidDimensionError(f"Jump operator has dimension {L.shape[0]}, basis has {D}")
        if rate == 0:
            continue
        K = L.conj().T @ L
        S += rate * (np.kron(L, L.conj()) - 0.5 * (np.kron(K, eye) + np.kron(eye, K.T)))
    return _from_liouville(S, basis)


def superop_from_map(fn: Callable[[np.ndarray], np.ndarray], basis: OperatorBasis) -> Superoperator:
    """Supermatrix of an arbitrary linear map on operators, built column by column."""
    columns: List[np.ndarray] = [vectorize(fn(sigma), basis).r for sigma in basis.elements]
    return Superoperator(basis, np.column_stack(columns))


def superop_commutator(A: Superoperator, B: Superoperator) -> Superoperator:
    A._check(B)
    return Superoperator(A.basis, A.matrix @ B.matrix - B.matrix @ A.matrix)
