#!/usr/bin/env python3
"""
Spectral decomposition of Lindbladian supermatrices into one-dimensional Jordan
blocks, continuity tracking of the blocks along the anneal, and the instantaneous
steady state (ISS).
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from exceptions import (
    AmbiguousSteadyStateError,
    InvalidDimensionError,
    InvalidGeneratorError,
    NoSteadyStateError,
    NotDiagonalizableError,
)
from operators import CoherenceVector, OperatorBasis, Superoperator

logger = logging.getLogger(__name__)

CONDITION_THRESHOLD = 1e8
RESIDUAL_THRESHOLD = 1e-8
ZERO_TOLERANCE = 1e-9
MIN_TRACKING_OVERLAP = 0.5


@dataclass(frozen=True, eq=False)
class JordanSpectrum:
    """
    Eigen-decomposition L = sum_a lambda_a |D_a>><<E_a|.

    right[:, a] is |D_a>>, left[a, :] is <<E_a|. Zero modes with nonzero trace are
    scaled to unit trace, every other right vector has its largest component real
    and positive; left vectors carry the inverse scaling.
    """
    basis: OperatorBasis
    eigenvalues: np.ndarray
    right: np.ndarray
    left: np.ndarray
    one_d: bool
    condition: float
    max_residual: float
    overlaps: Optional[np.ndarray] = None
    permutation: Optional[np.ndarray] = None
    warnings: Tuple[str, ...] = ()

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    def right_vector(self, alpha: int) -> CoherenceVector:
        return CoherenceVector(self.basis, self.right[:, alpha])

    def reconstruct(self) -> np.ndarray:
        return (self.right * self.eigenvalues) @ self.left

    def biorthonormality_error(self) -> float:
        return float(np.max(np.abs(self.left @ self.right - np.eye(self.size))))

    def completeness_error(self) -> float:
        return float(np.max(np.abs(self.right @ self.left - np.eye(self.size))))

    def zero_tolerance(self) -> float:
        return ZERO_TOLERANCE * max(1.0, float(np.max(np.abs(self.eigenvalues))))

    def require_one_d(self) -> 'JordanSpectrum':
        if not self.one_d:
            raise NotDiagonalizableError(
                f"Supermatrix failed the 1D Jordan form check "
                f"(cond={self.condition:.2e}, residual={self.max_residual:.2e})")
        return self


@dataclass(frozen=True)
class SpectrumTrack:
    s_values: np.ndarray
    spectra: Tuple[JordanSpectrum, ...]
    warnings: Tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.spectra)

    @property
    def min_overlap(self) -> float:
        tracked = [np.min(sp.overlaps) for sp in self.spectra if sp.overlaps is not None]
        return float(min(tracked)) if tracked else 1.0

    def eigenvalue_paths(self) -> np.ndarray:
        """Array of shape (len(s_values), D^2) with eigenvalues in tracked order."""
        return np.array([sp.eigenvalues for sp in self.spectra])


def _canonical_order(eigenvalues: np.ndarray) -> np.ndarray:
    # real modes first (ISS leading), then oscillating pairs by frequency, +imag first
    abs_imag = np.round(np.abs(eigenvalues.imag), 9)
    real = np.round(eigenvalues.real, 9)
    sign = np.sign(np.round(eigenvalues.imag, 9))
    return np.lexsort((-sign, -real, abs_imag))


def _fix_gauge(eigenvalues: np.ndarray, right: np.ndarray, left: np.ndarray,
               basis: OperatorBasis, zero_tol: float) -> Tuple[np.ndarray, np.ndarray]:
    right = right.copy()
    left = left.copy()
    for a in range(len(eigenvalues)):
        v = right[:, a]
        trace = basis.dim * v[0]
        if abs(eigenvalues[a]) < zero_tol and abs(trace) > 1e-8 * np.linalg.norm(v):
            c = 1.0 / trace
        else:
            k = int(np.argmax(np.abs(v)))
            c = abs(v[k]) / v[k]
        right[:, a] *= c
        left[a, :] /= c
    return right, left


def _residuals(M: np.ndarray, eigenvalues: np.ndarray, right: np.ndarray) -> np.ndarray:
    scale = max(1.0, np.linalg.norm(M))
    norms = np.linalg.norm(right, axis=0)
    return np.linalg.norm(M @ right - right * eigenvalues, axis=0) / (norms * scale)


def decompose(L: Superoperator, strict: bool = False,
              condition_threshold: float = CONDITION_THRESHOLD,
              residual_threshold: float = RESIDUAL_THRESHOLD) -> JordanSpectrum:
    """
    Diagonalize a supermatrix; left vectors are the rows of the inverse right-vector matrix.

    A defective or near-defective matrix is reported through one_d=False (and a
    warning); with strict=True it raises NotDiagonalizableError instead.
    """
    M = np.asarray(L.matrix, dtype=complex)
    if not np.all(np.isfinite(M)):
        logger.error("Supermatrix has non-finite entries")
        raise InvalidGeneratorError("Supermatrix has non-finite entries")

    eigenvalues, right = linalg.eig(M)
    order = _canonical_order(eigenvalues)
    eigenvalues, right = eigenvalues[order], right[:, order]

    notes: List[str] = []
    condition = float(np.linalg.cond(right))
    if np.isfinite(condition) and condition < 1e15:
        left = np.linalg.inv(right)
    else:
        left = np.linalg.pinv(right)

    zero_tol = ZERO_TOLERANCE * max(1.0, float(np.max(np.abs(eigenvalues))))
    right, left = _fix_gauge(eigenvalues, right, left, L.basis, zero_tol)
    max_residual = float(np.max(_residuals(M, eigenvalues, right)))

    one_d = bool(condition < condition_threshold and max_residual < residual_threshold)
    if not one_d:
        message = (f"Supermatrix is not safely diagonalizable: cond(V)={condition:.2e}, "
                   f"max residual={max_residual:.2e}")
        if strict:
            logger.error(message)
            raise NotDiagonalizableError(message)
        logger.warning(message)
        notes.append(message)

    return JordanSpectrum(L.basis, eigenvalues, right, left, one_d, condition, max_residual,
                          warnings=tuple(notes))


def find_iss(spec: JordanSpectrum, tol: Optional[float] = None) -> Tuple[int, CoherenceVector]:
    """Index and unit-trace coherence vector of the instantaneous steady state."""
    tol = spec.zero_tolerance() if tol is None else tol
    zero = np.flatnonzero(np.abs(spec.eigenvalues) < tol)
    if len(zero) == 0:
        smallest = float(np.min(np.abs(spec.eigenvalues)))
        logger.error(f"No zero eigenvalue within {tol:.1e} (smallest |lambda| = {smallest:.3e})")
        raise NoSteadyStateError(f"No eigenvalue within {tol:.1e} of zero (smallest {smallest:.3e})")
    if len(zero) > 1:
        logger.error(f"{len(zero)} eigenvalues within {tol:.1e} of zero")
        raise AmbiguousSteadyStateError(f"{len(zero)} zero eigenvalues; the steady state is not unique")

    alpha = int(zero[0])
    v = spec.right[:, alpha]
    trace = spec.basis.dim * v[0]
    if abs(trace) < 1e-12:
        raise NoSteadyStateError("The zero mode is traceless and cannot be normalized to a state")
    return alpha, CoherenceVector(spec.basis, v / trace)


def _degenerate_clusters(eigenvalues: np.ndarray, tol: float) -> List[List[int]]:
    clusters: List[List[int]] = []
    for a, lam in enumerate(eigenvalues):
        for cluster in clusters:
            if any(abs(lam - eigenvalues[b]) < tol for b in cluster):
                cluster.append(a)
                break
        else:
            clusters.append([a])
    return [c for c in clusters if len(c) > 1]


def track_spectrum(prev: JordanSpectrum, nxt: JordanSpectrum,
                   min_overlap: float = MIN_TRACKING_OVERLAP) -> JordanSpectrum:
    """
    Relabel nxt so each block continues the block of prev it overlaps most with.

    Degenerate clusters in nxt are first rotated within their eigenspace onto the
    matching vectors of prev; the remaining labels are assigned greedily on
    |<<E_a^prev|D_b^next>>|.
    """
    if prev.size != nxt.size:
        raise InvalidDimensionError(f"Cannot track spectra of sizes {prev.size} and {nxt.size}")
    n = nxt.size
    right = nxt.right.copy()
    left = nxt.left.copy()
    assignment = -np.ones(n, dtype=int)  # prev label -> next index
    used_next = np.zeros(n, dtype=bool)

    cluster_tol = nxt.zero_tolerance()
    for cluster in _degenerate_clusters(nxt.eigenvalues, cluster_tol):
        centre = np.mean(nxt.eigenvalues[cluster])
        candidates = [a for a in np.argsort(np.abs(prev.eigenvalues - centre), kind='stable')
                      if assignment[a] < 0][:len(cluster)]
        W = prev.left[candidates] @ right[:, cluster]
        if np.linalg.cond(W) > 1e8:
            logger.debug(f"Degenerate cluster {cluster} does not align with previous vectors")
            continue
        right[:, cluster] = right[:, cluster] @ np.linalg.inv(W)
        left[cluster] = W @ left[cluster]
        for a, b in zip(candidates, cluster):
            assignment[a] = b
            used_next[b] = True

    overlap = np.abs(prev.left @ right)
    pairs = sorted(((overlap[a, b], a, b) for a in range(n) for b in range(n)
                    if assignment[a] < 0 and not used_next[b]), reverse=True)
    for _, a, b in pairs:
        if assignment[a] < 0 and not used_next[b]:
            assignment[a] = b
            used_next[b] = True

    eigenvalues = nxt.eigenvalues[assignment]
    right, left = _fix_gauge(eigenvalues, right[:, assignment], left[assignment],
                             nxt.basis, cluster_tol)
    matched = np.abs(np.einsum('ai,ia->a', prev.left, right))

    notes = list(nxt.warnings)
    for a in np.flatnonzero(matched < min_overlap):
        message = f"Tracking overlap {matched[a]:.3f} for block {a} is below {min_overlap}"
        logger.warning(message)
        notes.append(message)

    return replace(nxt, eigenvalues=eigenvalues, right=right, left=left, overlaps=matched,
                   permutation=assignment, warnings=tuple(notes))


def track_along(builder: Callable[[float], Superoperator], s_values: Sequence[float],
                min_overlap: float = MIN_TRACKING_OVERLAP) -> SpectrumTrack:
    """Decompose builder(s) on a grid and track block labels from the first point on."""
    s_values = np.asarray(s_values, dtype=float)
    spectra = [decompose(builder(s_values[0]))]
    for s in s_values[1:]:
        spectra.append(track_spectrum(spectra[-1], decompose(builder(s)), min_overlap))
    notes = tuple(w for sp in spectra for w in sp.warnings)
    logger.info(f"Tracked {spectra[0].size} blocks over {len(s_values)} points "
                f"({len(notes)} warnings)")
    return SpectrumTrack(s_values, tuple(spectra), notes)


def jb_overlaps(spec: JordanSpectrum, r: CoherenceVector) -> np.ndarray:
    """|<<E_a|r>>| for every block a, in the spectrum's label order."""
    coefficients = np.asarray(r.r)
    if coefficients.shape != (spec.size,):
        raise InvalidDimensionError(
            f"Coherence vector has {coefficients.shape} entries, spectrum has {spec.size} blocks")
    return np.abs(spec.left @ coefficients)
