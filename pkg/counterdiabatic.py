#!/usr/bin/env python3
"""
Counterdiabatic (CD) superoperators for open-system annealing.

Two routes to the gauge supermatrix A_s that enters d|rho>>/ds = [tau L_0(s) + A_s]|rho>>:
the exact construction in the one-dimensional Jordan basis of L_0, and a
variational fit of a restricted CPTP ansatz (unitary generators with free real
weights, Lindblad channels with nonnegative weights) to the commutator condition
[L_0' - [A, L_0], L_0] = 0.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.linalg import lstsq, orth, svd
from scipy.optimize import nnls

from exceptions import ConfigError, DomainError, InvalidDimensionError, UnsupportedSpectrumError
from models import AnnealingScenario, QubitModel, collective_spin_ops, schedule_dq, schedule_q
from operators import (
    PAULI,
    OperatorBasis,
    Superoperator,
    check_hermitian,
    dissipator_superop,
    hs_norm,
    superop_commutator,
    unitary_superop,
)
from spectral import JordanSpectrum, decompose

logger = logging.getLogger(__name__)

DERIVATIVE_STEP = 1e-5
DERIVATIVE_TOLERANCE = 1e-5
DEGENERACY_TOLERANCE = 1e-9
DEFAULT_GRID_POINTS = 201
RANK_RCOND = 1e-8
RIDGE_FACTOR = 1e-7

UNITARY = 'unitary'
DISSIPATIVE = 'dissipative'


# --- derivative of the generator -------------------------------------------------

@dataclass(frozen=True)
class LindbladianDerivative:
    superop: Superoperator
    richardson_error: float
    reliable: bool


def _difference(builder: Callable[[float], Superoperator], s: float, h: float) -> Superoperator:
    if s - h < 0:
        return (builder(s) * -3 + builder(s + h) * 4 - builder(s + 2 * h)) * (1 / (2 * h))
    if s + h > 1:
        return (builder(s) * 3 - builder(s - h) * 4 + builder(s - 2 * h)) * (1 / (2 * h))
    return (builder(s + h) - builder(s - h)) * (1 / (2 * h))


def lindbladian_derivative(builder: Callable[[float], Superoperator], s: float,
                           h: float = DERIVATIVE_STEP, check: bool = True,
                           tolerance: float = DERIVATIVE_TOLERANCE) -> LindbladianDerivative:
    """
    dL_0/ds by central differences, second-order one-sided within h of the endpoints.

    With check=True the result is compared against step h/2 and flagged
    unreliable when the relative discrepancy exceeds tolerance.
    """
    if h <= 0 or not 0 <= s <= 1:
        raise DomainError(f"Derivative needs h > 0 and s in [0, 1], got h={h}, s={s}")
    coarse = _difference(builder, s, h)
    if not check:
        return LindbladianDerivative(coarse, float('nan'), True)

    fine = _difference(builder, s, h / 2)
    scale = max(hs_norm(fine), 1e-8)
    error = hs_norm(coarse - fine) / scale
    reliable = error < tolerance
    if not reliable:
        logger.warning(f"Lindbladian derivative unreliable at s={s:.4f}: Richardson discrepancy {error:.2e}")
    return LindbladianDerivative(coarse, error, reliable)


# --- exact CD --------------------------------------------------------------------

@dataclass(frozen=True)
class ExactCdResult:
    gauge: Superoperator
    skipped_pairs: int


def exact_cd(spec: JordanSpectrum, dL: Superoperator,
             degeneracy_tolerance: float = DEGENERACY_TOLERANCE) -> ExactCdResult:
    """
    A = sum_{a != b} <<E_b|L_0'|D_a>> / (lambda_a - lambda_b) |D_b>><<E_a|.

    Pairs closer than degeneracy_tolerance * max|lambda| are left out and counted.
    """
    if not spec.one_d:
        logger.error("Exact CD requested for a spectrum without a 1D Jordan form")
        raise UnsupportedSpectrumError("Exact CD needs a one-dimensional Jordan form")
    lam = spec.eigenvalues
    n = len(lam)
    G = spec.left @ dL.matrix @ spec.right
    gaps = lam[None, :] - lam[:, None]  # [b, a] = lambda_a - lambda_b
    tol = degeneracy_tolerance * max(float(np.max(np.abs(lam))), np.finfo(float).tiny)
    keep = np.abs(gaps) >= tol
    np.fill_diagonal(keep, False)

    with np.errstate(divide='ignore', invalid='ignore'):
        coupling = np.where(keep, G / np.where(keep, gaps, 1), 0)
    skipped = (n * (n - 1) - int(np.count_nonzero(keep))) // 2

    if skipped == n * (n - 1) // 2 and n > 1:
        logger.warning("Every eigenvalue pair is degenerate; exact CD is empty")
    elif skipped:
        logger.debug(f"Exact CD skipped {skipped} degenerate eigenvalue pairs")

    gauge = spec.right @ coupling @ spec.left
    return ExactCdResult(Superoperator(spec.basis, gauge), skipped)


def commutator_residual(A: Superoperator, L0: Superoperator, dL: Superoperator) -> float:
    """Frobenius norm of [L_0' - [A, L_0], L_0]."""
    return hs_norm(superop_commutator(dL - superop_commutator(A, L0), L0))


def closed_system_gauge_qubit(s: float, model: QubitModel) -> float:
    """
    Coefficient of sigma_y in the literature closed-system qubit gauge -q'/(1 - 2q + 2q^2).

    The gauge that actually cancels transitions for H = -(1-q)w/2 sigma_x - q w/2 sigma_z
    is half of this value; callers compare against 2 * y.
    """
    if not np.isclose(model.omega_x, model.omega_z):
        raise DomainError("The analytic qubit gauge needs omega_x == omega_z")
    q = schedule_q(s)
    return float(-schedule_dq(s) / (1 - 2 * q + 2 * q * q))


# --- ansatz terms ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnsatzTerm:
    name: str
    kind: str
    operator: np.ndarray

    def __post_init__(self):
        if self.kind not in (UNITARY, DISSIPATIVE):
            raise ConfigError(f"Ansatz term kind must be '{UNITARY}' or '{DISSIPATIVE}', got {self.kind}")
        if self.kind == UNITARY:
            check_hermitian(self.operator, f"ansatz generator {self.name}")

    @property
    def constrained(self) -> bool:
        return self.kind == DISSIPATIVE


def ansatz_supermatrix(term: AnsatzTerm, basis: OperatorBasis) -> Superoperator:
    if term.kind == UNITARY:
        return unitary_superop(term.operator, basis)
    return dissipator_superop([term.operator], [1.0], basis)


def _spin_terms(scenario: AnnealingScenario) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return collective_spin_ops(scenario.model.n_spins)


def _term_sy(scenario):
    return [AnsatzTerm('Sy', UNITARY, _spin_terms(scenario)[1])]


def _term_sy3(scenario):
    sy = _spin_terms(scenario)[1]
    return [AnsatzTerm('Sy3', UNITARY, sy @ sy @ sy)]


def _term_cyclic(scenario):
    sx, sy, sz = _spin_terms(scenario)
    product = sx @ sy @ sz
    return [AnsatzTerm('SxSySz_cyclic', UNITARY, product + product.conj().T)]


def _term_sigma_y(scenario):
    if scenario.dim != 2:
        raise ConfigError(f"sigma_y ansatz needs a qubit, scenario has D={scenario.dim}")
    return [AnsatzTerm('sigma_y', UNITARY, PAULI['Y'])]


def _term_basis_dissipators(scenario):
    return [AnsatzTerm(f'Sigma_{i}', DISSIPATIVE, sigma)
            for i, sigma in enumerate(scenario.basis.elements) if i > 0]


ANSATZ_TERMS: Dict[str, Callable[[AnnealingScenario], List[AnsatzTerm]]] = {
    'Sy': _term_sy,
    'Sy3': _term_sy3,
    'SxSySz_cyclic': _term_cyclic,
    'sigma_y': _term_sigma_y,
    'basis_dissipators': _term_basis_dissipators,
}

ANSATZ_CASES: Dict[str, List[str]] = {
    'Bath': ['basis_dissipators'],
    'Sy': ['Sy'],
    'Cyclic': ['Sy', 'Sy3', 'SxSySz_cyclic'],
    'Full': ['Sy', 'Sy3', 'SxSySz_cyclic', 'basis_dissipators'],
}


def _explicit_term(entry: dict, index: int) -> AnsatzTerm:
    unknown = set(entry) - {'name', 'kind', 'real', 'imag'}
    if unknown or 'real' not in entry:
        raise ConfigError(f"Explicit ansatz term needs 'real' (and optional 'imag', 'kind', 'name'), "
                          f"got keys {sorted(entry)}")
    matrix = np.asarray(entry['real'], dtype=complex)
    if 'imag' in entry:
        matrix = matrix + 1j * np.asarray(entry['imag'], dtype=float)
    return AnsatzTerm(entry.get('name', f'explicit_{index}'), entry.get('kind', UNITARY), matrix)


def resolve_ansatz(spec: Union[str, Sequence], scenario: AnnealingScenario) -> List[AnsatzTerm]:
    """
    Expand a case name ("Bath", "Sy", "Cyclic", "Full"), a term name, or a list of
    term names / explicit matrix dicts / AnsatzTerm objects into ansatz terms.
    """
    if isinstance(spec, str):
        spec = ANSATZ_CASES.get(spec, [spec])
    terms: List[AnsatzTerm] = []
    for index, entry in enumerate(spec):
        if isinstance(entry, AnsatzTerm):
            terms.append(entry)
        elif isinstance(entry, dict):
            terms.append(_explicit_term(entry, index))
        elif entry in ANSATZ_TERMS:
            terms.extend(ANSATZ_TERMS[entry](scenario))
        else:
            raise ConfigError(f"Unknown ansatz term: {entry}")
    for term in terms:
        if term.operator.shape != (scenario.dim, scenario.dim):
            raise InvalidDimensionError(
                f"Ansatz term {term.name} has shape {term.operator.shape}, scenario has D={scenario.dim}")
    return terms


# --- variational least squares ---------------------------------------------------

@dataclass(frozen=True, eq=False)
class VariationalSolution:
    terms: Tuple[AnsatzTerm, ...]
    coefficients: np.ndarray
    residual: float
    residual_at_zero: float
    rank: int
    rank_deficient: bool
    active: np.ndarray  # constrained terms with a strictly positive weight

    def coefficient(self, name: str) -> float:
        for term, value in zip(self.terms, self.coefficients):
            if term.name == name:
                return float(value)
        raise KeyError(name)

    def dissipative_rates(self) -> Dict[str, float]:
        return {t.name: float(c) for t, c in zip(self.terms, self.coefficients) if t.constrained}


def _flatten(M: np.ndarray) -> np.ndarray:
    flat = M.reshape(-1)
    return np.concatenate([flat.real, flat.imag])


def assemble_lsq(L0: Superoperator, dL: Superoperator,
                 ansatz: Sequence[Superoperator]) -> Tuple[np.ndarray, np.ndarray]:
    """Real design matrix with columns [[A_i, L_0], L_0] and target [L_0', L_0]."""
    columns = [_flatten(superop_commutator(superop_commutator(A, L0), L0).matrix) for A in ansatz]
    target = _flatten(superop_commutator(dL, L0).matrix)
    design = np.column_stack(columns) if columns else np.zeros((len(target), 0))
    return design, target


def _min_norm_nnls(M: np.ndarray, b: np.ndarray) -> np.ndarray:
    U, sv, Vt = svd(M, full_matrices=False)
    n = M.shape[1]
    if not sv.size or sv[0] == 0:
        return np.zeros(n)
    keep = sv > RANK_RCOND * sv[0]
    if not keep.all():
        logger.debug(f"Dropping {int(np.count_nonzero(~keep))} null directions of the constrained block")
    # range-restricted problem: |S_r V_r x - U_r^T b| plus a ridge on x
    reduced = sv[keep, None] * Vt[keep]
    stacked = np.vstack([reduced, RIDGE_FACTOR * sv[0] * np.eye(n)])
    rhs = np.concatenate([U[:, keep].T @ b, np.zeros(n)])
    weights, _ = nnls(stacked, rhs, maxiter=50 * max(n, 1))
    return weights


def solve_variational(design: np.ndarray, target: np.ndarray, constrained: Sequence[bool],
                      terms: Sequence[AnsatzTerm] = ()) -> VariationalSolution:
    """
    min ||design @ x - target||^2 with x_i >= 0 wherever constrained[i].

    The unconstrained block is projected out first. The projected constrained block
    is truncated to singular values above RANK_RCOND * sigma_max and solved by
    active-set NNLS with a small ridge, which picks the minimum-norm point among
    the nonnegative optima instead of pushing weight along null directions. The
    unconstrained weights then follow from a minimum-norm least-squares solve.
    """
    design = np.asarray(design, dtype=float)
    target = np.asarray(target, dtype=float)
    mask = np.asarray(constrained, dtype=bool)
    k = design.shape[1]
    if k == 0 or mask.shape != (k,):
        raise InvalidDimensionError(f"Variational solve needs >= 1 term and one flag per column, "
                                    f"got {k} columns and {mask.shape} flags")

    free, fixed_sign = design[:, ~mask], design[:, mask]
    scale = float(np.linalg.norm(design, 2)) if np.any(design) else 0.0
    rank = int(np.linalg.matrix_rank(design, tol=RANK_RCOND * scale)) if scale else 0
    rank_deficient = rank < k
    if rank_deficient:
        logger.debug(f"Rank-deficient design ({rank} < {k}); minimum-norm weights selected")

    weights_sign = np.zeros(fixed_sign.shape[1])
    if fixed_sign.shape[1]:
        if free.shape[1]:
            Q = orth(free)
            projected = fixed_sign - Q @ (Q.T @ fixed_sign)
            projected_target = target - Q @ (Q.T @ target)
        else:
            projected, projected_target = fixed_sign, target
        weights_sign = _min_norm_nnls(projected, projected_target)

    weights_free = np.zeros(free.shape[1])
    if free.shape[1]:
        weights_free = lstsq(free, target - fixed_sign @ weights_sign, cond=RANK_RCOND)[0]

    coefficients = np.zeros(k)
    coefficients[~mask] = weights_free
    coefficients[mask] = weights_sign
    residual = float(np.sum((design @ coefficients - target) ** 2))
    return VariationalSolution(tuple(terms), coefficients, residual, float(target @ target),
                               rank, rank_deficient, mask & (coefficients > 0))


# --- detailed balance check ------------------------------------------------------

@dataclass(frozen=True)
class KmsReport:
    s: float
    satisfied: bool
    max_log_deviation: float
    violations: Tuple[str, ...] = ()


def kms_violation_report(solution: VariationalSolution, scenario: AnnealingScenario, s: float,
                         rtol: float = 0.1) -> KmsReport:
    """
    Compare the transition rates W_ab = sum_i g_i |<a|Gamma_i|b>|^2 of the solved
    dissipative channel with detailed balance W_ab / W_ba = exp(-beta (e_a - e_b)).
    """
    if scenario.bath is None:
        raise ConfigError("KMS check needs a bath temperature")
    energies, V = np.linalg.eigh(scenario.hamiltonian(s))
    rates = np.zeros((scenario.dim, scenario.dim))
    for term, weight in zip(solution.terms, solution.coefficients):
        if term.constrained and weight > 0:
            rates += weight * np.abs(V.conj().T @ term.operator @ V) ** 2

    floor = 1e-12 * max(float(np.max(rates)), np.finfo(float).tiny)
    deviation, violations = 0.0, []
    for a in range(scenario.dim):
        for b in range(a + 1, scenario.dim):
            forward, backward = rates[a, b], rates[b, a]
            if forward <= floor and backward <= floor:
                continue
            expected = -scenario.bath.beta * (energies[a] - energies[b])
            if forward <= floor or backward <= floor:
                gap = float('inf')
            else:
                gap = abs(np.log(forward / backward) - expected)
            deviation = max(deviation, gap)
            if gap > np.log1p(rtol):
                violations.append(f"levels {a}<->{b}: log(W_ab/W_ba) off by {gap:.3g}")

    if violations:
        logger.warning(f"Solved dissipative channel violates detailed balance at s={s:.3f} "
                       f"({len(violations)} level pairs)")
    return KmsReport(s, not violations, deviation, tuple(violations))


# --- provider used by the integrator ---------------------------------------------

class CdProvider:
    """
    Supplies the gauge supermatrix A_s to the integrator.

    mode 'none' supplies nothing, 'exact' rebuilds the Jordan-basis construction at
    every requested s, 'variational' solves the ansatz fit on a fixed s-grid and
    interpolates the weights linearly.
    """

    MODES = ('none', 'exact', 'variational')

    def __init__(self, scenario: AnnealingScenario, mode: str = 'none',
                 terms: Sequence[AnsatzTerm] = (), grid_points: int = DEFAULT_GRID_POINTS,
                 threads: int = 1, label: Optional[str] = None):
        if mode not in self.MODES:
            raise ConfigError(f"Unknown CD mode: {mode}")
        if mode == 'variational' and not terms:
            raise ConfigError("Variational CD needs at least one ansatz term")
        self.scenario = scenario
        self.mode = mode
        self.terms = tuple(terms)
        self.grid_points = grid_points
        self.threads = max(1, threads)
        self.label = label or mode
        self.skipped_pairs = 0
        self._grid: Optional[np.ndarray] = None
        self._weights: Optional[np.ndarray] = None
        self._residuals: Optional[np.ndarray] = None
        self._solutions: List[VariationalSolution] = []
        self._stack = None
        if mode == 'variational':
            basis = scenario.basis
            self._stack = np.array([ansatz_supermatrix(t, basis).matrix for t in self.terms])

    @classmethod
    def from_case(cls, scenario: AnnealingScenario, case: Union[str, Sequence], **kwargs) -> 'CdProvider':
        """Provider for 'none', 'exact' or any ansatz accepted by resolve_ansatz."""
        if isinstance(case, str) and case in ('none', 'exact'):
            kwargs.setdefault('label', case)
            return cls(scenario, case, **kwargs)
        kwargs.setdefault('label', case if isinstance(case, str) else '+'.join(map(str, case)))
        return cls(scenario, 'variational', resolve_ansatz(case, scenario), **kwargs)

    def derivative(self, s: float) -> Superoperator:
        if self.scenario.bath is None:
            return unitary_superop(self.scenario.hamiltonian_derivative(s), self.scenario.basis)
        return lindbladian_derivative(self.scenario.lindbladian, s, check=False).superop

    def exact_gauge(self, s: float) -> ExactCdResult:
        spec = decompose(self.scenario.lindbladian(s))
        return exact_cd(spec, self.derivative(s))

    def ansatz_superops(self) -> List[Superoperator]:
        return [Superoperator(self.scenario.basis, M) for M in self._stack]

    def solve_at(self, s: float) -> VariationalSolution:
        L0 = self.scenario.lindbladian(s)
        design, target = assemble_lsq(L0, self.derivative(s), self.ansatz_superops())
        return solve_variational(design, target, [t.constrained for t in self.terms], self.terms)

    def prepare(self) -> 'CdProvider':
        """Solve the variational weights on the s-grid (no-op for other modes)."""
        if self.mode != 'variational' or self._weights is not None:
            return self
        grid = np.linspace(0.0, 1.0, self.grid_points)
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            solutions = list(pool.map(self.solve_at, grid))
        self._grid = grid
        self._solutions = solutions
        self._weights = np.array([sol.coefficients for sol in solutions])
        self._residuals = np.array([sol.residual for sol in solutions])
        flagged = sum(sol.rank_deficient for sol in solutions)
        logger.info(f"Solved {self.label} ansatz ({len(self.terms)} terms) on {len(grid)} points; "
                    f"max residual {self._residuals.max():.3e}, {flagged} rank-deficient")
        return self

    @property
    def solutions(self) -> List[VariationalSolution]:
        self.prepare()
        return self._solutions

    def residual_series(self) -> Tuple[np.ndarray, np.ndarray]:
        self.prepare()
        if self.mode != 'variational':
            return np.zeros(0), np.zeros(0)
        return self._grid, self._residuals

    def weights(self, s: float) -> np.ndarray:
        self.prepare()
        return np.array([np.interp(s, self._grid, column) for column in self._weights.T])

    def generator(self, s: float) -> Optional[np.ndarray]:
        """Gauge supermatrix at s, or None when no CD is applied."""
        if self.mode == 'none':
            return None
        if self.mode == 'exact':
            result = self.exact_gauge(s)
            self.skipped_pairs = max(self.skipped_pairs, result.skipped_pairs)
            return result.gauge.matrix
        return np.tensordot(self.weights(s), self._stack, axes=1)

    def notes(self) -> Tuple[str, ...]:
        """Solver diagnostics worth keeping with a trajectory."""
        notes = []
        if self.mode == 'variational' and self._solutions:
            flagged = sum(sol.rank_deficient for sol in self._solutions)
            if flagged:
                notes.append(f"{self.label}: {flagged} of {len(self._solutions)} grid points rank-deficient")
        if self.skipped_pairs:
            notes.append(f"{self.label}: skipped up to {self.skipped_pairs} degenerate pairs")
        return tuple(notes)

    def verify(self, s_values: Sequence[float]) -> List[float]:
        """Commutator residuals of the supplied gauge at the given schedule points."""
        residuals = []
        for s in s_values:
            L0 = self.scenario.lindbladian(s)
            gauge = self.generator(s)
            A = Superoperator(L0.basis, np.zeros_like(L0.matrix) if gauge is None else gauge)
            residuals.append(commutator_residual(A, L0, self.derivative(s)))
        return residuals
