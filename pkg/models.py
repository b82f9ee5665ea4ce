#!/usr/bin/env python3
"""
Physical models for the annealing simulations: the quintic schedule, the single
qubit and ferromagnetic p-spin Hamiltonians, collective spin operators, the Ohmic
bath spectral functions and the weak-coupling adiabatic master equation (AME).

Units: angular frequencies in rad/ns with hbar = k_B = 1, times in ns.
"""

import logging
import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy import constants
from scipy.integrate import IntegrationWarning, quad
from scipy.interpolate import CubicSpline

from exceptions import (
    DomainError,
    InvalidDimensionError,
    InvalidGeneratorError,
    InvalidRateError,
    InvalidStateError,
    NumericalFailure,
)
from operators import (
    PAULI,
    OperatorBasis,
    Superoperator,
    build_basis,
    check_hermitian,
    dissipator_superop,
    unitary_superop,
)

logger = logging.getLogger(__name__)

BOHR_MERGE_TOLERANCE = 1e-9
DEFAULT_OMEGA_C = 8 * math.pi
LAMB_CUTOFF_FACTOR = 40.0
WEAK_COUPLING_LIMIT = 0.1

ArrayLike = Union[float, np.ndarray]


# --- schedule -----------------------------------------------------------------

def _check_s(s: ArrayLike) -> ArrayLike:
    arr = np.asarray(s, dtype=float)
    if np.any(arr < -1e-12) or np.any(arr > 1 + 1e-12) or not np.all(np.isfinite(arr)):
        logger.error(f"Schedule parameter outside [0, 1]: {s}")
        raise DomainError(f"Schedule parameter must lie in [0, 1], got {s}")
    arr = np.clip(arr, 0.0, 1.0)
    return float(arr) if arr.ndim == 0 else arr


def schedule_q(s: ArrayLike) -> ArrayLike:
    """q(s) = 6s^5 - 15s^4 + 10s^3."""
    s = _check_s(s)
    return s ** 3 * (10 + s * (-15 + 6 * s))


def schedule_dq(s: ArrayLike) -> ArrayLike:
    """q'(s) = 30s^4 - 60s^3 + 30s^2."""
    s = _check_s(s)
    return 30 * s ** 2 * (1 - s) ** 2


# --- Hamiltonians ---------------------------------------------------------------

@dataclass(frozen=True)
class QubitModel:
    omega_x: float = 1.0
    omega_z: float = 1.0

    def __post_init__(self):
        if self.omega_x <= 0 or self.omega_z <= 0:
            raise InvalidGeneratorError(f"Qubit frequencies must be positive, got {self.omega_x}, {self.omega_z}")

    @property
    def dim(self) -> int:
        return 2

    @property
    def n_spins(self) -> int:
        return 1

    def hamiltonian(self, s: float) -> np.ndarray:
        return hamiltonian_qubit(self, s)

    def hamiltonian_derivative(self, s: float) -> np.ndarray:
        dq = schedule_dq(s)
        return dq * (0.5 * self.omega_x * PAULI['X'] - 0.5 * self.omega_z * PAULI['Z'])

    def default_coupling(self) -> np.ndarray:
        return PAULI['Z'].copy()

    def energy_bound(self) -> float:
        return 0.5 * (self.omega_x + self.omega_z)


@dataclass(frozen=True)
class PSpinModel:
    n: int = 3
    p: int = 3
    gamma: float = 1.0
    j: float = 1.0

    def __post_init__(self):
        if self.n < 1 or self.p < 1:
            raise InvalidDimensionError(f"p-spin needs n >= 1 and p >= 1, got n={self.n}, p={self.p}")

    @property
    def dim(self) -> int:
        return self.n + 1

    @property
    def n_spins(self) -> int:
        return self.n

    def _longitudinal(self) -> np.ndarray:
        _, _, sz = collective_spin_ops(self.n)
        return np.linalg.matrix_power(2 * sz, self.p) / self.n ** (self.p - 1)

    def hamiltonian(self, s: float) -> np.ndarray:
        return hamiltonian_pspin(self, s)

    def hamiltonian_derivative(self, s: float) -> np.ndarray:
        sx, _, _ = collective_spin_ops(self.n)
        return schedule_dq(s) * (2 * self.gamma * sx - self.j * self._longitudinal())

    def default_coupling(self) -> np.ndarray:
        return collective_spin_ops(self.n)[2].copy()

    def energy_bound(self) -> float:
        return self.gamma * self.n + abs(self.j) * self.n


Model = Union[QubitModel, PSpinModel]


def hamiltonian_qubit(model: QubitModel, s: float) -> np.ndarray:
    """H_0(s) = -[1-q](w_x/2) sigma_x - q (w_z/2) sigma_z."""
    q = schedule_q(s)
    return -(1 - q) * 0.5 * model.omega_x * PAULI['X'] - q * 0.5 * model.omega_z * PAULI['Z']


@lru_cache(maxsize=None)
def _spin_ops(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    S = n / 2.0
    dof = n + 1
    plus = np.zeros((dof, dof), dtype=complex)
    for i in range(dof - 1):
        k = S - i
        plus[i, i + 1] = np.sqrt(S * (S + 1) - k * (k - 1))
    sx = (plus + plus.T) / 2
    sy = (plus - plus.T) / 2j
    sz = np.diag(np.arange(S, -S - 0.1, -1)).astype(complex)
    for op in (sx, sy, sz):
        op.setflags(write=False)
    return sx, sy, sz


def collective_spin_ops(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin-(n/2) matrices (S_x, S_y, S_z) on the symmetric subspace, basis m = S ... -S."""
    if n < 1:
        raise InvalidDimensionError(f"Collective spin needs n >= 1, got {n}")
    return _spin_ops(int(n))


def hamiltonian_pspin(model: PSpinModel, s: float) -> np.ndarray:
    """H_p(s) = -2 Gamma (1-q) S_x - (J q / n^(p-1)) (2 S_z)^p."""
    q = schedule_q(s)
    sx, _, _ = collective_spin_ops(model.n)
    return -2 * model.gamma * (1 - q) * sx - model.j * q * model._longitudinal()


def instantaneous_gap(H: np.ndarray) -> float:
    energies = np.linalg.eigvalsh(H)
    return float(energies[1] - energies[0])


# --- Ohmic bath ---------------------------------------------------------------

def temperature_from_millikelvin(mk: float) -> float:
    """k_B T / hbar in rad/ns."""
    return constants.k * mk * 1e-3 / constants.hbar * 1e-9


@dataclass(frozen=True)
class BathSpec:
    eta_g2: float
    beta: float
    omega_c: float = DEFAULT_OMEGA_C
    include_lamb_shift: bool = True

    def __post_init__(self):
        if self.eta_g2 < 0:
            raise InvalidRateError(f"eta_g2 must be nonnegative, got {self.eta_g2}")
        if self.beta <= 0 or self.omega_c <= 0:
            raise InvalidRateError(f"beta and omega_c must be positive, got {self.beta}, {self.omega_c}")
        if self.eta_g2 > WEAK_COUPLING_LIMIT:
            logger.warning(f"eta_g2 = {self.eta_g2} is outside the weak-coupling regime")


def _gamma_scalar(w: float, eta_g2: float, beta: float, omega_c: float) -> float:
    x = beta * w
    if abs(x) < 1e-12:
        ratio = 1.0 / beta
    elif x < -700:
        return 0.0
    else:
        ratio = w / -math.expm1(-x)
    return 2 * math.pi * eta_g2 * ratio * math.exp(-abs(w) / omega_c)


def gamma_spectral(omega: ArrayLike, bath: BathSpec) -> ArrayLike:
    """gamma(w) = 2 pi eta g^2 w e^{-|w|/w_c} / (1 - e^{-beta w}), with limit 2 pi eta g^2 / beta at w = 0."""
    w = np.asarray(omega, dtype=float)
    x = bath.beta * w
    with np.errstate(over='ignore', divide='ignore', invalid='ignore'):
        ratio = np.where(np.abs(x) < 1e-12, 1.0 / bath.beta, w / -np.expm1(-x))
    ratio = np.where(x < -700, 0.0, ratio)
    value = 2 * np.pi * bath.eta_g2 * ratio * np.exp(-np.abs(w) / bath.omega_c)
    return float(value) if value.ndim == 0 else value


def lamb_shift_zeta(omega: float, bath: BathSpec, rel_tol: float = 1e-10,
                    window: Optional[float] = None, limit: int = 200) -> float:
    """
    zeta(w) = P.V. int gamma(w') / (w - w') dw' / 2pi.

    The window (w - delta, w + delta) is integrated with QUADPACK's Cauchy-weight
    rule, the rest with adaptive quadrature out to 40 w_c.
    """
    if bath.eta_g2 == 0:
        return 0.0
    omega = float(omega)
    delta = window if window is not None else 0.05 * bath.omega_c
    cutoff = LAMB_CUTOFF_FACTOR * bath.omega_c + abs(omega)
    args = (bath.eta_g2, bath.beta, bath.omega_c)
    epsabs = rel_tol * bath.eta_g2 * bath.omega_c

    def outer(x):
        return _gamma_scalar(x, *args) / (x - omega)

    pieces = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter('always', IntegrationWarning)
        pieces.append(quad(_gamma_scalar, omega - delta, omega + delta, args=args,
                           weight='cauchy', wvar=omega, epsabs=epsabs, epsrel=rel_tol, limit=limit))
        for a, b in ((-cutoff, omega - delta), (omega + delta, cutoff)):
            points = [0.0] if a < 0 < b else None
            pieces.append(quad(outer, a, b, epsabs=epsabs, epsrel=rel_tol, limit=limit, points=points))

    value = sum(p[0] for p in pieces)
    abserr = sum(p[1] for p in pieces)
    failures = [w for w in caught if issubclass(w.category, IntegrationWarning)]
    if failures:
        message = (f"Lamb shift quadrature did not converge at omega={omega}: {failures[0].message} "
                   f"(error estimate {abserr:.2e})")
        logger.error(message)
        raise NumericalFailure(message, residual=abserr)
    if abserr > max(1e-6 * abs(value), 100 * epsabs):
        raise NumericalFailure(f"Lamb shift quadrature error {abserr:.2e} too large at omega={omega}",
                               residual=abserr)
    return -value / (2 * math.pi)


class LambShiftTable:
    """zeta(w) tabulated on [-w_max, w_max] and interpolated with a cubic spline."""

    def __init__(self, bath: BathSpec, w_max: float, points: int = 401):
        self.bath = bath
        self.w_max = w_max
        grid = np.linspace(-w_max, w_max, points)
        values = np.array([lamb_shift_zeta(w, bath) for w in grid])
        self._spline = CubicSpline(grid, values)
        logger.info(f"Tabulated Lamb shift on [{-w_max:.2f}, {w_max:.2f}] rad/ns ({points} points)")

    def __call__(self, omega: float) -> float:
        if abs(omega) > self.w_max:
            return lamb_shift_zeta(omega, self.bath)
        return float(self._spline(omega))


@lru_cache(maxsize=32)
def lamb_shift_table(bath: BathSpec, w_max: float) -> LambShiftTable:
    return LambShiftTable(bath, w_max)


# --- annealing scenario and AME -------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnnealingScenario:
    name: str
    model: Model
    coupling: np.ndarray
    bath: Optional[BathSpec] = None
    initial_state: str = 'ground'
    tabulate_lamb_shift: bool = True

    def __post_init__(self):
        U = check_hermitian(self.coupling, 'coupling operator')
        if U.shape[0] != self.model.dim:
            raise InvalidDimensionError(
                f"Coupling operator has dimension {U.shape[0]}, model has {self.model.dim}")
        if self.initial_state not in ('ground', 'thermal'):
            raise InvalidStateError(f"Unknown initial state mode: {self.initial_state}")

    @property
    def dim(self) -> int:
        return self.model.dim

    @property
    def basis(self) -> OperatorBasis:
        return build_basis(self.model.dim)

    def hamiltonian(self, s: float) -> np.ndarray:
        return self.model.hamiltonian(s)

    def hamiltonian_derivative(self, s: float) -> np.ndarray:
        return self.model.hamiltonian_derivative(s)

    def zeta(self, omega: float) -> float:
        if self.bath is None or not self.bath.include_lamb_shift:
            return 0.0
        if self.tabulate_lamb_shift:
            w_max = math.ceil(2.2 * self.model.energy_bound())
            return lamb_shift_table(self.bath, float(w_max))(omega)
        return lamb_shift_zeta(omega, self.bath)

    def lindbladian(self, s: float) -> Superoperator:
        if self.bath is None:
            return unitary_superop(self.hamiltonian(s), self.basis)
        return build_ame_lindbladian(self, s)


def qubit_scenario(omega_x: float = 1.0, omega_z: float = 1.0, bath: Optional[BathSpec] = None,
                   name: str = 'qubit', **kwargs) -> AnnealingScenario:
    model = QubitModel(omega_x, omega_z)
    return AnnealingScenario(name, model, model.default_coupling(), bath, **kwargs)


def pspin_scenario(n: int = 3, p: int = 3, gamma: float = 1.0, j: float = 1.0,
                   bath: Optional[BathSpec] = None, name: str = 'pspin',
                   initial_state: str = 'thermal', **kwargs) -> AnnealingScenario:
    model = PSpinModel(n, p, gamma, j)
    return AnnealingScenario(name, model, model.default_coupling(), bath,
                             initial_state=initial_state, **kwargs)


def bohr_frequency_bins(energies: np.ndarray,
                        tol: float = BOHR_MERGE_TOLERANCE) -> List[Tuple[float, np.ndarray]]:
    """
    Group w_ab = e_b - e_a, the energy released by the jump |e_b> -> |e_a>, into bins
    of width tol; returns (frequency, mask) pairs with mask[a, b] marking members.
    """
    omegas = energies[None, :] - energies[:, None]
    flat = omegas.ravel()
    order = np.argsort(flat, kind='stable')
    groups: List[List[int]] = [[order[0]]]
    for prev, idx in zip(order[:-1], order[1:]):
        if flat[idx] - flat[prev] <= tol:
            groups[-1].append(idx)
        else:
            groups.append([idx])

    bins = []
    for group in groups:
        values = flat[group]
        if values.max() - values.min() > tol:
            logger.warning(f"Bohr frequency bin spans {values.max() - values.min():.2e} rad/ns; "
                           f"grouping is ambiguous near omega={values.mean():.6f}")
        mask = np.zeros(flat.shape, dtype=bool)
        mask[group] = True
        bins.append((float(values.mean()), mask.reshape(omegas.shape)))
    return bins


def build_ame_lindbladian(scenario: AnnealingScenario, s: float) -> Superoperator:
    """
    Weak-coupling adiabatic Lindbladian at schedule point s:
    -i[H_0 + H_LS, .] + sum_w gamma(w) (G_w . G_w^dag - 1/2 {G_w^dag G_w, .}).
    """
    bath = scenario.bath
    if bath is None:
        raise InvalidGeneratorError(f"Scenario {scenario.name} has no bath; the AME needs one")
    H = scenario.hamiltonian(s)
    energies, V = np.linalg.eigh(H)
    U_eig = V.conj().T @ scenario.coupling @ V

    jumps, rates = [], []
    H_ls = np.zeros_like(H)
    for omega, mask in bohr_frequency_bins(energies):
        G_eig = np.where(mask, U_eig, 0)
        if np.linalg.norm(G_eig) < 1e-14:
            continue
        G = V @ G_eig @ V.conj().T
        jumps.append(G)
        rates.append(float(gamma_spectral(omega, bath)))
        if bath.include_lamb_shift and bath.eta_g2 > 0:
            H_ls = H_ls + scenario.zeta(omega) * (G.conj().T @ G)

    H_total = H + 0.5 * (H_ls + H_ls.conj().T) if bath.include_lamb_shift else H
    return unitary_superop(H_total, scenario.basis) + dissipator_superop(jumps, rates, scenario.basis)
