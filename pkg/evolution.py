#!/usr/bin/env python3
"""
Time integration of the coherence vector under tau L_0(s) + A_s and the
observables recorded along each trajectory.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicSpline

from counterdiabatic import CdProvider
from exceptions import (
    ConfigError,
    DomainError,
    IntegrationInvalidError,
    InvalidStateError,
    StiffFailure,
)
from models import AnnealingScenario
from operators import CoherenceVector, check_hermitian, devectorize, vectorize
from spectral import jb_overlaps, track_along

logger = logging.getLogger(__name__)

GROUND_DEGENERACY_TOLERANCE = 1e-9
TRACE_TOLERANCE = 1e-6
POSITIVITY_SLACK = 1e-8

StateLike = Union[CoherenceVector, np.ndarray]


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    max_step: float = 0.01
    samples: int = 201
    method: str = 'RK45'
    generator_source: str = 'auto'
    max_evaluations: int = 500_000

    def __post_init__(self):
        if self.rel_tol <= 0 or self.abs_tol <= 0 or self.max_step <= 0:
            raise ConfigError("Integrator tolerances and max_step must be positive")
        if self.samples < 2:
            raise ConfigError(f"Need at least 2 output samples, got {self.samples}")
        if self.max_evaluations < 1:
            raise ConfigError(f"max_evaluations must be positive, got {self.max_evaluations}")
        if self.method not in ('RK45', 'DOP853', 'Radau', 'BDF'):
            raise ConfigError(f"Unsupported integration method: {self.method}")
        if self.generator_source not in GeneratorSource.MODES:
            raise ConfigError(f"Unknown generator source: {self.generator_source}")


class GeneratorSource:
    """L_0(s) for the integrator: rebuilt exactly, or spline-interpolated from a grid."""

    MODES = ('auto', 'exact', 'grid')

    def __init__(self, scenario: AnnealingScenario, mode: str = 'auto', grid_points: int = 201):
        if mode == 'auto':
            mode = 'exact' if scenario.dim <= 2 else 'grid'
        self.scenario = scenario
        self.mode = mode
        self._spline = None
        if mode == 'grid':
            grid = np.linspace(0.0, 1.0, grid_points)
            stack = np.array([scenario.lindbladian(s).matrix for s in grid])
            self._spline = CubicSpline(grid, stack, axis=0)
            logger.debug(f"Interpolating L_0 for {scenario.name} on {grid_points} points")

    def __call__(self, s: float) -> np.ndarray:
        if self._spline is None:
            return self.scenario.lindbladian(s).matrix
        return self._spline(s)


@dataclass(frozen=True, eq=False)
class Observables:
    s: np.ndarray
    p_minus: np.ndarray
    fidelity: np.ndarray
    jb_overlaps: np.ndarray
    trace_error: np.ndarray
    min_eig: np.ndarray
    ground_multiplicity: np.ndarray
    tracking_warnings: Tuple[str, ...] = ()

    def max_leakage(self, blocks: List[int]) -> float:
        if not blocks:
            return 0.0
        return float(np.max(self.jb_overlaps[:, blocks]))


@dataclass(frozen=True, eq=False)
class Trajectory:
    scenario: AnnealingScenario
    cd_label: str
    tau: float
    s: np.ndarray
    states: np.ndarray  # (samples, D^2) coherence vectors
    skipped_pairs: int = 0
    observables: Optional[Observables] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    def state(self, k: int) -> CoherenceVector:
        return CoherenceVector(self.scenario.basis, self.states[k])

    @property
    def final_state(self) -> CoherenceVector:
        return self.state(-1)


class _BudgetExhausted(Exception):
    def __init__(self, s: float):
        super().__init__(s)
        self.s = s


def _as_density(rho: StateLike) -> np.ndarray:
    return devectorize(rho) if isinstance(rho, CoherenceVector) else np.asarray(rho, dtype=complex)


def thermal_state(H: np.ndarray, beta: float) -> np.ndarray:
    """e^{-beta H} / Tr e^{-beta H}, shifted by the ground energy to avoid overflow."""
    H = check_hermitian(H)
    if beta <= 0:
        raise DomainError(f"Inverse temperature must be positive, got {beta}")
    energies, V = np.linalg.eigh(H)
    weights = np.exp(-beta * (energies - energies[0]))
    weights /= weights.sum()
    return (V * weights) @ V.conj().T


def ground_projector(H: np.ndarray, tol: float = GROUND_DEGENERACY_TOLERANCE) -> Tuple[np.ndarray, int]:
    """Projector on the (possibly degenerate) ground manifold and its multiplicity."""
    energies, V = np.linalg.eigh(check_hermitian(H))
    multiplicity = int(np.count_nonzero(energies - energies[0] < tol * max(1.0, abs(energies[0]))))
    ground = V[:, :multiplicity]
    return ground @ ground.conj().T, multiplicity


def ground_state_probability(rho: StateLike, H: np.ndarray,
                             tol: float = GROUND_DEGENERACY_TOLERANCE) -> float:
    """Tr[P_0 rho], P_0 the projector on the ground manifold of H."""
    projector, multiplicity = ground_projector(H, tol)
    if multiplicity > 1:
        logger.debug(f"Ground manifold is {multiplicity}-fold degenerate")
    return float(np.real(np.trace(projector @ _as_density(rho))))


def _validated_spectrum(rho: StateLike, name: str) -> Tuple[np.ndarray, np.ndarray]:
    rho = _as_density(rho)
    trace = np.trace(rho)
    if abs(trace - 1) > TRACE_TOLERANCE:
        logger.error(f"{name} has trace {trace:.8f}")
        raise InvalidStateError(f"{name} is not unit-trace (trace {trace:.8f})")
    rho = 0.5 * (rho + rho.conj().T)
    energies, V = np.linalg.eigh(rho)
    if energies[0] < -POSITIVITY_SLACK:
        logger.debug(f"{name} has eigenvalue {energies[0]:.2e}; clipped")
    return energies.clip(min=0), V


def uhlmann_fidelity(rho: StateLike, sigma: StateLike) -> float:
    """(Tr sqrt(sqrt(rho) sigma sqrt(rho)))^2 with negative eigenvalues clipped."""
    weights, V = _validated_spectrum(rho, 'rho')
    _validated_spectrum(sigma, 'sigma')
    sigma = _as_density(sigma)
    sigma = 0.5 * (sigma + sigma.conj().T)
    sqrt_rho = (V * np.sqrt(weights)) @ V.conj().T
    inner = sqrt_rho @ sigma @ sqrt_rho
    eigenvalues = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T)).clip(min=0)
    return float(min(1.0, np.sum(np.sqrt(eigenvalues)) ** 2))


def cptp_diagnostics(r: CoherenceVector) -> Tuple[float, float]:
    """(|Tr rho - 1|, smallest eigenvalue of the Hermitian part of rho)."""
    rho = devectorize(r)
    trace_error = abs(r.basis.dim * r.r[0] - 1)
    min_eig = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
    return float(trace_error), min_eig


def initial_state(scenario: AnnealingScenario) -> np.ndarray:
    """Pure ground state of H(0), or the thermal state at the bath temperature."""
    H0 = scenario.hamiltonian(0.0)
    if scenario.initial_state == 'thermal':
        if scenario.bath is None:
            raise ConfigError(f"Scenario {scenario.name} starts thermal but has no bath")
        return thermal_state(H0, scenario.bath.beta)
    _, V = np.linalg.eigh(H0)
    return np.outer(V[:, 0], V[:, 0].conj())


def adiabatic_reference(scenario: AnnealingScenario, s: float) -> np.ndarray:
    """State the dynamics should follow: the ISS (thermal state) or the ground projector."""
    H = scenario.hamiltonian(s)
    if scenario.bath is not None:
        return thermal_state(H, scenario.bath.beta)
    projector, multiplicity = ground_projector(H)
    return projector / multiplicity


def evolve(scenario: AnnealingScenario, cd: CdProvider, tau: float,
           config: Optional[IntegratorConfig] = None,
           source: Optional[GeneratorSource] = None) -> Trajectory:
    """Integrate d|rho>>/ds = [tau L_0(s) + A_s]|rho>> over s in [0, 1]."""
    config = config or IntegratorConfig()
    if tau <= 0:
        raise DomainError(f"Annealing time must be positive, got {tau}")
    source = source or GeneratorSource(scenario, config.generator_source)
    cd.prepare()

    def generator(s):
        s = min(max(s, 0.0), 1.0)
        M = tau * source(s)
        gauge = cd.generator(s)
        return M if gauge is None else M + gauge

    evaluations = 0

    def rhs(s, r):
        nonlocal evaluations
        evaluations += 1
        if evaluations > config.max_evaluations:
            raise _BudgetExhausted(s)
        return generator(s) @ r

    r0 = vectorize(initial_state(scenario), scenario.basis).r.astype(complex)
    samples = np.linspace(0.0, 1.0, config.samples)
    options = dict(method=config.method, t_eval=samples, rtol=config.rel_tol,
                   atol=config.abs_tol, max_step=config.max_step)
    if config.method in ('Radau', 'BDF'):
        options['jac'] = lambda s, r: generator(s)

    logger.debug(f"Integrating {scenario.name} with cd={cd.label}, tau={tau} ns")
    try:
        solution = solve_ivp(rhs, (0.0, 1.0), r0, **options)
    except _BudgetExhausted as e:
        message = (f"Integration of {scenario.name} (tau={tau}, cd={cd.label}) used up "
                   f"{config.max_evaluations} evaluations at s={e.s:.4f} with {config.method}; "
                   f"the generator is stiff, try method='Radau'")
        logger.error(message)
        raise StiffFailure(message) from None
    if solution.status == -1:
        message = (f"Integration failed for {scenario.name}, tau={tau}, cd={cd.label}: "
                   f"{solution.message}. Try a smaller eta_g2 or method='Radau'")
        logger.error(message)
        raise StiffFailure(message)

    states = solution.y.T
    drift = float(np.max(np.abs(scenario.dim * states[:, 0] - 1)))
    if drift > 100 * config.rel_tol:
        message = f"Trace drifted by {drift:.2e} for {scenario.name}, tau={tau}, cd={cd.label}"
        logger.error(message)
        raise IntegrationInvalidError(message)

    logger.info(f"Evolved {scenario.name} (tau={tau} ns, cd={cd.label}) in {solution.nfev} evaluations")
    notes = cd.notes()
    for note in notes:
        logger.info(note)
    return Trajectory(scenario, cd.label, float(tau), solution.t, states,
                      skipped_pairs=cd.skipped_pairs, notes=notes)


def compute_observables(trajectory: Trajectory) -> Observables:
    """Ground-state probability, fidelity, Jordan-block overlaps and CPTP diagnostics per sample."""
    scenario = trajectory.scenario
    track = track_along(scenario.lindbladian, trajectory.s)
    rows = []
    for k, s in enumerate(trajectory.s):
        r = trajectory.state(k)
        rho = devectorize(r)
        H = scenario.hamiltonian(s)
        projector, multiplicity = ground_projector(H)
        p_minus = float(np.real(np.trace(projector @ rho)))
        fidelity = uhlmann_fidelity(adiabatic_reference(scenario, s), rho)
        trace_error, min_eig = cptp_diagnostics(r)
        rows.append((p_minus, fidelity, jb_overlaps(track.spectra[k], r), trace_error, min_eig, multiplicity))

    p_minus, fidelity, overlaps, trace_error, min_eig, multiplicity = zip(*rows)
    return Observables(
        s=np.asarray(trajectory.s),
        p_minus=np.array(p_minus),
        fidelity=np.array(fidelity),
        jb_overlaps=np.array(overlaps),
        trace_error=np.array(trace_error),
        min_eig=np.array(min_eig),
        ground_multiplicity=np.array(multiplicity),
        tracking_warnings=track.warnings,
    )


def run_trajectory(scenario: AnnealingScenario, cd: CdProvider, tau: float,
                   config: Optional[IntegratorConfig] = None,
                   source: Optional[GeneratorSource] = None) -> Trajectory:
    """evolve followed by compute_observables."""
    trajectory = evolve(scenario, cd, tau, config, source)
    observables = compute_observables(trajectory)
    return Trajectory(trajectory.scenario, trajectory.cd_label, trajectory.tau, trajectory.s,
                      trajectory.states, trajectory.skipped_pairs, observables,
                      trajectory.notes + observables.tracking_warnings)
