#!/usr/bin/env python3
"""
Validation suite behind `main.py validate`: structural invariants of every module,
the closed-system spectrum and gauge oracles, detailed balance, exactness of the
Jordan-basis CD construction (plus a mutation check that it can fail), and the
end-to-end annealing numbers.
"""

import json
import logging
import math
import tempfile
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from config import PRESET_ALIASES, PRESETS_DIR, RunConfig, load_preset
from counterdiabatic import (
    CdProvider,
    assemble_lsq,
    closed_system_gauge_qubit,
    commutator_residual,
    exact_cd,
    kms_violation_report,
    lindbladian_derivative,
    solve_variational,
)
from evolution import IntegratorConfig, run_trajectory, thermal_state
from exceptions import SimulationError
from models import (
    BathSpec,
    collective_spin_ops,
    gamma_spectral,
    instantaneous_gap,
    lamb_shift_zeta,
    pspin_scenario,
    qubit_scenario,
    schedule_dq,
    schedule_q,
    temperature_from_millikelvin,
)
from operators import (
    Superoperator,
    build_basis,
    devectorize,
    dissipator_superop,
    hs_inner,
    superop_commutator,
    unitary_superop,
    vectorize,
)
from results import ResultStore
from spectral import decompose, find_iss, track_along

logger = logging.getLogger(__name__)

REFERENCE_TEMPERATURE = 2.23
BETA = 1 / REFERENCE_TEMPERATURE


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ''


def random_hermitian(rng: np.random.Generator, D: int) -> np.ndarray:
    A = rng.normal(size=(D, D)) + 1j * rng.normal(size=(D, D))
    return (A + A.conj().T) / 2


def qubit_bath(eta_g2: float = 1e-4, include_lamb_shift: bool = True) -> BathSpec:
    return BathSpec(eta_g2, BETA, include_lamb_shift=include_lamb_shift)


class ValidationSuite:
    def __init__(self, seed: int = 1234, quick: bool = False):
        self.rng = np.random.default_rng(seed)
        self.quick = quick
        self.results: List[CheckResult] = []

    def record(self, name: str, value: float, threshold: float, passed: Optional[bool] = None,
               detail: str = '') -> None:
        value = float(value)
        passed = bool(value < threshold) if passed is None else bool(passed)
        self.results.append(CheckResult(name, passed, value, threshold, detail))
        level = logging.INFO if passed else logging.WARNING
        logger.log(level, f"{'PASS' if passed else 'FAIL'} {name}: {value:.3e} (threshold {threshold:.1e}) {detail}")

    def _guarded(self, name: str, check: Callable[[], None]) -> None:
        try:
            check()
        except SimulationError as e:
            logger.error(f"Check {name} raised {type(e).__name__}: {e}")
            self.results.append(CheckResult(name, False, math.nan, math.nan, f"{type(e).__name__}: {e}"))

    # --- operator core ---

    def check_operator_core(self) -> None:
        worst = 0.0
        for D in (2, 3, 4, 5):
            basis = build_basis(D)
            gram = np.array([[hs_inner(a, b) for b in basis.elements] for a in basis.elements])
            worst = max(worst, np.max(np.abs(gram - np.eye(D * D))))
        self.record('basis_orthonormality', worst, 1e-12)

        worst_round, worst_row, worst_imag = 0.0, 0.0, 0.0
        for D in (2, 3, 4):
            basis = build_basis(D)
            rho = random_hermitian(self.rng, D)
            worst_round = max(worst_round, np.max(np.abs(devectorize(vectorize(rho, basis)) - rho)))
            L = unitary_superop(random_hermitian(self.rng, D), basis)
            jumps = [self.rng.normal(size=(D, D)) + 1j * self.rng.normal(size=(D, D)) for _ in range(2)]
            L = L + dissipator_superop(jumps, [0.3, 1.1], basis)
            worst_row = max(worst_row, L.trace_row_error())
            worst_imag = max(worst_imag, np.max(np.abs(np.imag(L.matrix))))
        pspin = pspin_scenario(bath=BathSpec(1e-2, BETA))
        worst_imag = max(worst_imag, np.max(np.abs(np.imag(pspin.lindbladian(0.5).matrix))))
        self.record('vectorization_round_trip', worst_round, 1e-12)
        self.record('trace_preserving_rows', worst_row, 1e-12)
        # Hermiticity-preserving maps have real supermatrices in a Hermitian basis
        self.record('hermiticity_preserving_real_supermatrix', worst_imag, 1e-12)

    # --- models ---

    def check_models(self) -> None:
        endpoint = max(abs(schedule_q(0.0)), abs(schedule_q(1.0) - 1), abs(schedule_dq(0.0)), abs(schedule_dq(1.0)))
        self.record('schedule_endpoints', endpoint, 1e-15)

        model = qubit_scenario().model
        gaps = [instantaneous_gap(model.hamiltonian(s)) for s in np.linspace(0, 1, 101)]
        self.record('qubit_minimum_gap', abs(min(gaps) - 1 / math.sqrt(2)), 1e-10,
                    passed=abs(min(gaps) - 1 / math.sqrt(2)) < 1e-10 and int(np.argmin(gaps)) == 50)

        worst = 0.0
        for n in range(1, 11):
            sx, sy, sz = collective_spin_ops(n)
            for a, b, c in ((sx, sy, sz), (sy, sz, sx), (sz, sx, sy)):
                worst = max(worst, np.max(np.abs(a @ b - b @ a - 1j * c)))
        self.record('spin_commutators', worst, 1e-12)

        bath = qubit_bath()
        omegas = np.logspace(-3, 2, 40)
        ratio = gamma_spectral(-omegas, bath) / gamma_spectral(omegas, bath)
        self.record('kms_identity', np.max(np.abs(ratio / np.exp(-bath.beta * omegas) - 1)), 1e-12)

        converted = temperature_from_millikelvin(17.0)
        self.record('unit_convention_17mK', abs(converted / REFERENCE_TEMPERATURE - 1), 0.01)

        z = lamb_shift_zeta(0.7, bath)
        z_half = lamb_shift_zeta(0.7, bath, window=0.025 * bath.omega_c)
        z_tight = lamb_shift_zeta(0.7, bath, rel_tol=1e-12, limit=400)
        self.record('lamb_shift_window', abs(z - z_half) / abs(z), 1e-6)
        self.record('lamb_shift_resolution', abs(z - z_tight) / abs(z), 1e-6)

        for lamb in (True, False):
            scenario = qubit_scenario(bath=qubit_bath(include_lamb_shift=lamb))
            L = scenario.lindbladian(0.5)
            spec = decompose(L)
            _, iss = find_iss(spec)
            thermal = thermal_state(scenario.hamiltonian(0.5), bath.beta)
            tag = 'lamb' if lamb else 'nolamb'
            self.record(f'ame_qubit_row0_{tag}', L.trace_row_error(), 1e-10)
            self.record(f'ame_qubit_spectrum_left_half_plane_{tag}', max(0.0, np.max(spec.eigenvalues.real)), 1e-9)
            self.record(f'ame_qubit_iss_thermal_{tag}', np.max(np.abs(devectorize(iss) - thermal)), 1e-8)

        closed = qubit_scenario(bath=BathSpec(0.0, BETA))
        reference = unitary_superop(closed.hamiltonian(0.3), closed.basis)
        self.record('ame_zero_coupling_is_unitary',
                    np.max(np.abs(closed.lindbladian(0.3).matrix - reference.matrix)), 1e-15,
                    passed=np.array_equal(closed.lindbladian(0.3).matrix, reference.matrix))

    # --- spectral ---

    def check_spectral(self) -> None:
        worst_eig, worst_mult = 0.0, 0
        for D in (2, 3, 4):
            H = random_hermitian(self.rng, D)
            energies = np.linalg.eigvalsh(H)
            expected = np.array([-1j * (a - b) for a in energies for b in energies])
            spec = decompose(unitary_superop(H, build_basis(D)))
            distance = np.max([np.min(np.abs(expected - lam)) for lam in spec.eigenvalues])
            worst_eig = max(worst_eig, distance)
            zeros = int(np.count_nonzero(np.abs(spec.eigenvalues) < 1e-10))
            worst_mult = max(worst_mult, abs(zeros - D))
        self.record('unitary_spectrum_bohr_frequencies', worst_eig, 1e-10)
        self.record('unitary_zero_multiplicity', worst_mult, 0.5)

        scenario = pspin_scenario(bath=BathSpec(1e-4, BETA))
        L = scenario.lindbladian(0.5)
        spec = decompose(L)
        self.record('biorthonormality', spec.biorthonormality_error(), 1e-10)
        self.record('reconstruction', np.linalg.norm(spec.reconstruct() - L.matrix) / np.linalg.norm(L.matrix), 1e-8)
        distinct = len(np.unique(np.round(spec.eigenvalues, 9)))
        self.record('pspin_one_dimensional_blocks', abs(distinct - 16), 0.5,
                    passed=spec.one_d and distinct == 16 and spec.size == 16)
        _, iss = find_iss(spec)
        thermal = thermal_state(scenario.hamiltonian(0.5), scenario.bath.beta)
        self.record('pspin_iss_thermal', np.max(np.abs(devectorize(iss) - thermal)), 1e-6)

        qubit = qubit_scenario(bath=qubit_bath())
        track = track_along(qubit.lindbladian, np.linspace(0, 1, 101))
        self.record('qubit_tracking_overlap', 1 - track.min_overlap, 0.1)

    # --- counterdiabatic ---

    def check_counterdiabatic(self) -> None:
        qubit = qubit_scenario(bath=qubit_bath())
        for s in (0.25, 0.5, 0.75):
            L0 = qubit.lindbladian(s)
            spec = decompose(L0)
            dL = lindbladian_derivative(qubit.lindbladian, s).superop
            A = exact_cd(spec, dL).gauge
            self.record(f'exact_cd_commutator_residual_s{s}', commutator_residual(A, L0, dL), 1e-8)

            X = spec.left @ (dL - superop_commutator(A, L0)).matrix @ spec.right
            off = X - np.diag(np.diag(X))
            self.record(f'exact_cd_offdiagonal_s{s}', np.max(np.abs(off)), 1e-8)
            bare = np.diag(spec.left @ dL.matrix @ spec.right)
            self.record(f'exact_cd_diagonal_indifference_s{s}', np.max(np.abs(np.diag(X) - bare)), 1e-10)

            # mutation: the sign-flipped denominator must break the commutator condition
            lam = spec.eigenvalues
            gaps = lam[None, :] - lam[:, None]
            G = spec.left @ dL.matrix @ spec.right
            keep = np.abs(gaps) > 1e-9
            flipped = spec.right @ np.where(keep, G / np.where(keep, -gaps, 1), 0) @ spec.left
            mutated = commutator_residual(Superoperator(L0.basis, flipped), L0, dL)
            self.record(f'mutation_detected_s{s}', mutated, 1e-6, passed=mutated > 1e-6)

            fine = lindbladian_derivative(qubit.lindbladian, s, h=5e-6).superop
            self.record(f'derivative_self_convergence_s{s}',
                        np.linalg.norm((dL - fine).matrix) / np.linalg.norm(fine.matrix), 1e-5)

        closed = qubit_scenario()
        provider = CdProvider.from_case(closed, 'sigma_y', grid_points=21).prepare()
        worst_coeff, worst_res = 0.0, 0.0
        for s, solution in zip(np.linspace(0, 1, 21), provider.solutions):
            y = solution.coefficient('sigma_y')
            worst_coeff = max(worst_coeff, abs(2 * y - closed_system_gauge_qubit(s, closed.model)))
        worst_res = max(provider.verify(np.linspace(0, 1, 21)))
        self.record('closed_qubit_gauge_matches_analytic', worst_coeff, 1e-8)
        self.record('closed_qubit_variational_residual', worst_res, 1e-8)

        pspin = pspin_scenario(bath=BathSpec(1e-2, BETA))
        full = CdProvider.from_case(pspin, 'Full')
        solution = full.solve_at(0.5)
        rates = [c for t, c in zip(solution.terms, solution.coefficients) if t.constrained]
        self.record('nnls_nonnegativity', max(0.0, -min(rates)), 1e-300, passed=min(rates) >= 0)
        self.record('variational_not_worse_than_zero', solution.residual - solution.residual_at_zero, 1e-12)

        L0 = pspin.lindbladian(0.5)
        dL = lindbladian_derivative(pspin.lindbladian, 0.5, check=False).superop
        cyclic = CdProvider.from_case(pspin, 'Cyclic')
        ansatz = cyclic.ansatz_superops()
        constrained = [t.constrained for t in cyclic.terms]
        base = solve_variational(*assemble_lsq(L0, dL, ansatz), constrained)
        scaled = solve_variational(*assemble_lsq(L0 * 3.0, dL * 3.0, ansatz), constrained)
        self.record('scale_covariance', np.max(np.abs(base.coefficients - scaled.coefficients)), 1e-8)

        bath_only = CdProvider.from_case(pspin, 'Bath').solve_at(0.5)
        report = kms_violation_report(bath_only, pspin, 0.5)
        # active fitted channels must show up as violations
        expected = not bath_only.active.any()
        self.record('kms_report_flags_fitted_bath_rates', report.max_log_deviation, 0.0,
                    passed=report.satisfied == expected and (expected or bool(report.violations)),
                    detail=f"active={int(np.count_nonzero(bath_only.active))}, satisfied={report.satisfied}, "
                           f"violations={len(report.violations)}")

    # --- harness ---

    def check_harness(self) -> None:
        worst = 0
        for path in sorted(PRESETS_DIR.glob('*.json')):
            config = load_preset(path.stem)
            again = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))
            worst += int(again != config or again.to_dict() != config.to_dict())
        aliases = sum(load_preset(alias) != load_preset(name) for alias, name in PRESET_ALIASES.items())
        self.record('config_round_trip', worst + aliases, 0.5, detail=f"{len(PRESET_ALIASES)} aliases")

        scenario = qubit_scenario(bath=qubit_bath())
        integrator = IntegratorConfig(samples=21)
        blobs = []
        with tempfile.TemporaryDirectory() as tmp:
            for run in ('a', 'b'):
                trajectory = run_trajectory(scenario, CdProvider.from_case(scenario, 'exact'), 1.0, integrator)
                path = ResultStore(str(Path(tmp) / run), 'determinism').write_trajectory(
                    trajectory.observables, 1.0, 'exact')
                blobs.append(Path(path).read_bytes())
        self.record('csv_determinism', int(blobs[0] != blobs[1]), 0.5)

    # --- end to end ---

    def _final(self, scenario, case: str, tau: float):
        provider = CdProvider.from_case(scenario, case)
        return run_trajectory(scenario, provider, tau, IntegratorConfig()).observables

    def check_trajectories(self) -> None:
        closed = qubit_scenario()
        p1 = self._final(closed, 'none', 1.0).p_minus[-1]
        p10 = self._final(closed, 'none', 10.0).p_minus[-1]
        p100 = self._final(closed, 'none', 100.0).p_minus[-1]
        self.record('closed_qubit_tau10', abs(p10 - 0.91), 0.03)
        self.record('closed_qubit_tau100', 0.99 - p100, 0.0, passed=p100 >= 0.99)
        self.record('closed_qubit_monotone_in_tau', max(p1 - p10, p10 - p100, 0.0), 1e-9,
                    passed=p1 <= p10 <= p100, detail=f"P_minus {p1:.4f}, {p10:.4f}, {p100:.4f}")

        for lamb in (True, False):
            tag = 'lamb' if lamb else 'nolamb'
            scenario = qubit_scenario(bath=qubit_bath(include_lamb_shift=lamb))
            self.record(f'open_qubit_tau10_{tag}', abs(self._final(scenario, 'none', 10.0).p_minus[-1] - 0.90), 0.03)
            self.record(f'open_qubit_tau100_{tag}', abs(self._final(scenario, 'none', 100.0).p_minus[-1] - 0.95), 0.03)

        scenario = qubit_scenario(bath=qubit_bath())
        for tau in (1.0, 10.0, 100.0):
            obs = self._final(scenario, 'exact', tau)
            self.record(f'exact_cd_block_leakage_tau{tau:g}', obs.max_leakage([2, 3]), 1e-6)
            self.record(f'trace_preservation_tau{tau:g}', np.max(obs.trace_error), 1e-8)
            self.record(f'positivity_tau{tau:g}', max(0.0, -np.min(obs.min_eig)), 1e-6)

        bare = self._final(scenario, 'none', 1.0).max_leakage([2, 3])
        variational = self._final(scenario, 'sigma_y', 1.0).max_leakage([2, 3])
        self.record('variational_sigma_y_leakage_tau1', variational, 1e-2, passed=variational < 1e-2 and bare > 1e-1,
                    detail=f"no-CD leakage {bare:.3f}")

        pspin = pspin_scenario(bath=BathSpec(1e-4, BETA))
        fidelity = np.min(self._final(pspin, 'none', 10.0).fidelity)
        self.record('pspin_fidelity_floor', 0.94 - fidelity, 0.0, passed=fidelity >= 0.94)

        bath = self._final(pspin, 'Bath', 1.0).fidelity[-1]
        none = self._final(pspin, 'none', 1.0).fidelity[-1]
        self.record('pspin_bath_ansatz_inert_weak_coupling', abs(bath - none), 0.02)

        ground = pspin_scenario(bath=BathSpec(1e-2, BETA), initial_state='ground')
        final = {case: self._final(ground, case, 10.0).p_minus[-1] for case in ('none', 'Bath', 'Sy', 'Cyclic')}
        ordered = (final['Sy'] > final['none'] and final['Cyclic'] > final['none']
                   and final['Bath'] <= final['none'] + 0.02)
        self.record('pspin_ground_start_ansatz_ordering', final['none'] - min(final['Sy'], final['Cyclic']), 0.0,
                    passed=ordered, detail=', '.join(f"{k}={v:.3f}" for k, v in final.items()))

    def run(self) -> List[CheckResult]:
        sections = [('operator_core', self.check_operator_core), ('models', self.check_models),
                    ('spectral', self.check_spectral), ('counterdiabatic', self.check_counterdiabatic),
                    ('harness', self.check_harness)]
        if not self.quick:
            sections.append(('trajectories', self.check_trajectories))
        for name, check in sections:
            logger.info(f"Running {name} checks...")
            self._guarded(name, check)
        return self.results


def cmd_validate(report_path: Optional[str] = None, seed: int = 1234,
                 quick: bool = False) -> Tuple[int, Dict]:
    """Run every check; exit status 0 only when all pass."""
    results = ValidationSuite(seed, quick).run()
    failed = [r.name for r in results if not r.passed]
    report = {
        'status': 'success' if not failed else 'failed',
        'checks': [asdict(r) for r in results],
        'failed': failed,
        'seed': seed,
    }
    if report_path:
        with open(report_path, 'w') as f:
            json.dump(report, f, indent=2, default=str)
        logger.info(f"Validation report written to {report_path}")
    logger.info(f"Validation finished: {len(results) - len(failed)}/{len(results)} checks passed")
    return (0 if not failed else 1), report
