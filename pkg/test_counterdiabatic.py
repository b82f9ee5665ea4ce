#!/usr/bin/env python3
"""
Tests for the exact and variational counterdiabatic superoperators
"""

import numpy as np
import pytest

from counterdiabatic import (
    ANSATZ_CASES,
    AnsatzTerm,
    CdProvider,
    ansatz_supermatrix,
    assemble_lsq,
    closed_system_gauge_qubit,
    commutator_residual,
    exact_cd,
    kms_violation_report,
    lindbladian_derivative,
    resolve_ansatz,
    solve_variational,
)
from exceptions import ConfigError, DomainError, InvalidDimensionError, UnsupportedSpectrumError
from models import BathSpec, QubitModel, pspin_scenario, qubit_scenario
from operators import PAULI, Superoperator, build_basis, unitary_superop
from spectral import decompose

BETA = 1 / 2.23


@pytest.fixture(scope='module')
def open_qubit():
    return qubit_scenario(bath=BathSpec(1e-4, BETA))


@pytest.fixture(scope='module')
def open_pspin():
    return pspin_scenario(bath=BathSpec(1e-4, BETA))


def test_closed_derivative_matches_analytic():
    closed = qubit_scenario()
    s = 0.42
    numeric = lindbladian_derivative(closed.lindbladian, s)
    analytic = unitary_superop(closed.hamiltonian_derivative(s), closed.basis)
    assert numeric.reliable
    assert np.allclose(numeric.superop.matrix, analytic.matrix, atol=1e-8)


def test_derivative_uses_one_sided_differences_at_endpoints(open_qubit):
    for s in (0.0, 1.0):
        result = lindbladian_derivative(open_qubit.lindbladian, s, check=False)
        assert np.all(np.isfinite(result.superop.matrix))
    with pytest.raises(DomainError):
        lindbladian_derivative(open_qubit.lindbladian, 1.2)


@pytest.mark.parametrize('s', [0.25, 0.5, 0.75])
def test_exact_cd_satisfies_commutator_condition(open_qubit, s):
    L0 = open_qubit.lindbladian(s)
    spec = decompose(L0)
    dL = lindbladian_derivative(open_qubit.lindbladian, s).superop
    result = exact_cd(spec, dL)
    assert result.skipped_pairs == 0
    assert commutator_residual(result.gauge, L0, dL) < 1e-8

    X = spec.left @ (dL - (result.gauge @ L0 - L0 @ result.gauge)).matrix @ spec.right
    assert np.max(np.abs(X - np.diag(np.diag(X)))) < 1e-8
    assert np.allclose(np.diag(X), np.diag(spec.left @ dL.matrix @ spec.right), atol=1e-10)


def test_exact_cd_preserves_trace(open_qubit):
    s = 0.5
    L0 = open_qubit.lindbladian(s)
    dL = lindbladian_derivative(open_qubit.lindbladian, s).superop
    gauge = exact_cd(decompose(L0), dL).gauge
    assert gauge.trace_row_error() < 1e-8


def test_flipped_gap_sign_breaks_the_condition(open_qubit):
    s = 0.5
    L0 = open_qubit.lindbladian(s)
    spec = decompose(L0)
    dL = lindbladian_derivative(open_qubit.lindbladian, s).superop
    lam = spec.eigenvalues
    gaps = lam[None, :] - lam[:, None]
    G = spec.left @ dL.matrix @ spec.right
    keep = np.abs(gaps) > 1e-9
    flipped = spec.right @ np.where(keep, G / np.where(keep, -gaps, 1), 0) @ spec.left
    assert commutator_residual(Superoperator(L0.basis, flipped), L0, dL) > 1e-6


def test_exact_cd_skips_degenerate_pairs():
    closed = qubit_scenario()
    s = 0.3
    L0 = closed.lindbladian(s)
    dL = unitary_superop(closed.hamiltonian_derivative(s), closed.basis)
    result = exact_cd(decompose(L0), dL)
    assert result.skipped_pairs == 1
    assert commutator_residual(result.gauge, L0, dL) < 1e-8


def test_exact_cd_needs_one_d_spectrum():
    basis = build_basis(2)
    jordan = np.zeros((4, 4), dtype=complex)
    jordan[2, 3] = 1.0
    spec = decompose(Superoperator(basis, jordan))
    with pytest.raises(UnsupportedSpectrumError):
        exact_cd(spec, Superoperator(basis, np.eye(4, dtype=complex)))


def test_closed_qubit_variational_gauge_matches_analytic():
    closed = qubit_scenario()
    grid = np.linspace(0, 1, 21)
    provider = CdProvider.from_case(closed, 'sigma_y', grid_points=21).prepare()
    for s, solution in zip(grid, provider.solutions):
        y = solution.coefficient('sigma_y')
        assert 2 * y == pytest.approx(closed_system_gauge_qubit(s, closed.model), abs=1e-8)
    assert max(provider.verify(grid)) < 1e-8
    assert provider.solutions[10].coefficient('sigma_y') == pytest.approx(-15 / 8, abs=1e-8)


def test_analytic_gauge_needs_equal_frequencies():
    with pytest.raises(DomainError):
        closed_system_gauge_qubit(0.5, QubitModel(1.0, 2.0))


def test_resolve_ansatz_cases(open_pspin):
    assert [t.name for t in resolve_ansatz('Sy', open_pspin)] == ['Sy']
    cyclic = resolve_ansatz('Cyclic', open_pspin)
    assert [t.name for t in cyclic] == ['Sy', 'Sy3', 'SxSySz_cyclic']
    assert not any(t.constrained for t in cyclic)
    bath_terms = resolve_ansatz('Bath', open_pspin)
    assert len(bath_terms) == 15
    assert all(t.constrained for t in bath_terms)
    assert len(resolve_ansatz('Full', open_pspin)) == 18
    assert set(ANSATZ_CASES) == {'Bath', 'Sy', 'Cyclic', 'Full'}


def test_resolve_ansatz_explicit_and_errors(open_qubit, open_pspin):
    terms = resolve_ansatz([{'name': 'x', 'real': [[0, 1], [1, 0]]},
                            {'kind': 'dissipative', 'real': [[0, 1], [0, 0]]}], open_qubit)
    assert terms[0].name == 'x' and not terms[0].constrained
    assert terms[1].name == 'explicit_1' and terms[1].constrained
    with pytest.raises(ConfigError):
        resolve_ansatz('NotATerm', open_qubit)
    with pytest.raises(ConfigError):
        resolve_ansatz('sigma_y', open_pspin)
    with pytest.raises(InvalidDimensionError):
        resolve_ansatz([{'real': np.eye(3).tolist()}], open_qubit)


def test_ansatz_supermatrix_kinds():
    basis = build_basis(2)
    unitary = ansatz_supermatrix(AnsatzTerm('y', 'unitary', PAULI['Y']), basis)
    assert np.allclose(unitary.matrix, unitary_superop(PAULI['Y'], basis).matrix)
    dissipative = ansatz_supermatrix(AnsatzTerm('z', 'dissipative', PAULI['Z']), basis)
    assert dissipative.trace_row_error() < 1e-12
    with pytest.raises(ConfigError):
        AnsatzTerm('bad', 'mixed', PAULI['Z'])


def test_solve_variational_recovers_mixed_weights():
    rng = np.random.default_rng(0)
    design = rng.normal(size=(40, 4))
    truth = np.array([0.7, -1.2, 0.3, 0.0])
    solution = solve_variational(design, design @ truth, [False, False, True, True])
    assert np.allclose(solution.coefficients, truth, atol=1e-10)
    assert solution.residual < 1e-18
    assert not solution.rank_deficient
    assert solution.active[2] and not solution.active[:2].any()


def test_solve_variational_clips_at_zero():
    design = np.eye(3)
    target = np.array([1.0, -2.0, 0.5])
    solution = solve_variational(design, target, [True, True, False])
    assert solution.coefficients.tolist() == pytest.approx([1.0, 0.0, 0.5])
    assert solution.residual == pytest.approx(4.0)
    assert solution.residual_at_zero == pytest.approx(1.0 + 4.0 + 0.25)


def test_solve_variational_rank_deficient_takes_minimum_norm():
    design = np.array([[1.0, 1.0], [2.0, 2.0]])
    solution = solve_variational(design, np.array([2.0, 4.0]), [False, False])
    assert solution.rank_deficient
    assert solution.coefficients == pytest.approx([1.0, 1.0])


def test_solve_variational_rejects_bad_flags():
    with pytest.raises(InvalidDimensionError):
        solve_variational(np.eye(3), np.ones(3), [True])


def test_full_ansatz_rates_are_nonnegative():
    scenario = pspin_scenario(bath=BathSpec(1e-2, BETA))
    solution = CdProvider.from_case(scenario, 'Full').solve_at(0.5)
    rates = solution.dissipative_rates()
    assert len(rates) == 15
    assert min(rates.values()) >= 0
    assert solution.residual <= solution.residual_at_zero * (1 + 1e-12)


def test_cyclic_beats_bath_at_mid_anneal(open_pspin):
    cyclic = CdProvider.from_case(open_pspin, 'Cyclic').solve_at(0.5)
    bath = CdProvider.from_case(open_pspin, 'Bath').solve_at(0.5)
    assert cyclic.residual < bath.residual


def test_bath_rates_stay_bounded_near_the_end_of_the_anneal(open_pspin):
    solution = CdProvider.from_case(open_pspin, 'Bath').solve_at(0.965)
    rates = solution.dissipative_rates()
    assert min(rates.values()) >= 0
    assert max(rates.values()) < 1e6
    assert solution.residual <= solution.residual_at_zero * (1 + 1e-12)


def test_solve_variational_ignores_null_directions_of_the_constrained_block():
    # third column repeats the first up to 1e-13
    design = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1e-13]])
    solution = solve_variational(design, np.array([1.0, 0.5, 0.0]), [True, True, True])
    assert solution.residual < 1e-12
    assert solution.rank_deficient
    assert solution.coefficients == pytest.approx([0.5, 0.5, 0.5], abs=1e-6)


def test_variational_weights_are_scale_covariant(open_pspin):
    L0 = open_pspin.lindbladian(0.5)
    dL = lindbladian_derivative(open_pspin.lindbladian, 0.5, check=False).superop
    provider = CdProvider.from_case(open_pspin, 'Cyclic')
    ansatz = provider.ansatz_superops()
    flags = [t.constrained for t in provider.terms]
    base = solve_variational(*assemble_lsq(L0, dL, ansatz), flags)
    scaled = solve_variational(*assemble_lsq(L0 * 3.0, dL * 3.0, ansatz), flags)
    assert np.allclose(base.coefficients, scaled.coefficients, atol=1e-8)


def test_kms_report_flags_symmetric_channels(open_pspin):
    solution = CdProvider.from_case(open_pspin, 'Full').solve_at(0.5)
    report = kms_violation_report(solution, open_pspin, 0.5)
    assert report.s == 0.5
    if solution.active.any():
        assert not report.satisfied
        assert report.violations
    with pytest.raises(ConfigError):
        kms_violation_report(solution, pspin_scenario(), 0.5)


def test_kms_report_flags_fitted_bath_rates_at_strong_coupling():
    scenario = pspin_scenario(bath=BathSpec(1e-2, BETA))
    solution = CdProvider.from_case(scenario, 'Bath').solve_at(0.5)
    assert solution.active.any()
    report = kms_violation_report(solution, scenario, 0.5)
    assert not report.satisfied
    assert report.violations
    assert report.max_log_deviation > np.log1p(0.1)



def test_provider_modes(open_qubit):
    none = CdProvider.from_case(open_qubit, 'none')
    assert none.generator(0.5) is None
    assert none.label == 'none'

    exact = CdProvider.from_case(open_qubit, 'exact')
    assert exact.generator(0.5).shape == (4, 4)
    assert max(exact.verify([0.3, 0.6])) < 1e-8

    variational = CdProvider.from_case(open_qubit, ['sigma_y'], grid_points=11, threads=2)
    assert variational.label == 'sigma_y'
    weights = variational.weights(0.55)
    grid, residuals = variational.residual_series()
    assert len(grid) == 11 and len(residuals) == 11
    lo, hi = variational.weights(0.5), variational.weights(0.6)
    assert weights == pytest.approx((lo + hi) / 2)

    with pytest.raises(ConfigError):
        CdProvider(open_qubit, 'adiabatic')
    with pytest.raises(ConfigError):
        CdProvider(open_qubit, 'variational')
