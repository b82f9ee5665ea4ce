#!/usr/bin/env python3
"""
Tests for the schedule, the qubit and p-spin Hamiltonians, the Ohmic bath and the AME
"""

import logging
import math

import numpy as np
import pytest

from exceptions import DomainError, InvalidDimensionError, InvalidGeneratorError, InvalidRateError, NumericalFailure
from models import (
    AnnealingScenario,
    BathSpec,
    LambShiftTable,
    PSpinModel,
    QubitModel,
    bohr_frequency_bins,
    build_ame_lindbladian,
    collective_spin_ops,
    gamma_spectral,
    hamiltonian_pspin,
    hamiltonian_qubit,
    instantaneous_gap,
    lamb_shift_zeta,
    pspin_scenario,
    qubit_scenario,
    schedule_dq,
    schedule_q,
    temperature_from_millikelvin,
)
from operators import PAULI, devectorize, unitary_superop, vectorize

BETA = 1 / 2.23


def test_schedule_values():
    assert schedule_q(0.0) == 0.0
    assert schedule_q(1.0) == pytest.approx(1.0)
    assert schedule_q(0.5) == pytest.approx(0.5)
    assert schedule_dq(0.0) == 0.0
    assert schedule_dq(1.0) == 0.0
    assert schedule_dq(0.5) == pytest.approx(15 / 8)


def test_schedule_derivative_matches_finite_difference():
    s = np.linspace(0.05, 0.95, 19)
    h = 1e-6
    numeric = (schedule_q(s + h) - schedule_q(s - h)) / (2 * h)
    assert np.allclose(schedule_dq(s), numeric, atol=1e-6)


def test_schedule_domain():
    with pytest.raises(DomainError):
        schedule_q(1.5)
    with pytest.raises(DomainError):
        schedule_dq(-0.1)
    assert schedule_q(1 + 1e-13) == pytest.approx(1.0)


def test_qubit_hamiltonian_endpoints():
    model = QubitModel()
    assert np.allclose(hamiltonian_qubit(model, 0.0), -0.5 * PAULI['X'])
    assert np.allclose(hamiltonian_qubit(model, 1.0), -0.5 * PAULI['Z'])


def test_qubit_minimum_gap():
    model = QubitModel()
    s = np.linspace(0, 1, 101)
    gaps = np.array([instantaneous_gap(model.hamiltonian(x)) for x in s])
    assert gaps.min() == pytest.approx(1 / math.sqrt(2), abs=1e-10)
    assert int(np.argmin(gaps)) == 50


@pytest.mark.parametrize('model', [QubitModel(1.0, 1.3), PSpinModel(3, 3, 1.0, 1.0)],
                         ids=['qubit', 'pspin'])
def test_hamiltonian_derivative_matches_finite_difference(model):
    s, h = 0.37, 1e-6
    numeric = (model.hamiltonian(s + h) - model.hamiltonian(s - h)) / (2 * h)
    assert np.allclose(model.hamiltonian_derivative(s), numeric, atol=1e-6)


def test_invalid_model_parameters():
    with pytest.raises(InvalidGeneratorError):
        QubitModel(omega_x=0.0)
    with pytest.raises(InvalidDimensionError):
        PSpinModel(n=0)


def test_collective_spin_ops_small_cases():
    sx, sy, sz = collective_spin_ops(1)
    assert np.allclose(sx, PAULI['X'] / 2)
    assert np.allclose(sy, PAULI['Y'] / 2)
    assert np.allclose(sz, PAULI['Z'] / 2)

    sx, _, sz = collective_spin_ops(3)
    assert np.allclose(np.diag(sz), [1.5, 0.5, -0.5, -1.5])
    assert np.allclose(np.diag(sx, 1), [math.sqrt(3) / 2, 1.0, math.sqrt(3) / 2])


@pytest.mark.parametrize('n', [1, 2, 3, 6])
def test_collective_spin_commutators(n):
    sx, sy, sz = collective_spin_ops(n)
    assert np.allclose(sx @ sy - sy @ sx, 1j * sz)
    assert np.allclose(sy @ sz - sz @ sy, 1j * sx)
    assert np.allclose(sz @ sx - sx @ sz, 1j * sy)
    S = n / 2
    casimir = sx @ sx + sy @ sy + sz @ sz
    assert np.allclose(casimir, S * (S + 1) * np.eye(n + 1))


def test_collective_spin_rejects_zero_spins():
    with pytest.raises(InvalidDimensionError):
        collective_spin_ops(0)


def test_pspin_hamiltonian():
    model = PSpinModel(3, 3, 1.0, 1.0)
    H1 = hamiltonian_pspin(model, 1.0)
    assert np.allclose(H1, np.diag(np.diag(H1)))
    energies = np.linalg.eigvalsh(H1)
    assert energies[0] == pytest.approx(-3.0)
    assert int(np.argmin(np.diag(H1).real)) == 0
    H0 = hamiltonian_pspin(model, 0.0)
    assert np.allclose(H0, -2 * collective_spin_ops(3)[0])
    assert model.dim == 4


def test_temperature_conversion():
    assert temperature_from_millikelvin(17.0) == pytest.approx(2.23, rel=0.01)


def test_gamma_detailed_balance():
    bath = BathSpec(1e-4, BETA)
    w = np.logspace(-3, 2, 30)
    ratio = gamma_spectral(-w, bath) / gamma_spectral(w, bath)
    assert np.allclose(ratio, np.exp(-BETA * w), rtol=1e-10)


def test_gamma_zero_frequency_limit():
    bath = BathSpec(1e-4, BETA)
    expected = 2 * math.pi * 1e-4 / BETA
    assert gamma_spectral(0.0, bath) == pytest.approx(expected)
    assert gamma_spectral(1e-9, bath) == pytest.approx(expected, rel=1e-6)


def test_bath_validation(caplog):
    with pytest.raises(InvalidRateError):
        BathSpec(-1e-4, BETA)
    with pytest.raises(InvalidRateError):
        BathSpec(1e-4, 0.0)
    with caplog.at_level(logging.WARNING, logger='models'):
        BathSpec(0.5, BETA)
    assert 'weak-coupling' in caplog.text


def test_lamb_shift_is_stable_under_window_choice():
    bath = BathSpec(1e-4, BETA)
    z = lamb_shift_zeta(0.7, bath)
    assert z != 0.0
    assert lamb_shift_zeta(0.7, bath, window=0.025 * bath.omega_c) == pytest.approx(z, rel=1e-6)


def test_lamb_shift_vanishes_without_coupling():
    assert lamb_shift_zeta(0.7, BathSpec(0.0, BETA)) == 0.0


def test_lamb_shift_reports_the_error_estimate_when_quadrature_stalls(caplog):
    bath = BathSpec(1e-4, BETA)
    with pytest.raises(NumericalFailure, match='error estimate') as excinfo:
        lamb_shift_zeta(0.7, bath, rel_tol=1e-14, limit=1)
    assert math.isfinite(excinfo.value.residual)
    assert excinfo.value.residual > 0
    assert 'did not converge' in caplog.text


def test_lamb_shift_table_interpolates_quadrature():
    bath = BathSpec(1e-4, BETA)
    table = LambShiftTable(bath, 3.0, points=201)
    for w in (-1.234, 0.0, 0.5, 2.71):
        assert table(w) == pytest.approx(lamb_shift_zeta(w, bath), rel=1e-5, abs=1e-12)
    assert table(4.0) == lamb_shift_zeta(4.0, bath)


def test_bohr_frequency_bins_merge_degenerate_pairs():
    bins = bohr_frequency_bins(np.array([0.0, 1.0, 1.0 + 1e-12]))
    assert len(bins) == 3
    frequencies = sorted(round(w, 6) for w, _ in bins)
    assert frequencies == [-1.0, 0.0, 1.0]
    total = sum(mask.astype(int) for _, mask in bins)
    assert np.array_equal(total, np.ones((3, 3), dtype=int))
    lowering = next(mask for w, mask in bins if w > 0.5)
    # positive frequencies release energy: they connect higher b to lower a
    assert lowering[0, 1] and lowering[0, 2] and not lowering[1, 0]


@pytest.mark.parametrize('lamb', [True, False])
def test_ame_is_trace_preserving_and_stable(lamb):
    scenario = qubit_scenario(bath=BathSpec(1e-4, BETA, include_lamb_shift=lamb))
    L = scenario.lindbladian(0.4)
    assert L.trace_row_error() < 1e-12
    assert np.max(np.linalg.eigvals(L.matrix).real) < 1e-10


def test_ame_relaxes_towards_lower_energy():
    scenario = qubit_scenario(bath=BathSpec(1e-3, BETA, include_lamb_shift=False))
    s = 0.6
    L = scenario.lindbladian(s)
    energies, V = np.linalg.eigh(scenario.hamiltonian(s))
    excited = np.outer(V[:, 1], V[:, 1].conj())
    drift = devectorize(L @ vectorize(excited, scenario.basis))
    ground_rate = float(np.real(V[:, 0].conj() @ drift @ V[:, 0]))
    assert ground_rate > 0


def test_ame_without_coupling_is_unitary():
    scenario = qubit_scenario(bath=BathSpec(0.0, BETA))
    reference = unitary_superop(scenario.hamiltonian(0.3), scenario.basis)
    assert np.array_equal(scenario.lindbladian(0.3).matrix, reference.matrix)


def test_lamb_shift_changes_the_coherence_frequencies():
    with_shift = qubit_scenario(bath=BathSpec(1e-2, BETA)).lindbladian(0.5)
    without = qubit_scenario(bath=BathSpec(1e-2, BETA, include_lamb_shift=False)).lindbladian(0.5)
    assert not np.allclose(with_shift.matrix, without.matrix)
    assert np.allclose(with_shift.matrix[0], 0, atol=1e-12)


def test_ame_needs_a_bath():
    with pytest.raises(InvalidGeneratorError):
        build_ame_lindbladian(qubit_scenario(), 0.5)


def test_scenario_validation():
    model = QubitModel()
    with pytest.raises(InvalidDimensionError):
        AnnealingScenario('bad', model, np.eye(3))
    with pytest.raises(InvalidGeneratorError):
        AnnealingScenario('bad', model, np.array([[0, 1], [0, 0]]))
    scenario = pspin_scenario(bath=BathSpec(1e-4, BETA))
    assert scenario.dim == 4
    assert scenario.initial_state == 'thermal'
    assert qubit_scenario().initial_state == 'ground'
