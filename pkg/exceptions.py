#!/usr/bin/env python3
"""
Error types raised by the counterdiabatic annealing simulator.
Input problems also derive from ValueError, numerical breakdowns from RuntimeError.
"""


class SimulationError(Exception):
    """Base class for every error raised by this package."""


class InvalidDimensionError(SimulationError, ValueError):
    """Operator or basis dimensions are missing, too small or inconsistent."""


class InvalidGeneratorError(SimulationError, ValueError):
    """A Hamiltonian or generator violates its Hermiticity requirement."""


class InvalidRateError(SimulationError, ValueError):
    """A Lindblad rate is negative."""


class DomainError(SimulationError, ValueError):
    """A schedule parameter lies outside [0, 1]."""


class InvalidStateError(SimulationError, ValueError):
    """A density matrix is not unit-trace or not positive."""


class ConfigError(SimulationError, ValueError):
    """A run configuration does not match the schema."""


class NumericalFailure(SimulationError, RuntimeError):
    """A quadrature or linear-algebra routine did not converge."""

    def __init__(self, message: str, residual: float = float('nan')):
        super().__init__(message)
        self.residual = residual


class NotDiagonalizableError(SimulationError, RuntimeError):
    """The supermatrix failed the one-dimensional Jordan form diagnostic."""


class UnsupportedSpectrumError(SimulationError, RuntimeError):
    """An operation needs a one-dimensional Jordan form it did not get."""


class NoSteadyStateError(SimulationError, RuntimeError):
    """No eigenvalue lies within tolerance of zero."""


class AmbiguousSteadyStateError(SimulationError, RuntimeError):
    """More than one eigenvalue lies within tolerance of zero."""


class StiffFailure(SimulationError, RuntimeError):
    """The explicit integrator's step size underflowed."""


class IntegrationInvalidError(SimulationError, RuntimeError):
    """The trajectory drifted away from unit trace."""
