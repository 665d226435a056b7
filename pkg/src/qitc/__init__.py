"""Imaginary-time evolution with closed-loop Lyapunov control on statevectors."""

from .control import ControlStrategy, Controller, Phase, feedback_T
from .engine import (
    StopRule,
    Trajectory,
    basis_state,
    eigensystem,
    evolve,
    fidelity,
    ground_space,
    ite_step,
    plus_state,
    random_state,
)
from .pauli import PauliString, PauliSum, apply, expectation, parse_pauli_string, to_dense

__version__ = "0.1.0"
