"""Feedback policies turning T_k(tau) into pulse amplitudes beta_k(tau).

For a state evolving in imaginary time under ``H = H_p + sum_k beta_k H_k``
the problem energy obeys

    d<H_p>/dtau = -2 Var(H_p) + sum_k beta_k T_k,
    T_k = 2 <H_p><H_k> - <{H_p, H_k}>,

so a pulse with ``beta_k * T_k < 0`` lowers the energy to first order.
Three strategies are provided:

``gradient``
    proportional law ``beta = -gain * T``, always energy-descending.
``type1``
    sigmoid threshold control ``2S / (1 + exp(-gamma T)) - S``, switched off
    while ``T < L``. The sigmoid has the same sign as ``T``; pass
    ``type1_sign="descent"`` to flip it.
``type2``
    two-phase bang-bang: ``+K1 sgn(T)`` until the energy plateaus, then
    ``-K2 sgn(T)``; a control whose feedback sign alternates is latched off.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from enum import IntEnum

import numpy as np

from .pauli import Operator, anticommutator_expectation, expectation

KINDS = ("gradient", "type1", "type2")


class Phase(IntEnum):
    ONE = 1
    TWO = 2
    OFF = 3


@dataclass(frozen=True)
class ControlStrategy:
    kind: str = "gradient"
    S: float = 1.0
    gamma: float = 1.0
    L: float = 0.0
    K1: float = 1.0
    K2: float = 0.1
    gain: float = 1.0
    beta_cap: float = math.inf
    # type1 options
    type1_sign: str = "ascent"
    type1_gate: str = "signed"
    latch_truncation: bool = False
    s_decay_steps: int | None = None
    # type2 equilibrium detection: relative tolerance over a sliding window
    equil_tol: float = 1e-3
    equil_window: int = 10
    # additionally cap |beta| by |<H_p>| each step
    adaptive_cap: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown strategy kind {self.kind!r}; expected one of {KINDS}")
        if not self.beta_cap > 0:
            raise ValueError("beta_cap must be positive")
        if self.kind == "type1":
            if not (self.S > 0 and self.gamma > 0):
                raise ValueError("type1 needs S > 0 and gamma > 0")
            if self.type1_sign not in ("ascent", "descent"):
                raise ValueError(f"type1_sign must be 'ascent' or 'descent', got {self.type1_sign!r}")
            if self.type1_gate not in ("signed", "magnitude"):
                raise ValueError(f"type1_gate must be 'signed' or 'magnitude', got {self.type1_gate!r}")
            if self.s_decay_steps is not None and self.s_decay_steps < 1:
                raise ValueError("s_decay_steps must be >= 1")
        elif self.kind == "type2":
            if not self.K1 > self.K2 > 0:
                raise ValueError("type2 needs K1 > K2 > 0")
            if self.equil_window < 2 or self.equil_tol <= 0:
                raise ValueError("equil_window must be >= 2 and equil_tol > 0")
        elif not self.gain > 0:
            raise ValueError("gradient control needs gain > 0")

    def describe(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class ControlState:
    """Mutable per-run state of a type2 controller."""

    n_controls: int
    phase: Phase = Phase.ONE
    sign_history: list = field(default_factory=list)
    latched: list = field(default_factory=list)
    energy_history: deque = field(default_factory=lambda: deque(maxlen=10))

    def __post_init__(self):
        if not self.sign_history:
            self.sign_history = [[] for _ in range(self.n_controls)]
        if not self.latched:
            self.latched = [False] * self.n_controls


def feedback_T(psi: np.ndarray, H_p: Operator, H_dk: Operator) -> float:
    """T_k = 2<H_p><H_k> - <{H_p, H_k}>."""
    return 2.0 * expectation(H_p, psi) * expectation(H_dk, psi) - anticommutator_expectation(
        H_p, H_dk, psi
    )


def _clip(beta: float, cap: float) -> float:
    return float(min(max(beta, -cap), cap))


def type1_gated(T_k: float, strategy: ControlStrategy) -> bool:
    """True where type1 control is switched off (``T_k < L``)."""
    if strategy.type1_gate == "magnitude":
        return abs(T_k) < strategy.L
    return T_k < strategy.L


def beta_type1(T_k: float, strategy: ControlStrategy, S: float | None = None) -> float:
    S = strategy.S if S is None else S
    if type1_gated(T_k, strategy) or S == 0.0:
        return 0.0
    # 2S/(1+exp(-gT)) - S == S*tanh(gT/2), which does not overflow
    beta = S * math.tanh(0.5 * strategy.gamma * T_k)
    if strategy.type1_sign == "descent":
        beta = -beta
    return _clip(beta, strategy.beta_cap)


def _sgn(x: float) -> int:
    return int(x > 0) - int(x < 0)


def beta_type2(T_k: float, state: ControlState, strategy: ControlStrategy, k: int = 0) -> float:
    """Bang-bang amplitude for control ``k``; records the sign of ``T_k``.

    Two consecutive sign flips, ``(+, -, +)`` or ``(-, +, -)``, latch the
    control off for the rest of the current phase.
    """
    if state.phase is Phase.OFF or state.latched[k]:
        return 0.0
    s = _sgn(T_k)
    hist = state.sign_history[k]
    hist.append(s)
    del hist[:-3]
    if len(hist) == 3 and hist[0] == hist[2] == -hist[1] != 0:
        state.latched[k] = True
        return 0.0
    beta = strategy.K1 * s if state.phase is Phase.ONE else -strategy.K2 * s
    return _clip(beta, strategy.beta_cap)


def beta_gradient(T_k: float, strategy: ControlStrategy) -> float:
    return _clip(-strategy.gain * T_k, strategy.beta_cap)


def phase_update(state: ControlState, energy_window, tol: float) -> ControlState:
    """Switch phase 1 -> 2 once the energy window is flat to within ``tol``.

    Sign histories and latches are cleared on the switch so phase 2 starts
    with every control available.
    """
    window = list(energy_window)
    if len(window) < 2:
        raise ValueError("energy window needs at least two entries")
    if state.phase is Phase.ONE and max(window) - min(window) < tol:
        return _enter_phase_two(state)
    return state


def _enter_phase_two(state: ControlState) -> ControlState:
    return replace(
        state,
        phase=Phase.TWO,
        sign_history=[[] for _ in range(state.n_controls)],
        latched=[False] * state.n_controls,
    )


def admissible_bound(psi: np.ndarray, H_p: Operator) -> float:
    """Recommended |beta| ceiling for the current step: |<H_p>|."""
    return abs(expectation(H_p, psi))


class Controller:
    """Closed-loop policy instance owned by one evolution run."""

    def __init__(self, strategy: ControlStrategy, n_controls: int):
        self.strategy = strategy
        self.n_controls = n_controls
        self.step = 0
        self.state = ControlState(n_controls)
        self.state.energy_history = deque(maxlen=strategy.equil_window)
        self._truncated = [False] * n_controls
        self.switch_step: int | None = None

    @property
    def phase(self) -> Phase | None:
        return self.state.phase if self.strategy.kind == "type2" else None

    def current_S(self) -> float:
        st = self.strategy
        if st.s_decay_steps is None:
            return st.S
        return st.S * max(0.0, 1.0 - self.step / st.s_decay_steps)

    def betas(self, T: np.ndarray, energy: float) -> np.ndarray:
        st = self.strategy
        T = np.asarray(T, dtype=float)
        out = np.zeros(self.n_controls)
        if st.kind == "gradient":
            out[:] = [beta_gradient(t, st) for t in T]
        elif st.kind == "type1":
            S = self.current_S()
            for k, t in enumerate(T):
                if self._truncated[k]:
                    continue
                if st.latch_truncation and type1_gated(t, st):
                    self._truncated[k] = True
                    continue
                out[k] = beta_type1(t, st, S)
        else:
            self._type2(T, energy, out)
        self.step += 1
        cap = st.beta_cap
        if st.adaptive_cap:
            cap = min(cap, abs(energy))
        return np.clip(out, -cap, cap)

    def _type2(self, T: np.ndarray, energy: float, out: np.ndarray) -> None:
        st, state = self.strategy, self.state
        state.energy_history.append(energy)
        if state.phase is Phase.ONE:
            if len(state.energy_history) == st.equil_window:
                tol = max(st.equil_tol * abs(energy), 1e-12)
                state = phase_update(state, state.energy_history, tol)
            # every control at its bound also counts as equilibrium
            if state.phase is Phase.ONE and all(state.latched):
                state = _enter_phase_two(state)
            if state is not self.state:
                self.state = state
                self.switch_step = self.step
        for k, t in enumerate(T):
            out[k] = beta_type2(t, state, st, k)
        if state.phase is Phase.TWO and all(state.latched):
            state.phase = Phase.OFF
