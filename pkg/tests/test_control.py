import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qitc.control import (
    ControlState,
    ControlStrategy,
    Controller,
    Phase,
    admissible_bound,
    beta_gradient,
    beta_type1,
    beta_type2,
    feedback_T,
    phase_update,
)
from qitc.engine import StopRule, basis_state, evolve, ite_step, plus_state
from qitc.models import tunable_gap_model
from qitc.pauli import PauliSum, expectation

from conftest import oracle_dense, random_pauli_sum, random_psi

Z = PauliSum([(1.0, "Z")])
finite = st.floats(-1e6, 1e6, allow_nan=False)


# -- strategy validation -----------------------------------------------------------

@pytest.mark.parametrize(
    "kwargs",
    [
        dict(kind="bogus"),
        dict(kind="type1", S=0.0),
        dict(kind="type1", gamma=-1.0),
        dict(kind="type2", K1=0.1, K2=0.1),
        dict(kind="type2", K1=1.0, K2=0.0),
        dict(kind="gradient", gain=0.0),
        dict(kind="gradient", beta_cap=0.0),
        dict(kind="type1", type1_sign="up"),
    ],
)
def test_invalid_strategies(kwargs):
    with pytest.raises(ValueError):
        ControlStrategy(**kwargs)


def test_defaults():
    s = ControlStrategy("type2")
    assert s.K1 == 10 * s.K2
    t = ControlStrategy("type1")
    assert (t.S, t.gamma, t.L) == (1.0, 1.0, 0.0)


# -- feedback ---------------------------------------------------------------------

def test_feedback_examples():
    assert feedback_T(plus_state(1), Z, Z) == pytest.approx(-2.0)
    hp = PauliSum([(1.0, "XI"), (0.5, "ZZ")])
    hd = PauliSum([(1.0, "IZ")])
    assert abs(feedback_T(basis_state(2, 2), hp, hd)) < 1e-14


def test_feedback_matches_dense_oracle(rng):
    for _ in range(20):
        hp, hd = random_pauli_sum(rng, 4), random_pauli_sum(rng, 4)
        psi = random_psi(rng, 4)
        A, B = oracle_dense(hp), oracle_dense(hd)
        ea = np.vdot(psi, A @ psi).real
        eb = np.vdot(psi, B @ psi).real
        anti = np.vdot(psi, (A @ B + B @ A) @ psi).real
        assert abs(feedback_T(psi, hp, hd) - (2 * ea * eb - anti)) < 1e-9


@given(st.integers(0, 2**32 - 1), st.floats(-10, 10))
def test_feedback_is_linear_in_problem(seed, alpha):
    rng = np.random.default_rng(seed)
    hp, hd = random_pauli_sum(rng, 3), random_pauli_sum(rng, 3)
    psi = random_psi(rng, 3)
    t = feedback_T(psi, hp, hd)
    assert abs(feedback_T(psi, alpha * hp, hd) - alpha * t) <= 1e-9 * (1 + abs(alpha * t))


def test_feedback_agrees_with_evolve_column(rng):
    hp = random_pauli_sum(rng, 3)
    ctrl = [random_pauli_sum(rng, 3) for _ in range(2)]
    psi = random_psi(rng, 3)
    traj = evolve(psi, hp, ctrl, None, method="exact", stop=StopRule(0, None))
    np.testing.assert_allclose(traj.feedback[0], [feedback_T(psi, hp, c) for c in ctrl], atol=1e-12)


# -- type1 -------------------------------------------------------------------------

def test_type1_examples():
    st1 = ControlStrategy("type1", S=2.0, gamma=1.0, L=0.5)
    assert beta_type1(0.4, st1) == 0.0
    assert beta_type1(0.0, ControlStrategy("type1", L=-1.0)) == 0.0
    assert beta_type1(1e6, st1) == pytest.approx(2.0)
    # the closed form 2S/(1+e^{-gT}) - S
    assert beta_type1(0.7, st1) == pytest.approx(4 / (1 + math.exp(-0.7)) - 2)


def test_type1_descent_sign_flips():
    pub = ControlStrategy("type1", L=-math.inf)
    des = ControlStrategy("type1", L=-math.inf, type1_sign="descent")
    for t in (-3.0, -0.1, 0.2, 5.0):
        assert beta_type1(t, des) == -beta_type1(t, pub)
        assert beta_type1(t, des) * t <= 0


def test_type1_magnitude_gate():
    s = ControlStrategy("type1", L=0.5, type1_gate="magnitude")
    assert beta_type1(-0.3, s) == 0.0
    assert beta_type1(-0.8, s) < 0


@given(finite, finite)
def test_type1_monotone_and_bounded(a, b):
    s = ControlStrategy("type1", S=1.5, gamma=2.0, L=-math.inf)
    lo, hi = sorted((a, b))
    assert beta_type1(lo, s) <= beta_type1(hi, s)
    assert -1.5 <= beta_type1(a, s) <= 1.5


# -- type2 -------------------------------------------------------------------------

def test_type2_phase_values():
    s = ControlStrategy("type2", K1=5.0, K2=0.5)
    state = ControlState(1)
    assert beta_type2(2.0, state, s) == 5.0
    state = ControlState(1, phase=Phase.TWO)
    assert beta_type2(2.0, state, s) == -0.5
    assert beta_type2(0.0, ControlState(1), s) == 0.0


def test_type2_alternation_latches():
    s = ControlStrategy("type2")
    state = ControlState(2)
    assert [beta_type2(t, state, s, 0) for t in (1.0, -1.0, 1.0, 1.0, -1.0)] == [1.0, -1.0, 0.0, 0.0, 0.0]
    assert state.latched == [True, False]
    assert beta_type2(1.0, state, s, 1) == 1.0


def test_type2_no_latch_without_consecutive_flips():
    s = ControlStrategy("type2")
    state = ControlState(1)
    out = [beta_type2(t, state, s) for t in (1.0, 1.0, -1.0, -1.0, 1.0)]
    assert out == [1.0, 1.0, -1.0, -1.0, 1.0]


@given(st.lists(finite, min_size=1, max_size=40), st.booleans())
def test_type2_is_bang_bang(ts, phase_two):
    s = ControlStrategy("type2", K1=3.0, K2=0.25)
    state = ControlState(1, phase=Phase.TWO if phase_two else Phase.ONE)
    for t in ts:
        assert abs(beta_type2(t, state, s)) in {0.0, 3.0, 0.25}


def test_phase_update_examples():
    flat = phase_update(ControlState(1), (3.0, 3.0001, 3.0), 1e-2)
    assert flat.phase is Phase.TWO
    moving = phase_update(ControlState(1), (3.0, 2.0, 1.0), 1e-2)
    assert moving.phase is Phase.ONE
    with pytest.raises(ValueError):
        phase_update(ControlState(1), (1.0,), 1e-2)


def test_phase_update_clears_latches():
    state = ControlState(2, latched=[True, True], sign_history=[[1, -1], [1]])
    new = phase_update(state, (1.0, 1.0), 0.1)
    assert new.latched == [False, False]
    assert new.sign_history == [[], []]


def test_phase_update_never_goes_back():
    state = ControlState(1, phase=Phase.TWO)
    assert phase_update(state, (3.0, 2.0, 1.0), 1e-2).phase is Phase.TWO
    state = ControlState(1, phase=Phase.OFF)
    assert phase_update(state, (1.0, 1.0), 1e-2).phase is Phase.OFF


def test_controller_phase_sequence_is_monotone():
    hp = tunable_gap_model(3, 0.05)
    ctrl = [PauliSum([(1.0, "ZII")]), PauliSum([(1.0, "IZI")])]
    traj = evolve(
        plus_state(3), hp, ctrl, ControlStrategy("type2", K1=2.0, K2=0.2),
        method="exact", stop=StopRule(400, None),
    )
    phases = [int(p) for p in traj.phase]
    assert phases == sorted(phases)
    assert traj.switch_step is not None


# -- gradient -------------------------------------------------------------------------

def test_gradient_examples():
    assert beta_gradient(0.0, ControlStrategy()) == 0.0
    assert beta_gradient(1.0, ControlStrategy(gain=0.5, beta_cap=10)) == -0.5
    assert beta_gradient(100.0, ControlStrategy(gain=1.0, beta_cap=2.0)) == -2.0


def test_gradient_paired_step_descends(rng):
    dt = 1e-3
    s = ControlStrategy("gradient", gain=0.5)
    for _ in range(25):
        hp = random_pauli_sum(rng, 4)
        hd = random_pauli_sum(rng, 4)
        psi = random_psi(rng, 4)
        beta = beta_gradient(feedback_T(psi, hp, hd), s)
        free = expectation(hp, ite_step(psi, hp, dt, "exact"))
        ctrl = expectation(hp, ite_step(psi, hp + beta * hd, dt, "exact"))
        assert ctrl <= free + 1e-10


# -- caps -------------------------------------------------------------------------------

def test_admissible_bound_examples():
    assert admissible_bound(basis_state(1, 0), Z) == 1.0
    assert admissible_bound(plus_state(1), Z) < 1e-15


@given(
    st.sampled_from(["gradient", "type1", "type2"]),
    st.floats(0.01, 5.0),
    st.lists(finite, min_size=3, max_size=3),
    st.floats(-10, 10),
)
def test_controller_respects_cap(kind, cap, T, energy):
    kw = dict(S=10.0, L=-math.inf) if kind == "type1" else dict(K1=20.0, K2=2.0) if kind == "type2" else dict(gain=50.0)
    c = Controller(ControlStrategy(kind, beta_cap=cap, **kw), 3)
    for _ in range(3):
        assert np.all(np.abs(c.betas(np.array(T), energy)) <= cap)


def test_adaptive_cap_tracks_energy():
    c = Controller(ControlStrategy("gradient", gain=10.0, adaptive_cap=True), 1)
    assert abs(c.betas(np.array([5.0]), 0.25)[0]) == 0.25
    assert c.betas(np.array([5.0]), 0.0)[0] == 0.0


def test_truncation_latch_keeps_control_off():
    s = ControlStrategy("type1", L=0.0, latch_truncation=True)
    c = Controller(s, 2)
    assert c.betas(np.array([-1.0, 1.0]), 0.0)[0] == 0.0
    out = c.betas(np.array([3.0, 1.0]), 0.0)
    assert out[0] == 0.0 and out[1] > 0


def test_s_decay_reaches_zero():
    c = Controller(ControlStrategy("type1", L=-math.inf, s_decay_steps=4), 1)
    vals = [c.betas(np.array([10.0]), 0.0)[0] for _ in range(6)]
    assert vals[0] > vals[1] > vals[2] > vals[3] > 0
    assert vals[4] == vals[5] == 0.0
