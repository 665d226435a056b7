"""Shared fixtures and independent dense oracles.

The oracles here never call the package's own matrix code: Pauli strings
are assembled element by element from the single-qubit matrices, so both
the Kronecker ordering and the phase bookkeeping are checked independently.
"""

from __future__ import annotations

import os

import numpy as np
import pytest
import scipy.linalg
from hypothesis import HealthCheck, settings

from qitc.pauli import PauliString, PauliSum

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

SIGMA = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def oracle_string(letters: str) -> np.ndarray:
    """<a|P|b> = prod_q sigma_q[a_q, b_q], with qubit q on bit q of the index."""
    n = len(letters)
    dim = 1 << n
    out = np.zeros((dim, dim), dtype=complex)
    for a in range(dim):
        for b in range(dim):
            v = 1.0 + 0j
            for q, c in enumerate(letters):
                v *= SIGMA[c][(a >> q) & 1, (b >> q) & 1]
                if v == 0:
                    break
            out[a, b] = v
    return out


def oracle_kron(letters: str) -> np.ndarray:
    """Kronecker construction; the highest qubit is the leftmost factor."""
    out = np.array([[1.0 + 0j]])
    for c in reversed(letters):
        out = np.kron(out, SIGMA[c])
    return out


def oracle_dense(H: PauliSum) -> np.ndarray:
    dim = 1 << H.n_qubits
    out = np.zeros((dim, dim), dtype=complex)
    for c, s in H.terms:
        out += c * oracle_kron(str(s))
    return out


def oracle_expm_step(H: np.ndarray, psi: np.ndarray, dtau: float) -> np.ndarray:
    v = scipy.linalg.expm(-dtau * H) @ psi
    return v / np.linalg.norm(v)


def random_pauli_sum(rng: np.random.Generator, n: int, n_terms: int | None = None) -> PauliSum:
    n_terms = n_terms or int(rng.integers(1, 3 * n + 2))
    terms = []
    for _ in range(n_terms):
        letters = "".join(rng.choice(list("IXYZ"), size=n))
        terms.append((float(rng.normal()), PauliString(letters)))
    return PauliSum(terms, n)


def random_psi(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return v / np.linalg.norm(v)


def random_gapped(rng: np.random.Generator, n: int, min_gap: float = 0.05) -> PauliSum:
    """Random Pauli sum whose dense ground level is non-degenerate by ``min_gap``."""
    while True:
        H = random_pauli_sum(rng, n, 2 * n + 2)
        ev = np.linalg.eigvalsh(oracle_dense(H))
        if ev[1] - ev[0] > min_gap:
            return H


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict(capsys):
    """Print one PASS/FAIL line per acceptance criterion, then assert it."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"ACCEPTANCE {number:>2} {'PASS' if ok else 'FAIL'}  {detail}"
        _ACCEPTANCE_LINES.append(line)
        with capsys.disabled():
            print("\n" + line, flush=True)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
