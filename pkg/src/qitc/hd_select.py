"""Building and ranking control operators.

Z-string pools are scored by a probe run in which every candidate is an
active control; the time-summed amplitude ``B_i`` of each candidate ranks
it. Molecular problems also get rule-based families keyed on the split of
spin orbitals into an occupied block ``[0, N)`` and a virtual block
``[N, M)``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .control import ControlStrategy
from .engine import StopRule, evolve, plus_state
from .models import pauli_controls
from .pauli import (
    PauliString,
    PauliSum,
    check_dense_limit,
    cyclic_set,
    operator_qubits,
    to_dense,
    z_strings,
)

VARIANTS = ("empirical", "full", "half", "all")


@dataclass(frozen=True)
class OrbitalSplit:
    n_electrons: int
    n_orbitals: int

    def __post_init__(self):
        if not 0 < self.n_electrons < self.n_orbitals:
            raise ValueError(
                f"need 0 < N < M, got N={self.n_electrons}, M={self.n_orbitals}"
            )

    @property
    def occupied(self) -> range:
        return range(self.n_electrons)

    @property
    def virtual(self) -> range:
        return range(self.n_electrons, self.n_orbitals)


@dataclass(frozen=True)
class CandidateScore:
    candidate: PauliString
    B: float

    def __post_init__(self):
        if not math.isfinite(self.B):
            raise ValueError(f"non-finite score for {self.candidate}")


def candidate_pool(n: int) -> list[PauliString]:
    """Every single-Z and double-Z string on ``n`` qubits, each group lexicographic."""
    if n < 2:
        raise ValueError("candidate pool needs n >= 2")
    return z_strings(n, 1) + z_strings(n, 2)


def _z_on(n: int, positions: Iterable[int]) -> PauliString:
    chars = ["I"] * n
    for p in positions:
        chars[p] = "Z"
    return PauliString("".join(chars))


def _block_strings(n: int, block: range, weight: int) -> list[PauliString]:
    return sorted(_z_on(n, c) for c in combinations(block, weight))


def empirical_hd(split: OrbitalSplit) -> list[PauliString]:
    """Single Z in the virtual block plus double Z inside either block."""
    m = split.n_orbitals
    out = (
        _block_strings(m, split.virtual, 1)
        + _block_strings(m, split.virtual, 2)
        + _block_strings(m, split.occupied, 2)
    )
    return sorted(set(out))


def variant_hd(kind: str, split: OrbitalSplit) -> list[PauliString]:
    """Control families: empirical, full (adds occupied singles), half
    (drops occupied doubles) and all (the whole Z pool)."""
    m = split.n_orbitals
    if kind == "empirical":
        return empirical_hd(split)
    if kind == "full":
        return sorted(set(empirical_hd(split)) | set(_block_strings(m, split.occupied, 1)))
    if kind == "half":
        return sorted(set(empirical_hd(split)) - set(_block_strings(m, split.occupied, 2)))
    if kind == "all":
        return sorted(candidate_pool(m))
    raise ValueError(f"unknown variant {kind!r}; expected one of {VARIANTS}")


def cyclic_z_hd(n: int, weights: Iterable[int]) -> list[PauliString]:
    """Union over ``w`` of the rotations of ``Z^w I^(n-w)``."""
    out: set[PauliString] = set()
    for w in weights:
        if not 1 <= w <= n:
            raise ValueError(f"weight {w} outside 1..{n}")
        out |= cyclic_set("Z" * w + "I" * (n - w))
    return sorted(out)


def polynomial_hd(
    H_p: PauliSum | np.ndarray,
    orders: Iterable[int],
    threshold: float,
    relative: bool = False,
    normalize: bool = True,
    dense_limit: int | None = None,
) -> list[np.ndarray]:
    """Sparsified powers of ``H_p``.

    Entries of ``H_p^k`` with magnitude below ``threshold`` are zeroed (with
    ``relative=True`` the cut is ``threshold * max|entry|`` of that power),
    the result is symmetrized and, if ``normalize``, divided by its largest
    entry magnitude. A power that is cut away entirely stays zero.
    """
    n = operator_qubits(H_p)
    check_dense_limit(n, dense_limit)
    orders = sorted(set(orders))
    if any(not 2 <= k <= 8 for k in orders):
        raise ValueError("orders must lie in 2..8")
    if threshold < 0:
        raise ValueError("threshold must be non-negative")
    hp = to_dense(H_p, dense_limit)
    out = []
    for k in orders:
        a = np.linalg.matrix_power(hp, k)
        cut = threshold * np.abs(a).max() if relative else threshold
        a = np.where(np.abs(a) < cut, 0.0, a)
        a = 0.5 * (a + a.conj().T)
        if not np.any(a.imag):
            a = a.real
        peak = np.abs(a).max()
        if normalize and peak > 0:
            a = a / peak
        out.append(a)
    return out


def default_probe() -> ControlStrategy:
    return ControlStrategy(kind="gradient", gain=1.0)


def score_candidates(
    H_p: PauliSum,
    pool: Sequence[PauliString | str],
    policy: ControlStrategy | None = None,
    dtau: float = 0.03,
    steps: int = 500,
    psi0: np.ndarray | None = None,
    method: str = "exact",
) -> list[CandidateScore]:
    """Time-summed pulse amplitudes of a probe run with the whole pool active.

    The probe starts from ``|+...+>`` unless ``psi0`` is given and runs for
    exactly ``steps`` steps (no early stop), so ``steps + 1`` amplitudes are
    summed per candidate.
    """
    if not pool:
        raise ValueError("candidate pool is empty")
    policy = policy or default_probe()
    controls = pauli_controls(pool)
    n = operator_qubits(H_p)
    psi0 = plus_state(n) if psi0 is None else psi0
    traj = evolve(
        psi0,
        H_p,
        controls,
        policy,
        dtau=dtau,
        stop=StopRule(max_steps=steps, fidelity_threshold=None),
        method=method,
    )
    B = traj.beta.sum(axis=0)
    return [CandidateScore(PauliString(str(c)), float(b)) for c, b in zip(pool, B)]


def select_negative(scores: Sequence[CandidateScore]) -> list[PauliString]:
    """Candidates with ``B < 0``, in pool order."""
    return [s.candidate for s in scores if s.B < 0]


def write_selection_report(scores: Sequence[CandidateScore], path: str | Path) -> None:
    selected = set(select_negative(scores))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["candidate", "B", "selected"])
        for s in scores:
            w.writerow([str(s.candidate), repr(s.B), s.candidate in selected])
