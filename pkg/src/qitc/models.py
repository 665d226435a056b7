"""Problem Hamiltonians and control operators used by the experiments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .pauli import (
    Operator,
    PauliString,
    PauliSum,
    check_dense_limit,
    format_hamiltonian_text,
    operator_qubits,
    parse_hamiltonian_text,
    to_dense,
)


@dataclass(frozen=True)
class LatticeSpec:
    rows: int
    cols: int
    boundary: str = "open"

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("lattice needs rows, cols >= 1")
        if self.boundary != "open":
            raise ValueError("only open boundaries are supported")

    @property
    def n_sites(self) -> int:
        return self.rows * self.cols


def grid_edges(spec: LatticeSpec) -> list[tuple[int, int]]:
    """Nearest-neighbour pairs of an open grid; site (r, c) is qubit r*cols + c."""
    edges = []
    for r in range(spec.rows):
        for c in range(spec.cols):
            i = r * spec.cols + c
            if c + 1 < spec.cols:
                edges.append((i, i + 1))
            if r + 1 < spec.rows:
                edges.append((i, i + spec.cols))
    return edges


def _placed(n: int, letters: dict[int, str]) -> PauliString:
    chars = ["I"] * n
    for q, c in letters.items():
        chars[q] = c
    return PauliString("".join(chars))


def build_xxx_2d(spec: LatticeSpec, field: float = 0.2, coupling: float = 0.1) -> PauliSum:
    """field * sum_i Z_i + coupling * sum_<ij> (XX + YY + ZZ) on an open grid."""
    n = spec.n_sites
    terms = [(field, _placed(n, {i: "Z"})) for i in range(n)]
    for i, j in grid_edges(spec):
        for p in "XYZ":
            terms.append((coupling, _placed(n, {i: p, j: p})))
    return PauliSum(terms, n)


def sk_couplings(n: int, seed: int) -> np.ndarray:
    """Upper-triangular J_ij ~ N(0, 1)/sqrt(n), drawn in (i, j) lexicographic order."""
    if n < 2:
        raise ValueError("SK model needs n >= 2")
    rng = np.random.default_rng(seed)
    J = np.zeros((n, n))
    iu = np.triu_indices(n, k=1)
    J[iu] = rng.standard_normal(len(iu[0])) / math.sqrt(n)
    return J


def build_sk(n: int, seed: int) -> PauliSum:
    """All-to-all sum_{i<j} J_ij Z_i Z_j, no field."""
    J = sk_couplings(n, seed)
    terms = [
        (J[i, j], _placed(n, {i: "Z", j: "Z"})) for i in range(n) for j in range(i + 1, n)
    ]
    return PauliSum(terms, n)


def commuting_basis(n: int) -> list[PauliString]:
    """The mutually commuting strings X...X, Y...Y, Z...Z (n even)."""
    return [PauliString(p * n) for p in "XYZ"]


def tunable_gap_model(
    n: int, gap: float, tilt: float = 0.3, coupling: float = 0.05
) -> PauliSum:
    """Synthetic family whose ground/first-excited gap is set by ``gap``.

    Qubit 0 sees a tilted field of magnitude ``gap/2``; the others see fields
    of magnitude ``1 + 0.5 q``, so for ``gap < 2`` the lowest excitation is a
    flip of qubit 0 with energy close to ``gap``. A weak chain couples the
    qubits: ZZ among qubits 1..n-1 and YY between qubits 0 and 1. The other
    spins have ``<Y> = 0``, so the YY link does not shift qubit 0's splitting
    to first order. The tilt makes the eigenbasis differ from the
    computational one.
    """
    if n < 1 or gap <= 0:
        raise ValueError("need n >= 1 and gap > 0")
    c, s = math.cos(tilt), math.sin(tilt)
    terms = []
    for q in range(n):
        h = gap / 2 if q == 0 else 1.0 + 0.5 * q
        terms.append((-h * c, _placed(n, {q: "Z"})))
        terms.append((-h * s, _placed(n, {q: "X"})))
    if n > 1:
        terms.append((coupling, _placed(n, {0: "Y", 1: "Y"})))
    for q in range(1, n - 1):
        terms.append((coupling, _placed(n, {q: "Z", q + 1: "Z"})))
    return PauliSum(terms, n)


# -- diagonal-control experiment --------------------------------------------

@dataclass(frozen=True)
class DiagExperimentSpec:
    diag_entries: tuple[float, ...]
    p: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        dim = len(self.diag_entries)
        if dim < 1 or dim & (dim - 1):
            raise ValueError("diag_entries length must be a power of two")


def default_diag_entries(dim: int, low: float = -5.0, high: float = 5.0) -> tuple[float, ...]:
    """(low, high, 0, ..., 0): push the ground level down and the first excited level up."""
    entries = [0.0] * dim
    entries[0] = low
    if dim > 1:
        entries[1] = high
    return tuple(entries)


def random_sparse_hermitian(dim: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Zero-diagonal symmetric matrix with a fraction ``p`` of off-diagonal pairs set.

    Exactly ``round(p * dim*(dim-1)/2)`` upper-triangle entries are drawn
    uniformly from [0, 1] and mirrored.
    """
    iu = np.triu_indices(dim, k=1)
    n_pairs = len(iu[0])
    count = int(round(p * n_pairs))
    R = np.zeros((dim, dim))
    if count:
        pick = rng.choice(n_pairs, size=count, replace=False)
        vals = rng.uniform(0.0, 1.0, size=count)
        # uniform(0, 1) can return exactly 0; keep the nonzero count exact
        vals[vals == 0.0] = np.nextafter(0.0, 1.0)
        R[iu[0][pick], iu[1][pick]] = vals
        R = R + R.T
    return R


def build_diag_experiment(
    H_p: Operator,
    spec: DiagExperimentSpec,
    mode: str = "additive",
    dense_limit: int | None = None,
) -> np.ndarray:
    """Dense control operator U (D + R(p)) U^dagger in the eigenbasis of ``H_p``.

    ``mode="additive"`` returns that operator itself, so the driven generator
    is ``H_p + beta * H_d``. ``mode="replace"`` returns it minus ``H_p`` so
    that ``H_p + H_d`` equals ``U (D + R) U^dagger`` at unit amplitude.
    """
    n = operator_qubits(H_p)
    check_dense_limit(n, dense_limit)
    dim = 1 << n
    if len(spec.diag_entries) != dim:
        raise ValueError(f"need {dim} diagonal entries, got {len(spec.diag_entries)}")
    if mode not in ("additive", "replace"):
        raise ValueError(f"unknown mode {mode!r}")
    hp = to_dense(H_p, dense_limit)
    _, U = np.linalg.eigh(hp)
    rng = np.random.default_rng(spec.seed)
    D = np.diag(np.asarray(spec.diag_entries, dtype=float)) + random_sparse_hermitian(dim, spec.p, rng)
    Hd = U @ D @ U.conj().T
    Hd = 0.5 * (Hd + Hd.conj().T)
    if mode == "replace":
        Hd = Hd - hp
    return Hd


# -- files ---------------------------------------------------------------------

def load_hamiltonian(path: str | Path) -> PauliSum:
    path = Path(path)
    return parse_hamiltonian_text(path.read_text(), source=str(path))


def save_hamiltonian(H: PauliSum, path: str | Path, header: str | None = None) -> None:
    Path(path).write_text(format_hamiltonian_text(H, header))


SAMPLES = {"h2_2q": "h2_2q.txt", "h2_4q": "h2_4q.txt"}


def sample_path(name: str) -> Path:
    """Path of a bundled sample Hamiltonian ('h2_2q' or 'h2_4q')."""
    if name not in SAMPLES:
        raise KeyError(f"unknown sample {name!r}; available: {sorted(SAMPLES)}")
    return Path(str(resources.files("qitc") / "data" / SAMPLES[name]))


def load_sample(name: str) -> PauliSum:
    return load_hamiltonian(sample_path(name))


def pauli_controls(strings: Sequence[PauliString | str]) -> list[PauliSum]:
    """Wrap each string as a unit-weight control operator."""
    out = []
    for s in strings:
        s = s if isinstance(s, PauliString) else PauliString(s)
        out.append(PauliSum([(1.0, s)], len(s)))
    return out
