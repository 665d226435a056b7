"""3-SAT instances as clause-projector Hamiltonians.

Variable ``i`` (1-based, as in DIMACS) lives on qubit ``i - 1``; the value
True is the basis state ``|1>``. Each clause contributes the projector onto
its unique falsifying assignment, so a basis state's energy is the number
of clauses it violates.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from itertools import combinations, product
from pathlib import Path

import numpy as np

from .engine import eigensystem
from .pauli import PauliSum, check_dense_limit


@dataclass(frozen=True)
class CnfFormula:
    n_vars: int
    clauses: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))
        if self.n_vars < 1:
            raise ValueError("formula needs at least one variable")
        for c in self.clauses:
            if len(c) != 3:
                raise ValueError(f"clause {c} does not have exactly 3 literals")
            for lit in c:
                if lit == 0 or abs(lit) > self.n_vars:
                    raise ValueError(f"literal {lit} out of range 1..{self.n_vars}")

    def violated(self, assignment: int) -> int:
        """Number of clauses violated by the basis-state index ``assignment``."""
        count = 0
        for c in self.clauses:
            if not any(((assignment >> (abs(l) - 1)) & 1) == (l > 0) for l in c):
                count += 1
        return count


def parse_dimacs(text: str) -> CnfFormula:
    n_vars = None
    clauses = []
    pending: list[int] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("%"):
            break  # SATLIB files end with a '%' / '0' trailer
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ValueError(f"line {lineno}: bad problem line {line!r}")
            n_vars = int(parts[2])
            continue
        for tok in line.split():
            lit = int(tok)
            if lit == 0:
                clauses.append(tuple(pending))
                pending = []
            else:
                pending.append(lit)
    if pending:
        clauses.append(tuple(pending))
    if n_vars is None:
        raise ValueError("missing 'p cnf' problem line")
    return CnfFormula(n_vars, tuple(clauses))


def read_dimacs(path: str | Path) -> CnfFormula:
    return parse_dimacs(Path(path).read_text())


def format_dimacs(f: CnfFormula) -> str:
    lines = [f"p cnf {f.n_vars} {len(f.clauses)}"]
    lines += [" ".join(map(str, c)) + " 0" for c in f.clauses]
    return "\n".join(lines) + "\n"


def write_dimacs(f: CnfFormula, path: str | Path) -> None:
    Path(path).write_text(format_dimacs(f))


def random_3sat(n_vars: int, n_clauses: int, rng: np.random.Generator | int | None = None) -> CnfFormula:
    """Clauses over three distinct variables with random signs."""
    if n_vars < 3:
        raise ValueError("need at least 3 variables")
    rng = np.random.default_rng(rng)
    clauses = []
    for _ in range(n_clauses):
        vs = rng.choice(n_vars, size=3, replace=False) + 1
        signs = rng.choice([-1, 1], size=3)
        clauses.append(tuple(int(v * s) for v, s in zip(vs, signs)))
    return CnfFormula(n_vars, tuple(clauses))


def all_clauses(n_vars: int) -> list[tuple[int, int, int]]:
    """Every clause on three distinct variables, all sign patterns."""
    out = []
    for vs in combinations(range(1, n_vars + 1), 3):
        for signs in product((1, -1), repeat=3):
            out.append(tuple(v * s for v, s in zip(vs, signs)))
    return out


def solutions(f: CnfFormula) -> list[int]:
    """Satisfying assignments by exhaustive search (basis-state indices)."""
    return [b for b in range(1 << f.n_vars) if f.violated(b) == 0]


def sat_to_hamiltonian(f: CnfFormula) -> PauliSum:
    n = f.n_vars
    terms = []
    for clause in f.clauses:
        # falsifying value of literal l is 0 for l > 0 and 1 for l < 0;
        # |v><v| = (I + (-1)^v Z) / 2, expanded over all subsets
        for subset in product((0, 1), repeat=3):
            chars = ["I"] * n
            coeff = 1.0 / 8.0
            for use, lit in zip(subset, clause):
                if use:
                    q = abs(lit) - 1
                    chars[q] = "I" if chars[q] == "Z" else "Z"
                    coeff *= 1.0 if lit > 0 else -1.0
            terms.append((coeff, "".join(chars)))
    return PauliSum(terms, n)


def init_hamiltonian(n: int) -> PauliSum:
    """1/2 sum_i (I - X_i): each term is the matrix [[1, -1], [-1, 1]] / 2."""
    terms = [(0.5 * n, "I" * n)]
    for q in range(n):
        terms.append((-0.5, "I" * q + "X" + "I" * (n - q - 1)))
    return PauliSum(terms, n)


def aqc_hamiltonian(f: CnfFormula, s: float) -> PauliSum:
    """(1 - s) H_init + s H_final."""
    if not 0.0 <= s <= 1.0:
        raise ValueError("s must lie in [0, 1]")
    return (1.0 - s) * init_hamiltonian(f.n_vars) + s * sat_to_hamiltonian(f)


@dataclass
class GapScan:
    s: np.ndarray
    e0: np.ndarray
    e1: np.ndarray

    @property
    def gap(self) -> np.ndarray:
        return self.e1 - self.e0

    @property
    def min_gap(self) -> float:
        return float(self.gap.min())

    @property
    def s_at_min(self) -> float:
        return float(self.s[int(np.argmin(self.gap))])

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["s", "E0", "E1", "gap"])
            for row in zip(self.s, self.e0, self.e1, self.gap):
                w.writerow([repr(float(x)) for x in row])


def gap_scan(f: CnfFormula, n_points: int, dense_limit: int | None = None) -> GapScan:
    """E_1(s) - E_0(s) of the interpolating Hamiltonian on a uniform grid."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    check_dense_limit(f.n_vars, dense_limit)
    grid = np.linspace(0.0, 1.0, n_points)
    e0, e1 = [], []
    for s in grid:
        evals, _ = eigensystem(aqc_hamiltonian(f, float(s)), dense_limit)
        e0.append(evals[0])
        e1.append(evals[1])
    return GapScan(grid, np.array(e0), np.array(e1))
