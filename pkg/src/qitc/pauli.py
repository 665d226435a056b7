"""Pauli-string algebra on statevectors.

Conventions used everywhere in this package:

* a Pauli string is written left to right, the leftmost letter acting on
  qubit 0;
* in a statevector of length ``2**n`` the value of qubit ``q`` in basis
  state ``k`` is bit ``q`` of ``k`` (``(k >> q) & 1``), so qubit 0 is the
  least significant bit;
* ``Z|0> = +|0>``.

Dense matrices produced by :func:`to_dense` follow the same indexing, i.e.
the Kronecker product runs from the highest qubit down to qubit 0.

Operators accepted by :func:`apply`, :func:`expectation` and friends are
either a :class:`PauliSum` or a dense Hermitian ``numpy`` array.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Iterator, Union

import numpy as np

DEFAULT_DENSE_LIMIT = 14
NORM_TOL = 1e-8
ZERO_COEFF = 1e-15

_LETTERS = "IXYZ"
_SINGLE = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class DenseLimitError(ValueError):
    """Raised when an operation would build a matrix above the dense limit."""


def check_dense_limit(n_qubits: int, dense_limit: int | None = None) -> None:
    limit = DEFAULT_DENSE_LIMIT if dense_limit is None else dense_limit
    if n_qubits > limit:
        raise DenseLimitError(
            f"{n_qubits} qubits exceeds the dense limit of {limit}"
        )


@dataclass(frozen=True, order=True)
class PauliString:
    """Tensor product of single-qubit Paulis, e.g. ``PauliString("IZZX")``."""

    letters: str

    def __post_init__(self):
        if not self.letters:
            raise ValueError("empty Pauli string")
        bad = set(self.letters) - set(_LETTERS)
        if bad:
            raise ValueError(
                f"illegal character(s) {''.join(sorted(bad))!r} in Pauli string {self.letters!r}"
            )

    def __str__(self) -> str:
        return self.letters

    def __len__(self) -> int:
        return len(self.letters)

    def __add__(self, other: "PauliString | str") -> "PauliString":
        # concatenation, used for the "II+P(IZ)" notation
        return PauliString(self.letters + str(other))

    @property
    def n_qubits(self) -> int:
        return len(self.letters)

    @property
    def x_mask(self) -> int:
        return sum(1 << q for q, c in enumerate(self.letters) if c in "XY")

    @property
    def z_mask(self) -> int:
        return sum(1 << q for q, c in enumerate(self.letters) if c in "ZY")

    @property
    def n_y(self) -> int:
        return self.letters.count("Y")

    @property
    def weight(self) -> int:
        return len(self.letters) - self.letters.count("I")

    def is_diagonal(self) -> bool:
        return set(self.letters) <= {"I", "Z"}


def parse_pauli_string(text: str) -> PauliString:
    return PauliString(text.strip())


def _as_string(s: "PauliString | str") -> PauliString:
    return s if isinstance(s, PauliString) else PauliString(s)


def commutes(a: "PauliString | str", b: "PauliString | str") -> bool:
    """True iff the two strings commute (even number of clashing positions)."""
    a, b = _as_string(a), _as_string(b)
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    clashes = sum(
        1 for p, q in zip(a.letters, b.letters) if p != "I" and q != "I" and p != q
    )
    return clashes % 2 == 0


def _multiset_permutations(letters: list[str]) -> Iterator[str]:
    if not letters:
        yield ""
        return
    for first in sorted(set(letters)):
        rest = list(letters)
        rest.remove(first)
        for tail in _multiset_permutations(rest):
            yield first + tail


def permutation_set(pattern: "PauliString | str") -> set[PauliString]:
    """All distinct rearrangements of the letters of ``pattern``."""
    pattern = _as_string(pattern)
    return {PauliString(s) for s in _multiset_permutations(list(pattern.letters))}


def cyclic_set(pattern: "PauliString | str") -> set[PauliString]:
    """All circular shifts of ``pattern``."""
    s = _as_string(pattern).letters
    return {PauliString(s[k:] + s[:k]) for k in range(len(s))}


_TERM_RE = re.compile(r"^(?:([IXYZ]*)\+)?P\(([IXYZ]+)\)(?:\+([IXYZ]*))?$")


def expand_notation(text: str) -> set[PauliString]:
    """Expand the ``prefix+P(pattern)+suffix`` shorthand, e.g. ``"II+P(IZ)"``.

    >>> sorted(map(str, expand_notation("II+P(IZ)")))
    ['IIIZ', 'IIZI']
    """
    m = _TERM_RE.match(text.replace(" ", ""))
    if m is None:
        raise ValueError(f"cannot parse {text!r}")
    prefix, pattern, suffix = m.group(1) or "", m.group(2), m.group(3) or ""
    return {PauliString(prefix + p.letters + suffix) for p in permutation_set(pattern)}


def multinomial(pattern: "PauliString | str") -> int:
    s = _as_string(pattern).letters
    out = math.factorial(len(s))
    for c in set(s):
        out //= math.factorial(s.count(c))
    return out


class PauliSum:
    """Real-weighted sum of Pauli strings on a fixed number of qubits.

    Duplicate strings are merged at construction and terms with
    ``|coefficient| < 1e-15`` are dropped. Instances are treated as
    immutable.
    """

    def __init__(
        self,
        terms: Iterable[tuple[float, "PauliString | str"]] = (),
        n_qubits: int | None = None,
    ):
        merged: dict[PauliString, float] = {}
        for coeff, s in terms:
            s = _as_string(s)
            if n_qubits is None:
                n_qubits = len(s)
            elif len(s) != n_qubits:
                raise ValueError(
                    f"string {s} has {len(s)} qubits, expected {n_qubits}"
                )
            c = complex(coeff)
            if abs(c.imag) > 0:
                raise ValueError(f"coefficient of {s} is not real: {coeff}")
            merged[s] = merged.get(s, 0.0) + c.real
        if n_qubits is None:
            raise ValueError("n_qubits required for an empty PauliSum")
        self.n_qubits = n_qubits
        self._terms = tuple(
            (c, s) for s, c in merged.items() if abs(c) >= ZERO_COEFF
        )
        self._groups = None

    @classmethod
    def from_dict(cls, terms: dict, n_qubits: int | None = None) -> "PauliSum":
        return cls(((c, s) for s, c in terms.items()), n_qubits)

    @property
    def terms(self) -> tuple[tuple[float, PauliString], ...]:
        return self._terms

    @property
    def dim(self) -> int:
        return 1 << self.n_qubits

    def to_dict(self) -> dict[str, float]:
        return {str(s): c for c, s in self._terms}

    def coefficient(self, s: "PauliString | str") -> float:
        return self.to_dict().get(str(s), 0.0)

    def strings(self) -> list[PauliString]:
        return [s for _, s in self._terms]

    def one_norm(self) -> float:
        return float(sum(abs(c) for c, _ in self._terms))

    def is_diagonal(self) -> bool:
        return all(s.is_diagonal() for _, s in self._terms)

    def __len__(self) -> int:
        return len(self._terms)

    def __iter__(self):
        return iter(self._terms)

    def __eq__(self, other) -> bool:
        if not isinstance(other, PauliSum):
            return NotImplemented
        return self.n_qubits == other.n_qubits and self.to_dict() == other.to_dict()

    def __add__(self, other: "PauliSum") -> "PauliSum":
        if not isinstance(other, PauliSum):
            return NotImplemented
        return PauliSum(self._terms + other._terms, self._check_n(other))

    def __sub__(self, other: "PauliSum") -> "PauliSum":
        return self + (-1.0) * other

    def __mul__(self, scalar: float) -> "PauliSum":
        return PauliSum(((scalar * c, s) for c, s in self._terms), self.n_qubits)

    __rmul__ = __mul__

    def __neg__(self) -> "PauliSum":
        return -1.0 * self

    def _check_n(self, other: "PauliSum") -> int:
        if other.n_qubits != self.n_qubits:
            raise ValueError(
                f"qubit count mismatch: {self.n_qubits} vs {other.n_qubits}"
            )
        return self.n_qubits

    def __repr__(self) -> str:
        body = " + ".join(f"{c:g}*{s}" for c, s in self._terms[:6])
        more = "" if len(self._terms) <= 6 else f" + ...({len(self._terms)} terms)"
        return f"PauliSum({body or '0'}{more}; n={self.n_qubits})"

    def _diag_groups(self) -> list[tuple[int, np.ndarray]]:
        # one (x_mask, phase-and-sign vector) pair per distinct bit-flip pattern
        if self._groups is None:
            idx = np.arange(self.dim, dtype=np.int64)
            groups: dict[int, np.ndarray] = {}
            for c, s in self._terms:
                parity = np.bitwise_count(idx & s.z_mask) & 1
                vec = c * (1j ** s.n_y) * (1 - 2 * parity.astype(float))
                x = s.x_mask
                groups[x] = groups[x] + vec if x in groups else vec.astype(complex)
            self._groups = list(groups.items())
        return self._groups


Operator = Union[PauliSum, np.ndarray]


def identity(n_qubits: int, coeff: float = 1.0) -> PauliSum:
    return PauliSum([(coeff, "I" * n_qubits)])


def operator_qubits(op: Operator) -> int:
    if isinstance(op, PauliSum):
        return op.n_qubits
    dim = np.shape(op)[0]
    n = dim.bit_length() - 1
    if 1 << n != dim or np.shape(op) != (dim, dim):
        raise ValueError(f"dense operator has non-qubit shape {np.shape(op)}")
    return n


def _check_state(op: Operator, psi: np.ndarray) -> None:
    n = operator_qubits(op)
    if psi.shape != (1 << n,):
        raise ValueError(
            f"dimension mismatch: operator on {n} qubits, state of shape {psi.shape}"
        )


def _check_normalized(psi: np.ndarray) -> None:
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > NORM_TOL:
        raise ValueError(f"state is not normalized (norm {norm:.12g})")


def apply(op: Operator, psi: np.ndarray) -> np.ndarray:
    """Return ``op @ psi`` (unnormalized)."""
    psi = np.asarray(psi, dtype=complex)
    _check_state(op, psi)
    if not isinstance(op, PauliSum):
        return np.asarray(op) @ psi
    out = np.zeros_like(psi)
    idx = np.arange(psi.size, dtype=np.int64)
    for x, vec in op._diag_groups():
        weighted = vec * psi
        if x == 0:
            out += weighted
        else:
            # (P psi)[k] = phase(k ^ x) psi[k ^ x]
            out += weighted[idx ^ x]
    return out


def expectation(op: Operator, psi: np.ndarray) -> float:
    """<psi|op|psi> for a normalized state."""
    psi = np.asarray(psi, dtype=complex)
    _check_normalized(psi)
    return float(np.vdot(psi, apply(op, psi)).real)


def anticommutator_expectation(a: Operator, b: Operator, psi: np.ndarray) -> float:
    """<psi|AB + BA|psi> = 2 Re<A psi|B psi>."""
    psi = np.asarray(psi, dtype=complex)
    _check_normalized(psi)
    if operator_qubits(a) != operator_qubits(b):
        raise ValueError("operators act on different qubit counts")
    ap, bp = apply(a, psi), apply(b, psi)
    # summing both orders makes the result bit-exactly symmetric in (a, b)
    return float(np.vdot(ap, bp).real + np.vdot(bp, ap).real)


def string_to_dense(s: "PauliString | str") -> np.ndarray:
    s = _as_string(s)
    m = np.ones((1, 1), dtype=complex)
    for c in s.letters:
        # qubit 0 is the least significant index bit, so it goes rightmost
        m = np.kron(_SINGLE[c], m)
    return m


def to_dense(op: Operator, dense_limit: int | None = None) -> np.ndarray:
    """Dense ``2**n x 2**n`` matrix of ``op``."""
    if not isinstance(op, PauliSum):
        return np.asarray(op, dtype=complex)
    check_dense_limit(op.n_qubits, dense_limit)
    out = np.zeros((op.dim, op.dim), dtype=complex)
    cols = np.arange(op.dim, dtype=np.int64)
    for x, vec in op._diag_groups():
        # column k holds phase(k) at row k ^ x
        out[cols ^ x, cols] += vec
    return out


def diagonal(op: Operator) -> np.ndarray:
    """Diagonal of ``op`` in the computational basis, without densifying."""
    if not isinstance(op, PauliSum):
        return np.real(np.diag(op)).copy()
    for x, vec in op._diag_groups():
        if x == 0:
            return vec.real.copy()
    return np.zeros(op.dim)


def is_diagonal(op: Operator) -> bool:
    if isinstance(op, PauliSum):
        return op.is_diagonal()
    a = np.asarray(op)
    return not np.any(a - np.diag(np.diag(a)))


# -- Hamiltonian text format -------------------------------------------------

def parse_hamiltonian_text(text: str, source: str = "<string>") -> PauliSum:
    """Parse ``<coefficient> <pauli_string>`` lines; ``#`` starts a comment."""
    terms = []
    n = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"{source}:{lineno}: expected '<coefficient> <pauli>', got {raw!r}")
        try:
            coeff = float(parts[0])
            s = parse_pauli_string(parts[1])
        except ValueError as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
        if n is None:
            n = len(s)
        elif len(s) != n:
            raise ValueError(
                f"{source}:{lineno}: string {s} has {len(s)} qubits, previous lines have {n}"
            )
        terms.append((coeff, s))
    if n is None:
        raise ValueError(f"{source}: no terms found")
    return PauliSum(terms, n)


def format_hamiltonian_text(h: PauliSum, header: str | None = None) -> str:
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    lines += [f"{c!r} {s}" for c, s in h.terms]
    return "\n".join(lines) + "\n"


def pauli_strings(n_qubits: int, letters: str = _LETTERS) -> Iterator[PauliString]:
    """Every string over ``letters`` of length ``n_qubits`` (use small n)."""
    if n_qubits <= 0:
        return
    for combo in np.ndindex(*([len(letters)] * n_qubits)):
        yield PauliString("".join(letters[i] for i in combo))


def z_strings(n_qubits: int, weight: int) -> list[PauliString]:
    """Strings with exactly ``weight`` Z letters, lexicographic order."""
    out = []
    for pos in combinations(range(n_qubits), weight):
        chars = ["I"] * n_qubits
        for p in pos:
            chars[p] = "Z"
        out.append(PauliString("".join(chars)))
    return sorted(out)
