"""Normalized imaginary-time propagation and spectral diagnostics.

States are plain 1-D complex ``numpy`` arrays of length ``2**n`` with unit
norm. The generator of a controlled run is ``H(tau) = H_p + sum_k beta_k(tau)
H_k`` where the amplitudes come from a :class:`~qitc.control.Controller`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.sparse.linalg import expm_multiply

from .control import ControlStrategy, Controller
from .pauli import (
    Operator,
    PauliSum,
    apply,
    check_dense_limit,
    diagonal,
    is_diagonal,
    operator_qubits,
    to_dense,
)

METHODS = ("euler", "exact", "expm")
DEGENERACY_TOL = 1e-8


class EvolutionError(RuntimeError):
    pass


# -- states --------------------------------------------------------------------

def normalize(psi: np.ndarray) -> np.ndarray:
    psi = np.asarray(psi, dtype=complex)
    norm = np.linalg.norm(psi)
    if not norm > 0 or not np.isfinite(norm):
        raise EvolutionError(f"cannot normalize state with norm {norm}")
    return psi / norm


def plus_state(n_qubits: int) -> np.ndarray:
    dim = 1 << n_qubits
    return np.full(dim, 1.0 / math.sqrt(dim), dtype=complex)


def basis_state(n_qubits: int, bits: str | int) -> np.ndarray:
    """Computational basis state; ``bits`` as an index or a string with qubit 0 first."""
    if isinstance(bits, str):
        if len(bits) != n_qubits or set(bits) - {"0", "1"}:
            raise ValueError(f"bad basis label {bits!r} for {n_qubits} qubits")
        index = sum(1 << q for q, b in enumerate(bits) if b == "1")
    else:
        index = int(bits)
    if not 0 <= index < 1 << n_qubits:
        raise ValueError(f"basis index {index} out of range for {n_qubits} qubits")
    psi = np.zeros(1 << n_qubits, dtype=complex)
    psi[index] = 1.0
    return psi


def random_state(n_qubits: int, rng: np.random.Generator | int | None = None) -> np.ndarray:
    """Haar-random state from an explicit generator or seed."""
    rng = np.random.default_rng(rng)
    dim = 1 << n_qubits
    return normalize(rng.standard_normal(dim) + 1j * rng.standard_normal(dim))


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    """|<psi|phi>|^2 for normalized states."""
    psi, phi = np.asarray(psi), np.asarray(phi)
    if psi.shape != phi.shape:
        raise ValueError(f"dimension mismatch: {psi.shape} vs {phi.shape}")
    return float(min(1.0, abs(np.vdot(psi, phi)) ** 2))


def subspace_fidelity(psi: np.ndarray, basis: np.ndarray) -> float:
    """Squared norm of the projection of ``psi`` on the columns of ``basis``."""
    basis = np.asarray(basis)
    if basis.ndim == 1:
        return fidelity(psi, basis)
    if basis.shape[0] != np.shape(psi)[0]:
        raise ValueError(f"dimension mismatch: {np.shape(psi)} vs {basis.shape}")
    return float(min(1.0, np.sum(np.abs(basis.conj().T @ psi) ** 2)))


# -- spectra -------------------------------------------------------------------

def eigensystem(H: Operator, dense_limit: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""
    check_dense_limit(operator_qubits(H), dense_limit)
    return _eigh(to_dense(H, dense_limit))


def ground_space(
    H: Operator, tol: float = DEGENERACY_TOL, dense_limit: int | None = None
) -> tuple[float, np.ndarray]:
    """Ground energy and a basis of all eigenvectors within ``tol`` of it."""
    evals, evecs = eigensystem(H, dense_limit)
    k = int(np.sum(evals - evals[0] <= tol))
    return float(evals[0]), evecs[:, :k]


def spectral_gap(H: Operator, dense_limit: int | None = None) -> float:
    """E_1 - E_0 counting the degenerate ground manifold as one level."""
    evals, _ = eigensystem(H, dense_limit)
    above = evals[evals - evals[0] > DEGENERACY_TOL]
    return float(above[0] - evals[0]) if above.size else 0.0


def _bound(op: Operator) -> float:
    # upper bound on the spectral norm: sum |c_j|, or the max row sum
    if isinstance(op, PauliSum):
        return op.one_norm()
    return float(np.abs(np.asarray(op)).sum(axis=1).max())


def _eigh(a: np.ndarray):
    # real symmetric input is diagonalized in real arithmetic (much faster)
    if np.iscomplexobj(a) and not np.any(a.imag):
        a = a.real
    return np.linalg.eigh(a)


def _exact_from_eig(psi: np.ndarray, evals: np.ndarray, evecs: np.ndarray, dtau: float):
    decay = np.exp(-(evals - evals[0]) * dtau)
    if not np.iscomplexobj(evecs):
        # real eigenvectors: two real products avoid upcasting V to complex
        re = evecs @ (decay * (evecs.T @ psi.real))
        im = evecs @ (decay * (evecs.T @ psi.imag))
        return normalize(re + 1j * im)
    # V^dagger psi without materializing V^dagger
    coeff = np.conj(evecs.T @ np.conj(psi))
    # shift by the lowest level: the factors stay in (0, 1]
    return normalize(evecs @ (decay * coeff))


def ite_step(
    psi: np.ndarray,
    H: Operator,
    dtau: float,
    method: str = "euler",
    dense_limit: int | None = None,
) -> np.ndarray:
    """One normalized step exp(-H dtau)|psi>.

    ``euler`` uses ``(1 - H dtau)`` and requires ``dtau * ||H||_bound < 1``;
    ``exact`` diagonalizes ``H`` densely; ``expm`` applies the dense
    exponential through scipy's truncated-Taylor action, which is cheaper
    than a diagonalization when ``H`` changes every step.
    """
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    psi = np.asarray(psi, dtype=complex)
    if method == "euler":
        bound = _bound(H)
        if dtau * bound >= 1.0:
            raise EvolutionError(
                f"euler step unstable: dtau * ||H|| = {dtau * bound:.4g} >= 1"
            )
        return normalize(psi - dtau * apply(H, psi))
    if is_diagonal(H):
        d = diagonal(H)
        return normalize(psi * np.exp(-(d - d.min()) * dtau))
    if method == "expm":
        return normalize(expm_multiply(-dtau * to_dense(H, dense_limit), psi))
    evals, evecs = eigensystem(H, dense_limit)
    return _exact_from_eig(psi, evals, evecs, dtau)


# -- controlled evolution ------------------------------------------------------

@dataclass
class StopRule:
    """When to end a run.

    ``fidelity_threshold`` defines convergence; with ``stop_at_threshold``
    the run ends at the first step reaching it. ``energy_tol`` ends the run
    once successive energies differ by less than the tolerance.
    """

    max_steps: int = 200_000
    fidelity_threshold: float | None = 0.99
    stop_at_threshold: bool = True
    energy_tol: float | None = None

    def __post_init__(self):
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")


@dataclass
class Trajectory:
    times: np.ndarray
    energy: np.ndarray
    fidelity: np.ndarray
    beta: np.ndarray  # (rows, n_controls)
    feedback: np.ndarray  # (rows, n_controls)
    phase: list = field(default_factory=list)
    spectrum: np.ndarray | None = None
    states: np.ndarray | None = None
    final_state: np.ndarray | None = None
    converged_step: int | None = None
    switch_step: int | None = None
    dtau: float = 0.0

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    @property
    def converged(self) -> bool:
        return self.converged_step is not None

    def mean_beta(self) -> np.ndarray:
        if self.beta.shape[1] == 0:
            return np.zeros(len(self.times))
        return self.beta.mean(axis=1)

    def to_csv(self, path: str | Path) -> None:
        k = self.beta.shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "tau", "energy", "fidelity"] + [f"beta_{i}" for i in range(k)])
            for m in range(len(self.times)):
                w.writerow(
                    [m, repr(float(self.times[m])), repr(float(self.energy[m])), repr(float(self.fidelity[m]))]
                    + [repr(float(b)) for b in self.beta[m]]
                )

    def spectrum_to_csv(self, path: str | Path) -> None:
        if self.spectrum is None:
            raise ValueError("trajectory was recorded without a spectrum")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "tau"] + [f"E_{i}" for i in range(self.spectrum.shape[1])])
            for m, row in enumerate(self.spectrum):
                w.writerow([m, repr(float(self.times[m]))] + [repr(float(e)) for e in row])


class _Generator:
    """Caches what is needed to step under H_p + sum beta_k H_k."""

    def __init__(self, H_p: Operator, controls: Sequence[Operator], method: str, dense_limit):
        self.H_p = H_p
        self.controls = list(controls)
        self.method = method
        self.dense_limit = dense_limit
        self.diagonal = is_diagonal(H_p) and all(is_diagonal(c) for c in self.controls)
        self.bounds = (_bound(H_p), [_bound(c) for c in self.controls])
        self._dense = None
        self._diag = None
        self._cache_key = None
        self._cache_eig = None
        self._hp_eig = None

    def _dense_parts(self):
        if self._dense is None:
            self._dense = (
                to_dense(self.H_p, self.dense_limit),
                [to_dense(c, self.dense_limit) for c in self.controls],
            )
        return self._dense

    def _diag_parts(self):
        if self._diag is None:
            self._diag = (diagonal(self.H_p), [diagonal(c) for c in self.controls])
        return self._diag

    def dense(self, beta: np.ndarray) -> np.ndarray:
        hp, hds = self._dense_parts()
        out = hp.copy()
        for b, hd in zip(beta, hds):
            if b != 0.0:
                out += b * hd
        return out

    def eig(self, beta: np.ndarray):
        if self.diagonal:
            d0, ds = self._diag_parts()
            d = d0 + sum((b * d for b, d in zip(beta, ds) if b != 0.0), np.zeros_like(d0))
            return np.sort(d), None
        if not np.any(beta):
            if self._hp_eig is None:
                self._hp_eig = _eigh(self._dense_parts()[0])
            return self._hp_eig
        key = beta.tobytes()
        if key != self._cache_key:
            self._cache_key = key
            self._cache_eig = _eigh(self.dense(beta))
        return self._cache_eig

    def eigvals(self, beta: np.ndarray) -> np.ndarray:
        if self.diagonal or not np.any(beta):
            return self.eig(beta)[0]
        h = self.dense(beta)
        if not np.any(h.imag):
            h = h.real
        return np.linalg.eigvalsh(h)

    def step(self, psi, hp_psi, hd_psis, beta, dtau):
        if self.method == "euler":
            bound = self.bounds[0] + sum(abs(b) * n for b, n in zip(beta, self.bounds[1]))
            if dtau * bound >= 1.0:
                raise EvolutionError(
                    f"euler step unstable: dtau * ||H(tau)|| = {dtau * bound:.4g} >= 1; "
                    "use method='exact' or a smaller dtau"
                )
            h_psi = hp_psi.copy()
            for b, v in zip(beta, hd_psis):
                if b != 0.0:
                    h_psi += b * v
            return normalize(psi - dtau * h_psi)
        if self.diagonal:
            d0, ds = self._diag_parts()
            d = d0.copy()
            for b, dk in zip(beta, ds):
                if b != 0.0:
                    d += b * dk
            return normalize(psi * np.exp(-(d - d.min()) * dtau))
        if self.method == "expm" and np.any(beta):
            return normalize(expm_multiply(-dtau * self.dense(beta), psi))
        evals, evecs = self.eig(beta)
        return _exact_from_eig(psi, evals, evecs, dtau)


def _resolve_target(H_p, target, dense_limit):
    if target is None:
        try:
            return ground_space(H_p, dense_limit=dense_limit)[1]
        except ValueError:
            return None
    return np.asarray(target)


def evolve(
    psi0: np.ndarray,
    H_p: Operator,
    controls: Sequence[Operator] = (),
    policy: ControlStrategy | Controller | None = None,
    dtau: float = 0.03,
    stop: StopRule | None = None,
    method: str = "euler",
    target: np.ndarray | None = None,
    record_spectrum: bool = False,
    record_states: bool = False,
    dense_limit: int | None = None,
) -> Trajectory:
    """Closed-loop imaginary-time evolution.

    Row ``m`` of the returned trajectory describes the state at
    ``tau = m * dtau`` together with the feedback ``T_k`` measured on it and
    the amplitudes ``beta_k`` the policy returns for the next step. With
    ``policy=None`` this is plain ITE.

    ``target`` is the reference for the fidelity column: a state, a matrix
    whose columns span a (degenerate) target space, or ``None`` for the
    ground space of ``H_p``.
    """
    if not dtau > 0:
        raise ValueError("dtau must be positive")
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    stop = stop or StopRule()
    controls = list(controls)
    n = operator_qubits(H_p)
    for c in controls:
        if operator_qubits(c) != n:
            raise ValueError("control acts on a different number of qubits than H_p")
    psi = normalize(psi0)
    if psi.shape != (1 << n,):
        raise ValueError(f"initial state has shape {psi.shape}, expected {(1 << n,)}")
    controller = None
    if policy is not None and controls:
        controller = policy if hasattr(policy, "betas") else Controller(policy, len(controls))
    gen = _Generator(H_p, controls, method, dense_limit)
    ref = _resolve_target(H_p, target, dense_limit)
    K = len(controls)

    times, energies, fids, betas, feedbacks, phases, spectra, states = [], [], [], [], [], [], [], []
    converged_step = None
    prev_energy = None
    m = 0
    while True:
        hp_psi = apply(H_p, psi)
        energy = float(np.vdot(psi, hp_psi).real)
        if not np.isfinite(energy):
            raise EvolutionError(f"non-finite energy at step {m} (tau={m * dtau:g})")
        hd_psis = [apply(c, psi) for c in controls]
        T = np.array(
            [2.0 * energy * np.vdot(psi, v).real - 2.0 * np.vdot(hp_psi, v).real for v in hd_psis]
        )
        beta = controller.betas(T, energy) if controller is not None else np.zeros(K)
        fid = subspace_fidelity(psi, ref) if ref is not None else math.nan

        times.append(m * dtau)
        energies.append(energy)
        fids.append(fid)
        betas.append(beta)
        feedbacks.append(T)
        phases.append(controller.phase if controller is not None else None)
        if record_spectrum:
            spectra.append(gen.eigvals(beta))
        if record_states:
            states.append(psi)

        thr = stop.fidelity_threshold
        if converged_step is None and thr is not None and fid >= thr:
            converged_step = m
            if stop.stop_at_threshold:
                break
        if stop.energy_tol is not None and prev_energy is not None:
            if abs(energy - prev_energy) < stop.energy_tol:
                break
        if m >= stop.max_steps:
            break
        prev_energy = energy
        psi = gen.step(psi, hp_psi, hd_psis, beta, dtau)
        m += 1

    return Trajectory(
        times=np.array(times),
        energy=np.array(energies),
        fidelity=np.array(fids),
        beta=np.array(betas).reshape(len(times), K),
        feedback=np.array(feedbacks).reshape(len(times), K),
        phase=phases,
        spectrum=np.array(spectra) if record_spectrum else None,
        states=np.array(states) if record_states else None,
        final_state=psi,
        converged_step=converged_step,
        switch_step=controller.switch_step if controller is not None else None,
        dtau=dtau,
    )


# -- diagnostics ---------------------------------------------------------------

def gap_trajectory(
    H_p: Operator,
    controls: Sequence[Operator],
    beta_history: np.ndarray,
    dense_limit: int | None = None,
) -> np.ndarray:
    """Delta E_i(tau) = <psi_0|H(tau)|psi_0> - <psi_i|H(tau)|psi_i>.

    ``psi_i`` are the fixed eigenstates of ``H_p``; returns an array of shape
    ``(rows, 2**n)`` whose column 0 is identically zero.
    """
    beta_history = np.atleast_2d(np.asarray(beta_history, dtype=float))
    if beta_history.shape[1] != len(controls):
        raise ValueError(
            f"beta history has {beta_history.shape[1]} columns for {len(controls)} controls"
        )
    evals, evecs = eigensystem(H_p, dense_limit)
    d = np.array(
        [np.einsum("ij,ij->j", evecs.conj(), to_dense(c, dense_limit) @ evecs).real for c in controls]
    ).reshape(len(controls), len(evals))
    levels = evals[None, :] + beta_history @ d
    return levels[:, :1] - levels


@dataclass
class ControllabilityReport:
    eigenvalues: np.ndarray
    weights: np.ndarray  # squared projection of each eigenstate on the reachable span
    reachable: np.ndarray
    span_dim: int

    @property
    def complete(self) -> bool:
        return bool(np.all(self.reachable))


def krylov_span(generators: Sequence[np.ndarray], psi0: np.ndarray, dim_cap: int, tol: float = 1e-10):
    """Orthonormal basis of the span reached by repeatedly applying ``generators`` to ``psi0``."""
    basis = [normalize(psi0)]
    frontier = list(basis)
    while frontier and len(basis) < dim_cap:
        fresh = []
        for v in frontier:
            for g in generators:
                w = g @ v
                Q = np.array(basis).T
                for _ in range(2):
                    w = w - Q @ (Q.conj().T @ w)
                norm = np.linalg.norm(w)
                if norm > tol:
                    w = w / norm
                    basis.append(w)
                    fresh.append(w)
                    if len(basis) >= dim_cap:
                        break
            if len(basis) >= dim_cap:
                break
        frontier = fresh
    return np.array(basis).T


def controllability_probe(
    H_p: Operator,
    controls: Sequence[Operator],
    psi0: np.ndarray,
    dim_cap: int | None = None,
    overlap_tol: float = 1e-8,
    dense_limit: int | None = None,
) -> ControllabilityReport:
    """Which eigenstates of ``H_p`` the control system can reach from ``psi0``.

    Heuristic: the reachable set is approximated by the span generated by
    ``H_p`` and the controls acting repeatedly on ``psi0``. An eigenstate
    counts as reachable when its squared projection on that span exceeds
    ``overlap_tol``. The system is completely controllable when all are.
    """
    evals, evecs = eigensystem(H_p, dense_limit)
    gens = [to_dense(H_p, dense_limit)] + [to_dense(c, dense_limit) for c in controls]
    cap = len(evals) if dim_cap is None else dim_cap
    Q = krylov_span(gens, np.asarray(psi0, dtype=complex), cap)
    weights = np.sum(np.abs(Q.conj().T @ evecs) ** 2, axis=0)
    return ControllabilityReport(
        eigenvalues=evals, weights=weights, reachable=weights > overlap_tol, span_dim=Q.shape[1]
    )
