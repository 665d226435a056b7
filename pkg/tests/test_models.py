import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qitc.engine import eigensystem, spectral_gap
from qitc.models import (
    DiagExperimentSpec,
    LatticeSpec,
    build_diag_experiment,
    build_sk,
    build_xxx_2d,
    commuting_basis,
    default_diag_entries,
    grid_edges,
    load_hamiltonian,
    load_sample,
    pauli_controls,
    random_sparse_hermitian,
    save_hamiltonian,
    sample_path,
    sk_couplings,
    tunable_gap_model,
)
from qitc.pauli import PauliSum, commutes, is_diagonal, to_dense

from conftest import oracle_dense, random_pauli_sum


def brute_edges(rows, cols):
    sites = [(r, c) for r in range(rows) for c in range(cols)]
    return {
        tuple(sorted((r1 * cols + c1, r2 * cols + c2)))
        for (r1, c1), (r2, c2) in itertools.combinations(sites, 2)
        if abs(r1 - r2) + abs(c1 - c2) == 1
    }


# -- XXX lattice --------------------------------------------------------------------

@pytest.mark.parametrize("rows, cols, n_terms", [(1, 2, 5), (3, 3, 45), (1, 1, 1)])
def test_xxx_term_counts(rows, cols, n_terms):
    assert len(build_xxx_2d(LatticeSpec(rows, cols))) == n_terms


@pytest.mark.parametrize("rows, cols", [(1, 4), (2, 3), (3, 3), (4, 2)])
def test_grid_edges_brute_force(rows, cols):
    edges = grid_edges(LatticeSpec(rows, cols))
    assert len(edges) == len(set(edges))
    assert set(edges) == brute_edges(rows, cols)


def test_xxx_coefficients():
    h = build_xxx_2d(LatticeSpec(3, 3))
    assert h.coefficient("ZIIIIIIII") == 0.2
    assert h.coefficient("XXIIIIIII") == 0.1
    assert h.coefficient("YIIYIIIII") == 0.1
    assert h.coefficient("IXXIIIIII") == 0.1
    assert h.coefficient("IIXXIIIII") == 0.0  # sites 2 and 3 are not neighbours


def test_xxx_2x2_ground_energy():
    h = build_xxx_2d(LatticeSpec(2, 2))
    e0 = np.linalg.eigvalsh(oracle_dense(h))[0]
    assert abs(eigensystem(h)[0][0] - e0) < 1e-12


def test_lattice_validation():
    with pytest.raises(ValueError):
        LatticeSpec(0, 3)
    with pytest.raises(ValueError):
        LatticeSpec(2, 2, boundary="periodic")


# -- SK ----------------------------------------------------------------------------

def test_sk_examples():
    assert len(build_sk(2, 5)) == 1
    assert build_sk(5, 11) == build_sk(5, 11)
    assert build_sk(5, 11).to_dict() == build_sk(5, 11).to_dict()
    assert build_sk(5, 11) != build_sk(5, 12)
    with pytest.raises(ValueError):
        build_sk(1, 0)


@pytest.mark.parametrize("seed", range(5))
def test_sk_ground_energy_brute_force(seed):
    n = 4
    J = sk_couplings(n, seed)
    best = min(
        sum(J[i, j] * s[i] * s[j] for i in range(n) for j in range(i + 1, n))
        for s in itertools.product((1, -1), repeat=n)
    )
    h = build_sk(n, seed)
    assert is_diagonal(h)
    assert abs(eigensystem(h)[0][0] - best) < 1e-12


def test_sk_coupling_scale():
    J = np.concatenate([sk_couplings(10, s)[np.triu_indices(10, 1)] for s in range(40)])
    assert abs(J.std() * math.sqrt(10) - 1) < 0.1


# -- other families ----------------------------------------------------------------

def test_commuting_basis():
    basis = commuting_basis(4)
    assert [str(s) for s in basis] == ["XXXX", "YYYY", "ZZZZ"]
    assert all(commutes(a, b) for a in basis for b in basis)


@pytest.mark.parametrize("gap", [0.01, 0.05, 0.2, 1.0])
def test_tunable_gap_tracks_parameter(gap):
    g = spectral_gap(tunable_gap_model(4, gap))
    assert abs(g - gap) < 0.1 * gap + 0.01


def test_tunable_gap_is_monotone():
    gaps = [spectral_gap(tunable_gap_model(3, g)) for g in (0.02, 0.05, 0.1, 0.3, 1.0)]
    assert gaps == sorted(gaps)


def test_pauli_controls():
    ctrl = pauli_controls(["ZI", "IZ"])
    assert [c.to_dict() for c in ctrl] == [{"ZI": 1.0}, {"IZ": 1.0}]


# -- diagonal-control experiment -----------------------------------------------------

def test_default_entries():
    assert default_diag_entries(4) == (-5.0, 5.0, 0.0, 0.0)


def test_diag_spec_validation():
    with pytest.raises(ValueError):
        DiagExperimentSpec((0.0, 0.0, 0.0))
    with pytest.raises(ValueError):
        DiagExperimentSpec((0.0, 0.0), p=1.5)


def test_diag_p0_commutes_and_has_requested_eigenvalues(rng):
    hp = random_pauli_sum(rng, 3, 8)
    entries = tuple(rng.normal(size=8))
    hd = build_diag_experiment(hp, DiagExperimentSpec(entries, p=0.0))
    dense = oracle_dense(hp)
    assert np.linalg.norm((dense + hd) @ dense - dense @ (dense + hd)) <= 1e-9
    _, U = np.linalg.eigh(dense)
    np.testing.assert_allclose(np.diag(U.conj().T @ hd @ U).real, entries, atol=1e-10)


def test_diag_p0_splits_lowest_pair_by_ten():
    hp = tunable_gap_model(4, 0.1)
    evals = eigensystem(hp)[0]
    hd = build_diag_experiment(hp, DiagExperimentSpec(default_diag_entries(16)))
    total = np.linalg.eigvalsh(to_dense(hp) + hd)
    shifted = evals + np.array(default_diag_entries(16))
    np.testing.assert_allclose(total, np.sort(shifted), atol=1e-9)
    # the level that was first excited now sits (E1 - E0) + 10 above the ground
    assert abs((shifted[1] - shifted[0]) - (evals[1] - evals[0] + 10)) < 1e-12
    assert total[0] == pytest.approx(evals[0] - 5)


def test_diag_replace_mode():
    hp = build_xxx_2d(LatticeSpec(1, 3))
    spec = DiagExperimentSpec(default_diag_entries(8))
    hd = build_diag_experiment(hp, spec, mode="replace")
    np.testing.assert_allclose(np.linalg.eigvalsh(to_dense(hp) + hd), sorted(spec.diag_entries), atol=1e-12)
    with pytest.raises(ValueError):
        build_diag_experiment(hp, spec, mode="other")


@settings(max_examples=30)
@given(st.integers(1, 4), st.floats(0, 1), st.integers(0, 1000))
def test_sparse_disorder_count_and_symmetry(n, p, seed):
    dim = 1 << n
    R = random_sparse_hermitian(dim, p, np.random.default_rng(seed))
    pairs = dim * (dim - 1) // 2
    assert np.count_nonzero(np.triu(R, 1)) == round(p * pairs)
    assert np.all(np.diag(R) == 0)
    np.testing.assert_array_equal(R, R.T)
    assert R.min() >= 0 and R.max() <= 1


@pytest.mark.parametrize("p", [0.0, 0.1, 0.6, 1.0])
def test_diag_experiment_is_hermitian_and_deterministic(p):
    hp = build_xxx_2d(LatticeSpec(1, 3))
    spec = DiagExperimentSpec(default_diag_entries(8), p=p, seed=4)
    hd = build_diag_experiment(hp, spec)
    assert np.abs(hd - hd.conj().T).max() <= 1e-12
    np.testing.assert_array_equal(hd, build_diag_experiment(hp, spec))
    _, U = np.linalg.eigh(to_dense(hp))
    inner = U.conj().T @ hd @ U
    off = inner[np.triu_indices(8, 1)]
    assert np.sum(np.abs(off) > 1e-12) == round(p * 28)


# -- files ---------------------------------------------------------------------------

def test_load_examples(tmp_path):
    f = tmp_path / "h.txt"
    f.write_text("1.0 IZ\n0.5 XX\n")
    h = load_hamiltonian(f)
    assert h.n_qubits == 2 and len(h) == 2
    f.write_text("0.3 ZZ\n0.2 ZZ\n")
    assert load_hamiltonian(f).to_dict() == {"ZZ": 0.5}


def test_load_reports_line(tmp_path):
    f = tmp_path / "bad.txt"
    f.write_text("1.0 IZ\n\n0.5 XXX\n")
    with pytest.raises(ValueError, match=":3:"):
        load_hamiltonian(f)


@settings(max_examples=30)
@given(st.integers(0, 2**32 - 1))
def test_save_load_round_trip(tmp_path_factory, seed):
    rng = np.random.default_rng(seed)
    h = random_pauli_sum(rng, int(rng.integers(1, 6)))
    if len(h) == 0:
        return
    path = tmp_path_factory.mktemp("rt") / "h.txt"
    save_hamiltonian(h, path, header="round trip")
    assert load_hamiltonian(path) == h


def test_samples_load():
    assert load_sample("h2_2q").n_qubits == 2
    assert load_sample("h2_4q").n_qubits == 4
    assert sample_path("h2_4q").exists()
    with pytest.raises(KeyError):
        sample_path("lih")


def test_h2_4q_structure():
    h = load_sample("h2_4q")
    assert all(c.letters.count("X") + c.letters.count("Y") in (0, 4) for _, c in h.terms)
    ev = eigensystem(h)[0]
    assert ev[0] < ev[1]
