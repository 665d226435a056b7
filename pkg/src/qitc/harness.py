"""Benchmark orchestration: single cases, sweeps, truncation and spectrum studies."""

from __future__ import annotations

import csv
import itertools
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .control import ControlStrategy, Controller
from .engine import (
    EvolutionError,
    StopRule,
    Trajectory,
    basis_state,
    eigensystem,
    evolve,
    ground_space,
    plus_state,
    random_state,
    spectral_gap,
)
from .hd_select import OrbitalSplit, cyclic_z_hd, polynomial_hd, variant_hd
from .models import (
    DiagExperimentSpec,
    LatticeSpec,
    build_diag_experiment,
    build_sk,
    build_xxx_2d,
    default_diag_entries,
    load_hamiltonian,
    load_sample,
    pauli_controls,
    tunable_gap_model,
)
from .pauli import Operator, PauliSum, operator_qubits, to_dense
from .sat import read_dimacs, sat_to_hamiltonian

DID_NOT_CONVERGE = "did-not-converge"
MODEL_FAMILIES = ("xxx", "sk", "sample", "file", "tunable", "sat")
CONTROL_FAMILIES = ("none", "pauli", "empirical", "full", "half", "all", "cyclic_z", "polynomial", "diag")


class CaseError(RuntimeError):
    """An engine failure tagged with the case that produced it."""


# -- case description ----------------------------------------------------------

@dataclass(frozen=True)
class CaseSpec:
    """Everything needed to reproduce one run.

    ``model`` and ``controls`` are ``(family, params)`` pairs resolved by
    :func:`build_model` and :func:`build_controls`. ``psi0`` is ``"plus"``,
    ``"random"`` (drawn from ``seed``) or ``"basis:<bits>"``.
    """

    case_id: str
    model: tuple[str, dict]
    controls: tuple[str, dict] = ("none", {})
    strategy: ControlStrategy | None = None
    psi0: str = "plus"
    seed: int = 0
    dtau: float = 0.03
    threshold: float = 0.99
    max_steps: int = 200_000
    method: str = "exact"
    dense_limit: int | None = None

    def __post_init__(self):
        if not self.dtau > 0:
            raise ValueError("dtau must be positive")
        if self.max_steps < 0:
            raise ValueError("max_steps must be >= 0")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = {"family": self.model[0], **self.model[1]}
        d["controls"] = {"family": self.controls[0], **self.controls[1]}
        d["strategy"] = None if self.strategy is None else _jsonable(self.strategy.describe())
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CaseSpec":
        """Inverse of :meth:`to_dict`, e.g. for replaying a manifest entry."""
        d = dict(d)
        model = dict(d.pop("model"))
        controls = dict(d.pop("controls"))
        strategy = d.pop("strategy")
        if strategy is not None:
            strategy = ControlStrategy(
                **{k: float(v) if isinstance(v, str) and k not in _STRATEGY_TEXT else v
                   for k, v in strategy.items()}
            )
        return cls(
            model=(model.pop("family"), model),
            controls=(controls.pop("family"), controls),
            strategy=strategy,
            **d,
        )


_STRATEGY_TEXT = {"kind", "type1_sign", "type1_gate"}


@dataclass
class CaseResult:
    case_id: str
    model: str
    strategy: str
    seed: int
    steps_to_converge: int | str
    final_fidelity: float
    final_energy: float
    wall_time: float
    gap: float | None = None
    error: str | None = None
    trajectory: Trajectory | None = field(default=None, repr=False, compare=False)

    @property
    def converged(self) -> bool:
        return isinstance(self.steps_to_converge, int)

    def row(self) -> dict:
        return {
            "case_id": self.case_id,
            "model": self.model,
            "strategy": self.strategy,
            "seed": self.seed,
            "steps_to_converge": self.steps_to_converge,
            "final_fidelity": repr(self.final_fidelity),
            "final_energy": repr(self.final_energy),
            "wall_time": f"{self.wall_time:.4f}",
            "gap": "" if self.gap is None else repr(self.gap),
            "error": self.error or "",
        }


RESULT_COLUMNS = list(CaseResult("", "", "", 0, 0, 0.0, 0.0, 0.0).row())


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _describe(family: str, params: dict) -> str:
    inner = ",".join(f"{k}={params[k]}" for k in sorted(params))
    return f"{family}({inner})" if inner else family


# -- builders ------------------------------------------------------------------

def build_model(family: str, params: dict) -> Operator:
    """Problem Hamiltonian for one of :data:`MODEL_FAMILIES`."""
    p = dict(params)
    required = {"sk": ("n",), "sample": ("name",), "file": ("path",), "tunable": ("n", "gap"), "sat": ("path",)}
    missing = [k for k in required.get(family, ()) if k not in p]
    if missing:
        raise ValueError(f"model family {family!r} needs parameter(s) {', '.join(missing)}")
    if family == "xxx":
        spec = LatticeSpec(int(p.get("rows", 3)), int(p.get("cols", 3)))
        return build_xxx_2d(spec, float(p.get("field", 0.2)), float(p.get("coupling", 0.1)))
    if family == "sk":
        return build_sk(int(p["n"]), int(p.get("model_seed", 0)))
    if family == "sample":
        return load_sample(str(p["name"]))
    if family == "file":
        return load_hamiltonian(p["path"])
    if family == "tunable":
        return tunable_gap_model(int(p["n"]), float(p["gap"]))
    if family == "sat":
        return sat_to_hamiltonian(read_dimacs(p["path"]))
    raise ValueError(f"unknown model family {family!r}; expected one of {MODEL_FAMILIES}")


def _strings(value) -> list[str]:
    if isinstance(value, str):
        return [s for s in value.replace(",", " ").split() if s]
    return [str(s) for s in value]


def _ints(value) -> list[int]:
    if isinstance(value, (int, np.integer)):
        return [int(value)]
    return [int(v) for v in _strings(value)]


def build_controls(family: str, params: dict, H_p: Operator, dense_limit: int | None = None) -> list[Operator]:
    """Control operators for one of :data:`CONTROL_FAMILIES`."""
    p = dict(params)
    n = operator_qubits(H_p)
    if family == "none":
        return []
    if family == "pauli":
        return pauli_controls(_strings(p["strings"]))
    if family in ("empirical", "full", "half", "all"):
        split = OrbitalSplit(int(p.get("n_electrons", n // 2)), n)
        return pauli_controls(variant_hd(family, split))
    if family == "cyclic_z":
        return pauli_controls(cyclic_z_hd(n, _ints(p.get("weights", 1))))
    if family == "polynomial":
        return polynomial_hd(
            H_p,
            _ints(p.get("orders", "2 3 4 5")),
            float(p.get("threshold", 0.1)),
            relative=bool(p.get("relative", True)),
            dense_limit=dense_limit,
        )
    if family == "diag":
        dim = 1 << n
        spec = DiagExperimentSpec(
            default_diag_entries(dim, float(p.get("low", -5.0)), float(p.get("high", 5.0))),
            float(p.get("p", 0.0)),
            int(p.get("diag_seed", 0)),
        )
        return [build_diag_experiment(H_p, spec, str(p.get("mode", "additive")), dense_limit)]
    raise ValueError(f"unknown control family {family!r}; expected one of {CONTROL_FAMILIES}")


def initial_state(policy: str, n: int, seed: int) -> np.ndarray:
    if policy == "plus":
        return plus_state(n)
    if policy == "random":
        return random_state(n, np.random.default_rng(seed))
    if policy.startswith("basis:"):
        return basis_state(n, policy.split(":", 1)[1])
    raise ValueError(f"unknown initial-state policy {policy!r}")


# -- single case ---------------------------------------------------------------

def run_case(spec: CaseSpec, record_trajectory: bool = False, with_gap: bool = False) -> CaseResult:
    """Evolve one case to the fidelity threshold (or ``max_steps``)."""
    t0 = time.perf_counter()
    try:
        H_p = build_model(*spec.model)
        controls = build_controls(*spec.controls, H_p, spec.dense_limit)
        n = operator_qubits(H_p)
        psi0 = initial_state(spec.psi0, n, spec.seed)
        policy = spec.strategy if controls else None
        traj = evolve(
            psi0,
            H_p,
            controls,
            policy,
            dtau=spec.dtau,
            stop=StopRule(max_steps=spec.max_steps, fidelity_threshold=spec.threshold),
            method=spec.method,
            dense_limit=spec.dense_limit,
        )
        gap = spectral_gap(H_p, spec.dense_limit) if with_gap else None
    except (EvolutionError, ValueError, np.linalg.LinAlgError) as exc:
        raise CaseError(f"case {spec.case_id}: {exc}") from exc
    steps = traj.converged_step if traj.converged else DID_NOT_CONVERGE
    return CaseResult(
        case_id=spec.case_id,
        model=_describe(*spec.model),
        strategy=strategy_label(spec),
        seed=spec.seed,
        steps_to_converge=steps,
        final_fidelity=float(min(max(traj.fidelity[-1], 0.0), 1.0)),
        final_energy=float(traj.energy[-1]),
        wall_time=time.perf_counter() - t0,
        gap=gap,
        trajectory=traj if record_trajectory else None,
    )


def strategy_label(spec: CaseSpec) -> str:
    if spec.controls[0] == "none" or spec.strategy is None:
        return "ite"
    st = spec.strategy
    knobs = {
        "gradient": f"gain={st.gain}",
        "type1": f"S={st.S},gamma={st.gamma},L={st.L},sign={st.type1_sign}",
        "type2": f"K1={st.K1},K2={st.K2}",
    }[st.kind]
    cap = "" if math.isinf(st.beta_cap) else f",cap={st.beta_cap}"
    return f"{_describe(*spec.controls)}:{st.kind}({knobs}{cap})"


def speedup(ite: CaseResult, itc: CaseResult) -> float | None:
    """``ite.steps / itc.steps``; ``None`` when either run did not converge."""
    if not (ite.converged and itc.converged):
        return None
    # a run converged at step 0 took no steps; count it as one
    return max(ite.steps_to_converge, 1) / max(itc.steps_to_converge, 1)


# -- sweeps --------------------------------------------------------------------

@dataclass(frozen=True)
class StrategyEntry:
    name: str
    controls: tuple[str, dict] = ("none", {})
    strategy: ControlStrategy | None = None


@dataclass(frozen=True)
class SweepSpec:
    """A model family crossed with a parameter grid, strategies and initial states.

    ``grid`` maps model parameter names to value lists; every combination is
    one grid point. Grid values for the key ``controls.<name>`` are routed to
    the control parameters instead. Each grid point is run with
    ``n_states`` initial states and every strategy.
    """

    family: str
    grid: dict
    strategies: tuple[StrategyEntry, ...]
    base_params: dict = field(default_factory=dict)
    psi0: str = "plus"
    n_states: int = 1
    master_seed: int = 0
    dtau: float = 0.03
    threshold: float = 0.99
    max_steps: int = 200_000
    method: str = "exact"
    dense_limit: int | None = None
    record_gap: bool = True

    def __post_init__(self):
        if not self.grid or any(len(v) == 0 for v in self.grid.values()):
            raise ValueError("sweep grid must be nonempty")
        if not self.strategies:
            raise ValueError("sweep needs at least one strategy")
        if not self.dtau > 0:
            raise ValueError("dtau must be positive")
        if self.n_states < 1:
            raise ValueError("n_states must be >= 1")

    def cases(self) -> list[CaseSpec]:
        keys = sorted(self.grid)
        out = []
        for gi, values in enumerate(itertools.product(*(self.grid[k] for k in keys))):
            model_params = dict(self.base_params)
            control_over = {}
            for k, v in zip(keys, values):
                if k.startswith("controls."):
                    control_over[k.split(".", 1)[1]] = v
                else:
                    model_params[k] = v
            point = "-".join(f"{k}={v}" for k, v in zip(keys, values))
            for si in range(self.n_states):
                # per-state seed depends only on (master, grid index, state index)
                seed = int(np.random.SeedSequence([self.master_seed, gi, si]).generate_state(1)[0])
                for entry in self.strategies:
                    cparams = {**entry.controls[1], **control_over}
                    out.append(
                        CaseSpec(
                            case_id=f"{self.family}[{point}]/s{si}/{entry.name}",
                            model=(self.family, model_params),
                            controls=(entry.controls[0], cparams),
                            strategy=entry.strategy,
                            psi0=self.psi0,
                            seed=seed,
                            dtau=self.dtau,
                            threshold=self.threshold,
                            max_steps=self.max_steps,
                            method=self.method,
                            dense_limit=self.dense_limit,
                        )
                    )
        return out


def _run_safe(args) -> CaseResult:
    spec, with_gap = args
    try:
        return run_case(spec, with_gap=with_gap)
    except CaseError as exc:
        return CaseResult(
            spec.case_id, _describe(*spec.model), strategy_label(spec), spec.seed,
            DID_NOT_CONVERGE, math.nan, math.nan, 0.0, error=str(exc),
        )


def sweep(spec: SweepSpec, workers: int = 1) -> list[CaseResult]:
    """Run every case; failures are recorded and the sweep continues.

    Rows come back sorted by ``case_id`` whatever the worker count.
    """
    jobs = [(c, spec.record_gap) for c in spec.cases()]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_safe, jobs))
    else:
        results = [_run_safe(j) for j in jobs]
    return sorted(results, key=lambda r: r.case_id)


def write_results(results: Sequence[CaseResult], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS)
        w.writeheader()
        for r in results:
            w.writerow(r.row())


def write_manifest(path: str | Path, config: dict, seeds: Sequence[int] = ()) -> None:
    import scipy

    manifest = {
        "config": _jsonable(config),
        "seeds": [int(s) for s in seeds],
        "versions": {
            "qitc": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def speedup_table(results: Sequence[CaseResult], baseline: str = "ite") -> dict[str, list[float | None]]:
    """Per strategy, the speedups over the baseline row sharing the same grid point and state."""
    by_key: dict[str, dict[str, CaseResult]] = {}
    for r in results:
        key, name = r.case_id.rsplit("/", 1)
        by_key.setdefault(key, {})[name] = r
    table: dict[str, list[float | None]] = {}
    for key in sorted(by_key):
        rows = by_key[key]
        if baseline not in rows:
            continue
        for name, r in sorted(rows.items()):
            if name != baseline:
                table.setdefault(name, []).append(speedup(rows[baseline], r))
    return table


# -- truncation ------------------------------------------------------------------

@dataclass
class TruncationRow:
    L: float
    energy_full: float
    energy_truncated: float
    fidelity_full: float
    fidelity_truncated: float
    truncation_step: int | None

    @property
    def energy_deficit(self) -> float:
        """|E_trunc - E_full| / |E_full|."""
        return abs(self.energy_truncated - self.energy_full) / abs(self.energy_full)

    @property
    def fidelity_deficit(self) -> float:
        return self.fidelity_full - self.fidelity_truncated


@dataclass
class TruncationReport:
    gap: float
    rows: list[TruncationRow]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["gap", "L", "energy_full", "energy_truncated", "energy_deficit",
                        "fidelity_full", "fidelity_truncated", "truncation_step"])
            for r in self.rows:
                w.writerow([repr(self.gap), repr(r.L), repr(r.energy_full), repr(r.energy_truncated),
                            repr(r.energy_deficit), repr(r.fidelity_full), repr(r.fidelity_truncated),
                            "" if r.truncation_step is None else r.truncation_step])


def truncation_experiment(
    H_p: Operator,
    controls: Sequence[Operator],
    strategy: ControlStrategy,
    L_values: Sequence[float],
    steps: int,
    dtau: float = 0.03,
    psi0: np.ndarray | None = None,
    method: str = "exact",
    dense_limit: int | None = None,
) -> TruncationReport:
    """Paired fixed-length runs: untruncated type1 control versus the same
    control switched off for good the first time ``T_k < L``."""
    if strategy.kind != "type1":
        raise ValueError("truncation experiments need a type1 strategy")
    n = operator_qubits(H_p)
    psi0 = plus_state(n) if psi0 is None else psi0
    stop = StopRule(max_steps=steps, fidelity_threshold=None)

    def run(st):
        ctl = Controller(st, len(controls))
        tr = evolve(psi0, H_p, controls, ctl, dtau=dtau, stop=stop, method=method, dense_limit=dense_limit)
        fid = ground_fidelity(H_p, tr.final_state, dense_limit)
        return tr, fid

    full_st = replace(strategy, L=-math.inf, latch_truncation=False)
    full, f_full = run(full_st)
    rows = []
    for L in L_values:
        if L == -math.inf:
            tr, f_tr = full, f_full
            cut = None
        else:
            tr, f_tr = run(replace(strategy, L=L, latch_truncation=True))
            cut = _first_truncation(tr, L)
        rows.append(TruncationRow(L, float(full.energy[-1]), float(tr.energy[-1]), f_full, f_tr, cut))
    return TruncationReport(spectral_gap(H_p, dense_limit), rows)


def _first_truncation(tr: Trajectory, L: float) -> int | None:
    hits = np.nonzero((tr.feedback < L).any(axis=1))[0]
    return int(hits[0]) if len(hits) else None


def ground_fidelity(H_p: Operator, psi: np.ndarray, dense_limit: int | None = None) -> float:
    _, basis = ground_space(H_p, dense_limit=dense_limit)
    return float(np.sum(np.abs(basis.conj().T @ psi) ** 2))


# -- spectrum ------------------------------------------------------------------

@dataclass
class SpectrumReport:
    times: np.ndarray
    eigenvalues: np.ndarray  # (rows, 2**n), ascending per row
    beta_bar: np.ndarray
    reorder: np.ndarray  # bool per row
    trajectory: Trajectory

    @property
    def n_reorder(self) -> int:
        return int(self.reorder.sum())

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            k = self.eigenvalues.shape[1]
            w.writerow(["step", "tau", "beta_bar", "reorder"] + [f"E_{i}" for i in range(k)])
            for m in range(len(self.times)):
                w.writerow([m, repr(float(self.times[m])), repr(float(self.beta_bar[m])), int(self.reorder[m])]
                           + [repr(float(e)) for e in self.eigenvalues[m]])


def spectrum_report(
    H_p: Operator,
    controls: Sequence[Operator],
    strategy: ControlStrategy | None,
    steps: int,
    dtau: float = 0.03,
    psi0: np.ndarray | None = None,
    method: str = "exact",
    dense_limit: int | None = None,
) -> SpectrumReport:
    """Spectrum of ``H(tau)`` along a fixed-length controlled run.

    A row is flagged as re-ordered when the eigenvector of ``H(tau)`` with
    the largest overlap on the ground space of ``H_p`` is not the lowest one.
    """
    n = operator_qubits(H_p)
    psi0 = plus_state(n) if psi0 is None else psi0
    traj = evolve(
        psi0, H_p, controls, strategy, dtau=dtau,
        stop=StopRule(max_steps=steps, fidelity_threshold=None),
        method=method, dense_limit=dense_limit,
    )
    hp = to_dense(H_p, dense_limit)
    hds = [to_dense(c, dense_limit) for c in controls]
    _, g = ground_space(H_p, dense_limit=dense_limit)
    rows, flags = [], []
    for beta in traj.beta:
        h = hp + sum((b * hd for b, hd in zip(beta, hds)), np.zeros_like(hp))
        evals, evecs = eigensystem(h)
        weight = np.sum(np.abs(g.conj().T @ evecs) ** 2, axis=0)
        rows.append(evals)
        flags.append(int(np.argmax(weight)) != 0)
    return SpectrumReport(traj.times, np.array(rows), traj.mean_beta(), np.array(flags, dtype=bool), traj)
