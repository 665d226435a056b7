"""Command-line entry point: ``qitc <subcommand> [options]``.

Every option can also come from ``--config FILE``, a text file of
``key = value`` lines whose keys are the long option names (dashes or
underscores). Command-line flags override the file.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from .control import ControlStrategy
from .engine import METHODS
from .harness import (
    CONTROL_FAMILIES,
    MODEL_FAMILIES,
    CaseError,
    CaseSpec,
    StrategyEntry,
    SweepSpec,
    build_controls,
    build_model,
    initial_state,
    run_case,
    speedup,
    speedup_table,
    spectrum_report,
    sweep,
    truncation_experiment,
    write_manifest,
    write_results,
)
from .hd_select import candidate_pool, score_candidates, write_selection_report
from .pauli import operator_qubits
from .sat import gap_scan, random_3sat, read_dimacs

LIST_OPTIONS = {"model_param", "control_param", "grid"}


def read_config(path: str | Path) -> dict[str, str]:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def _common(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global")
    g.add_argument("--config", help="key = value file mirroring the flags")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--dtau", type=float, default=0.03)
    g.add_argument("--threshold", type=float, default=0.99, help="fidelity defining convergence")
    g.add_argument("--max-steps", type=int, default=200_000)
    g.add_argument("--out", default="out", help="output directory")
    g.add_argument("--dense-limit", type=int, default=None)
    g.add_argument("--method", choices=METHODS, default="exact")


def _model_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--model", choices=MODEL_FAMILIES, default="sample")
    p.add_argument("--model-param", action="append", default=[], metavar="K=V",
                   help="model parameter, e.g. name=h2_4q or n=4 (repeatable)")
    p.add_argument("--psi0", default="plus", help="plus, random or basis:<bits>")


def _control_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--controls", choices=CONTROL_FAMILIES, default="none")
    p.add_argument("--control-param", action="append", default=[], metavar="K=V",
                   help="control parameter, e.g. strings='ZI IZ' (repeatable)")
    p.add_argument("--strategy", choices=("none", "gradient", "type1", "type2"), default="gradient",
                   help="'none' runs plain imaginary-time evolution")
    p.add_argument("--S", type=float, default=1.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--L", type=float, default=0.0)
    p.add_argument("--K1", type=float, default=1.0)
    p.add_argument("--K2", type=float, default=0.1)
    p.add_argument("--gain", type=float, default=1.0)
    p.add_argument("--beta-cap", type=float, default=math.inf)
    p.add_argument("--type1-sign", choices=("ascent", "descent"), default="ascent")
    p.add_argument("--equil-tol", type=float, default=1e-3, help="relative plateau tolerance (type2)")
    p.add_argument("--equil-window", type=int, default=10, help="plateau window in steps (type2)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qitc", description="Imaginary-time control benchmarks")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="evolve a single case")
    _common(p)
    _model_opts(p)
    _control_opts(p)
    p.add_argument("--baseline", action="store_true", help="also run plain ITE and report the speedup")

    p = sub.add_parser("sweep", help="grid sweep comparing ITE with a controlled strategy")
    _common(p)
    _model_opts(p)
    _control_opts(p)
    p.add_argument("--grid", action="append", default=[], metavar="K=V1,V2",
                   help="grid axis over a model parameter (controls.K for a control parameter)")
    p.add_argument("--n-states", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("select-hd", help="score the single/double Z pool on a problem Hamiltonian")
    _common(p)
    _model_opts(p)
    p.add_argument("--steps", type=int, default=500)
    p.add_argument("--gain", type=float, default=1.0)

    p = sub.add_parser("gap-scan", help="E1 - E0 along the AQC path of a 3-SAT formula")
    _common(p)
    p.add_argument("--cnf", help="DIMACS file; omit for a random formula")
    p.add_argument("--n-vars", type=int, default=6)
    p.add_argument("--n-clauses", type=int, default=20)
    p.add_argument("--points", type=int, default=101)

    p = sub.add_parser("spectrum", help="spectrum of H(tau) along a controlled run")
    _common(p)
    _model_opts(p)
    _control_opts(p)
    p.add_argument("--steps", type=int, default=1000)

    p = sub.add_parser("truncate", help="type1 control with and without truncation")
    _common(p)
    _model_opts(p)
    _control_opts(p)
    p.add_argument("--steps", type=int, default=300)
    p.set_defaults(strategy="type1")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    config = read_config(args.config)
    known = vars(args)
    unknown = sorted(set(config) - set(known))
    if unknown:
        parser.error(f"unknown config keys: {', '.join(unknown)}")
    sub = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    defaults = {}
    for key, text in config.items():
        action = next(a for a in sub._actions if a.dest == key)  # noqa: SLF001
        if key in LIST_OPTIONS or isinstance(action, argparse._AppendAction):  # noqa: SLF001
            values = [v for v in text.split(";") if v.strip()]
            conv = action.type or str
            defaults[key] = [conv(v.strip()) for v in values]
        elif action.type is not None:
            defaults[key] = action.type(text)
        elif action.nargs == 0:
            defaults[key] = text.lower() in ("1", "true", "yes", "on")
        else:
            defaults[key] = text
        if action.choices is not None and defaults[key] not in action.choices:
            parser.error(f"config {key}={text!r} is not one of {sorted(action.choices)}")
    sub.set_defaults(**defaults)
    # re-parse so explicit flags win over the file
    return parser.parse_args(argv)


def _kv(items: list[str]) -> dict:
    out = {}
    for item in items:
        if "=" not in item:
            raise SystemExit(f"expected K=V, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = _scalar(v.strip())
    return out


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _strategy(args) -> ControlStrategy | None:
    if args.strategy == "none":
        return None
    return ControlStrategy(
        kind=args.strategy, S=args.S, gamma=args.gamma, L=args.L, K1=args.K1, K2=args.K2,
        gain=args.gain, beta_cap=args.beta_cap, type1_sign=args.type1_sign,
        equil_tol=args.equil_tol, equil_window=args.equil_window,
    )


def _case(args, case_id: str, controls: str | None = None) -> CaseSpec:
    family = args.controls if controls is None else controls
    if args.strategy == "none":
        family = "none"
    return CaseSpec(
        case_id=case_id,
        model=(args.model, _kv(args.model_param)),
        controls=(family, _kv(args.control_param) if family != "none" else {}),
        strategy=_strategy(args) if family != "none" else None,
        psi0=args.psi0,
        seed=args.seed,
        dtau=args.dtau,
        threshold=args.threshold,
        max_steps=args.max_steps,
        method=args.method,
        dense_limit=args.dense_limit,
    )


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_run(args) -> int:
    out = _outdir(args)
    cases = [_case(args, "itc" if args.controls != "none" else "ite")]
    if args.baseline and args.controls != "none":
        cases.insert(0, _case(args, "ite", controls="none"))
    results = [run_case(c, record_trajectory=True) for c in cases]
    write_results(results, out / "results.csv")
    for r in results:
        r.trajectory.to_csv(out / f"trajectory_{r.case_id}.csv")
        print(f"{r.case_id}: steps={r.steps_to_converge} fidelity={r.final_fidelity:.6f} "
              f"energy={r.final_energy:.10g}")
    config = {"command": "run", "cases": [c.to_dict() for c in cases]}
    if len(results) == 2:
        s = speedup(*results)
        config["speedup"] = s
        print(f"speedup: {'undefined' if s is None else f'{s:.4g}'}")
    write_manifest(out / "manifest.json", config, [args.seed])
    return 0


def cmd_sweep(args) -> int:
    out = _outdir(args)
    grid = {}
    for item in args.grid or ["_point=0"]:
        key, values = item.split("=", 1)
        grid[key.strip()] = [_scalar(v.strip()) for v in values.split(",") if v.strip()]
    entries = [StrategyEntry("ite")]
    if args.controls != "none" and args.strategy != "none":
        entries.append(StrategyEntry("itc", (args.controls, _kv(args.control_param)), _strategy(args)))
    spec = SweepSpec(
        family=args.model, grid=grid, strategies=tuple(entries), base_params=_kv(args.model_param),
        psi0=args.psi0, n_states=args.n_states, master_seed=args.seed, dtau=args.dtau,
        threshold=args.threshold, max_steps=args.max_steps, method=args.method,
        dense_limit=args.dense_limit,
    )
    results = sweep(spec, workers=args.workers)
    write_results(results, out / "results.csv")
    table = speedup_table(results)
    summary = {}
    for name, values in table.items():
        finite = [v for v in values if v is not None]
        summary[name] = {
            "n": len(values),
            "undefined": len(values) - len(finite),
            "mean": float(np.mean(finite)) if finite else None,
            "max": float(np.max(finite)) if finite else None,
        }
        print(f"{name}: mean speedup {summary[name]['mean']} max {summary[name]['max']} "
              f"({summary[name]['undefined']} undefined of {len(values)})")
    failures = [r for r in results if r.error]
    for r in failures:
        print(f"failed: {r.error}", file=sys.stderr)
    write_manifest(out / "manifest.json",
                   {"command": "sweep", "cases": [c.to_dict() for c in spec.cases()], "speedup": summary},
                   [c.seed for c in spec.cases()])
    return 0


def cmd_select_hd(args) -> int:
    out = _outdir(args)
    H = build_model(args.model, _kv(args.model_param))
    n = operator_qubits(H)
    pool = candidate_pool(n)
    policy = ControlStrategy(kind="gradient", gain=args.gain)
    scores = score_candidates(H, pool, policy, dtau=args.dtau, steps=args.steps,
                              psi0=initial_state(args.psi0, n, args.seed), method=args.method)
    write_selection_report(scores, out / "selection.csv")
    for s in scores:
        print(f"{s.candidate} {s.B:+.6f}{'  *' if s.B < 0 else ''}")
    write_manifest(out / "manifest.json",
                   {"command": "select-hd", "model": args.model, "model_param": _kv(args.model_param),
                    "policy": policy.describe(), "steps": args.steps, "dtau": args.dtau},
                   [args.seed])
    return 0


def cmd_gap_scan(args) -> int:
    out = _outdir(args)
    if args.cnf:
        f = read_dimacs(args.cnf)
    else:
        f = random_3sat(args.n_vars, args.n_clauses, np.random.default_rng(args.seed))
    scan = gap_scan(f, args.points, args.dense_limit)
    scan.to_csv(out / "gap_scan.csv")
    print(f"min gap {scan.min_gap:.6g} at s={scan.s_at_min:.4f}; E0(1)={scan.e0[-1]:.6g}")
    write_manifest(out / "manifest.json",
                   {"command": "gap-scan", "cnf": args.cnf, "n_vars": f.n_vars,
                    "n_clauses": len(f.clauses), "points": args.points}, [args.seed])
    return 0


def _model_and_controls(args):
    H = build_model(args.model, _kv(args.model_param))
    controls = build_controls(args.controls, _kv(args.control_param), H, args.dense_limit)
    psi0 = initial_state(args.psi0, operator_qubits(H), args.seed)
    return H, controls, psi0


def cmd_spectrum(args) -> int:
    out = _outdir(args)
    H, controls, psi0 = _model_and_controls(args)
    rep = spectrum_report(H, controls, _strategy(args) if controls else None, args.steps,
                          args.dtau, psi0, args.method, args.dense_limit)
    rep.to_csv(out / "spectrum.csv")
    print(f"re-ordered steps: {rep.n_reorder}; final mean beta {rep.beta_bar[-1]:.3e}")
    st = _strategy(args)
    write_manifest(out / "manifest.json", {"command": "spectrum", "strategy": st and st.describe(),
                                           "steps": args.steps}, [args.seed])
    return 0


def cmd_truncate(args) -> int:
    st = _strategy(args)
    if st is None or st.kind != "type1":
        raise ValueError("truncate needs --strategy type1")
    out = _outdir(args)
    H, controls, psi0 = _model_and_controls(args)
    rep = truncation_experiment(H, controls, st, [-math.inf, args.L], args.steps, args.dtau,
                                psi0, args.method, args.dense_limit)
    rep.to_csv(out / "truncation.csv")
    for r in rep.rows:
        print(f"L={r.L}: energy deficit {r.energy_deficit:.3e} (truncated at step {r.truncation_step})")
    write_manifest(out / "manifest.json", {"command": "truncate", "strategy": st.describe(),
                                           "steps": args.steps, "gap": rep.gap}, [args.seed])
    return 0


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "select-hd": cmd_select_hd,
    "gap-scan": cmd_gap_scan,
    "spectrum": cmd_spectrum,
    "truncate": cmd_truncate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = _apply_config(parser, argv)
    except (OSError, ValueError) as exc:
        parser.error(str(exc))
    try:
        return COMMANDS[args.command](args)
    except (CaseError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
