"""Command-line entry point: ``siws <subcommand> --scenario FILE ...``."""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import analysis
from .dynamics import DEFAULT_TOL, simulate_multi
from .model import assemble_full
from .scenario import (
    REGIMES,
    RegimeError,
    ScenarioError,
    ScenarioFile,
    SweepSpec,
    generate_random,
    run_sweep,
    write_sweep_csv,
    write_trajectory_csv,
)
from .spectral import ConvergenceError, s1_shifted, spectral_radius

EXIT_OK, EXIT_INVALID, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3


def _emit(obj) -> None:
    json.dump(obj, sys.stdout, indent=1, default=_jsonable)
    sys.stdout.write("\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer, np.bool_)):
        return o.item()
    raise TypeError(f"cannot serialize {type(o).__name__}")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _load(args) -> ScenarioFile:
    if not args.scenario:
        raise ScenarioError("--scenario is required")
    return ScenarioFile.load(args.scenario)


def _gate(sf: ScenarioFile, strict: bool) -> int | None:
    rep = sf.validate()
    if rep.passed:
        return None
    for v in rep.violations:
        print(f"warning: [{v.assumption}] {v.location}: {v.message}", file=sys.stderr)
    return EXIT_INVALID if strict else None


def cmd_validate(args, sf: ScenarioFile) -> int:
    rep = sf.validate()
    _emit(rep.to_dict())
    return EXIT_OK if rep.passed else EXIT_INVALID


def cmd_spectrum(args, sf: ScenarioFile) -> int:
    out = []
    for idx, (start, ps) in enumerate(sf.pieces):
        for k, p in enumerate(ps):
            full = assemble_full(p, sf.h)
            perron = spectral_radius(full.B_f / full.D_f[:, None])
            out.append({
                "piece": idx,
                "start": start,
                "virus": k + 1,
                "r0": perron.rho,
                "s1": s1_shifted(full),
                "right": perron.right,
                "left": perron.left,
            })
    _emit(out)
    return EXIT_OK


def cmd_simulate(args, sf: ScenarioFile) -> int:
    traj = simulate_multi(sf.scenario(), sf.schedules(), max_steps=args.steps, tol=args.tol, stride=args.stride, check=False)
    fh, close = _open_out(args.out)
    try:
        write_trajectory_csv(traj, fh)
    finally:
        if close:
            fh.close()
    if close:
        xbar, wbar = traj.averages()
        _emit({"steps": traj.steps, "converged": traj.converged, "stop_reason": traj.stop_reason,
               "xbar": xbar[-1], "wbar": wbar[-1], "out": args.out})
    return EXIT_OK


def cmd_equilibrium(args, sf: ScenarioFile) -> int:
    out = []
    for k, p in enumerate(sf.params):
        res = analysis.endemic_fixed_point(assemble_full(p, sf.h), tol=args.eq_tol, max_iter=args.steps)
        out.append({"virus": k + 1, **res.to_dict()})
    _emit(out)
    return EXIT_OK


def cmd_classify(args, sf: ScenarioFile) -> int:
    if sf.l == 2 and sf.m == 1 and not sf.time_varying:
        _emit({"kind": "two-virus", **analysis.two_virus_analysis(sf.scenario()).to_dict()})
        return EXIT_OK
    out = []
    for k, sched in enumerate(sf.schedules()):
        c = analysis.classify_tv(sched, sf.h, w0=sf.initial[k].w)
        out.append({"virus": k + 1, **c.to_dict()})
    kind = "single" if sf.l == 1 else "multi"
    if sf.time_varying:
        kind += "-tv"
    _emit({"kind": kind, "viruses": out})
    return EXIT_OK


def _parse_values(text: str) -> list[float]:
    if ":" in text:
        lo, hi, num = text.split(":")
        return np.linspace(float(lo), float(hi), int(num)).tolist()
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_sweep(args, sf: ScenarioFile) -> int:
    if not args.axis or not args.values:
        raise ValueError("sweep needs --axis and --values")
    spec = SweepSpec(sf, args.axis, _parse_values(args.values), max_steps=args.steps, tol=args.tol)
    rows = run_sweep(spec, workers=args.workers)
    fh, close = _open_out(args.out)
    try:
        write_sweep_csv(spec, rows, fh)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_generate(args, sf=None) -> int:
    seed = 0 if args.seed is None else args.seed
    sf = generate_random(args.n, args.m, args.l, args.h, seed, args.target)
    if args.out in (None, "-"):
        sys.stdout.write(sf.dumps())
    else:
        sf.save(args.out)
    return EXIT_OK


COMMANDS = {
    "validate": cmd_validate,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "equilibrium": cmd_equilibrium,
    "classify": cmd_classify,
    "sweep": cmd_sweep,
    "generate": cmd_generate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="scenario JSON file")
    common.add_argument("--out", help="output file (default: stdout)")
    common.add_argument("--steps", type=int, default=10**6, help="maximum number of steps")
    common.add_argument("--tol", type=float, default=DEFAULT_TOL, help="stop when successive states differ by less")
    common.add_argument("--stride", type=int, default=None, help="record every K-th step")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--strict", action="store_true", help="exit 1 if the scenario fails validation")

    parser = argparse.ArgumentParser(prog="siws", description="Layered-network SIWS epidemic toolkit")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "equilibrium":
            sp.add_argument("--eq-tol", type=float, default=1e-10, help="residual tolerance")
        if name == "sweep":
            sp.add_argument("--axis", help="parameter path, e.g. h, virus.1.B or virus.1.D[2]")
            sp.add_argument("--values", help="comma list or lo:hi:count")
            sp.add_argument("--workers", type=int, default=1)
        if name == "generate":
            sp.add_argument("--n", type=int, default=15)
            sp.add_argument("--m", type=int, default=2)
            sp.add_argument("--l", type=int, default=1)
            sp.add_argument("--h", type=float, default=0.01)
            sp.add_argument("--target", choices=REGIMES, default="supercritical")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        sf = None
        if args.command != "generate":
            sf = _load(args)
            if args.command != "validate":
                code = _gate(sf, args.strict)
                if code is not None:
                    return code
        return COMMANDS[args.command](args, sf)
    except (OSError, ScenarioError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, ConvergenceError, RegimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
