"""Command-line entry point: run orchestration and file I/O.

Subcommands:

    validate-potential   structural-assumption report for the configured U
    spectrum             lowest eigenvalues of the weighted operator + gap
    simulate             advance the coupled system, appending CSV rows
    picard-demo          print the frozen-coefficient iteration trace
    audit-energy         two-resolution energy-law refinement study
    cancellation-check   stress/stretching identity on random states
    closure-check        kinetic vs closed-moment deviation (quadratic data)

Exit codes (documented in the README):

    0 success            4 positivity/vacuum loss
    1 unexpected error   5 time-step bound violation
    2 configuration      6 fixed-point non-contraction
    3 check failed       7 construction/consistency/solver failure
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from .config import RunConfig, load_config
from .dynamics import cancellation_residual
from .errors import (
    CflError,
    ConfigError,
    ConsistencyError,
    ConstructionError,
    DegenerateSpectrumError,
    NonContractionError,
    ParameterError,
    PolyflowError,
    PositivityError,
    QuadratureError,
    SolverError,
    UnsupportedModelError,
    VacuumError,
)
from .potential import SampleSpec, validate_assumptions
from .qbasis import poincare_constant, spectrum
from .state import CSV_COLUMNS, random_smooth_state
from .stepper import build_initial_state, simulate

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_CHECK_FAILED = 3
EXIT_POSITIVITY = 4
EXIT_CFL = 5
EXIT_NON_CONTRACTION = 6
EXIT_INTERNAL = 7

_ERROR_CODES = (
    (ConfigError, EXIT_CONFIG),
    (ParameterError, EXIT_CONFIG),
    ((PositivityError, VacuumError), EXIT_POSITIVITY),
    (CflError, EXIT_CFL),
    (NonContractionError, EXIT_NON_CONTRACTION),
    (
        (ConstructionError, ConsistencyError, SolverError, QuadratureError,
         DegenerateSpectrumError, UnsupportedModelError),
        EXIT_INTERNAL,
    ),
)


def _code_for(err: Exception) -> int:
    for types, code in _ERROR_CODES:
        if isinstance(err, types):
            return code
    return EXIT_UNEXPECTED if not isinstance(err, PolyflowError) else EXIT_CHECK_FAILED


def _fmt_float(x) -> str:
    return repr(float(x))


class CsvWriter:
    """Streams EnergyReport rows; plain text, deterministic formatting."""

    def __init__(self, path):
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        self.fh = open(path, "w", encoding="utf-8")
        self.fh.write(",".join(CSV_COLUMNS) + "\n")

    def __call__(self, report):
        self.fh.write(",".join(_fmt_float(v) for v in report.as_row()) + "\n")

    def close(self):
        self.fh.close()


def _classify_termination(termination: str) -> int:
    if termination == "completed":
        return EXIT_OK
    name = termination.split(":", 1)[0]
    table = {
        "CflError": EXIT_CFL,
        "NonContractionError": EXIT_NON_CONTRACTION,
        "PositivityError": EXIT_POSITIVITY,
        "VacuumError": EXIT_POSITIVITY,
        "SolverError": EXIT_INTERNAL,
        "ConsistencyError": EXIT_INTERNAL,
    }
    return table.get(name, EXIT_CHECK_FAILED)


# ---------------------------------------------------------------------------
# Subcommand implementations
# ---------------------------------------------------------------------------


def cmd_validate_potential(cfg: RunConfig, args) -> int:
    pot = cfg.make_potential(check_stiffness=False)
    report = validate_assumptions(pot, SampleSpec())
    print(report.to_text())
    if args.out:
        directory = os.path.dirname(args.out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_kv())
        print(f"wrote {args.out}")
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_spectrum(cfg: RunConfig, args) -> int:
    basis = cfg.make_basis()
    eigs = spectrum(basis, 10)
    print(f"lowest {len(eigs)} eigenvalues of the configuration-space operator:")
    for i, ev in enumerate(eigs):
        print(f"  lambda[{i}] = {ev: .12e}")
    print(f"spectral-gap constant (1/lambda[1]): {poincare_constant(basis):.12e}")
    return EXIT_OK


def _prepare_run(cfg: RunConfig):
    params = cfg.make_params()
    pot = cfg.make_potential()
    basis = cfg.make_basis(pot)
    grid = cfg.make_grid()
    ini = cfg.initial
    state0 = build_initial_state(
        grid,
        basis,
        family=ini["family"],
        eps=ini["eps"],
        mode=ini["mode"],
        rho_amp=ini["rho_amp"],
        u_amp=ini["u_amp"],
        g_amp=ini["g_amp"],
        g_mode=ini["g_mode"],
        snapshot_path=ini["snapshot"] or None,
    )
    return params, basis, grid, state0


def cmd_simulate(cfg: RunConfig, args) -> int:
    params, basis, grid, state0 = _prepare_run(cfg)
    step_cfg = cfg.make_step_config(
        **({"snapshot_every": args.snapshot_every} if args.snapshot_every is not None else {})
    )
    snap_dir = cfg.output["snapshot_dir"] or None
    if snap_dir and step_cfg.snapshot_every:
        os.makedirs(snap_dir, exist_ok=True)
    writer = CsvWriter(cfg.output["csv"])
    try:
        rec = simulate(params, basis, grid, step_cfg, state0,
                       snapshot_dir=snap_dir, csv_writer=writer)
    finally:
        writer.close()
    print(f"steps accepted: {len(rec.reports) - 1}")
    print(f"termination: {rec.termination}")
    print(f"max E(t)/E(0): {rec.max_energy_ratio:.6g}"
          + (" (zero-energy run)" if rec.zero_energy else ""))
    print(f"integral of D dt: {rec.int_D:.6g}")
    print(f"energy monotonicity violations: {rec.monotone_violations}")
    print(f"max polymer mass drift: {rec.max_mass_drift:.3e}")
    print(f"csv: {cfg.output['csv']}")
    return _classify_termination(rec.termination)


def cmd_picard_demo(cfg: RunConfig, args) -> int:
    params, basis, grid, state0 = _prepare_run(cfg)
    step_cfg = cfg.make_step_config(scheme="picard")
    rec = simulate(params, basis, grid, step_cfg, state0)
    print("step   iters  converged  successive-difference energies / ratios")
    for i, tr in enumerate(rec.picard_traces):
        diffs = " ".join(f"{d:.3e}" for d in tr.diffs)
        ratios = " ".join(f"{r:.3e}" for r in tr.ratios) or "-"
        print(f"{i:4d}  {tr.iterations:5d}  {str(tr.converged):9s}  {diffs} | {ratios}")
    print(f"termination: {rec.termination}")
    return _classify_termination(rec.termination)


def cmd_audit_energy(cfg: RunConfig, args) -> int:
    params, basis, grid, state0 = _prepare_run(cfg)
    integrals = []
    for refine in (1, 2):
        step_cfg = cfg.make_step_config(dt=cfg.stepper["dt"] / refine)
        rec = simulate(params, basis, grid, step_cfg, state0)
        if rec.termination != "completed":
            print(f"run at dt/{refine} terminated: {rec.termination}")
            return _classify_termination(rec.termination)
        res = [r.audit_residual for r in rec.reports[1:]]
        integral = float(np.sum(np.abs(res)) * step_cfg.dt)
        integrals.append(integral)
        print(f"dt = {step_cfg.dt:.6g}: integral |residual| dt = {integral:.6e}")
    factor = integrals[0] / integrals[1]
    order = math.log2(factor)
    expected = 2.0 ** cfg.stepper["order"]
    tol = 0.15 * expected
    print(f"refinement factor: {factor:.4f} (expected {expected:.1f} +- {tol:.2f})")
    print(f"measured convergence order: {order:.3f}")
    if abs(factor - expected) > tol:
        print("audit refinement outside the expected band")
        return EXIT_CHECK_FAILED
    return EXIT_OK


def cmd_cancellation_check(cfg: RunConfig, args) -> int:
    params = cfg.make_params()
    basis = cfg.make_basis()
    grid = cfg.make_grid()
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.output["seed"])
    print("state  order  residual       max|m|")
    worst = 0.0
    for trial in range(args.trials):
        state = random_smooth_state(grid, basis, rng, eps=1e-2, mean_zero_g=True)
        for order in range(4):
            res = cancellation_residual(state, basis, grid, order)
            worst = max(worst, abs(res.residual))
            print(
                f"{trial:5d}  {order:5d}  {res.residual: .6e}  {res.max_abs_m:.3e}"
                + ("  (degenerate)" if res.degenerate else "")
            )
    print(f"max |residual| = {worst:.3e}")
    return EXIT_OK if worst < 1e-8 else EXIT_CHECK_FAILED


def cmd_closure_check(cfg: RunConfig, args) -> int:
    from .closure import closure_compare

    params, basis, grid, state0 = _prepare_run(cfg)
    degs = basis.degrees
    active = np.any(state0.g != 0.0, axis=tuple(range(state0.g.ndim - 1)))
    if np.any(active & (degs > 2)):
        raise ConfigError(
            "closure-check needs quadratic-in-q initial data; pick g_mode "
            "with basis degree <= 2",
            section="initial-data", key="g_mode",
        )
    comp = closure_compare(params, basis, grid, cfg.make_step_config(), state0)
    stride = max(1, len(comp.times) // 20)
    print("t        relative conformation deviation")
    for t, d in list(zip(comp.times, comp.deviations))[::stride]:
        print(f"{t:8.4f}  {d:.6e}")
    print(f"max deviation: {comp.max_deviation:.6e}")
    if args.out:
        directory = os.path.dirname(args.out)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write("t,closure_deviation\n")
            for t, d in zip(comp.times, comp.deviations):
                fh.write(f"{_fmt_float(t)},{_fmt_float(d)}\n")
        print(f"wrote {args.out}")
    return EXIT_OK if comp.max_deviation < 1e-6 else EXIT_CHECK_FAILED


_COMMANDS = {
    "validate-potential": cmd_validate_potential,
    "spectrum": cmd_spectrum,
    "simulate": cmd_simulate,
    "picard-demo": cmd_picard_demo,
    "audit-energy": cmd_audit_energy,
    "cancellation-check": cmd_cancellation_check,
    "closure-check": cmd_closure_check,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="polyflow",
        description="spectral simulator and verification harness for a "
        "compressible micro-macro polymeric fluid",
    )
    parser.add_argument("--version", action="version", version=f"polyflow {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument(
            "--config", action="append", required=True,
            help="run configuration file (repeatable for simulate sweeps)",
        )
        sp.add_argument("--seed", type=int, default=None,
                        help="override the configured random seed")
        if name == "simulate":
            sp.add_argument("--snapshot-every", type=int, default=None)
            sp.add_argument("--jobs", type=int, default=None,
                            help="concurrent runs for multi-config sweeps")
        if name in ("validate-potential", "closure-check"):
            sp.add_argument("--out", default="",
                            help="write a machine-readable result file")
        if name == "cancellation-check":
            sp.add_argument("--trials", type=int, default=20)
    return parser


def _run_single(name, path, args) -> int:
    cfg = load_config(path)
    return _COMMANDS[name](cfg, args)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    threads = os.environ.get("POLYFLOW_THREADS")
    if threads:
        print(f"POLYFLOW_THREADS = {threads}")

    configs = args.config
    jobs = getattr(args, "jobs", None)
    if jobs is None and threads:
        try:
            jobs = max(1, int(threads))
        except ValueError:
            jobs = 1
    jobs = jobs or 1

    try:
        if len(configs) == 1 or jobs <= 1 or args.command != "simulate":
            codes = [_run_single(args.command, path, args) for path in configs]
        else:
            from concurrent.futures import ProcessPoolExecutor

            with ProcessPoolExecutor(max_workers=jobs) as pool:
                futures = [
                    pool.submit(_run_single, args.command, path, args)
                    for path in configs
                ]
                codes = [f.result() for f in futures]
        return max(codes)
    except PolyflowError as err:
        print(f"error: {err}", file=sys.stderr)
        return _code_for(err)
    except Exception as err:  # pragma: no cover - last-resort mapping
        print(f"unexpected error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
