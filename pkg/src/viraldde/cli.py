"""Command line: ``viraldde {params,simulate,lyapunov,sweep,verify}``.

Exit codes: 0 success, 2 configuration error, 3 numerical or monitor failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from viraldde import lyapunov, model, scenario, simulate, verify
from viraldde.model import ParameterError
from viraldde.scenario import ConfigError, Scenario
from viraldde.simulate import IntegrationError, _fmt

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

log = logging.getLogger("viraldde")


class _Failure(Exception):
    def __init__(self, code: int, message: str) -> None:
        super().__init__(message)
        self.code = code


def _emit(text: str = "") -> None:
    sys.stdout.write(text + "\n")


def _load(args) -> Scenario:
    if args.scenario is None:
        raise _Failure(EXIT_CONFIG, "--scenario is required")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sc = scenario.load(args.scenario)
    for w in caught:
        log.warning("%s", w.message)
    run = sc.run
    if args.step is not None:
        if not args.step > 0:
            raise _Failure(EXIT_CONFIG, f"--step must be positive, got {args.step}")
        run = replace(run, step=args.step)
    if args.T is not None:
        if not args.T >= sc.params.h_bar:
            raise _Failure(EXIT_CONFIG, f"--T must be at least the longest delay {sc.params.h_bar}")
        run = replace(run, T=args.T)
    return replace(sc, run=run)


def _step_for(p: model.Parameters, step: float) -> float:
    h = simulate.commensurate_step(p, step)
    if h != step:
        log.info("step reduced from %s to %s so every discrete delay is a whole number of steps",
                 _fmt(step), _fmt(h))
    return h


def _integrate(sc: Scenario, p: model.Parameters | None = None) -> tuple[model.Parameters, simulate.Trajectory]:
    p = sc.params if p is None else p
    try:
        traj = simulate.integrate(p, sc.initial, sc.run.T, _step_for(p, sc.run.step))
    except IntegrationError as exc:
        raise _Failure(EXIT_NUMERIC, f"integration aborted: {exc}") from exc
    return p, traj


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


# {{{ params


def params_text(p: model.Parameters) -> str:
    reg = model.classify(p)
    lines = [f"r0 = {_fmt(reg.r0)}", f"r1 = {_fmt(reg.r1)}", f"regime = {reg.label.value}"]
    for label, eq in model.equilibria(p).items():
        comps = ", ".join(_fmt(c) for c in eq.state)
        lines.append(f"{label.value} = ({comps})")
    if reg.r1 > 1.0:
        rep = model.ordering_check(p)
        lines.append(f"ordering x2 > x1 and y1 > y2 = {'true' if rep.ok else 'false'}")
        lines.append(f"ordering x2 - x1 = {_fmt(rep.x_gap)}")
        lines.append(f"ordering mu/(k_d N_d) (r1 - 1) = {_fmt(rep.x_gap_predicted)}")
    return "\n".join(lines)


def cmd_params(args) -> int:
    sc = _load(args)
    _emit(params_text(sc.params))
    return EXIT_OK


# }}}


# {{{ simulate


def cmd_simulate(args) -> int:
    sc = _load(args)
    out = _outdir(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        simulate.check_admissibility(sc.initial, sc.params)
    for w in caught:
        log.warning("%s", w.message)
    p, traj = _integrate(sc)
    traj.to_csv(out / sc.run.trajectory)
    rep = simulate.monitor(p, traj, window=sc.run.window, steady_rtol=sc.run.steady_rtol,
                           label_rtol=sc.run.label_rtol)
    text = rep.to_text()
    (out / sc.run.report).write_text(text)
    sys.stdout.write(text)
    if rep.g_bound_violation:
        log.error("G exceeds its bound: sup %s > %s", _fmt(rep.g_sup), _fmt(rep.g_bound))
        return EXIT_NUMERIC
    return EXIT_OK


# }}}


# {{{ lyapunov


def cmd_lyapunov(args) -> int:
    sc = _load(args)
    out = _outdir(args)
    eps = args.eps_mono if args.eps_mono is not None else sc.lyapunov.eps_mono
    if not eps > 0:
        raise _Failure(EXIT_CONFIG, f"--eps-mono must be positive, got {eps}")
    p, traj = _integrate(sc)
    matched = verify.matched_functional(model.classify(p).label)
    requested = tuple(w for w in lyapunov.WHICH if w == matched or w in sc.lyapunov.which)
    for name in requested:
        try:
            lyapunov.anchor(p, name)
        except lyapunov.LyapunovError as exc:
            log.warning("%s; column left empty", exc)
    (out / sc.run.lyapunov).write_text(verify.lyapunov_csv(p, traj, requested))

    code = EXIT_OK
    for name in requested:
        try:
            ser = lyapunov.series(p, traj, name)
        except lyapunov.LyapunovError:
            continue
        v = lyapunov.certify_monotone(ser, eps)
        tag = " (regime-matched)" if name == matched else ""
        _emit(f"{name}{tag} = {'pass' if v.passed else 'fail'}")
        _emit(f"{name}.max_increment = {_fmt(v.max_increment)}")
        _emit(f"{name}.terminal = {_fmt(ser.terminal)}")
        _emit(f"{name}.undefined_tail_fraction = {_fmt(v.undefined_tail_fraction)}")
        _emit(f"{name}.message = {v.message}")
        if name == matched and not v.passed:
            code = EXIT_NUMERIC

    if args.deep:
        code = max(code, _deep(sc, p))
    return code


DEEP_STEP = 0.01


def _deep(sc: Scenario, p: model.Parameters) -> int:
    if model.classify(p).label is not model.RegimeLabel.CHRONIC_NO_IMMUNE:
        _emit("deep = skipped (the U1 decomposition applies to the ChronicNoImmune regime)")
        return EXIT_OK
    # the finite-difference comparison needs a finer grid than a typical run
    h = _step_for(p, min(sc.run.step, DEEP_STEP))
    try:
        traj = simulate.integrate(p, sc.initial, sc.run.T, h)
    except IntegrationError as exc:
        raise _Failure(EXIT_NUMERIC, f"integration aborted: {exc}") from exc
    chk = lyapunov.check_u1_decomposition(p, traj)
    _emit(f"deep = {'pass' if chk.passed else 'fail'}")
    _emit(f"deep.step = {_fmt(h)}")
    _emit(f"deep.max_rel_error = {_fmt(chk.max_rel_error)}")
    _emit(f"deep.samples = {chk.checked}")
    _emit(f"deep.sign_ok = {'true' if chk.sign_ok else 'false'}")
    return EXIT_OK if chk.passed else EXIT_NUMERIC


# }}}


# {{{ sweep

SWEEP_HEADER = ("param_value", "r0", "r1", "regime", "limit_label", "agree")


def sweep_row(sc: Scenario, name: str, value: float) -> list[str]:
    """One grid point; failures are written into the row."""
    try:
        p = sc.with_parameter(name, value)
    except (ParameterError, TypeError, ValueError) as exc:
        return [_fmt(value), "", "", "", f"error: {exc}", "false"]
    reg = model.classify(p)
    try:
        traj = simulate.integrate(p, sc.initial, sc.run.T, simulate.commensurate_step(p, sc.run.step))
        rep = simulate.monitor(p, traj, window=sc.run.window, steady_rtol=sc.run.steady_rtol,
                               label_rtol=sc.run.label_rtol)
    except (IntegrationError, ValueError) as exc:
        return [_fmt(value), _fmt(reg.r0), _fmt(reg.r1), reg.label.value, f"error: {exc}", "false"]
    label = rep.limit_label.value if rep.limit_label is not None else "none"
    agree = rep.limit_label is reg.label.equilibrium
    return [_fmt(value), _fmt(reg.r0), _fmt(reg.r1), reg.label.value, label,
            "true" if agree else "false"]


def _sweep_task(job):
    sc, name, value = job
    return sweep_row(sc, name, value)


def run_sweep(sc: Scenario, workers: int = 1) -> list[list[str]]:
    jobs = [(sc, sc.sweep.parameter, v) for v in sc.sweep.values]
    if workers <= 1:
        return [_sweep_task(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        # map keeps grid order
        return list(pool.map(_sweep_task, jobs))


def cmd_sweep(args) -> int:
    sc = _load(args)
    if sc.sweep is None:
        raise _Failure(EXIT_CONFIG, "scenario has no [sweep] block")
    out = _outdir(args)
    workers = args.workers if args.workers is not None else sc.sweep.workers
    rows = run_sweep(sc, workers)
    path = out / sc.sweep.output
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        w.writerows(rows)
    for row in rows:
        _emit(",".join(row))
    failed = sum(r[4].startswith("error") for r in rows)
    return EXIT_NUMERIC if failed else EXIT_OK


# }}}


def cmd_verify(args) -> int:
    results = verify.run_battery(progress=lambda msg: log.info("%s", msg))
    verify.write_artifacts(results, _outdir(args))
    sys.stdout.write(verify.report_text(results))
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERIC


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="viraldde",
        description="Distributed-delay viral infection model with CTL response.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(sp, out_default="."):
        sp.add_argument("--scenario", help="scenario TOML file")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--step", type=float, help="override the integration step")
        sp.add_argument("--T", type=float, help="override the horizon")

    sp = sub.add_parser("params", help="thresholds, regime and equilibria")
    common(sp)
    sp.set_defaults(func=cmd_params)

    sp = sub.add_parser("simulate", help="integrate and write the trajectory CSV")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("lyapunov", help="evaluate and certify Lyapunov functionals")
    common(sp)
    sp.add_argument("--eps-mono", dest="eps_mono", type=float, help="monotonicity tolerance")
    sp.add_argument("--deep", action="store_true", help="check the closed-form dU1/dt as well")
    sp.set_defaults(func=cmd_lyapunov)

    sp = sub.add_parser("sweep", help="regime map over one parameter")
    common(sp)
    sp.add_argument("--workers", type=int, help="parallel processes (default from scenario)")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="run the built-in verification battery")
    sp.add_argument("--out", default="verify_out", help="artifact directory")
    sp.set_defaults(func=cmd_verify)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse uses 2 for usage errors, which matches the config-error code
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ConfigError, ParameterError) as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except _Failure as exc:
        log.error("%s", exc)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
