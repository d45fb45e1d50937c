"""Built-in verification battery.

Each check returns a :class:`CheckResult` with a pass flag, short detail lines
and the text artifacts it produced. Nothing here depends on wall-clock time
except the per-run runtime limit, which only ever shows up as pass/fail.
Random parameter draws use fixed seeds.
"""

from __future__ import annotations

import io
import math
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from viraldde import kernels, lyapunov, model, simulate
from viraldde.model import Label, Parameters, RegimeLabel
from viraldde.simulate import Constant, InitialData, Ramp, _fmt

DEFAULT_STEP = 0.05
HORIZON = 500.0
RUNTIME_LIMIT = 10.0
SEED = 20240101

SET_A = dict(s=10.0, d=0.1, k=0.5, k_d=0.5, delta=1.0, p=1.0, N=10.0, N_d=10.0,
             mu=5.0, q=0.2, b=0.5)
SET_B = dict(s=1.0, d=1.0, k=0.1, k_d=0.1, delta=1.0, p=1.0, N=5.0, N_d=5.0,
             mu=1.0, q=0.2, b=0.5)
SET_C = {**SET_A, "b": 5.0}

_MATCHED = {
    RegimeLabel.CLEARANCE: "U0",
    RegimeLabel.CHRONIC_NO_IMMUNE: "U1",
    RegimeLabel.CHRONIC_WITH_IMMUNE: "U2",
}


def matched_functional(regime: RegimeLabel) -> str:
    return _MATCHED[regime]


def _kernel_pairs():
    return (
        (kernels.make_dirac(0.0), kernels.make_dirac(0.0)),
        (kernels.make_uniform(1.0), kernels.make_dirac(0.5)),
        (kernels.make_centered_uniform(1.0, 0.4), kernels.make_uniform(0.5)),
    )


def fixtures() -> list[tuple[str, Parameters]]:
    """Three parameter sets per regime, each with a different kernel pair."""
    pairs = _kernel_pairs()
    bases = (
        ("B", (SET_B, {**SET_B, "s": 1.5}, {**SET_B, "k": 0.15, "k_d": 0.14})),
        ("C", (SET_C, {**SET_C, "b": 3.0}, {**SET_C, "k_d": 0.4, "N_d": 8.0})),
        ("A", (SET_A, {**SET_A, "p": 2.0}, {**SET_A, "k_d": 0.4, "N_d": 8.0, "b": 0.4})),
    )
    out = []
    for tag, sets in bases:
        for i, (vals, (f1, f2)) in enumerate(zip(sets, pairs), start=1):
            out.append((f"{tag}{i}", Parameters(**vals, f1=f1, f2=f2)))
    return out


def initial_conditions() -> list[tuple[str, InitialData]]:
    return [
        ("ic1", InitialData(Constant(20.0), Constant(1.0), Ramp(2.0, 1.0), 1.0)),
        ("ic2", InitialData(Ramp(5.0, -1.0), Constant(0.0), Constant(0.5), 0.1)),
    ]


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    details: list[str] = field(default_factory=list)
    artifacts: dict[str, str] = field(default_factory=dict)


def _csv(header: list[str], rows: list[list[object]]) -> str:
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        cells = []
        for val in row:
            if isinstance(val, bool):
                cells.append("true" if val else "false")
            elif isinstance(val, float):
                cells.append(_fmt(val))
            elif val is None:
                cells.append("")
            else:
                cells.append(str(val))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def trajectory_csv(traj: simulate.Trajectory) -> str:
    times, states = traj.forward()
    rows = [[float(t)] + [float(c) for c in row] for t, row in zip(times, states)]
    return _csv(["t", "x", "y", "v", "z"], rows)


def lyapunov_csv(p: Parameters, traj: simulate.Trajectory, which: tuple[str, ...]) -> str:
    """``t,U0,U1,U2`` from ``t = h_bar``; empty cells where undefined or not requested."""
    start = traj.n_hist + math.ceil(p.h_bar / traj.step - 1e-9)
    times = traj.times[start:]
    cols = {}
    for name in lyapunov.WHICH:
        if name not in which:
            continue
        try:
            cols[name] = lyapunov.series(p, traj, name).values
        except lyapunov.LyapunovError:
            continue
    rows = []
    for i, t in enumerate(times):
        row: list[object] = [float(t)]
        for name in lyapunov.WHICH:
            val = cols.get(name)
            row.append(float(val[i]) if val is not None and np.isfinite(val[i]) else None)
        rows.append(row)
    return _csv(["t", *lyapunov.WHICH], rows)


# {{{ regime runs shared by the trichotomy, Lyapunov and positivity checks


@dataclass(frozen=True)
class RegimeRun:
    name: str
    params: Parameters
    regime: RegimeLabel
    traj: simulate.Trajectory
    report: simulate.MonitorReport
    admissible: simulate.Admissibility
    z0: float
    seconds: float


def regime_runs(step: float = DEFAULT_STEP, T: float = HORIZON) -> list[RegimeRun]:
    runs = []
    for pname, p in fixtures():
        for iname, init in initial_conditions():
            h = simulate.commensurate_step(p, step)
            t0 = time.perf_counter()
            traj = simulate.integrate(p, init, T, h)
            report = simulate.monitor(p, traj)
            seconds = time.perf_counter() - t0
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                adm = simulate.check_admissibility(init, p)
            runs.append(RegimeRun(f"{pname}_{iname}", p, model.classify(p).label, traj,
                                  report, adm, init.z0, seconds))
    return runs


def check_trichotomy(runs: list[RegimeRun]) -> CheckResult:
    rows = []
    ok = True
    for run in runs:
        expected = run.regime.equilibrium
        eq = model.equilibria(run.params)[expected]
        dist = float(np.max(np.abs(run.traj.terminal - eq.state)) / np.max(np.abs(eq.state)))
        good = run.report.limit_label is expected and dist < 1e-3 and run.seconds < RUNTIME_LIMIT
        ok &= good
        label = run.report.limit_label.value if run.report.limit_label else "none"
        rows.append([run.name, run.regime.value, expected.value, label, dist, good])
    res = CheckResult(1, "trichotomy realization", ok)
    res.details.append(f"{sum(r[-1] for r in rows)}/{len(rows)} runs reach the predicted equilibrium")
    res.artifacts["trichotomy.csv"] = _csv(
        ["run", "regime", "expected", "limit_label", "terminal_distance", "pass"], rows)
    return res


def check_lyapunov(runs: list[RegimeRun], eps_mono: float = lyapunov.EPS_MONO) -> CheckResult:
    rows = []
    ok = True
    for run in runs:
        which = matched_functional(run.regime)
        ser = lyapunov.series(run.params, run.traj, which)
        verdict = lyapunov.certify_monotone(ser, eps_mono)
        good = verdict.passed and ser.terminal < 1e-4
        ok &= good
        rows.append([run.name, which, verdict.max_increment, ser.terminal,
                     verdict.undefined_tail_fraction, good])
    res = CheckResult(2, "Lyapunov monotonicity", ok)
    res.details.append(f"{sum(r[-1] for r in rows)}/{len(rows)} regime-matched functionals certify")
    res.artifacts["lyapunov_runs.csv"] = _csv(
        ["run", "functional", "max_increment", "terminal", "undefined_tail", "pass"], rows)
    return res


def check_positivity(runs: list[RegimeRun]) -> CheckResult:
    rows = []
    ok = True
    for run in runs:
        forward = run.traj.states[run.traj.n_hist + 1:]
        scale = np.max(np.abs(forward), axis=0)
        nonneg = bool(np.all(forward >= -1e-9 * scale))
        needs_strict = run.z0 > 0 and run.admissible.infected
        strict = simulate.strictly_positive(run.params, run.traj) if needs_strict else True
        # the criterion as stated: sup over t >= 0 against G(0)
        bounded = not run.report.literal_g_violation
        bounded_after = not run.report.g_bound_violation
        good = nonneg and strict and bounded
        ok &= good
        rows.append([run.name, run.report.min_component, nonneg, strict,
                     run.report.literal_g_sup, run.report.literal_g_bound, bounded,
                     run.report.g_sup, run.report.g_bound, bounded_after, good])
    res = CheckResult(5, "positivity and boundedness", ok)
    res.details.append(f"{sum(r[-1] for r in rows)}/{len(rows)} runs nonnegative, positive and bounded")
    failed = [r[0] for r in rows if not r[6]]
    if failed:
        res.details.append("G exceeds max(G(0), s k_d/(k min(d, delta, b))) on: " + ", ".join(failed))
    res.details.append(
        f"bound from t = h1 with reference G(h1): {sum(r[9] for r in rows)}/{len(rows)} runs hold")
    res.artifacts["positivity.csv"] = _csv(
        ["run", "min_component", "nonnegative", "strictly_positive", "g_sup", "g_bound",
         "bounded", "g_sup_after_h1", "g_bound_after_h1", "bounded_after_h1", "pass"], rows)
    return res


# }}}


# {{{ closed-form checks on random parameter sets


def random_scalars(rng: np.random.Generator) -> dict[str, float]:
    """Log-uniform rates on [1e-2, 1e2]; k_d and N_d as fractions of k and N."""
    vals = {name: float(10.0 ** rng.uniform(-2.0, 2.0)) for name in model.SCALARS}
    vals["k_d"] = vals["k"] * float(rng.uniform(0.05, 1.0))
    vals["N_d"] = vals["N"] * float(rng.uniform(0.05, 1.0))
    return vals


def random_kernel(rng: np.random.Generator) -> kernels.DelayKernel:
    kind = rng.integers(3)
    if kind == 0:
        return kernels.make_dirac(float(rng.uniform(0.0, 2.0)))
    if kind == 1:
        return kernels.make_uniform(float(rng.uniform(0.1, 2.0)), start=float(rng.uniform(0.0, 1.0)))
    lags = np.linspace(0.0, float(rng.uniform(0.5, 2.0)), 6)
    vals = rng.uniform(0.0, 1.0, size=6)
    dens = kernels.tabulate(lambda t: np.interp(t, lags, vals), lags[-1], n=6)
    w = float(rng.uniform(0.1, 0.9))
    return kernels.make_table(
        rows=np.column_stack([dens.density[:, 0], dens.density[:, 1] * (1 - w)]),
        atoms=[(float(rng.uniform(0.0, 2.0)), w)],
    )


def _constant_history(state: np.ndarray):
    return lambda times: np.tile(state, (len(np.atleast_1d(times)), 1))


def check_residuals(n: int = 100, seed: int = SEED) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    checked = 0
    for _ in range(n):
        p = Parameters(**random_scalars(rng), f1=random_kernel(rng), f2=random_kernel(rng))
        for eq in model.equilibria(p).values():
            state = eq.state
            res = model.rhs(p, 0.0, state, _constant_history(state))
            scale = model.rhs_terms(p, state)
            rel = np.where(scale > 0, np.abs(res) / np.where(scale > 0, scale, 1.0),
                           np.where(res == 0, 0.0, np.inf))
            worst = max(worst, float(rel.max()))
            checked += 1
    res = CheckResult(3, "equilibrium residuals", worst < 1e-10)
    res.details.append(f"{checked} equilibria over {n} parameter sets, worst scaled residual {worst:.3e}")
    res.artifacts["residuals.txt"] = f"equilibria = {checked}\nworst_scaled_residual = {_fmt(worst)}\n"
    return res


def check_thresholds(n: int = 10_000, seed: int = SEED + 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    ordered = 0
    z_worst = 0.0
    gap_worst = 0.0
    immune = 0
    bad_ordering = 0
    for _ in range(n):
        p = Parameters(**random_scalars(rng))
        a, b = model.r0(p), model.r1(p)
        ordered += b < a
        if b > 1.0:
            immune += 1
            e2 = model.equilibrium_immune(p)
            z_ref = p.delta / p.p * (b - 1.0)
            z_worst = max(z_worst, abs(e2.z - z_ref) / abs(z_ref))
            rep = model.ordering_check(p)
            gap_worst = max(gap_worst, rep.x_gap_rel_error)
            bad_ordering += not (rep.x2 > rep.x1 and rep.y1 > rep.y2)
    ok = ordered == n and z_worst <= 1e-12 and gap_worst <= 1e-10 and bad_ordering == 0
    res = CheckResult(4, "reproduction-number identities", ok)
    res.details.append(f"r1 < r0 on {ordered}/{n} sets; {immune} with r1 > 1")
    res.details.append(f"worst z2 relative error {z_worst:.3e}, worst x-gap relative error {gap_worst:.3e}")
    res.artifacts["thresholds.txt"] = (
        f"draws = {n}\nr1_below_r0 = {ordered}\nimmune_sets = {immune}\n"
        f"z2_worst_rel = {_fmt(z_worst)}\nx_gap_worst_rel = {_fmt(gap_worst)}\n"
        f"ordering_failures = {bad_ordering}\n")
    return res


# }}}


def _rel_distance(a: np.ndarray, ref: np.ndarray) -> float:
    return float(np.max(np.abs(a - ref)) / np.max(np.abs(ref)))


def check_discrete(step: float = DEFAULT_STEP, T: float = 20.0) -> CheckResult:
    scal = {k: SET_A[k] for k in ("s", "d", "k", "delta", "p", "N", "mu", "q", "b")}
    init = initial_conditions()[0][1]

    # tau = 0 against the delay-free model written directly
    pd = model.from_discrete(**scal, tau=0.0)
    pf = Parameters(**SET_A)
    ta = simulate.integrate(pd, init, T, step)
    tb = simulate.integrate(pf, init, T, step)
    identical = ta.states.shape == tb.states.shape and bool(np.array_equal(ta.states, tb.states))

    # tau = 1 against uniform windows of shrinking width centered at 1
    pdir = model.from_discrete(**scal, tau=1.0)
    ref = simulate.integrate(pdir, init, T, simulate.commensurate_step(pdir, step)).terminal
    rows = []
    dists = []
    for w in (0.4, 0.2, 0.1):
        pw = pdir.with_values(f1=kernels.make_centered_uniform(1.0, w))
        tw = simulate.integrate(pw, init, T, simulate.commensurate_step(pw, step))
        dist = _rel_distance(tw.terminal, ref)
        dists.append(dist)
        rows.append([w, dist])
    shrinking = all(b < a for a, b in zip(dists, dists[1:]))
    ok = identical and shrinking and dists[-1] < 1e-2
    res = CheckResult(6, "discrete-model equivalence", ok)
    res.details.append(f"tau = 0 bit-identical to the delay-free model: {identical}")
    res.details.append("terminal distance to the dirac run: "
                       + ", ".join(f"w={w} {d:.3e}" for w, d in zip((0.4, 0.2, 0.1), dists)))
    res.artifacts["kernel_width.csv"] = _csv(["width", "terminal_distance"], rows)
    return res


def convergence_problem() -> tuple[Parameters, InitialData]:
    p = Parameters(**SET_A, f1=kernels.make_uniform(1.0), f2=kernels.make_dirac(0.5))
    init = InitialData(Constant(20.0), Ramp(1.0, 0.5), Ramp(2.0, 1.0), 1.0)
    return p, init


def check_convergence(T: float = 10.0, coarse: float = 0.1) -> CheckResult:
    p, init = convergence_problem()
    steps = [coarse / 2 ** i for i in range(4)]
    ref = simulate.integrate(p, init, T, steps[-1] / 4).terminal
    errors = [float(np.max(np.abs(simulate.integrate(p, init, T, h).terminal - ref))) for h in steps]
    ratios = [a / b for a, b in zip(errors, errors[1:])]
    ok = all(r >= 3.5 for r in ratios)
    res = CheckResult(7, "integrator self-convergence", ok)
    res.details.append("error ratios per halving: " + ", ".join(f"{r:.3f}" for r in ratios))
    res.artifacts["convergence.csv"] = _csv(
        ["step", "terminal_error", "ratio"],
        [[h, e, None if i == 0 else ratios[i - 1]] for i, (h, e) in enumerate(zip(steps, errors))])
    return res


def representative_artifacts(step: float = DEFAULT_STEP) -> dict[str, str]:
    """Trajectory and Lyapunov CSVs of one run per regime."""
    out = {}
    init = initial_conditions()[0][1]
    for name, p in fixtures():
        if not name.endswith("2"):
            continue
        traj = simulate.integrate(p, init, 100.0, simulate.commensurate_step(p, step))
        which = matched_functional(model.classify(p).label)
        out[f"trajectory_{name}.csv"] = trajectory_csv(traj)
        out[f"lyapunov_{name}.csv"] = lyapunov_csv(p, traj, (which,))
    return out


def check_determinism() -> CheckResult:
    first = representative_artifacts()
    second = representative_artifacts()
    same = first == second
    res = CheckResult(8, "determinism", same)
    res.details.append(f"{len(first)} artifacts regenerated byte-identically: {same}")
    res.artifacts.update(first)
    return res


def run_battery(progress: Callable[[str], None] | None = None) -> list[CheckResult]:
    say = progress or (lambda msg: None)
    say("regime runs")
    runs = regime_runs()
    results = []
    for fn in (
        lambda: check_trichotomy(runs),
        lambda: check_lyapunov(runs),
        check_residuals,
        check_thresholds,
        lambda: check_positivity(runs),
        check_discrete,
        check_convergence,
        check_determinism,
    ):
        res = fn()
        say(f"criterion {res.number}: {'pass' if res.passed else 'FAIL'}")
        results.append(res)
    return sorted(results, key=lambda r: r.number)


def report_text(results: list[CheckResult]) -> str:
    lines = []
    for res in results:
        lines.append(f"[{'PASS' if res.passed else 'FAIL'}] {res.number}. {res.name}")
        lines.extend(f"    {d}" for d in res.details)
    lines.append(f"overall: {'PASS' if all(r.passed for r in results) else 'FAIL'}")
    return "\n".join(lines) + "\n"


def write_artifacts(results: list[CheckResult], out: str | Path) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for res in results:
        for name, text in res.artifacts.items():
            (out / name).write_text(text)
    (out / "report.txt").write_text(report_text(results))
    return out
