"""Scenario files: model, initial data and run settings in one TOML document.

Grammar (every block is a TOML table)::

    [parameters]            # or [discrete] with tau, s, d, k, delta, p, N, mu, q, b
    s = 10.0
    ...                     # d, k, k_d, delta, p, N, N_d, mu, q, b
    [parameters.f1]         # optional, default dirac at 0
    kind = "uniform"        # dirac (lag) | uniform (width, start or center) | table
    width = 1.0             #   table: rows = [[lag, value], ...], atoms = [[lag, weight], ...]
    [parameters.f2]
    kind = "dirac"
    lag = 0.5

    [initial]
    z0 = 1.0
    phi1 = 20.0                                  # number means constant
    phi2 = { kind = "ramp", at_zero = 1.0, slope = 0.5 }
    phi3 = { kind = "table", rows = [[-1.0, 0.0], [0.0, 2.0]] }

    [run]
    T = 500.0
    step = 0.05
    window = 10.0           # optional, steady-state window (time units)
    steady_rtol = 1e-8      # optional
    label_rtol = 1e-3       # optional
    trajectory = "trajectory.csv"
    report = "monitor.txt"
    lyapunov = "lyapunov.csv"

    [sweep]                 # optional
    parameter = "b"
    values = [0.1, 0.5, 2.0]
    output = "sweep.csv"
    workers = 1

    [lyapunov]              # optional
    which = ["U2"]
    eps_mono = 1e-6
"""

from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import tomli

from viraldde import kernels
from viraldde.kernels import DelayKernel, KernelError
from viraldde.lyapunov import EPS_MONO, WHICH
from viraldde.model import SCALARS, ParameterError, Parameters, from_discrete, sanity_warnings
from viraldde.simulate import LABEL_RTOL, STEADY_RTOL, Constant, InitialData, Ramp, Table

DEFAULT_STEP = 0.05
DISCRETE_KEYS = ("s", "d", "k", "delta", "p", "N", "mu", "q", "b", "tau")


class ConfigError(ValueError):
    """Invalid scenario; the message carries a line reference when known."""


@dataclass(frozen=True)
class RunSpec:
    T: float = 100.0
    step: float = DEFAULT_STEP
    window: float | None = None
    steady_rtol: float = STEADY_RTOL
    label_rtol: float = LABEL_RTOL
    trajectory: str = "trajectory.csv"
    report: str = "monitor.txt"
    lyapunov: str = "lyapunov.csv"


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]
    output: str = "sweep.csv"
    workers: int = 1


@dataclass(frozen=True)
class LyapunovSpec:
    which: tuple[str, ...] = ()
    eps_mono: float = EPS_MONO


@dataclass(frozen=True)
class Scenario:
    params: Parameters
    initial: InitialData
    run: RunSpec = field(default_factory=RunSpec)
    sweep: SweepSpec | None = None
    lyapunov: LyapunovSpec = field(default_factory=LyapunovSpec)
    # the raw scalar block, kept so sweeps can rebuild discrete-shorthand models
    discrete: dict[str, float] | None = None
    warnings: tuple[str, ...] = ()

    def with_parameter(self, name: str, value: float) -> Parameters:
        """Parameters with one scalar replaced (``tau`` only for discrete scenarios)."""
        if self.discrete is not None:
            if name not in DISCRETE_KEYS:
                raise ParameterError(f"{name!r} is not a discrete-model parameter")
            return from_discrete(**{**self.discrete, name: value})
        if name not in SCALARS:
            raise ParameterError(f"{name!r} is not a model parameter")
        return replace(self.params, **{name: value})


# {{{ line lookup


def _line_of(text: str, table: str, key: str | None = None) -> int | None:
    """1-based line of ``[table]`` (or of ``key`` inside it), if present."""
    lines = text.splitlines()
    header = re.compile(r"^\s*\[\s*" + re.escape(table) + r"\s*\]\s*(#.*)?$")
    start = None
    for i, line in enumerate(lines):
        if header.match(line):
            start = i
            break
    if start is None:
        return None
    if key is None:
        return start + 1
    pat = re.compile(r"^\s*" + re.escape(key) + r"\s*=")
    for j in range(start + 1, len(lines)):
        if re.match(r"^\s*\[", lines[j]):
            break
        if pat.match(lines[j]):
            return j + 1
    return start + 1


class _Ctx:
    def __init__(self, text: str, source: str) -> None:
        self.text = text
        self.source = source

    def fail(self, msg: str, table: str, key: str | None = None) -> ConfigError:
        line = _line_of(self.text, table, key)
        where = f"{self.source}:{line}" if line else self.source
        return ConfigError(f"{where}: [{table}] {msg}")


# }}}


def _number(ctx: _Ctx, block: dict, table: str, key: str, *, default=None,
            positive=False, nonneg=False) -> float:
    if key not in block:
        if default is not None:
            return default
        raise ctx.fail(f"missing key {key!r}", table)
    val = block[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ctx.fail(f"{key} must be a number, got {val!r}", table, key)
    val = float(val)
    if not math.isfinite(val):
        raise ctx.fail(f"{key} must be finite", table, key)
    if positive and not val > 0:
        raise ctx.fail(f"{key} must be positive, got {val!r}", table, key)
    if nonneg and val < 0:
        raise ctx.fail(f"{key} must be nonnegative, got {val!r}", table, key)
    return val


def _check_keys(ctx: _Ctx, block: dict, table: str, allowed) -> None:
    for key in block:
        if key not in allowed:
            raise ctx.fail(f"unknown key {key!r}", table, key)


def parse_kernel(ctx: _Ctx, block: Any, table: str) -> DelayKernel:
    if not isinstance(block, dict):
        raise ctx.fail("kernel must be a table", table)
    kind = block.get("kind")
    try:
        if kind == "dirac":
            _check_keys(ctx, block, table, ("kind", "lag"))
            return kernels.make_dirac(_number(ctx, block, table, "lag", default=0.0))
        if kind == "uniform":
            _check_keys(ctx, block, table, ("kind", "width", "start", "center"))
            width = _number(ctx, block, table, "width", positive=True)
            if "center" in block and "start" in block:
                raise ctx.fail("give either start or center, not both", table, "center")
            if "center" in block:
                return kernels.make_centered_uniform(_number(ctx, block, table, "center"), width)
            return kernels.make_uniform(width, start=_number(ctx, block, table, "start", default=0.0))
        if kind == "table":
            _check_keys(ctx, block, table, ("kind", "rows", "atoms"))
            return kernels.make_table(block.get("rows", ()), block.get("atoms", ()))
    except (KernelError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ctx.fail(str(exc), table) from exc
    raise ctx.fail(f"kernel kind must be dirac, uniform or table, got {kind!r}", table, "kind")


def _parse_phi(ctx: _Ctx, value: Any, key: str):
    table = "initial"
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Constant(_number(ctx, {key: value}, table, key, nonneg=True))
    if not isinstance(value, dict):
        raise ctx.fail(f"{key} must be a number or an inline table", table, key)
    kind = value.get("kind")
    try:
        if kind == "constant":
            return Constant(_number(ctx, value, table, "value", nonneg=True))
        if kind == "ramp":
            return Ramp(_number(ctx, value, table, "at_zero"), _number(ctx, value, table, "slope"))
        if kind == "table":
            return Table(tuple(tuple(r) for r in value.get("rows", ())))
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ctx.fail(f"{key}: {exc}", table, key) from exc
    raise ctx.fail(f"{key} kind must be constant, ramp or table, got {kind!r}", table, key)


def _parse_parameters(ctx: _Ctx, doc: dict) -> tuple[Parameters, dict[str, float] | None]:
    if "parameters" in doc and "discrete" in doc:
        raise ctx.fail("give either [parameters] or [discrete], not both", "discrete")
    if "discrete" in doc:
        block = doc["discrete"]
        _check_keys(ctx, block, "discrete", DISCRETE_KEYS)
        vals = {key: _number(ctx, block, "discrete", key) for key in DISCRETE_KEYS}
        try:
            return from_discrete(**vals), vals
        except ParameterError as exc:
            raise ctx.fail(str(exc), "discrete") from exc
    if "parameters" not in doc:
        raise ConfigError(f"{ctx.source}: missing [parameters] or [discrete] block")
    block = doc["parameters"]
    _check_keys(ctx, block, "parameters", SCALARS + ("f1", "f2"))
    vals = {key: _number(ctx, block, "parameters", key) for key in SCALARS}
    kern = {
        name: parse_kernel(ctx, block[name], f"parameters.{name}")
        for name in ("f1", "f2") if name in block
    }
    try:
        return Parameters(**vals, **kern), None
    except ParameterError as exc:
        first = str(exc).split()[0]
        key = first if first in SCALARS else None
        raise ctx.fail(str(exc), "parameters", key) from exc


def _parse_initial(ctx: _Ctx, doc: dict) -> InitialData:
    if "initial" not in doc:
        raise ConfigError(f"{ctx.source}: missing [initial] block")
    block = doc["initial"]
    _check_keys(ctx, block, "initial", ("phi1", "phi2", "phi3", "z0"))
    phis = []
    for key in ("phi1", "phi2", "phi3"):
        if key not in block:
            raise ctx.fail(f"missing key {key!r}", "initial")
        phis.append(_parse_phi(ctx, block[key], key))
    z0 = _number(ctx, block, "initial", "z0", nonneg=True)
    return InitialData(*phis, z0)


def _parse_run(ctx: _Ctx, doc: dict) -> RunSpec:
    block = doc.get("run", {})
    _check_keys(ctx, block, "run", RunSpec.__dataclass_fields__)
    base = RunSpec()
    out = {}
    for key in ("T", "step", "steady_rtol", "label_rtol"):
        out[key] = _number(ctx, block, "run", key, default=getattr(base, key), positive=True)
    if "window" in block:
        out["window"] = _number(ctx, block, "run", "window", positive=True)
    for key in ("trajectory", "report", "lyapunov"):
        val = block.get(key, getattr(base, key))
        if not isinstance(val, str) or not val:
            raise ctx.fail(f"{key} must be a file name", "run", key)
        out[key] = val
    return RunSpec(**out)


def _parse_sweep(ctx: _Ctx, doc: dict, discrete: bool) -> SweepSpec | None:
    if "sweep" not in doc:
        return None
    block = doc["sweep"]
    _check_keys(ctx, block, "sweep", ("parameter", "values", "output", "workers"))
    name = block.get("parameter")
    allowed = DISCRETE_KEYS if discrete else SCALARS
    if name not in allowed:
        raise ctx.fail(f"parameter must be one of {', '.join(allowed)}, got {name!r}",
                       "sweep", "parameter")
    values = block.get("values")
    if not isinstance(values, list) or not values:
        raise ctx.fail("values must be a non-empty list", "sweep", "values")
    grid = []
    for val in values:
        if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
            raise ctx.fail(f"grid value {val!r} is not a finite number", "sweep", "values")
        grid.append(float(val))
    output = block.get("output", "sweep.csv")
    workers = block.get("workers", 1)
    if isinstance(workers, bool) or not isinstance(workers, int) or workers < 1:
        raise ctx.fail("workers must be a positive integer", "sweep", "workers")
    return SweepSpec(name, tuple(grid), str(output), workers)


def _parse_lyapunov(ctx: _Ctx, doc: dict) -> LyapunovSpec:
    block = doc.get("lyapunov", {})
    _check_keys(ctx, block, "lyapunov", ("which", "eps_mono"))
    which = block.get("which", [])
    if isinstance(which, str):
        which = [which]
    for name in which:
        if name not in WHICH:
            raise ctx.fail(f"which entries must be U0, U1 or U2, got {name!r}", "lyapunov", "which")
    eps = _number(ctx, block, "lyapunov", "eps_mono", default=EPS_MONO, positive=True)
    return LyapunovSpec(tuple(which), eps)


def loads(text: str, source: str = "<scenario>") -> Scenario:
    """Parse scenario text. Raises :class:`ConfigError` with a line reference."""
    try:
        doc = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    ctx = _Ctx(text, source)
    for key in doc:
        if key not in ("parameters", "discrete", "initial", "run", "sweep", "lyapunov"):
            raise ctx.fail("unknown block", key)
    params, discrete = _parse_parameters(ctx, doc)
    initial = _parse_initial(ctx, doc)
    run = _parse_run(ctx, doc)
    if run.T < params.h_bar:
        raise ctx.fail(f"T = {run.T} is shorter than the longest delay {params.h_bar}", "run", "T")
    notes = tuple(sanity_warnings(params))
    for msg in notes:
        warnings.warn(msg, stacklevel=2)
    return Scenario(
        params=params,
        initial=initial,
        run=run,
        sweep=_parse_sweep(ctx, doc, discrete is not None),
        lyapunov=_parse_lyapunov(ctx, doc),
        discrete=discrete,
        warnings=notes,
    )


def load(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror or exc}") from exc
    return loads(text, str(path))


def builtin(name: str) -> Path:
    """Path of a scenario shipped with the package (``set_a``, ``set_b``, ...)."""
    path = Path(__file__).with_name("scenarios") / f"{name}.toml"
    if not path.exists():
        raise ConfigError(f"no built-in scenario {name!r}")
    return path
