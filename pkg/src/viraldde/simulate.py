"""Fixed-step integration of the delayed model and runtime monitors."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence, Union

import numpy as np
from scipy.ndimage import maximum_filter1d, minimum_filter1d

from viraldde import _stencil, kernels
from viraldde.model import Label, Parameters, equilibria

log = logging.getLogger(__name__)

COMPONENTS = ("x", "y", "v", "z")
NEG_RTOL = 1e-9
STEADY_RTOL = 1e-8
LABEL_RTOL = 1e-3
G_RTOL = 1e-6
_GRID_TOL = 1e-9


class IntegrationError(RuntimeError):
    pass


# {{{ initial functions


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, theta):
        return np.full(np.shape(theta), float(self.value))

    def derivative(self, theta):
        return np.zeros(np.shape(theta))


@dataclass(frozen=True)
class Ramp:
    """``phi(theta) = at_zero + slope * theta`` on the history interval."""

    at_zero: float
    slope: float

    def __call__(self, theta):
        return self.at_zero + self.slope * np.asarray(theta, dtype=float)

    def derivative(self, theta):
        return np.full(np.shape(theta), float(self.slope))


@dataclass(frozen=True)
class Table:
    """Piecewise-linear samples ``(theta, value)``; no extrapolation."""

    rows: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 2:
            raise ValueError("table needs at least two (theta, value) rows")
        if np.any(np.diff(arr[:, 0]) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        object.__setattr__(self, "rows", tuple(map(tuple, arr.tolist())))

    def __call__(self, theta):
        arr = np.asarray(self.rows)
        theta = np.asarray(theta, dtype=float)
        lo, hi = arr[0, 0], arr[-1, 0]
        if np.any(theta < lo - _GRID_TOL) or np.any(theta > hi + _GRID_TOL):
            raise ValueError(f"initial table covers [{lo}, {hi}], asked outside it")
        return np.interp(theta, arr[:, 0], arr[:, 1])

    def derivative(self, theta):
        arr = np.asarray(self.rows)
        slopes = np.diff(arr[:, 1]) / np.diff(arr[:, 0])
        # left derivative at breakpoints
        i = np.clip(np.searchsorted(arr[:, 0], theta, side="left") - 1, 0, len(slopes) - 1)
        return slopes[i]


InitialFunction = Union[Constant, Ramp, Table, Callable[[np.ndarray], np.ndarray]]


def _as_function(phi) -> InitialFunction:
    if isinstance(phi, (int, float)):
        return Constant(float(phi))
    return phi


@dataclass(frozen=True)
class InitialData:
    """History of ``x, y, v`` on ``[-h_bar, 0]`` and the initial CTL level."""

    phi1: InitialFunction
    phi2: InitialFunction
    phi3: InitialFunction
    z0: float

    def __post_init__(self) -> None:
        for name in ("phi1", "phi2", "phi3"):
            object.__setattr__(self, name, _as_function(getattr(self, name)))
        if not self.z0 >= 0:
            raise ValueError(f"z0 must be nonnegative, got {self.z0!r}")

    @property
    def phis(self) -> tuple[InitialFunction, InitialFunction, InitialFunction]:
        return self.phi1, self.phi2, self.phi3

    @classmethod
    def constant(cls, state: Sequence[float]) -> InitialData:
        x, y, v, z = state
        return cls(Constant(x), Constant(y), Constant(v), float(z))


@dataclass(frozen=True)
class Admissibility:
    cond_i: bool
    cond_ii: bool
    z0_positive: bool

    @property
    def infected(self) -> bool:
        return self.cond_i or self.cond_ii


def check_admissibility(init: InitialData, p: Parameters) -> Admissibility:
    """Positivity conditions on the initial history.

    ``cond_i``: infected cells now or infection events in the pipeline;
    ``cond_ii``: free virus now or virus production in the pipeline.
    When both fail, ``y`` and ``v`` stay identically zero.
    """
    phi1, phi2, phi3 = init.phis
    i_val = float(phi2(np.array([0.0]))[0]) + float(
        kernels.convolve(p.f1, lambda th: phi1(th) * phi3(th), 0.0))
    ii_val = float(phi3(np.array([0.0]))[0]) + float(kernels.convolve(p.f2, phi2, 0.0))
    flags = Admissibility(i_val > 0.0, ii_val > 0.0, init.z0 > 0.0)
    if not flags.infected:
        warnings.warn(
            "initial data carries no infection: y and v remain identically zero",
            stacklevel=2,
        )
    return flags


# }}}


# {{{ trajectory


@dataclass(frozen=True)
class Trajectory:
    """Uniform-grid solution ``t_n = n * step`` for ``n = -n_hist .. n_end``.

    ``dright``/``dleft`` hold one-sided derivatives at the nodes; they differ
    only at ``t = 0`` where the history meets the solution.
    """

    step: float
    n_hist: int
    states: np.ndarray
    dright: np.ndarray
    dleft: np.ndarray
    clamps: int = 0

    def __post_init__(self) -> None:
        for arr in (self.states, self.dright, self.dleft):
            arr.flags.writeable = False

    @property
    def times(self) -> np.ndarray:
        return self.step * (np.arange(len(self.states)) - self.n_hist)

    @property
    def t_end(self) -> float:
        return self.step * (len(self.states) - 1 - self.n_hist)

    @property
    def n_end(self) -> int:
        return len(self.states) - 1 - self.n_hist

    def index(self, t: float) -> int:
        """Storage position of the node at time ``t``."""
        r = t / self.step + self.n_hist
        i = round(r)
        if abs(r - i) > 1e-6 or not 0 <= i < len(self.states):
            raise ValueError(f"t = {t!r} is not a grid node of this trajectory")
        return i

    def at(self, t) -> np.ndarray:
        """Cubic Hermite interpolation of the state; ``t`` scalar or array."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        r = t / self.step + self.n_hist
        if np.any(r < -_GRID_TOL) or np.any(r > len(self.states) - 1 + _GRID_TOL):
            raise ValueError("requested time outside the trajectory")
        i = np.clip(np.floor(r).astype(int), 0, len(self.states) - 2)
        theta = np.clip(r - i, 0.0, 1.0)[:, None]
        t2, t3 = theta * theta, theta * theta * theta
        h = self.step
        out = ((2 * t3 - 3 * t2 + 1) * self.states[i]
               + (t3 - 2 * t2 + theta) * h * self.dright[i]
               + (-2 * t3 + 3 * t2) * self.states[i + 1]
               + (t3 - t2) * h * self.dleft[i + 1])
        return out

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1].copy()

    def forward(self) -> tuple[np.ndarray, np.ndarray]:
        """Times and states for ``t >= 0``."""
        return self.times[self.n_hist:], self.states[self.n_hist:]

    def to_csv(self, path: str | Path) -> None:
        times, states = self.forward()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("t",) + COMPONENTS)
            for t, row in zip(times, states):
                w.writerow([_fmt(t)] + [_fmt(val) for val in row])


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def read_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


# }}}


# {{{ integrator


def commensurate_step(p: Parameters, step: float, max_divisions: int = 100_000) -> float:
    """Largest step ``<= step`` that divides every positive atom lag."""
    lags = [lag for k in (p.f1, p.f2) for lag in k.atoms[:, 0] if lag > 0]
    if not lags:
        return step
    longest = max(lags)
    m0 = max(1, math.ceil(longest / step - _GRID_TOL))
    for m in range(m0, m0 + max_divisions):
        h = longest / m
        if all(_is_multiple(lag, h) for lag in lags):
            return h
    raise IntegrationError(f"no step <= {step} divides all atom lags {lags}")


def _is_multiple(lag: float, step: float) -> bool:
    r = lag / step
    return abs(r - round(r)) <= _GRID_TOL * max(1.0, r)


def _history_nodes(init: InitialData, p: Parameters, step: float, n_hist: int):
    theta = step * (np.arange(n_hist + 1) - n_hist)
    # the first node may sit up to one step before -h_bar
    theta_eval = np.maximum(theta, -p.h_bar)
    cols = []
    for phi in init.phis:
        vals = np.asarray(phi(theta_eval), dtype=float)
        if vals.shape != theta.shape:
            vals = np.broadcast_to(vals, theta.shape).astype(float)
        cols.append(vals)
    cols.append(np.full(theta.shape, float(init.z0)))
    states = np.column_stack(cols)
    if np.any(~np.isfinite(states)) or np.any(states < 0):
        raise ValueError("initial history must be finite and nonnegative on [-h_bar, 0]")
    derivs = np.zeros_like(states)
    for c, phi in enumerate(init.phis):
        if hasattr(phi, "derivative"):
            derivs[:, c] = phi.derivative(theta_eval)
        elif n_hist >= 2:
            derivs[:, c] = np.gradient(states[:, c], step, edge_order=2)
        elif n_hist == 1:
            derivs[:, c] = np.gradient(states[:, c], step, edge_order=1)
    return states, derivs


def integrate(
    p: Parameters,
    init: InitialData,
    T: float,
    step: float,
    *,
    neg_rtol: float = NEG_RTOL,
) -> Trajectory:
    """Classic four-stage Runge-Kutta with kernel integrals on the grid.

    Every positive atom lag must be an integer multiple of ``step`` (see
    :func:`commensurate_step`). Off-grid look-backs use cubic Hermite
    interpolation on stored node derivatives; look-backs into the current
    step interpolate linearly towards the stage value.
    """
    if not step > 0:
        raise ValueError(f"step must be positive, got {step!r}")
    for name, k in (("f1", p.f1), ("f2", p.f2)):
        for lag in k.atoms[:, 0]:
            if lag > 0 and not _is_multiple(lag, step):
                raise IntegrationError(
                    f"atom lag {lag} of {name} is not a multiple of step {step}")
    if T < p.h_bar:
        raise ValueError(f"horizon T = {T} is shorter than h_bar = {p.h_bar}")

    n_hist = math.ceil(p.h_bar / step - _GRID_TOL)
    n_steps = math.ceil(T / step - _GRID_TOL)
    total = n_hist + n_steps + 1

    U = np.zeros((total, 4))
    DR = np.zeros((total, 4))
    DL = np.zeros((total, 4))
    hist, hist_d = _history_nodes(init, p, step, n_hist)
    U[:n_hist + 1] = hist
    DR[:n_hist + 1] = hist_d
    DL[:n_hist + 1] = hist_d

    # delayed integrands: x*v for f1 and y for f2, with one-sided derivatives
    P = U[:, 0] * U[:, 2]
    PR = DR[:, 0] * U[:, 2] + U[:, 0] * DR[:, 2]
    PL = PR.copy()
    Y, YR, YL = U[:, 1].copy(), DR[:, 1].copy(), DL[:, 1].copy()

    st1 = {c: _stencil.build(p.f1, step, c) for c in (0.0, 0.5, 1.0)}
    st2 = {c: _stencil.build(p.f2, step, c) for c in (0.0, 0.5, 1.0)}

    s, d, k, k_d = p.s, p.d, p.k, p.k_d
    delta, kill, N_d, mu, q, b = p.delta, p.p, p.N_d, p.mu, p.q, p.b
    prod_rate = N_d * delta

    def field(x, y, v, z, c1, c2):
        return (
            s - d * x - k * x * v,
            k_d * c1 - delta * y - kill * y * z,
            prod_rate * c2 - mu * v,
            q * y * z - b * z,
        )

    def evaluate(frac, base, x, y, v, z):
        c1 = st1[frac].at(x * v, P, PR, PL, base)
        c2 = st2[frac].at(y, Y, YR, YL, base)
        return field(x, y, v, z, c1, c2)

    scale = np.max(np.abs(hist), axis=0)
    clamps = 0
    h = step
    half = 0.5 * h

    base = n_hist
    try:
        k1 = evaluate(0.0, base, *U[base])
    except IndexError as exc:
        raise IntegrationError(str(exc)) from exc
    DR[base] = k1
    PR[base] = k1[0] * U[base, 2] + U[base, 0] * k1[2]
    YR[base] = k1[1]

    # overflow in a diverging step is caught by the finiteness check
    with np.errstate(over="ignore", invalid="ignore"):
        for n in range(n_steps):
            base = n_hist + n
            x, y, v, z = U[base]
            k1 = DR[base]
            u2 = (x + half * k1[0], y + half * k1[1], v + half * k1[2], z + half * k1[3])
            k2 = evaluate(0.5, base, *u2)
            u3 = (x + half * k2[0], y + half * k2[1], v + half * k2[2], z + half * k2[3])
            k3 = evaluate(0.5, base, *u3)
            u4 = (x + h * k3[0], y + h * k3[1], v + h * k3[2], z + h * k3[3])
            k4 = evaluate(1.0, base, *u4)
            new = np.array([x, y, v, z]) + (h / 6.0) * (
                np.asarray(k1) + 2.0 * np.asarray(k2) + 2.0 * np.asarray(k3) + np.asarray(k4))

            if not np.all(np.isfinite(new)):
                raise IntegrationError(f"non-finite state at t = {(n + 1) * h:.6g}; reduce the step")
            scale = np.maximum(scale, np.abs(new))
            neg = new < 0.0
            if np.any(neg):
                tol = neg_rtol * scale
                if np.any(new[neg] < -tol[neg]):
                    i = int(np.flatnonzero(neg & (new < -tol))[0])
                    raise IntegrationError(
                        f"{COMPONENTS[i]} = {new[i]:.3e} at t = {(n + 1) * h:.6g} is negative "
                        f"beyond tolerance {tol[i]:.3e}; reduce the step (now {h})")
                log.debug("clamped %s at t=%g", [COMPONENTS[i] for i in np.flatnonzero(neg)],
                          (n + 1) * h)
                new[neg] = 0.0
                clamps += 1

            nxt = base + 1
            U[nxt] = new
            P[nxt] = new[0] * new[2]
            Y[nxt] = new[1]
            fn = evaluate(1.0, base, *new)
            DR[nxt] = fn
            DL[nxt] = fn
            PR[nxt] = PL[nxt] = fn[0] * new[2] + new[0] * fn[2]
            YR[nxt] = YL[nxt] = fn[1]

    return Trajectory(step=step, n_hist=n_hist, states=U, dright=DR, dleft=DL, clamps=clamps)


# }}}


# {{{ monitors


def node_convolution(kernel, traj: Trajectory, series: np.ndarray, dr: np.ndarray,
                     dl: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Kernel integral of a node series at storage positions ``idx``."""
    st = _stencil.build(kernel, traj.step, 0.0)
    return st.series(series, dr, dl, idx)


def g_series(p: Parameters, traj: Trajectory) -> tuple[np.ndarray, np.ndarray]:
    """``G = (k_d/k) (f1 * x) + y + (p/q) z`` at every node with ``t >= 0``."""
    idx = np.arange(traj.n_hist, len(traj.states))
    S, DR, DL = traj.states, traj.dright, traj.dleft
    conv = node_convolution(p.f1, traj, S[:, 0], DR[:, 0], DL[:, 0], idx)
    G = p.k_d / p.k * conv + S[idx, 1] + p.p / p.q * S[idx, 3]
    return traj.times[idx], G


def g_bound(p: Parameters, g0: float) -> float:
    return max(g0, p.s * p.k_d / (p.k * min(p.d, p.delta, p.b)))


@dataclass(frozen=True)
class MonitorReport:
    """Runtime checks on one trajectory.

    The bound on ``G`` is checked from ``g_from = h1`` on, with ``G(h1)`` as
    the reference: before ``h1`` the delayed ``x`` term still reads raw
    history, which need not obey the ``x`` equation. The ``literal_*``
    fields carry the same check taken from ``t = 0`` with ``G(0)``.
    """

    min_component: float
    g_bound_violation: bool
    g_sup: float
    g_bound: float
    steady_state_time: float | None
    limit_label: Label | None
    terminal_distance: float | None = None
    clamps: int = 0
    terminal: tuple[float, ...] = field(default_factory=tuple)
    g_from: float = 0.0
    literal_g_sup: float | None = None
    literal_g_bound: float | None = None
    literal_g_violation: bool = False

    def as_dict(self) -> dict[str, object]:
        return {
            "min_component": self.min_component,
            "g_bound_violation": self.g_bound_violation,
            "g_sup": self.g_sup,
            "g_bound": self.g_bound,
            "steady_state_time": self.steady_state_time,
            "limit_label": None if self.limit_label is None else self.limit_label.value,
            "terminal_distance": self.terminal_distance,
            "clamps": self.clamps,
            "g_from": self.g_from,
            "literal_g_sup": self.literal_g_sup,
            "literal_g_bound": self.literal_g_bound,
            "literal_g_violation": self.literal_g_violation,
            **{f"terminal_{c}": val for c, val in zip(COMPONENTS, self.terminal)},
        }

    def to_text(self) -> str:
        lines = []
        for key, val in self.as_dict().items():
            if isinstance(val, bool):
                txt = "true" if val else "false"
            elif val is None:
                txt = "none"
            elif isinstance(val, float):
                txt = _fmt(val)
            else:
                txt = str(val)
            lines.append(f"{key} = {txt}")
        return "\n".join(lines) + "\n"


def steady_window(p: Parameters, traj: Trajectory, width: float | None = None) -> int:
    if width is None:
        width = 10.0 * p.h_bar if p.h_bar > 0 else 10.0
    w = max(2, math.ceil(width / traj.step - _GRID_TOL))
    return w + (w % 2)


def relative_change(p: Parameters, traj: Trajectory, width: float | None = None):
    """Spread of each component over the trailing window, relative to the
    sup-norm of the state at the window's end. Returns ``(times, change)``
    for nodes whose window lies in ``t >= 0``."""
    w = steady_window(p, traj, width)
    _, states = traj.forward()
    if len(states) <= w:
        return np.zeros(0), np.zeros(0)
    size = w + 1
    hi = maximum_filter1d(states, size=size, axis=0, mode="nearest")
    lo = minimum_filter1d(states, size=size, axis=0, mode="nearest")
    m = w // 2
    ends = np.arange(w, len(states))
    spread = hi[ends - m] - lo[ends - m]
    norm = np.max(np.abs(states[ends]), axis=1)
    change = np.max(spread, axis=1) / np.where(norm > 0, norm, 1.0)
    times = traj.times[traj.n_hist + ends]
    return times, change


def nearest_equilibrium(p: Parameters, state: np.ndarray) -> tuple[Label, float]:
    best = None
    for label, eq in equilibria(p).items():
        ref = eq.state
        dist = float(np.max(np.abs(state - ref)) / np.max(np.abs(ref)))
        if best is None or dist < best[1]:
            best = (label, dist)
    return best


def monitor(
    p: Parameters,
    traj: Trajectory,
    *,
    window: float | None = None,
    steady_rtol: float = STEADY_RTOL,
    label_rtol: float = LABEL_RTOL,
) -> MonitorReport:
    """Positivity, the bound on ``G`` and steady-state detection.

    Violations are reported, never raised.
    """
    forward = traj.states[traj.n_hist + 1:]
    min_comp = float(forward.min()) if len(forward) else float(traj.states[-1].min())

    times_g, G = g_series(p, traj)
    first = int(np.searchsorted(times_g, p.f1.support_bound - _GRID_TOL * traj.step))
    first = min(first, len(G) - 1)
    bound = g_bound(p, float(G[first]))
    g_sup = float(G[first:].max())
    violation = bool(g_sup > bound * (1.0 + G_RTOL))
    literal_bound = g_bound(p, float(G[0]))
    literal_sup = float(G.max())

    times, change = relative_change(p, traj, window)
    steady_time = None
    if len(change) and change[-1] < steady_rtol:
        bad = np.flatnonzero(change >= steady_rtol)
        first = 0 if len(bad) == 0 else bad[-1] + 1
        steady_time = float(times[first])

    label, dist = nearest_equilibrium(p, traj.states[-1])
    limit = label if steady_time is not None and dist < label_rtol else None
    return MonitorReport(
        min_component=min_comp,
        g_bound_violation=violation,
        g_sup=g_sup,
        g_bound=bound,
        steady_state_time=steady_time,
        limit_label=limit,
        terminal_distance=dist,
        clamps=traj.clamps,
        terminal=tuple(float(c) for c in traj.states[-1]),
        g_from=float(times_g[first]),
        literal_g_sup=literal_sup,
        literal_g_bound=literal_bound,
        literal_g_violation=bool(literal_sup > literal_bound * (1.0 + G_RTOL)),
    )


def strictly_positive(p: Parameters, traj: Trajectory, floor: float = 1e-14) -> bool:
    """All components positive at nodes with ``t > h_bar``.

    A component that has already decayed below ``floor`` times its running
    maximum may underflow to zero without counting as a violation.
    """
    start = traj.index(0.0) + math.floor(p.h_bar / traj.step + _GRID_TOL) + 1
    S = traj.states
    running = np.maximum.accumulate(np.abs(S[traj.n_hist:]), axis=0)
    running = np.concatenate([np.zeros((traj.n_hist, 4)), running])
    for i in range(start, len(S)):
        row = S[i]
        if np.all(row > 0):
            continue
        # earliest decay below the floor must precede this node
        for c in np.flatnonzero(row <= 0):
            seg = S[start:i, c]
            if not np.any(seg < floor * running[i, c]):
                return False
    return True


# }}}
