"""Lyapunov functionals evaluated along computed trajectories.

Each functional is anchored at one equilibrium and is non-increasing along
solutions in the matching regime:

* ``U0`` (anchor ``E0``) when ``r0 <= 1``,
* ``U1`` (anchor ``E1``) when ``r1 <= 1 < r0``,
* ``U2`` (anchor ``E2``) when ``r1 > 1``.

The history part of each functional is a double integral
``int f(tau) int_{t-tau}^t G(s) ds dtau``. The inner integral is a difference
of the trapezoid antiderivative of ``G`` on the trajectory grid, the outer one
uses the same node stencils as the integrator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from viraldde import _stencil
from viraldde.model import (
    Equilibrium,
    Label,
    Parameters,
    equilibrium_immune,
    equilibrium_no_immune,
    equilibrium_uninfected,
)
from viraldde.simulate import Trajectory

EPS_MONO = 1e-6
GUARD_RTOL = 1e-12
MAX_UNDEFINED_TAIL = 0.01
WHICH = ("U0", "U1", "U2")
_ANCHOR = {"U0": Label.E0, "U1": Label.E1, "U2": Label.E2}
# components that must be strictly positive at t (and over the look-back window)
_NEEDS_NOW = {"U0": (0,), "U1": (0, 1, 2), "U2": (0, 1, 2, 3)}
_NEEDS_WINDOW = {"U0": (), "U1": (0, 1, 2), "U2": (0, 1, 2)}


class LyapunovError(ValueError):
    pass


def g(x):
    """``x - 1 - ln x``: nonnegative, zero only at ``x = 1``."""
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("g is defined for positive arguments only")
    out = x - 1.0 - np.log(x)
    return out if out.ndim else float(out)


def _g_unchecked(x: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        return x - 1.0 - np.log(x)


def anchor(p: Parameters, which: str) -> Equilibrium:
    if which not in WHICH:
        raise LyapunovError(f"unknown functional {which!r}")
    eq = {
        "U0": equilibrium_uninfected,
        "U1": equilibrium_no_immune,
        "U2": equilibrium_immune,
    }[which](p)
    if eq is None:
        raise LyapunovError(f"{which} needs {_ANCHOR[which].value}, which does not exist here")
    return eq


def _cumtrapz(values: np.ndarray, step: float) -> np.ndarray:
    out = np.zeros_like(values)
    out[1:] = np.cumsum(0.5 * step * (values[1:] + values[:-1]))
    return out


def _memory(kernel, traj: Trajectory, integrand: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """``int f(tau) int_{t-tau}^t G(s) ds dtau`` at storage positions ``idx``."""
    st = _stencil.build(kernel, traj.step, 0.0)
    total = st.own + st.value.sum()
    anti = _cumtrapz(integrand, traj.step)
    past = st.series(anti, integrand, integrand, idx)
    return total * anti[idx] - past


def _window_ok(bad: np.ndarray, idx: np.ndarray, depth: int) -> np.ndarray:
    counts = np.concatenate([[0], np.cumsum(bad)])
    lo = np.maximum(idx - depth, 0)
    return counts[idx + 1] - counts[lo] == 0


@dataclass(frozen=True)
class LyapunovSeries:
    which: str
    times: np.ndarray
    values: np.ndarray
    anchor: Equilibrium

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.values)

    @property
    def increments(self) -> np.ndarray:
        return np.diff(self.values)

    @property
    def max_increment(self) -> float:
        inc = self.increments
        inc = inc[np.isfinite(inc)]
        return float(inc.max()) if len(inc) else 0.0

    @property
    def terminal(self) -> float:
        return float(self.values[-1])


def _positivity(p: Parameters, traj: Trajectory, which: str, idx: np.ndarray) -> np.ndarray:
    S = traj.states
    scale = np.max(np.abs(S), axis=0)
    thresh = GUARD_RTOL * np.where(scale > 0, scale, 1.0)
    ok = np.ones(len(idx), dtype=bool)
    for c in _NEEDS_NOW[which]:
        ok &= S[idx, c] > thresh[c]
    if _NEEDS_WINDOW[which]:
        depth = math.ceil(p.h_bar / traj.step - 1e-9) + 1
        bad = np.zeros(len(S), dtype=bool)
        for c in _NEEDS_WINDOW[which]:
            bad |= ~(S[:, c] > thresh[c])
        ok &= _window_ok(bad, idx, depth)
    return ok


def _values(p: Parameters, traj: Trajectory, which: str, idx: np.ndarray) -> np.ndarray:
    eq = anchor(p, which)
    S = traj.states
    x, y, v, z = (S[idx, c] for c in range(4))
    ok = _positivity(p, traj, which, idx)
    if which == "U0":
        x0 = eq.x
        with np.errstate(divide="ignore", invalid="ignore"):
            head = (p.k_d / p.k) * x0 * _g_unchecked(x / x0) + y + v / p.N_d + p.p / p.q * z
        mem = (p.k_d * _memory(p.f1, traj, S[:, 0] * S[:, 2], idx)
               + p.delta * _memory(p.f2, traj, S[:, 1], idx))
    else:
        xs, ys, vs, zs = eq.x, eq.y, eq.v, eq.z
        scale = p.k_d * xs * vs
        with np.errstate(divide="ignore", invalid="ignore"):
            head = (_g_unchecked(x / xs) / (p.k * vs)
                    + ys / scale * _g_unchecked(y / ys)
                    + vs / (p.N_d * p.delta * ys) * _g_unchecked(v / vs))
            if which == "U1":
                head = head + p.p / (scale * p.q) * z
            else:
                head = head + p.p * zs / (scale * p.q) * _g_unchecked(z / zs)
            gp = _g_unchecked(S[:, 0] * S[:, 2] / (xs * vs))
            gy = _g_unchecked(S[:, 1] / ys)
        # undefined nodes are masked below; keep the antiderivative finite
        gp = np.where(np.isfinite(gp), gp, 0.0)
        gy = np.where(np.isfinite(gy), gy, 0.0)
        mem = _memory(p.f1, traj, gp, idx) + _memory(p.f2, traj, gy, idx)
    out = head + mem
    return np.where(ok, out, np.nan)


def series(p: Parameters, traj: Trajectory, which: str, t_start: float | None = None) -> LyapunovSeries:
    """Functional ``which`` at every node from ``t_start`` (default ``h_bar``)
    to the end; undefined samples are NaN."""
    eq = anchor(p, which)
    if t_start is None:
        t_start = p.h_bar
    first = traj.n_hist + math.ceil(t_start / traj.step - 1e-9)
    idx = np.arange(first, len(traj.states))
    if len(idx) == 0:
        raise LyapunovError("trajectory ends before the requested start time")
    return LyapunovSeries(which, traj.times[idx], _values(p, traj, which, idx), eq)


def _eval(p: Parameters, traj: Trajectory, t: float, which: str) -> float:
    i = traj.index(t)
    if t < p.h_bar - 1e-9 * traj.step:
        raise LyapunovError(f"{which} is evaluated for t >= h_bar = {p.h_bar}")
    val = float(_values(p, traj, which, np.array([i]))[0])
    if not math.isfinite(val):
        raise LyapunovError(f"{which} undefined at t = {t}: positivity fails in the look-back window")
    return val


def eval_u0(p: Parameters, traj: Trajectory, t: float) -> float:
    return _eval(p, traj, t, "U0")


def eval_u1(p: Parameters, traj: Trajectory, t: float) -> float:
    return _eval(p, traj, t, "U1")


def eval_u2(p: Parameters, traj: Trajectory, t: float) -> float:
    return _eval(p, traj, t, "U2")


@dataclass(frozen=True)
class Verdict:
    which: str
    passed: bool
    max_increment: float
    worst_time: float | None
    undefined_tail_fraction: float
    message: str = ""


def certify_monotone(series: LyapunovSeries, eps_mono: float = EPS_MONO) -> Verdict:
    """Pass iff every step ``U(t_{n+1}) - U(t_n) <= eps_mono * max(1, U(t_n))``
    and at most 1% of the second half of the samples is undefined."""
    vals = series.values
    if len(vals) < 2:
        raise LyapunovError("need at least two samples")
    tail = vals[len(vals) // 2:]
    undefined = float(np.mean(~np.isfinite(tail)))
    inc = np.diff(vals)
    allowed = eps_mono * np.maximum(1.0, vals[:-1])
    excess = np.where(np.isfinite(inc), inc - allowed, -np.inf)
    worst = int(np.argmax(excess))
    finite = np.isfinite(inc)
    max_inc = float(inc[finite].max()) if finite.any() else 0.0
    worst_time = float(series.times[worst + 1]) if finite.any() else None
    monotone = not np.any(excess > 0)
    passed = monotone and undefined <= MAX_UNDEFINED_TAIL
    if not monotone:
        msg = f"increase of {inc[worst]:.3e} at t = {worst_time:.6g}"
    elif not passed:
        msg = f"{undefined:.1%} of the tail is undefined"
    else:
        msg = "non-increasing"
    return Verdict(series.which, passed, max_inc, worst_time, undefined, msg)


# {{{ deep verification of the U1 derivative


def u1_derivative(p: Parameters, traj: Trajectory, idx: np.ndarray) -> np.ndarray:
    """Closed-form ``dU1/dt`` at storage positions ``idx``.

    ``-(d x / (k v1 x1)) (1 - x1/x)^2 + C1 + C2`` with
    ``C1 = -g(x1/x) - f1 * g(P_tau / (x1 v1 y~)) - f2 * g(y~_tau / v~)`` and
    ``C2 = p z (y1 - b/q) / (k_d x1 v1)``.
    """
    eq = anchor(p, "U1")
    xs, ys, vs = eq.x, eq.y, eq.v
    S, DR, DL = traj.states, traj.dright, traj.dleft
    x, y, v, z = (S[idx, c] for c in range(4))
    xt, yt, vt = x / xs, y / ys, v / vs

    P = S[:, 0] * S[:, 2] / (xs * vs)
    PR = (DR[:, 0] * S[:, 2] + S[:, 0] * DR[:, 2]) / (xs * vs)
    PL = (DL[:, 0] * S[:, 2] + S[:, 0] * DL[:, 2]) / (xs * vs)
    Yn = S[:, 1] / ys
    YR, YL = DR[:, 1] / ys, DL[:, 1] / ys

    st1 = _stencil.build(p.f1, traj.step, 0.0)
    st2 = _stencil.build(p.f2, traj.step, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean_p = st1.series(P, PR, PL, idx)
        mean_lnp = st1.series(np.log(P), PR / P, PL / P, idx)
        mean_y = st2.series(Yn, YR, YL, idx)
        mean_lny = st2.series(np.log(Yn), YR / Yn, YL / Yn, idx)

    # mass-one identity: f * g(a_tau / c) = (f * a)/c - 1 - f * ln a + ln c
    inf_term = mean_p / yt - 1.0 - mean_lnp + np.log(yt)
    prod_term = mean_y / vt - 1.0 - mean_lny + np.log(vt)
    C1 = -_g_unchecked(1.0 / xt) - inf_term - prod_term
    C2 = p.p * z * (ys - p.b / p.q) / (p.k_d * xs * vs)
    square = -(p.d * x / (p.k * vs * xs)) * (1.0 - xs / x) ** 2
    return square + C1 + C2


@dataclass(frozen=True)
class DecompositionCheck:
    passed: bool
    max_rel_error: float
    checked: int
    sign_ok: bool


def check_u1_decomposition(
    p: Parameters, traj: Trajectory, *, floor: float = 1e-6, rtol: float = 1e-3,
    eps_mono: float = EPS_MONO,
) -> DecompositionCheck:
    """Compare a central difference of the U1 series with :func:`u1_derivative`."""
    ser = series(p, traj, "U1")
    idx = traj.n_hist + np.round(ser.times / traj.step).astype(int)
    u = ser.values
    # fourth-order central difference
    fd = (u[:-4] - 8.0 * u[1:-3] + 8.0 * u[3:-1] - u[4:]) / (12.0 * traj.step)
    inner = idx[2:-2]
    closed = u1_derivative(p, traj, inner)
    sel = np.isfinite(fd) & np.isfinite(closed) & (np.abs(closed) > floor)
    if not np.any(sel):
        return DecompositionCheck(True, 0.0, 0, True)
    rel = np.abs(fd[sel] - closed[sel]) / np.abs(closed[sel])
    sign_ok = bool(np.all(closed[np.isfinite(closed)] <= eps_mono))
    worst = float(rel.max())
    return DecompositionCheck(worst <= rtol and sign_ok, worst, int(sel.sum()), sign_ok)


# }}}
