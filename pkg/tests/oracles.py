"""Reference solutions that share no code with the package.

All of them run scipy's adaptive ``solve_ivp`` at tight tolerances:

* ``ode_solution``: delay-free model (both kernels at lag 0),
* ``steps_solution``: method of steps for ``f1 = dirac(tau)``, ``f2 = dirac(0)``,
* ``window_solution``: ``f1`` uniform on ``[0, w]`` via the auxiliary
  variable ``I = (1/w) int_{t-w}^t x v ds`` with ``I' = (xv(t) - xv(t-w))/w``,
  again integrated by steps of length ``w``.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import quad, solve_ivp

RTOL = 1e-11
ATOL = 1e-12


def _rates(vals: dict[str, float]):
    return (vals["s"], vals["d"], vals["k"], vals["k_d"], vals["delta"], vals["p"],
            vals["N_d"], vals["mu"], vals["q"], vals["b"])


def ode_solution(vals: dict[str, float], y0, T: float, t_eval=None):
    s, d, k, kd, delta, p, Nd, mu, q, b = _rates(vals)

    def f(t, u):
        x, y, v, z = u
        return [s - d * x - k * x * v, kd * x * v - delta * y - p * y * z,
                Nd * delta * y - mu * v, q * y * z - b * z]

    sol = solve_ivp(f, (0.0, T), y0, method="DOP853", rtol=RTOL, atol=ATOL,
                    t_eval=t_eval, dense_output=True)
    assert sol.success
    return sol


def steps_solution(vals: dict[str, float], phi, z0: float, tau: float, T: float):
    """``phi(t) -> (x, y, v)`` on ``[-tau, 0]``; returns a callable state(t) for t in [0, T]."""
    s, d, k, kd, delta, p, Nd, mu, q, b = _rates(vals)
    pieces = []

    def past(t):
        if t <= 0.0:
            x, _, v = phi(t)
            return x * v
        for t0, t1, sol in pieces:
            if t0 <= t <= t1:
                u = sol(t)
                return u[0] * u[2]
        raise ValueError(t)

    state = np.array([*phi(0.0), z0], dtype=float)
    t0 = 0.0
    while t0 < T - 1e-12:
        t1 = min(t0 + tau, T)

        def f(t, u):
            x, y, v, z = u
            return [s - d * x - k * x * v, kd * past(t - tau) - delta * y - p * y * z,
                    Nd * delta * y - mu * v, q * y * z - b * z]

        sol = solve_ivp(f, (t0, t1), state, method="DOP853", rtol=RTOL, atol=ATOL,
                        dense_output=True)
        assert sol.success
        pieces.append((t0, t1, sol.sol))
        state = sol.y[:, -1]
        t0 = t1

    def at(t):
        for a, b_, sol in pieces:
            if a <= t <= b_:
                return sol(t)
        raise ValueError(t)

    return at


def window_solution(vals: dict[str, float], phi, z0: float, w: float, T: float):
    """``f1`` uniform on ``[0, w]``, ``f2 = dirac(0)``; ``phi`` as in :func:`steps_solution`."""
    s, d, k, kd, delta, p, Nd, mu, q, b = _rates(vals)
    pieces = []

    def xv(t):
        if t <= 0.0:
            x, _, v = phi(t)
            return x * v
        for t0, t1, sol in pieces:
            if t0 <= t <= t1:
                u = sol(t)
                return u[0] * u[2]
        raise ValueError(t)

    i0 = quad(lambda th: xv(th), -w, 0.0, epsabs=1e-14, epsrel=1e-13)[0] / w
    state = np.array([*phi(0.0), z0, i0], dtype=float)
    t0 = 0.0
    while t0 < T - 1e-12:
        t1 = min(t0 + w, T)

        def f(t, u):
            x, y, v, z, I = u
            return [s - d * x - k * x * v, kd * I - delta * y - p * y * z,
                    Nd * delta * y - mu * v, q * y * z - b * z,
                    (x * v - xv(t - w)) / w]

        sol = solve_ivp(f, (t0, t1), state, method="DOP853", rtol=RTOL, atol=ATOL,
                        dense_output=True)
        assert sol.success
        pieces.append((t0, t1, sol.sol))
        state = sol.y[:, -1]
        t0 = t1
    return state[:4]


def riemann_convolution(density, atoms, f, t: float, h: float, n: int = 200_000) -> float:
    """Midpoint sum for the density plus exact atom terms."""
    tau = (np.arange(n) + 0.5) * (h / n)
    dens = density(tau)
    total = float(np.sum(dens * f(t - tau)) * (h / n))
    for lag, wgt in atoms:
        total += wgt * float(f(np.array([t - lag]))[0])
    return total
