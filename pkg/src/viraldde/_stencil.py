"""Kernel quadrature expressed as fixed weights on uniform-grid history.

For an evaluation time ``t_b + frac * step`` every quadrature lag falls on a
grid node, inside a past grid interval (cubic Hermite on node values and
node derivatives), or inside the not-yet-computed interval ``(t_b, t_b +
frac * step)`` (linear between the node ``t_b`` and the evaluation point's own
value). All three are linear in the stored data, so the convolution reduces
to a few dot products with precomputed weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from viraldde.kernels import DelayKernel, quadrature

_NODE_TOL = 1e-9


@dataclass(frozen=True)
class Stencil:
    """Weights over nodes ``b - depth + 1 .. b`` (ascending order)."""

    own: float
    value: np.ndarray
    dright: np.ndarray
    dleft: np.ndarray
    uses_derivatives: bool

    @property
    def depth(self) -> int:
        return len(self.value)

    def at(self, own: float, u: np.ndarray, dr: np.ndarray, dl: np.ndarray, b: int) -> float:
        """Evaluate at storage index ``b`` (arrays indexed by storage position)."""
        lo = b - self.depth + 1
        if lo < 0:
            raise IndexError("interpolation window underflow")
        acc = self.own * own + np.dot(self.value, u[lo:b + 1])
        if self.uses_derivatives:
            acc += np.dot(self.dright, dr[lo:b + 1]) + np.dot(self.dleft, dl[lo:b + 1])
        return acc

    def series(self, u: np.ndarray, dr: np.ndarray, dl: np.ndarray, idx: np.ndarray) -> np.ndarray:
        """Evaluate at many node indices at once, own value taken as ``u[idx]``."""
        idx = np.asarray(idx)
        if len(idx) and idx.min() - self.depth + 1 < 0:
            raise IndexError("interpolation window underflow")
        out = self.own * u[idx]
        top = self.depth - 1
        for coef, data in ((self.value, u), (self.dright, dr), (self.dleft, dl)):
            for j in np.flatnonzero(coef):
                out = out + coef[j] * data[idx - (top - j)]
        return out


def _hermite(theta: float) -> tuple[float, float, float, float]:
    t2 = theta * theta
    t3 = t2 * theta
    return 2 * t3 - 3 * t2 + 1, t3 - 2 * t2 + theta, -2 * t3 + 3 * t2, t3 - t2


def build(kernel: DelayKernel, step: float, frac: float) -> Stencil:
    """Weights for the kernel integral evaluated ``frac * step`` past node ``b``.

    ``frac`` is 0, 1/2 or 1 for the Runge-Kutta stages; ``frac = 0`` reads the
    interval ending at ``b`` with both of its node derivatives, so it is only
    valid once the left derivative at ``b`` is known.
    """
    lags, weights = quadrature(kernel, step, frac * step)
    ahead = frac * step
    depth = int(np.ceil(max(lags.max(), ahead) / step - frac)) + 2
    value = np.zeros(depth)
    dright = np.zeros(depth)
    dleft = np.zeros(depth)
    own = 0.0
    tol = _NODE_TOL * step

    def node(j: int) -> int:
        # j steps back from b -> ascending position
        return depth - 1 - j

    for lag, w in zip(lags, weights):
        if lag <= tol:
            own += w
            continue
        if frac > 0.0 and lag < ahead - tol:
            theta = lag / ahead
            own += w * (1.0 - theta)
            value[node(0)] += w * theta
            continue
        r = frac - lag / step
        ri = round(r)
        if abs(r - ri) <= _NODE_TOL:
            value[node(-ri)] += w
            continue
        j0 = int(np.floor(r))
        theta = r - j0
        h00, h10, h01, h11 = _hermite(theta)
        value[node(-j0)] += w * h00
        dright[node(-j0)] += w * step * h10
        value[node(-j0 - 1)] += w * h01
        dleft[node(-j0 - 1)] += w * step * h11

    touched = np.flatnonzero((value != 0) | (dright != 0) | (dleft != 0))
    first = touched.min() if len(touched) else depth - 1
    return Stencil(
        own=own,
        value=value[first:].copy(),
        dright=dright[first:].copy(),
        dleft=dleft[first:].copy(),
        uses_derivatives=bool(np.any(dright) or np.any(dleft)),
    )
