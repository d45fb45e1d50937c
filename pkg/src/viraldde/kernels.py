"""Delay kernels: normalized lag distributions on a bounded interval.

A kernel is a finite set of point masses (discrete delays) plus an optional
piecewise-linear density tabulated on a strictly increasing lag grid. The
density is zero outside its grid, so a uniform window ``[a, b]`` is stored as
the two rows ``(a, 1/(b-a))`` and ``(b, 1/(b-a))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

MASS_TOL = 1e-12
# lags closer than this (relative to the larger of the two) are merged
_MERGE_RTOL = 1e-9


class KernelError(ValueError):
    pass


def _as_pairs(rows: Sequence[Sequence[float]]) -> np.ndarray:
    arr = np.asarray(rows, dtype=float)
    if arr.size == 0:
        return np.zeros((0, 2))
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise KernelError(f"expected (lag, value) rows, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class DelayKernel:
    """Normalized delay distribution: atoms plus a tabulated density.

    Parameters
    ----------
    atoms : array of shape (m, 2)
        Rows ``(lag, weight)``; lags strictly increasing, weights positive.
    density : array of shape (n, 2)
        Rows ``(lag, value)`` on a strictly increasing grid, interpreted
        piecewise-linearly and zero outside ``[density[0,0], density[-1,0]]``.
        May be empty.
    """

    atoms: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    density: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))

    def __post_init__(self) -> None:
        atoms = _as_pairs(self.atoms)
        density = _as_pairs(self.density)
        atoms.flags.writeable = False
        density.flags.writeable = False
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "density", density)

        if len(atoms) == 0 and len(density) == 0:
            raise KernelError("kernel has neither atoms nor density")
        if len(density) == 1:
            raise KernelError("a density needs at least two grid points")
        for name, arr in (("atom", atoms), ("density", density)):
            if len(arr) and not np.all(np.isfinite(arr)):
                raise KernelError(f"non-finite {name} entries")
            if len(arr) and np.any(arr[:, 0] < 0.0):
                raise KernelError(f"negative {name} lag")
            if len(arr) > 1 and np.any(np.diff(arr[:, 0]) <= 0.0):
                raise KernelError(f"{name} lags must be strictly increasing")
        if len(atoms) and np.any(atoms[:, 1] <= 0.0):
            raise KernelError("atom weights must be positive")
        if len(density) and np.any(density[:, 1] < 0.0):
            raise KernelError("density values must be nonnegative")

        total = mass(self)
        if abs(total - 1.0) > MASS_TOL:
            raise KernelError(
                f"kernel mass is {total!r}, expected 1 (use normalize() to rescale)"
            )

    @property
    def support_bound(self) -> float:
        """Largest lag carrying mass (the ``h`` of the kernel)."""
        ends = []
        if len(self.atoms):
            ends.append(self.atoms[-1, 0])
        if len(self.density):
            ends.append(self.density[-1, 0])
        return float(max(ends))

    @property
    def is_discrete(self) -> bool:
        return len(self.density) == 0

    def density_at(self, lag: np.ndarray | float) -> np.ndarray:
        """Piecewise-linear density, zero outside its grid."""
        if len(self.density) == 0:
            return np.zeros_like(np.asarray(lag, dtype=float))
        lags, vals = self.density[:, 0], self.density[:, 1]
        return np.interp(lag, lags, vals, left=0.0, right=0.0)


def _unchecked(atoms: np.ndarray, density: np.ndarray) -> DelayKernel:
    k = object.__new__(DelayKernel)
    atoms = _as_pairs(atoms)
    density = _as_pairs(density)
    atoms.flags.writeable = False
    density.flags.writeable = False
    object.__setattr__(k, "atoms", atoms)
    object.__setattr__(k, "density", density)
    return k


def make_uniform(h: float, start: float = 0.0) -> DelayKernel:
    """Uniform density ``1/h`` on ``[start, start + h]``."""
    if not h > 0.0:
        raise KernelError(f"uniform kernel width must be positive, got {h!r}")
    if start < 0.0:
        raise KernelError(f"uniform kernel start must be nonnegative, got {start!r}")
    return DelayKernel(density=[(start, 1.0 / h), (start + h, 1.0 / h)])


def make_centered_uniform(center: float, width: float) -> DelayKernel:
    return make_uniform(width, start=center - 0.5 * width)


def make_dirac(tau: float) -> DelayKernel:
    """Single discrete delay at ``tau`` (``tau = 0`` gives the delay-free model)."""
    if not tau >= 0.0:
        raise KernelError(f"discrete delay must be nonnegative, got {tau!r}")
    return DelayKernel(atoms=[(tau, 1.0)])


def make_table(
    rows: Sequence[Sequence[float]] = (),
    atoms: Sequence[Sequence[float]] = (),
) -> DelayKernel:
    return DelayKernel(atoms=atoms, density=rows)


def tabulate(pdf: Callable[[np.ndarray], np.ndarray], h: float, n: int = 201) -> DelayKernel:
    """Sample ``pdf`` on ``n`` equally spaced lags in ``[0, h]`` and normalize."""
    if not h > 0.0 or n < 2:
        raise KernelError("tabulate needs h > 0 and at least two samples")
    lags = np.linspace(0.0, h, n)
    vals = np.asarray(pdf(lags), dtype=float)
    return normalize(_unchecked(np.zeros((0, 2)), np.column_stack([lags, vals])))


def mass(k: DelayKernel) -> float:
    """Atom weights plus the trapezoid integral of the density."""
    total = float(np.sum(k.atoms[:, 1])) if len(k.atoms) else 0.0
    if len(k.density):
        total += float(np.trapezoid(k.density[:, 1], k.density[:, 0]))
    return total


def normalize(k: DelayKernel) -> DelayKernel:
    """Rescale atoms and density so the total mass is one."""
    total = mass(k)
    if not total > 0.0:
        raise KernelError("cannot normalize a kernel with zero mass")
    atoms = k.atoms.copy()
    density = k.density.copy()
    if len(atoms):
        atoms[:, 1] /= total
    if len(density):
        density[:, 1] /= total
    return DelayKernel(atoms=atoms, density=density)


def _merge_sorted(values: np.ndarray) -> np.ndarray:
    values = np.sort(values)
    if len(values) < 2:
        return values
    scale = np.maximum(np.abs(values[1:]), np.abs(values[:-1]))
    keep = np.ones(len(values), dtype=bool)
    keep[1:] = np.diff(values) > _MERGE_RTOL * np.maximum(scale, 1.0)
    return values[keep]


def density_nodes(
    k: DelayKernel, step: float | None = None, offset: float = 0.0
) -> np.ndarray:
    """Quadrature lags for the density part.

    The node set is the density grid, plus (when ``step`` is given) every lag
    ``offset + i * step`` inside the density's range, i.e. the trajectory grid
    as seen from an evaluation time that sits ``offset`` past a grid node.
    """
    if len(k.density) == 0:
        return np.zeros(0)
    lo, hi = k.density[0, 0], k.density[-1, 0]
    nodes = [k.density[:, 0]]
    if step is not None:
        i0 = int(np.ceil((lo - offset) / step))
        i1 = int(np.floor((hi - offset) / step))
        if i1 >= i0:
            grid = offset + step * np.arange(i0, i1 + 1)
            nodes.append(grid[(grid > lo) & (grid < hi)])
    return _merge_sorted(np.concatenate(nodes))


def quadrature(
    k: DelayKernel, step: float | None = None, offset: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """Lags and weights such that ``sum(w * f(t - lag))`` approximates the
    kernel integral of ``f``. Atoms enter with their weights; the density
    with composite trapezoid weights on :func:`density_nodes`.
    """
    lags = [k.atoms[:, 0]]
    weights = [k.atoms[:, 1]]
    nodes = density_nodes(k, step, offset)
    if len(nodes):
        rho = k.density_at(nodes)
        widths = np.diff(nodes)
        w = np.zeros_like(nodes)
        w[:-1] += 0.5 * widths
        w[1:] += 0.5 * widths
        lags.append(nodes)
        weights.append(w * rho)
    return np.concatenate(lags), np.concatenate(weights)


def convolve(
    k: DelayKernel,
    f: Callable[[np.ndarray], np.ndarray],
    t: float,
    step: float | None = None,
) -> np.ndarray:
    """Approximate ``int_0^h k(tau) f(t - tau) dtau``.

    ``f`` is called once with the array of sample times and may return
    an array of shape ``(n,)`` or ``(n, m)``. With ``step``, the trajectory
    grid ``j * step`` restricted to the support joins the quadrature nodes.
    """
    offset = 0.0
    if step is not None:
        offset = t - step * np.floor(t / step + _MERGE_RTOL)
        if offset < _MERGE_RTOL * step:
            offset = 0.0
    lags, weights = quadrature(k, step, offset)
    times = t - lags
    try:
        values = np.asarray(f(times), dtype=float)
    except ValueError as exc:
        raise KernelError(f"integrand not evaluable on [{t - k.support_bound}, {t}]") from exc
    return np.tensordot(weights, values, axes=(0, 0))
