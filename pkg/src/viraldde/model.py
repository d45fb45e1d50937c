r"""Parameters, threshold quantities and equilibria of the delayed CTL model.

The state is ``(x, y, v, z)``: uninfected target cells, productively infected
cells, free virus and virus-specific CTLs.

.. math::

    x' &= s - d x - k x v \\
    y' &= k_d \int_0^{h_1} f_1(\tau) x(t-\tau) v(t-\tau) d\tau - \delta y - p y z \\
    v' &= N_d \delta \int_0^{h_2} f_2(\tau) y(t-\tau) d\tau - \mu v \\
    z' &= q y z - b z
"""

from __future__ import annotations

import math
import numbers
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Callable

import numpy as np

from viraldde import kernels
from viraldde.kernels import DelayKernel

SCALARS = ("s", "d", "k", "k_d", "delta", "p", "N", "N_d", "mu", "q", "b")


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class Parameters:
    """One model instance: eleven positive rates and two delay kernels."""

    s: float
    d: float
    k: float
    k_d: float
    delta: float
    p: float
    N: float
    N_d: float
    mu: float
    q: float
    b: float
    f1: DelayKernel = field(default_factory=lambda: kernels.make_dirac(0.0))
    f2: DelayKernel = field(default_factory=lambda: kernels.make_dirac(0.0))

    def __post_init__(self) -> None:
        for name in SCALARS:
            value = getattr(self, name)
            if not (isinstance(value, numbers.Real) and not isinstance(value, bool)
                    and math.isfinite(value) and value > 0):
                raise ParameterError(f"{name} must be a positive finite number, got {value!r}")
            object.__setattr__(self, name, float(value))
        if self.k_d > self.k:
            raise ParameterError(f"k_d = {self.k_d} exceeds k = {self.k}")
        if self.N_d > self.N:
            raise ParameterError(f"N_d = {self.N_d} exceeds N = {self.N}")
        for name in ("f1", "f2"):
            if not isinstance(getattr(self, name), DelayKernel):
                raise ParameterError(f"{name} must be a DelayKernel")

    @property
    def h_bar(self) -> float:
        return max(self.f1.support_bound, self.f2.support_bound)

    def with_values(self, **changes) -> Parameters:
        return replace(self, **changes)

    def scalars(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in SCALARS}


def sanity_warnings(p: Parameters) -> list[str]:
    """Heuristic unit checks; never fatal."""
    out = []
    if p.b / p.q >= p.s / p.d:
        out.append(
            f"CTL activation level b/q = {p.b / p.q:.6g} is at or above the "
            f"uninfected carrying level s/d = {p.s / p.d:.6g}; check units of q and b"
        )
    return out


def warn_if_implausible(p: Parameters) -> None:
    for msg in sanity_warnings(p):
        warnings.warn(msg, stacklevel=2)


class Label(str, Enum):
    E0 = "E0"
    E1 = "E1"
    E2 = "E2"


class RegimeLabel(str, Enum):
    CLEARANCE = "Clearance"
    CHRONIC_NO_IMMUNE = "ChronicNoImmune"
    CHRONIC_WITH_IMMUNE = "ChronicWithImmune"

    @property
    def equilibrium(self) -> Label:
        return {
            RegimeLabel.CLEARANCE: Label.E0,
            RegimeLabel.CHRONIC_NO_IMMUNE: Label.E1,
            RegimeLabel.CHRONIC_WITH_IMMUNE: Label.E2,
        }[self]


@dataclass(frozen=True)
class Equilibrium:
    label: Label
    x: float
    y: float
    v: float
    z: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "label", Label(self.label))
        comps = (self.x, self.y, self.v, self.z)
        if any(c < 0 for c in comps):
            raise ValueError(f"negative component in {self.label.value}: {comps}")
        if self.label is Label.E0 and (self.y, self.v, self.z) != (0.0, 0.0, 0.0):
            raise ValueError("E0 must have y = v = z = 0")
        if self.label is Label.E1 and self.z != 0.0:
            raise ValueError("E1 must have z = 0")

    @property
    def state(self) -> np.ndarray:
        return np.array([self.x, self.y, self.v, self.z])


@dataclass(frozen=True)
class Regime:
    r0: float
    r1: float
    label: RegimeLabel


def r0(p: Parameters) -> float:
    """Basic reproduction number for viral infection."""
    return p.s / (p.d * p.mu / (p.k_d * p.N_d))


def _r1_denominator(p: Parameters) -> float:
    return p.d * p.mu / (p.k_d * p.N_d) + (p.k / p.k_d) * p.delta * p.b / p.q


def r1(p: Parameters) -> float:
    """Reproduction number for the CTL response; always below :func:`r0`."""
    return p.s / _r1_denominator(p)


def equilibrium_uninfected(p: Parameters) -> Equilibrium:
    return Equilibrium(Label.E0, p.s / p.d, 0.0, 0.0, 0.0)


def equilibrium_no_immune(p: Parameters) -> Equilibrium | None:
    if r0(p) <= 1.0:
        return None
    x1 = p.mu / (p.k_d * p.N_d)
    excess = p.s - p.d * x1
    y1 = p.k_d / (p.k * p.delta) * excess
    v1 = p.k_d * p.N_d / (p.k * p.mu) * excess
    return Equilibrium(Label.E1, x1, y1, v1, 0.0)


def equilibrium_immune(p: Parameters) -> Equilibrium | None:
    if r1(p) <= 1.0:
        return None
    y2 = p.b / p.q
    v2 = p.N_d * p.delta / p.mu * y2
    x2 = p.s / (p.d + p.k * v2)
    z2 = p.delta / p.p * (p.k_d * p.N_d * x2 / p.mu - 1.0)
    return Equilibrium(Label.E2, x2, y2, v2, z2)


def equilibria(p: Parameters) -> dict[Label, Equilibrium]:
    """All equilibria that exist for ``p``, keyed by label."""
    found = {Label.E0: equilibrium_uninfected(p)}
    for eq in (equilibrium_no_immune(p), equilibrium_immune(p)):
        if eq is not None:
            found[eq.label] = eq
    return found


def classify(p: Parameters) -> Regime:
    """Which equilibrium attracts admissible solutions. Ties go to the
    lower regime (``r0 == 1`` is clearance, ``r1 == 1`` has no immune response)."""
    a, b = r0(p), r1(p)
    if a <= 1.0:
        label = RegimeLabel.CLEARANCE
    elif b <= 1.0:
        label = RegimeLabel.CHRONIC_NO_IMMUNE
    else:
        label = RegimeLabel.CHRONIC_WITH_IMMUNE
    return Regime(a, b, label)


@dataclass(frozen=True)
class OrderingReport:
    x1: float
    x2: float
    y1: float
    y2: float
    x_gap: float
    x_gap_predicted: float
    x_gap_rel_error: float
    ok: bool


def ordering_check(p: Parameters, rtol: float = 1e-10) -> OrderingReport:
    """Compare the two infected equilibria when both exist.

    Immune activation raises the uninfected level and lowers the infected
    level; the uninfected gap equals ``mu/(k_d N_d) (r1 - 1)``.
    """
    e1, e2 = equilibrium_no_immune(p), equilibrium_immune(p)
    if e2 is None or e1 is None:
        raise ParameterError(f"ordering check needs r1 > 1, got r1 = {r1(p)!r}")
    gap = e2.x - e1.x
    predicted = p.mu / (p.k_d * p.N_d) * (r1(p) - 1.0)
    rel = abs(gap - predicted) / abs(predicted)
    ok = e2.x > e1.x and e1.y > e2.y and rel <= rtol
    return OrderingReport(e1.x, e2.x, e1.y, e2.y, gap, predicted, rel, ok)


History = Callable[[np.ndarray], np.ndarray]


def rhs(p: Parameters, t: float, current: np.ndarray, history: History) -> np.ndarray:
    """Vector field at time ``t``.

    ``history`` maps an array of times ``<= t`` to an ``(n, 4)`` array of
    states; zero-lag samples use ``current``.
    """
    current = np.asarray(current, dtype=float)
    x, y, v, z = current

    def states(times: np.ndarray) -> np.ndarray:
        times = np.asarray(times, dtype=float)
        out = np.empty((len(times), 4))
        now = times >= t
        out[now] = current
        if np.any(~now):
            out[~now] = np.asarray(history(times[~now]), dtype=float).reshape(-1, 4)
        return out

    infection = kernels.convolve(p.f1, lambda ts: np.prod(states(ts)[:, [0, 2]], axis=1), t)
    production = kernels.convolve(p.f2, lambda ts: states(ts)[:, 1], t)
    return np.array([
        p.s - p.d * x - p.k * x * v,
        p.k_d * infection - p.delta * y - p.p * y * z,
        p.N_d * p.delta * production - p.mu * v,
        p.q * y * z - p.b * z,
    ])


def rhs_terms(p: Parameters, state: np.ndarray) -> np.ndarray:
    """Largest term magnitude in each equation at a constant state; the
    natural scale for equilibrium residuals."""
    x, y, v, z = state
    return np.array([
        max(p.s, p.d * x, p.k * x * v),
        max(p.k_d * x * v, p.delta * y, p.p * y * z),
        max(p.N_d * p.delta * y, p.mu * v),
        max(p.q * y * z, p.b * z),
    ])


def from_discrete(
    s: float, d: float, k: float, delta: float, p: float, N: float,
    mu: float, q: float, b: float, tau: float,
) -> Parameters:
    """Single intracellular delay ``tau`` with survival factor ``exp(-delta tau)``
    on infection and instantaneous virus production."""
    if not tau >= 0.0:
        raise ParameterError(f"tau must be nonnegative, got {tau!r}")
    try:
        k_d = k * math.exp(-delta * tau)
    except TypeError as exc:
        raise ParameterError("discrete-model scalars must be numbers") from exc
    return Parameters(
        s=s, d=d, k=k, k_d=k_d, delta=delta, p=p, N=N, N_d=N, mu=mu, q=q, b=b,
        f1=kernels.make_dirac(tau), f2=kernels.make_dirac(0.0),
    )


def discrete_thresholds(
    s: float, d: float, k: float, delta: float, N: float, mu: float, q: float,
    b: float, tau: float,
) -> tuple[float, float]:
    """Closed-form thresholds of the single-delay model, written directly in
    its own parameters."""
    surviving = k * math.exp(-delta * tau)
    rbar0 = s / (d * mu / (surviving * N))
    rbar1 = s / (d * mu / (surviving * N) + math.exp(delta * tau) * delta * b / q)
    return rbar0, rbar1
