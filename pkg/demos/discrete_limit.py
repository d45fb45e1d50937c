"""A single intracellular delay as the limit of narrowing uniform kernels.

Run with ``python3 demos/discrete_limit.py``.
"""

from __future__ import annotations

import numpy as np

from viraldde import kernels, model, simulate
from viraldde.simulate import InitialData, Ramp

SCALARS = dict(s=10.0, d=0.1, k=0.5, delta=1.0, p=1.0, N=10.0, mu=5.0, q=0.2, b=0.5)


def main() -> None:
    # a delay tau reduces the effective infection rate to k exp(-delta tau)
    p = model.from_discrete(**SCALARS, tau=1.0)
    print(f"k_d = {p.k_d:.6g}, r0 = {model.r0(p):.6g}, regime {model.classify(p).label.value}")

    init = InitialData(20.0, 1.0, Ramp(2.0, 1.0), z0=1.0)
    ref = simulate.integrate(p, init, 20.0, 0.05).terminal
    for w in (0.8, 0.4, 0.2, 0.1):
        pw = p.with_values(f1=kernels.make_centered_uniform(1.0, w))
        term = simulate.integrate(pw, init, 20.0, 0.05).terminal
        dist = np.max(np.abs(term - ref)) / np.max(np.abs(ref))
        print(f"width {w:<4} terminal distance to the single-delay run {dist:.3e}")


if __name__ == "__main__":
    main()
