"""Reproduction numbers, regimes and equilibria for three parameter sets.

Run with ``python3 demos/thresholds.py``.
"""

from __future__ import annotations

from viraldde import model
from viraldde.model import Parameters

BASE = dict(s=10.0, d=0.1, k=0.5, k_d=0.5, delta=1.0, p=1.0, N=10.0, N_d=10.0,
            mu=5.0, q=0.2, b=0.5)


def describe(name: str, p: Parameters) -> None:
    reg = model.classify(p)
    print(f"{name}: r0 = {reg.r0:.4g}, r1 = {reg.r1:.4g} -> {reg.label.value}")
    for label, eq in model.equilibria(p).items():
        print(f"    {label.value} = ({', '.join(f'{c:.4g}' for c in eq.state)})")


def main() -> None:
    # a strong CTL response (small b) keeps r1 above one
    describe("immune control", Parameters(**BASE))
    # a fast-decaying CTL pool cannot be sustained
    describe("no CTL response", Parameters(**{**BASE, "b": 5.0}))
    # a low target-cell supply puts r0 below one
    describe("clearance", Parameters(**{**BASE, "s": 0.05}))

    # raising b lowers r1 and moves x2 towards x1
    print("\nb      r1       x2 - x1   predicted")
    for b in (0.1, 0.5, 1.0, 1.9):
        p = Parameters(**{**BASE, "b": b})
        rep = model.ordering_check(p)
        print(f"{b:<6} {model.r1(p):<8.4g} {rep.x_gap:<9.4g} {rep.x_gap_predicted:.4g}")


if __name__ == "__main__":
    main()
