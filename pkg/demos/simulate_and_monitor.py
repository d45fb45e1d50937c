"""Integrate one infection with distributed delays and read the monitor report.

Run with ``python3 demos/simulate_and_monitor.py``.
"""

from __future__ import annotations

from viraldde import kernels, model, simulate
from viraldde.model import Parameters
from viraldde.simulate import InitialData, Ramp


def main() -> None:
    p = Parameters(
        s=10.0, d=0.1, k=0.5, k_d=0.5, delta=1.0, p=1.0, N=10.0, N_d=10.0, mu=5.0, q=0.2, b=0.5,
        f1=kernels.make_uniform(1.0),   # infection-to-production delay spread over [0, 1]
        f2=kernels.make_dirac(0.5),     # virion maturation takes exactly 0.5
    )
    init = InitialData(20.0, 1.0, Ramp(2.0, 1.0), z0=1.0)
    print("admissible:", simulate.check_admissibility(init, p))

    traj = simulate.integrate(p, init, T=300.0, step=0.05)
    rep = simulate.monitor(p, traj)
    print(rep.to_text())

    e2 = model.equilibrium_immune(p)
    print("predicted E2:", ", ".join(f"{c:.6g}" for c in e2.state))
    print("terminal    :", ", ".join(f"{c:.6g}" for c in traj.terminal))

    # the viral load over the first 30 time units
    for t in range(0, 31, 5):
        x, y, v, z = traj.states[traj.index(float(t))]
        print(f"t = {t:>2}  x = {x:8.4f}  y = {y:8.4f}  v = {v:8.4f}  z = {z:8.4f}")


if __name__ == "__main__":
    main()
