"""Evaluate the regime-matched Lyapunov functional along a simulated run.

Run with ``python3 demos/lyapunov_certification.py``.
"""

from __future__ import annotations

from viraldde import kernels, lyapunov, model, simulate, verify
from viraldde.model import Parameters
from viraldde.simulate import InitialData, Ramp

BASE = dict(s=10.0, d=0.1, k=0.5, k_d=0.5, delta=1.0, p=1.0, N=10.0, N_d=10.0,
            mu=5.0, q=0.2, b=0.5)


def certify(name: str, p: Parameters) -> None:
    init = InitialData(20.0, 1.0, Ramp(2.0, 1.0), z0=1.0)
    traj = simulate.integrate(p, init, T=300.0, step=0.05)
    which = verify.matched_functional(model.classify(p).label)
    ser = lyapunov.series(p, traj, which)
    v = lyapunov.certify_monotone(ser)
    print(f"{name}: {which} from {ser.values[0]:.4g} down to {ser.terminal:.3g}, "
          f"largest increment {v.max_increment:.2e} -> {'pass' if v.passed else 'fail'}")


def main() -> None:
    f1, f2 = kernels.make_uniform(1.0), kernels.make_dirac(0.5)
    certify("immune control", Parameters(**BASE, f1=f1, f2=f2))
    certify("no CTL response", Parameters(**{**BASE, "b": 5.0}, f1=f1, f2=f2))
    certify("clearance", Parameters(**{**BASE, "s": 0.05}, f1=f1, f2=f2))

    # along a ChronicNoImmune run the closed-form derivative of U1 matches
    # a finite difference of the evaluated functional and stays nonpositive
    p = Parameters(**{**BASE, "b": 5.0, "k_d": 0.4, "N_d": 8.0}, f1=f1, f2=f2)
    traj = simulate.integrate(p, InitialData(20.0, 1.0, Ramp(2.0, 1.0), 1.0), 60.0, 0.01)
    chk = lyapunov.check_u1_decomposition(p, traj)
    print(f"dU1/dt decomposition: max relative error {chk.max_rel_error:.2e} over "
          f"{chk.checked} samples, sign ok: {chk.sign_ok}")


if __name__ == "__main__":
    main()
