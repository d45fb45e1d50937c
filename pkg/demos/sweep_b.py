"""Sweep the CTL decay rate across the r1 = 1 threshold.

Run with ``python3 demos/sweep_b.py``; the same grid is available as
``viraldde sweep --scenario src/viraldde/scenarios/sweep_b.toml``.
"""

from __future__ import annotations

import warnings

from viraldde import cli, scenario


def main() -> None:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        sc = scenario.load(scenario.builtin("sweep_b"))
    print(",".join(cli.SWEEP_HEADER))
    for row in cli.run_sweep(sc, workers=2):
        print(",".join(row))


if __name__ == "__main__":
    main()
