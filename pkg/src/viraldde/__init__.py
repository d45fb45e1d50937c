"""Distributed-delay within-host viral model with CTL response."""

from viraldde.kernels import DelayKernel, make_dirac, make_uniform
from viraldde.model import Parameters, classify, equilibria, r0, r1
from viraldde.simulate import InitialData, integrate, monitor

__all__ = [
    "DelayKernel",
    "InitialData",
    "Parameters",
    "classify",
    "equilibria",
    "integrate",
    "make_dirac",
    "make_uniform",
    "monitor",
    "r0",
    "r1",
]
