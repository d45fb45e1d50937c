from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import riemann_convolution
from viraldde import kernels
from viraldde.kernels import DelayKernel, KernelError


def test_uniform_value_and_mass():
    k = kernels.make_uniform(2.0)
    assert k.is_discrete is False
    assert np.allclose(k.density_at([0.0, 0.7, 2.0]), 0.5)
    assert kernels.mass(k) == 1.0
    assert k.support_bound == 2.0
    assert np.allclose(kernels.make_uniform(1.0).density[:, 1], 1.0)


@pytest.mark.parametrize("h", [0.0, -1.0])
def test_uniform_rejects_nonpositive_width(h):
    with pytest.raises(KernelError):
        kernels.make_uniform(h)


def test_dirac():
    k = kernels.make_dirac(1.5)
    assert k.atoms.tolist() == [[1.5, 1.0]]
    assert len(k.density) == 0
    assert k.support_bound == 1.5
    assert kernels.make_dirac(0.0).support_bound == 0.0
    with pytest.raises(KernelError):
        kernels.make_dirac(-1.0)


def test_mixed_mass_is_trapezoid_plus_atoms():
    k = kernels.make_table(rows=[(0.0, 0.25), (2.0, 0.25)], atoms=[(1.0, 0.5)])
    assert kernels.mass(k) == pytest.approx(1.0, abs=1e-15)


@pytest.mark.parametrize(
    "atoms, density",
    [
        ([], []),
        ([(1.0, 0.5)], []),
        ([(1.0, -1.0), (2.0, 2.0)], []),
        ([(2.0, 0.5), (1.0, 0.5)], []),
        ([(-0.5, 1.0)], []),
        ([], [(0.0, 1.0)]),
        ([], [(0.0, 2.0), (1.0, -0.0), (2.0, -1.0)]),
        ([(0.0, float("nan"))], []),
    ],
)
def test_invalid_kernels(atoms, density):
    with pytest.raises(KernelError):
        DelayKernel(atoms=atoms, density=density)


def test_arrays_are_read_only():
    k = kernels.make_uniform(1.0)
    with pytest.raises(ValueError):
        k.density[0, 1] = 3.0


def test_normalize_and_tabulate():
    raw = kernels.tabulate(lambda t: np.exp(-t), 3.0, n=301)
    assert kernels.mass(raw) == pytest.approx(1.0, abs=1e-12)
    assert raw.support_bound == 3.0


def test_centered_uniform():
    k = kernels.make_centered_uniform(1.0, 0.4)
    assert k.density[0, 0] == pytest.approx(0.8)
    assert k.support_bound == pytest.approx(1.2)


def test_convolve_constant_is_identity():
    for k in (kernels.make_uniform(2.0), kernels.make_dirac(0.3),
              kernels.make_table(rows=[(0.0, 0.25), (2.0, 0.25)], atoms=[(1.0, 0.5)])):
        assert kernels.convolve(k, lambda t: np.full_like(t, 3.25), 5.0) == pytest.approx(3.25, rel=1e-14)


def test_convolve_dirac_is_shift():
    f = np.sin
    assert kernels.convolve(kernels.make_dirac(0.7), f, 2.0) == pytest.approx(math.sin(1.3), abs=1e-15)


def test_convolve_linear_is_exact_on_uniform():
    # trapezoid is exact for linear integrands against a constant density
    val = kernels.convolve(kernels.make_uniform(2.0), lambda t: 3.0 * t + 1.0, 4.0)
    assert val == pytest.approx(3.0 * (4.0 - 1.0) + 1.0, rel=1e-14)


def test_convolve_matches_riemann_oracle():
    # density mass 0.6 plus an atom of 0.4
    k = kernels.make_table(rows=[(0.0, 0.1), (1.0, 0.5), (2.0, 0.1)], atoms=[(0.5, 0.4)])
    f = lambda t: np.exp(np.sin(t))
    exact = riemann_convolution(k.density_at, k.atoms.tolist(), f, 3.0, 2.0)
    for step in (0.01, 0.005):
        got = kernels.convolve(k, f, 3.0, step=step)
        assert got == pytest.approx(exact, rel=2e-5 * (step / 0.01) ** 2)


def test_convolve_vector_valued():
    val = kernels.convolve(kernels.make_uniform(1.0), lambda t: np.column_stack([t, 2 * t]), 1.0)
    assert val.shape == (2,)
    assert val == pytest.approx([0.5, 1.0])


def test_convolve_wraps_unavailable_history():
    def f(t):
        raise ValueError("no history")

    with pytest.raises(KernelError):
        kernels.convolve(kernels.make_uniform(1.0), f, 0.0)


def test_quadrature_includes_grid_nodes():
    lags, w = kernels.quadrature(kernels.make_uniform(1.0), step=0.25, offset=0.1)
    assert np.allclose(np.sort(lags), [0.0, 0.1, 0.35, 0.6, 0.85, 1.0])
    assert w.sum() == pytest.approx(1.0, abs=1e-15)


weights = st.lists(st.floats(0.01, 10.0), min_size=1, max_size=5)


@given(weights, st.floats(0.1, 5.0))
def test_normalized_tables_have_unit_mass(raw, h):
    lags = np.linspace(0.0, h, len(raw) + 1)
    vals = np.append(raw, raw[-1])
    k = kernels.tabulate(lambda t: np.interp(t, lags, vals), h, n=len(lags))
    assert abs(kernels.mass(k) - 1.0) <= 1e-12
    assert np.all(k.density[:, 1] >= 0)


@given(st.floats(0.05, 3.0), st.floats(-5.0, 5.0), st.floats(-5.0, 5.0), st.floats(0.0, 10.0))
def test_convolve_is_linear_and_exact_for_affine(h, a, c, t):
    k = kernels.make_uniform(h)
    mean_lag = 0.5 * h
    got = kernels.convolve(k, lambda s: a * s + c, t)
    assert got == pytest.approx(a * (t - mean_lag) + c, abs=1e-10 * (1 + abs(a) * (t + h) + abs(c)))
