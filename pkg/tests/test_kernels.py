import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from seqkrotov.kernels import (
    gauss_legendre_unit,
    kernel_exact,
    kernel_first_order,
    kernel_series_direct,
    kernel_series_paired,
    trace_kernel_series,
)
from seqkrotov.operators import eig_skew_hermitian

from conftest import random_hermitian

SZ = np.diag([1.0, -1.0]).astype(complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)


def quadrature_kernel(b, h_m, dt, n=2000):
    """Trapezoidal rule on ``n`` points of the defining integral."""
    taus = np.linspace(0.0, dt, n)
    vals = np.array([scipy.linalg.expm(t * b) @ (-1j * h_m) @ scipy.linalg.expm(-t * b) for t in taus])
    return np.trapezoid(vals, taus, axis=0)


def test_first_order_formula():
    assert np.allclose(kernel_first_order(SZ, 0.1), -0.1j * SZ)
    assert np.all(kernel_first_order(SX, 0.0) == 0)


def test_first_order_exact_when_commuting():
    b = -1j * (0.3 * SZ)
    eig = eig_skew_hermitian(b)
    assert np.max(np.abs(kernel_exact(eig, SZ, 0.1) - kernel_first_order(SZ, 0.1))) <= 1e-14


def test_exact_kernel_scalar_generator(rng):
    h_m = random_hermitian(rng, 3)
    eig = eig_skew_hermitian(-2.5j * np.eye(3))
    assert np.allclose(kernel_exact(eig, h_m, 0.2), -0.2j * h_m, atol=1e-15)


def test_exact_kernel_matches_quadrature(rng):
    h = random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    b = -1j * h
    dt = 0.1
    exact = kernel_exact(eig_skew_hermitian(b), h_m, dt)
    assert np.max(np.abs(exact - quadrature_kernel(b, h_m, dt))) <= 1e-8


def test_first_order_error_two_level():
    # omega = 10, dt = 0.1: gamma(i) differs from 1 by about 0.5 relative
    h = 5.0 * SZ
    eig = eig_skew_hermitian(-1j * h)
    dt = 0.1
    exact = kernel_exact(eig, SX, dt)
    approx = kernel_first_order(SX, dt)
    rel = abs(approx[0, 1] - exact[0, 1]) / abs(exact[0, 1])
    assert 0.4 <= rel <= 0.55
    assert rel == pytest.approx(min(dt * 10 / 2, 1.0), abs=0.05)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.01, 1.0))
def test_exact_kernel_skew_hermitian(seed, dt):
    rng = np.random.default_rng(seed)
    eig = eig_skew_hermitian(-1j * random_hermitian(rng, 5))
    j = kernel_exact(eig, random_hermitian(rng, 5), dt)
    assert np.max(np.abs(j + j.conj().T)) <= 1e-12


def test_series_direct_high_order_matches_exact(rng):
    h = random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    dt = 0.05
    exact = kernel_exact(eig_skew_hermitian(-1j * h), h_m, dt)
    assert np.max(np.abs(kernel_series_direct(-1j * h, h_m, dt, 20) - exact)) <= 1e-12


@pytest.mark.parametrize("order", [2, 3, 6])
def test_series_direct_zero_generator(rng, order):
    h_m = random_hermitian(rng, 3)
    assert np.allclose(kernel_series_direct(np.zeros((3, 3)), h_m, 0.3, order), -0.3j * h_m)


def test_gauss_legendre_nodes():
    nodes, weights = gauss_legendre_unit(1)
    assert nodes == pytest.approx([0.5]) and weights == pytest.approx([1.0])
    nodes, weights = gauss_legendre_unit(2)
    d = 1 / (2 * np.sqrt(3))
    assert nodes == pytest.approx([0.5 - d, 0.5 + d], abs=1e-15)
    assert weights == pytest.approx([0.5, 0.5], abs=1e-15)


def test_paired_order_two_is_midpoint(rng):
    h = random_hermitian(rng, 3)
    h_m = random_hermitian(rng, 3)
    dt = 0.1
    b = -1j * h * dt
    x = -1j * dt * h_m
    e = np.eye(3)
    expected = (e + 0.5 * b) @ x @ (e - 0.5 * b)
    assert np.allclose(kernel_series_paired(-1j * h, h_m, dt, 2), expected, atol=1e-15)


def taylor_coefficients(kernel, b, h_m, order, n_coeffs):
    """Coefficients ``C_n`` of ``kernel(s B, H_m, 1) = sum_n s^n C_n`` by a discrete Fourier transform on the unit circle."""
    L = 4 * order
    w = np.exp(2j * np.pi * np.arange(L) / L)
    vals = np.array([kernel(z * b, h_m, 1.0, order) for z in w])
    return [np.tensordot(w ** (-n), vals, axes=1) / L for n in range(n_coeffs)]


@pytest.mark.parametrize("order", [2, 4, 6])
def test_paired_equals_direct_through_order(rng, order):
    b = -1j * random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    direct = taylor_coefficients(kernel_series_direct, b, h_m, order, order)
    paired = taylor_coefficients(kernel_series_paired, b, h_m, order, order)
    for n in range(order):
        assert np.max(np.abs(paired[n] - direct[n])) <= 1e-12


@pytest.mark.parametrize("order", [2, 4])
def test_paired_direct_difference_is_higher_order(rng, order):
    h = random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    dts = np.array([0.04, 0.02, 0.01])
    d = [np.linalg.norm(kernel_series_paired(-1j * h, h_m, dt, order) - kernel_series_direct(-1j * h, h_m, dt, order))
         for dt in dts]
    slope = np.polyfit(np.log(dts), np.log(d), 1)[0]
    assert slope >= order + 1 - 0.3


def test_paired_matches_direct_value_at_order_four(rng):
    h = random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    diff = kernel_series_paired(-1j * h, h_m, 1e-3, 4) - kernel_series_direct(-1j * h, h_m, 1e-3, 4)
    assert np.max(np.abs(diff)) <= 1e-12


@pytest.mark.parametrize("kernel", [kernel_series_direct, kernel_series_paired])
@pytest.mark.parametrize("order", [2, 4])
def test_series_convergence_order(rng, kernel, order):
    h = random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    dts = np.array([0.2, 0.1, 0.05, 0.025])
    errs = []
    for dt in dts:
        exact = kernel_exact(eig_skew_hermitian(-1j * h), h_m, dt)
        # relative to the kernel's own size (which is O(dt))
        errs.append(np.linalg.norm(kernel(-1j * h, h_m, dt, order) - exact) / np.linalg.norm(exact))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - order) <= 0.3


def test_trace_series_large_order_matches_exact(rng):
    h = random_hermitian(rng, 4)
    h_m = random_hermitian(rng, 4)
    a = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    dt = 0.1
    exact = np.real(np.trace(a @ kernel_exact(eig_skew_hermitian(-1j * h), h_m, dt)))
    assert abs(trace_kernel_series(a, -1j * h, h_m, dt, 25) - exact) <= 1e-10
    assert trace_kernel_series(np.zeros((4, 4)), -1j * h, h_m, dt, 6) == 0


def test_trace_commutator_identity(rng):
    w, x, y = (rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5)) for _ in range(3))
    lhs = np.trace(w @ (x @ y - y @ x))
    rhs = np.trace((w @ x - x @ w) @ y)
    assert abs(lhs - rhs) <= 1e-13 * max(1.0, abs(lhs))


def test_series_rejects_bad_orders(rng):
    h = random_hermitian(rng, 2)
    with pytest.raises(ValueError):
        kernel_series_direct(h, h, 0.1, 1)
    with pytest.raises(ValueError):
        kernel_series_paired(h, h, 0.1, 3)


def test_stacked_controls(rng):
    h = random_hermitian(rng, 3)
    hs = np.array([random_hermitian(rng, 3) for _ in range(2)])
    eig = eig_skew_hermitian(-1j * h)
    stacked = kernel_exact(eig, hs, 0.1)
    assert stacked.shape == (2, 3, 3)
    assert np.allclose(stacked[1], kernel_exact(eig, hs[1], 0.1))
