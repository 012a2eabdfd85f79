"""Step gradient kernels.

For a step with constant generator ``B = -i H[f(t_k)]`` the derivative of the step
propagator with respect to the amplitude of control ``m`` is ``J_mk U_k`` with

    J_mk = int_0^dt exp(tau B) (-i H_m) exp(-tau B) dtau.

Every function here accepts a single control matrix ``(N, N)`` or a stack
``(M, N, N)`` and returns an array of the same shape.
"""
from __future__ import annotations

from functools import lru_cache
from math import factorial

import numpy as np

from seqkrotov.operators import gamma

__all__ = [
    "gamma_matrix",
    "gauss_legendre_unit",
    "kernel_first_order",
    "kernel_exact",
    "kernel_series_direct",
    "kernel_series_paired",
    "trace_kernel_series",
]


def _dagger(a):
    return np.swapaxes(a, -1, -2).conj()


def gamma_matrix(eig, dt):
    """``gamma(omega_rs dt)`` on the eigenvalue-difference grid of ``eig``."""
    return gamma(eig.frequencies() * dt)


def kernel_first_order(h_m, dt):
    """Right-endpoint approximation ``-i H_m dt``."""
    return -1j * dt * np.asarray(h_m, dtype=complex)


def kernel_exact(eig, h_m, dt):
    """Exact kernel from the eigendecomposition ``eig`` of ``B``."""
    v = eig.vectors
    h_e = _dagger(v) @ np.asarray(h_m, dtype=complex) @ v
    j_e = gamma_matrix(eig, dt) * (-1j * dt) * h_e
    return v @ j_e @ _dagger(v)


def kernel_series_direct(b, h_m, dt, order):
    """Truncation of ``gamma(dt ad_B)(-i H_m) dt`` after ``order`` terms.

    The double sum over ``B^a X (-B)^c / (a! c!)`` is regrouped by the left power
    ``a`` so that ``3*order - 4`` matrix products suffice.
    """
    if order < 2:
        raise ValueError("series order must be at least 2")
    b = dt * np.asarray(b, dtype=complex)
    x = -1j * dt * np.asarray(h_m, dtype=complex)
    coeff = [1.0 / (n + 1) for n in range(order)]
    # left powers B^a / a!
    left = [np.eye(b.shape[-1], dtype=complex)]
    for a in range(1, order):
        left.append(left[-1] @ b / a)
    # right terms X (-B)^c / c!
    right = [x]
    for c in range(1, order):
        right.append(right[-1] @ (-b) / c)
    out = np.zeros_like(x)
    for a in range(order):
        inner = sum(coeff[a + c] * right[c] for c in range(order - a))
        out = out + (inner if a == 0 else left[a] @ inner)
    return out


@lru_cache(maxsize=None)
def gauss_legendre_unit(n_nodes):
    """Gauss-Legendre nodes and weights mapped to ``[0, 1]``."""
    x, w = np.polynomial.legendre.leggauss(n_nodes)
    return 0.5 * (x + 1.0), 0.5 * w


def _truncated_exp(powers, r):
    return sum((r**k) * p for k, p in enumerate(powers))


def kernel_series_paired(b, h_m, dt, order):
    """Order-``order`` kernel as a Gauss-Legendre sum of sandwiched truncated exponentials.

    ``sum_j a_j E(r_j dt B) (-i H_m dt) E(-r_j dt B)`` with ``E`` the exponential
    series cut after ``order`` terms. Matches :func:`kernel_series_direct` on all
    Taylor coefficients below ``dt**(order+1)`` and differs only at higher orders.
    """
    if order < 2 or order % 2:
        raise ValueError("paired series order must be even and at least 2")
    b = dt * np.asarray(b, dtype=complex)
    x = -1j * dt * np.asarray(h_m, dtype=complex)
    powers = [np.eye(b.shape[-1], dtype=complex)]
    for k in range(1, order):
        powers.append(powers[-1] @ b / k)
    nodes, weights = gauss_legendre_unit(order // 2)
    out = np.zeros_like(x)
    for r, a in zip(nodes, weights):
        out = out + a * (_truncated_exp(powers, r) @ x @ _truncated_exp(powers, -r))
    return out


def trace_kernel_series(a, b, h_m, dt, order):
    """``Re Tr(A J_m)`` from the nested-commutator series truncated after ``order`` terms.

    Only the skew-Hermitian part of ``A`` contributes, so it is projected first;
    each commutator with the skew-Hermitian ``B`` then costs a single product. The
    chain ``ad_{-B}^n(A)`` is shared across all controls in ``h_m``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    y = 0.5 * (a - a.conj().T)
    s = y.copy()
    for n in range(1, order):
        p = y @ b
        y = p - p.conj().T
        s = s + (dt**n / factorial(n + 1)) * y
    h_m = np.asarray(h_m, dtype=complex)
    # Tr(S H_m) as an elementwise sum over S_ij H_ji
    tr = np.einsum("ij,...ji->...", s, h_m)
    return np.real(-1j * dt * tr)
