"""Dense complex-matrix primitives: validation, skew-Hermitian eigendecomposition,
the ``gamma`` kernel and single-step propagators.

Units are hbar = 1 throughout. Matrices are plain ``numpy`` arrays; Hermitian and
unitary "flavours" are enforced by the validation helpers rather than by wrapper
classes.
"""
from __future__ import annotations

from math import factorial
from typing import NamedTuple

import numpy as np

__all__ = [
    "Eigendecomposition",
    "InvalidOperatorError",
    "check_hermitian",
    "check_skew_hermitian",
    "check_unitary",
    "check_state",
    "eig_skew_hermitian",
    "gamma",
    "step_propagator",
    "polar_unitary",
    "haar_unitary",
    "commutator",
]

HERMITIAN_TOL = 1e-12
UNITARY_TOL = 1e-12

# below this modulus gamma switches to its Taylor series
_GAMMA_SERIES_RADIUS = 1e-2
_GAMMA_SERIES_COEFFS = np.array([1.0 / factorial(n + 1) for n in range(8)])


class InvalidOperatorError(ValueError):
    """Raised when a matrix does not have the structure an operation requires."""


class Eigendecomposition(NamedTuple):
    """``B = vectors @ diag(values) @ vectors^dagger`` for a skew-Hermitian ``B``.

    ``values`` are purely imaginary for skew-Hermitian input.
    """

    values: np.ndarray
    vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.conj().T

    def frequencies(self) -> np.ndarray:
        """Matrix of eigenvalue differences ``omega[r, s] = values[r] - values[s]``."""
        return self.values[:, None] - self.values[None, :]


def _as_square(a, name="matrix"):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidOperatorError(f"{name} must be a square 2-D array, got shape {a.shape}")
    return a


def _scale(a):
    return max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0


def check_hermitian(a, tol=HERMITIAN_TOL, name="operator"):
    """Return ``a`` as a complex array, raising if it is not Hermitian within ``tol``.

    The tolerance is relative to ``max(1, max|a_ij|)``.
    """
    a = _as_square(a, name)
    if np.max(np.abs(a - a.conj().T), initial=0.0) > tol * _scale(a):
        raise InvalidOperatorError(f"{name} is not Hermitian")
    return a


def check_skew_hermitian(a, tol=1e-10, name="operator"):
    a = _as_square(a, name)
    if np.max(np.abs(a + a.conj().T), initial=0.0) > tol * _scale(a):
        raise InvalidOperatorError(f"{name} is not skew-Hermitian")
    return a


def check_unitary(u, tol=UNITARY_TOL, name="operator"):
    u = _as_square(u, name)
    residual = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])), initial=0.0)
    if residual > tol:
        raise InvalidOperatorError(f"{name} is not unitary (residual {residual:.2e})")
    return u


def check_state(psi, dim=None, tol=1e-10, name="state"):
    psi = np.asarray(psi, dtype=complex).reshape(-1)
    if dim is not None and psi.shape[0] != dim:
        raise InvalidOperatorError(f"{name} has dimension {psi.shape[0]}, expected {dim}")
    if abs(np.linalg.norm(psi) - 1.0) > tol:
        raise InvalidOperatorError(f"{name} is not normalized")
    return psi


def commutator(a, b):
    return a @ b - b @ a


def eig_skew_hermitian(b, tol=1e-10) -> Eigendecomposition:
    """Eigendecomposition of a skew-Hermitian matrix.

    Solved through the Hermitian problem for ``i*b``, so the eigenvector matrix is
    unitary even for degenerate spectra.

    Raises:
        InvalidOperatorError: if ``b`` is not skew-Hermitian within ``tol``
            (relative to its largest entry).
    """
    b = check_skew_hermitian(b, tol=tol, name="B")
    h = 1j * b
    energies, vectors = np.linalg.eigh(0.5 * (h + h.conj().T))
    return Eigendecomposition(-1j * energies, vectors)


def gamma(z):
    """``(exp(z) - 1) / z`` with ``gamma(0) = 1``; accepts scalars or arrays."""
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < _GAMMA_SERIES_RADIUS
    out = np.empty_like(z)
    zs = z[small]
    # Horner evaluation of sum_n z^n / (n+1)!
    acc = np.full_like(zs, _GAMMA_SERIES_COEFFS[-1])
    for c in _GAMMA_SERIES_COEFFS[-2::-1]:
        acc = acc * zs + c
    out[small] = acc
    zl = z[~small]
    out[~small] = np.expm1(zl) / zl
    return out if out.ndim else out[()]


def step_propagator(h_total, dt, return_eig=False):
    """``exp(-i dt H)`` for a Hermitian ``H`` via the eigendecomposition of ``-iH``.

    With ``return_eig=True`` the decomposition is returned as well so the caller can
    reuse it for exact gradient kernels.
    """
    h_total = check_hermitian(h_total, tol=1e-10, name="H")
    eig = eig_skew_hermitian(-1j * h_total)
    u = (eig.vectors * np.exp(dt * eig.values)) @ eig.vectors.conj().T
    if return_eig:
        return u, eig
    return u


def polar_unitary(a):
    """Closest unitary to ``a`` in Frobenius norm (unitary polar factor)."""
    w, _, vh = np.linalg.svd(a)
    return w @ vh


def haar_unitary(dim, rng):
    """Haar-distributed random unitary (QR of a complex Ginibre matrix, phase-fixed)."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))
