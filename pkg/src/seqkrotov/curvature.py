"""Local (single time step) Hessians, Newton steps and the trust-region subproblem.

Exact gate Hessian
------------------
For ``F = (1/N) Re Tr(W^dagger U(T))`` the second derivative of the step
propagator sums both time orderings of the two control insertions, so

    h_mn = -(1/N) Re Tr(W^dagger U(T, t_k) (J_mn + J_nm) U(t_{k-1}, 0))

with ``J_mn`` the ordered double integral. In the eigenbasis of ``iH[f(t_k)]``
(eigenvalues ``lam``) its matrix elements are ``sum_q D_rqs (H_m)_rq (H_n)_qs``.

The fully degenerate coefficient is ``(dt**2 / 2) exp(-lam dt)``: the double
integral over the triangle ``0 < sigma < tau < dt`` of a constant has area
``dt**2 / 2``. (Taking ``dt**2 exp(-lam dt)`` instead disagrees with quadrature
by a factor of two; see the tests.)
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqkrotov.operators import gamma
from seqkrotov.objectives import GateReal, GateModulus, step_gradient

__all__ = [
    "DEGENERACY_TOL",
    "NotNegativeDefiniteError",
    "TrustRegionResult",
    "d_coefficients",
    "local_hessian_exact",
    "local_hessian_fd",
    "local_hessian",
    "local_hessian_scalar_approx",
    "scalarization_error",
    "newton_step",
    "trsp_solve",
    "gram_schmidt_controls",
]

DEGENERACY_TOL = 1e-7


class NotNegativeDefiniteError(ValueError):
    """Newton step requested for a Hessian that is not negative definite."""


def d_coefficients(lam, dt):
    """Three-index table ``D[r, q, s]`` for eigenvalues ``lam`` of ``iH``.

    Branches are chosen per triple: generic when ``|omega_qs dt| >= 1e-7``,
    otherwise the ``q = s`` branch, and the fully degenerate branch when also
    ``|omega_rs dt| < 1e-7``.
    """
    lam = np.asarray(lam, dtype=complex)
    r = lam[:, None, None]
    q = lam[None, :, None]
    s = lam[None, None, :]
    w_qs = np.broadcast_to(q - s, (lam.size,) * 3)
    w_rs = np.broadcast_to(r - s, (lam.size,) * 3)
    w_rq = np.broadcast_to(r - q, (lam.size,) * 3)
    pref_r = np.broadcast_to(np.exp(-r * dt), (lam.size,) * 3)
    pref_s = np.broadcast_to(np.exp(-s * dt), (lam.size,) * 3)

    generic = np.abs(w_qs * dt) >= DEGENERACY_TOL
    partial = ~generic & (np.abs(w_rs * dt) >= DEGENERACY_TOL)
    full = ~generic & ~partial

    out = np.empty((lam.size,) * 3, dtype=complex)
    g = generic
    out[g] = dt * pref_r[g] / w_qs[g] * (gamma(w_rs[g] * dt) - gamma(w_rq[g] * dt))
    p = partial
    out[p] = dt * pref_s[p] / w_rs[p] * (1.0 - gamma(-w_rq[p] * dt))
    out[full] = 0.5 * dt**2 * pref_r[full]
    return out


def _gate_scale(obj, grid):
    return obj.scale(grid)


def local_hessian_exact(obj, cache, k, costate=None):
    """Exact ``M x M`` Hessian of a ``GateReal`` objective w.r.t. step ``k``.

    ``costate`` is ``C_k = W^dagger U(T, t_k)``; it is computed from the cache's
    right products when omitted, which requires them to be current at ``k``.
    """
    if type(obj) is not GateReal:
        raise TypeError("exact local Hessian is available for GateReal objectives only")
    if costate is None:
        if cache.right_valid > k:
            raise RuntimeError(f"right product {k} is stale")
        costate = obj.terminal() @ cache.right[k]
    if cache.left_valid < k - 1:
        raise RuntimeError(f"left product {k - 1} is stale")
    eig = cache.eig(k)
    v = eig.vectors
    vh = v.conj().T
    lam = -eig.values  # eigenvalues of iH
    d = d_coefficients(lam, cache.grid.dt)
    x_e = vh @ (cache.left[k - 1] @ costate) @ v
    h_e = vh @ cache.system.controls @ v
    # G^m_qs = sum_r X_sr D_rqs (H_m)_rq ; h_mn = sum_qs G^m_qs (H_n)_qs
    g = np.einsum("sr,rqs,mrq->mqs", x_e, d, h_e)
    t = np.einsum("mqs,nqs->mn", g, h_e)
    h = -obj.scale(cache.grid) * np.real(t + t.T)
    return 0.5 * (h + h.T)


def local_hessian_fd(obj, cache, k, costate, left_prev, method, step=1e-4):
    """Hessian of step ``k`` by central differences of the exact step gradient."""
    system, grid = cache.system, cache.grid
    base = cache.field[k - 1]
    M = system.n_controls
    scale = obj.scale(grid)
    h = np.empty((M, M))
    for n in range(M):
        cols = []
        for sign in (1.0, -1.0):
            amps = base.copy()
            amps[n] += sign * step
            hk = system.hamiltonian(amps)
            energies, vecs = np.linalg.eigh(0.5 * (hk + hk.conj().T))
            from seqkrotov.operators import Eigendecomposition

            eig = Eigendecomposition(-1j * energies, vecs)
            u = (vecs * np.exp(-1j * grid.dt * energies)) @ vecs.conj().T
            x = obj.state(u @ left_prev)
            a = obj.raw_a(costate, x)
            cols.append(scale * step_gradient(a, system, eig, hk, grid.dt, method))
        h[:, n] = (cols[0] - cols[1]) / (2 * step)
    return 0.5 * (h + h.T)


def local_hessian(obj, cache, k, costate, left_prev, method=None):
    """Exact Hessian for ``GateReal``; finite differences of exact gradients otherwise."""
    from seqkrotov.objectives import GradientMethod

    if type(obj) is GateReal:
        return local_hessian_exact(obj, cache, k, costate=costate)
    return local_hessian_fd(obj, cache, k, costate, left_prev, method or GradientMethod.exact())


def local_hessian_scalar_approx(system, dt=None):
    """``-(1/N) Re Tr(H_m H_n)``, times ``dt**2`` when ``dt`` is given.

    The ``dt**2`` factor restores the scale of :func:`local_hessian_exact`; the
    shape (and hence the scalarization error) does not depend on it.
    """
    hs = system.controls
    gram = np.real(np.einsum("mij,nji->mn", hs, hs))
    out = -gram / system.dim
    return out * dt**2 if dt is not None else out


def gram_schmidt_controls(controls):
    """Orthonormalize control Hamiltonians under ``Tr(A B)`` scaled to ``Tr(H_m H_n) = N delta_mn``."""
    controls = np.asarray(controls, dtype=complex)
    n = controls.shape[-1]
    basis = []
    for h in controls:
        w = h.copy()
        for e in basis:
            w = w - np.real(np.trace(e @ w)) / n * e
        norm = np.sqrt(np.real(np.trace(w @ w)) / n)
        if norm < 1e-12:
            raise ValueError("control Hamiltonians are linearly dependent")
        basis.append(w / norm)
    return np.array(basis)


def scalarization_error(h):
    """``||h - beta I|| / ||h||`` (spectral norm), ``beta`` the mean diagonal entry."""
    h = np.asarray(h, dtype=float)
    if h.ndim == 0:
        h = h.reshape(1, 1)
    norm = np.linalg.norm(h, 2)
    if norm == 0:
        raise ValueError("scalarization error undefined for a zero Hessian")
    beta = np.mean(np.diag(h))
    return float(np.linalg.norm(h - beta * np.eye(h.shape[0]), 2) / norm)


def newton_step(h, g, tol=1e-10):
    """``-h^{-1} g`` for a strictly negative definite Hessian ``h``.

    Raises:
        NotNegativeDefiniteError: if the largest eigenvalue of ``h`` is above ``-tol``;
            the caller should fall back to a trust-region step.
    """
    h = np.atleast_2d(np.asarray(h, dtype=float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if np.max(np.linalg.eigvalsh(0.5 * (h + h.T))) >= -tol:
        raise NotNegativeDefiniteError("Hessian is not negative definite")
    return -np.linalg.solve(h, g)


@dataclass
class TrustRegionResult:
    x: np.ndarray
    multiplier: float
    on_boundary: bool
    hard_case: bool
    n_iter: int = 0

    def value(self, a, g):
        return float(0.5 * self.x @ a @ self.x + g @ self.x)


def trsp_solve(a, g, radius, max_iter=100, rtol=1e-8):
    """Minimize ``x^T a x / 2 + g^T x`` over ``||x|| <= radius``.

    Works in the eigenbasis of ``a`` (eigenvalues ``lam_1 <= lam_2 <= ...``). The
    multiplier ``mu* <= min(lam_1, 0)`` makes ``x_mu = -(a - mu I)^{-1} g`` reach
    norm ``radius``; it is the root of ``1/r + phi(mu)`` with
    ``phi(mu) = -1/||x_mu||``, found by Newton iteration from
    ``mu_0 = min(lam_1, 0)`` with a bisection safeguard. In the hard case
    (``g`` orthogonal to the ``lam_1`` eigenspace, ``lam_1 < 0``) the step is
    completed along that eigenspace to reach the boundary.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    a = 0.5 * (a + a.T)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    if not radius > 0:
        raise ValueError("radius must be positive")
    lam, vecs = np.linalg.eigh(a)
    gt = vecs.T @ g
    gnorm = float(np.linalg.norm(gt))
    low = np.abs(lam - lam[0]) <= 1e-12 * max(1.0, float(np.max(np.abs(lam))))
    g_low = float(np.linalg.norm(gt[low]))
    hard_candidate = g_low <= 1e-12 * max(gnorm, 1.0)

    def result(xt, mu, boundary, hard, it=0):
        return TrustRegionResult(vecs @ xt, float(mu), boundary, hard, it)

    if lam[0] > 0:
        xt = -gt / lam
        if np.linalg.norm(xt) <= radius:
            return result(xt, 0.0, False, False)

    # components taking part in the secular equation
    active = ~low if (hard_candidate and lam[0] <= 0) else np.ones_like(low)
    lam_a, g_a = lam[active], gt[active]

    def solution(mu):
        xt = np.zeros_like(gt)
        xt[active] = -g_a / (lam_a - mu)
        return xt

    if hard_candidate and lam[0] <= 0:
        xt = solution(lam[0])
        nrm = float(np.linalg.norm(xt))
        if nrm <= radius:
            if lam[0] == 0:
                return result(xt, 0.0, False, False)
            xt[np.flatnonzero(low)[0]] = np.sqrt(max(radius**2 - nrm**2, 0.0))
            return result(xt, lam[0], True, True)

    mu0 = min(lam[0], 0.0)

    def psi_and_slope(mu):
        d = lam_a - mu
        if np.any(d <= 0):
            # at mu = lam_1 with g_1 != 0: phi = 0 and phi' = 1/|g_1|
            return 1.0 / radius, 1.0 / float(np.linalg.norm(g_a[d <= 0]))
        s2 = float(np.sum(g_a**2 / d**2))
        phi = -1.0 / np.sqrt(s2)
        return 1.0 / radius + phi, -(phi**3) * float(np.sum(g_a**2 / d**3))

    upper = mu0
    lower = min(mu0, float(lam_a[0])) - gnorm / radius - 1.0
    mu = mu0
    it = 0
    for it in range(1, max_iter + 1):
        psi, slope = psi_and_slope(mu)
        if mu < mu0 or not np.any(lam_a - mu <= 0):
            if abs(1.0 / (1.0 / radius - psi) - radius) <= rtol * radius:
                break
            if psi > 0:
                upper = mu
            else:
                lower = mu
        nxt = mu - psi / slope
        if not lower < nxt < upper:
            nxt = 0.5 * (lower + upper)
        mu = nxt
    xt = solution(mu)
    nrm = float(np.linalg.norm(xt))
    if nrm > 0:
        xt *= radius / nrm
    return result(xt, mu, True, False, it)
