"""Fidelity functionals, their discrete gradients and the observable reference update.

Every objective is written in "co-state" form. With ``X_k`` the forward quantity
after step ``k`` (propagator, state vector or density matrix) and ``C_k`` a
co-state that depends only on steps ``k+1..K``, the part of the fidelity carried
by times ``t_j >= t_k`` is a simple function of ``(C_k, X_k)`` and the derivative
with respect to the amplitudes of step ``k`` is

    dF/df_mk = Re Tr(A_k J_mk)

for an objective-specific matrix ``A_k``. The same co-states drive whole-field
gradients (one backward pass) and the sequential sweeps, where ``C_k`` stays
valid while steps ``<= k`` change.

Time-integrated objectives are right-endpoint Riemann sums over ``t_1..t_K`` so
their gradients are exact derivatives of the discretized functional.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from seqkrotov.kernels import (
    gamma_matrix,
    kernel_series_direct,
    kernel_series_paired,
    trace_kernel_series,
)
from seqkrotov.operators import (
    InvalidOperatorError,
    check_hermitian,
    check_state,
    check_unitary,
)

__all__ = [
    "GradientMethod",
    "Objective",
    "GateReal",
    "GateModulus",
    "PureState",
    "PureStateModulus",
    "PureObservableFinal",
    "PureObservableIntegrated",
    "DensityObservableFinal",
    "DensityObservableIntegrated",
    "StateTrajectory",
    "DensityTrajectory",
    "IncompatibleMethodError",
    "UndefinedOverlapError",
    "fidelity",
    "costates",
    "step_gradient",
    "gradient",
    "gradient_overlap",
    "observable_reference_update",
    "default_method",
]

PHASE_EPS = 1e-12


class IncompatibleMethodError(ValueError):
    """Gradient method cannot be used with the given objective."""


class UndefinedOverlapError(ValueError):
    """Overlap of a zero-norm gradient."""


@dataclass(frozen=True)
class GradientMethod:
    """How the step kernel ``J_mk`` is evaluated.

    ``kind`` is one of ``"first-order"``, ``"exact"``, ``"series-direct"``,
    ``"series-paired"`` or ``"commutator"``; ``order`` applies to the series kinds.
    """

    kind: str = "exact"
    order: int = 4

    def __post_init__(self):
        kinds = ("first-order", "exact", "series-direct", "series-paired", "commutator")
        if self.kind not in kinds:
            raise ValueError(f"unknown gradient method {self.kind!r}")
        if self.kind in ("series-direct", "commutator") and self.order < 2:
            raise ValueError("series order must be at least 2")
        if self.kind == "series-paired" and (self.order < 2 or self.order % 2):
            raise ValueError("paired series order must be even and at least 2")

    @classmethod
    def first_order(cls):
        return cls("first-order")

    @classmethod
    def exact(cls):
        return cls("exact")

    @classmethod
    def series_direct(cls, order):
        return cls("series-direct", order)

    @classmethod
    def series_paired(cls, order=4):
        return cls("series-paired", order)

    @classmethod
    def commutator_series(cls, order):
        return cls("commutator", order)

    @classmethod
    def parse(cls, spec):
        """Build from ``"exact"``, ``"series-paired:4"`` style strings or a mapping."""
        if isinstance(spec, GradientMethod):
            return spec
        if spec is None:
            return None
        if isinstance(spec, dict):
            return cls(**spec)
        kind, _, order = str(spec).partition(":")
        return cls(kind, int(order)) if order else cls(kind)


# ---------------------------------------------------------------------------
# objective classes


class Objective:
    """Base class; subclasses set ``state_kind`` and ``costate_kind``.

    ``state_kind``: ``"unitary"``, ``"vector"`` or ``"density"`` -- what the
    forward quantity ``X_k`` is.
    ``costate_kind``: ``"row"`` (``C U``), ``"vector"`` (``U^dagger c``) or
    ``"operator"`` (``U^dagger C U``) -- how ``C_k`` is pulled back through a step.
    """

    state_kind = "unitary"
    costate_kind = "row"
    integrated = False
    trace_form = True
    normalize = True

    dim: int

    # forward quantity
    def initial(self):
        raise NotImplementedError

    def state(self, left):
        """Forward quantity ``X`` for a left propagator product."""
        if self.state_kind == "unitary":
            return left
        if self.state_kind == "vector":
            return left @ self.psi0
        return left @ self.rho0 @ left.conj().T

    # co-states
    def terminal(self):
        raise NotImplementedError

    def target_term(self, j):
        """Integrated target at ``t_j`` (``1 <= j <= K``), already scaled by ``dt``."""
        raise NotImplementedError

    def pull(self, c, u):
        if self.costate_kind == "row":
            return c @ u
        if self.costate_kind == "vector":
            return u.conj().T @ c
        return u.conj().T @ c @ u

    def scale(self, grid):
        return 1.0

    # values
    def raw_value(self, c, x):
        """Unscaled contribution of times ``>= t_k`` given ``(C_k, X_k)``."""
        raise NotImplementedError

    def raw_term(self, x, j):
        """Unscaled Riemann-sum term at ``t_j`` (integrated objectives)."""
        return 0.0

    def raw_a(self, c, x):
        raise NotImplementedError

    def check_dim(self, system):
        if system.dim != self.dim:
            raise InvalidOperatorError(
                f"objective dimension {self.dim} does not match system dimension {system.dim}"
            )


def _rank1(psi, chi):
    return np.outer(psi, chi.conj())


class GateReal(Objective):
    """``Re Tr(V^dagger U(T))``, divided by ``N`` when normalized."""

    def __init__(self, target, normalize=True):
        self.target = check_unitary(target, tol=1e-10, name="target gate")
        self.dim = self.target.shape[0]
        self.normalize = normalize

    def scale(self, grid):
        return 1.0 / self.dim if self.normalize else 1.0

    def terminal(self):
        return self.target.conj().T

    def raw_value(self, c, x):
        return float(np.real(np.sum(c * x.T)))

    def raw_a(self, c, x):
        return x @ c

    def error(self, cache):
        """``1/2 ||U(T) - V||^2`` (Hilbert-Schmidt)."""
        u = cache.final_propagator()
        return 0.5 * float(np.linalg.norm(u - self.target) ** 2)


class GateModulus(GateReal):
    """``|Tr(V^dagger U(T))|``, phase-insensitive gate fidelity.

    Where the trace vanishes (below ``1e-12``) the gradient is set to zero and
    ``degenerate_phase`` is raised on the instance.
    """

    degenerate_phase = False

    def raw_value(self, c, x):
        return float(abs(np.sum(c * x.T)))

    def raw_a(self, c, x):
        tau = np.sum(c * x.T)
        if abs(tau) < PHASE_EPS:
            self.degenerate_phase = True
            return np.zeros_like(x)
        return (np.conj(tau) / abs(tau)) * (x @ c)


class PureState(Objective):
    """``Re <phi|psi(T)>``."""

    state_kind = "vector"
    costate_kind = "vector"

    def __init__(self, psi0, phi, normalize=True, check_target=True):
        self.psi0 = check_state(psi0)
        self.dim = self.psi0.shape[0]
        phi = np.asarray(phi, dtype=complex).reshape(-1)
        self.phi = check_state(phi, self.dim, name="target state") if check_target else phi
        self.normalize = normalize

    def terminal(self):
        return self.phi

    def raw_value(self, c, x):
        return float(np.real(np.vdot(c, x)))

    def raw_a(self, c, x):
        return _rank1(x, c)

    def error(self, cache):
        psi = cache.final_propagator() @ self.psi0
        return 0.5 * float(np.linalg.norm(psi - self.phi) ** 2)


class PureStateModulus(PureState):
    """``|<phi|psi(T)>|^2``."""

    def raw_value(self, c, x):
        return float(abs(np.vdot(c, x)) ** 2)

    def raw_a(self, c, x):
        return 2.0 * np.conj(np.vdot(c, x)) * _rank1(x, c)


class PureObservableFinal(Objective):
    """``<psi(T)|Q|psi(T)>``."""

    state_kind = "vector"
    costate_kind = "operator"

    def __init__(self, psi0, observable, normalize=True):
        self.psi0 = check_state(psi0)
        self.dim = self.psi0.shape[0]
        self.observable = check_hermitian(observable, tol=1e-10, name="observable")
        self.normalize = normalize

    def terminal(self):
        return self.observable

    def raw_value(self, c, x):
        return float(np.real(np.vdot(x, c @ x)))

    def raw_a(self, c, x):
        return 2.0 * _rank1(x, c @ x)


class _Integrated(Objective):
    integrated = True

    def __init__(self, targets, grid, normalize=True):
        if len(targets) != grid.n_steps:
            raise ValueError(f"need {grid.n_steps} target samples, got {len(targets)}")
        self.grid = grid
        self.targets = targets
        self.normalize = normalize

    def scale(self, grid):
        return 1.0 / grid.T if self.normalize else 1.0

    def target_term(self, j):
        return self.grid.dt * self.targets[j - 1]

    def terminal(self):
        return self.target_term(self.grid.n_steps)


class PureObservableIntegrated(_Integrated):
    """``int <psi(t)|Q(t)|psi(t)> dt`` with ``Q`` sampled at ``t_1..t_K``."""

    state_kind = "vector"
    costate_kind = "operator"

    def __init__(self, psi0, observables, grid, normalize=True):
        self.psi0 = check_state(psi0)
        self.dim = self.psi0.shape[0]
        obs = np.asarray(observables, dtype=complex)
        for q in obs:
            check_hermitian(q, tol=1e-10, name="observable")
        super().__init__(obs, grid, normalize)

    raw_value = PureObservableFinal.raw_value
    raw_a = PureObservableFinal.raw_a

    def raw_term(self, x, j):
        return self.grid.dt * float(np.real(np.vdot(x, self.targets[j - 1] @ x)))


class DensityObservableFinal(Objective):
    """``Tr(Q rho(T))``; with ``Q = sigma`` a density this is the transfer fidelity."""

    state_kind = "density"
    costate_kind = "operator"

    def __init__(self, rho0, observable, normalize=True):
        self.rho0 = check_hermitian(rho0, tol=1e-10, name="rho0")
        self.dim = self.rho0.shape[0]
        self.observable = check_hermitian(observable, tol=1e-10, name="observable")
        self.normalize = normalize

    def terminal(self):
        return self.observable

    def raw_value(self, c, x):
        return float(np.real(np.sum(c * x.T)))

    def raw_a(self, c, x):
        return x @ c - c @ x

    def error(self, cache):
        """``1/2 ||rho(T) - sigma||^2`` treating the observable as the target density."""
        u = cache.final_propagator()
        rho = u @ self.rho0 @ u.conj().T
        return 0.5 * float(np.linalg.norm(rho - self.observable) ** 2)

    def error_offset(self):
        """Constant ``E0`` with ``error = E0 - fidelity``."""
        return 0.5 * float(np.real(np.trace(self.rho0 @ self.rho0) + np.trace(self.observable @ self.observable)))


class DensityObservableIntegrated(_Integrated):
    """``int Tr(Q(t) rho(t)) dt`` with ``Q`` sampled at ``t_1..t_K``."""

    state_kind = "density"
    costate_kind = "operator"

    def __init__(self, rho0, observables, grid, normalize=True):
        self.rho0 = check_hermitian(rho0, tol=1e-10, name="rho0")
        self.dim = self.rho0.shape[0]
        obs = np.asarray(observables, dtype=complex)
        for q in obs:
            check_hermitian(q, tol=1e-10, name="observable")
        super().__init__(obs, grid, normalize)

    raw_value = DensityObservableFinal.raw_value
    raw_a = DensityObservableFinal.raw_a

    def raw_term(self, x, j):
        return self.grid.dt * float(np.real(np.sum(self.targets[j - 1] * x.T)))


class DensityTrajectory(DensityObservableIntegrated):
    """Tracking of a density trajectory ``sigma_d(t_j)``."""

    def error_offset(self):
        dt = self.grid.dt
        purity0 = float(np.real(np.trace(self.rho0 @ self.rho0)))
        target = sum(float(np.real(np.trace(s @ s))) for s in self.targets)
        return 0.5 * dt * (self.grid.n_steps * purity0 + target)


class StateTrajectory(_Integrated):
    """``int Re <phi_d(t)|psi(t)> dt`` with ``phi_d`` sampled at ``t_1..t_K``."""

    state_kind = "vector"
    costate_kind = "vector"

    def __init__(self, psi0, targets, grid, normalize=True):
        self.psi0 = check_state(psi0)
        self.dim = self.psi0.shape[0]
        targets = np.asarray(targets, dtype=complex)
        if targets.ndim != 2 or targets.shape[1] != self.dim:
            raise ValueError("trajectory targets must have shape (K, N)")
        super().__init__(targets, grid, normalize)

    raw_value = PureState.raw_value
    raw_a = PureState.raw_a

    def raw_term(self, x, j):
        return self.grid.dt * float(np.real(np.vdot(self.targets[j - 1], x)))


# ---------------------------------------------------------------------------
# evaluation


def default_method(obj):
    """Exact kernels for gate/density objectives, paired order-4 series for states."""
    if obj.state_kind == "vector":
        return GradientMethod.series_paired(4)
    return GradientMethod.exact()


def costates(obj, cache):
    """Co-states ``C_1..C_K`` from one backward pass over the cached propagators."""
    K = cache.n_steps
    out = [None] * K
    c = obj.terminal()
    out[K - 1] = c
    for k in range(K, 1, -1):
        c = obj.pull(c, cache.U[k - 1])
        if obj.integrated:
            c = c + obj.target_term(k - 1)
        out[k - 2] = c
    return out


def fidelity(obj, cache):
    """Objective value for the field held in ``cache``."""
    obj.check_dim(cache.system)
    scale = obj.scale(cache.grid)
    if not obj.integrated:
        x = obj.state(cache.final_propagator())
        return scale * obj.raw_value(obj.terminal(), x)
    if cache.left_valid < cache.n_steps:
        cache.refresh_left()
    total = sum(obj.raw_term(obj.state(cache.left[j]), j) for j in range(1, cache.n_steps + 1))
    return scale * total


def step_gradient(a, system, eig, h_total, dt, method):
    """``Re Tr(A J_m)`` for all controls ``m`` of one step."""
    controls = system.controls
    kind = method.kind
    if kind == "first-order":
        return np.real(-1j * dt * np.einsum("ij,mji->m", a, controls))
    if kind == "exact":
        v = eig.vectors
        vh = v.conj().T
        a_e = vh @ a @ v
        h_e = vh @ controls @ v
        weights = (-1j * dt) * gamma_matrix(eig, dt) * a_e.T
        return np.real(np.einsum("rs,mrs->m", weights, h_e))
    b = -1j * h_total
    if kind == "commutator":
        return trace_kernel_series(a, b, controls, dt, method.order)
    if kind == "series-direct":
        j = kernel_series_direct(b, controls, dt, method.order)
    else:
        j = kernel_series_paired(b, controls, dt, method.order)
    return np.real(np.einsum("ij,mji->m", a, j))


def check_method(obj, method):
    if method.kind == "commutator" and obj.state_kind == "vector":
        raise IncompatibleMethodError(
            "the commutator trace series applies to gate and density objectives only"
        )


def gradient(obj, cache, method=None):
    """``(K, M)`` table of ``dF/df_mk`` for the field held in ``cache``."""
    obj.check_dim(cache.system)
    method = GradientMethod.parse(method) or default_method(obj)
    check_method(obj, method)
    if cache.left_valid < cache.n_steps:
        cache.refresh_left()
    scale = obj.scale(cache.grid)
    dt = cache.grid.dt
    system = cache.system
    cs = costates(obj, cache)
    grad = np.empty((cache.n_steps, system.n_controls))
    need_h = method.kind not in ("first-order", "exact")
    for k in range(1, cache.n_steps + 1):
        x = obj.state(cache.left[k])
        a = obj.raw_a(cs[k - 1], x)
        h = system.hamiltonian(cache.field[k - 1]) if need_h else None
        grad[k - 1] = step_gradient(a, system, cache.eig(k), h, dt, method)
    return scale * grad


def gradient_overlap(g1, g2):
    """Cosine of the angle between two gradient tables."""
    g1 = np.asarray(g1, dtype=float).ravel()
    g2 = np.asarray(g2, dtype=float).ravel()
    if g1.shape != g2.shape:
        raise ValueError("gradient tables differ in shape")
    n1, n2 = np.linalg.norm(g1), np.linalg.norm(g2)
    if n1 == 0 or n2 == 0:
        raise UndefinedOverlapError("overlap undefined for a zero gradient")
    return float(np.clip(np.dot(g1, g2) / (n1 * n2), -1.0, 1.0))


def observable_reference_update(obj, cache):
    """Surrogate transfer objective for a pure-state observable problem.

    Final-time observables give ``PureState`` with target ``Q psi(T)``;
    integrated observables give ``StateTrajectory`` with targets ``Q(t_j) psi(t_j)``.
    Both use the current field in ``cache``.
    """
    if isinstance(obj, PureObservableFinal):
        psi_t = cache.final_propagator() @ obj.psi0
        target = obj.observable @ psi_t
        return PureState(obj.psi0, target, normalize=obj.normalize, check_target=False)
    if isinstance(obj, PureObservableIntegrated):
        if cache.left_valid < cache.n_steps:
            cache.refresh_left()
        targets = np.array(
            [obj.targets[j - 1] @ (cache.left[j] @ obj.psi0) for j in range(1, cache.n_steps + 1)]
        )
        surrogate = StateTrajectory.__new__(StateTrajectory)
        surrogate.psi0 = obj.psi0
        surrogate.dim = obj.dim
        _Integrated.__init__(surrogate, targets, obj.grid, obj.normalize)
        return surrogate
    raise TypeError("reference update applies to pure-state observable objectives only")
