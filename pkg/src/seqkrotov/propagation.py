"""Time grids, control systems and cached piecewise-constant propagation.

A field is a plain ``(K, M)`` float array: row ``k-1`` holds the amplitudes applied
on the interval ``[t_{k-1}, t_k)``.
"""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np

from seqkrotov.operators import (
    Eigendecomposition,
    InvalidOperatorError,
    check_hermitian,
    polar_unitary,
)

__all__ = [
    "TimeGrid",
    "ControlSystem",
    "PropagationCache",
    "propagate",
    "local_update",
    "validate_field",
]

logger = logging.getLogger(__name__)

UNITARITY_REPAIR_TOL = 1e-9
_CHECK_EVERY = 64


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_k = k * dt`` for ``k = 0..n_steps``."""

    n_steps: int
    dt: float

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")
        if not (self.dt > 0 and np.isfinite(self.dt)):
            raise ValueError(f"dt must be positive and finite, got {self.dt}")
        object.__setattr__(self, "n_steps", int(self.n_steps))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def T(self):
        return self.n_steps * self.dt

    @property
    def times(self):
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True, eq=False)
class ControlSystem:
    """``H[f] = drift + sum_m f_m * controls[m]`` on an ``N``-dimensional space."""

    drift: np.ndarray
    controls: np.ndarray

    def __post_init__(self):
        drift = check_hermitian(self.drift, tol=1e-10, name="drift")
        controls = np.asarray(self.controls, dtype=complex)
        if controls.ndim == 2:
            controls = controls[None]
        if controls.ndim != 3 or controls.shape[1:] != drift.shape:
            raise InvalidOperatorError(
                f"controls must have shape (M, {drift.shape[0]}, {drift.shape[0]}), "
                f"got {controls.shape}"
            )
        for m, h in enumerate(controls):
            check_hermitian(h, tol=1e-10, name=f"control {m}")
        drift.setflags(write=False)
        controls.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "controls", controls)

    @property
    def dim(self):
        return self.drift.shape[0]

    @property
    def n_controls(self):
        return self.controls.shape[0]

    def hamiltonian(self, amplitudes):
        amplitudes = np.asarray(amplitudes, dtype=float)
        return self.drift + np.tensordot(amplitudes, self.controls, axes=1)


def validate_field(field, grid, system):
    field = np.array(field, dtype=float)
    if field.ndim == 1 and system.n_controls == 1:
        field = field[:, None]
    expected = (grid.n_steps, system.n_controls)
    if field.shape != expected:
        raise ValueError(f"field has shape {field.shape}, expected {expected}")
    if not np.all(np.isfinite(field)):
        raise ValueError("field contains non-finite entries")
    return field


def _step(system, amplitudes, dt, counters):
    h = system.hamiltonian(amplitudes)
    h = 0.5 * (h + h.conj().T)
    energies, vectors = np.linalg.eigh(h)
    eig = Eigendecomposition(-1j * energies, vectors)
    u = (vectors * np.exp(-1j * dt * energies)) @ vectors.conj().T
    counters["exp"] += 1
    counters["matmul"] += 1
    return u, eig


class PropagationCache:
    """Per-step propagators, their eigendecompositions and running products.

    ``U[k-1]`` is the propagator of step ``k``; ``left[k] = U_k ... U_1`` and
    ``right[k] = U_K ... U_{k+1}`` so that ``right[k] @ left[k]`` is the full
    propagator for every ``k`` whose products are current.

    During a sweep only the products on the swept side are maintained;
    ``left_valid`` and ``right_valid`` record which entries are current.
    """

    def __init__(self, system, grid, field):
        self.system = system
        self.grid = grid
        self.field = validate_field(field, grid, system)
        self.counters = Counter(exp=0, matmul=0, grad=0)
        K, N = grid.n_steps, system.dim
        self.U = np.empty((K, N, N), dtype=complex)
        self.eigvals = np.empty((K, N), dtype=complex)
        self.eigvecs = np.empty((K, N, N), dtype=complex)
        self.left = np.empty((K + 1, N, N), dtype=complex)
        self.right = np.empty((K + 1, N, N), dtype=complex)
        for k in range(1, K + 1):
            self._recompute(k)
        self.refresh()

    @property
    def n_steps(self):
        return self.grid.n_steps

    def eig(self, k) -> Eigendecomposition:
        return Eigendecomposition(self.eigvals[k - 1], self.eigvecs[k - 1])

    def _recompute(self, k):
        u, eig = _step(self.system, self.field[k - 1], self.grid.dt, self.counters)
        self.U[k - 1] = u
        self.eigvals[k - 1] = eig.values
        self.eigvecs[k - 1] = eig.vectors

    def _repair(self, a, label):
        residual = np.max(np.abs(a.conj().T @ a - np.eye(a.shape[0])))
        if residual > UNITARITY_REPAIR_TOL:
            logger.info("re-unitarizing %s (residual %.2e)", label, residual)
            return polar_unitary(a)
        return a

    # product maintenance -------------------------------------------------

    def advance_left(self, k):
        """``left[k] = U_k left[k-1]`` (requires ``left[k-1]`` current)."""
        if self.left_valid < k - 1:
            raise RuntimeError(f"left product {k - 1} is stale")
        self.left[k] = self.U[k - 1] @ self.left[k - 1]
        self.counters["matmul"] += 1
        if k % _CHECK_EVERY == 0:
            self.left[k] = self._repair(self.left[k], f"left[{k}]")
        self.left_valid = k

    def advance_right(self, k):
        """``right[k-1] = right[k] U_k`` (requires ``right[k]`` current)."""
        if self.right_valid > k:
            raise RuntimeError(f"right product {k} is stale")
        self.right[k - 1] = self.right[k] @ self.U[k - 1]
        self.counters["matmul"] += 1
        if (self.n_steps - k + 1) % _CHECK_EVERY == 0:
            self.right[k - 1] = self._repair(self.right[k - 1], f"right[{k - 1}]")
        self.right_valid = k - 1

    def refresh_left(self, start=1):
        N = self.system.dim
        if start <= 1:
            self.left[0] = np.eye(N)
            self.left_valid = 0
            start = 1
        for k in range(start, self.n_steps + 1):
            self.advance_left(k)

    def refresh_right(self, stop=None):
        """Recompute ``right[j]`` for ``j`` from ``stop - 1`` down to 0."""
        K, N = self.n_steps, self.system.dim
        if stop is None or stop >= K:
            self.right[K] = np.eye(N)
            self.right_valid = K
            stop = K
        for k in range(stop, 0, -1):
            self.advance_right(k)

    def refresh(self):
        self.left_valid = 0
        self.right_valid = self.n_steps
        self.refresh_left()
        self.refresh_right()

    # updates -------------------------------------------------------------

    def update_step(self, k, new_values, direction=None):
        """Replace the amplitudes of step ``k`` and recompute its propagator.

        ``direction="forward"`` extends the left products through ``k``;
        ``"backward"`` extends the right products down to ``k-1``; ``"local"``
        touches no products (the caller tracks its own co-states); ``None``
        rebuilds both product chains.
        """
        if not 1 <= k <= self.n_steps:
            raise IndexError(f"step index {k} outside 1..{self.n_steps}")
        new_values = np.asarray(new_values, dtype=float).reshape(self.system.n_controls)
        if not np.all(np.isfinite(new_values)):
            raise ValueError("non-finite field amplitudes")
        self.field[k - 1] = new_values
        self._recompute(k)
        if direction == "forward":
            self.advance_left(k)
            self.right_valid = max(self.right_valid, k)
        elif direction == "backward":
            self.advance_right(k)
            self.left_valid = min(self.left_valid, k - 1)
        elif direction == "local":
            self.left_valid = min(self.left_valid, k - 1)
            self.right_valid = max(self.right_valid, k)
        elif direction is None:
            self.refresh()
        else:
            raise ValueError(f"unknown direction {direction!r}")
        return self

    def final_propagator(self):
        """``U_f(T, 0)`` from a split point where both product chains are current."""
        if self.right_valid > self.left_valid:
            raise RuntimeError("no split point with current products; call refresh()")
        j = self.left_valid
        return self.right[j] @ self.left[j]

    def ops(self):
        """Matrix exponentials plus matrix products plus step-gradient evaluations."""
        return self.counters["exp"] + self.counters["matmul"] + self.counters["grad"]


def propagate(system, grid, field) -> PropagationCache:
    """Propagate ``field`` on ``grid`` and return the populated cache."""
    return PropagationCache(system, grid, field)


def local_update(cache, system, field, k, new_values, direction=None):
    """Write ``new_values`` into step ``k`` of ``field`` and of ``cache``.

    Only step ``k``'s propagator is recomputed; products are extended in the
    given sweep direction (see :meth:`PropagationCache.update_step`).
    """
    if system is not cache.system:
        raise ValueError("cache was built for a different system")
    cache.update_step(k, new_values, direction)
    if field is not None and field is not cache.field:
        field[k - 1] = cache.field[k - 1]
    return cache
