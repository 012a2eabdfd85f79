"""Estimator-style front end: configure with keyword arguments, ``fit`` on a problem."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from seqkrotov.objectives import GradientMethod, fidelity, gradient
from seqkrotov.optimizer import (
    SWEEPS,
    GradientRule,
    IterationRecord,
    NewtonRule,
    OptimizationTrace,
    SweepEngine,
    TrustRegionRule,
    descent_diagnostics,
    parse_policy,
    penalty,
    pk_sweep,
    sweep,
)
from seqkrotov.propagation import ControlSystem, TimeGrid, propagate, validate_field

__all__ = ["ControlProblem", "SequentialOptimizer", "PKKrotov"]


@dataclass
class ControlProblem:
    """System, time grid, objective and initial field (zero when omitted)."""

    system: ControlSystem
    grid: TimeGrid
    objective: object
    initial_field: np.ndarray | None = None

    def __post_init__(self):
        self.objective.check_dim(self.system)
        if self.initial_field is None:
            self.initial_field = np.zeros((self.grid.n_steps, self.system.n_controls))
        self.initial_field = validate_field(self.initial_field, self.grid, self.system)

    def fidelity(self, field):
        return fidelity(self.objective, propagate(self.system, self.grid, field))


def _check_problem(problem):
    if not isinstance(problem, ControlProblem):
        raise TypeError(f"expected a ControlProblem, got {type(problem).__name__}")
    return problem


class _Base(BaseEstimator):
    def _start(self, problem):
        problem = _check_problem(problem)
        if self.max_iter < 0:
            raise ValueError("max_iter must be non-negative")
        self.method_ = GradientMethod.parse(self.method)
        cache = propagate(problem.system, problem.grid, problem.initial_field.copy())
        engine = SweepEngine(problem.objective, cache, self.method_, monotone=getattr(self, "monotone", True))
        self.trace_ = OptimizationTrace()
        g0 = gradient(problem.objective, propagate(problem.system, problem.grid, cache.field), engine.method)
        return problem, engine, float(np.linalg.norm(g0))

    def _stop(self, trace):
        last = trace[-1]
        if 1.0 - last.fidelity <= self.target_infidelity:
            return "target"
        w = self.stagnation_window
        if len(trace) > w:
            recent = trace.fidelity[-(w + 1) :]
            if np.all(np.abs(np.diff(recent)) < self.stagnation_tol):
                return "stagnation"
        return None

    def _finish(self, engine, reason):
        self.field_ = engine.cache.field.copy()
        self.fidelity_ = float(engine.F)
        self.n_iter_ = len(self.trace_) - 1
        self.stop_reason_ = reason if reason else "max_iter"
        return self

    def score(self, problem):
        """Fidelity of the fitted field on ``problem``."""
        check_is_fitted(self, "field_")
        return _check_problem(problem).fidelity(self.field_)

    def predict(self, problem):
        """Fitted control field (``(K, M)`` table)."""
        check_is_fitted(self, "field_")
        _check_problem(problem)
        return self.field_.copy()

    def diagnostics(self, mu=1e-6, gamma=1e3):
        """Sufficient-increase and bounded-step checks over all recorded steps."""
        check_is_fitted(self, "trace_")
        return descent_diagnostics(self.trace_.step_records(), mu=mu, gamma=gamma)


class SequentialOptimizer(_Base):
    """Sequential (one time step at a time) maximization of a control objective.

    Args:
        strategy: ``"forward"``, ``"back-and-forth"`` or ``"split"``.
        rule: ``"gradient"``, ``"newton"`` or ``"trust-region"``.
        policy: search-length policy for the gradient rule (``"band"``,
            ``"greedy"``, ``"overshoot:1.25"``, ``"fixed:200"``).
        alpha: initial search length; ``None`` uses the scalar-Hessian estimate.
        deferred: apply the search length found at a step only at the next step.
        method: gradient kernel (``"exact"``, ``"first-order"``, ``"series-paired:4"``, ...);
            ``None`` picks the objective's default.
        monotone: backtrack (and if needed reject) steps that lower the fidelity.
        max_iter: iteration limit.
        target_infidelity: stop once ``1 - F`` is at or below this value.
        stagnation_tol: fidelity change regarded as no progress.
        stagnation_window: number of consecutive no-progress iterations before stopping.
        newton_scale: multiplier of the Newton step.
        radius: initial trust radius.
    """

    def __init__(
        self,
        strategy="forward",
        rule="gradient",
        policy="band",
        alpha=None,
        deferred=True,
        method=None,
        monotone=True,
        max_iter=100,
        target_infidelity=0.0,
        stagnation_tol=1e-14,
        stagnation_window=10,
        newton_scale=1.0,
        radius=1.0,
    ):
        self.strategy = strategy
        self.rule = rule
        self.policy = policy
        self.alpha = alpha
        self.deferred = deferred
        self.method = method
        self.monotone = monotone
        self.max_iter = max_iter
        self.target_infidelity = target_infidelity
        self.stagnation_tol = stagnation_tol
        self.stagnation_window = stagnation_window
        self.newton_scale = newton_scale
        self.radius = radius

    def _make_rule(self):
        if self.rule == "gradient":
            return GradientRule(parse_policy(self.policy), self.alpha, self.deferred)
        if self.rule == "newton":
            return NewtonRule(self.newton_scale, self.radius)
        if self.rule == "trust-region":
            return TrustRegionRule(self.radius)
        raise ValueError(f"unknown update rule {self.rule!r}")

    def fit(self, problem, callback=None, step_hook=None):
        """Optimize ``problem.initial_field``.

        Args:
            problem: the :class:`ControlProblem`.
            callback: ``callback(record, field)`` after each iteration.
            step_hook: ``step_hook(engine, k, grad)`` after each local gradient.
        """
        if self.strategy not in SWEEPS:
            raise ValueError(f"unknown sweep strategy {self.strategy!r}; choose from {SWEEPS}")
        rule = self._make_rule()
        problem, engine, g0 = self._start(problem)
        if step_hook is not None:
            engine.step_hooks.append(step_hook)
        self.trace_.append(
            IterationRecord(0, float(engine.F), 0.0, float("nan"), g0, int(engine.cache.ops()), 0.0)
        )
        stepper = None
        reason = self._stop(self.trace_)
        n = 0
        while reason is None and n < self.max_iter:
            n += 1
            t0 = time.perf_counter()
            stepper, record = sweep(engine, rule, self.strategy, stepper, n=n, t0=t0)
            self.trace_.append(record)
            if callback is not None:
                callback(record, engine.cache.field)
            reason = self._stop(self.trace_)
        return self._finish(engine, reason)


class PKKrotov(_Base):
    """Penalized sequential update with forward/backward mixing parameters.

    Args:
        eta: forward-sweep mixing parameter in ``[0, 2]``.
        eta_back: backward-sweep mixing parameter in ``[0, 2]``.
        weight: penalty weight ``lambda`` (scalar or ``(K, M)`` table of ``w_m(t)``).
        cost: ``"static"`` (penalize ``|f|^2``) or ``"dynamic"`` (penalize the change
            between iterations).
        method: gradient kernel, ``None`` for the objective default.
        max_iter: iteration limit.
        target_infidelity: stop once ``1 - F`` is at or below this value.
        stagnation_tol: fidelity change regarded as no progress.
        stagnation_window: consecutive no-progress iterations before stopping.
    """

    monotone = False

    def __init__(
        self,
        eta=1.0,
        eta_back=0.0,
        weight=1.0,
        cost="static",
        method=None,
        max_iter=100,
        target_infidelity=0.0,
        stagnation_tol=1e-14,
        stagnation_window=10,
    ):
        self.eta = eta
        self.eta_back = eta_back
        self.weight = weight
        self.cost = cost
        self.method = method
        self.max_iter = max_iter
        self.target_infidelity = target_infidelity
        self.stagnation_tol = stagnation_tol
        self.stagnation_window = stagnation_window

    def fit(self, problem, callback=None):
        problem, engine, g0 = self._start(problem)
        w = np.broadcast_to(np.asarray(self.weight, dtype=float), problem.initial_field.shape)
        pen0 = penalty(engine.cache.field, problem.grid, w) if self.cost == "static" else 0.0
        self.trace_.append(
            IterationRecord(0, float(engine.F), pen0, float("nan"), g0, int(engine.cache.ops()), 0.0)
        )
        reason = self._stop(self.trace_)
        n = 0
        while reason is None and n < self.max_iter:
            n += 1
            t0 = time.perf_counter()
            _, record = pk_sweep(
                engine, self.eta, self.eta_back, w, self.cost, n=n, t0=t0
            )
            self.trace_.append(record)
            if callback is not None:
                callback(record, engine.cache.field)
            reason = self._stop(self.trace_)
        return self._finish(engine, reason)
