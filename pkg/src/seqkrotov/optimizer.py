"""Sequential-update engine.

One iteration visits time steps in the order given by a sweep strategy. At each
visited step the local gradient is computed from the current forward state and a
co-state that only depends on later steps, the step's amplitudes are changed, and
the change is propagated before moving on. Co-states are carried by the engine
itself; the :class:`~seqkrotov.propagation.PropagationCache` keeps the per-step
propagators and the left products.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field as dc_field

import numpy as np

from seqkrotov.curvature import (
    NotNegativeDefiniteError,
    local_hessian,
    newton_step,
    trsp_solve,
)
from seqkrotov.objectives import (
    GradientMethod,
    check_method,
    costates,
    default_method,
    step_gradient,
)

__all__ = [
    "XI_MIN",
    "NonAscentError",
    "NumericalFailure",
    "LineModel",
    "quadratic_line_model",
    "Fixed",
    "Greedy",
    "Overshoot",
    "BandControl",
    "parse_policy",
    "SWEEPS",
    "sweep_order",
    "GradientRule",
    "NewtonRule",
    "TrustRegionRule",
    "StepRecord",
    "IterationRecord",
    "OptimizationTrace",
    "SweepEngine",
    "sweep",
    "pk_sweep",
    "penalty",
    "critical_residuals",
    "descent_diagnostics",
    "default_alpha",
]

logger = logging.getLogger(__name__)

XI_MIN = 1e-3
FALLBACK_MULTIPLIER = 2.0
# slack for rounding when comparing fidelities of consecutive steps
MONOTONE_TOL = 1e-15
MAX_BACKTRACK = 8


class NonAscentError(ValueError):
    """Line model requested along a direction that is not an ascent direction."""


class NumericalFailure(FloatingPointError):
    """Non-finite fidelity or field encountered during a sweep."""


# ---------------------------------------------------------------------------
# line model and search-length policies


@dataclass(frozen=True)
class LineModel:
    xi: float
    alpha_star: float
    concave: bool


def quadratic_line_model(slope, gain, alpha0):
    """Quadratic model of ``F(alpha) - F(0)`` from its slope and one probe.

    Args:
        slope: ``F'(0)``, must be positive.
        gain: probe value ``F(alpha0) - F(0)``.
        alpha0: probe search length, positive.

    Returns:
        LineModel with ``xi = 1 - gain / (slope * alpha0)`` and the maximizer
        ``alpha0 / (2 xi)``; when ``xi <= XI_MIN`` the model is not usefully
        concave and ``alpha_star = 2 * alpha0``.
    """
    if not slope > 0:
        raise NonAscentError(f"slope must be positive, got {slope}")
    if not alpha0 > 0:
        raise ValueError(f"alpha0 must be positive, got {alpha0}")
    xi = 1.0 - gain / (slope * alpha0)
    if xi > XI_MIN:
        return LineModel(xi, alpha0 / (2.0 * xi), True)
    return LineModel(xi, FALLBACK_MULTIPLIER * alpha0, False)


class _Policy:
    name = "policy"
    adaptive = True

    def next_alpha(self, alpha, alpha_star):
        raise NotImplementedError

    def spec(self):
        return self.name


@dataclass(frozen=True)
class Fixed(_Policy):
    alpha: float = 1.0
    name = "fixed"
    adaptive = False

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("fixed search length must be positive")

    def next_alpha(self, alpha, alpha_star):
        return alpha

    def spec(self):
        return f"fixed:{self.alpha!r}"


@dataclass(frozen=True)
class Greedy(_Policy):
    name = "greedy"

    def next_alpha(self, alpha, alpha_star):
        return alpha_star


@dataclass(frozen=True)
class Overshoot(_Policy):
    factor: float = 1.25
    name = "overshoot"

    def __post_init__(self):
        if not self.factor > 0:
            raise ValueError("overshoot factor must be positive")

    def next_alpha(self, alpha, alpha_star):
        return self.factor * alpha_star

    def spec(self):
        return f"overshoot:{self.factor!r}"


@dataclass(frozen=True)
class BandControl(_Policy):
    """Keep ``alpha`` inside ``[r1, r2] * alpha_star`` by small multiplicative nudges."""

    r1: float = 2.0 / 3.0
    r2: float = 4.0 / 3.0
    shrink: float = 0.99
    grow: float = 1.01
    name = "band"

    def __post_init__(self):
        if not 0 < self.r1 <= self.r2:
            raise ValueError("band limits must satisfy 0 < r1 <= r2")
        if not (0 < self.shrink <= 1 <= self.grow):
            raise ValueError("need 0 < shrink <= 1 <= grow")

    def next_alpha(self, alpha, alpha_star):
        if alpha < self.r1 * alpha_star:
            return alpha * self.grow
        if alpha > self.r2 * alpha_star:
            return alpha * self.shrink
        return alpha


def parse_policy(spec):
    """Policy from ``"greedy"``, ``"band"``, ``"overshoot:1.25"`` or ``"fixed:200"``."""
    if isinstance(spec, _Policy):
        return spec
    name, _, arg = str(spec).partition(":")
    name = name.strip().lower()
    if name == "fixed":
        return Fixed(float(arg)) if arg else Fixed()
    if name == "greedy":
        return Greedy()
    if name == "overshoot":
        return Overshoot(float(arg)) if arg else Overshoot()
    if name in ("band", "bandcontrol", "band-control"):
        return BandControl()
    raise ValueError(f"unknown search-length policy {spec!r}")


# ---------------------------------------------------------------------------
# sweep orders

SWEEPS = ("forward", "back-and-forth", "split")


def sweep_order(strategy, n_steps):
    """Visited steps of one iteration as ``(k, direction)`` pairs."""
    K = n_steps
    if strategy == "forward":
        return [(k, "forward") for k in range(1, K + 1)]
    if strategy == "back-and-forth":
        return [(k, "forward") for k in range(1, K + 1)] + [
            (k, "backward") for k in range(K - 1, 1, -1)
        ]
    if strategy == "split":
        h = K // 2
        return [(k, "forward") for k in range(1, h + 1)] + [
            (k, "backward") for k in range(K, h, -1)
        ]
    raise ValueError(f"unknown sweep strategy {strategy!r}; choose from {SWEEPS}")


# ---------------------------------------------------------------------------
# update rules


@dataclass
class GradientRule:
    """``delta f_k = alpha * grad_k`` with ``alpha`` driven by a policy."""

    policy: _Policy = dc_field(default_factory=BandControl)
    alpha: float | None = None
    deferred: bool = True
    name = "gradient"


@dataclass
class NewtonRule:
    """``delta f_k = -scale * h^{-1} grad_k``; trust-region step where ``h`` is not negative definite."""

    scale: float = 1.0
    radius: float = 1.0
    name = "newton"


@dataclass
class TrustRegionRule:
    """Maximize the local quadratic model inside a ball whose radius adapts to the gain ratio."""

    radius: float = 1.0
    max_radius: float = 1e6
    name = "trust-region"


def default_alpha(system, grid):
    """``1 / |h|`` for the scalar Hessian ``-(dt^2/N) Re Tr(H_m H_n)`` (largest eigenvalue)."""
    hs = system.controls
    gram = np.real(np.einsum("mij,nji->mn", hs, hs)) / system.dim
    top = float(np.max(np.linalg.eigvalsh(gram)))
    if top <= 0:
        return 1.0
    return 1.0 / (grid.dt**2 * top)


# ---------------------------------------------------------------------------
# records


@dataclass
class StepRecord:
    k: int
    grad_norm: float
    step_norm: float
    gain: float
    alpha: float


@dataclass
class IterationRecord:
    n: int
    fidelity: float
    penalty: float
    alpha: float
    grad_norm: float
    ops: int
    wall_ms: float
    step_grad_norms: np.ndarray | None = None
    steps: list = dc_field(default_factory=list, repr=False)
    n_rejected: int = 0

    @property
    def infidelity(self):
        return 1.0 - self.fidelity

    @property
    def J(self):
        return self.fidelity - self.penalty


class OptimizationTrace:
    """Append-only list of :class:`IterationRecord` with array accessors."""

    columns = ("n", "fidelity", "infidelity", "J_value", "alpha", "grad_norm", "ops", "wall_ms")

    def __init__(self):
        self._records = []

    def append(self, record):
        if self._records:
            last = self._records[-1]
            if record.n <= last.n or record.ops < last.ops:
                raise ValueError("trace records must have increasing n and monotone counters")
        self._records.append(record)

    def __len__(self):
        return len(self._records)

    def __iter__(self):
        return iter(self._records)

    def __getitem__(self, i):
        return self._records[i]

    def array(self, name):
        if name == "J_value":
            name = "J"
        return np.array([getattr(r, name) for r in self._records], dtype=float)

    @property
    def fidelity(self):
        return self.array("fidelity")

    @property
    def infidelity(self):
        return self.array("infidelity")

    def rows(self):
        for r in self._records:
            yield (r.n, r.fidelity, r.infidelity, r.J, r.alpha, r.grad_norm, r.ops, r.wall_ms)

    def step_records(self):
        for r in self._records:
            yield from r.steps


# ---------------------------------------------------------------------------
# engine


class SweepEngine:
    """Mutable sweep state for one optimization run.

    Holds the objective, the cache, the co-states ``C_1..C_K`` and the current
    fidelity. ``sweep()`` performs one iteration of the chosen strategy.
    """

    def __init__(self, obj, cache, method=None, monotone=True):
        obj.check_dim(cache.system)
        self.obj = obj
        self.cache = cache
        self.system = cache.system
        self.grid = cache.grid
        self.method = GradientMethod.parse(method) or default_method(obj)
        check_method(obj, self.method)
        self.monotone = monotone
        self.scale = obj.scale(cache.grid)
        if cache.left_valid < cache.n_steps:
            cache.refresh_left()
        self.cs = costates(obj, cache)
        cache.counters["matmul"] += cache.n_steps - 1
        self.F = self._full_fidelity()
        # callables hook(engine, k, g) run after each local gradient
        self.step_hooks = []

    # helpers ---------------------------------------------------------------

    def _full_fidelity(self):
        obj, cache = self.obj, self.cache
        if not obj.integrated:
            return self.scale * obj.raw_value(self.cs[0], obj.state(cache.left[1]))
        total = sum(
            obj.raw_term(obj.state(cache.left[j]), j) for j in range(1, cache.n_steps + 1)
        )
        return self.scale * total

    def _state_at(self, k):
        """Forward quantity after step ``k`` from ``U_k`` and the current ``left[k-1]``."""
        cache = self.cache
        self.cache.counters["matmul"] += 1
        return self.obj.state(cache.U[k - 1] @ cache.left[k - 1])

    def _value(self, k, x, base_raw, base_F):
        raw = self.obj.raw_value(self.cs[k - 1], x)
        if self.obj.integrated:
            return base_F + self.scale * (raw - base_raw), raw
        return self.scale * raw, raw

    def local_gradient(self, k):
        """Gradient w.r.t. step ``k``; also returns the forward quantity used."""
        x = self._state_at(k)
        a = self.obj.raw_a(self.cs[k - 1], x)
        need_h = self.method.kind not in ("first-order", "exact")
        h = self.system.hamiltonian(self.cache.field[k - 1]) if need_h else None
        g = self.scale * step_gradient(a, self.system, self.cache.eig(k), h, self.grid.dt, self.method)
        self.cache.counters["grad"] += 1
        for hook in self.step_hooks:
            hook(self, k, g)
        return g, x

    def _apply(self, k, values, direction):
        mode = "forward" if direction == "forward" else "local"
        self.cache.update_step(k, values, mode)

    def try_step(self, k, direction, old, new, raw_old):
        """Set step ``k`` to ``new`` and return the resulting fidelity.

        Forward steps read the new state from ``left[k]``. Backward steps of
        final-time objectives pull the co-state through the new step and pair
        it with ``left[k-1]``; the pulled co-state is kept for the next step.
        """
        self._apply(k, new, direction)
        self._pending = None
        obj = self.obj
        if direction == "forward":
            F_new, _ = self._value(k, obj.state(self.cache.left[k]), raw_old, self.F)
        elif k > 1 and not obj.integrated:
            c = obj.pull(self.cs[k - 1], self.cache.U[k - 1])
            self.cache.counters["matmul"] += 1
            self._pending = (k, c)
            F_new = self.scale * obj.raw_value(c, obj.state(self.cache.left[k - 1]))
        else:
            F_new, _ = self._value(k, self._state_at(k), raw_old, self.F)
        if not np.isfinite(F_new):
            raise NumericalFailure(f"non-finite fidelity at step {k}")
        return F_new

    def revert(self, k, direction, old):
        self._apply(k, old, direction)
        self._pending = None

    def _pull(self, k):
        """Co-state ``C_{k-1}`` from ``C_k`` through the current step ``k``."""
        c = self.obj.pull(self.cs[k - 1], self.cache.U[k - 1])
        if self.obj.integrated:
            c = c + self.obj.target_term(k - 1)
        self.cs[k - 2] = c
        self.cache.counters["matmul"] += 1

    def _finish_backward(self, k):
        pending = getattr(self, "_pending", None)
        if pending is not None and pending[0] == k:
            self.cs[k - 2] = pending[1]
        else:
            self._pull(k)
        self._pending = None

    def _advance(self, k):
        self.cache.advance_left(k)

    # one iteration ---------------------------------------------------------

    def run_order(self, order, step_fn):
        """Visit ``order`` (strategy steps), calling ``step_fn(k, direction)``.

        Between direction changes the engine performs the non-updating
        propagation the strategy needs (split: propagate left products to ``K``
        before the backward half and back-propagate co-states afterwards).
        """
        K = self.grid.n_steps
        cache = self.cache
        prev_dir = None
        for k, direction in order:
            if direction == "backward" and prev_dir != "backward":
                # left products must be current up to k-1 and C_k must be current
                for j in range(cache.left_valid + 1, k):
                    self._advance(j)
                for j in range(K, k, -1):
                    self._pull(j)
            self._pending = None
            step_fn(k, direction)
            if direction == "backward" and k > 1:
                self._finish_backward(k)
            prev_dir = direction
        last_k, last_dir = order[-1]
        if last_dir == "forward":
            # product pass: rebuild all co-states for the next iteration
            for j in range(K, 1, -1):
                self._pull(j)
        else:
            # back-propagate co-states below the last updated step
            for j in range(last_k - 1, 1, -1):
                self._pull(j)

    def current_penalty(self):
        return 0.0


def _norm(v):
    return float(np.linalg.norm(v))


class _GradientStepper:
    def __init__(self, engine, rule, alpha):
        self.engine = engine
        self.rule = rule
        self.policy = rule.policy
        self.alpha = float(alpha)
        self.steps = []
        self.rejected = 0

    def _model(self, slope, gain, alpha):
        return quadratic_line_model(slope, gain, alpha)

    def __call__(self, k, direction):
        eng = self.engine
        g, x_old = eng.local_gradient(k)
        raw_old = eng.obj.raw_value(eng.cs[k - 1], x_old)
        slope = float(g @ g)
        old = eng.cache.field[k - 1].copy()
        if not slope > 0:
            self.steps.append(StepRecord(k, 0.0, 0.0, 0.0, self.alpha))
            if direction == "forward":
                eng._advance(k)
            return
        F0 = eng.F
        alpha = self.alpha
        F_new = eng.try_step(k, direction, old, old + alpha * g, raw_old)
        model = self._model(slope, F_new - F0, alpha)
        if not self.rule.deferred and self.policy.adaptive:
            nxt = self.policy.next_alpha(alpha, model.alpha_star)
            if nxt != alpha:
                alpha = nxt
                F_new = eng.try_step(k, direction, old, old + alpha * g, raw_old)
            self.alpha = alpha
        tries = 0
        used = alpha
        while eng.monotone and F_new < F0 - MONOTONE_TOL and tries < MAX_BACKTRACK:
            # the failed probe defines a model whose maximizer lies below used / 2
            bt = self._model(slope, F_new - F0, used)
            used = min(bt.alpha_star, 0.5 * used)
            F_new = eng.try_step(k, direction, old, old + used * g, raw_old)
            tries += 1
        if eng.monotone and F_new < F0 - MONOTONE_TOL:
            eng.revert(k, direction, old)
            F_new = F0
            used = 0.0
            self.rejected += 1
        if self.rule.deferred and self.policy.adaptive:
            self.alpha = self.policy.next_alpha(self.alpha, model.alpha_star)
        eng.F = F_new
        self.steps.append(StepRecord(k, float(np.sqrt(slope)), used * float(np.sqrt(slope)), F_new - F0, used))


class _CurvatureStepper:
    """Newton and trust-region steps from the local Hessian."""

    def __init__(self, engine, rule):
        self.engine = engine
        self.rule = rule
        self.radius = float(rule.radius)
        self.steps = []
        self.rejected = 0
        self.alpha = float("nan")

    def _hessian(self, k, x_old):
        eng = self.engine
        obj, cache = eng.obj, eng.cache
        # the exact gate Hessian needs the co-state and left[k-1]
        return local_hessian(obj, _HessianView(cache, k), k, eng.cs[k - 1], cache.left[k - 1], eng.method)

    def __call__(self, k, direction):
        eng = self.engine
        g, x_old = eng.local_gradient(k)
        raw_old = eng.obj.raw_value(eng.cs[k - 1], x_old)
        old = eng.cache.field[k - 1].copy()
        gnorm = _norm(g)
        if gnorm == 0:
            self.steps.append(StepRecord(k, 0.0, 0.0, 0.0, 0.0))
            if direction == "forward":
                eng._advance(k)
            return
        h = self._hessian(k, x_old)
        use_tr = isinstance(self.rule, TrustRegionRule)
        d = None
        if not use_tr:
            try:
                d = self.rule.scale * newton_step(h, g)
            except NotNegativeDefiniteError:
                use_tr = True
        if use_tr:
            res = trsp_solve(-h, -g, self.radius)
            d = res.x
        predicted = float(g @ d + 0.5 * d @ h @ d)
        F0 = eng.F
        F_new = eng.try_step(k, direction, old, old + d, raw_old)
        actual = F_new - F0
        if use_tr and predicted > 0:
            ratio = actual / predicted
            max_r = getattr(self.rule, "max_radius", 1e6)
            if ratio > 0.75 and _norm(d) >= 0.99 * self.radius:
                self.radius = min(2.0 * self.radius, max_r)
            elif ratio < 0.25:
                self.radius = 0.5 * self.radius
        step = d
        tries = 0
        while eng.monotone and F_new < F0 - MONOTONE_TOL and tries < MAX_BACKTRACK:
            step = 0.5 * step
            F_new = eng.try_step(k, direction, old, old + step, raw_old)
            tries += 1
        if eng.monotone and F_new < F0 - MONOTONE_TOL:
            eng.revert(k, direction, old)
            F_new = F0
            step = np.zeros_like(step)
            self.rejected += 1
        eng.F = F_new
        self.steps.append(StepRecord(k, gnorm, _norm(step), F_new - F0, float("nan")))


class _HessianView:
    """Adapter exposing ``left[k-1]`` as current to the exact Hessian routine."""

    def __init__(self, cache, k):
        self._cache = cache
        self.system = cache.system
        self.grid = cache.grid
        self.field = cache.field
        self.left = cache.left
        self.left_valid = k - 1
        self.right_valid = cache.n_steps

    def eig(self, k):
        return self._cache.eig(k)


def _make_stepper(engine, rule, alpha):
    if isinstance(rule, GradientRule):
        return _GradientStepper(engine, rule, alpha)
    if isinstance(rule, (NewtonRule, TrustRegionRule)):
        return _CurvatureStepper(engine, rule)
    raise TypeError(f"unsupported update rule {rule!r}")


def sweep(engine, rule, strategy="forward", stepper=None, n=1, t0=None):
    """Run one iteration of ``strategy`` and return ``(stepper, IterationRecord)``.

    Pass the returned stepper back in on the next call so that the search length
    and trust radius carry over between iterations.
    """
    t0 = time.perf_counter() if t0 is None else t0
    if stepper is None:
        alpha = rule.alpha if isinstance(rule, GradientRule) and rule.alpha else None
        if isinstance(rule, GradientRule) and isinstance(rule.policy, Fixed):
            alpha = rule.policy.alpha
        if alpha is None:
            alpha = default_alpha(engine.system, engine.grid)
        stepper = _make_stepper(engine, rule, alpha)
    start = len(stepper.steps)
    rejected0 = stepper.rejected
    engine.run_order(sweep_order(strategy, engine.grid.n_steps), stepper)
    steps = stepper.steps[start:]
    norms = np.array([s.grad_norm for s in steps])
    record = IterationRecord(
        n=n,
        fidelity=float(engine.F),
        penalty=0.0,
        alpha=float(stepper.alpha),
        grad_norm=float(np.sqrt(np.sum(norms**2))),
        ops=int(engine.cache.ops()),
        wall_ms=1e3 * (time.perf_counter() - t0),
        step_grad_norms=norms,
        steps=steps,
        n_rejected=stepper.rejected - rejected0,
    )
    return stepper, record


# ---------------------------------------------------------------------------
# penalized (PK) update


def _weights(weights, grid, n_controls):
    w = np.broadcast_to(np.asarray(weights, dtype=float), (grid.n_steps, n_controls)).copy()
    if not np.all(w > 0):
        raise ValueError("penalty weights must be positive")
    return w


def penalty(field, grid, weights, reference=None):
    """``(1/2) sum_k w_mk dt (f_mk - ref_mk)^2``; ``reference=None`` is the static cost."""
    field = np.asarray(field, dtype=float)
    diff = field if reference is None else field - reference
    return 0.5 * grid.dt * float(np.sum(weights * diff**2))


class _PKStepper:
    def __init__(self, engine, eta, weights, cost):
        self.engine = engine
        self.eta = eta
        self.weights = weights
        self.cost = cost
        self.steps = []
        self.rejected = 0
        self.alpha = float("nan")

    def __call__(self, k, direction):
        eng = self.engine
        eta = self.eta if direction == "forward" else self.eta_back
        g, x_old = eng.local_gradient(k)
        raw_old = eng.obj.raw_value(eng.cs[k - 1], x_old)
        old = eng.cache.field[k - 1].copy()
        w = self.weights[k - 1]
        dt = eng.grid.dt
        if self.cost == "static":
            new = (1.0 - eta) * old + eta * g / (w * dt)
        else:
            new = old + eta * g / (w * dt)
        F0 = eng.F
        if np.array_equal(new, old):
            F_new = F0
            if direction == "forward":
                eng._advance(k)
        else:
            F_new = eng.try_step(k, direction, old, new, raw_old)
        eng.F = F_new
        self.steps.append(StepRecord(k, _norm(g), _norm(new - old), F_new - F0, float("nan")))


def pk_sweep(engine, eta=1.0, eta_back=0.0, weights=1.0, cost="static", reference=None, n=1, t0=None):
    """One PK iteration: forward update with ``eta``, then backward update with ``eta_back``.

    Static cost: ``f <- (1 - eta) f + (eta / (w dt)) dF/df_k``. Dynamic cost
    (``"dynamic"``): ``f <- f + (eta / (w dt)) dF/df_k``, i.e. a gradient step
    penalized against the previous iterate. With ``eta_back = 0`` the backward
    pass only propagates co-states.

    Returns:
        ``(field_before, IterationRecord)``; the record's penalty is the static
        cost of the new field or the dynamic cost relative to ``field_before``.
    """
    for name, value in (("eta", eta), ("eta_back", eta_back)):
        if not 0.0 <= value <= 2.0:
            raise ValueError(f"{name} must lie in [0, 2], got {value}")
    if cost not in ("static", "dynamic"):
        raise ValueError(f"unknown cost {cost!r}")
    t0 = time.perf_counter() if t0 is None else t0
    grid = engine.grid
    w = _weights(weights, grid, engine.system.n_controls)
    before = engine.cache.field.copy()
    stepper = _PKStepper(engine, eta, w, cost)
    stepper.eta_back = eta_back
    K = grid.n_steps
    order = [(k, "forward") for k in range(1, K + 1)]
    if eta_back > 0:
        order += [(k, "backward") for k in range(K, 0, -1)]
    engine.run_order(order, stepper)
    ref = None if cost == "static" else before
    pen = penalty(engine.cache.field, grid, w, ref)
    norms = np.array([s.grad_norm for s in stepper.steps])
    record = IterationRecord(
        n=n,
        fidelity=float(engine.F),
        penalty=pen,
        alpha=float("nan"),
        grad_norm=float(np.sqrt(np.sum(norms**2))),
        ops=int(engine.cache.ops()),
        wall_ms=1e3 * (time.perf_counter() - t0),
        step_grad_norms=norms,
        steps=stepper.steps,
    )
    return before, record


def critical_residuals(field, gradient_table, grid, weights=1.0):
    """Discrete ``L2`` norms of ``dJ/df`` and ``dF/df`` for the static cost.

    The functional derivative is approximated by ``gradient / dt``; the penalty
    contributes ``-w f``.

    Returns:
        dict with keys ``"J"`` and ``"F"``.
    """
    field = np.asarray(field, dtype=float)
    g = np.asarray(gradient_table, dtype=float) / grid.dt
    w = _weights(weights, grid, field.shape[1])
    dJ = g - w * field
    return {
        "J": float(np.sqrt(grid.dt * np.sum(dJ**2))),
        "F": float(np.sqrt(grid.dt * np.sum(g**2))),
    }


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class DescentReport:
    sufficient_decrease: np.ndarray
    bounded_step: np.ndarray
    mu: float
    gamma: float

    @property
    def compliant(self):
        return self.sufficient_decrease & self.bounded_step

    @property
    def fraction(self):
        c = self.compliant
        return float(np.mean(c)) if c.size else 1.0

    @property
    def n_steps(self):
        return int(self.compliant.size)


def descent_diagnostics(steps, mu=1e-6, gamma=1e3, atol=1e-13):
    """Check per-step sufficient increase and bounded step length.

    A step is compliant when ``gain >= mu * |g|^2 - atol`` and
    ``|delta f| <= gamma * |g| + atol``; ``atol`` absorbs rounding in the gains.

    Args:
        steps: iterable of :class:`StepRecord` (e.g. ``trace.step_records()``).
        mu: sufficient-increase constant.
        gamma: step-length bound.
        atol: absolute slack.
    """
    if not (mu > 0 and gamma > 0):
        raise ValueError("mu and gamma must be positive")
    steps = list(steps)
    g = np.array([s.grad_norm for s in steps])
    gain = np.array([s.gain for s in steps])
    dx = np.array([s.step_norm for s in steps])
    return DescentReport(
        sufficient_decrease=gain >= mu * g**2 - atol,
        bounded_step=dx <= gamma * g + atol,
        mu=mu,
        gamma=gamma,
    )
