import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqkrotov.estimators import ControlProblem, PKKrotov, SequentialOptimizer
from seqkrotov.objectives import GateReal, PureState, gradient
from seqkrotov.operators import haar_unitary
from seqkrotov.optimizer import (
    BandControl,
    Fixed,
    Greedy,
    GradientRule,
    NonAscentError,
    Overshoot,
    StepRecord,
    SweepEngine,
    critical_residuals,
    default_alpha,
    descent_diagnostics,
    parse_policy,
    quadratic_line_model,
    sweep,
    sweep_order,
)
from seqkrotov.problems import Problem1Config, problem1
from seqkrotov.propagation import ControlSystem, TimeGrid, propagate

from conftest import random_state, random_system

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SZ = np.diag([1.0, -1.0]).astype(complex)


def small_chain(seed=0, n_steps=60, **kw):
    return problem1(Problem1Config(n_qubits=3, n_steps=n_steps, seed=seed, **kw))


def test_line_model_exact_quadratic():
    m = quadratic_line_model(1.0, 0.0, 1.0)
    assert m.xi == pytest.approx(1.0)
    assert m.alpha_star == pytest.approx(0.5)
    assert m.concave


def test_line_model_linear_fallback():
    m = quadratic_line_model(2.0, 2.0 * 0.7, 0.7)
    assert m.xi == pytest.approx(0.0, abs=1e-15)
    assert m.alpha_star == pytest.approx(1.4)
    assert not m.concave


def test_line_model_rejects_non_ascent():
    with pytest.raises(NonAscentError):
        quadratic_line_model(0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        quadratic_line_model(1.0, 0.1, -1.0)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.1, 10), st.floats(0.1, 10), st.floats(0.01, 5))
def test_line_model_recovers_parabola(slope, curv, alpha0):
    gain = slope * alpha0 - 0.5 * curv * alpha0**2
    m = quadratic_line_model(slope, gain, alpha0)
    if m.concave:
        assert m.alpha_star == pytest.approx(slope / curv, rel=1e-9)


def test_line_model_tracks_true_fidelity():
    prob = small_chain()
    cache = propagate(prob.system, prob.grid, prob.initial_field.copy())
    g = gradient(prob.objective, cache)
    k = 30
    gk = g[k - 1]
    slope = float(gk @ gk)

    def F(a):
        f = prob.initial_field.copy()
        f[k - 1] += a * gk
        return prob.fidelity(f)

    F0 = F(0.0)
    alpha0 = default_alpha(prob.system, prob.grid)
    # one refinement, as the search-length policy does over the first steps
    alpha0 = quadratic_line_model(slope, F(alpha0) - F0, alpha0).alpha_star
    m = quadratic_line_model(slope, F(alpha0) - F0, alpha0)
    alphas = np.linspace(0, 2 * m.alpha_star, 41)
    true = np.array([F(a) - F0 for a in alphas])
    model = slope * alphas * (1 - m.xi * alphas / alpha0)
    assert np.max(np.abs(true - model)) <= 0.15 * np.max(true)
    assert abs(alphas[np.argmax(true)] - m.alpha_star) <= 0.1 * m.alpha_star


def test_policies():
    assert Fixed(3.0).next_alpha(3.0, 100.0) == 3.0
    assert Greedy().next_alpha(1.0, 7.0) == 7.0
    assert Overshoot(1.25).next_alpha(1.0, 4.0) == pytest.approx(5.0)
    band = BandControl()
    assert band.next_alpha(1.0, 10.0) == pytest.approx(1.01)
    assert band.next_alpha(10.0, 1.0) == pytest.approx(9.9)
    assert band.next_alpha(1.0, 1.0) == 1.0
    assert parse_policy("fixed:200") == Fixed(200.0)
    assert parse_policy("overshoot:1.5") == Overshoot(1.5)
    assert isinstance(parse_policy("band"), BandControl)
    with pytest.raises(ValueError):
        parse_policy("wild")
    with pytest.raises(ValueError):
        Fixed(0.0)
    with pytest.raises(ValueError):
        BandControl(r1=2.0, r2=1.0)


def test_sweep_orders():
    assert sweep_order("forward", 4) == [(1, "forward"), (2, "forward"), (3, "forward"), (4, "forward")]
    assert [k for k, _ in sweep_order("back-and-forth", 5)] == [1, 2, 3, 4, 5, 4, 3, 2]
    split = sweep_order("split", 6)
    assert split == [(1, "forward"), (2, "forward"), (3, "forward"), (6, "backward"), (5, "backward"), (4, "backward")]
    with pytest.raises(ValueError):
        sweep_order("random", 4)


@pytest.mark.parametrize("strategy", ["forward", "back-and-forth", "split"])
def test_each_step_visited(strategy):
    K = 9
    ks = sorted({k for k, _ in sweep_order(strategy, K)})
    assert ks == list(range(1, K + 1))


def test_single_step_fixed_alpha_matches_direct_evaluation():
    system = ControlSystem(0.3 * SZ, np.array([SX]))
    grid = TimeGrid(1, 0.2)
    obj = GateReal(haar_unitary(2, np.random.default_rng(0)))
    field = np.array([[0.1]])
    cache = propagate(system, grid, field.copy())
    g = gradient(obj, cache)
    engine = SweepEngine(obj, cache, monotone=False)
    _, record = sweep(engine, GradientRule(Fixed(0.5), deferred=True), "forward")
    expected_field = field + 0.5 * g
    assert np.allclose(cache.field, expected_field, atol=1e-15)
    direct = propagate(system, grid, expected_field)
    from seqkrotov.objectives import fidelity

    assert record.fidelity == pytest.approx(fidelity(obj, direct), abs=1e-13)


def test_zero_gradient_leaves_field_unchanged():
    system = ControlSystem(np.zeros((2, 2)), np.array([SX]))
    grid = TimeGrid(5, 0.1)
    # |0> -> |0> with no drift sits at the maximum
    obj = PureState(np.array([1.0, 0.0]), np.array([1.0, 0.0]))
    est = SequentialOptimizer(max_iter=3).fit(ControlProblem(system, grid, obj))
    assert np.all(est.field_ == 0)
    assert est.fidelity_ == pytest.approx(1.0)


@pytest.mark.parametrize("strategy", ["forward", "back-and-forth", "split"])
def test_fidelity_matches_fresh_propagation(strategy):
    prob = small_chain(n_steps=40)
    est = SequentialOptimizer(strategy=strategy, max_iter=3).fit(prob)
    assert est.fidelity_ == pytest.approx(prob.fidelity(est.field_), abs=1e-10)
    assert est.score(prob) == pytest.approx(est.fidelity_, abs=1e-10)


@pytest.mark.parametrize("policy", ["greedy", "band"])
def test_monotone_gradient_sweeps(policy):
    prob = small_chain(seed=3)
    est = SequentialOptimizer(policy=policy, max_iter=20).fit(prob)
    F = est.trace_.fidelity
    assert np.min(np.diff(F)) >= -1e-12
    assert F[-1] > F[0]


@pytest.mark.parametrize("strategy", ["back-and-forth", "split"])
def test_monotone_other_strategies(strategy):
    prob = small_chain(seed=4, n_steps=40)
    est = SequentialOptimizer(strategy=strategy, max_iter=10).fit(prob)
    assert np.min(np.diff(est.trace_.fidelity)) >= -1e-12


@pytest.mark.parametrize("rule", ["newton", "trust-region"])
def test_curvature_rules_increase_fidelity(rule):
    prob = small_chain(seed=5, n_steps=40)
    est = SequentialOptimizer(rule=rule, max_iter=8).fit(prob)
    F = est.trace_.fidelity
    assert np.min(np.diff(F)) >= -1e-12
    assert F[-1] > F[0] + 0.1


def test_deferred_and_immediate_alpha_agree():
    prob = small_chain(seed=1)
    tails = []
    for deferred in (True, False):
        est = SequentialOptimizer(policy="band", deferred=deferred, max_iter=30).fit(prob)
        tails.append(np.median(est.trace_.array("alpha")[-5:]))
    assert abs(tails[0] - tails[1]) / tails[0] <= 0.05


def test_gradient_rebound():
    ratios = []
    for seed in range(3):
        prob = small_chain(seed=seed)
        est = SequentialOptimizer(max_iter=8).fit(prob)
        recs = list(est.trace_)[1:]
        for a, b in zip(recs[:-1], recs[1:]):
            ratios.append(b.step_grad_norms[0] / a.step_grad_norms[-1])
    assert np.median(ratios) > 1.0


def test_op_count_per_forward_iteration():
    prob = small_chain(n_steps=30)
    est = SequentialOptimizer(policy="fixed:50", monotone=False, max_iter=3).fit(prob)
    ops = np.diff(est.trace_.array("ops"))
    assert np.all(ops == ops[0])
    assert ops[0] > 0


def test_termination_on_target():
    prob = small_chain(n_steps=40)
    est = SequentialOptimizer(max_iter=50, target_infidelity=0.9).fit(prob)
    assert est.stop_reason_ == "target"
    est = SequentialOptimizer(max_iter=2).fit(prob)
    assert est.stop_reason_ == "max_iter" and est.n_iter_ == 2


def test_estimator_params_and_validation():
    est = SequentialOptimizer(strategy="split", policy="greedy")
    assert est.get_params()["strategy"] == "split"
    with pytest.raises(ValueError):
        SequentialOptimizer(strategy="random").fit(small_chain(n_steps=10))
    with pytest.raises(ValueError):
        SequentialOptimizer(rule="bfgs").fit(small_chain(n_steps=10))
    with pytest.raises(TypeError):
        SequentialOptimizer().fit("not a problem")


def test_pk_zero_mixing_leaves_field():
    rng = np.random.default_rng(0)
    system = random_system(rng, 3, 2)
    grid = TimeGrid(10, 0.1)
    field = rng.uniform(-1, 1, (10, 2))
    prob = ControlProblem(system, grid, PureState(random_state(rng, 3), random_state(rng, 3)), field)
    est = PKKrotov(eta=0.0, eta_back=0.0, max_iter=3).fit(prob)
    assert np.array_equal(est.field_, field)
    assert np.ptp(est.trace_.fidelity) <= 1e-14


def test_pk_dynamic_cost_is_monotone():
    prob = small_chain(seed=2, n_steps=60)
    est = PKKrotov(eta=1.0, eta_back=1.0, weight=1.0, cost="dynamic", max_iter=15).fit(prob)
    assert np.min(np.diff(est.trace_.fidelity)) >= -1e-12


def test_pk_large_weight_shrinks_updates():
    prob = small_chain(seed=2, n_steps=60)
    small = PKKrotov(weight=0.1, max_iter=5).fit(prob)
    large = PKKrotov(weight=10.0, max_iter=5).fit(prob)
    assert np.linalg.norm(large.field_) < np.linalg.norm(small.field_)
    assert large.fidelity_ < small.fidelity_


def test_pk_static_update_formula():
    system = ControlSystem(0.3 * SZ, np.array([SX]))
    grid = TimeGrid(1, 0.2)
    obj = GateReal(haar_unitary(2, np.random.default_rng(1)))
    field = np.array([[0.4]])
    g = gradient(obj, propagate(system, grid, field))
    est = PKKrotov(eta=0.5, weight=2.0, max_iter=1).fit(ControlProblem(system, grid, obj, field))
    assert est.field_ == pytest.approx(0.5 * field + 0.5 * g / (2.0 * 0.2), abs=1e-14)


def test_pk_rejects_bad_inputs():
    prob = small_chain(n_steps=10)
    with pytest.raises(ValueError):
        PKKrotov(eta=3.0, max_iter=1).fit(prob)
    with pytest.raises(ValueError):
        PKKrotov(weight=0.0, max_iter=1).fit(prob)


def test_critical_residuals():
    grid = TimeGrid(4, 0.5)
    g = np.arange(8.0).reshape(4, 2)
    res = critical_residuals(np.zeros((4, 2)), g, grid)
    assert res["J"] == pytest.approx(res["F"])
    res = critical_residuals(g / grid.dt, g, grid)
    assert res["J"] == pytest.approx(0.0, abs=1e-14)
    assert res["F"] > 0


def test_critical_residuals_after_pk_run():
    prob = small_chain(seed=2, n_steps=60)
    est = PKKrotov(weight=10.0, max_iter=40).fit(prob)
    g = gradient(prob.objective, propagate(prob.system, prob.grid, est.field_))
    res = critical_residuals(est.field_, g, prob.grid, 10.0)
    assert res["J"] < 0.1 * res["F"]


def test_descent_diagnostics_cases():
    steps = [StepRecord(1, 1.0, 0.5, 0.1, 0.5), StepRecord(2, 1.0, 5000.0, 0.1, 5000.0)]
    rep = descent_diagnostics(steps)
    assert list(rep.compliant) == [True, False]
    assert rep.fraction == 0.5
    # greedy on a concave 1-D quadratic: gain = slope^2 / (2 beta)
    beta, g = 4.0, 3.0
    rep = descent_diagnostics([StepRecord(1, g, g / beta, g * g / (2 * beta), 1 / beta)], mu=1 / (2 * beta))
    assert rep.fraction == 1.0
    with pytest.raises(ValueError):
        descent_diagnostics(steps, mu=0.0)


def test_descent_diagnostics_on_runs():
    prob = small_chain(seed=6, n_steps=40)
    est = SequentialOptimizer(policy="fixed:1", monotone=False, max_iter=3).fit(prob)
    assert est.diagnostics().fraction == 1.0
    wild = SequentialOptimizer(policy="fixed:1e5", monotone=False, max_iter=2).fit(prob)
    assert wild.diagnostics().fraction < 1.0
