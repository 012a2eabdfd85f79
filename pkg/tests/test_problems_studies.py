import json

import numpy as np
import pytest

from seqkrotov.io import read_trace_csv
from seqkrotov.optimizer import OptimizationTrace, IterationRecord
from seqkrotov.problems import (
    PAULI,
    Problem1Config,
    adjoint_norm,
    build_problem1,
    embed,
    heisenberg_chain,
    qft_unitary,
    special_unitary,
    target_gate,
)
from seqkrotov.seeding import check_seed, stream
from seqkrotov.studies import (
    classify_penalty_run,
    gradient_overlap_study,
    hessian_scalarization_study,
    penalty_study,
    rate_fit_study,
    reduced_config,
    strategy_comparison_study,
)


def superoperator_norm(h):
    """Spectral norm of ``X -> [-iH, X]`` from its explicit matrix."""
    n = h.shape[0]
    b = -1j * h
    sup = np.kron(np.eye(n), b) - np.kron(b.T, np.eye(n))
    return float(np.linalg.norm(sup, 2))


def test_chain_shapes_and_hermiticity():
    drift, controls = heisenberg_chain(3)
    assert drift.shape == (8, 8) and controls.shape == (3, 8, 8)
    assert np.allclose(drift, drift.conj().T)
    assert np.allclose(controls[0], np.kron(PAULI["Z"], np.eye(4)))
    assert np.allclose(embed(PAULI["X"], 2, 3), np.kron(np.eye(4), PAULI["X"]))
    with pytest.raises(ValueError):
        heisenberg_chain(1)


def test_adjoint_norm_matches_superoperator():
    drift, _ = heisenberg_chain(2)
    assert adjoint_norm(drift) == pytest.approx(superoperator_norm(drift), rel=1e-10)


def test_adjoint_norm_of_five_qubit_chain():
    drift, _ = heisenberg_chain(5)
    assert 95 <= adjoint_norm(drift) <= 115


def test_targets():
    q = qft_unitary(4)
    assert np.allclose(q.conj().T @ q, np.eye(4))
    cfg = Problem1Config(n_qubits=3, seed=7)
    v = target_gate(cfg)
    assert np.linalg.det(v) == pytest.approx(1.0)
    assert np.array_equal(v, target_gate(cfg))
    assert not np.allclose(v, target_gate(Problem1Config(n_qubits=3, seed=8)))
    assert np.linalg.det(special_unitary(np.diag([1j, 1j]))) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        Problem1Config(target="random")


def test_build_problem():
    system, obj, grid = build_problem1(Problem1Config(n_qubits=2, n_steps=7))
    assert system.dim == 4 and system.n_controls == 2 and grid.n_steps == 7


def test_streams():
    a = stream(1, "target").standard_normal(4)
    assert np.array_equal(a, stream(1, "target").standard_normal(4))
    assert not np.array_equal(a, stream(1, "other").standard_normal(4))
    assert not np.array_equal(a, stream(2, "target").standard_normal(4))
    assert not np.array_equal(stream(1, "x", 0).random(), stream(1, "x", 1).random())
    with pytest.raises(ValueError):
        check_seed(-1)
    with pytest.raises(ValueError):
        check_seed(2**64)


def _trace(F, pen):
    tr = OptimizationTrace()
    for n, (f, p) in enumerate(zip(F, pen)):
        tr.append(IterationRecord(n, f, p, 1.0, 1.0, n, 0.0))
    return tr


def test_classify_penalty_run():
    mono = classify_penalty_run(_trace([0.1, 0.5, 0.6], [0.0, 0.1, 0.15]))
    assert mono["J_monotone"] and mono["F_increasing"]
    drop = classify_penalty_run(_trace([0.1, 0.5, 0.6, 0.7], [0.0, 0.1, 0.3, 0.35]))
    assert not drop["J_monotone"] and drop["first_J_drop"] == 2 and drop["F_increasing"]
    flat = classify_penalty_run(_trace([0.1, 0.5, 0.6, 0.55], [0.0, 0.1, 0.3, 0.3]))
    assert not flat["F_increasing"]


def test_gradient_overlap_study_small():
    cfg = Problem1Config(n_qubits=2, dt=0.1, n_steps=20)
    rep = gradient_overlap_study(cfg, dt_list=(0.05, 0.1), n_samples=20, n_trajectory=2)
    s = rep.summary
    assert set(s) == {"0.05", "0.1"}
    assert s["0.05"]["n_steps"] == 40 and s["0.1"]["n_steps"] == 20
    assert len(s["0.1"]["uniform"]["values"]) == 20
    assert len(s["0.1"]["trajectory"]["values"]) == 2
    assert all(-1 <= v <= 1 for v in s["0.1"]["uniform"]["values"])
    assert s["0.05"]["median"] > s["0.1"]["median"]
    again = gradient_overlap_study(cfg, dt_list=(0.05, 0.1), n_samples=20, n_trajectory=2)
    assert again.summary == s
    with pytest.raises(ValueError):
        gradient_overlap_study(cfg, n_samples=5)


def test_strategy_study_small(tmp_path):
    cfg = reduced_config(n_steps=40)
    rep = strategy_comparison_study(cfg, strategies=("forward", "split"), seeds=(0, 1), max_iter=12)
    assert set(rep.summary) == {"forward|fixed:200", "split|fixed:200"}
    assert len(rep.traces) == 4
    for v in rep.summary.values():
        assert len(v["rates"]) + v["fit_failures"] == 2
        assert v["ops_per_iteration"] > 0
    path = rep.write(tmp_path)
    doc = json.loads(path.read_text())
    assert doc["study"] == "strategies"
    csvs = sorted(tmp_path.glob("strategies_*.csv"))
    assert len(csvs) == 4
    cols = read_trace_csv(tmp_path / "strategies_forward_fixed-200_seed0.csv")
    tr = rep.traces["forward_fixed-200_seed0"]
    assert cols["n"][0] == 0
    assert np.array_equal(cols["fidelity"], tr.fidelity)
    assert np.array_equal(cols["infidelity"], tr.infidelity)
    with pytest.raises(ValueError):
        strategy_comparison_study(cfg, seeds=(0,))


def test_hessian_study_small():
    cfg = reduced_config(n_steps=30)
    rep = hessian_scalarization_study(cfg, n_iter=2)
    s = rep.summary
    assert len(s["errors"]) == 60
    assert len(s["iteration_median"]) == 2
    assert all(e >= 0 for e in s["errors"])


def test_penalty_study_small():
    cfg = reduced_config(n_steps=40)
    rep = penalty_study(cfg, lambdas=(0.1, 10.0), max_iter=5)
    runs = rep.summary["runs"]
    assert set(runs) == {"0.1", "10.0"}
    assert runs["10.0"]["below_free"]
    assert len(runs["0.1"]["J"]) == 6
    assert set(rep.traces) == {"free", "lambda0.1", "lambda10.0"}


def test_rate_fit_study_given_errors():
    n = np.arange(30)
    e = np.exp(-0.2 * n - np.log1p(n))
    rep = rate_fit_study(errors=e)
    assert rep.summary["r_star"] > 0
    assert rep.parameters["source"] == "given"
