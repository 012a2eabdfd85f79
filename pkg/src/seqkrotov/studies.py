"""Reproduction studies on the Heisenberg-chain benchmark.

Every study returns a :class:`StudyReport` whose ``summary`` is JSON-ready and
whose ``traces`` hold the per-run :class:`~seqkrotov.optimizer.OptimizationTrace`
objects. Randomness is drawn only from :func:`seqkrotov.seeding.stream`.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from seqkrotov.curvature import local_hessian_exact, scalarization_error
from seqkrotov.estimators import PKKrotov, SequentialOptimizer
from seqkrotov.objectives import gradient, gradient_overlap
from seqkrotov.optimizer import _HessianView
from seqkrotov.problems import Problem1Config, build_problem1, problem1
from seqkrotov.propagation import propagate
from seqkrotov.rates import RateFitError, fit_rate_model
from seqkrotov.seeding import stream

__all__ = [
    "STUDIES",
    "StudyReport",
    "reduced_config",
    "full_config",
    "gradient_overlap_study",
    "strategy_comparison_study",
    "hessian_scalarization_study",
    "penalty_study",
    "rate_fit_study",
    "classify_penalty_run",
]

STUDIES = ("grad-overlap", "strategies", "hessian-scalar", "penalty", "rate-fit")


def reduced_config(**kw):
    """Desk-scale instance: 3 qubits, ``K = 300``, ``dt = 0.1``."""
    return Problem1Config(**{"n_qubits": 3, "dt": 0.1, "n_steps": 300, **kw})


def full_config(**kw):
    """The 5-qubit instance."""
    return Problem1Config(**{"n_qubits": 5, "dt": 0.1, "n_steps": 300, **kw})


@dataclass
class StudyReport:
    """Outcome of one study.

    Attributes:
        study: study tag (one of :data:`STUDIES`).
        parameters: the resolved study parameters.
        summary: medians, quantiles, fitted rates and classifications.
        traces: ``{run label: OptimizationTrace}``.
        files: paths written by :meth:`write` (filled in there).
    """

    study: str
    parameters: dict
    summary: dict
    traces: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def to_dict(self):
        return {
            "study": self.study,
            "parameters": self.parameters,
            "summary": self.summary,
            "files": [str(p) for p in self.files],
        }

    def write(self, out_dir):
        """Write one trace CSV per run and ``<study>.json`` into ``out_dir``."""
        from pathlib import Path

        from seqkrotov.io import write_json, write_trace_csv

        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        self.files = []
        for label, trace in self.traces.items():
            self.files.append(write_trace_csv(out / f"{self.study}_{label}.csv", trace))
        path = out / f"{self.study}.json"
        self.files.append(path)
        write_json(path, self.to_dict())
        return path


def _quantiles(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return {"median": None, "q25": None, "q75": None, "n": 0}
    q25, med, q75 = np.quantile(x, [0.25, 0.5, 0.75])
    return {"median": float(med), "q25": float(q25), "q75": float(q75), "n": int(x.size)}


# ---------------------------------------------------------------------------
# gradient overlap


def _overlap(system, obj, grid, f):
    cache = propagate(system, grid, f)
    exact = gradient(obj, cache, "exact")
    approx = gradient(obj, cache, "first-order")
    return gradient_overlap(exact, approx)


def gradient_overlap_study(cfg=None, dt_list=(0.01, 0.1), n_samples=50, n_trajectory=10):
    """Overlap of first-order and exact gradients on sampled fields.

    The total time ``T = cfg.dt * cfg.n_steps`` is held fixed; each ``dt`` uses
    ``K = round(T / dt)`` steps. Two cohorts per ``dt``:

    * ``uniform``: ``n_samples`` fields with entries uniform in ``[-1, 1]``;
    * ``trajectory``: the fields after each of ``n_trajectory`` iterations of a
      forward sweep (band policy) started from zero.

    The reported ``median`` for a ``dt`` is that of the uniform cohort.
    """
    cfg = cfg or full_config()
    if n_samples < 20:
        raise ValueError("n_samples must be at least 20")
    T = cfg.dt * cfg.n_steps
    summary = {}
    for dt in dt_list:
        K = int(round(T / dt))
        c = replace(cfg, dt=float(dt), n_steps=K)
        system, obj, grid = build_problem1(c)
        rng = stream(cfg.seed, "grad-overlap", K)
        uniform = [_overlap(system, obj, grid, rng.uniform(-1, 1, (K, system.n_controls))) for _ in range(n_samples)]
        fields = []
        if n_trajectory:
            SequentialOptimizer(max_iter=n_trajectory).fit(
                problem1(c), callback=lambda rec, f: fields.append(f.copy())
            )
        traj = [_overlap(system, obj, grid, f) for f in fields]
        summary[repr(float(dt))] = {
            "n_steps": K,
            "median": float(np.median(uniform)),
            "uniform": {**_quantiles(uniform), "values": uniform},
            "trajectory": {**_quantiles(traj), "values": traj},
        }
    params = {"config": cfg.to_dict(), "dt_list": [float(d) for d in dt_list],
              "n_samples": n_samples, "n_trajectory": n_trajectory}
    return StudyReport("grad-overlap", params, summary)


# ---------------------------------------------------------------------------
# strategy comparison


def _strategy_run(args):
    cfg, strategy, policy, max_iter, target = args
    opt = SequentialOptimizer(strategy=strategy, policy=policy, max_iter=max_iter, target_infidelity=target)
    opt.fit(problem1(cfg))
    return opt.trace_


def _map(fn, items, jobs):
    if jobs and jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _median_curve(traces, name):
    n = max(len(t) for t in traces)
    table = np.full((len(traces), n), np.nan)
    for i, t in enumerate(traces):
        v = t.array(name)
        table[i, : v.size] = v
        table[i, v.size :] = v[-1]  # finished runs hold their final value
    return np.median(table, axis=0)


def strategy_comparison_study(
    cfg=None,
    strategies=("split", "forward", "back-and-forth"),
    policies=("fixed:200",),
    seeds=tuple(range(10)),
    max_iter=60,
    target_infidelity=1e-11,
    jobs=1,
):
    """Convergence of each (strategy, policy) pair over seeded targets.

    Reports per pair the median infidelity against iteration and against
    operation count, and the fitted asymptotic rate ``r*`` per seed and its
    median. Seeds change only the target gate.
    """
    cfg = cfg or reduced_config()
    seeds = [int(s) for s in seeds]
    if len(seeds) < 2:
        raise ValueError("at least two seeds are required")
    jobs_list = [
        (replace(cfg, seed=s), st, po, max_iter, target_infidelity)
        for st in strategies for po in policies for s in seeds
    ]
    results = _map(_strategy_run, jobs_list, jobs)
    traces, summary = {}, {}
    i = 0
    for st in strategies:
        for po in policies:
            runs = results[i : i + len(seeds)]
            i += len(seeds)
            rates, fails = [], 0
            for s, tr in zip(seeds, runs):
                traces[f"{st}_{po.replace(':', '-')}_seed{s}"] = tr
                try:
                    rates.append(fit_rate_model(tr.infidelity).r_star)
                except RateFitError:
                    fails += 1
            mean_ops = [float(np.mean(np.diff(tr.array("ops")))) for tr in runs]
            summary[f"{st}|{po}"] = {
                "strategy": st,
                "policy": po,
                "rates": rates,
                "median_rate": float(np.median(rates)) if rates else None,
                "fit_failures": fails,
                "ops_per_iteration": float(np.median(mean_ops)),
                "median_infidelity": _median_curve(runs, "infidelity").tolist(),
                "median_ops": _median_curve(runs, "ops").tolist(),
            }
    params = {"config": cfg.to_dict(), "strategies": list(strategies), "policies": list(policies),
              "seeds": seeds, "max_iter": max_iter, "target_infidelity": target_infidelity}
    return StudyReport("strategies", params, summary, traces)


# ---------------------------------------------------------------------------
# Hessian scalarization


def hessian_scalarization_study(cfg=None, n_iter=10, strategy="forward", policy="band"):
    """Scalarization error of the exact local Hessian along an optimization.

    The Hessian is evaluated at every update step, before the step is taken.
    ``errors`` is ordered by cumulative step count; per-iteration medians are
    reported as ``iteration_median``.
    """
    cfg = cfg or full_config()
    prob = problem1(cfg)
    errors, iters = [], []
    current = {"n": 1}

    def hook(engine, k, g):
        h = local_hessian_exact(engine.obj, _HessianView(engine.cache, k), k, costate=engine.cs[k - 1])
        errors.append(scalarization_error(h))
        iters.append(current["n"])

    def callback(rec, f):
        current["n"] = rec.n + 1

    opt = SequentialOptimizer(strategy=strategy, policy=policy, max_iter=n_iter)
    opt.fit(prob, callback=callback, step_hook=hook)
    errors = np.array(errors)
    iters = np.array(iters)
    per_iter = [float(np.median(errors[iters == n])) for n in range(1, int(iters.max()) + 1)]
    summary = {
        "errors": errors.tolist(),
        "iteration_median": per_iter,
        "first_step": float(errors[0]),
        "final_median": per_iter[-1],
        "final_fidelity": float(opt.fidelity_),
    }
    params = {"config": cfg.to_dict(), "n_iter": n_iter, "strategy": strategy, "policy": policy}
    return StudyReport("hessian-scalar", params, summary, {"run": opt.trace_})


# ---------------------------------------------------------------------------
# penalty


def classify_penalty_run(trace, tol=1e-12):
    """Classify a penalized run.

    ``J_monotone``: ``J`` never drops by more than ``tol``. ``F_increasing``
    (only meaningful when ``J`` drops): after the first drop of ``J`` the fidelity
    still climbs above its value at that iteration.
    """
    F = trace.fidelity
    J = trace.array("J")
    drops = np.flatnonzero(np.diff(J) < -tol)
    out = {
        "J_monotone": bool(drops.size == 0),
        "first_J_drop": None,
        "F_increasing": bool(F[-1] > F[0]),
        "final_fidelity": float(F[-1]),
        "max_fidelity": float(F.max()),
        "final_J": float(J[-1]),
    }
    if drops.size:
        n0 = int(drops[0]) + 1
        out["first_J_drop"] = n0
        out["F_increasing"] = bool(F[n0:].max() > F[n0])
    return out


def penalty_study(cfg=None, lambdas=(0.06, 0.065, 0.1, 0.3), max_iter=60, eta=1.0, eta_back=0.0):
    """Penalized (static cost) runs for each weight against a penalty-free run.

    The penalty-free reference is a forward sweep with the band policy and the
    same iteration budget.
    """
    cfg = cfg or reduced_config()
    prob = problem1(cfg)
    free = SequentialOptimizer(max_iter=max_iter).fit(prob)
    traces = {"free": free.trace_}
    runs = {}
    for lam in lambdas:
        pk = PKKrotov(eta=eta, eta_back=eta_back, weight=float(lam), max_iter=max_iter).fit(prob)
        traces[f"lambda{lam!r}"] = pk.trace_
        c = classify_penalty_run(pk.trace_)
        c["below_free"] = bool(c["final_fidelity"] < free.fidelity_)
        c["infidelity"] = pk.trace_.infidelity.tolist()
        c["J"] = pk.trace_.array("J").tolist()
        runs[repr(float(lam))] = c
    summary = {"free_fidelity": float(free.fidelity_), "runs": runs}
    params = {"config": cfg.to_dict(), "lambdas": [float(v) for v in lambdas], "max_iter": max_iter,
              "eta": eta, "eta_back": eta_back}
    return StudyReport("penalty", params, summary, traces)


# ---------------------------------------------------------------------------
# rate fit


def rate_fit_study(errors=None, cfg=None, max_iter=60, strategy="forward", policy="fixed:200"):
    """Fit the rate model to an infidelity trace (a fresh run when ``errors`` is None)."""
    traces = {}
    params = {"source": "given" if errors is not None else "run"}
    if errors is None:
        cfg = cfg or reduced_config()
        opt = SequentialOptimizer(strategy=strategy, policy=policy, max_iter=max_iter, target_infidelity=1e-11)
        opt.fit(problem1(cfg))
        errors = opt.trace_.infidelity
        traces["run"] = opt.trace_
        params.update(config=cfg.to_dict(), max_iter=max_iter, strategy=strategy, policy=policy)
    fit = fit_rate_model(np.asarray(errors, dtype=float))
    return StudyReport("rate-fit", params, dict(fit), traces)
