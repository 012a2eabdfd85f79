"""Run and study configuration: JSON documents checked against a published schema.

A run configuration has the blocks ``problem``, ``grid``, ``objective``,
``rule``, ``termination``, ``initial_field``, ``seed`` and ``output``; every
block is optional and unknown keys are rejected. :func:`resolve_run` fills in
defaults, and the resolved document is what summaries embed.

Explicit matrices are lists of rows, each row a list of ``[re, im]`` pairs.
"""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema
import numpy as np

from seqkrotov.seeding import MAX_SEED

__all__ = [
    "ConfigError",
    "RUN_SCHEMA",
    "STUDY_SCHEMA",
    "RUN_DEFAULTS",
    "load_json",
    "validate_run",
    "validate_study",
    "resolve_run",
    "resolve_study",
    "parse_matrix",
    "parse_vector",
    "build_run",
]


class ConfigError(ValueError):
    """Invalid configuration document."""


_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_VECTOR = {"type": "array", "items": _PAIR, "minItems": 1}
_MATRIX = {"type": "array", "items": _VECTOR, "minItems": 1}
_SEED = {"type": "integer", "minimum": 0, "maximum": MAX_SEED}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


_CHAIN = _obj(
    {
        "builtin": {"const": "heisenberg-chain"},
        "n_qubits": {"type": "integer", "minimum": 2, "maximum": 8},
        "coupling": _NUM,
        "drive": _NUM,
    },
    ["builtin"],
)
_EXPLICIT = _obj(
    {"drift": _MATRIX, "controls": {"type": "array", "items": _MATRIX, "minItems": 1}},
    ["drift", "controls"],
)

RUN_SCHEMA = _obj(
    {
        "problem": {"oneOf": [_CHAIN, _EXPLICIT]},
        "grid": _obj({"n_steps": {"type": "integer", "minimum": 1}, "dt": _POS}),
        "objective": _obj(
            {
                "kind": {"enum": ["gate", "gate-modulus", "state", "state-modulus", "observable"]},
                "target": {"oneOf": [{"enum": ["haar", "qft"]}, _MATRIX, _VECTOR]},
                "initial_state": _VECTOR,
                "observable": _MATRIX,
            }
        ),
        "rule": _obj(
            {
                "name": {"enum": ["gradient", "newton", "trust-region", "pk"]},
                "strategy": {"enum": ["forward", "back-and-forth", "split"]},
                "policy": {"type": "string"},
                "alpha": {"oneOf": [_POS, {"type": "null"}]},
                "deferred": {"type": "boolean"},
                "method": {"oneOf": [{"type": "string"}, {"type": "null"}]},
                "monotone": {"type": "boolean"},
                "newton_scale": _POS,
                "radius": _POS,
                "eta": {"type": "number", "minimum": 0, "maximum": 2},
                "eta_back": {"type": "number", "minimum": 0, "maximum": 2},
                "lambda": _POS,
                "cost": {"enum": ["static", "dynamic"]},
            }
        ),
        "termination": _obj(
            {
                "max_iter": {"type": "integer", "minimum": 0},
                "target_infidelity": {"type": "number", "minimum": 0},
                "stagnation_tol": {"type": "number", "minimum": 0},
                "stagnation_window": {"type": "integer", "minimum": 1},
            }
        ),
        "initial_field": _obj({"kind": {"enum": ["zero", "uniform"]}, "amplitude": {"type": "number", "minimum": 0}}),
        "seed": _SEED,
        "output": _obj({"name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"}}),
    }
)

RUN_DEFAULTS = {
    "problem": {"builtin": "heisenberg-chain", "n_qubits": 3, "coupling": 1.0, "drive": 10.0},
    "grid": {"n_steps": 300, "dt": 0.1},
    "objective": {"kind": "gate", "target": "haar"},
    "rule": {
        "name": "gradient",
        "strategy": "forward",
        "policy": "band",
        "alpha": None,
        "deferred": True,
        "method": None,
        "monotone": True,
        "newton_scale": 1.0,
        "radius": 1.0,
        "eta": 1.0,
        "eta_back": 0.0,
        "lambda": 1.0,
        "cost": "static",
    },
    "termination": {"max_iter": 100, "target_infidelity": 0.0, "stagnation_tol": 1e-14, "stagnation_window": 10},
    "initial_field": {"kind": "zero", "amplitude": 1.0},
    "seed": 0,
    "output": {"name": "run"},
}

_STUDY_PARAMS = {
    "grad-overlap": _obj(
        {
            "dt_list": {"type": "array", "items": _POS, "minItems": 1},
            "n_samples": {"type": "integer", "minimum": 20},
            "n_trajectory": {"type": "integer", "minimum": 0},
        }
    ),
    "strategies": _obj(
        {
            "strategies": {"type": "array", "items": {"enum": ["forward", "back-and-forth", "split"]}, "minItems": 1},
            "policies": {"type": "array", "items": {"type": "string"}, "minItems": 1},
            "seeds": {"type": "array", "items": _SEED, "minItems": 2},
            "max_iter": {"type": "integer", "minimum": 1},
            "target_infidelity": {"type": "number", "minimum": 0},
        }
    ),
    "hessian-scalar": _obj(
        {
            "n_iter": {"type": "integer", "minimum": 1},
            "strategy": {"enum": ["forward", "back-and-forth", "split"]},
            "policy": {"type": "string"},
        }
    ),
    "penalty": _obj(
        {
            "lambdas": {"type": "array", "items": _POS, "minItems": 1},
            "max_iter": {"type": "integer", "minimum": 1},
            "eta": {"type": "number", "minimum": 0, "maximum": 2},
            "eta_back": {"type": "number", "minimum": 0, "maximum": 2},
        }
    ),
    "rate-fit": _obj(
        {
            "trace": {"type": "string"},
            "max_iter": {"type": "integer", "minimum": 10},
            "strategy": {"enum": ["forward", "back-and-forth", "split"]},
            "policy": {"type": "string"},
        }
    ),
}

_STUDY_PROBLEM = _obj(
    {
        "n_qubits": {"type": "integer", "minimum": 2, "maximum": 8},
        "coupling": _NUM,
        "drive": _NUM,
        "dt": _POS,
        "n_steps": {"type": "integer", "minimum": 1},
        "target": {"enum": ["haar", "qft"]},
    }
)

STUDY_SCHEMA = _obj({"problem": _STUDY_PROBLEM, "params": {"type": "object"}, "seed": _SEED})


def load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read ({exc.strerror})") from exc


def _message(err):
    where = "/".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        return f"{where}: unknown key(s) {', '.join(map(repr, extra))}"
    if err.validator == "oneOf" and err.context:
        best = jsonschema.exceptions.best_match(err.context)
        return _message(best)
    return f"{where}: {err.message}"


def _validate(doc, schema):
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        raise ConfigError("; ".join(_message(e) for e in errors))
    return doc


def validate_run(doc):
    """Raise :class:`ConfigError` naming every violation (unknown keys included)."""
    return _validate(doc, RUN_SCHEMA)


def validate_study(name, doc):
    from seqkrotov.studies import STUDIES

    if name not in STUDIES:
        raise ConfigError(f"unknown study {name!r}; choose from {', '.join(STUDIES)}")
    _validate(doc, STUDY_SCHEMA)
    _validate(doc.get("params", {}), _STUDY_PARAMS[name])
    return doc


def resolve_run(doc, seed=None):
    """Validated document with every default filled in (``seed`` overrides)."""
    validate_run(doc)
    out = copy.deepcopy(RUN_DEFAULTS)
    for key, value in doc.items():
        if isinstance(value, dict) and key != "problem":
            out[key].update(copy.deepcopy(value))
        else:
            out[key] = copy.deepcopy(value)
    if "builtin" in out["problem"]:
        out["problem"] = {**RUN_DEFAULTS["problem"], **out["problem"]}
    if seed is not None:
        out["seed"] = int(seed)
    return validate_run(out)


def resolve_study(name, doc, seed=None, full_scale=False):
    """Study parameters and ``Problem1Config`` keyword arguments with defaults."""
    validate_study(name, doc)
    base = {"n_qubits": 5 if full_scale else 3, "dt": 0.1, "n_steps": 300}
    problem = {**base, **doc.get("problem", {})}
    out = {"problem": problem, "params": dict(doc.get("params", {})), "seed": int(doc.get("seed", 0))}
    if seed is not None:
        out["seed"] = int(seed)
    return out


def parse_vector(pairs):
    a = np.asarray(pairs, dtype=float)
    return a[..., 0] + 1j * a[..., 1]


def parse_matrix(rows, name="matrix", hermitian=False):
    """Complex matrix from row-major ``[re, im]`` pairs; checks shape and Hermiticity."""
    try:
        m = parse_vector(rows)
    except ValueError as exc:
        raise ConfigError(f"{name}: rows differ in length") from exc
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ConfigError(f"{name}: expected a square matrix, got shape {m.shape}")
    if hermitian and not np.allclose(m, m.conj().T, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ConfigError(f"{name}: not Hermitian")
    return m


def build_run(cfg):
    """``(ControlProblem, estimator)`` for a resolved run configuration."""
    from seqkrotov.estimators import ControlProblem, PKKrotov, SequentialOptimizer
    from seqkrotov.objectives import GateModulus, GateReal, PureObservableFinal, PureState, PureStateModulus
    from seqkrotov.operators import check_unitary, haar_unitary
    from seqkrotov.problems import heisenberg_chain, qft_unitary, special_unitary
    from seqkrotov.propagation import ControlSystem, TimeGrid
    from seqkrotov.seeding import stream

    p = cfg["problem"]
    if "builtin" in p:
        drift, controls = heisenberg_chain(p["n_qubits"], p["coupling"], p["drive"])
    else:
        drift = parse_matrix(p["drift"], "problem/drift", hermitian=True)
        controls = np.array(
            [parse_matrix(c, f"problem/controls/{i}", hermitian=True) for i, c in enumerate(p["controls"])]
        )
        if controls.shape[1:] != drift.shape:
            raise ConfigError("problem: control and drift dimensions differ")
    system = ControlSystem(drift, controls)
    grid = TimeGrid(cfg["grid"]["n_steps"], cfg["grid"]["dt"])
    dim = system.dim

    o = cfg["objective"]
    kind, target = o["kind"], o.get("target")
    seed = cfg["seed"]
    if kind in ("gate", "gate-modulus"):
        if target == "haar":
            v = special_unitary(haar_unitary(dim, stream(seed, "target")))
        elif target == "qft":
            v = special_unitary(qft_unitary(dim))
        else:
            v = parse_matrix(target, "objective/target")
            try:
                check_unitary(v, name="objective/target")
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        obj = GateReal(v) if kind == "gate" else GateModulus(v)
    else:
        if "initial_state" not in o:
            raise ConfigError(f"objective: kind {kind!r} needs 'initial_state'")
        psi0 = parse_vector(o["initial_state"])
        try:
            if kind == "observable":
                if "observable" not in o:
                    raise ConfigError("objective: kind 'observable' needs 'observable'")
                obj = PureObservableFinal(psi0, parse_matrix(o["observable"], "objective/observable", hermitian=True))
            else:
                if not isinstance(target, list) or isinstance(target[0][0], list):
                    raise ConfigError(f"objective: kind {kind!r} needs a state vector 'target'")
                cls = PureState if kind == "state" else PureStateModulus
                obj = cls(psi0, parse_vector(target))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"objective: {exc}") from exc

    f0 = np.zeros((grid.n_steps, system.n_controls))
    init = cfg["initial_field"]
    if init["kind"] == "uniform":
        f0 = stream(seed, "initial-field").uniform(-init["amplitude"], init["amplitude"], f0.shape)
    try:
        problem = ControlProblem(system, grid, obj, f0)
    except ValueError as exc:
        raise ConfigError(f"problem: {exc}") from exc

    r, t = cfg["rule"], cfg["termination"]
    term = dict(
        max_iter=t["max_iter"],
        target_infidelity=t["target_infidelity"],
        stagnation_tol=t["stagnation_tol"],
        stagnation_window=t["stagnation_window"],
    )
    if r["name"] == "pk":
        est = PKKrotov(eta=r["eta"], eta_back=r["eta_back"], weight=r["lambda"], cost=r["cost"], method=r["method"], **term)
    else:
        est = SequentialOptimizer(
            strategy=r["strategy"],
            rule=r["name"],
            policy=r["policy"],
            alpha=r["alpha"],
            deferred=r["deferred"],
            method=r["method"],
            monotone=r["monotone"],
            newton_scale=r["newton_scale"],
            radius=r["radius"],
            **term,
        )
    return problem, est
