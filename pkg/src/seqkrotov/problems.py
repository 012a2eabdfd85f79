"""Heisenberg-chain gate synthesis benchmark.

``n`` qubits on an open chain with uniform nearest-neighbour Heisenberg coupling
``J``, a fixed transverse drive ``Omega`` on every qubit and one local ``Z``
control per qubit:

    H = J sum_n (X_n X_{n+1} + Y_n Y_{n+1} + Z_n Z_{n+1}) + Omega sum_n X_n + sum_n f_n Z_n
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import reduce

import numpy as np

from seqkrotov.objectives import GateReal
from seqkrotov.operators import haar_unitary
from seqkrotov.propagation import ControlSystem, TimeGrid

__all__ = [
    "PAULI",
    "Problem1Config",
    "embed",
    "heisenberg_chain",
    "qft_unitary",
    "special_unitary",
    "target_gate",
    "build_problem1",
    "problem1",
    "adjoint_norm",
]

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def embed(op, site, n_qubits):
    """``op`` acting on qubit ``site`` (0-based, leftmost factor first) of an ``n``-qubit register."""
    factors = [op if j == site else PAULI["I"] for j in range(n_qubits)]
    return reduce(np.kron, factors)


def heisenberg_chain(n_qubits, coupling=1.0, drive=10.0):
    """Drift Hamiltonian and the list of local ``Z`` controls."""
    if n_qubits < 2:
        raise ValueError("the chain needs at least two qubits")
    dim = 2**n_qubits
    drift = np.zeros((dim, dim), dtype=complex)
    for n in range(n_qubits - 1):
        for p in ("X", "Y", "Z"):
            drift += coupling * embed(PAULI[p], n, n_qubits) @ embed(PAULI[p], n + 1, n_qubits)
    for n in range(n_qubits):
        drift += drive * embed(PAULI["X"], n, n_qubits)
    controls = np.array([embed(PAULI["Z"], n, n_qubits) for n in range(n_qubits)])
    return drift, controls


def qft_unitary(dim):
    j, k = np.meshgrid(np.arange(dim), np.arange(dim), indexing="ij")
    return np.exp(2j * np.pi * j * k / dim) / np.sqrt(dim)


@dataclass(frozen=True)
class Problem1Config:
    """Parameters of the chain benchmark.

    ``target`` is ``"haar"`` (seeded random unitary) or ``"qft"``.
    """

    n_qubits: int = 5
    coupling: float = 1.0
    drive: float = 10.0
    dt: float = 0.1
    n_steps: int = 300
    target: str = "haar"
    seed: int = 0

    def __post_init__(self):
        if self.n_qubits < 2:
            raise ValueError("n_qubits must be at least 2")
        if self.target not in ("haar", "qft"):
            raise ValueError(f"unknown target {self.target!r}")

    def to_dict(self):
        return asdict(self)


def special_unitary(u):
    """Rescale ``u`` by a global phase so that ``det(u) = 1``."""
    u = np.asarray(u, dtype=complex)
    phase = np.angle(np.linalg.det(u))
    return u * np.exp(-1j * phase / u.shape[0])


def target_gate(cfg, rng=None):
    """Target unitary, phase-fixed into ``SU(N)``.

    All generators are traceless, so ``U(T)`` has unit determinant; a target with
    another determinant phase could not reach unit fidelity.
    """
    dim = 2**cfg.n_qubits
    if cfg.target == "qft":
        return special_unitary(qft_unitary(dim))
    if rng is None:
        from seqkrotov.seeding import stream

        rng = stream(cfg.seed, "target")
    return special_unitary(haar_unitary(dim, rng))


def build_problem1(cfg=None, rng=None):
    """``(ControlSystem, GateReal objective, TimeGrid)`` for ``cfg``."""
    cfg = cfg or Problem1Config()
    drift, controls = heisenberg_chain(cfg.n_qubits, cfg.coupling, cfg.drive)
    system = ControlSystem(drift, controls)
    objective = GateReal(target_gate(cfg, rng))
    grid = TimeGrid(cfg.n_steps, cfg.dt)
    return system, objective, grid


def problem1(cfg=None, initial_field=None):
    """The benchmark wrapped as a :class:`~seqkrotov.estimators.ControlProblem`."""
    from seqkrotov.estimators import ControlProblem

    system, objective, grid = build_problem1(cfg)
    return ControlProblem(system, grid, objective, initial_field)


def adjoint_norm(h):
    """Spectral norm of ``X -> [B, X]`` for ``B = -iH``: the spread of the spectrum of ``H``."""
    e = np.linalg.eigvalsh(np.asarray(h))
    return float(e[-1] - e[0])
