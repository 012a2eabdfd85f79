import numpy as np
import pytest

from seqkrotov.operators import haar_unitary
from seqkrotov.propagation import ControlSystem, TimeGrid


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (a + a.conj().T)


def random_state(rng, n):
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return v / np.linalg.norm(v)


def random_density(rng, n):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    r = a @ a.conj().T
    return r / np.trace(r).real


def random_system(rng, n=4, m=2):
    return ControlSystem(random_hermitian(rng, n), np.array([random_hermitian(rng, n) for _ in range(m)]))


def all_objectives(rng, n, grid):
    from seqkrotov.objectives import (
        DensityObservableFinal,
        DensityObservableIntegrated,
        DensityTrajectory,
        GateModulus,
        GateReal,
        PureObservableFinal,
        PureObservableIntegrated,
        PureState,
        PureStateModulus,
        StateTrajectory,
    )

    K = grid.n_steps
    return [
        GateReal(haar_unitary(n, rng)),
        GateModulus(haar_unitary(n, rng)),
        PureState(random_state(rng, n), random_state(rng, n)),
        PureStateModulus(random_state(rng, n), random_state(rng, n)),
        PureObservableFinal(random_state(rng, n), random_hermitian(rng, n)),
        PureObservableIntegrated(random_state(rng, n), [random_hermitian(rng, n) for _ in range(K)], grid),
        DensityObservableFinal(random_density(rng, n), random_hermitian(rng, n)),
        DensityObservableIntegrated(random_density(rng, n), [random_hermitian(rng, n) for _ in range(K)], grid),
        StateTrajectory(random_state(rng, n), [random_state(rng, n) for _ in range(K)], grid),
        DensityTrajectory(random_density(rng, n), [random_density(rng, n) for _ in range(K)], grid),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_problem(rng):
    """4-level system with two controls, 20 steps of 0.1, random field."""
    system = random_system(rng, 4, 2)
    grid = TimeGrid(20, 0.1)
    field = rng.uniform(-1, 1, (20, 2))
    return system, grid, field
