"""Benchmark family: interdependent components with hardware and software.

Each component is a 3-state automaton: (1) software and hardware working,
(2) software failed, hardware working, (3) hardware failed.  Hardware fails
at one rate while the software runs and at another once it has failed; a
software failure of component j simultaneously knocks out the software of
every component that consumes its data, per a 0/1 interaction topology.  The
system as a whole has failed once every hardware unit is down, which is the
global absorbing state.
"""

from __future__ import annotations

import numpy as np

from .model import SanModel, SyncTransition

STATES_PER_COMPONENT = 3


class CaseStudyParams:
    """Generation parameters.

    Parameters
    ----------
    k : int
        Component count.
    seed : int
        Seed for the random topology draw.
    density : float or None
        Probability of each off-diagonal interaction edge; defaults to
        ``1 / (2k)``.
    topology : ndarray or None
        Explicit interaction matrix; overrides the random draw.
    """

    def __init__(self, k, seed=0, density=None, topology=None):
        if k < 1:
            raise ValueError("k must be at least 1")
        self.k = int(k)
        self.seed = int(seed)
        self.density = 1.0 / (2.0 * k) if density is None else float(density)
        if not 0.0 <= self.density <= 1.0:
            raise ValueError("density must lie in [0, 1]")
        self.topology = None if topology is None else np.asarray(topology, dtype=float)


def random_topology(k, seed, density=None):
    """Unit-diagonal 0/1 matrix with independent off-diagonal edges."""
    if density is None:
        density = 1.0 / (2.0 * k)
    rng = np.random.default_rng(seed)
    t = np.eye(k)
    mask = rng.random((k, k)) < density
    np.fill_diagonal(mask, False)
    t[mask] = 1.0
    return t


def reference_topology():
    """Fixed 4-component interdependency example used in the docs and tests."""
    return np.array(
        [
            [1.0, 1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0, 1.0],
            [0.0, 0.0, 1.0, 1.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )


def component_rates(i):
    """Failure rates of 1-indexed component i: (hw while sw ok, hw after sw, sw)."""
    return i / 10.0, float(i), float(i)


def generate_case_study(params):
    """Build the benchmark model for the given parameters."""
    k = params.k
    topology = params.topology
    if topology is None:
        topology = random_topology(k, params.seed, params.density)
    sw_cascade = np.array([[0.0, 1.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    sw_fire = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
    local = []
    syncs = []
    for j in range(1, k + 1):
        hw_fast, hw_slow, sw_rate = component_rates(j)
        local.append(
            np.array([[0.0, 0.0, hw_fast], [0.0, 0.0, hw_slow], [0.0, 0.0, 0.0]])
        )
        factors = []
        for i in range(1, k + 1):
            if i == j:
                factors.append(sw_fire.copy())
            elif topology[j - 1, i - 1] == 1:
                factors.append(sw_cascade.copy())
            else:
                factors.append(np.eye(STATES_PER_COMPONENT))
        syncs.append(SyncTransition(sw_rate, factors))
    pi0 = [np.array([1.0, 0.0, 0.0]) for _ in range(k)]
    return SanModel([STATES_PER_COMPONENT] * k, local, syncs, pi0, topology)
