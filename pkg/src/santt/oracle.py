"""Dense brute-force reference implementation for small state spaces.

Everything here enumerates the product state space explicitly and uses plain
dense linear algebra, deliberately sharing no code with the tensor-train
assembly, so it can serve as an independent cross-check.
"""

from __future__ import annotations

import itertools
from functools import reduce

import numpy as np
import scipy.linalg

from .errors import AbsorptionError, SizeCapError

ORACLE_SIZE_CAP = 3**8


class DenseChain:
    """Dense generator, initial distribution, and absorbing-state index."""

    def __init__(self, q, pi0, absorbing_index):
        self.q = np.asarray(q, dtype=float)
        self.pi0 = np.asarray(pi0, dtype=float)
        self.absorbing_index = int(absorbing_index)

    @property
    def n_states(self):
        return self.q.shape[0]


def state_index(state, counts):
    """Lexicographic index of a product state, last automaton fastest."""
    return int(np.ravel_multi_index(state, counts))


def dense_generator(model, size_cap=ORACLE_SIZE_CAP):
    """Generator built by walking every product state and every transition.

    Local moves change one coordinate; a synchronized transition fires from a
    state when every factor row has a successor, with one copy of its rate
    per successor combination.  The diagonal absorbs the negated row sums of
    the rate matrix, so rows sum to zero and self-loops cancel exactly.
    """
    counts = model.state_counts
    n = model.potential_states
    if n > size_cap:
        raise SizeCapError(f"state space of size {n} exceeds oracle cap {size_cap}")
    rates = np.zeros((n, n))
    for state in itertools.product(*[range(c) for c in counts]):
        i = state_index(state, counts)
        for a in range(model.k):
            row = model.local[a][state[a]]
            for target in np.nonzero(row)[0]:
                nxt = list(state)
                nxt[a] = int(target)
                rates[i, state_index(nxt, counts)] += row[target]
        for t in model.syncs:
            successor_sets = [
                np.nonzero(f[state[a]])[0] for a, f in enumerate(t.factors)
            ]
            if any(s.size == 0 for s in successor_sets):
                continue
            for combo in itertools.product(*successor_sets):
                rates[i, state_index(combo, counts)] += t.rate
    q = rates - np.diag(rates.sum(axis=1))
    pi0 = reduce(np.kron, model.pi0_factors)
    return DenseChain(q, pi0, n - 1)


def dense_mtta(chain):
    """Expected absorption time via a direct dense solve.

    Deletes the absorbing row and column and solves the transient block;
    a singular block means absorption is not certain from the support of
    the initial distribution.
    """
    keep = [i for i in range(chain.n_states) if i != chain.absorbing_index]
    q_hat = chain.q[np.ix_(keep, keep)]
    pi_hat = chain.pi0[keep]
    try:
        with np.errstate(invalid="ignore", divide="ignore"):
            x = scipy.linalg.solve(q_hat, np.ones(len(keep)))
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise AbsorptionError(
            "transient block is singular; the absorbing state is unreachable "
            "from part of the initial support"
        ) from exc
    if not np.all(np.isfinite(x)):
        raise AbsorptionError(
            "transient block is singular; the absorbing state is unreachable "
            "from part of the initial support"
        )
    return float(-pi_hat @ x)


def dense_splitting_parts(model, gamma, size_cap=ORACLE_SIZE_CAP):
    """Dense ``D``, ``A1``, ``A2`` of the shifted splitting, plus ``Q``."""
    chain = dense_generator(model, size_cap=size_cap)
    n = chain.n_states
    a1 = np.zeros((n, n))
    counts = model.state_counts
    for a in range(model.k):
        left = int(np.prod(counts[:a], dtype=np.int64))
        right = int(np.prod(counts[a + 1 :], dtype=np.int64))
        a1 += np.kron(np.eye(left), np.kron(model.local[a], np.eye(right)))
    d = -gamma * np.eye(n)
    a2 = chain.q - a1 + gamma * np.eye(n)
    return chain, d, a1, a2


def dense_contraction_checks(model, gamma, size_cap=ORACLE_SIZE_CAP,
                             compute_rho=True):
    """Iteration-matrix diagnostics and splitting premises, all dense.

    Returns a dict with the spectral radius ``rho`` and infinity norm of
    ``M = -(D + A1)^{-1} (A2 - S)``, plus one boolean per premise of the
    convergence theorem.  The strict-column premise checks positivity of the
    absorbing column of ``A2`` over the transient states, which is what the
    strict norm bound rests on.
    """
    chain, d, a1, a2 = dense_splitting_parts(model, gamma, size_cap=size_cap)
    n = chain.n_states
    e_abs = np.zeros(n)
    e_abs[chain.absorbing_index] = 1.0
    s = np.outer((a1 + a2) @ e_abs, e_abs)
    q1 = d + a1
    m = -scipy.linalg.solve(q1, a2 - s)
    tol = 1e-12 * max(gamma, 1.0)
    keep = [i for i in range(n) if i != chain.absorbing_index]
    premises = {
        "diag_nonpositive": bool(np.all(np.diag(d) <= 0)),
        "a1_nonnegative": bool(np.all(a1 >= -tol)),
        "a2_nonnegative": bool(np.all(a2 >= -tol)),
        "zero_row_sums": bool(np.max(np.abs(chain.q.sum(axis=1))) <= tol),
        "absorbing_row_zero": bool(
            np.max(np.abs(chain.q[chain.absorbing_index])) <= tol
        ),
        "absorbing_row_of_a1_zero": bool(
            np.max(np.abs(a1[chain.absorbing_index])) <= tol
        ),
        "strict_absorbing_column": bool(
            np.min(a2[keep, chain.absorbing_index]) > tol
        ),
    }
    result = {
        "norm_inf": float(np.max(np.abs(m).sum(axis=1))),
        "premises": premises,
        "q1_inverse_nonpositive": bool(
            np.all(scipy.linalg.inv(q1) <= tol)
        ),
    }
    if compute_rho:
        result["rho"] = float(np.max(np.abs(np.linalg.eigvals(m))))
    return result


def reachable_states(chain, tol=0.0):
    """Breadth-first reachable set from the support of the initial vector."""
    n = chain.n_states
    adjacency = chain.q > tol
    np.fill_diagonal(adjacency, False)
    seen = chain.pi0 > 0
    frontier = list(np.nonzero(seen)[0])
    while frontier:
        nxt = []
        for i in frontier:
            for j in np.nonzero(adjacency[i])[0]:
                if not seen[j]:
                    seen[j] = True
                    nxt.append(j)
        frontier = nxt
    return np.nonzero(seen)[0]
