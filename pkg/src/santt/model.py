"""Interacting-automata models and their Kronecker-structured generators.

A model is a set of small continuous-time automata coupled by synchronized
transitions.  The global generator over the product state space is never
assembled densely; it is kept as

    Q = R + W + Delta,

where ``R`` is the Kronecker sum of the local rate matrices, ``W`` the sum of
Kronecker products contributed by the synchronized transitions, and ``Delta``
the diagonal of negated exit rates.  The global absorbing state is, by
convention, the product state in which every automaton sits in its last local
state.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse
import scipy.sparse.csgraph
import yaml

from .errors import ModelError
from .kron import KronSumOperator
from .tt import (
    DEFAULT_POLICY,
    tt_add,
    tt_diag,
    tt_ones,
    tt_round,
    tt_scale,
    tt_unit,
    ttm_add,
    ttm_apply,
    ttm_from_kron_terms,
    ttm_kron_sum,
    ttm_round,
)


class SyncTransition:
    """One synchronized transition: a rate and k dense 0/1 factor matrices."""

    def __init__(self, rate, factors):
        self.rate = float(rate)
        self.factors = [np.asarray(f, dtype=float) for f in factors]

    def __repr__(self):
        return f"<SyncTransition rate={self.rate} on {len(self.factors)} automata>"


class SanModel:
    """An interacting-automata model over a product state space.

    Parameters
    ----------
    state_counts : sequence of int
        Number of local states per automaton.
    local : list of ndarray
        Local rate matrices; nonnegative off-diagonal, zero diagonal, and a
        zero last row (the last local state has no outgoing local moves).
    syncs : list of SyncTransition
        Synchronized transitions; identity factors mark unaffected automata.
    pi0_factors : list of ndarray
        Probability vectors whose Kronecker product is the initial
        distribution; the product must put zero mass on the absorbing state.
    topology : ndarray or None
        k x k 0/1 interaction matrix with unit diagonal; defaults to identity.
    """

    def __init__(self, state_counts, local, syncs, pi0_factors, topology=None,
                 validate=True):
        self.state_counts = tuple(int(n) for n in state_counts)
        self.k = len(self.state_counts)
        self.local = [np.asarray(m, dtype=float) for m in local]
        self.syncs = list(syncs)
        self.pi0_factors = [np.asarray(p, dtype=float) for p in pi0_factors]
        if topology is None:
            topology = np.eye(self.k)
        self.topology = np.asarray(topology, dtype=float)
        if validate:
            self.validate()

    @property
    def potential_states(self):
        return int(np.prod(self.state_counts, dtype=np.int64))

    def validate(self):
        k = self.k
        if k < 1:
            raise ModelError("a model needs at least one automaton")
        if len(self.local) != k or len(self.pi0_factors) != k:
            raise ModelError("local matrices and pi0 factors must both have length k")
        for i, (n, m) in enumerate(zip(self.state_counts, self.local)):
            if n < 1:
                raise ModelError(f"automaton {i}: state count must be positive")
            if m.shape != (n, n):
                raise ModelError(f"automaton {i}: local matrix must be {n}x{n}")
            if not np.all(np.isfinite(m)):
                raise ModelError(f"automaton {i}: local matrix has non-finite entries")
            if np.any(m < 0):
                raise ModelError(f"automaton {i}: local rates must be nonnegative")
            if np.any(np.diag(m) != 0):
                raise ModelError(f"automaton {i}: local matrix must have zero diagonal")
            if np.any(m[-1, :] != 0):
                raise ModelError(
                    f"automaton {i}: the last local state must have no outgoing "
                    "local transitions"
                )
        for j, t in enumerate(self.syncs):
            if not (math.isfinite(t.rate) and t.rate > 0):
                raise ModelError(f"sync {j}: rate must be positive and finite")
            if len(t.factors) != k:
                raise ModelError(f"sync {j}: expected {k} factors")
            for i, f in enumerate(t.factors):
                n = self.state_counts[i]
                if f.shape != (n, n):
                    raise ModelError(f"sync {j}, automaton {i}: factor must be {n}x{n}")
                if not np.all(np.isin(f, (0.0, 1.0))):
                    raise ModelError(
                        f"sync {j}, automaton {i}: factor entries must be 0 or 1"
                    )
            # the global absorbing state must stay absorbing: either the sync
            # is disabled there, or it maps the state to itself
            last_rows = [f[-1, :] for f in t.factors]
            disabled = any(np.all(row == 0) for row in last_rows)
            self_loop = all(np.all(row[:-1] == 0) for row in last_rows)
            if not (disabled or self_loop):
                raise ModelError(
                    f"sync {j}: can fire out of the global absorbing state"
                )
        for i, p in enumerate(self.pi0_factors):
            if p.shape != (self.state_counts[i],):
                raise ModelError(f"pi0 factor {i}: wrong length")
            if not np.all(np.isfinite(p)) or np.any(p < 0):
                raise ModelError(f"pi0 factor {i}: entries must be nonnegative")
            if abs(p.sum() - 1.0) > 1e-10:
                raise ModelError(f"pi0 factor {i}: entries must sum to 1")
        if not any(p[-1] == 0 for p in self.pi0_factors):
            raise ModelError(
                "the initial distribution must put zero mass on the absorbing state"
            )
        if self.topology.shape != (k, k):
            raise ModelError("topology must be a k x k matrix")
        if not np.all(np.isin(self.topology, (0.0, 1.0))):
            raise ModelError("topology entries must be 0 or 1")
        if np.any(np.diag(self.topology) != 1):
            raise ModelError("topology must have a unit diagonal")

    def permuted(self, perm):
        """The same model with the automata reordered by ``perm``."""
        perm = list(perm)
        if sorted(perm) != list(range(self.k)):
            raise ModelError("perm must be a permutation of the automaton indices")
        return SanModel(
            [self.state_counts[p] for p in perm],
            [self.local[p] for p in perm],
            [SyncTransition(t.rate, [t.factors[p] for p in perm]) for t in self.syncs],
            [self.pi0_factors[p] for p in perm],
            self.topology[np.ix_(perm, perm)],
        )

    def __repr__(self):
        return (
            f"<SanModel k={self.k} states={self.state_counts} "
            f"syncs={len(self.syncs)}>"
        )


# ---------------------------------------------------------------------------
# descriptor assembly


class Descriptor:
    """Assembled generator ``Q = R + W + Delta`` in operator-train form.

    Attributes
    ----------
    local_op : KronSumOperator
        The Kronecker-sum part ``R`` held through its dense factors.
    sync_terms : list of (rate, factors)
        The Kronecker-product terms of ``W``.
    exit_rates : TTVector
        The vector ``d = (R + W) e`` of total exit rates; ``Delta = -diag(d)``.
    q_tt : TTMatrix
        The full generator, assembled and rounded.
    delta_inf : float
        Upper bound on ``max(d)``; exact when ``delta_inf_exact`` is set,
        which holds whenever each synchronized transition's enabling varies
        with at most one automaton.
    """

    def __init__(self, local_op, sync_terms, exit_rates, q_tt, r_tt, w_tt,
                 delta_inf, delta_inf_exact):
        self.local_op = local_op
        self.sync_terms = sync_terms
        self.exit_rates = exit_rates
        self.q_tt = q_tt
        self.r_tt = r_tt
        self.w_tt = w_tt
        self.delta_inf = delta_inf
        self.delta_inf_exact = delta_inf_exact

    @property
    def mode_sizes(self):
        return self.local_op.mode_sizes


def _exit_rate_bound(model):
    """Upper bound on the largest exit rate, exact for separable enabling.

    The exit rate of a product state is ``sum_i lrs_i(s_i) + sum_t rate_t *
    prod_i rowsum(F_{t,i})(s_i)``.  Whenever at most one factor of a sync has
    non-constant row sums, its contribution folds into a per-automaton
    profile and the maximum decouples coordinate-wise (exact); other syncs
    contribute their worst-case product (upper bound).
    """
    profiles = [m.sum(axis=1) for m in model.local]
    constant = 0.0
    slack = 0.0
    exact = True
    for t in model.syncs:
        rowsums = [f.sum(axis=1) for f in t.factors]
        varying = [i for i, rs in enumerate(rowsums) if np.ptp(rs) > 0]
        if not varying:
            constant += t.rate * float(np.prod([rs[0] for rs in rowsums]))
        elif len(varying) == 1:
            i = varying[0]
            others = float(
                np.prod([rs[0] for j, rs in enumerate(rowsums) if j != i])
            )
            profiles[i] = profiles[i] + t.rate * others * rowsums[i]
        else:
            exact = False
            slack += t.rate * float(np.prod([rs.max() for rs in rowsums]))
    bound = sum(float(p.max()) for p in profiles) + constant + slack
    return bound, exact


def build_descriptor(model, policy=DEFAULT_POLICY):
    """Assemble the operator train of ``Q = R + W + Delta``."""
    r_tt = ttm_kron_sum(model.local)
    sync_terms = [(t.rate, t.factors) for t in model.syncs]
    if sync_terms:
        w_tt = ttm_from_kron_terms(sync_terms)
        rw = ttm_round(ttm_add(r_tt, w_tt), policy)
    else:
        w_tt = None
        rw = r_tt
    exit_rates = tt_round(ttm_apply(rw, tt_ones(model.state_counts)), policy)
    q_tt = ttm_round(ttm_add(rw, tt_diag(tt_scale(exit_rates, -1.0))), policy)
    delta_inf, exact = _exit_rate_bound(model)
    return Descriptor(
        KronSumOperator(model.local), sync_terms, exit_rates, q_tt, r_tt, w_tt,
        delta_inf, exact,
    )


def default_gamma(descriptor, mode="minimal", factor=None):
    """Splitting shift: the exit-rate bound, optionally scaled up.

    ``mode`` is ``"minimal"`` for the bound itself or ``"scaled"`` for
    ``factor`` times the bound with ``factor > 1``.
    """
    if mode == "minimal":
        return descriptor.delta_inf
    if mode == "scaled":
        if factor is None or factor <= 1.0:
            raise ValueError("scaled mode needs a factor greater than 1")
        return factor * descriptor.delta_inf
    raise ValueError(f"unknown gamma mode {mode!r}")


class Splitting:
    """Additive splitting ``Q = (D + A1) + A2`` driving the series solvers.

    With shift ``gamma >= max exit rate``: ``D = -gamma I``, ``A1 = R``, and
    ``A2 = W + Delta + gamma I`` is entrywise nonnegative.  ``D + A1`` is the
    Kronecker sum of the shifted local factors, so its inverse factorizes
    through exponential sums.  The rank-1 absorbing-state correction
    ``S = s_vec e_abs^T`` is never materialized: products ``(A2 - S) y`` are
    evaluated as ``A2 y - s_vec <e_abs, y>``.
    """

    def __init__(self, gamma, q1, a2, s_vec, e_abs):
        self.gamma = float(gamma)
        self.q1 = q1
        self.a2 = a2
        self.s_vec = s_vec
        self.e_abs = e_abs

    @property
    def mode_sizes(self):
        return self.q1.mode_sizes

    @property
    def neg_q1(self):
        """The positive-definite-side operator ``gamma I - R = -(D + A1)``."""
        return self.q1.scaled(-1.0)


def build_splitting(model, descriptor, gamma, policy=DEFAULT_POLICY):
    """Construct the shifted splitting for a validated model.

    Raises
    ------
    ModelError
        If ``gamma`` is below the exit-rate bound, which would break the
        nonnegativity of ``A2``.
    """
    if gamma < descriptor.delta_inf * (1.0 - 1e-12):
        raise ModelError(
            f"gamma {gamma:.6g} is below the exit-rate bound "
            f"{descriptor.delta_inf:.6g}"
        )
    k = model.k
    shifted = [m - (gamma / k) * np.eye(n) for m, n in zip(model.local, model.state_counts)]
    q1 = KronSumOperator(shifted)
    diag_vec = tt_add(
        tt_scale(tt_ones(model.state_counts), gamma),
        tt_scale(descriptor.exit_rates, -1.0),
    )
    a2 = tt_diag(tt_round(diag_vec, policy))
    if descriptor.w_tt is not None:
        a2 = ttm_add(descriptor.w_tt, a2)
    a2 = ttm_round(a2, policy)
    e_abs = tt_unit(model.state_counts, [n - 1 for n in model.state_counts])
    s_vec = tt_round(
        tt_add(ttm_apply(descriptor.r_tt, e_abs), ttm_apply(a2, e_abs)), policy
    )
    return Splitting(gamma, q1, a2, s_vec, e_abs)


# ---------------------------------------------------------------------------
# automaton ordering


def rcm_order(topology):
    """Bandwidth-reducing automaton order via reverse Cuthill-McKee.

    The interaction matrix is symmetrized first; a diagonal-only topology
    returns the identity permutation.
    """
    t = np.asarray(topology) != 0
    sym = (t | t.T)
    np.fill_diagonal(sym, False)
    if not sym.any():
        return np.arange(t.shape[0])
    graph = scipy.sparse.csr_matrix(sym.astype(np.int8))
    perm = scipy.sparse.csgraph.reverse_cuthill_mckee(graph, symmetric_mode=True)
    return np.asarray(perm, dtype=int)


def bandwidth(topology):
    """Largest index distance of an off-diagonal interaction."""
    t = np.asarray(topology) != 0
    sym = t | t.T
    idx = np.nonzero(sym)
    if idx[0].size == 0:
        return 0
    return int(np.max(np.abs(idx[0] - idx[1])))


# ---------------------------------------------------------------------------
# model files


def _check_finite(value, where):
    if isinstance(value, bool):
        raise ModelError(f"{where}: expected a number")
    if isinstance(value, (int, float)):
        if not math.isfinite(value):
            raise ModelError(f"{where}: non-finite number")
        return float(value)
    raise ModelError(f"{where}: expected a number, got {type(value).__name__}")


def _matrix_from(entry, n, where):
    if isinstance(entry, str):
        if entry == "I":
            return np.eye(n)
        raise ModelError(f"{where}: unknown matrix shorthand {entry!r}")
    if not isinstance(entry, list):
        raise ModelError(f"{where}: expected a nested array or \"I\"")
    rows = []
    for r, row in enumerate(entry):
        if not isinstance(row, list) or len(row) != n:
            raise ModelError(f"{where}: row {r} must be a list of {n} numbers")
        rows.append([_check_finite(x, f"{where}[{r}]") for x in row])
    if len(rows) != n:
        raise ModelError(f"{where}: expected {n} rows")
    return np.array(rows)


def model_from_dict(doc):
    """Build and validate a model from a parsed document."""
    if not isinstance(doc, dict):
        raise ModelError("model document must be a mapping")
    for key in ("k", "state_counts", "local", "pi0_factors"):
        if key not in doc:
            raise ModelError(f"missing required field {key!r}")
    k = doc["k"]
    if not isinstance(k, int) or k < 1:
        raise ModelError("field 'k' must be a positive integer")
    counts = doc["state_counts"]
    if not isinstance(counts, list) or len(counts) != k:
        raise ModelError("field 'state_counts' must list one count per automaton")
    counts = [int(_check_finite(c, "state_counts")) for c in counts]
    local = [
        _matrix_from(m, counts[i], f"local[{i}]") for i, m in enumerate(doc["local"])
    ] if isinstance(doc["local"], list) and len(doc["local"]) == k else None
    if local is None:
        raise ModelError("field 'local' must list one matrix per automaton")
    syncs = []
    for j, entry in enumerate(doc.get("syncs", []) or []):
        if not isinstance(entry, dict) or "rate" not in entry or "factors" not in entry:
            raise ModelError(f"syncs[{j}]: expected an object with 'rate' and 'factors'")
        rate = _check_finite(entry["rate"], f"syncs[{j}].rate")
        factors = entry["factors"]
        if not isinstance(factors, list) or len(factors) != k:
            raise ModelError(f"syncs[{j}].factors: expected {k} matrices")
        mats = [
            _matrix_from(f, counts[i], f"syncs[{j}].factors[{i}]")
            for i, f in enumerate(factors)
        ]
        syncs.append(SyncTransition(rate, mats))
    pi0 = doc["pi0_factors"]
    if not isinstance(pi0, list) or len(pi0) != k:
        raise ModelError("field 'pi0_factors' must list one vector per automaton")
    pi0_vecs = []
    for i, p in enumerate(pi0):
        if not isinstance(p, list) or len(p) != counts[i]:
            raise ModelError(f"pi0_factors[{i}]: expected {counts[i]} entries")
        pi0_vecs.append(np.array([_check_finite(x, f"pi0_factors[{i}]") for x in p]))
    topology = None
    if doc.get("topology") is not None:
        topology = _matrix_from(doc["topology"], k, "topology")
    try:
        return SanModel(counts, local, syncs, pi0_vecs, topology)
    except ModelError:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        raise ModelError(str(exc)) from exc


def model_to_dict(model):
    """Plain-data document for a model; identity factors become \"I\"."""
    syncs = []
    for t in model.syncs:
        factors = []
        for i, f in enumerate(t.factors):
            if np.array_equal(f, np.eye(model.state_counts[i])):
                factors.append("I")
            else:
                factors.append(f.tolist())
        syncs.append({"rate": t.rate, "factors": factors})
    return {
        "k": model.k,
        "state_counts": list(model.state_counts),
        "local": [m.tolist() for m in model.local],
        "syncs": syncs,
        "pi0_factors": [p.tolist() for p in model.pi0_factors],
        "topology": model.topology.astype(int).tolist(),
    }


def load_model(path):
    """Read and validate a model file (YAML mapping; rejects NaN and Inf)."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ModelError(f"cannot parse model file: {exc}") from exc
    return model_from_dict(doc)


def save_model(model, path):
    """Write a model file that load_model reads back identically."""
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(model_to_dict(model), fh, sort_keys=False)
