"""Series solvers for the mean time to absorption.

The absorbing generator ``Q`` is shifted into ``Q = (D + A1) + A2`` and the
rank-1 correction ``S`` makes ``Q - S`` invertible without extracting the
transient block, so the expected absorption time is ``-pi0^T (Q - S)^{-1} b``
with reward vector ``b``.  With ``M = -(D + A1)^{-1}(A2 - S)`` the inverse
expands into a convergent series, evaluated in three ways:

* ``linear``    -- accumulate ``M^j (D + A1)^{-1} b`` term by term;
* ``squared``   -- multiply factors ``(I + M^{2^s})``, squaring the operator
  each step, which matches the linear partial sum with ``2^{s+1} - 1`` terms
  at quadratic convergence;
* ``transpose`` -- run the recurrence on ``pi0^T`` from the left, which keeps
  unreachable states at exactly zero and tends to hold ranks down.

Every application of ``(D + A1)^{-1}`` goes through the exponential-sum
factorization of the shifted Kronecker sum; nothing of size of the product
state space is ever formed.
"""

from __future__ import annotations

import math
import time

from .errors import DivergenceError, RankBudgetError
from .kron import KronSumInverse, exp_sum_coeffs, spectrum_interval
from .model import (
    build_descriptor,
    build_splitting,
    default_gamma,
    rcm_order,
)
from .tt import (
    RoundingPolicy,
    max_rank,
    tt_add,
    tt_dot,
    tt_norm_f,
    tt_ones,
    tt_rank_one,
    tt_round,
    tt_scale,
    ttm_add,
    ttm_apply,
    ttm_apply_left,
    ttm_apply_rounded,
    ttm_multiply_rounded,
    ttm_outer,
    ttm_round,
    ttm_scale,
)

BYTES_PER_ELEMENT = 8
# operators are assembled once; compressing them tightly is cheap and keeps
# the iteration rounding the only first-order error source
ASSEMBLY_TOLERANCE = 1e-14


class SolverConfig:
    """Knobs of a solve.

    Parameters
    ----------
    algorithm : {"linear", "squared", "transpose"}
        Series evaluation strategy; "squared" converges quadratically and is
        the default, "transpose" is the memory-lean variant.
    gamma_mode : {"minimal", "scaled", "value"}
        Shift selection: the exit-rate bound, a multiple of it
        (``gamma_factor``), or an explicit ``gamma_value``.
    exp_sum_eps : float
        Target accuracy of the exponential-sum inverse; kept one order below
        ``stop_tol`` so series truncation dominates the error.
    rounding : RoundingPolicy
        Rank truncation applied after every operator application, addition,
        and operator squaring.
    max_iter : int
        Iteration cap (squarings, for the squared algorithm).
    stop_tol : float
        Relative stopping threshold, see the algorithm docstrings.
    reward_shift : float
        Coefficient of the absorbing basis vector in the reward
        ``b = e + reward_shift * e_abs``; the default -1 zeroes the absorbing
        component, which makes intermediate estimates certified lower bounds
        that increase monotonically.
    reorder : bool
        Apply the bandwidth-reducing automaton ordering before assembly.
    """

    def __init__(self, algorithm="squared", gamma_mode="minimal",
                 gamma_factor=4.0, gamma_value=None, exp_sum_eps=1e-10,
                 rounding=None, max_iter=200, stop_tol=1e-8,
                 reward_shift=-1.0, reorder=True):
        if algorithm not in ("linear", "squared", "transpose"):
            raise ValueError(f"unknown algorithm {algorithm!r}")
        if gamma_mode not in ("minimal", "scaled", "value"):
            raise ValueError(f"unknown gamma mode {gamma_mode!r}")
        if stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        self.algorithm = algorithm
        self.gamma_mode = gamma_mode
        self.gamma_factor = float(gamma_factor)
        self.gamma_value = gamma_value
        self.exp_sum_eps = float(exp_sum_eps)
        self.rounding = rounding if rounding is not None else RoundingPolicy()
        self.max_iter = int(max_iter)
        self.stop_tol = float(stop_tol)
        self.reward_shift = float(reward_shift)
        self.reorder = bool(reorder)


class SolveReport:
    """Outcome of a solve, including per-iteration diagnostics.

    ``measure_history`` holds the running absorption-time estimate after each
    iteration; with the default reward vector these are guaranteed lower
    bounds and nondecreasing.  ``max_rank_history`` tracks the largest bond
    rank among the objects updated in each iteration.  ``peak_tt_bytes``
    accounts every persistent train and the largest pre-rounding product
    buffer, at 8 bytes per element.
    """

    def __init__(self, mtta, iterations, measure_history, max_rank_history,
                 residual_estimate, wall_time, peak_tt_bytes, gamma,
                 algorithm, exp_sum_terms, spectrum):
        self.mtta = mtta
        self.iterations = iterations
        self.measure_history = measure_history
        self.max_rank_history = max_rank_history
        self.residual_estimate = residual_estimate
        self.wall_time = wall_time
        self.peak_tt_bytes = peak_tt_bytes
        self.gamma = gamma
        self.algorithm = algorithm
        self.exp_sum_terms = exp_sum_terms
        self.spectrum = spectrum

    def to_dict(self):
        return {
            "mtta": self.mtta,
            "iterations": self.iterations,
            "measure_history": list(self.measure_history),
            "max_rank_history": [int(r) for r in self.max_rank_history],
            "residual_estimate": self.residual_estimate,
            "wall_time": self.wall_time,
            "peak_tt_bytes": int(self.peak_tt_bytes),
            "gamma": self.gamma,
            "algorithm": self.algorithm,
            "exp_sum_terms": int(self.exp_sum_terms),
            "spectrum": [self.spectrum[0], self.spectrum[1]],
        }

    def __repr__(self):
        return (
            f"<SolveReport mtta={self.mtta!r} iterations={self.iterations} "
            f"algorithm={self.algorithm!r}>"
        )


class _Workspace:
    """Prepared operators shared by the three algorithms.

    The exponential-sum inverse is materialized once as an operator train
    (and its transpose), so each iteration costs one truncated product
    instead of re-accumulating the sum term by term.
    """

    def __init__(self, model, split, inverse, pi0, b, policy, stop_tol,
                 max_iter, exp_terms, spectrum):
        self.model = model
        self.split = split
        self.inverse = inverse
        self.pi0 = pi0
        self.b = b
        self.policy = policy
        self.stop_tol = stop_tol
        self.max_iter = max_iter
        self.exp_terms = exp_terms
        self.spectrum = spectrum
        self.p_inv = inverse.as_tt_matrix(policy)
        self.p_inv_t = self.p_inv.transpose()
        self.fixed_elements = (
            split.a2.storage_elements
            + split.s_vec.storage_elements
            + split.e_abs.storage_elements
            + self.p_inv.storage_elements
            + self.p_inv_t.storage_elements
            + pi0.storage_elements
            + b.storage_elements
        )

    def apply_a2_minus_s(self, y):
        """``(A2 - S) y`` with the rank-1 correction applied implicitly."""
        weight = tt_dot(self.split.e_abs, y)
        out = ttm_apply(self.split.a2, y)
        transient = out.storage_elements
        if weight != 0.0:
            out = tt_add(out, tt_scale(self.split.s_vec, -weight))
        return tt_round(out, self.policy), transient

    def apply_m(self, y):
        """One application of the iteration operator ``M``."""
        z, transient = self.apply_a2_minus_s(y)
        return ttm_apply_rounded(self.p_inv, z, self.policy), transient

    def apply_p_inv(self, y):
        return ttm_apply_rounded(self.p_inv, y, self.policy)

    def apply_p_inv_t(self, y):
        return ttm_apply_rounded(self.p_inv_t, y, self.policy)

    def measure(self, x):
        return -tt_dot(self.pi0, x)


def _exp_sum_cache_key(r_cond):
    # round the conditioning interval up to the next power of two so repeated
    # solves of one model family share coefficients
    return 2.0 ** math.ceil(math.log2(max(r_cond, 1.0)))


_EXP_SUM_CACHE = {}


def _cached_exp_sum(r_cond, eps):
    key = (_exp_sum_cache_key(r_cond), eps)
    if key not in _EXP_SUM_CACHE:
        _EXP_SUM_CACHE[key] = exp_sum_coeffs(key[0], eps)
    return _EXP_SUM_CACHE[key]


def _resolve_gamma(descriptor, cfg):
    if cfg.gamma_mode == "minimal":
        return default_gamma(descriptor, "minimal")
    if cfg.gamma_mode == "scaled":
        return default_gamma(descriptor, "scaled", cfg.gamma_factor)
    if cfg.gamma_value is None:
        raise ValueError("gamma_mode 'value' needs gamma_value")
    return float(cfg.gamma_value)


def prepare_workspace(model, cfg):
    """Validate, reorder, assemble, and factorize; shared solve front end."""
    model.validate()
    if cfg.reorder and model.k > 1:
        model = model.permuted(rcm_order(model.topology))
    assembly = RoundingPolicy(ASSEMBLY_TOLERANCE, cfg.rounding.max_rank)
    descriptor = build_descriptor(model, assembly)
    gamma = _resolve_gamma(descriptor, cfg)
    split = build_splitting(model, descriptor, gamma, assembly)
    lo, hi = spectrum_interval(split.neg_q1)
    es = _cached_exp_sum(hi / lo, cfg.exp_sum_eps)
    inverse = KronSumInverse(split.neg_q1, es, 1.0 / lo)
    pi0 = tt_rank_one(model.pi0_factors)
    b = tt_ones(model.state_counts)
    if cfg.reward_shift != 0.0:
        b = tt_round(
            tt_add(b, tt_scale(split.e_abs, cfg.reward_shift)), assembly
        )
    return _Workspace(
        model, split, inverse, pi0, b, cfg.rounding, cfg.stop_tol,
        cfg.max_iter, len(es), (lo, hi),
    )


def _geometric_tail(residual, ratio):
    """Bound on the remaining series mass from the latest contraction ratio."""
    if ratio >= 1.0:
        return math.inf
    return residual * ratio / (1.0 - ratio)


class _MeasureStop:
    """Stop once the estimated remaining measure mass drops below tolerance.

    The reported quantity is the running measure, so the stopping rule
    watches its increments rather than iterate norms: the Frobenius norm of
    the iterate spreads over the whole state space and can dwarf the single
    projected component by orders of magnitude.  The remaining mass is
    estimated geometrically from the ratio of consecutive increments.
    """

    def __init__(self, stop_tol):
        self.stop_tol = stop_tol
        self.prev_increment = None

    def converged(self, history):
        if len(history) < 2:
            return False
        increment = max(history[-1] - history[-2], 0.0)
        prev = self.prev_increment
        self.prev_increment = increment
        if increment == 0.0:
            return True
        if prev is None or prev <= 0.0:
            return False
        ratio = min(increment / prev, 0.999)
        tail = _geometric_tail(increment, ratio)
        return tail < self.stop_tol * max(abs(history[-1]), 1e-300)


class _DivergenceGuard:
    """Abort on sustained increment growth well above the best norm seen.

    Non-normal iteration operators produce transient wiggles in the
    Frobenius norm even when the splitting contracts, so a few consecutive
    upticks alone are not conclusive; demanding an order-of-magnitude rise
    over the running minimum keeps the guard safe while still catching a
    spectral radius above one within a handful of iterations.
    """

    def __init__(self, streak=3, blowup=10.0):
        self.streak = streak
        self.blowup = blowup
        self.consecutive = 0
        self.prev = math.inf
        self.lowest = math.inf

    def check(self, norm):
        self.lowest = min(self.lowest, norm)
        if norm > self.prev * (1.0 + 1e-12):
            self.consecutive += 1
        else:
            self.consecutive = 0
        self.prev = norm
        if self.consecutive >= self.streak and norm > self.blowup * self.lowest:
            raise DivergenceError(
                "increment norms keep growing; the splitting does not contract "
                "(check the shift against the exit-rate bound)"
            )


def neumann_linear(ws):
    """Term-by-term series evaluation (linearly convergent).

    Stops once the geometric estimate of the remaining measure mass falls
    below ``stop_tol`` relative to the current estimate; aborts if increment
    norms keep growing, which signals an invalid splitting.
    """
    y = tt_scale(ws.apply_p_inv(ws.b), -1.0)
    x = y
    measures = [ws.measure(x)]
    ranks = [max(max_rank(x), max_rank(y))]
    peak = ws.fixed_elements + x.storage_elements + y.storage_elements
    guard = _DivergenceGuard()
    guard.check(tt_norm_f(y))
    stopper = _MeasureStop(ws.stop_tol)
    residual = math.inf
    iterations = 0
    for _ in range(ws.max_iter):
        y, transient = ws.apply_m(y)
        x = tt_round(tt_add(x, y), ws.policy)
        iterations += 1
        measures.append(ws.measure(x))
        ranks.append(max(max_rank(x), max_rank(y)))
        peak = max(
            peak,
            ws.fixed_elements + x.storage_elements + y.storage_elements + transient,
        )
        norm_y = tt_norm_f(y)
        norm_x = tt_norm_f(x)
        residual = norm_y / norm_x if norm_x > 0 else 0.0
        guard.check(norm_y)
        if norm_y == 0.0 or stopper.converged(measures):
            break
    return x, measures, ranks, residual, iterations, peak


def neumann_squared(ws):
    """Repeated-squaring series evaluation (quadratically convergent).

    After ``s`` squarings the iterate equals the linear partial sum with
    ``2^{s+1} - 1`` terms, up to rounding.  Stops once the estimated
    remaining measure mass falls below ``stop_tol``.  The iteration operator
    is squared and rounded each step; if a rank cap forces the squaring
    error above ``stop_tol`` the solve aborts, suggesting a larger shift.
    """
    policy = ws.policy
    p_inv = ws.p_inv
    a2s = ttm_round(
        ttm_add(ws.split.a2, ttm_scale(ttm_outer(ws.split.s_vec, ws.split.e_abs), -1.0)),
        policy,
    )
    m_op = ttm_multiply_rounded(p_inv, a2s, policy)
    y0 = tt_scale(ws.apply_p_inv(ws.b), -1.0)
    x = tt_round(tt_add(y0, ttm_apply(m_op, y0)), policy)
    measures = [ws.measure(x)]
    ranks = [max(max_rank(m_op), max_rank(x))]
    peak = (
        ws.fixed_elements
        + m_op.storage_elements
        + p_inv.storage_elements
        + a2s.storage_elements
        + x.storage_elements
    )
    iterations = 0
    residual = math.inf
    stopper = _MeasureStop(ws.stop_tol)
    for _ in range(ws.max_iter):
        m_old = m_op
        m_op = ttm_multiply_rounded(m_old, m_old, policy)
        square_transient = _zip_square_elements(m_old, m_op)
        if (
            policy.max_rank is not None
            and max_rank(m_op) >= policy.max_rank
            and m_op.truncation_error > ws.stop_tol * _ttm_norm(m_op)
        ):
            raise RankBudgetError(
                "rank cap forced the operator squaring error above stop_tol; "
                "retry with a larger gamma or a higher max_rank"
            )
        mx = ttm_apply_rounded(m_op, x, policy)
        x = tt_round(tt_add(x, mx), policy)
        iterations += 1
        measures.append(ws.measure(x))
        ranks.append(max(max_rank(m_op), max_rank(x)))
        peak = max(
            peak,
            ws.fixed_elements
            + m_op.storage_elements
            + x.storage_elements
            + square_transient
            + mx.storage_elements,
        )
        prev, last = measures[-2], measures[-1]
        residual = abs(last - prev) / max(abs(last), 1e-300)
        if stopper.converged(measures):
            break
    return x, measures, ranks, residual, iterations, peak


def neumann_transpose(ws):
    """Left-sided series evaluation on the initial distribution.

    Runs the recurrence on ``pi0^T``, which keeps unreachable states at zero
    throughout; the final left application of the shifted inverse happens
    once, after the loop.  The measure history accumulates increments against
    the precomputed vector ``(D + A1)^{-1} b``, each a certified contribution
    to the absorption time.
    """
    u = tt_scale(ws.apply_p_inv(ws.b), -1.0)
    y = ws.pi0
    x = y
    measures = [-tt_dot(y, u)]
    ranks = [max_rank(x)]
    peak = ws.fixed_elements + u.storage_elements + 2 * x.storage_elements
    guard = _DivergenceGuard()
    guard.check(tt_norm_f(y))
    stopper = _MeasureStop(ws.stop_tol)
    residual = math.inf
    iterations = 0
    for _ in range(ws.max_iter):
        t = ws.apply_p_inv_t(y)
        out = ttm_apply_left(t, ws.split.a2)
        transient = out.storage_elements
        weight = tt_dot(t, ws.split.s_vec)
        if weight != 0.0:
            out = tt_add(out, tt_scale(ws.split.e_abs, -weight))
        y = tt_round(out, ws.policy)
        x = tt_round(tt_add(x, y), ws.policy)
        iterations += 1
        measures.append(measures[-1] - tt_dot(y, u))
        ranks.append(max(max_rank(x), max_rank(y)))
        peak = max(
            peak,
            ws.fixed_elements
            + u.storage_elements
            + x.storage_elements
            + y.storage_elements
            + transient,
        )
        norm_y = tt_norm_f(y)
        norm_x = tt_norm_f(x)
        residual = norm_y / norm_x if norm_x > 0 else 0.0
        guard.check(norm_y)
        if norm_y == 0.0 or stopper.converged(measures):
            break
    xt = tt_scale(ws.apply_p_inv_t(x), -1.0)
    peak = max(peak, ws.fixed_elements + xt.storage_elements + x.storage_elements)
    return xt, measures, ranks, residual, iterations, peak


def _zip_square_elements(m_old, m_new):
    """Peak transient element count of a zipped operator squaring.

    Covers the two right-orthogonalized copies of the operand plus the
    largest zipper buffer, whose left bond follows the truncated output.
    """
    zipper = 0
    for i, c in enumerate(m_new.cores):
        r_out, m, o, _ = c.shape
        ra2 = m_old.ranks[i + 1]
        zipper = max(zipper, r_out * m * o * ra2 * ra2)
    return 2 * m_old.storage_elements + zipper + m_new.storage_elements


def _ttm_norm(a):
    """Frobenius norm of an operator train via its fused-vector view."""
    from .tt import TTVector

    fused = TTVector(
        [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in a.cores]
    )
    return tt_norm_f(fused)


_ALGORITHMS = {
    "linear": neumann_linear,
    "squared": neumann_squared,
    "transpose": neumann_transpose,
}


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except Exception as exc:
        exc.args = (f"{name}: {exc}",)
        raise


def compute_mtta(model, cfg=None):
    """End-to-end solve: reorder, assemble, split, factorize, iterate.

    Returns a SolveReport whose ``mtta`` is ``-<pi0, x>`` for the right-sided
    algorithms and ``-<x^T, b>`` for the transpose variant.
    """
    cfg = cfg if cfg is not None else SolverConfig()
    start = time.perf_counter()
    ws = _stage("setup", prepare_workspace, model, cfg)
    run = _ALGORITHMS[cfg.algorithm]
    x, measures, ranks, residual, iterations, peak = _stage(cfg.algorithm, run, ws)
    if cfg.algorithm == "transpose":
        mtta = -tt_dot(x, ws.b)
    else:
        mtta = ws.measure(x)
    return SolveReport(
        mtta=mtta,
        iterations=iterations,
        measure_history=measures,
        max_rank_history=ranks,
        residual_estimate=residual,
        wall_time=time.perf_counter() - start,
        peak_tt_bytes=peak * BYTES_PER_ELEMENT,
        gamma=ws.split.gamma,
        algorithm=cfg.algorithm,
        exp_sum_terms=ws.exp_terms,
        spectrum=ws.spectrum,
    )


def apply_m(split, es, v, policy=None):
    """One application of ``M = -(D + A1)^{-1}(A2 - S)`` to a train.

    Provided for direct inspection of the iteration operator; the solvers
    cache the factorized inverse instead of rebuilding it per call.
    """
    policy = policy if policy is not None else RoundingPolicy()
    lo, _ = spectrum_interval(split.neg_q1)
    inverse = KronSumInverse(split.neg_q1, es, 1.0 / lo)
    weight = tt_dot(split.e_abs, v)
    z = ttm_apply(split.a2, v)
    if weight != 0.0:
        z = tt_add(z, tt_scale(split.s_vec, -weight))
    return inverse.apply(tt_round(z, policy), policy)
