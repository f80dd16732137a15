"""Kronecker-sum operators and exponential-sum approximation of their inverses.

The inverse of a Kronecker sum ``A_1 (+) ... (+) A_k`` with spectrum in the
positive half line is approximated through

    1/x  ~=  sum_j alpha_j exp(-beta_j x),

because the matrix exponential of a Kronecker sum factorizes into a Kronecker
product of small dense exponentials.  The coefficients come from sinc
quadrature applied to ``1/x = int exp(-x e^t + t) dt`` with step ``h`` and
symmetric nodes ``j = -L..L``, giving ``alpha_j = h e^{jh}``,
``beta_j = e^{jh}``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import AccuracyError, ShapeMismatchError, SizeCapError, SpectrumError
from .tt import (
    DEFAULT_POLICY,
    RoundingPolicy,
    TTVector,
    tt_add,
    tt_round,
    ttm_from_kron_terms,
    ttm_round,
)

EXPM_DIM_CAP = 512


def expm_dense(a, dim_cap=EXPM_DIM_CAP):
    """Matrix exponential of a small dense matrix (scaling and squaring).

    Raises on non-finite entries or dimensions above ``dim_cap``; large
    exponentials belong to the Kronecker-factorized code paths, never here.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatchError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > dim_cap:
        raise SizeCapError(f"matrix dimension {a.shape[0]} exceeds cap {dim_cap}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix exponential of non-finite entries")
    return scipy.linalg.expm(a)


class ExponentialSum:
    """Exponential-sum approximation of ``1/x`` on an interval ``[1, R]``.

    Attributes
    ----------
    alphas, betas : ndarray
        Positive coefficients of ``sum_j alphas[j] * exp(-betas[j] * x)``.
    interval : (float, float)
        Interval ``(1, R)`` the accuracy was verified on.
    accuracy : float
        Measured sup-norm error over a dense sample grid of the interval.
    """

    def __init__(self, alphas, betas, interval, accuracy):
        alphas = np.asarray(alphas, dtype=float)
        betas = np.asarray(betas, dtype=float)
        if alphas.shape != betas.shape or alphas.size == 0:
            raise ShapeMismatchError("alphas and betas must have equal, nonzero length")
        if np.any(alphas <= 0) or np.any(betas <= 0):
            raise ValueError("exponential-sum coefficients must be positive")
        self.alphas = alphas
        self.betas = betas
        self.interval = (float(interval[0]), float(interval[1]))
        self.accuracy = float(accuracy)

    def __len__(self):
        return len(self.alphas)

    def evaluate(self, x):
        """Evaluate the sum at the (array of) points ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (self.alphas[None, :] * np.exp(-np.outer(x, self.betas))).sum(axis=1)

    def grid_error(self, points=10_000):
        """Measured sup error of ``1/x`` minus the sum over the interval."""
        grid = _sample_grid(self.interval[0], self.interval[1], points)
        return float(np.max(np.abs(1.0 / grid - self.evaluate(grid))))

    def __repr__(self):
        return (
            f"<ExponentialSum terms={len(self)} interval={self.interval} "
            f"accuracy={self.accuracy:.3e}>"
        )


def _sample_grid(a, b, points):
    if b <= a * (1 + 1e-15):
        return np.array([a])
    # blend log- and linearly-spaced points so neither end is undersampled
    half = points // 2
    return np.unique(
        np.concatenate([np.geomspace(a, b, half), np.linspace(a, b, points - half)])
    )


def sinc_rule(step, terms):
    """Raw quadrature coefficients for a given step and one-sided term count."""
    j = np.arange(-terms, terms + 1)
    betas = np.exp(j * step)
    return step * betas, betas


def _trim(alphas, betas, budget):
    """Drop edge terms whose total worst-case contribution stays under budget.

    ``alpha * exp(-beta * x)`` is maximal at ``x = 1`` for every term, so the
    magnitude at the left endpoint bounds the whole interval.
    """
    mags = alphas * np.exp(-betas)
    lo, hi = 0, len(alphas)
    acc = 0.0
    while lo < hi and acc + mags[lo] < budget:
        acc += mags[lo]
        lo += 1
    while hi > lo and acc + mags[hi - 1] < budget:
        acc += mags[hi - 1]
        hi -= 1
    return alphas[lo:hi], betas[lo:hi]


def exp_sum_coeffs(r_cond, eps, max_refinements=6):
    """Exponential sum with verified accuracy ``eps`` on ``[1, r_cond]``.

    Parameters are chosen a priori (strip half-width 1.4 balances the
    discretization and truncation errors), the achieved accuracy is measured
    on a dense grid, and the rule is refined if the measurement misses the
    target.  Edge terms with negligible contribution are trimmed afterwards.

    Raises
    ------
    AccuracyError
        If ``eps`` is below the attainable floor; carries the best achieved
        accuracy in its ``achieved`` field.
    """
    if r_cond < 1.0:
        raise ValueError("r_cond must be at least 1")
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    d = 1.4
    h = 2.0 * math.pi * d / math.log(8.0 / (math.cos(d) * eps))
    terms = math.ceil(math.log(4.0 / eps) / h)
    best = None
    for _ in range(max_refinements):
        alphas, betas = sinc_rule(h, terms)
        cand = ExponentialSum(alphas, betas, (1.0, r_cond), np.inf)
        err = cand.grid_error()
        if best is None or err < best[0]:
            best = (err, h, terms)
        if err <= eps:
            alphas, betas = _trim(alphas, betas, 0.02 * eps)
            trimmed = ExponentialSum(alphas, betas, (1.0, r_cond), np.inf)
            terr = trimmed.grid_error()
            if terr <= eps:
                trimmed.accuracy = terr
                return trimmed
            cand.accuracy = err
            return cand
        h *= 0.85
        terms = max(math.ceil(math.log(4.0 / eps) / h), math.ceil(1.2 * terms))
    raise AccuracyError(
        f"requested accuracy {eps:.3e} not attainable; best achieved {best[0]:.3e}",
        achieved=best[0],
    )


class KronSumOperator:
    """A Kronecker sum ``A_1 (+) ... (+) A_k`` held as its dense factors."""

    def __init__(self, factors):
        factors = [np.asarray(a, dtype=float) for a in factors]
        if not factors:
            raise ShapeMismatchError("factor list must not be empty")
        for a in factors:
            if a.ndim != 2 or a.shape[0] != a.shape[1]:
                raise ShapeMismatchError(f"factors must be square, got {a.shape}")
        self.factors = factors

    @property
    def mode_sizes(self):
        return tuple(a.shape[0] for a in self.factors)

    def scaled(self, c):
        return KronSumOperator([c * a for a in self.factors])

    def to_dense(self, size_cap=10**7):
        n = int(np.prod(self.mode_sizes, dtype=np.int64))
        if n * n > size_cap:
            raise SizeCapError(f"dense Kronecker sum of size {n} exceeds cap")
        out = np.zeros((n, n))
        for i, a in enumerate(self.factors):
            left = int(np.prod(self.mode_sizes[:i], dtype=np.int64))
            right = int(np.prod(self.mode_sizes[i + 1 :], dtype=np.int64))
            out += np.kron(np.eye(left), np.kron(a, np.eye(right)))
        return out

    def __repr__(self):
        return f"<KronSumOperator modes={self.mode_sizes}>"


def _max_feasible_rank(mode_sizes):
    """Largest bond rank any train with these mode sizes can have."""
    best = 1
    for i in range(1, len(mode_sizes)):
        left = int(np.prod(mode_sizes[:i], dtype=np.int64))
        right = int(np.prod(mode_sizes[i:], dtype=np.int64))
        best = max(best, min(left, right))
    return best


def _sym_part_range(a):
    """Real-part enclosure of spectrum and numerical range of one factor.

    By Bendixson's theorem the eigenvalues of ``a`` have real parts between
    the extreme eigenvalues of the symmetric part; the same interval is the
    projection of the numerical range onto the real axis, which is the set
    that matters for functions of non-normal matrices.
    """
    sym = 0.5 * (a + a.T)
    eig = np.linalg.eigvalsh(sym)
    return float(eig[0]), float(eig[-1])


def spectrum_range(op):
    """Real-part enclosure of a Kronecker sum, factor by factor (no sign check)."""
    lo = hi = 0.0
    for a in op.factors:
        fmin, fmax = _sym_part_range(a)
        lo += fmin
        hi += fmax
    return lo, hi


def spectrum_interval(op):
    """Strictly positive enclosure ``(a, b)`` of the spectrum of ``op``.

    The enclosure sums the symmetric-part eigenvalue ranges of the factors,
    which also covers the real part of the numerical range -- the region the
    exponential-sum error analysis needs for non-normal factors.

    Raises
    ------
    SpectrumError
        If the enclosure touches or crosses zero, which signals an invalid
        shift choice upstream.
    """
    lo, hi = spectrum_range(op)
    if lo <= 0.0:
        raise SpectrumError(
            f"spectral enclosure [{lo:.6g}, {hi:.6g}] is not strictly positive; "
            "increase the splitting shift"
        )
    return lo, hi


class KronSumInverse:
    """Cached applier of ``op^{-1}`` through an exponential sum.

    ``(scale * op)`` must have its spectrum inside ``es.interval``; then

        op^{-1} v  ~=  scale * sum_j alpha_j (E_{j,1} x ... x E_{j,k}) v,

    with ``E_{j,i} = exp(-beta_j * scale * A_i)`` precomputed once.  Each
    Kronecker-product term preserves the ranks of ``v``; terms are accumulated
    left to right with intermediate rounding, so results are deterministic.
    """

    def __init__(self, op, es, scale):
        if scale == 0.0:
            raise ValueError("scale must be nonzero")
        lo, hi = spectrum_range(op.scaled(scale))
        slack = 1e-9 * max(1.0, abs(es.interval[1]))
        if lo < es.interval[0] - slack or hi > es.interval[1] + slack:
            raise SpectrumError(
                f"scaled spectrum enclosure [{lo:.6g}, {hi:.6g}] leaves the "
                f"exponential-sum interval {es.interval}"
            )
        self.op = op
        self.es = es
        self.scale = float(scale)
        # per-mode stacks of factor exponentials, one (terms, n, n) array each
        self._stacks = [
            np.stack([expm_dense(-beta * scale * a) for beta in es.betas])
            for a in op.factors
        ]
        self._stacks_t = [s.transpose(0, 2, 1).copy() for s in self._stacks]

    def _accumulate(self, v, stacks, policy):
        """Weighted sum of all Kronecker-product terms applied to ``v``.

        The per-term products are computed in one batched contraction per
        mode; terms are then block-summed and rounded in chunks whose rank
        budget balances rounding cost against call overhead, with the
        per-round tolerance chosen so the total truncation error of the sum
        stays within the policy tolerance.
        """
        coeffs = self.scale * self.es.alphas
        nterms = len(coeffs)
        k = v.order
        # batch over terms: (L, n, n) x (r, n, s) -> (L, r, n, s)
        batches = [
            np.tensordot(stacks[i], c, axes=(2, 1)).transpose(0, 2, 1, 3)
            for i, c in enumerate(v.cores)
        ]
        if k == 1:
            total = np.tensordot(coeffs, batches[0], axes=(0, 0))
            return tt_round(TTVector([total]), policy)
        batches[0] = batches[0] * coeffs[:, None, None, None]
        rank_in = max(v.ranks)
        chunk = max(1, max(96, 6 * rank_in) // rank_in)
        rounds = math.ceil(nterms / chunk)
        step = RoundingPolicy(
            policy.rel_tolerance / math.sqrt(rounds + 1), policy.max_rank
        )
        acc = None
        for start in range(0, nterms, chunk):
            end = min(start + chunk, nterms)
            piece = _chunk_to_train(batches, start, end)
            summed = piece if acc is None else tt_add(acc, piece)
            acc = tt_round(summed, step)
        if rounds > 1:
            acc = tt_round(acc, policy)
        return acc

    def apply(self, v, policy=DEFAULT_POLICY):
        """Approximate ``op^{-1} v``."""
        if v.mode_sizes != self.op.mode_sizes:
            raise ShapeMismatchError(
                f"vector modes {v.mode_sizes} do not match operator {self.op.mode_sizes}"
            )
        return self._accumulate(v, self._stacks, policy)

    def apply_transpose(self, v, policy=DEFAULT_POLICY):
        """Approximate ``op^{-T} v`` (the factor exponentials transpose)."""
        if v.mode_sizes != self.op.mode_sizes:
            raise ShapeMismatchError(
                f"vector modes {v.mode_sizes} do not match operator {self.op.mode_sizes}"
            )
        return self._accumulate(v, self._stacks_t, policy)

    def as_tt_matrix(self, policy=DEFAULT_POLICY):
        """Materialize the approximate inverse as an operator train."""
        terms = [
            (self.scale * alpha, [s[j] for s in self._stacks])
            for j, alpha in enumerate(self.es.alphas)
        ]
        return ttm_round(ttm_from_kron_terms(terms), policy)


def _chunk_to_train(batches, start, end):
    """Assemble the block sum of a slice of batched term cores."""
    k = len(batches)
    count = end - start
    first = batches[0][start:end]  # (count, 1, n, s)
    _, _, n0, s0 = first.shape
    cores = [np.moveaxis(first, 0, 2).reshape(1, n0, count * s0)]
    for i in range(1, k - 1):
        block = batches[i][start:end]  # (count, r, n, s)
        _, r, n, s = block.shape
        core = np.zeros((count * r, n, count * s))
        for t in range(count):
            core[t * r : (t + 1) * r, :, t * s : (t + 1) * s] = block[t]
        cores.append(core)
    last = batches[-1][start:end]  # (count, r, n, 1)
    _, rl, nl, _ = last.shape
    cores.append(last.reshape(count * rl, nl, 1))
    return TTVector(cores)


def kron_sum_inverse_apply(op, es, scale, v, policy=DEFAULT_POLICY):
    """One-shot ``op^{-1} v`` through an exponential sum; see KronSumInverse."""
    return KronSumInverse(op, es, scale).apply(v, policy)


def kron_sum_inverse_as_ttm(op, es, scale, policy=DEFAULT_POLICY):
    """One-shot operator-train materialization of the approximate inverse."""
    return KronSumInverse(op, es, scale).as_tt_matrix(policy)
