"""Tensor-train vectors and operators.

A tensor with modes ``n_1, ..., n_k`` is stored as a chain of order-3 cores
of shape ``(r_i, n_i, r_{i+1})`` with boundary ranks ``r_1 = r_{k+1} = 1``.
Linear operators carry a row and a column index per mode, i.e. order-4 cores
of shape ``(r_i, m_i, n_i, r_{i+1})``; fusing the ``(m_i, n_i)`` pair turns an
operator into a plain tensor train, which is how rounding is implemented.

All values are immutable after construction and every operation is a pure
function, so shared instances are safe to use from multiple threads.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ShapeMismatchError, SizeCapError

DENSE_SIZE_CAP = 10**7


class RoundingPolicy:
    """Truncation control for rank rounding.

    Parameters
    ----------
    rel_tolerance : float
        Relative Frobenius-norm truncation tolerance, distributed over the
        bonds as ``rel_tolerance / sqrt(k - 1)``.
    max_rank : int or None
        Hard cap on every bond rank; ``None`` leaves ranks unbounded.
    """

    def __init__(self, rel_tolerance=1e-8, max_rank=None):
        if rel_tolerance < 0:
            raise ValueError("rel_tolerance must be nonnegative")
        if max_rank is not None and max_rank < 1:
            raise ValueError("max_rank must be a positive integer or None")
        self.rel_tolerance = float(rel_tolerance)
        self.max_rank = max_rank

    def __repr__(self):
        return f"RoundingPolicy(rel_tolerance={self.rel_tolerance!r}, max_rank={self.max_rank!r})"


DEFAULT_POLICY = RoundingPolicy()


def _check_cores(cores, ndim):
    if not cores:
        raise ShapeMismatchError("a tensor train needs at least one core")
    for c in cores:
        if c.ndim != ndim:
            raise ShapeMismatchError(f"expected order-{ndim} cores, got shape {c.shape}")
    if cores[0].shape[0] != 1 or cores[-1].shape[-1] != 1:
        raise ShapeMismatchError("boundary ranks must equal 1")
    for left, right in zip(cores[:-1], cores[1:]):
        if left.shape[-1] != right.shape[0]:
            raise ShapeMismatchError(
                f"adjacent cores disagree on the shared rank: {left.shape} vs {right.shape}"
            )


class TTVector:
    """A k-mode tensor in train format.

    Attributes
    ----------
    cores : list of ndarray
        Order-3 cores of shape ``(r_i, n_i, r_{i+1})``.
    truncation_error : float
        Absolute Frobenius error recorded by the rounding that produced this
        value (0.0 for exact constructions).
    """

    __slots__ = ("cores", "truncation_error")

    def __init__(self, cores, truncation_error=0.0):
        cores = [np.asarray(c, dtype=float) for c in cores]
        _check_cores(cores, 3)
        self.cores = cores
        self.truncation_error = truncation_error

    @property
    def mode_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def ranks(self):
        """Bond ranks including the unit boundaries, length k + 1."""
        return (1,) + tuple(c.shape[2] for c in self.cores)

    @property
    def order(self):
        return len(self.cores)

    @property
    def size(self):
        return int(np.prod(self.mode_sizes, dtype=np.int64))

    @property
    def storage_elements(self):
        return int(sum(c.size for c in self.cores))

    def to_dense(self, size_cap=DENSE_SIZE_CAP):
        return tt_to_dense(self, size_cap=size_cap)

    def norm(self):
        return tt_norm_f(self)

    def dot(self, other):
        return tt_dot(self, other)

    def rounded(self, policy=DEFAULT_POLICY):
        return tt_round(self, policy)

    def __add__(self, other):
        return tt_add(self, other)

    def __sub__(self, other):
        return tt_add(self, tt_scale(other, -1.0))

    def __mul__(self, c):
        return tt_scale(self, c)

    __rmul__ = __mul__

    def __neg__(self):
        return tt_scale(self, -1.0)

    def __repr__(self):
        return f"<TTVector modes={self.mode_sizes} ranks={self.ranks}>"


class TTMatrix:
    """A linear operator in train format.

    Cores have shape ``(r_i, m_i, n_i, r_{i+1})`` where ``m_i`` indexes rows
    and ``n_i`` columns of the i-th mode.
    """

    __slots__ = ("cores", "truncation_error")

    def __init__(self, cores, truncation_error=0.0):
        cores = [np.asarray(c, dtype=float) for c in cores]
        _check_cores(cores, 4)
        self.cores = cores
        self.truncation_error = truncation_error

    @property
    def row_sizes(self):
        return tuple(c.shape[1] for c in self.cores)

    @property
    def col_sizes(self):
        return tuple(c.shape[2] for c in self.cores)

    @property
    def ranks(self):
        return (1,) + tuple(c.shape[3] for c in self.cores)

    @property
    def order(self):
        return len(self.cores)

    @property
    def storage_elements(self):
        return int(sum(c.size for c in self.cores))

    def to_dense(self, size_cap=DENSE_SIZE_CAP):
        return ttm_to_dense(self, size_cap=size_cap)

    def rounded(self, policy=DEFAULT_POLICY):
        return ttm_round(self, policy)

    def transpose(self):
        return TTMatrix([np.transpose(c, (0, 2, 1, 3)) for c in self.cores])

    def __matmul__(self, other):
        if isinstance(other, TTVector):
            return ttm_apply(self, other)
        if isinstance(other, TTMatrix):
            return ttm_multiply(self, other)
        return NotImplemented

    def __add__(self, other):
        return ttm_add(self, other)

    def __mul__(self, c):
        return ttm_scale(self, c)

    __rmul__ = __mul__

    def __repr__(self):
        return (
            f"<TTMatrix rows={self.row_sizes} cols={self.col_sizes} ranks={self.ranks}>"
        )


# ---------------------------------------------------------------------------
# construction


def tt_zeros(mode_sizes):
    """All-zero tensor train with unit ranks."""
    return TTVector([np.zeros((1, n, 1)) for n in mode_sizes])


def tt_rank_one(factors):
    """Tensor train of the outer product of dense vectors, ranks all 1."""
    if not factors:
        raise ShapeMismatchError("factor list must not be empty")
    return TTVector([np.asarray(f, dtype=float).reshape(1, -1, 1) for f in factors])


def tt_ones(mode_sizes):
    """Rank-1 train of the all-ones tensor."""
    return tt_rank_one([np.ones(n) for n in mode_sizes])


def tt_unit(mode_sizes, index):
    """Rank-1 train of a standard basis tensor at the given multi-index."""
    factors = []
    for n, i in zip(mode_sizes, index):
        f = np.zeros(n)
        f[i] = 1.0
        factors.append(f)
    return tt_rank_one(factors)


def tt_random(mode_sizes, rank, rng):
    """Random train with the given internal bond rank (clipped to feasibility)."""
    k = len(mode_sizes)
    ranks = [1]
    for i in range(1, k):
        left = int(np.prod(mode_sizes[:i], dtype=np.int64))
        right = int(np.prod(mode_sizes[i:], dtype=np.int64))
        ranks.append(min(rank, left, right))
    ranks.append(1)
    cores = [
        rng.standard_normal((ranks[i], mode_sizes[i], ranks[i + 1])) for i in range(k)
    ]
    return TTVector(cores)


def tt_from_dense(tensor, policy=DEFAULT_POLICY, size_cap=DENSE_SIZE_CAP):
    """Compress a dense array into train format by successive SVDs.

    The result reproduces the input within ``policy.rel_tolerance`` in
    Frobenius norm; ranks are minimal up to that truncation.
    """
    tensor = np.asarray(tensor, dtype=float)
    if tensor.size > size_cap:
        raise SizeCapError(f"dense tensor of size {tensor.size} exceeds cap {size_cap}")
    dims = tensor.shape
    k = len(dims)
    nrm = np.linalg.norm(tensor)
    if nrm == 0.0:
        return tt_zeros(dims)
    delta = policy.rel_tolerance * nrm / math.sqrt(max(k - 1, 1))
    cores = []
    rank = 1
    mat = tensor.reshape(dims[0], -1)
    for i in range(k - 1):
        mat = mat.reshape(rank * dims[i], -1)
        u, sv, vt = np.linalg.svd(mat, full_matrices=False)
        r_new = _chop(sv, delta, policy.max_rank)
        cores.append(u[:, :r_new].reshape(rank, dims[i], r_new))
        mat = sv[:r_new, None] * vt[:r_new]
        rank = r_new
    cores.append(mat.reshape(rank, dims[-1], 1))
    return TTVector(cores)


def ttm_from_dense(matrix, row_sizes, col_sizes, policy=DEFAULT_POLICY,
                   size_cap=DENSE_SIZE_CAP):
    """Compress a dense matrix into operator train format.

    The matrix must be indexed in the Kronecker-product convention, i.e.
    row index ``(m_1, ..., m_k)`` with the last mode fastest.
    """
    matrix = np.asarray(matrix, dtype=float)
    if matrix.size > size_cap:
        raise SizeCapError(f"dense matrix of size {matrix.size} exceeds cap {size_cap}")
    k = len(row_sizes)
    tensor = matrix.reshape(tuple(row_sizes) + tuple(col_sizes))
    # interleave row/column indices, then fuse each (m_i, n_i) pair
    perm = [x for i in range(k) for x in (i, k + i)]
    fused = tensor.transpose(perm).reshape(
        [row_sizes[i] * col_sizes[i] for i in range(k)]
    )
    vec = tt_from_dense(fused, policy=policy, size_cap=size_cap)
    cores = [
        c.reshape(c.shape[0], row_sizes[i], col_sizes[i], c.shape[2])
        for i, c in enumerate(vec.cores)
    ]
    return TTMatrix(cores)


def ttm_identity(mode_sizes):
    return TTMatrix([np.eye(n).reshape(1, n, n, 1) for n in mode_sizes])


def ttm_from_kron_terms(terms):
    """Operator train of ``sum_t c_t (G_{t,1} x ... x G_{t,k})``.

    Parameters
    ----------
    terms : list of (float, list of ndarray)
        Each entry is a coefficient and the k dense factor matrices of one
        Kronecker-product term. Bond ranks of the result are at most the
        number of terms.
    """
    if not terms:
        raise ShapeMismatchError("term list must not be empty")
    k = len(terms[0][1])
    if any(len(factors) != k for _, factors in terms):
        raise ShapeMismatchError("all terms must carry the same number of factors")
    nterms = len(terms)
    factors = [[np.asarray(g, dtype=float) for g in fs] for _, fs in terms]
    coeffs = [float(c) for c, _ in terms]
    if k == 1:
        acc = sum(c * fs[0] for c, fs in zip(coeffs, factors))
        return TTMatrix([acc.reshape(1, *acc.shape, 1)])
    cores = []
    m, n = factors[0][0].shape
    first = np.zeros((1, m, n, nterms))
    for t in range(nterms):
        first[0, :, :, t] = coeffs[t] * factors[t][0]
    cores.append(first)
    for i in range(1, k - 1):
        m, n = factors[0][i].shape
        mid = np.zeros((nterms, m, n, nterms))
        for t in range(nterms):
            mid[t, :, :, t] = factors[t][i]
        cores.append(mid)
    m, n = factors[0][-1].shape
    last = np.zeros((nterms, m, n, 1))
    for t in range(nterms):
        last[t, :, :, 0] = factors[t][-1]
    cores.append(last)
    return TTMatrix(cores)


def ttm_kron_sum(factors):
    """Operator train of the Kronecker sum ``A_1 (+) ... (+) A_k``, rank 2."""
    factors = [np.asarray(a, dtype=float) for a in factors]
    if not factors:
        raise ShapeMismatchError("factor list must not be empty")
    k = len(factors)
    if k == 1:
        a = factors[0]
        return TTMatrix([a.reshape(1, *a.shape, 1)])
    eyes = [np.eye(a.shape[0]) for a in factors]
    n0 = factors[0].shape[0]
    first = np.zeros((1, n0, n0, 2))
    first[0, :, :, 0] = factors[0]
    first[0, :, :, 1] = eyes[0]
    cores = [first]
    for i in range(1, k - 1):
        n = factors[i].shape[0]
        mid = np.zeros((2, n, n, 2))
        mid[0, :, :, 0] = eyes[i]
        mid[1, :, :, 0] = factors[i]
        mid[1, :, :, 1] = eyes[i]
        cores.append(mid)
    nk = factors[-1].shape[0]
    last = np.zeros((2, nk, nk, 1))
    last[0, :, :, 0] = eyes[-1]
    last[1, :, :, 0] = factors[-1]
    cores.append(last)
    return TTMatrix(cores)


def ttm_outer(u, v):
    """Rank-1-style operator ``u v^T`` from two tensor trains."""
    if u.mode_sizes != v.mode_sizes and len(u.mode_sizes) != len(v.mode_sizes):
        raise ShapeMismatchError("operands must have the same number of modes")
    cores = []
    for cu, cv in zip(u.cores, v.cores):
        core = np.einsum("amc,bnd->abmncd", cu, cv)
        ra, rb, m, n, rc, rd = core.shape
        cores.append(core.reshape(ra * rb, m, n, rc * rd))
    return TTMatrix(cores)


def tt_diag(v):
    """Diagonal operator carrying the entries of ``v``; ranks are preserved."""
    cores = []
    for c in v.cores:
        r, n, s = c.shape
        d = np.zeros((r, n, n, s))
        idx = np.arange(n)
        d[:, idx, idx, :] = c
        cores.append(d)
    return TTMatrix(cores)


# ---------------------------------------------------------------------------
# dense conversion


def tt_to_dense(v, size_cap=DENSE_SIZE_CAP):
    """Contract a train back to a dense array with shape ``mode_sizes``."""
    if v.size > size_cap:
        raise SizeCapError(f"dense tensor of size {v.size} exceeds cap {size_cap}")
    out = v.cores[0].reshape(v.cores[0].shape[1], -1)
    for c in v.cores[1:]:
        r, n, s = c.shape
        out = out @ c.reshape(r, n * s)
        out = out.reshape(-1, s)
    return out.reshape(v.mode_sizes)


def ttm_to_dense(a, size_cap=DENSE_SIZE_CAP):
    """Expand an operator train to a dense (prod m) x (prod n) matrix."""
    nrows = int(np.prod(a.row_sizes, dtype=np.int64))
    ncols = int(np.prod(a.col_sizes, dtype=np.int64))
    if nrows * ncols > size_cap:
        raise SizeCapError(
            f"dense matrix of size {nrows * ncols} exceeds cap {size_cap}"
        )
    k = a.order
    fused = TTVector(
        [c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in a.cores]
    )
    tensor = tt_to_dense(fused, size_cap=size_cap).reshape(
        [d for i in range(k) for d in (a.row_sizes[i], a.col_sizes[i])]
    )
    perm = list(range(0, 2 * k, 2)) + list(range(1, 2 * k, 2))
    return tensor.transpose(perm).reshape(nrows, ncols)


# ---------------------------------------------------------------------------
# arithmetic


def tt_scale(v, c):
    """Scalar multiple; only the first core is scaled."""
    cores = [v.cores[0] * float(c)] + [core.copy() for core in v.cores[1:]]
    return TTVector(cores)


def _block_concat(cu, cv, first, last):
    """Direct-sum concatenation of two cores along the bond axes."""
    if first and last:
        return cu + cv
    if first:
        return np.concatenate((cu, cv), axis=-1)
    if last:
        return np.concatenate((cu, cv), axis=0)
    pad_shape_u = (cu.shape[0],) + cv.shape[1:]
    pad_shape_v = (cv.shape[0],) + cu.shape[1:]
    top = np.concatenate((cu, np.zeros(pad_shape_u)), axis=-1)
    bottom = np.concatenate((np.zeros(pad_shape_v), cv), axis=-1)
    return np.concatenate((top, bottom), axis=0)


def tt_add(u, v):
    """Elementwise sum; bond ranks add before any rounding."""
    if u.mode_sizes != v.mode_sizes:
        raise ShapeMismatchError(f"mode sizes differ: {u.mode_sizes} vs {v.mode_sizes}")
    k = u.order
    cores = [
        _block_concat(u.cores[i], v.cores[i], i == 0, i == k - 1) for i in range(k)
    ]
    return TTVector(cores)


def tt_add_many(vs):
    """Sum of several trains in one block concatenation (no rounding)."""
    if not vs:
        raise ShapeMismatchError("need at least one summand")
    if len(vs) == 1:
        return vs[0]
    sizes = vs[0].mode_sizes
    for v in vs[1:]:
        if v.mode_sizes != sizes:
            raise ShapeMismatchError("mode sizes differ across summands")
    k = len(sizes)
    if k == 1:
        return TTVector([sum(v.cores[0] for v in vs)])
    cores = [np.concatenate([v.cores[0] for v in vs], axis=2)]
    for i in range(1, k - 1):
        blocks = [v.cores[i] for v in vs]
        r_tot = sum(b.shape[0] for b in blocks)
        s_tot = sum(b.shape[2] for b in blocks)
        core = np.zeros((r_tot, sizes[i], s_tot))
        ro = so = 0
        for b in blocks:
            core[ro : ro + b.shape[0], :, so : so + b.shape[2]] = b
            ro += b.shape[0]
            so += b.shape[2]
        cores.append(core)
    cores.append(np.concatenate([v.cores[-1] for v in vs], axis=0))
    return TTVector(cores)


def ttm_scale(a, c):
    cores = [a.cores[0] * float(c)] + [core.copy() for core in a.cores[1:]]
    return TTMatrix(cores)


def ttm_add(a, b):
    if a.row_sizes != b.row_sizes or a.col_sizes != b.col_sizes:
        raise ShapeMismatchError("operator mode sizes differ")
    k = a.order
    cores = [
        _block_concat(a.cores[i], b.cores[i], i == 0, i == k - 1) for i in range(k)
    ]
    return TTMatrix(cores)


def tt_dot(u, v):
    """Euclidean inner product of two trains with matching mode sizes."""
    if u.mode_sizes != v.mode_sizes:
        raise ShapeMismatchError(f"mode sizes differ: {u.mode_sizes} vs {v.mode_sizes}")
    env = np.ones((1, 1))
    for cu, cv in zip(u.cores, v.cores):
        tmp = np.tensordot(env, cu, axes=(0, 0))
        env = np.tensordot(tmp, cv, axes=([0, 1], [0, 1]))
    return float(env[0, 0])


def tt_norm_f(v):
    """Frobenius norm, evaluated as ``sqrt(<v, v>)``."""
    return math.sqrt(max(tt_dot(v, v), 0.0))


def ttm_apply(a, v):
    """Operator-vector product; bond ranks multiply before rounding."""
    if a.col_sizes != v.mode_sizes:
        raise ShapeMismatchError(
            f"operator column sizes {a.col_sizes} do not match vector modes {v.mode_sizes}"
        )
    cores = []
    for ca, cv in zip(a.cores, v.cores):
        # (a,m,n,b) x (c,n,d) -> (a,m,b,c,d) -> (a,c,m,b,d)
        core = np.tensordot(ca, cv, axes=(2, 1)).transpose(0, 3, 1, 2, 4)
        ra, rc, m, rb, rd = core.shape
        cores.append(core.reshape(ra * rc, m, rb * rd))
    return TTVector(cores)


def ttm_apply_left(w, a):
    """Row-vector product ``w^T A``, returned transposed back to a column."""
    if a.row_sizes != w.mode_sizes:
        raise ShapeMismatchError(
            f"operator row sizes {a.row_sizes} do not match vector modes {w.mode_sizes}"
        )
    cores = []
    for ca, cw in zip(a.cores, w.cores):
        # (a,m,n,b) x (c,m,d) -> (a,n,b,c,d) -> (a,c,n,b,d)
        core = np.tensordot(ca, cw, axes=(1, 1)).transpose(0, 3, 1, 2, 4)
        ra, rc, n, rb, rd = core.shape
        cores.append(core.reshape(ra * rc, n, rb * rd))
    return TTVector(cores)


def ttm_multiply(a, b):
    """Operator-operator product; bond ranks multiply before rounding."""
    if a.col_sizes != b.row_sizes:
        raise ShapeMismatchError(
            f"operator sizes do not chain: {a.col_sizes} vs {b.row_sizes}"
        )
    cores = []
    for ca, cb in zip(a.cores, b.cores):
        # (a,m,n,b) x (c,n,o,d) -> (a,m,b,c,o,d) -> (a,c,m,o,b,d)
        core = np.tensordot(ca, cb, axes=(2, 1)).transpose(0, 3, 1, 4, 2, 5)
        ra, rc, m, o, rb, rd = core.shape
        cores.append(core.reshape(ra * rc, m, o, rb * rd))
    return TTMatrix(cores)


# ---------------------------------------------------------------------------
# rounding


def _chop(sv, delta, max_rank):
    """Smallest kept rank with discarded Frobenius mass at most delta.

    Singular values below the machine-precision floor are always dropped, so
    a zero tolerance still detects exact ranks up to roundoff.
    """
    if sv.size == 0:
        return 1
    floor = sv[0] * np.finfo(float).eps * len(sv)
    tail = np.cumsum(sv[::-1] ** 2)
    cut = int(np.searchsorted(tail, max(delta, floor) ** 2, side="right"))
    r = max(len(sv) - cut, 1)
    if max_rank is not None:
        r = min(r, max_rank)
    return r


def _right_orthogonalize(cores):
    """Right-to-left QR sweep; afterwards only the first core carries norm."""
    cores = [c.copy() for c in cores]
    for i in range(len(cores) - 1, 0, -1):
        r, n, s = cores[i].shape
        q, rmat = np.linalg.qr(cores[i].reshape(r, n * s).T)
        cores[i] = q.T.reshape(-1, n, s)
        cores[i - 1] = np.matmul(cores[i - 1], rmat.T)
    return cores


def _round_cores(cores, rel_tolerance, max_rank):
    """Right-to-left orthogonalization, then left-to-right SVD truncation.

    Returns the new cores together with the absolute Frobenius error that
    the truncation introduced.
    """
    k = len(cores)
    if k == 1:
        return [c.copy() for c in cores], 0.0
    cores = _right_orthogonalize(cores)
    nrm = np.linalg.norm(cores[0])
    if nrm == 0.0:
        sizes = [c.shape[1] for c in cores]
        return [np.zeros((1, n, 1)) for n in sizes], 0.0
    delta = rel_tolerance * nrm / math.sqrt(k - 1)
    discarded = 0.0
    for i in range(k - 1):
        r, n, s = cores[i].shape
        u, sv, vt = np.linalg.svd(cores[i].reshape(r * n, s), full_matrices=False)
        r_new = _chop(sv, delta, max_rank)
        discarded += float(np.sum(sv[r_new:] ** 2))
        cores[i] = u[:, :r_new].reshape(r, n, r_new)
        carry = sv[:r_new, None] * vt[:r_new]
        nxt = cores[i + 1]
        cores[i + 1] = (carry @ nxt.reshape(s, -1)).reshape(
            (r_new,) + nxt.shape[1:]
        )
    return cores, math.sqrt(discarded)


def tt_round(v, policy=DEFAULT_POLICY):
    """Truncate bond ranks within the policy's Frobenius tolerance.

    Ranks never increase; the absolute error actually introduced is stored
    on the result as ``truncation_error`` (it can exceed the tolerance only
    when ``max_rank`` forces further truncation).
    """
    cores, err = _round_cores(v.cores, policy.rel_tolerance, policy.max_rank)
    old = v.ranks
    new_cores = []
    for i, c in enumerate(cores):
        # a lossless sweep can reveal rank deficiency but must never grow ranks
        if c.shape[0] > old[i] or c.shape[2] > old[i + 1]:
            raise AssertionError("rounding increased a bond rank")
        new_cores.append(c)
    return TTVector(new_cores, truncation_error=err)


def ttm_round(a, policy=DEFAULT_POLICY):
    """Rank rounding for operators via the fused-pair vector view."""
    fused = [
        c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in a.cores
    ]
    cores, err = _round_cores(fused, policy.rel_tolerance, policy.max_rank)
    unfused = [
        c.reshape(c.shape[0], a.row_sizes[i], a.col_sizes[i], c.shape[2])
        for i, c in enumerate(cores)
    ]
    return TTMatrix(unfused, truncation_error=err)


def max_rank(v):
    """Largest internal bond rank of a vector or operator train."""
    ranks = v.ranks
    internal = ranks[1:-1]
    return max(internal) if internal else 1


# ---------------------------------------------------------------------------
# truncated products (zip-up)
#
# Forming a full operator product and rounding afterwards materializes cores
# with multiplied bond ranks, which dominates memory and time once ranks grow.
# Zipping instead truncates bond by bond while contracting, with both
# operands right-orthogonalized so local cuts stay controlled; a final
# standard rounding enforces the policy bound.


def _unfuse(cores, row_sizes, col_sizes):
    return [
        c.reshape(c.shape[0], row_sizes[i], col_sizes[i], c.shape[2])
        for i, c in enumerate(cores)
    ]


def _fused(a):
    return [c.reshape(c.shape[0], -1, c.shape[3]) for c in a.cores]


def ttm_multiply_rounded(a, b, policy=DEFAULT_POLICY):
    """Operator product truncated while contracting."""
    if a.col_sizes != b.row_sizes:
        raise ShapeMismatchError(
            f"operator sizes do not chain: {a.col_sizes} vs {b.row_sizes}"
        )
    k = a.order
    if k == 1:
        return ttm_round(ttm_multiply(a, b), policy)
    ca = _unfuse(_right_orthogonalize(_fused(a)), a.row_sizes, a.col_sizes)
    if b is a:
        cb = ca
    else:
        cb = _unfuse(_right_orthogonalize(_fused(b)), b.row_sizes, b.col_sizes)
    local = 0.5 * policy.rel_tolerance / math.sqrt(k - 1)
    z = np.ones((1, 1, 1))
    out = []
    zip_discard = 0.0
    for i in range(k):
        t1 = np.tensordot(z, ca[i], axes=(1, 0))  # (z, rb, m, n, a')
        t2 = np.tensordot(t1, cb[i], axes=([1, 3], [0, 1]))  # (z, m, a', o, b')
        t2 = np.ascontiguousarray(t2.transpose(0, 1, 3, 2, 4))
        zdim, m, o, ra2, rb2 = t2.shape
        if i == k - 1:
            out.append(t2.reshape(zdim, m, o, ra2 * rb2))
            break
        mat = t2.reshape(zdim * m * o, ra2 * rb2)
        u, sv, vt = np.linalg.svd(mat, full_matrices=False)
        r_new = _chop(sv, local * float(np.linalg.norm(sv)), policy.max_rank)
        zip_discard += float(np.sum(sv[r_new:] ** 2))
        out.append(u[:, :r_new].reshape(zdim, m, o, r_new))
        z = (sv[:r_new, None] * vt[:r_new]).reshape(r_new, ra2, rb2)
    result = ttm_round(TTMatrix(out), policy)
    result.truncation_error = math.sqrt(
        result.truncation_error**2 + zip_discard
    )
    return result


def ttm_apply_rounded(a, v, policy=DEFAULT_POLICY):
    """Operator-vector product truncated while contracting."""
    if a.col_sizes != v.mode_sizes:
        raise ShapeMismatchError(
            f"operator column sizes {a.col_sizes} do not match vector modes {v.mode_sizes}"
        )
    k = a.order
    if k == 1:
        return tt_round(ttm_apply(a, v), policy)
    ca = _unfuse(_right_orthogonalize(_fused(a)), a.row_sizes, a.col_sizes)
    cv = _right_orthogonalize(v.cores)
    local = 0.5 * policy.rel_tolerance / math.sqrt(k - 1)
    z = np.ones((1, 1, 1))
    out = []
    zip_discard = 0.0
    for i in range(k):
        t1 = np.tensordot(z, ca[i], axes=(1, 0))  # (z, rv, m, n, a')
        t2 = np.tensordot(t1, cv[i], axes=([1, 3], [0, 1]))  # (z, m, a', v')
        zdim, m, ra2, rv2 = t2.shape
        if i == k - 1:
            out.append(t2.reshape(zdim, m, ra2 * rv2))
            break
        mat = t2.reshape(zdim * m, ra2 * rv2)
        u, sv, vt = np.linalg.svd(mat, full_matrices=False)
        r_new = _chop(sv, local * float(np.linalg.norm(sv)), policy.max_rank)
        zip_discard += float(np.sum(sv[r_new:] ** 2))
        out.append(u[:, :r_new].reshape(zdim, m, r_new))
        z = (sv[:r_new, None] * vt[:r_new]).reshape(r_new, ra2, rv2)
    result = tt_round(TTVector(out), policy)
    result.truncation_error = math.sqrt(
        result.truncation_error**2 + zip_discard
    )
    return result
