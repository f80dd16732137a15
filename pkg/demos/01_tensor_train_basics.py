"""Tensor trains from scratch: compression, arithmetic, rounding.

Run:  python3 demos/01_tensor_train_basics.py
"""

import numpy as np

from santt import (
    RoundingPolicy,
    tt_add,
    tt_dot,
    tt_from_dense,
    tt_norm_f,
    tt_rank_one,
    tt_round,
    tt_to_dense,
    ttm_apply,
    ttm_kron_sum,
)

rng = np.random.default_rng(0)

# A 4-mode tensor that is secretly a sum of two outer products compresses
# to bond ranks (1, 2, 2, 2, 1) instead of 3 * 4 * 4 * 5 = 240 entries.
a = [rng.random(n) for n in (3, 4, 4, 5)]
b = [rng.random(n) for n in (3, 4, 4, 5)]
dense = np.einsum("i,j,k,l->ijkl", *a) + np.einsum("i,j,k,l->ijkl", *b)
train = tt_from_dense(dense, RoundingPolicy(1e-12))
print("mode sizes:", train.mode_sizes)
print("bond ranks:", train.ranks)
print("stored elements:", train.storage_elements, "vs dense", dense.size)
print("reconstruction error:", np.linalg.norm(tt_to_dense(train) - dense))

# Arithmetic stays in compressed form.  Adding a tensor to itself doubles
# the nominal ranks; rounding recompresses them exactly.
doubled = tt_add(train, train)
print("\nranks after add:", doubled.ranks)
rounded = tt_round(doubled, RoundingPolicy(1e-12))
print("ranks after rounding:", rounded.ranks)
print("norm ratio (should be 2):", tt_norm_f(rounded) / tt_norm_f(train))

# Inner products contract bond by bond, never touching the dense tensor.
u = tt_rank_one(a)
print("\n<u, train> =", tt_dot(u, train))
print("dense check:", float(np.sum(tt_to_dense(u) * dense)))

# Kronecker-sum operators have an exact rank-2 train representation.
mats = [rng.random((n, n)) for n in (3, 4, 4, 5)]
op = ttm_kron_sum(mats)
print("\nKronecker-sum operator ranks:", op.ranks)
result = ttm_apply(op, train)
print("operator apply output ranks (before rounding):", result.ranks)
print("rounded:", tt_round(result, RoundingPolicy(1e-10)).ranks)
