"""Compiled inner loops for the collapsed Gibbs sampler.

Cluster buffers (sizes, sums, lambdas) have capacity n and hold the ``k``
occupied clusters in slots 0..k-1.  Labels in ``z`` are 0-based.
All random draws go through the numpy Generator passed in, so a compiled run
consumes exactly the same stream as the equivalent Python calls would.
"""
import math

import numba
import numpy as np

NEEDS_LARGER_TABLE = -2


@numba.njit(cache=True)
def update_lambdas(k, sizes, sums, lambdas, a, b, rng):
    for r in range(k):
        lambdas[r] = rng.gamma(sums[r] + a, 1.0 / (sizes[r] + b))


@numba.njit(cache=True)
def _remove_cell(i, z, counts, k, sizes, sums, lambdas):
    c = z[i]
    sizes[c] -= 1
    sums[c] -= counts[i]
    z[i] = -1
    if sizes[c] > 0:
        return k
    # cluster died: shift the later clusters down one slot
    for r in range(c, k - 1):
        sizes[r] = sizes[r + 1]
        sums[r] = sums[r + 1]
        lambdas[r] = lambdas[r + 1]
    for j in range(z.size):
        if z[j] > c:
            z[j] -= 1
    return k - 1


@numba.njit(cache=True)
def assign_cell(i, z, counts, log_fact, log_m, k, sizes, sums, lambdas,
                log_vn, gamma, a, b, weights, rng):
    """Resample the label of cell i.  Returns the new k, or NEEDS_LARGER_TABLE
    (leaving the state untouched) when log_vn does not reach t = k_without_i + 1."""
    c_old = z[i]
    k_minus = k - 1 if sizes[c_old] == 1 else k
    if k_minus + 1 >= log_vn.size:
        return NEEDS_LARGER_TABLE
    k = _remove_cell(i, z, counts, k, sizes, sums, lambdas)

    n_i = counts[i]
    wmax = -np.inf
    for c in range(k):
        w = math.log(sizes[c] + gamma) + n_i * math.log(lambdas[c]) - lambdas[c] - log_fact[i]
        weights[c] = w
        if w > wmax:
            wmax = w
    w_new = math.log(gamma) + log_vn[k + 1] - log_vn[k] + log_m[i]
    weights[k] = w_new
    if w_new > wmax:
        wmax = w_new

    total = 0.0
    for c in range(k + 1):
        weights[c] = math.exp(weights[c] - wmax)
        total += weights[c]
    u = rng.random() * total
    choice = k
    acc = 0.0
    for c in range(k + 1):
        acc += weights[c]
        if u < acc:
            choice = c
            break

    if choice == k:
        lambdas[k] = rng.gamma(n_i + a, 1.0 / (1.0 + b))
        sizes[k] = 1
        sums[k] = n_i
        z[i] = k
        return k + 1
    sizes[choice] += 1
    sums[choice] += n_i
    z[i] = choice
    return k


@numba.njit(cache=True)
def sweep_assignments(order, start, z, counts, log_fact, log_m, k, sizes, sums,
                      lambdas, log_vn, gamma, a, b, weights, rng):
    """Run assign_cell for order[start:].  Returns (k, stop) where stop is -1
    after a full pass, or the position that needs a larger V_n table."""
    for pos in range(start, order.size):
        new_k = assign_cell(order[pos], z, counts, log_fact, log_m, k, sizes, sums,
                            lambdas, log_vn, gamma, a, b, weights, rng)
        if new_k == NEEDS_LARGER_TABLE:
            return k, pos
        k = new_k
    return k, -1
