"""Hot numeric kernels, each with a numba and a pure-numpy implementation.

The public names dispatch on :data:`invcomm._accel.USE_NUMBA`; both variants
stay importable (``*_numba`` / ``*_numpy``) for tests and benchmarks.
"""
from __future__ import annotations

import numpy as np

from ._accel import USE_NUMBA, njit


# -- per-retailer inventory transition ----------------------------------------

def inventory_kernel_numpy(pmf, targets_by_d, s_max, bins, n_bins, weights):
    """M[b, I, n] = sum over demands d in bin b of w(d) f(d) [n == next(I, d)].

    next(I, d) = min(max(max(I - d, 0), s(d)), s_max) is the post-order level
    when the agent orders up to s(d) after seeing demand d.
    """
    n_inv = s_max + 1
    d = np.arange(pmf.shape[0])
    inv = np.arange(n_inv)[:, None]
    post = np.maximum(inv - d[None, :], 0)
    nxt = np.minimum(np.maximum(post, targets_by_d[None, :]), s_max)
    w = np.broadcast_to(weights * pmf, post.shape)
    b = np.broadcast_to(bins[None, :], post.shape)
    i = np.broadcast_to(inv, post.shape)
    out = np.zeros((n_bins, n_inv, n_inv))
    np.add.at(out, (b.ravel(), i.ravel(), nxt.ravel()), w.ravel())
    return out


@njit
def inventory_kernel_numba(pmf, targets_by_d, s_max, bins, n_bins, weights):
    n_inv = s_max + 1
    out = np.zeros((n_bins, n_inv, n_inv))
    for d in range(pmf.shape[0]):
        w = weights[d] * pmf[d]
        if w == 0.0:
            continue
        b = bins[d]
        s = targets_by_d[d]
        for i in range(n_inv):
            post = i - d if i > d else 0
            n = post if post > s else s
            if n > s_max:
                n = s_max
            out[b, i, n] += w
    return out


# -- sawtooth lower bound (cost minimisation) ---------------------------------

def sawtooth_numpy(points, values, corner, queries, chunk=256):
    """Lower bound max(<c,b>, max_k <c,b> + phi_k (v_k - <c,p_k>)) per query b.

    ``corner`` holds lower-bound values of the point-mass beliefs; ``points`` /
    ``values`` are interior beliefs with lower-bound values. Valid whenever the
    bounded function is concave, as an optimal expected cost is.
    """
    base = queries @ corner
    if points.shape[0] == 0:
        return base
    lift = values - points @ corner
    out = base.copy()
    safe = np.where(points > 0, points, 1.0)
    for lo in range(0, queries.shape[0], chunk):
        q = queries[lo:lo + chunk]
        ratio = np.where(points[None, :, :] > 0, q[:, None, :] / safe[None, :, :], np.inf)
        phi = ratio.min(axis=2)
        cand = base[lo:lo + chunk, None] + phi * lift[None, :]
        out[lo:lo + chunk] = np.maximum(out[lo:lo + chunk], cand.max(axis=1))
    return out


@njit
def sawtooth_numba(points, values, corner, queries):
    n_q, n_s = queries.shape
    n_p = points.shape[0]
    lift = values - points @ corner
    out = np.empty(n_q)
    for q in range(n_q):
        base = 0.0
        for s in range(n_s):
            base += queries[q, s] * corner[s]
        best = base
        for k in range(n_p):
            if lift[k] <= 0.0:
                continue
            phi = np.inf
            for s in range(n_s):
                p = points[k, s]
                if p > 0.0:
                    r = queries[q, s] / p
                    if r < phi:
                        phi = r
                        if phi == 0.0:
                            break
            v = base + phi * lift[k]
            if v > best:
                best = v
        out[q] = best
    return out


# -- best continuation alpha per observation --------------------------------

def obs_min_values_numpy(alphas, inv_idx, weights, chunk=2048):
    """For each outcome k: min over alphas m of sum_x alphas[m, x, inv_idx[k]] * weights[x, k].

    Returns (values, argmin). Ties resolve to the lowest alpha index.
    """
    n_k = inv_idx.shape[0]
    vals = np.empty(n_k)
    arg = np.empty(n_k, dtype=np.int64)
    for lo in range(0, n_k, chunk):
        sl = slice(lo, lo + chunk)
        v = np.einsum("mxk,xk->mk", alphas[:, :, inv_idx[sl]], weights[:, sl])
        a = np.argmin(v, axis=0)
        arg[sl] = a
        vals[sl] = v[a, np.arange(v.shape[1])]
    return vals, arg


@njit
def obs_min_values_numba(alphas, inv_idx, weights):
    n_m, n_x, _ = alphas.shape
    n_k = inv_idx.shape[0]
    vals = np.empty(n_k)
    arg = np.empty(n_k, dtype=np.int64)
    for k in range(n_k):
        j = inv_idx[k]
        best = np.inf
        besti = 0
        for m in range(n_m):
            v = 0.0
            for x in range(n_x):
                v += alphas[m, x, j] * weights[x, k]
            if v < best:
                best = v
                besti = m
        vals[k] = best
        arg[k] = besti
    return vals, arg


# -- nearest lattice point on the scaled simplex ------------------------------

def lattice_round_numpy(beliefs, resolution):
    """Nearest (L1 and L-inf) point of {g / r : g integer, sum g = r} per row."""
    scaled = beliefs * resolution
    base = np.floor(scaled + 1e-12).astype(np.int64)
    missing = resolution - base.sum(axis=1)
    frac = scaled - base
    order = np.argsort(-frac, axis=1, kind="stable")
    rank = np.empty_like(order)
    rows = np.arange(beliefs.shape[0])[:, None]
    rank[rows, order] = np.arange(beliefs.shape[1])[None, :]
    up = rank < missing[:, None]
    down = rank >= beliefs.shape[1] + missing[:, None]
    return base + up.astype(np.int64) - down.astype(np.int64)


@njit
def lattice_round_numba(beliefs, resolution):
    n, m = beliefs.shape
    out = np.empty((n, m), dtype=np.int64)
    for q in range(n):
        frac = np.empty(m)
        total = 0
        for s in range(m):
            v = beliefs[q, s] * resolution
            f = np.floor(v + 1e-12)
            out[q, s] = np.int64(f)
            frac[s] = v - f
            total += out[q, s]
        missing = resolution - total
        order = np.argsort(-frac, kind="mergesort")
        if missing > 0:
            for j in range(missing):
                out[q, order[j]] += 1
        elif missing < 0:
            for j in range(-missing):
                out[q, order[m - 1 - j]] -= 1
    return out


if USE_NUMBA:
    inventory_kernel = inventory_kernel_numba
    sawtooth = sawtooth_numba
    lattice_round = lattice_round_numba
    obs_min_values = obs_min_values_numba
else:
    inventory_kernel = inventory_kernel_numpy
    sawtooth = sawtooth_numpy
    lattice_round = lattice_round_numpy
    obs_min_values = obs_min_values_numpy
