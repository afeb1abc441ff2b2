"""Numba kernels shared by the public loss/optimizer functions and the trainer.

All parameters live in one row-stacked matrix ``P``; callers address rows by
global index. Every kernel is ``nogil`` so the asynchronous trainer can run
several of them on the same arrays from plain threads.
"""

import math

import numpy as np
from numba import njit

CLAMP = 30.0


@njit(cache=True, nogil=True)
def sigmoid(x):
    if x > CLAMP:
        x = CLAMP
    elif x < -CLAMP:
        x = -CLAMP
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True, nogil=True)
def log_sigmoid(x):
    if x > CLAMP:
        x = CLAMP
    elif x < -CLAMP:
        x = -CLAMP
    if x >= 0.0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@njit(cache=True, nogil=True)
def draw(cum, u):
    """Index ``i`` with ``cum[i-1] <= u < cum[i]`` (searchsorted, side='right')."""
    lo = 0
    hi = cum.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if cum[mid] <= u:
            lo = mid + 1
        else:
            hi = mid
    if lo >= cum.shape[0]:
        lo = cum.shape[0] - 1
    return lo


@njit(cache=True, nogil=True)
def contains_sorted(keys, key):
    lo = 0
    hi = keys.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    return lo < keys.shape[0] and keys[lo] == key


@njit(cache=True, nogil=True)
def logistic_terms(P, lids, rids, signs, n_terms, gl, gr):
    """Sum of ``-log sigmoid(sign * <P[l], P[r]>)`` over the terms.

    Writes the per-term gradient with respect to the left row into ``gl[t]``
    and with respect to the right row into ``gr[t]``.
    """
    k = P.shape[1]
    loss = 0.0
    for t in range(n_terms):
        a = lids[t]
        b = rids[t]
        s = 0.0
        for d in range(k):
            s += P[a, d] * P[b, d]
        z = signs[t] * s
        loss -= log_sigmoid(z)
        coef = -signs[t] * sigmoid(-z)
        for d in range(k):
            gl[t, d] = coef * P[b, d]
            gr[t, d] = coef * P[a, d]
    return loss


@njit(cache=True, nogil=True)
def accumulate(ids, contrib, n, out_ids, out_grad, m):
    """Add ``contrib[:n]`` into the unique-row buffer; returns the new row count."""
    k = contrib.shape[1]
    for t in range(n):
        row = ids[t]
        j = 0
        while j < m and out_ids[j] != row:
            j += 1
        if j == m:
            out_ids[m] = row
            for d in range(k):
                out_grad[m, d] = 0.0
            m += 1
        for d in range(k):
            out_grad[j, d] += contrib[t, d]
    return m


@njit(cache=True, nogil=True)
def amsgrad_rows(P, M, V, VH, T, rows, grads, m, lr, beta1, beta2, eps, scale, scratch):
    """One AMSGrad step on each of ``rows[:m]`` with gradient ``scale * grads``.

    Step counters are kept per row. A row whose update would produce a
    non-finite value is left untouched; the number of such rows is returned.
    """
    k = P.shape[1]
    skipped = 0
    for r in range(m):
        row = rows[r]
        t = T[row] + 1
        bc1 = 1.0 - beta1 ** t
        bc2 = 1.0 - beta2 ** t
        ok = True
        for d in range(k):
            g = scale * grads[r, d]
            mm = beta1 * M[row, d] + (1.0 - beta1) * g
            vv = beta2 * V[row, d] + (1.0 - beta2) * g * g
            vh = VH[row, d]
            if vv > vh:
                vh = vv
            new = P[row, d] - lr * (mm / bc1) / (math.sqrt(vh / bc2) + eps)
            if not (math.isfinite(new) and math.isfinite(mm) and math.isfinite(vv)):
                ok = False
                break
            scratch[0, d] = new
            scratch[1, d] = mm
            scratch[2, d] = vv
            scratch[3, d] = vh
        if not ok:
            skipped += 1
            continue
        for d in range(k):
            P[row, d] = scratch[0, d]
            M[row, d] = scratch[1, d]
            V[row, d] = scratch[2, d]
            VH[row, d] = scratch[3, d]
        T[row] = t
    return skipped


@njit(cache=True, nogil=True)
def _apply(P, M, V, VH, T, lids, rids, signs, n, gl, gr, uids, ugrad, scratch,
           lr, beta1, beta2, eps, scale):
    loss = logistic_terms(P, lids, rids, signs, n, gl, gr)
    m = accumulate(lids, gl, n, uids, ugrad, 0)
    m = accumulate(rids, gr, n, uids, ugrad, m)
    bad = amsgrad_rows(P, M, V, VH, T, uids, ugrad, m, lr, beta1, beta2, eps, scale, scratch)
    return loss, bad


@njit(cache=True, nogil=True)
def _next_stream(ia, na, ib, nb, iv, nv):
    best = -1
    best_pos = np.inf
    if ia < na:
        best = 0
        best_pos = (ia + 0.5) / na
    if ib < nb:
        pos = (ib + 0.5) / nb
        if pos < best_pos:
            best = 1
            best_pos = pos
    if iv < nv:
        pos = (iv + 0.5) / nv
        if pos < best_pos:
            best = 2
    return best


@njit(cache=True, nogil=True)
def run_epoch(P, M, V, VH, T, hyper, seed,
              tok_a, sid_a, starts_a, lo_a, hi_a, u_a, v_a, cum_a,
              tok_b, sid_b, starts_b, lo_b, hi_b, u_b, v_b, cum_b,
              window, neg_sg,
              pair_l, pair_r, pair_scale, pair_tier, order, lo_v, hi_v,
              excl_keys, n_right, neg_bi, stats):
    """Train over token positions ``[lo, hi)`` of both corpora and pair visits ``order[lo_v:hi_v]``.

    The three streams are interleaved evenly. ``stats`` receives
    ``[loss_a, n_a, loss_b, n_b, loss_tier0, n0, loss_tier1, n1, loss_tier2, n2, skipped_rows]``.
    """
    np.random.seed(seed)
    lr = hyper[0]
    beta1 = hyper[1]
    beta2 = hyper[2]
    eps = hyper[3]
    k = P.shape[1]
    cap = 2 + 2 * max(neg_sg, neg_bi)
    lids = np.empty(cap, np.int64)
    rids = np.empty(cap, np.int64)
    signs = np.empty(cap, np.float64)
    gl = np.empty((cap, k))
    gr = np.empty((cap, k))
    uids = np.empty(2 * cap, np.int64)
    ugrad = np.empty((2 * cap, k))
    scratch = np.empty((4, k))
    chosen = np.empty(max(neg_bi, 1), np.int64)

    na = hi_a - lo_a
    nb = hi_b - lo_b
    nv = hi_v - lo_v
    ia = 0
    ib = 0
    iv = 0
    while True:
        which = _next_stream(ia, na, ib, nb, iv, nv)
        if which < 0:
            break
        if which == 2:
            pi = order[lo_v + iv]
            iv += 1
            a = pair_l[pi]
            b = pair_r[pi]
            lids[0] = u_a + a
            rids[0] = u_b + b
            signs[0] = 1.0
            n = 1
            # left-side corruptions (x, b)
            got = 0
            rejected = 0
            while got < neg_bi and rejected < 100 * neg_bi:
                x = draw(cum_a, np.random.random())
                dup = False
                for j in range(got):
                    if chosen[j] == x:
                        dup = True
                if x == a or dup or contains_sorted(excl_keys, x * n_right + b):
                    rejected += 1
                    continue
                chosen[got] = x
                got += 1
                lids[n] = u_a + x
                rids[n] = u_b + b
                signs[n] = -1.0
                n += 1
            # right-side corruptions (a, y)
            got = 0
            rejected = 0
            while got < neg_bi and rejected < 100 * neg_bi:
                y = draw(cum_b, np.random.random())
                dup = False
                for j in range(got):
                    if chosen[j] == y:
                        dup = True
                if y == b or dup or contains_sorted(excl_keys, a * n_right + y):
                    rejected += 1
                    continue
                chosen[got] = y
                got += 1
                lids[n] = u_a + a
                rids[n] = u_b + y
                signs[n] = -1.0
                n += 1
            loss, bad = _apply(P, M, V, VH, T, lids, rids, signs, n, gl, gr, uids, ugrad,
                               scratch, lr, beta1, beta2, eps, pair_scale[pi])
            tier = pair_tier[pi]
            stats[4 + 2 * tier] += loss
            stats[5 + 2 * tier] += 1.0
            stats[10] += bad
            continue

        if which == 0:
            p = lo_a + ia
            ia += 1
            tok = tok_a
            sid = sid_a
            starts = starts_a
            u_off = u_a
            v_off = v_a
            cum = cum_a
            slot = 0
        else:
            p = lo_b + ib
            ib += 1
            tok = tok_b
            sid = sid_b
            starts = starts_b
            u_off = u_b
            v_off = v_b
            cum = cum_b
            slot = 2
        s = sid[p]
        begin = starts[s]
        end = starts[s + 1]
        reach = 1 + np.random.randint(window) if window > 0 else 0
        q0 = max(begin, p - reach)
        q1 = min(end, p + reach + 1)
        center = u_off + tok[p]
        for q in range(q0, q1):
            if q == p:
                continue
            ctx = tok[q]
            lids[0] = center
            rids[0] = v_off + ctx
            signs[0] = 1.0
            n = 1
            for _ in range(neg_sg):
                w = draw(cum, np.random.random())
                if w == ctx:
                    continue
                lids[n] = center
                rids[n] = v_off + w
                signs[n] = -1.0
                n += 1
            loss, bad = _apply(P, M, V, VH, T, lids, rids, signs, n, gl, gr, uids, ugrad,
                               scratch, lr, beta1, beta2, eps, 1.0)
            stats[slot] += loss
            stats[slot + 1] += 1.0
            stats[10] += bad
