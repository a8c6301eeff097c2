"""Compiled per-epoch SGD loops.

Every kernel consumes pre-drawn uniforms so the random stream is owned by
the caller (numpy PCG64) and replays identically in pure Python. Kernels
return the index of the first step whose score was non-finite, or -1.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sigmoid(z):
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


@njit(cache=True)
def _dot(A, a, B, b):
    s = 0.0
    for k in range(A.shape[1]):
        s += A[a, k] * B[b, k]
    return s


@njit(cache=True)
def _pick(u01, n):
    k = int(u01 * n)
    return k if k < n else n - 1


@njit(cache=True)
def nth_excluded(excluded, lo, hi, r):
    """The ``r``-th smallest item id not in ``excluded[lo:hi]`` (sorted)."""
    item = r
    for p in range(lo, hi):
        if excluded[p] <= item:
            item += 1
        else:
            break
    return item


@njit(cache=True)
def map_pair_draws(draws, q_user, ex_ptr, ex_items, n_items):
    """Turn ``(n, 2)`` uniforms into (query index, negative item) pairs.

    Negatives are uniform over the items outside the user's excluded set.
    """
    n = draws.shape[0]
    picks = np.empty(n, dtype=np.int64)
    negs = np.empty(n, dtype=np.int64)
    nq = q_user.shape[0]
    for s in range(n):
        q = _pick(draws[s, 0], nq)
        u = q_user[q]
        lo, hi = ex_ptr[u], ex_ptr[u + 1]
        picks[s] = q
        negs[s] = nth_excluded(ex_items, lo, hi, _pick(draws[s, 1], n_items - (hi - lo)))
    return picks, negs


@njit(cache=True)
def _bpr_update(beta, gU, gI, u, i, j, eta, lam, tmp):
    """One plain BPR-MF step on ``(u, i, j)``; returns False on a non-finite score."""
    K = gU.shape[1]
    xi = beta[i] + _dot(gU, u, gI, i)
    xj = beta[j] + _dot(gU, u, gI, j)
    if not (math.isfinite(xi) and math.isfinite(xj)):
        return False
    delta = _sigmoid(xj - xi)
    for k in range(K):
        tmp[k] = gI[i, k] - gI[j, k]
    for k in range(K):
        gu = gU[u, k]
        gI[i, k] += eta * (delta * gu - lam * gI[i, k])
        gI[j, k] += eta * (delta * -gu - lam * gI[j, k])
        gU[u, k] += eta * (delta * tmp[k] - lam * gU[u, k])
    beta[i] += eta * (delta - lam * beta[i])
    beta[j] += eta * (-delta - lam * beta[j])
    return True


@njit(cache=True)
def pair_epoch(
    beta, gU, gI, tI, tL, W, V, M, N,
    merged, alpha, use_bias, use_seq, use_social,
    q_user, q_item, q_prev, ctx_ptr, ctx_friend, ctx_item, f_count,
    picks, negs, eta, lam,
):
    """SGA over ``ln sigma(x_uil - x_ujl)`` for BPR-MF, FPMC and SPMC.

    With ``merged`` the caller passes ``tL is tI``, ``V is W`` and ``N is M``.
    """
    K = gU.shape[1]
    n_items = gI.shape[0]
    max_f = 0
    for q in range(q_user.shape[0]):
        max_f = max(max_f, ctx_ptr[q + 1] - ctx_ptr[q])
    g_u = np.empty(K)
    g_ti = np.empty(K)
    g_tj = np.empty(K)
    g_tl = np.empty(K)
    g_mi = np.empty(K)
    g_wu = np.empty(K)
    g_v = np.empty((max_f, K))
    sg = np.empty(max_f)
    dm = np.empty(max_f)
    # per-row accumulators for friend-item rows (they may repeat or hit i/j)
    acc = np.empty((n_items, K))
    stamp = np.full(n_items, -1, dtype=np.int64)
    rows = np.empty(max_f + 2, dtype=np.int64)

    for s in range(picks.shape[0]):
        q = picks[s]
        u, i, j = q_user[q], q_item[q], negs[s]
        l = q_prev[q]
        a, b = ctx_ptr[q], ctx_ptr[q + 1]
        nf = b - a
        social = use_social and nf > 0 and f_count[u] > 0
        c = 0.0

        xi = _dot(gU, u, gI, i)
        xj = _dot(gU, u, gI, j)
        if use_seq:
            xi += _dot(tI, i, tL, l)
            xj += _dot(tI, j, tL, l)
        if social:
            c = 2.0 / f_count[u] ** alpha
            si = 0.0
            sj = 0.0
            for f in range(nf):
                v, ip = ctx_friend[a + f], ctx_item[a + f]
                w = _sigmoid(_dot(W, u, V, v))
                mi = _dot(M, i, N, ip)
                mj = _dot(M, j, N, ip)
                sg[f] = w
                dm[f] = mi - mj
                si += w * mi
                sj += w * mj
            xi += c * si
            xj += c * sj
        if use_bias:
            xi += beta[i]
            xj += beta[j]
        if not (math.isfinite(xi) and math.isfinite(xj)):
            return s
        delta = _sigmoid(xj - xi)

        # gradients of x_uil - x_ujl, all from pre-step values
        for k in range(K):
            g_u[k] = gI[i, k] - gI[j, k]
        if use_seq:
            for k in range(K):
                g_ti[k] = tL[l, k]
                g_tj[k] = -tL[l, k]
                g_tl[k] = tI[i, k] - tI[j, k]
        nt = 0
        if social:
            for k in range(K):
                g_mi[k] = 0.0
                g_wu[k] = 0.0
            for f in range(nf):
                v, ip = ctx_friend[a + f], ctx_item[a + f]
                sp = sg[f] * (1.0 - sg[f])
                for k in range(K):
                    g_mi[k] += sg[f] * N[ip, k]
                    g_wu[k] += sp * dm[f] * V[v, k]
                    g_v[f, k] = c * (sp * dm[f] * W[u, k])
            for k in range(K):
                g_mi[k] *= c
                g_wu[k] *= c
            # friend-item rows; in merged mode i and j share the accumulator
            if merged:
                for r, sign in ((i, 1.0), (j, -1.0)):
                    if stamp[r] != s:
                        stamp[r] = s
                        rows[nt] = r
                        nt += 1
                        for k in range(K):
                            acc[r, k] = 0.0
                    for k in range(K):
                        acc[r, k] += sign * g_mi[k]
            for f in range(nf):
                ip = ctx_item[a + f]
                if stamp[ip] != s:
                    stamp[ip] = s
                    rows[nt] = ip
                    nt += 1
                    for k in range(K):
                        acc[ip, k] = 0.0
                for k in range(K):
                    acc[ip, k] += c * (sg[f] * (M[i, k] - M[j, k]))

        # apply
        for k in range(K):
            gu = gU[u, k]
            gI[i, k] += eta * (delta * gu - lam * gI[i, k])
            gI[j, k] += eta * (delta * -gu - lam * gI[j, k])
            gU[u, k] += eta * (delta * g_u[k] - lam * gU[u, k])
        if use_seq:
            for k in range(K):
                tI[i, k] += eta * (delta * g_ti[k] - lam * tI[i, k])
                tI[j, k] += eta * (delta * g_tj[k] - lam * tI[j, k])
                tL[l, k] += eta * (delta * g_tl[k] - lam * tL[l, k])
        if social:
            if not merged:
                for k in range(K):
                    M[i, k] += eta * (delta * g_mi[k] - lam * M[i, k])
                    M[j, k] += eta * (delta * -g_mi[k] - lam * M[j, k])
            for t in range(nt):
                r = rows[t]
                for k in range(K):
                    N[r, k] += eta * (delta * acc[r, k] - lam * N[r, k])
            for k in range(K):
                W[u, k] += eta * (delta * g_wu[k] - lam * W[u, k])
            for f in range(nf):
                v = ctx_friend[a + f]
                for k in range(K):
                    V[v, k] += eta * (delta * g_v[f, k] - lam * V[v, k])
        if use_bias:
            beta[i] += eta * (delta - lam * beta[i])
            beta[j] += eta * (-delta - lam * beta[j])
    return -1


@njit(cache=True)
def sbpr_epoch(
    beta, gU, gI,
    inter_user, inter_item, pos_ptr, pos_items,
    sp_ptr, sp_items, sp_count, ex_ptr, ex_items,
    draws, eta, lam,
):
    """SBPR: ``ln s((x_ui - x_uk) / (1 + s_uk)) + ln s(x_uk - x_uj)``.

    ``draws`` has columns (positive, social item, negative).
    """
    K = gU.shape[1]
    n_items = gI.shape[0]
    tmp = np.empty(K)
    g_u = np.empty(K)
    for s in range(draws.shape[0]):
        q = _pick(draws[s, 0], inter_user.shape[0])
        u, i = inter_user[q], inter_item[q]
        n_sp = sp_ptr[u + 1] - sp_ptr[u]
        n_ex = ex_ptr[u + 1] - ex_ptr[u]
        if n_sp == 0 or n_ex >= n_items:
            lo, hi = pos_ptr[u], pos_ptr[u + 1]
            j = nth_excluded(pos_items, lo, hi, _pick(draws[s, 2], n_items - (hi - lo)))
            if not _bpr_update(beta, gU, gI, u, i, j, eta, lam, tmp):
                return s
            continue
        p = sp_ptr[u] + _pick(draws[s, 1], n_sp)
        kk, scale = sp_items[p], 1.0 / (1.0 + sp_count[p])
        j = nth_excluded(ex_items, ex_ptr[u], ex_ptr[u + 1], _pick(draws[s, 2], n_items - n_ex))
        xi = beta[i] + _dot(gU, u, gI, i)
        xk = beta[kk] + _dot(gU, u, gI, kk)
        xj = beta[j] + _dot(gU, u, gI, j)
        if not (math.isfinite(xi) and math.isfinite(xk) and math.isfinite(xj)):
            return s
        e1 = _sigmoid(-(xi - xk) * scale) * scale
        e2 = _sigmoid(-(xk - xj))
        for k in range(K):
            g_u[k] = e1 * (gI[i, k] - gI[kk, k]) + e2 * (gI[kk, k] - gI[j, k])
        for k in range(K):
            gu = gU[u, k]
            gI[i, k] += eta * (e1 * gu - lam * gI[i, k])
            gI[kk, k] += eta * ((e2 - e1) * gu - lam * gI[kk, k])
            gI[j, k] += eta * (-e2 * gu - lam * gI[j, k])
            gU[u, k] += eta * (g_u[k] - lam * gU[u, k])
        beta[i] += eta * (e1 - lam * beta[i])
        beta[kk] += eta * ((e2 - e1) - lam * beta[kk])
        beta[j] += eta * (-e2 - lam * beta[j])
    return -1


@njit(cache=True)
def gbpr_epoch(
    beta, gU, gI,
    inter_user, inter_item, pos_ptr, pos_items, iu_ptr, iu_users,
    draws, group_size, rho, eta, lam,
):
    """GBPR: ``ln s(x_Gi - x_uj)`` with ``x_Gi = rho * mean_w <g_w, g_i> + (1 - rho) x_ui``.

    ``draws`` columns: positive, negative, then ``group_size - 1`` member draws.
    ``iu_users`` is permuted in place while sampling and restored afterwards.
    """
    K = gU.shape[1]
    n_items = gI.shape[0]
    tmp = np.empty(K)
    g_i = np.empty(K)
    swaps = np.empty(group_size, dtype=np.int64)
    for s in range(draws.shape[0]):
        q = _pick(draws[s, 0], inter_user.shape[0])
        u, i = inter_user[q], inter_item[q]
        lo, hi = pos_ptr[u], pos_ptr[u + 1]
        j = nth_excluded(pos_items, lo, hi, _pick(draws[s, 1], n_items - (hi - lo)))
        if rho == 0.0:
            if not _bpr_update(beta, gU, gI, u, i, j, eta, lam, tmp):
                return s
            continue

        # move u to the end of item i's user list, then partial Fisher-Yates
        a, b = iu_ptr[i], iu_ptr[i + 1]
        pu = a
        while iu_users[pu] != u:
            pu += 1
        last = b - 1
        iu_users[pu], iu_users[last] = iu_users[last], iu_users[pu]
        n_cand = last - a
        m = min(group_size - 1, n_cand)
        for t in range(m):
            r = a + t + _pick(draws[s, 2 + t], n_cand - t)
            swaps[t] = r
            iu_users[a + t], iu_users[r] = iu_users[r], iu_users[a + t]
        gsize = m + 1

        mean = _dot(gU, u, gI, i)
        for t in range(m):
            mean += _dot(gU, iu_users[a + t], gI, i)
        mean /= gsize
        xui = beta[i] + _dot(gU, u, gI, i)
        xgi = rho * mean + (1.0 - rho) * xui
        xuj = beta[j] + _dot(gU, u, gI, j)
        if not (math.isfinite(xgi) and math.isfinite(xuj)):
            return s
        e = _sigmoid(-(xgi - xuj))
        w = rho / gsize

        for k in range(K):
            acc = gU[u, k]
            for t in range(m):
                acc += gU[iu_users[a + t], k]
            g_i[k] = w * acc + (1.0 - rho) * gU[u, k]
            tmp[k] = w * gI[i, k] + (1.0 - rho) * gI[i, k] - gI[j, k]
        for t in range(m):
            x = iu_users[a + t]
            for k in range(K):
                gU[x, k] += eta * (e * (w * gI[i, k]) - lam * gU[x, k])
        for k in range(K):
            gu = gU[u, k]
            gI[i, k] += eta * (e * g_i[k] - lam * gI[i, k])
            gI[j, k] += eta * (e * -gu - lam * gI[j, k])
            gU[u, k] += eta * (e * tmp[k] - lam * gU[u, k])
        beta[i] += eta * (e * (1.0 - rho) - lam * beta[i])
        beta[j] += eta * (-e - lam * beta[j])

        for t in range(m - 1, -1, -1):
            r = swaps[t]
            iu_users[a + t], iu_users[r] = iu_users[r], iu_users[a + t]
        iu_users[pu], iu_users[last] = iu_users[last], iu_users[pu]
    return -1
