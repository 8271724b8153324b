"""Compiled inner loops for the tree search."""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def depth2_kernel(node_idx, side, want, X, S, skip):
    """Best single-split tree on the points of ``node_idx`` with ``side[i] == want``.

    ``node_idx`` is ``p x m``; row ``q`` lists the node's points sorted by
    feature ``q``. Candidates sit between the ``r``-th and ``r+1``-th distinct
    value of a column whenever ``r % skip == 0``.

    Returns ``(split_value_sum, dim, split, left_action, right_action,
    leaf_value, leaf_action, count)``; ``dim == -1`` when no candidate exists.
    """
    p, m = node_idx.shape
    d = S.shape[1]
    total = np.zeros(d)
    cnt = 0
    for j in range(m):
        i = node_idx[0, j]
        if side[i] == want:
            cnt += 1
            for a in range(d):
                total[a] += S[i, a]
    leaf_val = total[0]
    leaf_a = 0
    for a in range(1, d):
        if total[a] > leaf_val:
            leaf_val = total[a]
            leaf_a = a

    best = -np.inf
    bdim = -1
    bsplit = 0.0
    bl = 0
    br = 0
    left = np.empty(d)
    for q in range(p):
        for a in range(d):
            left[a] = 0.0
        r = skip
        started = False
        prev = 0.0
        for j in range(m):
            i = node_idx[q, j]
            if side[i] != want:
                continue
            x = X[i, q]
            if started and x != prev:
                r -= 1
                if r == 0:
                    r = skip
                    lv = left[0]
                    la = 0
                    rv = total[0] - left[0]
                    ra = 0
                    for a in range(1, d):
                        if left[a] > lv:
                            lv = left[a]
                            la = a
                        t = total[a] - left[a]
                        if t > rv:
                            rv = t
                            ra = a
                    v = lv + rv
                    if v > best:
                        best = v
                        bdim = q
                        mid = prev + (x - prev) * 0.5
                        if mid <= prev:
                            mid = x
                        bsplit = mid
                        bl = la
                        br = ra
            for a in range(d):
                left[a] += S[i, a]
            prev = x
            started = True
    return best, bdim, bsplit, bl, br, leaf_val, leaf_a, cnt


@njit(cache=True, nogil=True)
def _depth2_both(gidx, gX, gS, side, skip, rf, ri):
    """Depth-2 solves for both sides of ``side`` in one pass per dimension.

    ``gidx``/``gX``/``gS`` are the node's indices, feature values and score
    rows gathered per dimension in sorted order. Results go to ``rf[s]`` =
    (value, split) and ``ri[s]`` = (dim, left_action, right_action, count),
    with ``s = 0`` for ``side`` true and ``s = 1`` for false.
    """
    p, m = gidx.shape
    d = gS.shape[2]
    total = np.zeros((2, d))
    cnt = np.zeros(2, dtype=np.int64)
    for j in range(m):
        s = 0 if side[gidx[0, j]] else 1
        cnt[s] += 1
        for a in range(d):
            total[s, a] += gS[0, j, a]

    best = np.full(2, -np.inf)
    for s in range(2):
        ri[s, 0] = -1
        ri[s, 1] = 0
        ri[s, 2] = 0
        ri[s, 3] = cnt[s]
        rf[s, 1] = 0.0
    left = np.zeros((2, d))
    r = np.zeros(2, dtype=np.int64)
    started = np.zeros(2, dtype=np.bool_)
    prev = np.zeros(2)
    for q in range(p):
        for s in range(2):
            r[s] = skip
            started[s] = False
            for a in range(d):
                left[s, a] = 0.0
        for j in range(m):
            s = 0 if side[gidx[q, j]] else 1
            x = gX[q, j]
            if started[s] and x != prev[s]:
                r[s] -= 1
                if r[s] == 0:
                    r[s] = skip
                    lv = left[s, 0]
                    la = 0
                    rv = total[s, 0] - left[s, 0]
                    ra = 0
                    for a in range(1, d):
                        if left[s, a] > lv:
                            lv = left[s, a]
                            la = a
                        t = total[s, a] - left[s, a]
                        if t > rv:
                            rv = t
                            ra = a
                    v = lv + rv
                    if v > best[s]:
                        best[s] = v
                        mid = prev[s] + (x - prev[s]) * 0.5
                        if mid <= prev[s]:
                            mid = x
                        rf[s, 1] = mid
                        ri[s, 0] = q
                        ri[s, 1] = la
                        ri[s, 2] = ra
            for a in range(d):
                left[s, a] += gS[q, j, a]
            prev[s] = x
            started[s] = True

    for s in range(2):
        if cnt[s] == 0:
            rf[s, 0] = 0.0
            ri[s, 1] = 0
        elif ri[s, 0] < 0:
            lv = total[s, 0]
            la = 0
            for a in range(1, d):
                if total[s, a] > lv:
                    lv = total[s, a]
                    la = a
            rf[s, 0] = lv
            ri[s, 1] = la
        else:
            rf[s, 0] = best[s]


@njit(cache=True, nogil=True)
def sweep_depth3(gidx, gX, gS, dim, cuts, skip, n_global, floor, cum_range, prune, slack):
    """Scan the root candidates ``cuts`` on ``dim`` with depth-2 children.

    A candidate is evaluated only if it can beat ``max(floor, best so far)``:
    moving a set ``D`` of points across the cut changes the best subtree
    values by at most ``sum_D (max_a S - min_a S)``, read off the prefix sums
    ``cum_range`` (in ``dim``'s sorted order) relative to the last evaluated
    cut. Skipped candidates can never strictly win, so results match the
    unpruned scan; ``slack`` absorbs floating-point rounding in the bound.

    Returns ``(value, cut_index, rf, ri, evaluated)``; ``cut_index == -1``
    when no candidate beats ``floor``.
    """
    side = np.zeros(n_global, dtype=np.bool_)
    rf = np.zeros((2, 2))
    ri = np.zeros((2, 4), dtype=np.int64)
    best_rf = np.zeros((2, 2))
    best_ri = np.zeros((2, 4), dtype=np.int64)
    best_v = floor
    best_c = -1
    prev = 0
    last_v = np.inf
    last_c = 0
    evaluated = 0
    for ci in range(cuts.shape[0]):
        c = cuts[ci]
        if prune and last_v + (cum_range[c] - cum_range[last_c]) + slack <= best_v:
            continue
        for j in range(prev, c):
            side[gidx[dim, j]] = True
        prev = c
        _depth2_both(gidx, gX, gS, side, skip, rf, ri)
        evaluated += 1
        v = rf[0, 0] + rf[1, 0]
        last_v = v
        last_c = c
        if v > best_v:
            best_v = v
            best_c = ci
            best_rf[:, :] = rf
            best_ri[:, :] = ri
    return best_v, best_c, best_rf, best_ri, evaluated
