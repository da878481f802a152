"""Hot loops, each in a numba flavour and a plain-numpy flavour.

The public name binds to the numba version unless ``TRISIEVE_NO_NUMBA`` is
set. Both flavours stay importable so tests and the benchmark can compare
them directly.
"""

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------- band counts


@njit
def _band_hits_nb(points, x, lo, hi):
    n, d = points.shape
    hits = 0
    for i in range(n):
        s = 0.0
        for j in range(d):
            s += points[i, j] * x[j]
        if lo <= s <= hi:
            hits += 1
    return hits


def _band_hits_np(points, x, lo, hi):
    t = points @ x
    return int(np.count_nonzero((t >= lo) & (t <= hi)))


@njit
def _wedge_hits_nb(points, x, y, lo_x, hi_x, lo_y, hi_y):
    n, d = points.shape
    hits = 0
    for i in range(n):
        s = 0.0
        u = 0.0
        for j in range(d):
            s += points[i, j] * x[j]
            u += points[i, j] * y[j]
        if lo_x <= s <= hi_x and lo_y <= u <= hi_y:
            hits += 1
    return hits


def _wedge_hits_np(points, x, y, lo_x, hi_x, lo_y, hi_y):
    s = points @ x
    u = points @ y
    ok = (s >= lo_x) & (s <= hi_x) & (u >= lo_y) & (u <= hi_y)
    return int(np.count_nonzero(ok))


# ------------------------------------------------------------- RPC list decode
#
# ``vals`` is (b, q): per-block partial inner products sorted ascending,
# ``order`` the matching codebook indices. A prefix of length i is expanded
# only while some completion can still land in [lo, hi]; this uses the
# suffix minima/maxima of the remaining blocks. The last two levels before
# the leaves use exact binary searches instead: in the last block, and in
# the sorted sum-set of the last two blocks.


@njit
def _decode_nb(vals, order, lo, hi, base, cap):
    b, q = vals.shape
    suf_min = np.zeros(b + 1)
    suf_max = np.zeros(b + 1)
    for i in range(b - 1, -1, -1):
        suf_min[i] = suf_min[i + 1] + vals[i, 0]
        suf_max[i] = suf_max[i + 1] + vals[i, q - 1]
    out = np.empty(cap, dtype=np.int64)
    nodes = np.zeros(b, dtype=np.int64)
    n_out = 0
    if suf_max[0] < lo or suf_min[0] > hi:
        return out[:0], nodes, 0
    tail = np.empty(0)
    if b >= 3:
        tail = np.empty(q * q)
        for i in range(q):
            for k in range(q):
                tail[i * q + k] = vals[b - 2, i] + vals[b - 1, k]
        tail.sort()
    pos = np.zeros(b, dtype=np.int64)
    end = np.zeros(b, dtype=np.int64)
    psum = np.zeros(b + 1)
    code = np.zeros(b + 1, dtype=np.int64)
    level = 0
    lo_v = lo - psum[0] - suf_max[1]
    hi_v = hi - psum[0] - suf_min[1]
    pos[0] = np.searchsorted(vals[0], lo_v, side="left")
    end[0] = np.searchsorted(vals[0], hi_v, side="right")
    while level >= 0:
        if pos[level] >= end[level]:
            level -= 1
            if level >= 0:
                pos[level] += 1
            continue
        j = pos[level]
        s = psum[level] + vals[level, j]
        if level == b - 2:
            # exact look-ahead: the last block must hold a completing value
            k0 = np.searchsorted(vals[b - 1], lo - s, side="left")
            k1 = np.searchsorted(vals[b - 1], hi - s, side="right")
            if k1 <= k0:
                pos[level] += 1
                continue
        elif level == b - 3:
            k0 = np.searchsorted(tail, lo - s, side="left")
            k1 = np.searchsorted(tail, hi - s, side="right")
            if k1 <= k0:
                pos[level] += 1
                continue
        nodes[level] += 1
        c = code[level] * q + order[level, j]
        if level == b - 1:
            if n_out < cap:
                out[n_out] = base + c
            n_out += 1
            pos[level] += 1
            continue
        psum[level + 1] = s
        code[level + 1] = c
        level += 1
        lo_v = lo - s - suf_max[level + 1]
        hi_v = hi - s - suf_min[level + 1]
        pos[level] = np.searchsorted(vals[level], lo_v, side="left")
        end[level] = np.searchsorted(vals[level], hi_v, side="right")
    return out[: min(n_out, cap)], nodes, n_out


def _decode_np(vals, order, lo, hi, base, cap):
    b, q = vals.shape
    suf_min = np.zeros(b + 1)
    suf_max = np.zeros(b + 1)
    for i in range(b - 1, -1, -1):
        suf_min[i] = suf_min[i + 1] + vals[i, 0]
        suf_max[i] = suf_max[i + 1] + vals[i, q - 1]
    nodes = np.zeros(b, dtype=np.int64)
    tail = np.sort((vals[b - 2][:, None] + vals[b - 1][None, :]).ravel()) if b >= 3 else None
    sums = np.zeros(1)
    codes = np.zeros(1, dtype=np.int64)
    for level in range(b):
        cand = sums[:, None] + vals[level][None, :]
        keep = (cand >= lo - suf_max[level + 1]) & (cand <= hi - suf_min[level + 1])
        if level == b - 2:
            last = vals[b - 1]
            k0 = np.searchsorted(last, lo - cand, side="left")
            k1 = np.searchsorted(last, hi - cand, side="right")
            keep &= k1 > k0
        elif level == b - 3:
            k0 = np.searchsorted(tail, lo - cand, side="left")
            k1 = np.searchsorted(tail, hi - cand, side="right")
            keep &= k1 > k0
        rows, cols = np.nonzero(keep)
        nodes[level] = rows.size
        sums = cand[rows, cols]
        codes = codes[rows] * q + order[level][cols]
    codes = np.sort(codes) + base
    return codes[:cap], nodes, int(codes.size)


# ------------------------------------------------------------- T_sol scanning


@njit
def _tsol_nb(points, lo1, hi1, lo2, hi2, count_only, cap):
    """All ordered distinct (x, y, z) with <x,y> in [lo1,hi1] and
    <(x-y)/|x-y|, z> in [lo2,hi2]."""
    m, d = points.shape
    gram = points @ points.T
    out = np.empty((cap, 3), dtype=np.int64)
    total = 0
    for a in range(m):
        for b2 in range(m):
            if a == b2:
                continue
            g = gram[a, b2]
            if g < lo1 or g > hi1:
                continue
            nrm2 = 2.0 - 2.0 * g
            inv = 1.0 / np.sqrt(nrm2)
            for c in range(m):
                if c == a or c == b2:
                    continue
                t = (gram[a, c] - gram[b2, c]) * inv
                if lo2 <= t <= hi2:
                    if not count_only and total < cap:
                        out[total, 0] = a
                        out[total, 1] = b2
                        out[total, 2] = c
                    total += 1
    return out[: min(total, cap)], total


def _tsol_np(points, lo1, hi1, lo2, hi2, count_only, cap):
    m = points.shape[0]
    gram = points @ points.T
    xs, ys = np.nonzero((gram >= lo1) & (gram <= hi1))
    keep = xs != ys
    xs, ys = xs[keep], ys[keep]
    chunks = []
    total = 0
    step = max(1, 2_000_000 // max(m, 1))
    for s in range(0, xs.size, step):
        a, b = xs[s : s + step], ys[s : s + step]
        inv = 1.0 / np.sqrt(2.0 - 2.0 * gram[a, b])
        t = (gram[a] - gram[b]) * inv[:, None]
        ok = (t >= lo2) & (t <= hi2)
        ok[np.arange(a.size), a] = False
        ok[np.arange(a.size), b] = False
        r, c = np.nonzero(ok)
        total += r.size
        if not count_only:
            chunks.append(np.stack([a[r], b[r], c], axis=1))
    if count_only or not chunks:
        return np.empty((0, 3), dtype=np.int64), total
    out = np.concatenate(chunks).astype(np.int64)
    return out[:cap], total


if USE_NUMBA:
    band_hits = _band_hits_nb
    wedge_hits = _wedge_hits_nb
    decode_block_search = _decode_nb
    tsol_scan = _tsol_nb
else:
    band_hits = _band_hits_np
    wedge_hits = _wedge_hits_np
    decode_block_search = _decode_np
    tsol_scan = _tsol_np
