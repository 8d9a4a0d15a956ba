"""Pure numpy implementations of the streaming kernels.

Same signatures and results (to rounding) as the compiled ``_ckernels`` module.
All kernels are causal and never allocate an n x n buffer.
"""

import numpy as np

BACKEND = "numpy"


def _tile_scores(q, k, scale, qs, qe, ks, ke):
    s = (q[qs:qe] @ k[ks:ke].T) * scale
    if ke - 1 > qs:
        rows = np.arange(qs, qe)[:, None]
        cols = np.arange(ks, ke)[None, :]
        s = np.where(cols <= rows, s, -np.inf)
    return s


def row_stats(q, k, scale, block):
    """Running max and softmax denominator for every causal row."""
    n = q.shape[0]
    m = np.full(n, -np.inf)
    l = np.zeros(n)
    for qs in range(0, n, block):
        qe = min(qs + block, n)
        mi = m[qs:qe]
        li = l[qs:qe]
        for ks in range(0, qe, block):
            ke = min(ks + block, qe)
            s = _tile_scores(q, k, scale, qs, qe, ks, ke)
            m_new = np.maximum(mi, s.max(axis=1))
            li *= np.exp(mi - m_new)
            li += np.exp(s - m_new[:, None]).sum(axis=1)
            mi[:] = m_new
    return m, l


def flash_forward(q, k, v, scale, block):
    n, d = q.shape
    o = np.empty((n, v.shape[1]))
    for qs in range(0, n, block):
        qe = min(qs + block, n)
        m = np.full(qe - qs, -np.inf)
        l = np.zeros(qe - qs)
        acc = np.zeros((qe - qs, v.shape[1]))
        for ks in range(0, qe, block):
            ke = min(ks + block, qe)
            s = _tile_scores(q, k, scale, qs, qe, ks, ke)
            m_new = np.maximum(m, s.max(axis=1))
            alpha = np.exp(m - m_new)
            p = np.exp(s - m_new[:, None])
            l = alpha * l + p.sum(axis=1)
            acc = alpha[:, None] * acc + p @ v[ks:ke]
            m = m_new
        o[qs:qe] = acc / l[:, None]
    return o


def vs_aggregate(q, k, scale, block):
    """Raw column and diagonal mass sums (each totals n) in two streaming passes."""
    n = q.shape[0]
    m, l = row_stats(q, k, scale, block)
    vert = np.zeros(n)
    slash = np.zeros(n)
    for qs in range(0, n, block):
        qe = min(qs + block, n)
        for ks in range(0, qe, block):
            ke = min(ks + block, qe)
            s = _tile_scores(q, k, scale, qs, qe, ks, ke)
            p = np.exp(s - m[qs:qe, None]) / l[qs:qe, None]
            vert[ks:ke] += p.sum(axis=0)
            # diagonal offsets inside one tile span at most 2*block-1 values
            offs = np.arange(qs, qe)[:, None] - np.arange(ks, ke)[None, :]
            valid = offs >= 0
            lo = int(offs[valid].min())
            hist = np.bincount(offs[valid] - lo, weights=p[valid])
            slash[lo : lo + hist.shape[0]] += hist
    return vert, slash


def merge_row(i_v, i_s, row):
    """Sorted union of causal vertical columns and slash columns for one query row."""
    out = []
    nv = 0
    while nv < len(i_v) and i_v[nv] <= row:
        nv += 1
    # slash offsets o <= row map to column row - o; walk offsets descending for ascending columns
    si = 0
    while si < len(i_s) and i_s[si] <= row:
        si += 1
    si -= 1
    a = 0
    while a < nv or si >= 0:
        if si < 0:
            col = i_v[a]
            a += 1
        elif a >= nv:
            col = row - i_s[si]
            si -= 1
        else:
            cv = i_v[a]
            cs = row - i_s[si]
            if cv < cs:
                col = cv
                a += 1
            elif cs < cv:
                col = cs
                si -= 1
            else:
                col = cv
                a += 1
                si -= 1
        out.append(int(col))
    return np.asarray(out, dtype=np.int64)


def sparse_forward(q, k, v, i_v, i_s, scale, block):
    """Vertical-slash sparse attention; returns (output, first uncovered row or -1)."""
    n = q.shape[0]
    o = np.zeros((n, v.shape[1]))
    i_v = list(np.asarray(i_v, dtype=np.int64))
    i_s = list(np.asarray(i_s, dtype=np.int64))
    for i in range(n):
        cols = merge_row(i_v, i_s, i)
        if cols.shape[0] == 0:
            return o, i
        m = -np.inf
        l = 0.0
        acc = np.zeros(v.shape[1])
        for c0 in range(0, cols.shape[0], block):
            chunk = cols[c0 : c0 + block]
            s = (k[chunk] @ q[i]) * scale
            m_new = max(m, float(s.max()))
            alpha = np.exp(m - m_new)
            p = np.exp(s - m_new)
            l = alpha * l + p.sum()
            acc = alpha * acc + p @ v[chunk]
            m = m_new
        o[i] = acc / l
    return o, -1
