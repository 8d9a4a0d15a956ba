# Compiled twins of the kernels in _pykernels.py. Keep the two in lockstep.

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, INFINITY

cnp.import_array()

BACKEND = "cython"


cdef inline double _dot(const double[:, ::1] a, Py_ssize_t i,
                        const double[:, ::1] b, Py_ssize_t j, Py_ssize_t d) noexcept nogil:
    cdef double acc = 0.0
    cdef Py_ssize_t c
    for c in range(d):
        acc += a[i, c] * b[j, c]
    return acc


cdef void _row_stats(const double[:, ::1] q, const double[:, ::1] k, double scale,
                     Py_ssize_t block, double[::1] m, double[::1] l,
                     double[:, ::1] s) noexcept nogil:
    cdef Py_ssize_t n = q.shape[0], d = q.shape[1]
    cdef Py_ssize_t qs, qe, ks, ke, i, j
    cdef double mx, m_new, tot
    for i in range(n):
        m[i] = -INFINITY
        l[i] = 0.0
    qs = 0
    while qs < n:
        qe = min(qs + block, n)
        ks = 0
        while ks < qe:
            ke = min(ks + block, qe)
            for i in range(qs, qe):
                if ks > i:
                    continue
                mx = -INFINITY
                for j in range(ks, min(ke, i + 1)):
                    s[i - qs, j - ks] = _dot(q, i, k, j, d) * scale
                    if s[i - qs, j - ks] > mx:
                        mx = s[i - qs, j - ks]
                m_new = m[i] if m[i] > mx else mx
                tot = 0.0
                for j in range(ks, min(ke, i + 1)):
                    tot += exp(s[i - qs, j - ks] - m_new)
                l[i] = l[i] * exp(m[i] - m_new) + tot
                m[i] = m_new
            ks += block
        qs += block


def row_stats(const double[:, ::1] q, const double[:, ::1] k, double scale, Py_ssize_t block):
    cdef Py_ssize_t n = q.shape[0]
    m = np.empty(n)
    l = np.empty(n)
    cdef double[::1] mv = m
    cdef double[::1] lv = l
    cdef double[:, ::1] sv = np.empty((block, block))
    with nogil:
        _row_stats(q, k, scale, block, mv, lv, sv)
    return m, l


def flash_forward(const double[:, ::1] q, const double[:, ::1] k, const double[:, ::1] v,
                  double scale, Py_ssize_t block):
    cdef Py_ssize_t n = q.shape[0], d = q.shape[1], dv = v.shape[1]
    cdef Py_ssize_t qs, qe, ks, ke, i, j, c
    cdef double mx, m_new, alpha, p
    out = np.zeros((n, dv))
    mbuf = np.empty(block)
    lbuf = np.empty(block)
    sbuf = np.empty((block, block))
    cdef double[:, ::1] o = out
    cdef double[::1] m = mbuf
    cdef double[::1] l = lbuf
    cdef double[:, ::1] s = sbuf
    with nogil:
        qs = 0
        while qs < n:
            qe = min(qs + block, n)
            for i in range(qs, qe):
                m[i - qs] = -INFINITY
                l[i - qs] = 0.0
            ks = 0
            while ks < qe:
                ke = min(ks + block, qe)
                for i in range(qs, qe):
                    if ks > i:
                        continue
                    mx = -INFINITY
                    for j in range(ks, min(ke, i + 1)):
                        s[i - qs, j - ks] = _dot(q, i, k, j, d) * scale
                        if s[i - qs, j - ks] > mx:
                            mx = s[i - qs, j - ks]
                    m_new = m[i - qs] if m[i - qs] > mx else mx
                    alpha = exp(m[i - qs] - m_new)
                    l[i - qs] *= alpha
                    for c in range(dv):
                        o[i, c] *= alpha
                    for j in range(ks, min(ke, i + 1)):
                        p = exp(s[i - qs, j - ks] - m_new)
                        l[i - qs] += p
                        for c in range(dv):
                            o[i, c] += p * v[j, c]
                    m[i - qs] = m_new
                ks += block
            for i in range(qs, qe):
                for c in range(dv):
                    o[i, c] /= l[i - qs]
            qs += block
    return out


def vs_aggregate(const double[:, ::1] q, const double[:, ::1] k, double scale, Py_ssize_t block):
    cdef Py_ssize_t n = q.shape[0], d = q.shape[1]
    cdef Py_ssize_t qs, qe, ks, ke, i, j
    cdef double p
    mbuf = np.empty(n)
    lbuf = np.empty(n)
    sbuf = np.empty((block, block))
    vert_out = np.zeros(n)
    slash_out = np.zeros(n)
    cdef double[::1] m = mbuf
    cdef double[::1] l = lbuf
    cdef double[:, ::1] s = sbuf
    cdef double[::1] vert = vert_out
    cdef double[::1] slash = slash_out
    with nogil:
        _row_stats(q, k, scale, block, m, l, s)
        qs = 0
        while qs < n:
            qe = min(qs + block, n)
            ks = 0
            while ks < qe:
                ke = min(ks + block, qe)
                for i in range(qs, qe):
                    for j in range(ks, min(ke, i + 1)):
                        p = exp(_dot(q, i, k, j, d) * scale - m[i]) / l[i]
                        vert[j] += p
                        slash[i - j] += p
                ks += block
            qs += block
    return vert_out, slash_out


cdef Py_ssize_t _merge_row(const long long[::1] i_v, const long long[::1] i_s,
                           Py_ssize_t row, long long[::1] out) noexcept nogil:
    cdef Py_ssize_t nv = 0, si = 0, a = 0, cnt = 0
    cdef long long cv, cs, col
    while nv < i_v.shape[0] and i_v[nv] <= row:
        nv += 1
    while si < i_s.shape[0] and i_s[si] <= row:
        si += 1
    si -= 1
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
        out[cnt] = col
        cnt += 1
    return cnt


def merge_row(i_v, i_s, Py_ssize_t row):
    cdef long long[::1] av = np.ascontiguousarray(i_v, dtype=np.int64)
    cdef long long[::1] as_ = np.ascontiguousarray(i_s, dtype=np.int64)
    buf = np.empty(av.shape[0] + as_.shape[0], dtype=np.int64)
    cdef Py_ssize_t cnt = _merge_row(av, as_, row, buf)
    return buf[:cnt]


def sparse_forward(const double[:, ::1] q, const double[:, ::1] k, const double[:, ::1] v,
                   i_v, i_s, double scale, Py_ssize_t block):
    cdef Py_ssize_t n = q.shape[0], d = q.shape[1], dv = v.shape[1]
    cdef long long[::1] av = np.ascontiguousarray(i_v, dtype=np.int64)
    cdef long long[::1] as_ = np.ascontiguousarray(i_s, dtype=np.int64)
    colbuf = np.empty(av.shape[0] + as_.shape[0], dtype=np.int64)
    sbuf = np.empty(block)
    out = np.zeros((n, dv))
    cdef long long[::1] cols = colbuf
    cdef double[::1] s = sbuf
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, cnt, c0, c1, t, c
    cdef Py_ssize_t bad = -1
    cdef long long j
    cdef double mrow, lrow, mx, m_new, alpha, p
    with nogil:
        for i in range(n):
            cnt = _merge_row(av, as_, i, cols)
            if cnt == 0:
                bad = i
                break
            mrow = -INFINITY
            lrow = 0.0
            c0 = 0
            while c0 < cnt:
                c1 = min(c0 + block, cnt)
                mx = -INFINITY
                for t in range(c0, c1):
                    s[t - c0] = _dot(q, i, k, cols[t], d) * scale
                    if s[t - c0] > mx:
                        mx = s[t - c0]
                m_new = mrow if mrow > mx else mx
                alpha = exp(mrow - m_new)
                lrow *= alpha
                for c in range(dv):
                    o[i, c] *= alpha
                for t in range(c0, c1):
                    j = cols[t]
                    p = exp(s[t - c0] - m_new)
                    lrow += p
                    for c in range(dv):
                        o[i, c] += p * v[j, c]
                mrow = m_new
                c0 = c1
            for c in range(dv):
                o[i, c] /= lrow
    return out, bad
