# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled scan kernels.  Contract mirrors ``scan_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, log1p, exp, expm1, fabs

cnp.import_array()

cdef double T_TOL = 1e-10


cdef double _sum(const double[::1] p, Py_ssize_t a, Py_ssize_t b) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(a, b):
        s += p[i]
    return s


cdef double _excess(const double[::1] p, Py_ssize_t a, Py_ssize_t b,
                    double y_sum, double t) noexcept nogil:
    cdef double q = exp(t)
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(a, b):
        s += q * p[i] / (1.0 - p[i] + q * p[i])
    return s - y_sum


cdef double _score_t(const double[::1] p, Py_ssize_t a, Py_ssize_t b,
                     double y_sum, double t) noexcept nogil:
    cdef double e = expm1(t)
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(a, b):
        s += log1p(p[i] * e)
    return y_sum * t - s


cdef void _fit(const double[::1] p, Py_ssize_t a, Py_ssize_t b, double y_sum,
               int direction, double q_cap,
               double* q_out, double* score_out, bint* boundary_out) noexcept nogil:
    cdef Py_ssize_t n = b - a
    cdef double s_max = log(q_cap)
    cdef double slope0, t_end, lo, hi, mid, t, acc
    cdef Py_ssize_t i
    boundary_out[0] = False
    if n == 0:
        q_out[0] = 1.0
        score_out[0] = 0.0
        return
    slope0 = direction * (y_sum - _sum(p, a, b))
    if slope0 <= 0.0:
        q_out[0] = 1.0
        score_out[0] = 0.0
        return
    if direction > 0 and y_sum >= n:
        acc = 0.0
        for i in range(a, b):
            acc -= log(p[i])
        q_out[0] = q_cap
        score_out[0] = acc
        boundary_out[0] = True
        return
    if direction < 0 and y_sum <= 0:
        acc = 0.0
        for i in range(a, b):
            acc -= log1p(-p[i])
        q_out[0] = 1.0 / q_cap
        score_out[0] = acc
        boundary_out[0] = True
        return
    t_end = direction * s_max
    if direction * _excess(p, a, b, y_sum, t_end) <= 0.0:
        q_out[0] = exp(t_end)
        score_out[0] = _score_t(p, a, b, y_sum, t_end)
        return
    lo = 0.0
    hi = s_max
    while hi - lo > T_TOL:
        mid = 0.5 * (lo + hi)
        if direction * _excess(p, a, b, y_sum, direction * mid) < 0.0:
            lo = mid
        else:
            hi = mid
    t = direction * 0.5 * (lo + hi)
    q_out[0] = exp(t)
    score_out[0] = _score_t(p, a, b, y_sum, t)


cdef double _root_from_right(const double[::1] p, Py_ssize_t a, Py_ssize_t b, double y_sum,
                             int direction, double s_max) noexcept nogil:
    # safeguarded Newton on the concave cell contribution, started at s_max
    cdef double lo = 0.0, hi = s_max, s = s_max, t, e, x, h, dh, nxt, s_log, s_frac
    cdef Py_ssize_t i, it
    for it in range(200):
        t = direction * s
        e = expm1(t)
        # one pass for h and its slope: log(1 + p e) and p / (1 + p e)
        s_log = 0.0
        s_frac = 0.0
        for i in range(a, b):
            x = p[i] * e
            s_log += log1p(x)
            s_frac += p[i] / (1.0 + x)
        h = y_sum * t - s_log
        dh = direction * (y_sum - (e + 1.0) * s_frac)
        if h > 0.0:
            lo = s
        else:
            hi = s
        if dh < 0.0:
            nxt = s - h / dh
        else:
            nxt = 0.5 * (lo + hi)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if fabs(nxt - s) <= T_TOL or hi - lo <= T_TOL:
            return nxt
        s = nxt
    return s


def score_at(p, double y_sum, double q):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    return _score_t(pv, 0, pv.shape[0], y_sum, log(q))


def fit_q(p, double y_sum, int direction, double q_cap):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef double q, score
    cdef bint boundary
    _fit(pv, 0, pv.shape[0], y_sum, direction, q_cap, &q, &score, &boundary)
    return q, score, bool(boundary)


def cell_priorities(p, offsets, y_cells, int direction, double q_cap):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const cnp.int64_t[::1] off = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const double[::1] yc = np.ascontiguousarray(y_cells, dtype=np.float64)
    cdef Py_ssize_t k = off.shape[0] - 1
    out_arr = np.full(k, -np.inf)
    cdef double[::1] out = out_arr
    cdef double s_max = log(q_cap)
    cdef double y
    cdef Py_ssize_t c, a, b
    with nogil:
        for c in range(k):
            a = off[c]
            b = off[c + 1]
            y = yc[c]
            if b == a or direction * (y - _sum(pv, a, b)) <= 0.0:
                continue
            if (direction > 0 and y >= b - a) or (direction < 0 and y <= 0):
                out[c] = s_max
                continue
            if _score_t(pv, a, b, y, direction * s_max) >= 0.0:
                out[c] = s_max
                continue
            out[c] = _root_from_right(pv, a, b, y, direction, s_max)
    return out_arr


def prefix_scan(p, ends, y_cum, int direction, double q_cap):
    cdef const double[::1] pv = np.ascontiguousarray(p, dtype=np.float64)
    cdef const cnp.int64_t[::1] ev = np.ascontiguousarray(ends, dtype=np.int64)
    cdef const double[::1] yv = np.ascontiguousarray(y_cum, dtype=np.float64)
    cdef Py_ssize_t k = ev.shape[0]
    qs_arr = np.empty(k)
    sc_arr = np.empty(k)
    bd_arr = np.zeros(k, dtype=np.uint8)
    cdef double[::1] qs = qs_arr
    cdef double[::1] sc = sc_arr
    cdef cnp.uint8_t[::1] bd = bd_arr
    cdef Py_ssize_t j
    cdef bint boundary
    with nogil:
        for j in range(k):
            _fit(pv, 0, ev[j], yv[j], direction, q_cap, &qs[j], &sc[j], &boundary)
            bd[j] = boundary
    return qs_arr, sc_arr, bd_arr.astype(bool)
