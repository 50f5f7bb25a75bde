"""Reference (numpy) implementation of the scan kernels.

Same contract as the compiled ``_scan`` extension.  ``direction`` is +1 for
an over-risked scan (q >= 1) and -1 for an under-risked scan (q <= 1).  All
q searches run in t = log q, so both directions share one code path with
t = direction * s, s in [0, log(q_cap)].
"""
import math

import numpy as np

# bisection stops once the log-q bracket is narrower than this
T_TOL = 1e-10


def _excess(p, y_sum, t):
    """sum q p / (1 - p + q p) - y_sum, increasing in t = log q."""
    q = math.exp(t)
    return float(np.sum(q * p / (1.0 - p + q * p))) - y_sum


def score_at(p, y_sum, q):
    return _score_t(np.asarray(p, dtype=np.float64), y_sum, math.log(q))


def _score_t(p, y_sum, t):
    return y_sum * t - float(np.sum(np.log1p(p * math.expm1(t))))


def fit_q(p, y_sum, direction, q_cap):
    """Maximise the score over q on the directional half-line, q bounded by q_cap.

    Returns ``(q, score, boundary)``; ``boundary`` marks the all-positive
    (over) or all-negative (under) case where the supremum is only reached
    in the limit and ``score`` is that limit.
    """
    p = np.asarray(p, dtype=np.float64)
    n = p.shape[0]
    if n == 0:
        return 1.0, 0.0, False
    s_max = math.log(q_cap)
    # slope of the score in s at s = 0
    slope0 = direction * (y_sum - float(p.sum()))
    if slope0 <= 0.0:
        return 1.0, 0.0, False
    if direction > 0 and y_sum >= n:
        return q_cap, -float(np.sum(np.log(p))), True
    if direction < 0 and y_sum <= 0:
        return 1.0 / q_cap, -float(np.sum(np.log1p(-p))), True
    t_end = direction * s_max
    if direction * _excess(p, y_sum, t_end) <= 0.0:
        return math.exp(t_end), _score_t(p, y_sum, t_end), False
    lo, hi = 0.0, s_max
    while hi - lo > T_TOL:
        mid = 0.5 * (lo + hi)
        if direction * _excess(p, y_sum, direction * mid) < 0.0:
            lo = mid
        else:
            hi = mid
    t = direction * 0.5 * (lo + hi)
    return math.exp(t), _score_t(p, y_sum, t), False


def _root_from_right(p, y_sum, direction, s_max):
    """Positive root of the concave h(s) = d*Y*s - sum log(1 + p(e^{d s} - 1)).

    Requires h(s_max) < 0.  Newton steps started right of the root decrease
    monotonically onto it (the tangent of a concave function lies above it);
    a step leaving the bracket falls back to bisection.
    """
    lo, hi = 0.0, s_max
    s = s_max
    for _ in range(200):
        t = direction * s
        q = math.exp(t)
        h = _score_t(p, y_sum, t)
        dh = direction * (y_sum - float(np.sum(q * p / (1.0 - p + q * p))))
        if h > 0.0:
            lo = s
        else:
            hi = s
        nxt = s - h / dh if dh < 0.0 else 0.5 * (lo + hi)
        if not lo < nxt < hi:
            nxt = 0.5 * (lo + hi)
        if abs(nxt - s) <= T_TOL or hi - lo <= T_TOL:
            return nxt
        s = nxt
    return s


def cell_priorities(p, offsets, y_cells, direction, q_cap):
    """Per-cell width of the region where the cell's score contribution is positive.

    For cell c the contribution h_c(s) = d*Y_c*s - sum log(1 + p(e^{d s} - 1))
    is concave in s and zero at s = 0, so it is positive exactly on (0, r_c).
    Returns r_c (capped at log q_cap), or -inf when the cell is never positive.
    Sorting cells by r_c descending makes every optimal value set a prefix.
    """
    p = np.asarray(p, dtype=np.float64)
    k = len(offsets) - 1
    s_max = math.log(q_cap)
    out = np.full(k, -np.inf)
    for c in range(k):
        seg = p[offsets[c]:offsets[c + 1]]
        n_c = seg.shape[0]
        y_c = float(y_cells[c])
        if n_c == 0 or direction * (y_c - float(seg.sum())) <= 0.0:
            continue
        if (direction > 0 and y_c >= n_c) or (direction < 0 and y_c <= 0):
            out[c] = s_max
            continue
        if _score_t(seg, y_c, direction * s_max) >= 0.0:
            out[c] = s_max
            continue
        out[c] = _root_from_right(seg, y_c, direction, s_max)
    return out


def prefix_scan(p, ends, y_cum, direction, q_cap):
    """Fit q on every prefix ``p[:ends[j]]`` with ``y_cum[j]`` positives."""
    p = np.asarray(p, dtype=np.float64)
    k = len(ends)
    qs = np.empty(k)
    scores = np.empty(k)
    boundary = np.zeros(k, dtype=bool)
    for j in range(k):
        qs[j], scores[j], boundary[j] = fit_q(p[:ends[j]], float(y_cum[j]), direction, q_cap)
    return qs, scores, boundary
