# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels. Must stay behaviourally identical to ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

cdef int[12] _CUMDAYS = [0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334]


cdef inline bint _is_leap(long y):
    return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)


cdef long long _days_from_civil(long y, long m, long d):
    cdef long era, yoe, doy, doe
    if m <= 2:
        y -= 1
    era = (y if y >= 0 else y - 399) // 400
    yoe = y - era * 400
    doy = (153 * (m + (-3 if m > 2 else 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return <long long>era * 146097 + doe - 719468


def days_from_civil(long y, long m, long d):
    return _days_from_civil(y, m, d)


cdef inline int _digits(str s, Py_ssize_t lo, Py_ssize_t hi) except -2:
    cdef int v = 0
    cdef Py_UCS4 c
    cdef Py_ssize_t i
    for i in range(lo, hi):
        c = s[i]
        if c < u'0' or c > u'9':
            return -1
        v = v * 10 + (<int>c - 48)
    return v


def parse_timestamp(str s):
    cdef Py_ssize_t n = len(s)
    cdef Py_ssize_t i, end
    cdef int y, mo, d, hh, mi, ss, mdays
    cdef Py_UCS4 c
    if n < 19 or s[4] != u'-' or s[7] != u'-' or s[13] != u':' or s[16] != u':':
        raise ValueError(f"bad timestamp: {s!r}")
    if s[10] != u' ' and s[10] != u'T':
        raise ValueError(f"bad timestamp: {s!r}")
    if n > 19:
        end = n
        if s[n - 1] == u'Z':
            end = n - 1
        if end > 19:
            if s[19] != u'.' or end == 20:
                raise ValueError(f"bad timestamp: {s!r}")
            for i in range(20, end):
                c = s[i]
                if c < u'0' or c > u'9':
                    raise ValueError(f"bad timestamp: {s!r}")
    y = _digits(s, 0, 4)
    mo = _digits(s, 5, 7)
    d = _digits(s, 8, 10)
    hh = _digits(s, 11, 13)
    mi = _digits(s, 14, 16)
    ss = _digits(s, 17, 19)
    if y < 0 or mo < 0 or d < 0 or hh < 0 or mi < 0 or ss < 0:
        raise ValueError(f"bad timestamp: {s!r}")
    if mo < 1 or mo > 12 or hh > 23 or mi > 59 or ss > 60:
        raise ValueError(f"bad timestamp: {s!r}")
    mdays = (_CUMDAYS[mo] if mo < 12 else 365) - _CUMDAYS[mo - 1]
    if mo == 2 and _is_leap(y):
        mdays += 1
    if d < 1 or d > mdays:
        raise ValueError(f"bad timestamp: {s!r}")
    return _days_from_civil(y, mo, d) * 86400 + hh * 3600 + mi * 60 + ss


def best_split(values, Py_ssize_t start, Py_ssize_t end, Py_ssize_t min_segment):
    cdef cnp.float64_t[::1] x = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = end - start
    cdef Py_ssize_t i, nl, nr, best_idx = -1
    cdef double total = 0.0, mean, left = 0.0, gain, best_gain = 0.0
    if min_segment < 1:
        min_segment = 1
    if n < 2 * min_segment:
        return -1, 0.0
    for i in range(start, end):
        total += x[i]
    mean = total / n
    for i in range(n - min_segment):
        left += x[start + i] - mean
        nl = i + 1
        if nl < min_segment:
            continue
        nr = n - nl
        gain = left * left * n / <double>(nl * nr)
        if best_idx < 0 or gain > best_gain:
            best_gain = gain
            best_idx = start + nl
    return best_idx, best_gain


def rolling_mean(values, Py_ssize_t window):
    cdef cnp.float64_t[::1] x = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t i, j
    cdef double s
    if window < 1:
        raise ValueError("window must be >= 1")
    if n < window:
        return np.empty(0, dtype=np.float64)
    out = np.empty(n - window + 1, dtype=np.float64)
    cdef cnp.float64_t[::1] o = out
    for i in range(n - window + 1):
        s = 0.0
        for j in range(i, i + window):
            s += x[j]
        o[i] = s / window
    return out
