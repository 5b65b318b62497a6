"""Pure-Python implementations of the hot kernels.

These mirror ``_speedups.pyx`` function for function and are used when the
compiled extension is unavailable (or ``WIKISHOCK_PURE=1`` is set).
"""

import numpy as np

_CUMDAYS = (0, 31, 59, 90, 120, 151, 181, 212, 243, 273, 304, 334)


def _is_leap(y):
    return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)


def days_from_civil(y, m, d):
    """Days since 1970-01-01 for a proleptic Gregorian date."""
    y -= m <= 2
    era = (y if y >= 0 else y - 399) // 400
    yoe = y - era * 400
    doy = (153 * (m + (-3 if m > 2 else 9)) + 2) // 5 + d - 1
    doe = yoe * 365 + yoe // 4 - yoe // 100 + doy
    return era * 146097 + doe - 719468


def parse_timestamp(s):
    """Parse ``YYYY-MM-DD HH:MM:SS[.f]`` (or ISO ``T``/``Z`` variants) to epoch seconds.

    Raises ValueError on anything else.
    """
    if len(s) < 19 or s[4] != "-" or s[7] != "-" or s[13] != ":" or s[16] != ":":
        raise ValueError(f"bad timestamp: {s!r}")
    if s[10] != " " and s[10] != "T":
        raise ValueError(f"bad timestamp: {s!r}")
    tail = s[19:]
    if tail:
        if tail[-1] == "Z":
            tail = tail[:-1]
        if tail and (tail[0] != "." or not tail[1:].isdigit()):
            raise ValueError(f"bad timestamp: {s!r}")
    parts = (s[0:4], s[5:7], s[8:10], s[11:13], s[14:16], s[17:19])
    for p in parts:
        if not p.isdigit() or not p.isascii():
            raise ValueError(f"bad timestamp: {s!r}")
    y, mo, d, hh, mi, ss = (int(p) for p in parts)
    if not 1 <= mo <= 12 or hh > 23 or mi > 59 or ss > 60:
        raise ValueError(f"bad timestamp: {s!r}")
    mdays = (_CUMDAYS[mo] if mo < 12 else 365) - _CUMDAYS[mo - 1]
    if mo == 2 and _is_leap(y):
        mdays += 1
    if not 1 <= d <= mdays:
        raise ValueError(f"bad timestamp: {s!r}")
    return days_from_civil(y, mo, d) * 86400 + hh * 3600 + mi * 60 + ss


def best_split(values, start, end, min_segment):
    """Best single L2 split of ``values[start:end]``.

    Returns ``(index, gain)`` where ``index`` is the first position of the
    right-hand segment and ``gain`` the reduction in summed squared
    deviations. ``(-1, 0.0)`` when no admissible split exists. Ties go to
    the earliest index.
    """
    n = end - start
    if min_segment < 1:
        min_segment = 1
    if n < 2 * min_segment:
        return -1, 0.0
    seg = np.asarray(values[start:end], dtype=np.float64).tolist()
    total = 0.0
    for v in seg:
        total += v
    mean = total / n
    best_idx = -1
    best_gain = 0.0
    left = 0.0
    for i in range(n - min_segment):
        left += seg[i] - mean
        nl = i + 1
        if nl < min_segment:
            continue
        nr = n - nl
        gain = left * left * n / (nl * nr)
        if best_idx < 0 or gain > best_gain:
            best_gain = gain
            best_idx = start + nl
    return best_idx, best_gain


def rolling_mean(values, window):
    """Trailing means over ``window`` consecutive values; length ``n - window + 1``."""
    x = np.asarray(values, dtype=np.float64)
    n = x.shape[0]
    if window < 1:
        raise ValueError("window must be >= 1")
    if n < window:
        return np.empty(0, dtype=np.float64)
    xs = x.tolist()
    out = []
    for i in range(n - window + 1):
        s = 0.0
        for j in range(i, i + window):
            s += xs[j]
        out.append(s / window)
    return np.array(out, dtype=np.float64)
