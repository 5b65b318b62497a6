import calendar

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wikishock import _kernels_py, kernels

try:
    from wikishock import _speedups
except ImportError:  # extension not built
    _speedups = None

BACKENDS = [_kernels_py] + ([_speedups] if _speedups is not None else [])
needs_ext = pytest.mark.skipif(_speedups is None, reason="compiled extension not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")


@pytest.mark.parametrize("impl", BACKENDS)
def test_parse_timestamp(impl):
    assert impl.parse_timestamp("2020-03-15 23:30:00.0") == calendar.timegm((2020, 3, 15, 23, 30, 0))
    assert impl.parse_timestamp("1970-01-01 00:00:00.0") == 0
    assert impl.parse_timestamp("2000-02-29 12:00:00") == calendar.timegm((2000, 2, 29, 12, 0, 0))
    assert impl.parse_timestamp("2020-01-01T00:00:00Z") == calendar.timegm((2020, 1, 1, 0, 0, 0))
    for bad in ("2019-02-29 00:00:00.0", "2020/01/01 00:00:00", "2020-01-01 24:00:00.0", "2020-01-01 00:00", "x"):
        with pytest.raises(ValueError):
            impl.parse_timestamp(bad)


@pytest.mark.parametrize("impl", BACKENDS)
def test_best_split_on_step(impl):
    x = np.r_[np.zeros(20), np.full(20, -40.0)]
    idx, gain = impl.best_split(x, 0, 40, 5)
    assert idx == 20
    assert gain == pytest.approx(40.0**2 * 20 * 20 / 40)
    assert impl.best_split(x, 0, 8, 5) == (-1, 0.0)


@needs_ext
@given(st.lists(st.floats(-1e4, 1e4, allow_nan=False), min_size=2, max_size=80), st.integers(1, 10))
def test_backends_agree_on_best_split(xs, min_seg):
    x = np.array(xs)
    assert _speedups.best_split(x, 0, len(x), min_seg) == _kernels_py.best_split(x, 0, len(x), min_seg)


@needs_ext
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), max_size=80), st.integers(1, 12))
def test_backends_agree_on_rolling_mean(xs, w):
    x = np.array(xs, dtype=float)
    a = np.asarray(_speedups.rolling_mean(x, w))
    b = np.asarray(_kernels_py.rolling_mean(x, w))
    assert a.tolist() == b.tolist()


@needs_ext
@given(st.datetimes(min_value=__import__("datetime").datetime(1970, 1, 1)))
def test_backends_agree_on_timestamps(d):
    s = d.strftime("%Y-%m-%d %H:%M:%S") + ".0"
    assert _speedups.parse_timestamp(s) == _kernels_py.parse_timestamp(s) == calendar.timegm(d.timetuple())


def test_pure_fallback_selected_by_env():
    import os
    import subprocess
    import sys

    code = (
        "from wikishock import kernels, mobility; import numpy as np; "
        "x = np.r_[np.zeros(30), np.full(30, -40.0)]; "
        "print(kernels.BACKEND, mobility.binary_segment(x, 4, 7))"
    )
    env = {**os.environ, "WIKISHOCK_PURE": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split(None, 1) == ["python", "[30]\n"]
