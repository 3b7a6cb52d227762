"""Backend parity: the compiled kernels must match the numpy fallback bitwise."""

import numpy as np
import pytest

from roadpoly._kernels import BACKEND, _pure

try:
    from roadpoly._kernels import _native
except ImportError:
    _native = None

needs_native = pytest.mark.skipif(_native is None, reason="compiled kernels not built")


def random_subsegments(rng, n):
    a = rng.uniform(-200, 200, (n, 2))
    b = a + rng.uniform(-2, 2, (n, 2))
    degen = rng.random(n) < 0.05
    b[degen] = a[degen]
    return (
        np.ascontiguousarray(a[:, 0]),
        np.ascontiguousarray(a[:, 1]),
        np.ascontiguousarray(b[:, 0]),
        np.ascontiguousarray(b[:, 1]),
    )


@needs_native
def test_project_many_bitwise_parity():
    rng = np.random.default_rng(77)
    for _ in range(5):
        ax, ay, bx, by = random_subsegments(rng, int(rng.integers(5, 400)))
        qx = np.ascontiguousarray(rng.uniform(-250, 250, 200))
        qy = np.ascontiguousarray(rng.uniform(-250, 250, 200))
        ni, nt, nd = _native.project_many(ax, ay, bx, by, qx, qy)
        pi, pt, pd = _pure.project_many(ax, ay, bx, by, qx, qy)
        assert np.array_equal(ni, pi)
        assert np.array_equal(nt, pt)
        assert np.array_equal(nd, pd)


@needs_native
def test_stamp_band_bitwise_parity():
    rng = np.random.default_rng(78)
    for _ in range(5):
        n = int(rng.integers(2, 60))
        a = rng.uniform(-20, 80, (n, 2))
        b = a + rng.uniform(-30, 30, (n, 2))
        args = (
            np.ascontiguousarray(a[:, 0]),
            np.ascontiguousarray(a[:, 1]),
            np.ascontiguousarray(b[:, 0]),
            np.ascontiguousarray(b[:, 1]),
        )
        img_n = np.zeros((64, 64), dtype=np.uint8)
        img_p = np.zeros((64, 64), dtype=np.uint8)
        _native.stamp_band(img_n, *args, 2.0)
        _pure.stamp_band(img_p, *args, 2.0)
        assert np.array_equal(img_n, img_p)


def test_selected_backend_is_sane():
    assert BACKEND in ("native", "pure")
