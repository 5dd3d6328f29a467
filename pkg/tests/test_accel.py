import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mfquad._accel import HAVE_NUMBA, numba_enabled, use_numba
from mfquad.geometry import make_builtin
from mfquad.kernels import bspline_basis, thin
from mfquad.nodegen import advancing_front

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def both(fn):
    prev = use_numba(True)
    try:
        a = fn()
        use_numba(False)
        b = fn()
    finally:
        use_numba(prev)
    return a, b


@given(st.integers(0, 2**31), st.sampled_from([2, 3]), st.floats(0.01, 0.3))
@settings(max_examples=20)
def test_thin_paths_agree(seed, dim, r):
    pts = np.random.default_rng(seed).random((500, dim))
    a, b = both(lambda: thin(pts, r))
    assert np.array_equal(a, b)


@pytest.mark.parametrize("q", [1, 2, 4, 6])
def test_bspline_paths_agree(q):
    knots = np.concatenate([np.full(q - 1, -1.0), np.linspace(-1, 1, 13), np.ones(q - 1)])
    t = np.random.default_rng(q).uniform(-1, 1, 2000)
    a, b = both(lambda: bspline_basis(knots, q, t))
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@pytest.mark.parametrize("name, h", [("disk-sector", 0.08), ("ellipsoid", 0.2)])
def test_advancing_front_paths_agree(name, h):
    d = make_builtin(name)
    a, b = both(lambda: advancing_front(d, h, 3))
    assert np.array_equal(a.Y, b.Y) and np.array_equal(a.Z, b.Z) and np.array_equal(a.normals, b.normals)


def test_env_flag_disables_numba():
    env = dict(os.environ, MFQUAD_DISABLE_NUMBA="1")
    code = "from mfquad._accel import numba_enabled; print(numba_enabled())"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    assert numba_enabled() == (os.environ.get("MFQUAD_DISABLE_NUMBA", "0") not in ("1", "true", "yes"))
