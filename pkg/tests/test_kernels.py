import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from invcomm import kernels
from invcomm._accel import NUMBA_AVAILABLE

needs_numba = pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
seeds = st.integers(0, 2**32 - 1)


@needs_numba
@given(seeds, st.integers(0, 12), st.integers(1, 5))
@settings(max_examples=30, deadline=None)
def test_inventory_kernel_twins(seed, s_max, n_bins):
    r = np.random.default_rng(seed)
    n_d = int(r.integers(1, 20))
    pmf = r.dirichlet(np.ones(n_d))
    tg = r.integers(0, s_max + 1, size=n_d).astype(np.int64)
    bins = r.integers(0, n_bins, size=n_d).astype(np.int64)
    w = r.uniform(0, 1, n_d)
    a = kernels.inventory_kernel_numpy(pmf, tg, s_max, bins, n_bins, w)
    b = kernels.inventory_kernel_numba(pmf, tg, s_max, bins, n_bins, w)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    # unit weights: every (I) row sums to 1 across bins and next levels
    ones = kernels.inventory_kernel_numpy(pmf, tg, s_max, bins, n_bins, np.ones(n_d))
    np.testing.assert_allclose(ones.sum(axis=(0, 2)), 1.0)


@needs_numba
@given(seeds, st.integers(2, 30), st.integers(0, 25))
@settings(max_examples=30, deadline=None)
def test_sawtooth_twins(seed, n, m):
    r = np.random.default_rng(seed)
    pts = r.dirichlet(np.ones(n), size=m)
    corner = r.uniform(0, 10, n)
    vals = pts @ corner + r.uniform(-1, 2, m)
    q = r.dirichlet(np.ones(n) * 0.5, size=17)
    a = kernels.sawtooth_numpy(pts, vals, corner, q)
    b = kernels.sawtooth_numba(pts, vals, corner, q)
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_sawtooth_interpolates_its_points():
    r = np.random.default_rng(3)
    pts = r.dirichlet(np.ones(5), size=4)
    corner = np.zeros(5)
    vals = np.array([1.0, 2.0, 0.5, 3.0])
    out = kernels.sawtooth(pts, vals, corner, pts)
    assert (out >= vals - 1e-12).all()
    # corners are reproduced exactly
    np.testing.assert_allclose(kernels.sawtooth(pts, vals, corner + 1.0, np.eye(5)), 1.0)


@needs_numba
@given(seeds, st.integers(1, 6), st.integers(1, 3))
@settings(max_examples=30, deadline=None)
def test_obs_min_values_twins(seed, m, x):
    r = np.random.default_rng(seed)
    A = r.uniform(0, 5, size=(m, x, 9))
    idx = r.integers(0, 9, size=40).astype(np.int64)
    w = r.uniform(0, 1, size=(x, 40))
    v1, a1 = kernels.obs_min_values_numpy(A, idx, w)
    v2, a2 = kernels.obs_min_values_numba(A, idx, w)
    np.testing.assert_allclose(v1, v2, rtol=1e-12)
    np.testing.assert_array_equal(a1, a2)


@needs_numba
@given(seeds, st.integers(1, 12), st.integers(1, 10))
@settings(max_examples=30, deadline=None)
def test_lattice_round_twins(seed, n, res):
    r = np.random.default_rng(seed)
    b = r.dirichlet(np.ones(n), size=10)
    g1 = kernels.lattice_round_numpy(b, res)
    g2 = kernels.lattice_round_numba(b, res)
    np.testing.assert_array_equal(g1, g2)
    assert (g1.sum(axis=1) == res).all() and (g1 >= 0).all()
    assert (np.abs(g1 / res - b).max(axis=1) < 1.0 / res + 1e-12).all()


def test_env_flag_selects_numpy():
    env = dict(os.environ, INVCOMM_NUMBA="0")
    code = ("from invcomm import kernels, _accel;"
            "print(_accel.USE_NUMBA, kernels.sawtooth is kernels.sawtooth_numpy)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["False", "True"]
