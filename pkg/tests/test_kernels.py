"""Compiled and numpy kernels agree, and both match independent oracles."""
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lgeom import kernels
from lgeom.kernels import BACKENDS

backends = pytest.mark.parametrize("name", sorted(BACKENDS))


def _inputs(rng, K=12, d=3):
    s = np.sort(rng.uniform(0, 3, K + 1))
    s[0] = 0.0
    s = np.unique(s)
    K = len(s) - 1
    X = rng.normal(size=(K + 1, d))
    a = rng.uniform(0.5, 2.0, size=(K, d))
    da = rng.normal(size=(K, d, d)) * 0.1
    R = rng.uniform(0, 1, K)
    dR = rng.normal(size=(K, d)) * 0.1
    return s, X, a, da, R, dR


def _dense_L(s, X, a, R):
    # direct double loop, independent of the vectorized form
    total = 0.0
    for k in range(len(s) - 1):
        h = s[k + 1] - s[k]
        sm = 0.5 * (s[k] + s[k + 1])
        kin = sum(a[k, j] * ((X[k + 1, j] - X[k, j]) / h) ** 2 for j in range(X.shape[1]))
        total += h * (2 * sm * sm * R[k] + 0.5 * kin)
    return total


@backends
def test_lagrangian_value_matches_loop(name, rng):
    s, X, a, da, R, dR = _inputs(rng)
    L, _ = BACKENDS[name].lagrangian(s, X, a, da, R, dR)
    assert L == pytest.approx(_dense_L(s, X, a, R), rel=1e-13)


@backends
def test_lagrangian_gradient_frozen_fields(name, rng):
    """With constant fields the gradient is the derivative of the loop value."""
    s, X, a, _, R, _ = _inputs(rng)
    da = np.zeros(a.shape + (a.shape[1],))
    dR = np.zeros_like(a)
    _, g = BACKENDS[name].lagrangian(s, X, a, da, R, dR)
    eps = 1e-6
    for k in range(len(s)):
        for j in range(X.shape[1]):
            Xp, Xm = X.copy(), X.copy()
            Xp[k, j] += eps
            Xm[k, j] -= eps
            fd = (_dense_L(s, Xp, a, R) - _dense_L(s, Xm, a, R)) / (2 * eps)
            assert g[k, j] == pytest.approx(fd, rel=1e-6, abs=1e-7)


@backends
def test_newton_direction_solves_dense_system(name, rng):
    s, _, a, _, _, _ = _inputs(rng)
    K, d = a.shape
    grad = rng.normal(size=(K + 1, d))
    step = BACKENDS[name].newton_direction(s, a, grad)
    assert np.all(step[0] == 0) and np.all(step[-1] == 0)
    w = a / np.diff(s)[:, None]
    for j in range(d):
        H = np.zeros((K - 1, K - 1))
        for i in range(K - 1):
            H[i, i] = w[i, j] + w[i + 1, j]
            if i + 1 < K - 1:
                H[i, i + 1] = H[i + 1, i] = -w[i + 1, j]
        np.testing.assert_allclose(H @ step[1:-1, j], -grad[1:-1, j], rtol=1e-10, atol=1e-12)


@given(st.integers(2, 40), st.integers(1, 4), st.integers(0, 2**31 - 1))
def test_backends_agree(K, d, seed):
    if len(BACKENDS) < 2:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(seed)
    s, X, a, da, R, dR = _inputs(rng, K, d)
    L1, g1 = BACKENDS["python"].lagrangian(s, X, a, da, R, dR)
    L2, g2 = BACKENDS["cython"].lagrangian(s, X, a, da, R, dR)
    assert L1 == pytest.approx(L2, rel=1e-12, abs=1e-14)
    np.testing.assert_allclose(g1, g2, rtol=1e-11, atol=1e-12)
    n1 = BACKENDS["python"].newton_direction(s, a, g1)
    n2 = BACKENDS["cython"].newton_direction(s, a, g1)
    np.testing.assert_allclose(n1, n2, rtol=1e-9, atol=1e-11)


def test_backend_selected():
    assert kernels.BACKEND in BACKENDS
    assert kernels.lagrangian is BACKENDS[kernels.BACKEND].lagrangian


def test_single_segment_has_no_interior():
    s = np.array([0.0, 1.0])
    a = np.ones((1, 2))
    g = np.ones((2, 2))
    for mod in BACKENDS.values():
        assert np.all(mod.newton_direction(s, a, g) == 0)
