"""The numba kernels and their numpy counterparts must agree."""

import numpy as np
import pytest

from pairopt import _kernels as K
from pairopt.pairing import random_pairing

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not installed")


@pytest.mark.parametrize("relu", [True, False])
def test_dense_forward(rng, relu):
    X, W, b = rng.normal(size=(7, 3)), rng.normal(size=(3, 5)), rng.normal(size=5)
    for a, c in zip(K.np_dense_forward(X, W, b, relu), K.nb_dense_forward(X, W, b, relu)):
        np.testing.assert_allclose(a, c, rtol=0, atol=1e-13)


@pytest.mark.parametrize("relu", [True, False])
def test_dense_backward(rng, relu):
    X, W, b = rng.normal(size=(7, 3)), rng.normal(size=(3, 5)), rng.normal(size=5)
    Z, _ = K.np_dense_forward(X, W, b, relu)
    dY = rng.normal(size=(7, 5))
    grads = []
    for fn in (K.np_dense_backward, K.nb_dense_backward):
        dW, db = np.ones((3, 5)), np.ones(5)
        dX = fn(X, W, Z, dY, relu, dW, db)
        grads.append((dX, dW, db))
    for a, c in zip(*grads):
        np.testing.assert_allclose(a, c, rtol=0, atol=1e-12)


def test_env_step(rng):
    s = rng.normal(size=(8, 5))
    a = rng.integers(0, 2, size=(8, 5))
    opp = random_pairing(8, True, rng).opponents()
    coefs = [rng.normal(size=2) for _ in range(4)]
    np.testing.assert_allclose(K.np_env_step(s, opp, a, *coefs), K.nb_env_step(s, opp, a, *coefs),
                               rtol=0, atol=1e-13)


@pytest.mark.parametrize("m,byes", [(2, False), (2, True), (5, True), (8, False), (8, True)])
def test_match_dp(rng, m, byes):
    v = rng.integers(-3, 4, size=(m, m)).astype(float)
    v = v + v.T
    assert np.array_equal(K.np_match_dp(v, byes), K.nb_match_dp(v, byes))


def test_backend_flag():
    assert K.BACKEND in ("numba", "numpy")
    expected = K.nb_match_dp if K.BACKEND == "numba" else K.np_match_dp
    assert K.match_dp is expected
