"""Parity between the compiled kernel extension and the numpy fallback."""

import numpy as np
import pytest

from client_ts import backend
from client_ts import _kernels_py as KP

KC = pytest.importorskip("client_ts._kernels",
                         reason="compiled kernel extension not built")

SHAPES = [(1, 1), (1, 17), (5, 1), (7, 7), (64, 96), (33, 5)]


def arrays(shape, seed=0):
    rng = np.random.default_rng(seed)
    return (rng.normal(scale=3, size=shape),
            rng.normal(size=shape))


@pytest.mark.parametrize("shape", SHAPES)
def test_softmax_parity(shape):
    x, gy = arrays(shape)
    yp = KP.softmax_fwd(x)
    yc = KC.softmax_fwd(x)
    assert np.allclose(yc, yp, rtol=1e-13, atol=1e-15)
    assert np.allclose(KC.softmax_bwd(yp, gy), KP.softmax_bwd(yp, gy),
                       rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("shape", SHAPES)
def test_layernorm_parity(shape):
    x, gy = arrays(shape, seed=1)
    d = shape[1]
    gamma = np.random.default_rng(2).normal(size=d)
    beta = np.random.default_rng(3).normal(size=d)
    yp, mp, rp = KP.layernorm_fwd(x, gamma, beta, 1e-5)
    yc, mc, rc = KC.layernorm_fwd(x, gamma, beta, 1e-5)
    assert np.allclose(yc, yp, rtol=1e-12, atol=1e-13)
    assert np.allclose(mc, mp, rtol=1e-13, atol=1e-15)
    assert np.allclose(rc, rp, rtol=1e-12, atol=1e-15)
    gp = KP.layernorm_bwd(x, gamma, mp, rp, gy)
    gc = KC.layernorm_bwd(x, gamma, mp, rp, gy)
    for a, b in zip(gc, gp):
        assert np.allclose(a, b, rtol=1e-11, atol=1e-12)


@pytest.mark.parametrize("n", [1, 7, 1000])
def test_gelu_relu_parity(n):
    rng = np.random.default_rng(4)
    x = np.ascontiguousarray(rng.normal(scale=2, size=n))
    gy = np.ascontiguousarray(rng.normal(size=n))
    assert np.allclose(KC.gelu_fwd(x), KP.gelu_fwd(x), rtol=1e-13, atol=1e-15)
    assert np.allclose(KC.gelu_bwd(x, gy), KP.gelu_bwd(x, gy),
                       rtol=1e-12, atol=1e-14)
    assert np.array_equal(KC.relu_fwd(x), KP.relu_fwd(x))
    assert np.array_equal(KC.relu_bwd(x, gy), KP.relu_bwd(x, gy))


def test_adam_bitwise_parity():
    rng = np.random.default_rng(5)
    n = 257
    g = np.ascontiguousarray(rng.normal(size=n))
    pc = np.ascontiguousarray(rng.normal(size=n))
    pp = pc.copy()
    mc, vc = np.zeros(n), np.zeros(n)
    mp, vp = np.zeros(n), np.zeros(n)
    for t in range(1, 50):
        KC.adam_update(pc, g, mc, vc, t, 1e-3, 0.9, 0.999, 1e-8)
        KP.adam_update(pp, g, mp, vp, t, 1e-3, 0.9, 0.999, 1e-8)
    assert np.array_equal(pc, pp)
    assert np.array_equal(mc, mp)
    assert np.array_equal(vc, vp)


def test_backend_switching():
    original = backend.backend_name()
    try:
        assert backend.use("python").BACKEND == "python"
        assert backend.backend_name() == "python"
        if "compiled" in backend.available_backends():
            assert backend.use("compiled").BACKEND == "compiled"
        with pytest.raises(ValueError):
            backend.use("cuda")
    finally:
        backend.use(original)


def test_model_forward_parity_across_backends(tiny_config):
    """The full model agrees across backends to float noise."""
    from client_ts import model as M

    if "compiled" not in backend.available_backends():
        pytest.skip("compiled backend unavailable")
    x = np.random.default_rng(6).normal(size=(4, 8, 3))
    original = backend.backend_name()
    try:
        m = M.build_variant(tiny_config, seed=0)
        backend.use("python")
        yp = m.forward(x).numpy()
        backend.use("compiled")
        yc = m.forward(x).numpy()
    finally:
        backend.use(original)
    assert np.allclose(yc, yp, rtol=1e-12, atol=1e-13)
