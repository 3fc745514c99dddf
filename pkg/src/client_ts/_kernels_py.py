"""Pure-numpy reference kernels.

Same call surface as the compiled extension ``client_ts._kernels``. Every
function takes contiguous float64 arrays; 2-D inputs are (rows, width) with
the reduction axis last. The compiled module must match these numerics to
~1e-14 relative (exp/tanh may round differently between numpy's vectorized
transcendentals and libm).
"""

import numpy as np

BACKEND = "python"

_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def softmax_fwd(x):
    """Row softmax with max-subtraction. x: (rows, width)."""
    m = x.max(axis=1, keepdims=True)
    y = np.exp(x - m)
    y /= y.sum(axis=1, keepdims=True)
    return y


def softmax_bwd(y, gy):
    """Backward of row softmax given its output y."""
    dot = (y * gy).sum(axis=1, keepdims=True)
    return y * (gy - dot)


def layernorm_fwd(x, gamma, beta, eps):
    """Per-row standardization (population variance) then affine.

    Returns (y, mean, rstd); mean/rstd are (rows, 1) and are consumed by
    layernorm_bwd.
    """
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    y = (x - mean) * rstd * gamma + beta
    return y, mean, rstd


def layernorm_bwd(x, gamma, mean, rstd, gy):
    """Backward of layernorm_fwd. Returns (gx, ggamma, gbeta)."""
    xhat = (x - mean) * rstd
    g = gy * gamma
    gbeta = gy.sum(axis=0)
    ggamma = (gy * xhat).sum(axis=0)
    gx = rstd * (g - g.mean(axis=1, keepdims=True)
                 - xhat * (g * xhat).mean(axis=1, keepdims=True))
    return gx, ggamma, gbeta


def gelu_fwd(x):
    """GELU, tanh approximation. Any shape."""
    u = _GELU_C * (x + _GELU_A * x * x * x)
    return 0.5 * x * (1.0 + np.tanh(u))


def gelu_bwd(x, gy):
    x2 = x * x
    u = _GELU_C * (x + _GELU_A * x * x2)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3.0 * _GELU_A * x2)
    return gy * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du)


def relu_fwd(x):
    return np.maximum(x, 0.0)


def relu_bwd(x, gy):
    return np.where(x > 0.0, gy, 0.0)


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One fused Adam step, in place on p/m/v.

    m <- b1*m + (1-b1)*g ; v <- b2*v + (1-b2)*g^2 ;
    p <- p - lr * mhat / (sqrt(vhat) + eps)  with bias-corrected mhat/vhat.
    """
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1 ** t)
    vhat = v / (1.0 - beta2 ** t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)
