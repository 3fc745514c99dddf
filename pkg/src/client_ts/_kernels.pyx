# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: fused softmax / layernorm / GELU / ReLU forward and
backward plus the Adam update. Call surface and numerics mirror
``client_ts._kernels_py`` (transcendentals may differ from numpy's
vectorized ones in the last bits; sums here are sequential, numpy's are
pairwise)."""

import numpy as np

from libc.math cimport exp, pow, sqrt, tanh

BACKEND = "compiled"

cdef double GELU_C = 0.7978845608028654  # sqrt(2/pi)
cdef double GELU_A = 0.044715


def softmax_fwd(double[:, ::1] x):
    cdef Py_ssize_t rows = x.shape[0], width = x.shape[1]
    out = np.empty((rows, width))
    cdef double[:, ::1] y = out
    cdef Py_ssize_t i, j
    cdef double m, s
    for i in range(rows):
        m = x[i, 0]
        for j in range(1, width):
            if x[i, j] > m:
                m = x[i, j]
        s = 0.0
        for j in range(width):
            y[i, j] = exp(x[i, j] - m)
            s += y[i, j]
        for j in range(width):
            y[i, j] /= s
    return out


def softmax_bwd(double[:, ::1] y, double[:, ::1] gy):
    cdef Py_ssize_t rows = y.shape[0], width = y.shape[1]
    out = np.empty((rows, width))
    cdef double[:, ::1] gx = out
    cdef Py_ssize_t i, j
    cdef double dot
    for i in range(rows):
        dot = 0.0
        for j in range(width):
            dot += y[i, j] * gy[i, j]
        for j in range(width):
            gx[i, j] = y[i, j] * (gy[i, j] - dot)
    return out


def layernorm_fwd(double[:, ::1] x, double[::1] gamma, double[::1] beta,
                  double eps):
    cdef Py_ssize_t rows = x.shape[0], width = x.shape[1]
    out = np.empty((rows, width))
    mean_out = np.empty((rows, 1))
    rstd_out = np.empty((rows, 1))
    cdef double[:, ::1] y = out
    cdef double[:, ::1] mean = mean_out
    cdef double[:, ::1] rstd = rstd_out
    cdef Py_ssize_t i, j
    cdef double mu, var, r, d
    for i in range(rows):
        mu = 0.0
        for j in range(width):
            mu += x[i, j]
        mu /= width
        var = 0.0
        for j in range(width):
            d = x[i, j] - mu
            var += d * d
        var /= width
        r = 1.0 / sqrt(var + eps)
        mean[i, 0] = mu
        rstd[i, 0] = r
        for j in range(width):
            y[i, j] = (x[i, j] - mu) * r * gamma[j] + beta[j]
    return out, mean_out, rstd_out


def layernorm_bwd(double[:, ::1] x, double[::1] gamma, double[:, ::1] mean,
                  double[:, ::1] rstd, double[:, ::1] gy):
    cdef Py_ssize_t rows = x.shape[0], width = x.shape[1]
    gx_out = np.empty((rows, width))
    ggamma_out = np.zeros(width)
    gbeta_out = np.zeros(width)
    cdef double[:, ::1] gx = gx_out
    cdef double[::1] ggamma = ggamma_out
    cdef double[::1] gbeta = gbeta_out
    cdef Py_ssize_t i, j
    cdef double mu, r, s1, s2, xh, g
    for i in range(rows):
        mu = mean[i, 0]
        r = rstd[i, 0]
        s1 = 0.0
        s2 = 0.0
        for j in range(width):
            xh = (x[i, j] - mu) * r
            g = gy[i, j] * gamma[j]
            s1 += g
            s2 += g * xh
            ggamma[j] += gy[i, j] * xh
            gbeta[j] += gy[i, j]
        s1 /= width
        s2 /= width
        for j in range(width):
            xh = (x[i, j] - mu) * r
            gx[i, j] = r * (gy[i, j] * gamma[j] - s1 - xh * s2)
    return gx_out, ggamma_out, gbeta_out


def gelu_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] y = out
    cdef Py_ssize_t i
    cdef double u
    for i in range(n):
        u = GELU_C * (x[i] + GELU_A * x[i] * x[i] * x[i])
        y[i] = 0.5 * x[i] * (1.0 + tanh(u))
    return out


def gelu_bwd(double[::1] x, double[::1] gy):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] gx = out
    cdef Py_ssize_t i
    cdef double x2, u, t, du
    for i in range(n):
        x2 = x[i] * x[i]
        u = GELU_C * (x[i] + GELU_A * x[i] * x2)
        t = tanh(u)
        du = GELU_C * (1.0 + 3.0 * GELU_A * x2)
        gx[i] = gy[i] * (0.5 * (1.0 + t) + 0.5 * x[i] * (1.0 - t * t) * du)
    return out


def relu_fwd(double[::1] x):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] y = out
    cdef Py_ssize_t i
    for i in range(n):
        y[i] = x[i] if x[i] > 0.0 else 0.0
    return out


def relu_bwd(double[::1] x, double[::1] gy):
    cdef Py_ssize_t n = x.shape[0]
    out = np.empty(n)
    cdef double[::1] gx = out
    cdef Py_ssize_t i
    for i in range(n):
        gx[i] = gy[i] if x[i] > 0.0 else 0.0
    return out


def adam_update(double[::1] p, double[::1] g, double[::1] m, double[::1] v,
                int t, double lr, double beta1, double beta2, double eps):
    cdef Py_ssize_t n = p.shape[0]
    cdef double c1 = 1.0 - pow(beta1, t)
    cdef double c2 = 1.0 - pow(beta2, t)
    cdef Py_ssize_t i
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * (g[i] * g[i])
        mhat = m[i] / c1
        vhat = v[i] / c2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
