"""Fixed-order float32 products.

Every output element is accumulated term by term in ascending order of the
reduced index, each term rounded after the multiply and again after the add.
The numba loops and the numpy fallbacks produce identical bits; set
``PSFG_NO_NUMBA=1`` to force the fallbacks.
"""

import os

import numpy as np


def matmul_np(x, w):
    out = np.zeros((x.shape[0], w.shape[1]), dtype=np.float32)
    for k in range(w.shape[0]):
        out += x[:, k:k + 1] * w[k]
    return out


def matmul_t_np(g, w):
    out = np.zeros((g.shape[0], w.shape[0]), dtype=np.float32)
    for j in range(w.shape[1]):
        out += g[:, j:j + 1] * w[:, j]
    return out


def weight_grad_np(x, g):
    dw = np.zeros((x.shape[1], g.shape[1]), dtype=np.float32)
    db = np.zeros(g.shape[1], dtype=np.float32)
    for b in range(x.shape[0]):
        dw += np.outer(x[b], g[b])
        db += g[b]
    return dw, db


def _build_numba():
    from numba import njit

    @njit(cache=True)
    def matmul(x, w):
        n, m = x.shape
        p = w.shape[1]
        out = np.zeros((n, p), dtype=np.float32)
        for b in range(n):
            for k in range(m):
                xv = x[b, k]
                for j in range(p):
                    out[b, j] += xv * w[k, j]
        return out

    @njit(cache=True)
    def matmul_t(g, w):
        n, p = g.shape
        m = w.shape[0]
        out = np.zeros((n, m), dtype=np.float32)
        for b in range(n):
            for j in range(p):
                gv = g[b, j]
                for i in range(m):
                    out[b, i] += gv * w[i, j]
        return out

    @njit(cache=True)
    def weight_grad(x, g):
        n, m = x.shape
        p = g.shape[1]
        dw = np.zeros((m, p), dtype=np.float32)
        db = np.zeros(p, dtype=np.float32)
        for b in range(n):
            for k in range(m):
                xv = x[b, k]
                for j in range(p):
                    dw[k, j] += xv * g[b, j]
            for j in range(p):
                db[j] += g[b, j]
        return dw, db

    return matmul, matmul_t, weight_grad


BACKEND = "numpy"
matmul, matmul_t, weight_grad = matmul_np, matmul_t_np, weight_grad_np
if not os.environ.get("PSFG_NO_NUMBA"):
    try:
        _nb = _build_numba()
    except ImportError:  # pragma: no cover - numba is optional
        pass
    else:
        BACKEND = "numba"

        def matmul(x, w):
            return _nb[0](np.ascontiguousarray(x, np.float32), np.ascontiguousarray(w, np.float32))

        def matmul_t(g, w):
            return _nb[1](np.ascontiguousarray(g, np.float32), np.ascontiguousarray(w, np.float32))

        def weight_grad(x, g):
            return _nb[2](np.ascontiguousarray(x, np.float32), np.ascontiguousarray(g, np.float32))
