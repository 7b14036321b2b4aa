"""Compiled inner loops for the displaced-frame master equation."""

import numba
import numpy as np


@numba.njit(cache=True)
def frame_rhs(r, op_t, c0, c_lower, c_raise, beta_u, kappa, sq, out):
    """Fill ``out`` with d rho/dt for rho = r of shape (F, L, F, L).

    H r = op_t (x) [c0 + c_lower a + c_raise a^dag] r + (beta_u a^dag + conj(beta_u) a) r,
    d rho = -i (H r - (H r)^dag) + kappa (a r a^dag - {a^dag a, r}/2).
    """
    F, L = r.shape[0], r.shape[1]
    y = np.dot(op_t, r.reshape(F, L * F * L)).reshape(F, L, F, L)
    h = np.empty_like(r)
    cb = np.conj(beta_u)
    for i in range(F):
        for a in range(L):
            for j in range(F):
                for b in range(L):
                    v = c0 * y[i, a, j, b]
                    if a + 1 < L:
                        v += sq[a] * (c_lower * y[i, a + 1, j, b] + cb * r[i, a + 1, j, b])
                    if a > 0:
                        v += sq[a - 1] * (c_raise * y[i, a - 1, j, b] + beta_u * r[i, a - 1, j, b])
                    h[i, a, j, b] = v
    for i in range(F):
        for a in range(L):
            for j in range(F):
                for b in range(L):
                    v = -1j * (h[i, a, j, b] - np.conj(h[j, b, i, a]))
                    if kappa != 0.0:
                        if a + 1 < L and b + 1 < L:
                            v += kappa * sq[a] * sq[b] * r[i, a + 1, j, b + 1]
                        v -= 0.5 * kappa * (a + b) * r[i, a, j, b]
                    out[i, a, j, b] = v
