# cython: language_level=3, boundscheck=False, wraparound=False
# cython: initializedcheck=False, cdivision=True
"""Compiled kernels for the cell-update hot path.

Same signatures and same math as the pure-numpy backend. The dense layers
go through BLAS directly; the perception convolutions and the gather /
scatter around the fired-cell compaction are plain C loops. Works on
float32 and float64 grids (every floating argument of a call must share
one dtype).
"""

import numpy as np

cimport numpy as cnp
from cython cimport floating
from scipy.linalg.cython_blas cimport dgemm, sgemm

cnp.import_array()

NAME = "native"


cdef inline Py_ssize_t _clamp(Py_ssize_t v, Py_ssize_t hi) noexcept nogil:
    if v < 0:
        return 0
    if v > hi:
        return hi
    return v


cdef void _rm_gemm(char ta, char tb, int m, int n, int k,
                   floating alpha, floating* a, int lda,
                   floating* b, int ldb,
                   floating beta, floating* c, int ldc) noexcept nogil:
    # Row-major C(m,n) = alpha * op(A) @ op(B) + beta * C, computed by the
    # column-major BLAS with the operands swapped and the flags unchanged.
    # lda/ldb/ldc are the row lengths (column counts) of the stored arrays.
    if floating is double:
        dgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)
    else:
        sgemm(&tb, &ta, &n, &m, &k, &alpha, b, &ldb, a, &lda, &beta, c, &ldc)


cdef void _conv_into(floating[:, :, ::1] state, floating[:, :, ::1] kernel,
                     floating[:, :, ::1] out) noexcept nogil:
    cdef Py_ssize_t h = state.shape[0], w = state.shape[1], d = state.shape[2]
    cdef Py_ssize_t i, j, c, u, v, ii, jj
    for i in range(h):
        for j in range(w):
            for c in range(d):
                out[i, j, c] = 0
    for u in range(3):
        for v in range(3):
            for i in range(h):
                ii = _clamp(i + u - 1, h - 1)
                for j in range(w):
                    jj = _clamp(j + v - 1, w - 1)
                    for c in range(d):
                        out[i, j, c] += kernel[u, v, c] * state[ii, jj, c]


def depthwise3x3(floating[:, :, ::1] state, floating[:, :, ::1] kernel,
                 out=None):
    """Per-channel 3x3 correlation with replicate (edge-clamp) padding.

    Unlike the numpy backend this requires ``out``, when given, to be
    C-contiguous.
    """
    if out is None:
        out = np.empty((state.shape[0], state.shape[1], state.shape[2]),
                       dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, :, ::1] o = out
    with nogil:
        _conv_into(state, kernel, o)
    return out


def depthwise3x3_adjoint(floating[:, :, ::1] g_out, floating[:, :, ::1] kernel):
    """Gradient of depthwise3x3 with respect to its input state."""
    cdef Py_ssize_t h = g_out.shape[0], w = g_out.shape[1], d = g_out.shape[2]
    gs_np = np.zeros((h, w, d),
                     dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, :, ::1] gs = gs_np
    cdef Py_ssize_t i, j, c, u, v, ii, jj
    with nogil:
        for u in range(3):
            for v in range(3):
                for i in range(h):
                    ii = _clamp(i + u - 1, h - 1)
                    for j in range(w):
                        jj = _clamp(j + v - 1, w - 1)
                        for c in range(d):
                            gs[ii, jj, c] += kernel[u, v, c] * g_out[i, j, c]
    return gs_np


def depthwise3x3_kernel_grad(floating[:, :, ::1] state, floating[:, :, ::1] g_out,
                             gk):
    """Accumulate the kernel gradient of depthwise3x3 into gk (3, 3, d)."""
    cdef Py_ssize_t h = state.shape[0], w = state.shape[1], d = state.shape[2]
    cdef floating[:, :, ::1] gkv = gk
    cdef Py_ssize_t i, j, c, u, v, ii, jj
    with nogil:
        for u in range(3):
            for v in range(3):
                for i in range(h):
                    ii = _clamp(i + u - 1, h - 1)
                    for j in range(w):
                        jj = _clamp(j + v - 1, w - 1)
                        for c in range(d):
                            gkv[u, v, c] += state[ii, jj, c] * g_out[i, j, c]
    return gk


def perceive(floating[:, :, ::1] state, floating[:, :, ::1] ka,
             floating[:, :, ::1] kb, out=None):
    """Perception field: [identity | conv_a | conv_b], shape (h, w, 3d)."""
    cdef Py_ssize_t h = state.shape[0], w = state.shape[1], d = state.shape[2]
    if out is None:
        out = np.empty((h, w, 3 * d),
                       dtype=np.float64 if floating is double else np.float32)
    cdef floating[:, :, ::1] o = out
    cdef Py_ssize_t i, j, c, u, v, ii, jj
    with nogil:
        for i in range(h):
            for j in range(w):
                for c in range(d):
                    o[i, j, c] = state[i, j, c]
                    o[i, j, d + c] = 0
                    o[i, j, 2 * d + c] = 0
        for u in range(3):
            for v in range(3):
                for i in range(h):
                    ii = _clamp(i + u - 1, h - 1)
                    for j in range(w):
                        jj = _clamp(j + v - 1, w - 1)
                        for c in range(d):
                            o[i, j, d + c] += ka[u, v, c] * state[ii, jj, c]
                            o[i, j, 2 * d + c] += kb[u, v, c] * state[ii, jj, c]
    return out


cdef int _fired_indices(const unsigned char[:, ::1] mask, int[::1] idx) noexcept nogil:
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    cdef Py_ssize_t i, j
    cdef int r = 0
    for i in range(h):
        for j in range(w):
            if mask[i, j]:
                idx[r] = <int> (i * w + j)
                r += 1
    return r


cdef void _gather_perception(floating[:, :, ::1] state,
                             floating[:, :, ::1] ka, floating[:, :, ::1] kb,
                             int[::1] idx, int nf,
                             floating[:, ::1] zf) noexcept nogil:
    cdef Py_ssize_t h = state.shape[0], w = state.shape[1], d = state.shape[2]
    cdef Py_ssize_t r, p, i, j, c, u, v, ii, jj
    cdef floating sv
    for r in range(nf):
        p = idx[r]
        i = p // w
        j = p - i * w
        for c in range(d):
            zf[r, c] = state[i, j, c]
            zf[r, d + c] = 0
            zf[r, 2 * d + c] = 0
        for u in range(3):
            ii = _clamp(i + u - 1, h - 1)
            for v in range(3):
                jj = _clamp(j + v - 1, w - 1)
                for c in range(d):
                    sv = state[ii, jj, c]
                    zf[r, d + c] += ka[u, v, c] * sv
                    zf[r, 2 * d + c] += kb[u, v, c] * sv


def step_forward(floating[:, :, ::1] state,
                 floating[:, :, ::1] ka, floating[:, :, ::1] kb,
                 floating[:, ::1] w1, floating[::1] b1,
                 floating[:, ::1] w2, floating[::1] b2,
                 const unsigned char[:, ::1] mask, double delta_scale):
    """One residual update: state + delta_scale * MLP(perceive(state)), gated by mask.

    The MLP runs only over the fired cells (gather to a compact batch,
    two GEMMs, scatter back); cells with mask 0 keep their exact values.
    """
    cdef Py_ssize_t h = state.shape[0], w = state.shape[1], d = state.shape[2]
    cdef Py_ssize_t hidden = w1.shape[1]
    dtype = np.float64 if floating is double else np.float32
    out_np = np.asarray(state).copy()

    idx_np = np.empty(h * w, dtype=np.intc)
    cdef int[::1] idx = idx_np
    cdef int nf = _fired_indices(mask, idx)
    if nf == 0:
        return out_np

    zf_np = np.empty((nf, 3 * d), dtype=dtype)
    h1_np = np.empty((nf, hidden), dtype=dtype)
    dl_np = np.empty((nf, d), dtype=dtype)
    cdef floating[:, ::1] zf = zf_np
    cdef floating[:, ::1] h1 = h1_np
    cdef floating[:, ::1] dl = dl_np
    cdef floating[:, :, ::1] o = out_np
    cdef floating scale = <floating> delta_scale
    cdef floating av
    cdef Py_ssize_t r, p, i, j, c
    with nogil:
        _gather_perception(state, ka, kb, idx, nf, zf)
        _rm_gemm(c'n', c'n', nf, <int> hidden, <int> (3 * d),
                 <floating> 1.0, &zf[0, 0], <int> (3 * d),
                 &w1[0, 0], <int> hidden,
                 <floating> 0.0, &h1[0, 0], <int> hidden)
        for r in range(nf):
            for c in range(hidden):
                av = h1[r, c] + b1[c]
                h1[r, c] = av if av > 0 else 0
        _rm_gemm(c'n', c'n', nf, <int> d, <int> hidden,
                 <floating> 1.0, &h1[0, 0], <int> hidden,
                 &w2[0, 0], <int> d,
                 <floating> 0.0, &dl[0, 0], <int> d)
        for r in range(nf):
            p = idx[r]
            i = p // w
            j = p - i * w
            for c in range(d):
                o[i, j, c] += scale * (dl[r, c] + b2[c])
    return out_np


def step_backward(floating[:, :, ::1] state,
                  floating[:, :, ::1] ka, floating[:, :, ::1] kb,
                  floating[:, ::1] w1, floating[::1] b1,
                  floating[:, ::1] w2, floating[::1] b2,
                  const unsigned char[:, ::1] mask, double delta_scale,
                  floating[:, :, ::1] g_out,
                  floating[:, :, ::1] gka, floating[:, :, ::1] gkb,
                  floating[:, ::1] gw1, floating[::1] gb1,
                  floating[:, ::1] gw2, floating[::1] gb2):
    """Reverse-mode step: returns d(loss)/d(state) and accumulates parameter grads.

    Activations are recomputed from ``state`` for the fired cells only; the
    perception adjoint scatters straight back onto the state gradient with
    the same edge clamping as the forward convolution.
    """
    cdef Py_ssize_t h = state.shape[0], w = state.shape[1], d = state.shape[2]
    cdef Py_ssize_t hidden = w1.shape[1]
    dtype = np.float64 if floating is double else np.float32
    gs_np = np.asarray(g_out).copy()

    idx_np = np.empty(h * w, dtype=np.intc)
    cdef int[::1] idx = idx_np
    cdef int nf = _fired_indices(mask, idx)
    if nf == 0:
        return gs_np

    zf_np = np.empty((nf, 3 * d), dtype=dtype)
    h1_np = np.empty((nf, hidden), dtype=dtype)
    gm_np = np.empty((nf, d), dtype=dtype)
    ga1_np = np.empty((nf, hidden), dtype=dtype)
    gzf_np = np.empty((nf, 3 * d), dtype=dtype)
    cdef floating[:, ::1] zf = zf_np
    cdef floating[:, ::1] h1 = h1_np
    cdef floating[:, ::1] gm = gm_np
    cdef floating[:, ::1] ga1 = ga1_np
    cdef floating[:, ::1] gzf = gzf_np
    cdef floating[:, :, ::1] gs = gs_np
    cdef floating[:, :, ::1] gkav = gka
    cdef floating[:, :, ::1] gkbv = gkb
    cdef floating scale = <floating> delta_scale
    cdef floating av, ga, gb
    cdef Py_ssize_t r, p, i, j, c, u, v, ii, jj
    with nogil:
        _gather_perception(state, ka, kb, idx, nf, zf)
        _rm_gemm(c'n', c'n', nf, <int> hidden, <int> (3 * d),
                 <floating> 1.0, &zf[0, 0], <int> (3 * d),
                 &w1[0, 0], <int> hidden,
                 <floating> 0.0, &h1[0, 0], <int> hidden)
        for r in range(nf):
            for c in range(hidden):
                av = h1[r, c] + b1[c]
                h1[r, c] = av if av > 0 else 0
        for r in range(nf):
            p = idx[r]
            i = p // w
            j = p - i * w
            for c in range(d):
                gm[r, c] = scale * g_out[i, j, c]
                gb2[c] += gm[r, c]
        # gw2 += h1^T @ gm
        _rm_gemm(c't', c'n', <int> hidden, <int> d, nf,
                 <floating> 1.0, &h1[0, 0], <int> hidden,
                 &gm[0, 0], <int> d,
                 <floating> 1.0, &gw2[0, 0], <int> d)
        # ga1 = gm @ w2^T, gated by the relu
        _rm_gemm(c'n', c't', nf, <int> hidden, <int> d,
                 <floating> 1.0, &gm[0, 0], <int> d,
                 &w2[0, 0], <int> d,
                 <floating> 0.0, &ga1[0, 0], <int> hidden)
        for r in range(nf):
            for c in range(hidden):
                if h1[r, c] > 0:
                    gb1[c] += ga1[r, c]
                else:
                    ga1[r, c] = 0
        # gw1 += zf^T @ ga1
        _rm_gemm(c't', c'n', <int> (3 * d), <int> hidden, nf,
                 <floating> 1.0, &zf[0, 0], <int> (3 * d),
                 &ga1[0, 0], <int> hidden,
                 <floating> 1.0, &gw1[0, 0], <int> hidden)
        # gzf = ga1 @ w1^T
        _rm_gemm(c'n', c't', nf, <int> (3 * d), <int> hidden,
                 <floating> 1.0, &ga1[0, 0], <int> hidden,
                 &w1[0, 0], <int> hidden,
                 <floating> 0.0, &gzf[0, 0], <int> (3 * d))
        for r in range(nf):
            p = idx[r]
            i = p // w
            j = p - i * w
            for c in range(d):
                gs[i, j, c] += gzf[r, c]
            for u in range(3):
                ii = _clamp(i + u - 1, h - 1)
                for v in range(3):
                    jj = _clamp(j + v - 1, w - 1)
                    for c in range(d):
                        ga = gzf[r, d + c]
                        gb = gzf[r, 2 * d + c]
                        gs[ii, jj, c] += ka[u, v, c] * ga + kb[u, v, c] * gb
                        gkav[u, v, c] += state[ii, jj, c] * ga
                        gkbv[u, v, c] += state[ii, jj, c] * gb
    return gs_np
