"""Pure-numpy kernels for the cell-update hot path.

This is the fallback backend: same signatures and same math as the compiled
extension, with the dense layers going through BLAS via ``@``. Cells whose
fire-mask bit is 0 are skipped in the MLP entirely; their state still feeds
the neighborhood convolutions of cells that do fire.

State layout is (h, w, d) with the channel axis contiguous; the MLP treats
the grid as (h*w, ...) row batches.
"""

import numpy as np

NAME = "python"


def _pad_replicate(state):
    return np.pad(state, ((1, 1), (1, 1), (0, 0)), mode="edge")


def depthwise3x3(state, kernel, out=None):
    """Per-channel 3x3 correlation with replicate (edge-clamp) padding.

    kernel has shape (3, 3, d): one tap set per channel.
    """
    h, w, d = state.shape
    if out is None:
        out = np.zeros((h, w, d), dtype=state.dtype)
    else:
        out[...] = 0
    p = _pad_replicate(state)
    for u in range(3):
        for v in range(3):
            out += kernel[u, v] * p[u:u + h, v:v + w]
    return out


def depthwise3x3_adjoint(g_out, kernel):
    """Gradient of depthwise3x3 with respect to its input state."""
    h, w, d = g_out.shape
    gp = np.zeros((h + 2, w + 2, d), dtype=g_out.dtype)
    for u in range(3):
        for v in range(3):
            gp[u:u + h, v:v + w] += kernel[u, v] * g_out
    # fold the replicate-padding border back onto the edge cells
    gs = gp[1:-1, 1:-1].copy()
    gs[0, :] += gp[0, 1:-1]
    gs[-1, :] += gp[-1, 1:-1]
    gs[:, 0] += gp[1:-1, 0]
    gs[:, -1] += gp[1:-1, -1]
    gs[0, 0] += gp[0, 0]
    gs[0, -1] += gp[0, -1]
    gs[-1, 0] += gp[-1, 0]
    gs[-1, -1] += gp[-1, -1]
    return gs


def depthwise3x3_kernel_grad(state, g_out, gk):
    """Accumulate the kernel gradient of depthwise3x3 into gk (3, 3, d)."""
    h, w, _ = state.shape
    p = _pad_replicate(state)
    for u in range(3):
        for v in range(3):
            gk[u, v] += np.einsum("ijc,ijc->c", p[u:u + h, v:v + w], g_out)
    return gk


def perceive(state, ka, kb, out=None):
    """Perception field: [identity | conv_a | conv_b], shape (h, w, 3d)."""
    h, w, d = state.shape
    if out is None:
        out = np.empty((h, w, 3 * d), dtype=state.dtype)
    out[:, :, :d] = state
    depthwise3x3(state, ka, out=out[:, :, d:2 * d])
    depthwise3x3(state, kb, out=out[:, :, 2 * d:])
    return out


def step_forward(state, ka, kb, w1, b1, w2, b2, mask, delta_scale):
    """One residual update: state + delta_scale * MLP(perceive(state)), gated by mask.

    mask is (h, w) uint8; cells with bit 0 keep their exact values.
    """
    h, w, d = state.shape
    z = perceive(state, ka, kb).reshape(h * w, 3 * d)
    fired = mask.reshape(-1).astype(bool)
    zf = z[fired]
    h1 = np.maximum(zf @ w1 + b1, 0)
    delta = h1 @ w2 + b2
    if delta_scale != 1.0:
        delta = delta * delta_scale
    out = state.reshape(h * w, d).copy()
    out[fired] += delta
    return out.reshape(h, w, d)


def step_backward(state, ka, kb, w1, b1, w2, b2, mask, delta_scale,
                  g_out, gka, gkb, gw1, gb1, gw2, gb2):
    """Reverse-mode step: returns d(loss)/d(state) and accumulates parameter grads.

    g_out is d(loss)/d(new state). Activations are recomputed from ``state``,
    so nothing but the input state needs to have been stored.
    """
    h, w, d = state.shape
    n = h * w
    z = perceive(state, ka, kb).reshape(n, 3 * d)
    fired = mask.reshape(-1).astype(bool)
    zf = z[fired]
    h1 = np.maximum(zf @ w1 + b1, 0)

    gm = g_out.reshape(n, d)[fired]
    if delta_scale != 1.0:
        gm = gm * delta_scale
    gb2 += gm.sum(axis=0)
    gw2 += h1.T @ gm
    ga1 = (gm @ w2.T) * (h1 > 0)
    gb1 += ga1.sum(axis=0)
    gw1 += zf.T @ ga1
    gzf = ga1 @ w1.T

    g_state = g_out.copy().reshape(n, d)
    g_state[fired] += gzf[:, :d]
    gza = np.zeros((n, d), dtype=state.dtype)
    gza[fired] = gzf[:, d:2 * d]
    gza = gza.reshape(h, w, d)
    gzb = np.zeros((n, d), dtype=state.dtype)
    gzb[fired] = gzf[:, 2 * d:]
    gzb = gzb.reshape(h, w, d)
    g_state = g_state.reshape(h, w, d)
    g_state += depthwise3x3_adjoint(gza, ka)
    g_state += depthwise3x3_adjoint(gzb, kb)
    depthwise3x3_kernel_grad(state, gza, gka)
    depthwise3x3_kernel_grad(state, gzb, gkb)
    return g_state
