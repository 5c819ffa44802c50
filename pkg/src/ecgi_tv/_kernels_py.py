"""Pure-NumPy implementations of the hot kernels.

Same call signatures as the compiled extension ``_kernels``; all functions
write into preallocated output arrays.  Segment endpoint index arrays must be
duplicate-free (true for simple chains and loops), which makes fancy-indexed
accumulation safe.
"""

import numpy as np

BACKEND = "numpy"


def grad_space_apply(u, n0, n1, inv_len, tx, ty, out_gx, out_gy):
    """Per-segment tangential P1 gradient, embedded as 2 components.

    u: (T, N_V) time slices; outputs (T, N_Q).
    """
    g = (u[:, n1] - u[:, n0]) * inv_len
    np.multiply(g, tx, out=out_gx)
    np.multiply(g, ty, out=out_gy)


def grad_space_adjoint(qx, qy, n0, n1, inv_len, tx, ty, out_u):
    """Transpose of grad_space_apply (overwrites out_u, shape (T, N_V))."""
    c = (qx * tx + qy * ty) * inv_len
    out_u[:] = 0.0
    out_u[:, n1] += c
    out_u[:, n0] -= c


def grad_time_apply(u, inv_dt, out_p):
    """Forward differences over time: out_p (S, N) from u (S+1, N)."""
    np.subtract(u[1:], u[:-1], out=out_p)
    out_p *= inv_dt[:, None]


def grad_time_adjoint(p, inv_dt, out_u):
    """Transpose of grad_time_apply (overwrites out_u, shape (S+1, N))."""
    w = p * inv_dt[:, None]
    out_u[0] = -w[0]
    out_u[-1] = w[-1]
    if w.shape[0] > 1:
        out_u[1:-1] = w[:-1] - w[1:]


def clamp_rows(p, ratio):
    """In place p <- p / max(1, ratio_row * |p|), one ratio per row."""
    p /= np.maximum(1.0, np.abs(p) * ratio[:, None])


def clamp_cols(p, ratio):
    """In place p <- p / max(1, ratio_col * |p|), one ratio per column."""
    p /= np.maximum(1.0, np.abs(p) * ratio[None, :])


def project_l2_rows(p):
    """In place radial projection of each row of p (M, K) onto the unit ball."""
    nrm = np.sqrt(np.einsum("ij,ij->i", p, p))
    p /= np.maximum(1.0, nrm)[:, None]


def axpy_project_l2(p, q, sigma):
    """In place p <- project(p + sigma * q) on 2-D row-vector arrays."""
    p += sigma * q
    project_l2_rows(p)


def q2_scatter(sx, sy, st, n0, n1, out):
    """Replicate Q1 gradient blocks to the 4 corners of each space-time element.

    sx, sy: (S+1, N_Q) spatial components at time nodes; st: (S, N_V) temporal
    component per interval; out: (S, N_Q, 2, 2, 3) indexed by (interval,
    segment, spatial corner, temporal corner, component).
    """
    out[:, :, :, 0, 0] = sx[:-1, :, None]
    out[:, :, :, 1, 0] = sx[1:, :, None]
    out[:, :, :, 0, 1] = sy[:-1, :, None]
    out[:, :, :, 1, 1] = sy[1:, :, None]
    out[:, :, 0, :, 2] = st[:, n0, None]
    out[:, :, 1, :, 2] = st[:, n1, None]


def q2_gather(vals, w2, n0, n1, out_qx, out_qy, out_qt):
    """Transpose of q2_scatter with per-element weights w2 (S, N_Q) applied.

    Accumulates the weighted corners back onto the Q1 slots: out_qx/out_qy
    (S+1, N_Q) and out_qt (S, N_V); outputs are overwritten.
    """
    pw = vals * w2[:, :, None, None, None]
    by_time = pw.sum(axis=2)  # (S, N_Q, 2, 3)
    out_qx[:] = 0.0
    out_qx[:-1] += by_time[:, :, 0, 0]
    out_qx[1:] += by_time[:, :, 1, 0]
    out_qy[:] = 0.0
    out_qy[:-1] += by_time[:, :, 0, 1]
    out_qy[1:] += by_time[:, :, 1, 1]
    by_corner = pw[..., 2].sum(axis=3)  # (S, N_Q, 2)
    out_qt[:] = 0.0
    out_qt[:, n0] += by_corner[:, :, 0]
    out_qt[:, n1] += by_corner[:, :, 1]


def q2_weighted_tv(vals, w2):
    """Sum of w2[j, l] * ||corner gradient||_2 over all corners."""
    nrm = np.sqrt(np.sum(vals * vals, axis=4))
    return float(np.sum(w2[:, :, None, None] * nrm))
