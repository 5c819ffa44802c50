"""Weighted space-time gradient operators on the epicardial curve.

Two discrete gradient layouts are supported:

* Q1 -- spatial components piecewise constant per segment and nodal in time,
  temporal component nodal in space and piecewise constant per interval.
* Q2 -- all d+1 gradient components replicated to the 4 corner evaluation
  nodes of every segment-by-interval space-time element (no inter-element
  averaging), which decouples the per-corner Euclidean norms.

Adjoints are taken with respect to the lumped space-time inner products, so
the inverse mass factors stay diagonal and explicit.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionError
from .fem import (TimeGrid, assemble_surface_mass_p1, assemble_time_mass_p1, lump,
                  quadrature_weights, segment_lengths, _assemble_1d)
from .mesh import BoundarySets, Mesh


@dataclass(frozen=True)
class AnisotropyWeights:
    """Spatial and temporal penalization strengths (both >= 0)."""

    lam_space: float
    lam_time: float

    def __post_init__(self):
        if self.lam_space < 0.0 or self.lam_time < 0.0:
            raise ValueError("anisotropy weights must be nonnegative")

    def scaled(self, c: float) -> "AnisotropyWeights":
        return AnisotropyWeights(c * self.lam_space, c * self.lam_time)


@dataclass
class DualFieldQ1:
    """Gradient-space values: spatial (2, S+1, N_Q), temporal (S, N_V)."""

    spatial: np.ndarray
    temporal: np.ndarray
    layout = "Q1"

    def copy(self) -> "DualFieldQ1":
        return DualFieldQ1(self.spatial.copy(), self.temporal.copy())

    def ravel(self) -> np.ndarray:
        return np.concatenate((self.spatial.ravel(), self.temporal.ravel()))

    @property
    def size(self) -> int:
        return self.spatial.size + self.temporal.size


@dataclass
class DualFieldQ2:
    """Per-corner gradients, shape (S, N_Q, 2, 2, 3).

    Axes: time interval, segment, spatial corner (segment endpoint), temporal
    corner (interval endpoint), gradient component (x, y, t).
    """

    values: np.ndarray
    layout = "Q2"

    def copy(self) -> "DualFieldQ2":
        return DualFieldQ2(self.values.copy())

    def ravel(self) -> np.ndarray:
        return self.values.ravel()

    @property
    def size(self) -> int:
        return self.values.size


@dataclass
class GradOp:
    """Weighted space-time gradient with cached geometry and adjoint weights."""

    alpha: int
    weights: AnisotropyWeights
    grid: TimeGrid
    n_nodes: int
    seg_n0: np.ndarray  # (N_Q,) segment start nodes (local numbering)
    seg_n1: np.ndarray
    seg_len: np.ndarray
    tangent: np.ndarray  # (N_Q, 2) unit tangents
    d_quad: np.ndarray  # (S+1,) nodal time quadrature weights
    m_quad: np.ndarray  # (N_V,) nodal space quadrature weights
    dtilde: np.ndarray  # (S+1,) lumped time mass diagonal
    mtilde: np.ndarray  # (N_V,) lumped space mass diagonal
    _norm: float | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.alpha not in (1, 2):
            raise ValueError("alpha must be 1 or 2")
        if np.unique(self.seg_n0).size != self.seg_n0.size or \
           np.unique(self.seg_n1).size != self.seg_n1.size:
            raise DimensionError("segment endpoints must be duplicate-free per side")
        if self.alpha == 2 and self.grid.n_intervals == 0:
            raise DimensionError("the Q2 layout needs at least one time interval")
        # contiguous per-axis copies for the compiled kernels
        self.seg_n0 = np.ascontiguousarray(self.seg_n0, dtype=np.int64)
        self.seg_n1 = np.ascontiguousarray(self.seg_n1, dtype=np.int64)
        self.tan_x = np.ascontiguousarray(self.tangent[:, 0]) if self.tangent.size \
            else np.empty(0)
        self.tan_y = np.ascontiguousarray(self.tangent[:, 1]) if self.tangent.size \
            else np.empty(0)
        self.inv_seg_len = 1.0 / self.seg_len
        self.inv_dt = 1.0 / self.grid.intervals if self.grid.n_intervals else np.empty(0)

    # -- geometry shorthands ------------------------------------------------
    @property
    def n_segments(self) -> int:
        return self.seg_n0.size

    @property
    def n_intervals(self) -> int:
        return self.grid.n_intervals

    @property
    def v_weight(self) -> np.ndarray:
        """Lumped V_h inner-product weights per (time node, space node)."""
        return np.outer(self.dtilde, self.mtilde)

    def slices(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=np.float64)
        n = self.n_nodes * (self.n_intervals + 1)
        if u.shape != (n,):
            raise DimensionError(f"expected field of length {n}, got {u.shape}")
        return u.reshape(self.n_intervals + 1, self.n_nodes)

    # -- inner products -----------------------------------------------------
    def inner_v(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.v_weight.ravel() * u * v))

    def norm_v(self, u: np.ndarray) -> float:
        return float(np.sqrt(max(self.inner_v(u, u), 0.0)))

    def inner_q(self, p, q) -> float:
        if p.layout != q.layout:
            raise DimensionError("dual layouts differ")
        if p.layout == "Q1":
            wsp = self.d_quad[:, None] * self.seg_len[None, :]
            wt = self.grid.intervals[:, None] * self.m_quad[None, :]
            return float(np.sum(wsp * p.spatial[0] * q.spatial[0])
                         + np.sum(wsp * p.spatial[1] * q.spatial[1])
                         + np.sum(wt * p.temporal * q.temporal))
        w2 = self.q2_corner_weights()
        return float(np.sum(w2[..., None, None, None] * p.values * q.values))

    def norm_q(self, p) -> float:
        return float(np.sqrt(max(self.inner_q(p, p), 0.0)))

    def q2_corner_weights(self) -> np.ndarray:
        """Per space-time element quadrature weights |J|/2 * |L|/2, shape (S, N_Q)."""
        return 0.25 * np.outer(self.grid.intervals, self.seg_len)

    # -- construction -------------------------------------------------------
    @classmethod
    def from_curve(cls, points: np.ndarray, segments: np.ndarray, grid: TimeGrid,
                   weights: AnisotropyWeights, alpha: int) -> "GradOp":
        """Build from raw curve arrays (used directly by tests on chains)."""
        points = np.asarray(points, dtype=np.float64)
        segments = np.asarray(segments, dtype=np.int64)
        n0 = segments[:, 0].copy()
        n1 = segments[:, 1].copy()
        vec = points[n1] - points[n0]
        seg_len = np.linalg.norm(vec, axis=1)
        tangent = vec / seg_len[:, None]
        n_nodes = points.shape[0]

        m_quad = np.zeros(n_nodes)
        np.add.at(m_quad, n0, 0.5 * seg_len)
        np.add.at(m_quad, n1, 0.5 * seg_len)
        mass = _assemble_1d(n_nodes, n0, n1, seg_len,
                            lambda h: [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]])
        mtilde = np.asarray(mass.sum(axis=1)).ravel()

        s = grid.n_intervals
        if s == 0:
            d_quad = np.ones(1)
            dtilde = np.ones(1)
        else:
            h = grid.intervals
            d_quad = np.zeros(s + 1)
            d_quad[:-1] += 0.5 * h
            d_quad[1:] += 0.5 * h
            dtilde = np.asarray(assemble_time_mass_p1(grid).sum(axis=1)).ravel()

        return cls(alpha=alpha, weights=weights, grid=grid, n_nodes=n_nodes,
                   seg_n0=n0, seg_n1=n1, seg_len=seg_len, tangent=tangent,
                   d_quad=d_quad, m_quad=m_quad, dtilde=dtilde, mtilde=mtilde)

    @classmethod
    def from_bounds(cls, mesh: Mesh, bounds: BoundarySets, grid: TimeGrid,
                    weights: AnisotropyWeights, alpha: int) -> "GradOp":
        """Build on the epicardial loop of an inverse-problem mesh."""
        order = {int(n): k for k, n in enumerate(bounds.gammaH_nodes)}
        seg = bounds.gammaH_segments
        n0 = np.array([order[int(a)] for a in seg[:, 0]], dtype=np.int64)
        n1 = np.array([order[int(b)] for b in seg[:, 1]], dtype=np.int64)
        vec = mesh.vertices[seg[:, 1]] - mesh.vertices[seg[:, 0]]
        seg_len = segment_lengths(mesh, bounds)
        tangent = vec / seg_len[:, None]

        d_w, m_w = quadrature_weights(mesh, bounds, grid)
        mtilde = lump(assemble_surface_mass_p1(mesh, bounds), "lumped_space_mass").values
        if grid.n_intervals == 0:
            dtilde = np.ones(1)
        else:
            dtilde = lump(assemble_time_mass_p1(grid), "lumped_time_mass").values

        return cls(alpha=alpha, weights=weights, grid=grid,
                   n_nodes=bounds.n_epi_nodes, seg_n0=n0, seg_n1=n1,
                   seg_len=seg_len, tangent=tangent, d_quad=d_w.values,
                   m_quad=m_w.values, dtilde=dtilde, mtilde=mtilde)


# ---------------------------------------------------------------------------
# Forward applications
# ---------------------------------------------------------------------------

def apply_k1(op: GradOp, u: np.ndarray) -> DualFieldQ1:
    """Space-time gradient in the Q1 layout."""
    if op.alpha != 1:
        raise DimensionError("apply_k1 requires an alpha=1 operator")
    return _k1(op, u)


def _k1(op: GradOp, u: np.ndarray) -> DualFieldQ1:
    uu = op.slices(u)
    s1 = op.n_intervals + 1
    spatial = np.empty((2, s1, op.n_segments))
    kernels.grad_space_apply(uu, op.seg_n0, op.seg_n1, op.inv_seg_len,
                             op.tan_x, op.tan_y, spatial[0], spatial[1])
    spatial *= op.weights.lam_space
    temporal = np.empty((op.n_intervals, op.n_nodes))
    if op.n_intervals:
        kernels.grad_time_apply(uu, op.inv_dt, temporal)
        temporal *= op.weights.lam_time
    return DualFieldQ1(spatial=spatial, temporal=temporal)


def apply_k2(op: GradOp, u: np.ndarray) -> DualFieldQ2:
    """Space-time gradient replicated to element corners (Q2 layout)."""
    if op.alpha != 2:
        raise DimensionError("apply_k2 requires an alpha=2 operator")
    q1 = _k1(op, u)
    vals = np.empty((op.n_intervals, op.n_segments, 2, 2, 3))
    kernels.q2_scatter(q1.spatial[0], q1.spatial[1], q1.temporal,
                       op.seg_n0, op.seg_n1, vals)
    return DualFieldQ2(values=vals)


def apply_k(op: GradOp, u: np.ndarray):
    return apply_k1(op, u) if op.alpha == 1 else apply_k2(op, u)


# ---------------------------------------------------------------------------
# Adjoints (lumped V_h masses)
# ---------------------------------------------------------------------------

def apply_adjoint(op: GradOp, p) -> np.ndarray:
    """Adjoint w.r.t. the weighted Q and lumped V_h inner products."""
    if p.layout == "Q1":
        if op.alpha != 1:
            raise DimensionError("Q1 dual passed to an alpha=2 operator")
        return _adjoint_q1(op, p)
    if p.layout == "Q2":
        if op.alpha != 2:
            raise DimensionError("Q2 dual passed to an alpha=1 operator")
        return _adjoint_q2(op, p)
    raise DimensionError(f"unknown dual layout {p.layout!r}")


def _adjoint_q1(op: GradOp, p: DualFieldQ1) -> np.ndarray:
    s1 = op.n_intervals + 1
    acc = np.zeros((s1, op.n_nodes))
    tmp = np.empty_like(acc)

    qx = p.spatial[0] * (op.d_quad[:, None] * op.seg_len[None, :])
    qy = p.spatial[1] * (op.d_quad[:, None] * op.seg_len[None, :])
    kernels.grad_space_adjoint(qx, qy, op.seg_n0, op.seg_n1, op.inv_seg_len,
                               op.tan_x, op.tan_y, tmp)
    acc += op.weights.lam_space * tmp

    if op.n_intervals:
        qt = p.temporal * (op.grid.intervals[:, None] * op.m_quad[None, :])
        kernels.grad_time_adjoint(qt, op.inv_dt, tmp)
        acc += op.weights.lam_time * tmp

    acc /= op.v_weight
    return acc.ravel()


def _adjoint_q2(op: GradOp, p: DualFieldQ2) -> np.ndarray:
    s, n_q = op.n_intervals, op.n_segments
    s1 = s + 1
    # Transpose of the corner replication: gather weighted corners to Q1 slots.
    qx = np.empty((s1, n_q))
    qy = np.empty((s1, n_q))
    qt = np.empty((s, op.n_nodes))
    kernels.q2_gather(p.values, op.q2_corner_weights(), op.seg_n0, op.seg_n1, qx, qy, qt)

    acc = np.zeros((s1, op.n_nodes))
    tmp = np.empty_like(acc)
    kernels.grad_space_adjoint(qx, qy, op.seg_n0, op.seg_n1, op.inv_seg_len,
                               op.tan_x, op.tan_y, tmp)
    acc += op.weights.lam_space * tmp
    kernels.grad_time_adjoint(qt, op.inv_dt, tmp)
    acc += op.weights.lam_time * tmp
    acc /= op.v_weight
    return acc.ravel()


# ---------------------------------------------------------------------------
# Regularizer values and operator norm
# ---------------------------------------------------------------------------

def tv_value(op: GradOp, p, eps: float = 0.0) -> float:
    """Weighted TV (optionally half-quadratic for |x| > 1/eps) of a dual field."""
    if p.layout == "Q1":
        wsp = op.d_quad[:, None] * op.seg_len[None, :]
        wt = op.grid.intervals[:, None] * op.m_quad[None, :] if op.n_intervals \
            else np.zeros((0, op.n_nodes))
        total = 0.0
        for k in range(2):
            total += float(np.sum(wsp * _penalty_abs(p.spatial[k], eps)))
        total += float(np.sum(wt * _penalty_abs(p.temporal, eps)))
        return total
    if eps <= 0.0:
        return float(kernels.q2_weighted_tv(p.values, op.q2_corner_weights()))
    nrm = np.sqrt(np.sum(p.values ** 2, axis=4))  # (S, N_Q, 2, 2)
    pen = _penalty_from_norm(nrm, eps)
    return float(np.sum(op.q2_corner_weights()[:, :, None, None] * pen))


def _penalty_abs(x, eps):
    a = np.abs(x)
    if eps <= 0.0:
        return a
    return np.where(a <= 1.0 / eps, a, eps * x ** 2)


def _penalty_from_norm(nrm, eps):
    if eps <= 0.0:
        return nrm
    return np.where(nrm <= 1.0 / eps, nrm, eps * nrm ** 2)


def operator_norm(op: GradOp, tol: float = 1e-9, max_iter: int = 50000) -> float:
    """Power iteration for ||K|| = sqrt(lambda_max(K* K)) in the lumped V_h metric.

    Deterministic (fixed-seed start vector); warns and returns the current
    estimate if the Rayleigh quotient has not settled within max_iter.
    """
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if op._norm is not None:
        return op._norm
    n = op.n_nodes * (op.n_intervals + 1)
    rng = np.random.default_rng(0xEC61)
    v = rng.standard_normal(n)
    v /= op.norm_v(v)
    lam = np.inf
    converged = False
    for _ in range(max_iter):
        w = apply_adjoint(op, apply_k(op, v))
        lam_new = op.inner_v(v, w)
        nw = op.norm_v(w)
        if nw == 0.0:
            op._norm = 0.0
            return 0.0
        v = w / nw
        if np.isfinite(lam) and abs(lam_new - lam) <= tol * abs(lam_new):
            lam = lam_new
            converged = True
            break
        lam = lam_new
    if not converged:
        warnings.warn(f"operator norm power iteration did not converge in {max_iter} iterations",
                      RuntimeWarning)
    op._norm = float(np.sqrt(max(lam, 0.0)))
    return op._norm
