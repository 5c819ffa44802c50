"""Space-time gradient operators: forward values, adjoint identities,
operator-norm estimation against dense oracles."""

import numpy as np
import pytest

from conftest import tiny_geometry_config
from ecgi_tv.errors import DimensionError
from ecgi_tv.fem import TimeGrid
from ecgi_tv.mesh import build_geometry
from ecgi_tv.tvops import (AnisotropyWeights, GradOp, apply_adjoint, apply_k, apply_k1,
                           apply_k2, operator_norm, tv_value)
from oracles import chain_curve, dense_operator_norm, materialize_k, q_weight_vector, ring_curve


def ring_op(n=12, s=4, lam=(1.0, 1.0), alpha=1, radius=2.0, t_end=2.0):
    points, segments = ring_curve(n, radius)
    grid = TimeGrid.uniform(t_end, s) if s > 0 else TimeGrid(np.array([0.0]))
    return GradOp.from_curve(points, segments, grid, AnisotropyWeights(*lam), alpha)


class TestApplyK1:
    def test_constant_field_maps_to_zero(self):
        op = ring_op()
        p = apply_k1(op, np.ones(op.n_nodes * (op.n_intervals + 1)))
        assert np.all(p.spatial == 0.0)
        assert np.all(p.temporal == 0.0)

    def test_linear_in_time_gives_unit_temporal(self):
        op = ring_op(s=5, t_end=5.0)
        u = np.repeat(op.grid.nodes, op.n_nodes)  # u(x, t) = t
        p = apply_k1(op, u)
        assert np.allclose(p.temporal, 1.0)
        assert np.allclose(p.spatial, 0.0, atol=1e-14)

    def test_arc_length_gradient_has_unit_norm(self):
        op = ring_op(n=17, s=1)
        arc = np.concatenate(([0.0], np.cumsum(op.seg_len)))[:-1]  # per-node arc length
        u = np.tile(arc, op.n_intervals + 1)
        p = apply_k1(op, u)
        norms = np.sqrt(p.spatial[0] ** 2 + p.spatial[1] ** 2)
        # all segments except the seam (wrap-around) carry exactly unit gradient
        assert np.allclose(norms[:, :-1], 1.0, atol=1e-12)

    def test_alpha_guard(self):
        op = ring_op(alpha=2)
        with pytest.raises(DimensionError):
            apply_k1(op, np.zeros(op.n_nodes * (op.n_intervals + 1)))


class TestApplyK2:
    def test_constant_maps_to_zero(self):
        op = ring_op(alpha=2)
        p = apply_k2(op, np.ones(op.n_nodes * (op.n_intervals + 1)))
        assert np.all(p.values == 0.0)

    def test_separable_affine_is_exact_on_chain(self):
        # u(x, t) = a x + b t on a straight chain: every corner gradient is
        # (lam_s a, 0, lam_t b).
        a, b = 0.7, -1.3
        lam_s, lam_t = 2.0, 0.5
        points, segments = chain_curve(6, spacing=0.8)
        grid = TimeGrid.uniform(3.0, 3)
        op = GradOp.from_curve(points, segments, grid, AnisotropyWeights(lam_s, lam_t), 2)
        u = (a * points[:, 0][None, :] + b * grid.nodes[:, None]).ravel()
        p = apply_k2(op, u)
        assert np.allclose(p.values[..., 0], lam_s * a, atol=1e-12)
        assert np.allclose(p.values[..., 1], 0.0, atol=1e-12)
        assert np.allclose(p.values[..., 2], lam_t * b, atol=1e-12)

    def test_output_layout_size(self):
        op = ring_op(n=9, s=4, alpha=2)
        p = apply_k2(op, np.zeros(op.n_nodes * 5))
        # (d+1) components on 2*d corner nodes of N_Q * S elements
        assert p.size == 3 * 2 * 2 * 9 * 4
        assert p.values.shape == (4, 9, 2, 2, 3)

    def test_corner_average_matches_q1_time_midpoint(self):
        # Spatial corners replicate the P1-in-time value, so the 4-corner mean
        # equals the Q1 spatial value at the interval midpoint.
        op2 = ring_op(n=10, s=3, alpha=2)
        op1 = ring_op(n=10, s=3, alpha=1)
        rng = np.random.default_rng(5)
        u = rng.standard_normal(op2.n_nodes * 4)
        p2 = apply_k2(op2, u)
        p1 = apply_k1(op1, u)
        for k in range(2):
            mean_corners = p2.values[..., k].mean(axis=(2, 3))  # (S, N_Q)
            midpoint = 0.5 * (p1.spatial[k][:-1] + p1.spatial[k][1:])
            assert np.allclose(mean_corners, midpoint, atol=1e-12)


class TestAdjoint:
    @pytest.mark.parametrize("alpha", [1, 2])
    def test_adjoint_identity_random_pairs(self, alpha):
        op = ring_op(n=11, s=5, lam=(0.8, 1.7), alpha=alpha)
        rng = np.random.default_rng(42)
        n = op.n_nodes * (op.n_intervals + 1)
        for _ in range(100):
            u = rng.standard_normal(n)
            ku = apply_k(op, u)
            p = ku.copy()
            if alpha == 1:
                p.spatial = rng.standard_normal(p.spatial.shape)
                p.temporal = rng.standard_normal(p.temporal.shape)
            else:
                p.values = rng.standard_normal(p.values.shape)
            lhs = op.inner_q(ku, p)
            rhs = op.inner_v(u, apply_adjoint(op, p))
            assert abs(lhs - rhs) <= 1e-10 * max(op.norm_q(ku) * op.norm_q(p), 1e-30)

    def test_zero_dual_maps_to_zero(self):
        op = ring_op()
        p = apply_k(op, np.zeros(op.n_nodes * (op.n_intervals + 1)))
        assert np.all(apply_adjoint(op, p) == 0.0)

    def test_lambda_space_zero_kills_spatial_blocks(self):
        op = ring_op(lam=(0.0, 1.0))
        rng = np.random.default_rng(7)
        p = apply_k(op, rng.standard_normal(op.n_nodes * (op.n_intervals + 1)))
        p.spatial = rng.standard_normal(p.spatial.shape)  # garbage in the dead blocks
        temporal_only = p.copy()
        temporal_only.spatial = np.zeros_like(p.spatial)
        assert np.allclose(apply_adjoint(op, p), apply_adjoint(op, temporal_only))

    def test_layout_mismatch_raises(self):
        op1 = ring_op(alpha=1)
        op2 = ring_op(alpha=2)
        p2 = apply_k(op2, np.zeros(op2.n_nodes * (op2.n_intervals + 1)))
        with pytest.raises(DimensionError):
            apply_adjoint(op1, p2)


class TestKernelOfK:
    def test_constants_map_to_zero_and_only_constants(self):
        op = ring_op(n=8, s=2)
        k = materialize_k(op)
        wq = q_weight_vector(op)
        wv = op.v_weight.ravel()
        m = (k * np.sqrt(wq)[:, None]) / np.sqrt(wv)[None, :]
        sv = np.linalg.svd(m, compute_uv=False)
        assert sv[-1] < 1e-12  # constants are flat
        assert sv[-2] > 1e-6  # and nothing else is


class TestOperatorNorm:
    @pytest.mark.parametrize("alpha,s,n", [(1, 2, 10), (2, 4, 4), (1, 4, 6)])
    def test_matches_dense_oracle(self, alpha, s, n):
        op = ring_op(n=n, s=s, lam=(1.3, 0.4), alpha=alpha)
        assert op.n_nodes * (op.n_intervals + 1) <= 60
        est = operator_norm(op, tol=1e-12, max_iter=100000)
        ref = dense_operator_norm(op)
        assert abs(est - ref) <= 1e-6 * ref

    def test_homogeneity(self):
        c = 3.7
        op1 = ring_op(n=9, s=3, lam=(0.5, 1.1))
        op2 = ring_op(n=9, s=3, lam=(0.5 * c, 1.1 * c))
        l1 = operator_norm(op1, tol=1e-13, max_iter=200000)
        l2 = operator_norm(op2, tol=1e-13, max_iter=200000)
        assert abs(l2 - c * l1) <= 1e-10 * l2

    def test_spatial_only_degenerate_grid(self):
        # lam_t = 0 with a single time node reduces to the curve gradient norm.
        op = ring_op(n=12, s=0, lam=(1.0, 0.0))
        est = operator_norm(op, tol=1e-12, max_iter=100000)
        ref = dense_operator_norm(op)
        assert abs(est - ref) <= 1e-6 * ref

    def test_zero_operator(self):
        op = ring_op(lam=(0.0, 0.0))
        assert operator_norm(op) == 0.0

    def test_nonconvergence_warns(self):
        op = ring_op(n=10, s=3)
        with pytest.warns(RuntimeWarning):
            operator_norm(op, tol=1e-16, max_iter=3)


class TestTvValue:
    def test_hand_computed_single_element(self):
        # Two nodes, one segment of length 2, one interval of length 1.
        points, segments = chain_curve(2, spacing=2.0)
        grid = TimeGrid.uniform(1.0, 1)
        op = GradOp.from_curve(points, segments, grid, AnisotropyWeights(1.0, 1.0), 1)
        u = np.array([0.0, 1.0, 0.0, 3.0])  # t0: (0, 1), t1: (0, 3)
        p = apply_k1(op, u)
        # spatial block: gradient 0.5 at t0 and 1.5 at t1, weights d_s*|L| = 0.5*2
        # temporal block: rates (0, 2), weights |J|*m_i = 1*(1, 1)
        expected = (0.5 * 2.0) * (0.5 + 1.5) + 1.0 * (0.0 + 2.0)
        assert np.isclose(tv_value(op, p), expected, rtol=1e-14)

    def test_zero_weights_zero_value(self):
        op = ring_op(lam=(0.0, 0.0))
        u = np.random.default_rng(0).standard_normal(op.n_nodes * (op.n_intervals + 1))
        assert tv_value(op, apply_k(op, u)) == 0.0

    def test_half_quadratic_branch(self):
        points, segments = chain_curve(2, spacing=1.0)
        grid = TimeGrid.uniform(1.0, 1)
        op = GradOp.from_curve(points, segments, grid, AnisotropyWeights(1.0, 0.0), 1)
        u = np.array([0.0, 10.0, 0.0, 10.0])  # spatial gradient 10 everywhere
        p = apply_k1(op, u)
        pure = tv_value(op, p, eps=0.0)
        huberized = tv_value(op, p, eps=0.5)  # threshold 1/eps = 2 < 10
        assert huberized == pytest.approx(pure * 0.5 * 10.0)  # eps x^2 vs |x|
