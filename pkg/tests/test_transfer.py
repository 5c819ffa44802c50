"""Schur-complement transfer operator against a monolithic FEM oracle."""

import numpy as np
import pytest

from conftest import tiny_geometry_config
from ecgi_tv.errors import DimensionError, TopologyError
from ecgi_tv.fem import isotropic_conductivity
from ecgi_tv.mesh import LUNGS, TORSO, build_geometry
from ecgi_tv.simulate import ConductivityTable, conductivity_inverse
from ecgi_tv.transfer import (apply_transfer_adjoint_spacetime, apply_transfer_spacetime,
                              build_transfer, export_transfer, read_transfer)
from oracles import monolithic_transfer


def tiny_transfer(n_angular=16, n_radial=2, lungs=False, sigma=1.0, **kw):
    geo = build_geometry(tiny_geometry_config(n_angular, n_radial, lungs, **kw),
                         n_electrodes=min(6, n_angular))
    values = {TORSO: sigma, LUNGS: 0.03 if lungs else sigma}
    cond = isotropic_conductivity(geo.inv_mesh, values)
    tm = build_transfer(geo.inv_mesh, cond, geo.bounds, geo.electrodes, keep_gamma=True)
    return geo, cond, tm


class TestBuild:
    def test_constant_transfer(self):
        _, _, tm = tiny_transfer()
        assert np.max(np.abs(tm.a_sigma @ np.ones(tm.n_epi_nodes) - 1.0)) <= 1e-8

    @pytest.mark.parametrize("n_angular, n_radial, lungs, offset", [
        (16, 2, False, (6.0, 0.0)),
        (20, 3, False, (0.0, 0.0)),
        (12, 3, True, (4.0, 3.0)),
    ])
    def test_matches_monolithic_oracle(self, n_angular, n_radial, lungs, offset):
        geo, cond, tm = tiny_transfer(n_angular, n_radial, lungs, offset=offset)
        assert geo.inv_mesh.n_vertices <= 200
        oracle = monolithic_transfer(geo.inv_mesh, cond, geo.bounds, tm.electrode_nodes)
        scale = np.linalg.norm(oracle, axis=1, keepdims=True)
        assert np.max(np.abs(tm.a_sigma - oracle) / scale) < 1e-10

    def test_sigma_scale_invariance(self):
        _, _, tm1 = tiny_transfer(sigma=0.22)
        _, _, tm2 = tiny_transfer(sigma=0.44)
        assert np.allclose(tm1.a_sigma, tm2.a_sigma, atol=1e-11)

    def test_adjacent_boundaries_rejected(self):
        geo, cond, _ = tiny_transfer()
        bad = build_geometry(tiny_geometry_config(n_angular=8, n_radial=1), n_electrodes=4)
        cond_bad = isotropic_conductivity(bad.inv_mesh, {TORSO: 1.0})
        with pytest.raises(TopologyError):
            build_transfer(bad.inv_mesh, cond_bad, bad.bounds, bad.electrodes)

    def test_singular_value_decay(self, default_assets):
        sv = np.linalg.svd(default_assets.tm.a_sigma, compute_uv=False)
        assert sv[0] / sv[-1] >= 1e4  # severe ill-posedness on the default model


class TestApply:
    def test_constant_in_time(self):
        _, _, tm = tiny_transfer()
        rng = np.random.default_rng(0)
        u0 = rng.standard_normal(tm.n_epi_nodes)
        u = np.tile(u0, 4)
        z = apply_transfer_spacetime(tm, u).reshape(4, -1)
        assert np.allclose(z, z[0])

    def test_single_time_node_is_direct_product(self):
        _, _, tm = tiny_transfer()
        rng = np.random.default_rng(1)
        u = rng.standard_normal(tm.n_epi_nodes)
        assert np.allclose(apply_transfer_spacetime(tm, u), tm.a_sigma @ u)

    def test_linearity(self):
        _, _, tm = tiny_transfer()
        rng = np.random.default_rng(2)
        u = rng.standard_normal(3 * tm.n_epi_nodes)
        w = rng.standard_normal(3 * tm.n_epi_nodes)
        lhs = apply_transfer_spacetime(tm, 2.0 * u + 0.5 * w)
        rhs = 2.0 * apply_transfer_spacetime(tm, u) + 0.5 * apply_transfer_spacetime(tm, w)
        assert np.allclose(lhs, rhs, atol=1e-12 * np.abs(rhs).max())

    def test_dimension_error(self):
        _, _, tm = tiny_transfer()
        with pytest.raises(DimensionError):
            apply_transfer_spacetime(tm, np.zeros(tm.n_epi_nodes + 1))


class TestAdjoint:
    def test_dot_product_identity(self):
        _, _, tm = tiny_transfer()
        rng = np.random.default_rng(3)
        for _ in range(20):
            u = rng.standard_normal(5 * tm.n_epi_nodes)
            z = rng.standard_normal(5 * tm.n_electrodes)
            au = apply_transfer_spacetime(tm, u)
            atz = apply_transfer_adjoint_spacetime(tm, z)
            lhs = au @ z
            rhs = u @ atz
            assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), 1.0)

    def test_zero_maps_to_zero(self):
        _, _, tm = tiny_transfer()
        assert np.all(apply_transfer_adjoint_spacetime(tm, np.zeros(tm.n_electrodes)) == 0.0)

    def test_single_node_is_transpose(self):
        _, _, tm = tiny_transfer()
        z = np.random.default_rng(4).standard_normal(tm.n_electrodes)
        assert np.allclose(apply_transfer_adjoint_spacetime(tm, z), tm.a_sigma.T @ z)


class TestExport:
    def test_round_trip_with_provenance(self, tmp_path):
        _, _, tm = tiny_transfer()
        path = tmp_path / "transfer.txt"
        export_transfer(tm, path)
        tm2 = read_transfer(path)
        assert tm2.mesh_hash == tm.mesh_hash
        assert tm2.cond_hash == tm.cond_hash
        assert np.array_equal(tm2.electrode_nodes, tm.electrode_nodes)
        assert np.allclose(tm2.a_sigma, tm.a_sigma, rtol=1e-15)

    def test_restrict_requires_full_map(self):
        geo, cond, tm = tiny_transfer()
        smaller = build_geometry(tiny_geometry_config(), n_electrodes=3)
        sub = tm.restrict(smaller.electrodes, geo.bounds.gamma_nodes)
        pos = {int(n): i for i, n in enumerate(geo.bounds.gamma_nodes)}
        rows = [pos[int(n)] for n in smaller.electrodes.nodes]
        assert np.array_equal(sub.a_sigma, tm.a_gamma[rows])
