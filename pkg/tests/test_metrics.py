"""Error metrics and their invariances."""

import numpy as np
import pytest

from ecgi_tv.errors import UndefinedMetricError
from ecgi_tv.fem import TimeGrid, assemble_surface_mass_p1, assemble_time_mass_p1, lump, \
    quadrature_weights
from ecgi_tv.metrics import MetricsReport, metric_cc, metric_re, metric_vh
from ecgi_tv.mesh import build_geometry
from conftest import tiny_geometry_config


class TestBasics:
    def test_identity(self):
        rng = np.random.default_rng(0)
        u = rng.standard_normal(40)
        m = np.ones(8)
        d = np.ones(5)
        assert metric_re(u, u) == 0.0
        assert metric_cc(u, u) == pytest.approx(1.0)
        assert metric_vh(u, u, m, d) == 0.0

    def test_zero_reconstruction_re_one(self):
        u_ref = np.random.default_rng(1).standard_normal(30)
        assert metric_re(np.zeros(30), u_ref) == pytest.approx(1.0)

    def test_negated_zero_mean_cc_minus_one(self):
        rng = np.random.default_rng(2)
        u_ref = rng.standard_normal(64)
        u_ref -= u_ref.mean()
        assert metric_cc(-u_ref, u_ref) == pytest.approx(-1.0)

    def test_constant_reference_undefined(self):
        with pytest.raises(UndefinedMetricError):
            metric_cc(np.arange(4.0), np.full(4, 2.0))
        with pytest.raises(UndefinedMetricError):
            metric_re(np.arange(4.0), np.zeros(4))


class TestInvariances:
    def test_cc_positive_affine_invariance(self):
        rng = np.random.default_rng(3)
        u = rng.standard_normal(100)
        u_ref = rng.standard_normal(100)
        base = metric_cc(u, u_ref)
        assert abs(metric_cc(3.7 * u + 11.0, u_ref) - base) <= 1e-12

    def test_re_simultaneous_scaling(self):
        rng = np.random.default_rng(4)
        u = rng.standard_normal(50)
        u_ref = rng.standard_normal(50)
        assert metric_re(5.0 * u, 5.0 * u_ref) == pytest.approx(metric_re(u, u_ref))

    def test_vh_refinement_consistency(self):
        # Fixed smooth fields evaluated on a refined epicardial loop: the
        # quadrature-weighted norm moves by < 2%.
        def vh_on(n_angular):
            geo = build_geometry(tiny_geometry_config(n_angular=n_angular, n_radial=3,
                                                      offset=(0.0, 0.0)), 4)
            grid = TimeGrid.uniform(1.0, 4)
            pts = geo.inv_mesh.vertices[geo.bounds.gammaH_nodes]
            ang = np.arctan2(pts[:, 1], pts[:, 0])
            u = np.cos(ang)[None, :] * (1.0 + grid.nodes)[:, None]
            ref = np.sin(ang)[None, :] * np.ones_like(grid.nodes)[:, None]
            mt = lump(assemble_surface_mass_p1(geo.inv_mesh, geo.bounds)).values
            dt = lump(assemble_time_mass_p1(grid)).values
            return metric_vh(u.ravel(), ref.ravel(), mt, dt)

        coarse = vh_on(32)
        fine = vh_on(64)
        assert abs(fine - coarse) / coarse < 0.02


class TestReport:
    def test_validation(self):
        with pytest.raises(ValueError):
            MetricsReport(method="T0", lam_gamma=1e-8, lam_t=0.0, snr_db=50.0,
                          n_electrodes=16, re=0.5, cc=1.5, vh=1.0, seconds=0.1)

    def test_csv_row_round_trip_floats(self):
        row = MetricsReport(method="TVST2", lam_gamma=1e-9, lam_t=1e-9, snr_db=50.0,
                            n_electrodes=16, re=0.123456789012345, cc=0.5, vh=2.25,
                            seconds=1.5)
        text = row.csv_row()
        fields = text.split(",")
        assert float(fields[5]) == row.re  # repr round-trips exactly
        assert fields[0] == "TVST2"
