"""Shared fixtures; heavyweight objects are session-scoped."""

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from ecgi_tv.experiment import ExperimentConfig, build_assets, simulate_fields
from ecgi_tv.mesh import GeometryConfig, build_geometry
from ecgi_tv.simulate import SimConfig, sample_truth


def tiny_geometry_config(n_angular=16, n_radial=2, lungs=False, offset=(6.0, 0.0)):
    from ecgi_tv.mesh import default_lungs

    return GeometryConfig(
        torso_radius=100.0, heart_radius=30.0, heart_center=offset,
        myocardium_thickness=12.0, angular_resolution=n_angular,
        radial_resolution=n_radial, lungs=default_lungs() if lungs else (),
    )


@pytest.fixture(scope="session")
def tiny_geometry():
    return build_geometry(tiny_geometry_config(), n_electrodes=6)


@pytest.fixture(scope="session")
def small_geometry():
    return build_geometry(tiny_geometry_config(n_angular=32, n_radial=5, lungs=True),
                          n_electrodes=12)


@pytest.fixture(scope="session")
def default_assets():
    """Full default model: N_V = 210, S = 100; shared by the acceptance tests."""
    return build_assets(ExperimentConfig())


@pytest.fixture(scope="session")
def default_truth(default_assets):
    cfg = default_assets.config
    phi, v = simulate_fields(default_assets.geometry, cfg.sim, cfg.table)
    u_g, z_g = sample_truth(v, default_assets.geometry)
    return phi, v, u_g, z_g


@pytest.fixture(scope="session")
def small_assets():
    """Light experiment assets for driver tests (fast PDHG solves)."""
    cfg = ExperimentConfig(
        geometry=tiny_geometry_config(n_angular=32, n_radial=4, lungs=True),
        sim=SimConfig(t_end=40.0, n_steps=20),
        n_electrodes=10,
        snr_db=(30.0,),
        lambda_min=1e-9,
        lambda_max=1e-3,
        max_iter=2000,
    )
    return build_assets(cfg)


@pytest.fixture(scope="session")
def small_truth(small_assets):
    cfg = small_assets.config
    phi, v = simulate_fields(small_assets.geometry, cfg.sim, cfg.table)
    u_g, z_g = sample_truth(v, small_assets.geometry)
    return phi, v, u_g, z_g
