"""Experiment driver: operator assembly, method dispatch, hyperparameter grid
search, noise sweeps, electrode ablation, and report files."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import CapacityError, ConfigurationError, StageError
from .fem import TimeGrid, assemble_surface_mass_p1, assemble_surface_stiffness_p1, \
    assemble_time_mass_p1, lump
from .mesh import Geometry, GeometryConfig, build_geometry, place_electrodes, save_mesh
from .metrics import CSV_HEADER, MetricsReport, metric_cc, metric_re, metric_vh
from .pdhg import InverseProblem, PdhgParams, pdhg_solve
from .simulate import (ConductivityTable, SimConfig, TruthBundle, add_noise,
                       conductivity_full, conductivity_inverse, conduction_metric,
                       eikonal_activation, pseudo_bidomain_solve, sample_truth,
                       save_truth_bundle, source_nodes_from_angles,
                       transmembrane_waveform)
from .tikhonov import solve_t0, solve_t1s, solve_t1st
from .transfer import TransferMatrix, build_transfer
from .tvops import AnisotropyWeights, GradOp, operator_norm

METHODS = ("T0", "T1S", "T1ST", "TVS1", "TVS2", "TVST1", "TVST2")
_TV_ALPHA = {"TVS1": 1, "TVS2": 2, "TVST1": 1, "TVST2": 2}
_TEMPORAL = {"T1ST", "TVST1", "TVST2"}  # methods with a temporal parameter


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything one experiment run needs; see config.py for the file format."""

    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    table: ConductivityTable = field(default_factory=ConductivityTable)
    n_electrodes: int = 16
    electrode_strategy: str = "uniform-angle"
    electrode_seed: int = 0
    electrode_counts: tuple[int, ...] = (4, 8, 16, 32, 64)
    snr_db: tuple[float, ...] = (50.0,)
    methods: tuple[str, ...] = METHODS
    lambda_min: float = 1e-15
    lambda_max: float = 1.0
    points_per_decade: int = 1
    seeds: tuple[int, ...] = (0,)
    max_iter: int = 5000
    tol_du: float = 1e-3
    theta: float = 1.0
    out_dir: str = "out"
    reproducible_csv: bool = True  # route wall times to timings.csv
    anisotropic_grid: bool = False

    def validate(self) -> None:
        self.geometry.validate()
        for m in self.methods:
            if m not in METHODS:
                raise ConfigurationError(f"unknown method '{m}' (choose from {METHODS})")
        if not self.methods:
            raise ConfigurationError("method list is empty")
        if not (0.0 < self.lambda_min <= self.lambda_max):
            raise ConfigurationError("need 0 < lambda_min <= lambda_max")
        if self.points_per_decade < 1:
            raise ConfigurationError("points_per_decade must be >= 1")
        if not self.snr_db or not self.seeds:
            raise ConfigurationError("need at least one SNR level and one seed")

    def lambda_grid(self) -> np.ndarray:
        lo = math.log10(self.lambda_min)
        hi = math.log10(self.lambda_max)
        n = int(round((hi - lo) * self.points_per_decade)) + 1
        return np.logspace(lo, hi, max(n, 1))


@dataclass
class Assets:
    """Immutable operator bundle shared by all methods of one experiment."""

    config: ExperimentConfig
    geometry: Geometry
    grid: TimeGrid
    tm: TransferMatrix  # built with the configured electrode count, full map kept
    mass_p1: object  # consistent epicardial P1 mass
    laplace_x: object  # negative-semidefinite surface Laplacian
    dtilde: np.ndarray
    mtilde: np.ndarray
    _norm_cache: dict = field(default_factory=dict)

    def metrics(self, method, lam_g, lam_t, snr_db, n_el, u, truth_u, seconds) -> MetricsReport:
        return MetricsReport(
            method=method, lam_gamma=lam_g, lam_t=lam_t, snr_db=snr_db, n_electrodes=n_el,
            re=metric_re(u, truth_u), cc=metric_cc(u, truth_u),
            vh=metric_vh(u, truth_u, self.mtilde, self.dtilde), seconds=seconds)

    def gradop(self, alpha: int, lam_g: float, lam_t: float) -> GradOp:
        op = GradOp.from_bounds(self.geometry.inv_mesh, self.geometry.bounds, self.grid,
                                AnisotropyWeights(lam_g, lam_t), alpha)
        op._norm = self._lipschitz(op, alpha, lam_g, lam_t)
        return op

    def _lipschitz(self, op: GradOp, alpha: int, lam_g: float, lam_t: float) -> float:
        # ||K|| is positively homogeneous in (lam_g, lam_t): cache one power
        # iteration per direction and rescale.
        if lam_g == 0.0 and lam_t == 0.0:
            return 0.0
        scale = max(lam_g, lam_t)
        key = (alpha, lam_g / scale, lam_t / scale)
        if key not in self._norm_cache:
            base = replace(op, weights=AnisotropyWeights(key[1], key[2]), _norm=None)
            # Step sizes only need ||K|| to a few digits; the clustered top of
            # the spectrum makes tighter tolerances needlessly slow here.
            self._norm_cache[key] = operator_norm(base, tol=1e-7, max_iter=30000)
        return scale * self._norm_cache[key]


def build_assets(config: ExperimentConfig) -> Assets:
    config.validate()
    geometry = build_geometry(config.geometry, config.n_electrodes,
                              config.electrode_strategy, config.electrode_seed)
    grid = config.sim.time_grid()
    cond = conductivity_inverse(geometry.inv_mesh, config.table)
    tm = build_transfer(geometry.inv_mesh, cond, geometry.bounds, geometry.electrodes,
                        keep_gamma=True)
    mass = assemble_surface_mass_p1(geometry.inv_mesh, geometry.bounds)
    stiff = assemble_surface_stiffness_p1(geometry.inv_mesh, geometry.bounds)
    dtilde = lump(assemble_time_mass_p1(grid), "lumped_time_mass").values
    mtilde = lump(mass, "lumped_space_mass").values
    return Assets(config=config, geometry=geometry, grid=grid, tm=tm,
                  mass_p1=mass, laplace_x=-stiff, dtilde=dtilde, mtilde=mtilde)


def simulate_fields(geometry: Geometry, sim: SimConfig, table: ConductivityTable
                    ) -> tuple[np.ndarray, np.ndarray]:
    """Activation times and extracellular potentials on the full mesh."""
    full = geometry.full_mesh
    cond = conductivity_full(full, table, geometry.config.heart_center)
    endo_radius = geometry.config.heart_radius - geometry.config.myocardium_thickness
    sources = source_nodes_from_angles(full, geometry.config.heart_center, endo_radius,
                                       sim.source_angles)
    metric = conduction_metric(full, sim.v_fiber, sim.v_cross, geometry.config.heart_center)
    phi = eikonal_activation(full, sources, metric)
    v_m = transmembrane_waveform(phi, sim.time_grid(), sim)
    v = pseudo_bidomain_solve(full, cond, v_m, sim.eps_pb)
    return phi, v


def reconstruct(assets: Assets, method: str, lam_g: float, lam_t: float, z: np.ndarray,
                seed: int = 0, tm: TransferMatrix | None = None,
                max_iter: int | None = None):
    """Dispatch one reconstruction; returns (u, seconds, trace-or-None)."""
    cfg = assets.config
    tm = assets.tm if tm is None else tm
    t0 = time.perf_counter()
    trace = None
    if method == "T0":
        u = solve_t0(tm, z, lam_g, assets.mass_p1)
    elif method == "T1S":
        u = solve_t1s(tm, z, lam_g, assets.laplace_x)
    elif method == "T1ST":
        u = solve_t1st(tm, z, lam_g, lam_t, assets.mass_p1, assets.laplace_x)
    elif method in _TV_ALPHA:
        op = assets.gradop(_TV_ALPHA[method], lam_g, lam_t)
        problem = InverseProblem(transfer=tm, z=z, gradop=op)
        params = PdhgParams(max_iter=cfg.max_iter if max_iter is None else max_iter,
                            tol_du=cfg.tol_du, theta=cfg.theta, seed=seed)
        u, trace = pdhg_solve(problem, params)
    else:
        raise ConfigurationError(f"unknown method '{method}'")
    return u, time.perf_counter() - t0, trace


def _lambda_pairs(method: str, lam_values, anisotropic: bool):
    """Grid points (lam_g, lam_t) for one method, ascending."""
    if method in ("T0", "T1S", "TVS1", "TVS2"):
        return [(float(l), 0.0) for l in lam_values]
    pairs = [(float(l), float(l)) for l in lam_values]
    if anisotropic:
        pairs = [(float(a), float(b)) for a in lam_values for b in lam_values]
        pairs.sort()
    return pairs


def grid_search(assets: Assets, method: str, lam_values, z: np.ndarray,
                truth_u: np.ndarray, snr_db: float, seed: int = 0,
                anisotropic: bool = False, tm: TransferMatrix | None = None
                ) -> tuple[MetricsReport, list[MetricsReport]]:
    """Evaluate every grid point; best row by V_h error, ties toward larger lambda."""
    pairs = _lambda_pairs(method, lam_values, anisotropic)
    if not pairs:
        raise ConfigurationError("empty lambda grid")
    n_el = (tm or assets.tm).n_electrodes
    rows = []
    best = None
    for lam_g, lam_t in pairs:
        u, seconds, _ = reconstruct(assets, method, lam_g, lam_t, z, seed=seed, tm=tm)
        row = assets.metrics(method, lam_g, lam_t, snr_db, n_el, u, truth_u, seconds)
        rows.append(row)
        if best is None or row.vh <= best.vh:
            best = row
    return best, rows


def _write_rows(path, rows: list[MetricsReport], reproducible: bool) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_row(seconds_override=0.0 if reproducible else None) + "\n")


def _write_timings(path, rows: list[MetricsReport]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for row in rows:
            fh.write(row.csv_row() + "\n")


def write_heatmap_ppm(u: np.ndarray, n_nodes: int, path, vmax: float | None = None) -> None:
    """Space-time field as a binary PPM image (angle horizontal, time vertical)."""
    img = np.asarray(u, dtype=np.float64).reshape(-1, n_nodes)
    if vmax is None:
        vmax = float(np.max(np.abs(img))) or 1.0
    x = np.clip(img / vmax, -1.0, 1.0)
    t = 0.5 * (x + 1.0)
    r = np.clip(2.0 * t, 0.0, 1.0)
    b = np.clip(2.0 * (1.0 - t), 0.0, 1.0)
    g = 1.0 - np.abs(x)
    rgb = np.stack((r, g, b), axis=-1)
    data = np.round(255.0 * rgb).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{img.shape[1]} {img.shape[0]}\n255\n".encode())
        fh.write(data.tobytes())


def run_experiment(config: ExperimentConfig) -> list[MetricsReport]:
    """Full protocol: simulate, grid-search every (SNR, seed, method), emit reports.

    Any stage failure removes the partial outputs and re-raises with the stage
    name attached.
    """
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    created: list[Path] = []

    def track(path) -> Path:
        created.append(Path(path))
        return Path(path)

    stage = "setup"
    try:
        stage = "geometry"
        assets = build_assets(config)
        save_mesh(assets.geometry.inv_mesh, assets.geometry.bounds,
                  assets.geometry.electrodes, track(out / "mesh_inverse.txt"))

        stage = "simulate"
        phi, v = simulate_fields(assets.geometry, config.sim, config.table)
        u_g, z_g = sample_truth(v, assets.geometry)
        first_noisy, first_info = add_noise(z_g, config.snr_db[0], config.seeds[0])
        bundle = TruthBundle(u_g=u_g, z_g=z_g, z_noisy=first_noisy, phi=phi,
                             noise=first_info, config_hash=config.sim.content_hash())
        save_truth_bundle(bundle, track(out / "truth_bundle.txt"))
        write_heatmap_ppm(u_g, assets.geometry.bounds.n_epi_nodes, track(out / "heatmap_GT.ppm"))

        stage = "reconstruct"
        lam_values = config.lambda_grid()
        rows: list[MetricsReport] = []
        grid_rows: list[MetricsReport] = []
        first_combo = True
        for snr in config.snr_db:
            for seed in config.seeds:
                z_noisy, _ = add_noise(z_g, snr, seed)
                for method in config.methods:
                    best, table = grid_search(assets, method, lam_values, z_noisy, u_g,
                                              snr, seed=seed,
                                              anisotropic=config.anisotropic_grid)
                    rows.append(best)
                    grid_rows.extend(table)
                    if first_combo:
                        u, _, trace = reconstruct(assets, method, best.lam_gamma,
                                                  best.lam_t, z_noisy, seed=seed)
                        write_heatmap_ppm(u, assets.geometry.bounds.n_epi_nodes,
                                          track(out / f"heatmap_{method}.ppm"))
                        if trace is not None:
                            trace.write_csv(track(out / f"trace_{method}.csv"))
                first_combo = False

        stage = "report"
        _write_rows(track(out / "metrics.csv"), rows, config.reproducible_csv)
        _write_rows(track(out / "gridsearch.csv"), grid_rows, config.reproducible_csv)
        if config.reproducible_csv:
            _write_timings(track(out / "timings.csv"), rows)
        return rows
    except Exception as exc:
        for path in created:
            if path.exists():
                path.unlink()
        raise StageError(stage, exc) from exc


def ablate_electrodes(config: ExperimentConfig) -> list[MetricsReport]:
    """Reconstruction quality versus electrode count at method-wise fixed lambda.

    The lambda values are anchored by a grid search at the configured electrode
    count (default 16); electrode sets are re-drawn per count and the transfer
    operator rows are re-restricted from the cached full surface map.
    """
    config.validate()
    n_gamma_needed = max(config.electrode_counts)
    assets = build_assets(config)
    if n_gamma_needed > assets.geometry.bounds.gamma_nodes.size:
        raise CapacityError(f"ablation asks for {n_gamma_needed} electrodes but Gamma has "
                            f"{assets.geometry.bounds.gamma_nodes.size} nodes")
    phi, v = simulate_fields(assets.geometry, config.sim, config.table)
    u_g, _ = sample_truth(v, assets.geometry)
    lam_values = config.lambda_grid()
    snr = config.snr_db[0]

    # Anchor lambdas at the configured electrode count.
    _, z_anchor = sample_truth(v, assets.geometry)
    anchored: dict[str, tuple[float, float]] = {}
    z_noisy, _ = add_noise(z_anchor, snr, config.seeds[0])
    for method in config.methods:
        best, _ = grid_search(assets, method, lam_values, z_noisy, u_g, snr,
                              seed=config.seeds[0], anisotropic=config.anisotropic_grid)
        anchored[method] = (best.lam_gamma, best.lam_t)

    rows: list[MetricsReport] = []
    gamma = assets.geometry.bounds.gamma_nodes
    for count in config.electrode_counts:
        electrodes = place_electrodes(assets.geometry.inv_mesh, assets.geometry.bounds,
                                      count, config.electrode_strategy, config.electrode_seed)
        tm = assets.tm.restrict(electrodes, gamma)
        full_el = assets.geometry.inv_to_full[electrodes.nodes]
        z_count = np.ascontiguousarray(v[:, full_el]).ravel()
        for seed in config.seeds:
            z_noisy, _ = add_noise(z_count, snr, seed)
            for method in config.methods:
                lam_g, lam_t = anchored[method]
                u, seconds, _ = reconstruct(assets, method, lam_g, lam_t, z_noisy,
                                            seed=seed, tm=tm)
                rows.append(assets.metrics(method, lam_g, lam_t, snr, count, u, u_g, seconds))
    return rows


def write_ablation_csv(rows: list[MetricsReport], path, reproducible: bool = True) -> None:
    _write_rows(path, rows, reproducible)


def summarize(rows: list[MetricsReport]) -> str:
    """Median metrics per (method, snr, electrode count), as a text table."""
    keys = sorted({(r.method, r.snr_db, r.n_electrodes) for r in rows},
                  key=lambda k: (k[1], k[2], METHODS.index(k[0]) if k[0] in METHODS else 99))
    lines = [f"{'method':8s} {'snr_db':>7s} {'n_el':>5s} {'re':>9s} {'cc':>9s} {'vh':>11s}"]
    for method, snr, n_el in keys:
        sel = [r for r in rows if (r.method, r.snr_db, r.n_electrodes) == (method, snr, n_el)]
        re_m = float(np.median([r.re for r in sel]))
        cc_m = float(np.median([r.cc for r in sel]))
        vh_m = float(np.median([r.vh for r in sel]))
        lines.append(f"{method:8s} {snr:7.1f} {n_el:5d} {re_m:9.4f} {cc_m:9.4f} {vh_m:11.4f}")
    return "\n".join(lines)
