"""Synthetic ground truth: eikonal activation, transmembrane waveform,
pseudo-bidomain extracellular potentials, sampling, and measurement noise.

The activation front is computed with a multi-source graph-Dijkstra
approximation of the anisotropic eikonal equation (first-order accurate: paths
are restricted to mesh edges, so distances are slightly overestimated on
coarse meshes).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import dijkstra

from .errors import (ConfigurationError, DimensionError, MeshFormatError,
                     SingularSystemError, UnreachableNodeError)
from .fem import ConductivityField, TimeGrid, assemble_mass_2d, assemble_stiffness
from .mesh import BLOOD, LUNGS, MYOCARDIUM, TORSO, Geometry, Mesh


@dataclass(frozen=True)
class ConductivityTable:
    """Per-region conductivities in S/m; myocardium pairs are (fiber, cross)."""

    torso: float = 0.22
    lungs: float = 0.03
    blood: float = 0.7
    myo_sigma_i: tuple[float, float] = (0.174, 0.0193)
    myo_sigma_e: tuple[float, float] = (0.625, 0.236)


@dataclass(frozen=True)
class SimConfig:
    """Ground-truth simulation parameters.

    Potentials in mV, times in ms, speeds in mm/ms.  Activation sources are
    given as angles on the endocardial side of the myocardium.
    """

    r0: float = -30.0  # resting transmembrane potential
    r1: float = 85.0  # plateau transmembrane potential
    steepness: float = 2.0  # waveform slope (1/ms)
    eps_pb: float = 1e-6  # zero-mean regularization of the extracellular solve
    source_angles: tuple[float, ...] = (0.0, 2.2)
    v_fiber: float = 0.6  # conduction speed along fibers
    v_cross: float = 0.3  # conduction speed across fibers
    t_end: float = 100.0
    n_steps: int = 100

    def __post_init__(self):
        if self.r1 <= self.r0:
            raise ConfigurationError("waveform needs r1 > r0")
        if self.eps_pb <= 0.0:
            raise ConfigurationError("eps_pb must be positive")
        if not self.source_angles:
            raise ConfigurationError("at least one activation source is required")
        if self.v_fiber <= 0.0 or self.v_cross <= 0.0:
            raise ConfigurationError("conduction speeds must be positive")

    def time_grid(self) -> TimeGrid:
        return TimeGrid.uniform(self.t_end, self.n_steps)

    def content_hash(self) -> str:
        text = repr((self.r0, self.r1, self.steepness, self.eps_pb, self.source_angles,
                     self.v_fiber, self.v_cross, self.t_end, self.n_steps))
        return hashlib.sha256(text.encode()).hexdigest()[:16]


def _fiber_frame(mesh: Mesh, heart_center) -> tuple[np.ndarray, np.ndarray]:
    """Circumferential fiber and radial cross directions per triangle centroid."""
    centroids = mesh.vertices[mesh.triangles].mean(axis=1)
    rel = centroids - np.asarray(heart_center)
    r = np.linalg.norm(rel, axis=1)
    r[r == 0.0] = 1.0
    radial = rel / r[:, None]
    fiber = np.column_stack((-radial[:, 1], radial[:, 0]))
    return fiber, radial


def _tensor(direction_a, direction_b, value_a, value_b) -> np.ndarray:
    ta = np.einsum("ti,tj->tij", direction_a, direction_a)
    tb = np.einsum("ti,tj->tij", direction_b, direction_b)
    return value_a[:, None, None] * ta + value_b[:, None, None] * tb


def conductivity_full(mesh: Mesh, table: ConductivityTable, heart_center) -> ConductivityField:
    """Bulk and intracellular tensors for the simulation mesh."""
    n_t = mesh.n_triangles
    fiber, cross = _fiber_frame(mesh, heart_center)
    iso = np.zeros(n_t)
    iso[mesh.regions == TORSO] = table.torso
    iso[mesh.regions == LUNGS] = table.lungs
    iso[mesh.regions == BLOOD] = table.blood

    myo = mesh.regions == MYOCARDIUM
    sig_i = np.zeros((n_t, 2, 2))
    sig = _tensor(fiber, cross, np.full(n_t, 0.0), np.full(n_t, 0.0))
    sig[~myo] = iso[~myo, None, None] * np.eye(2)[None]

    fi, ci = table.myo_sigma_i
    fe, ce = table.myo_sigma_e
    myo_i = _tensor(fiber[myo], cross[myo], np.full(myo.sum(), fi), np.full(myo.sum(), ci))
    myo_e = _tensor(fiber[myo], cross[myo], np.full(myo.sum(), fe), np.full(myo.sum(), ce))
    sig_i[myo] = myo_i
    sig[myo] = myo_i + myo_e

    values = [table.torso, table.lungs, table.blood, fi + fe, ci + ce]
    zeta = max(max(values), 1.0 / min(values))
    return ConductivityField(sigma=sig, sigma_i=sig_i, ellipticity=zeta)


def conductivity_inverse(mesh: Mesh, table: ConductivityTable) -> ConductivityField:
    """Isotropic bulk conductivity on the heartless mesh (torso and lungs)."""
    from .fem import isotropic_conductivity

    return isotropic_conductivity(mesh, {TORSO: table.torso, LUNGS: table.lungs})


def conduction_metric(mesh: Mesh, v_fiber: float, v_cross: float, heart_center) -> np.ndarray:
    """Per-triangle conduction speed tensors M = v_f^2 f f^T + v_c^2 c c^T."""
    fiber, cross = _fiber_frame(mesh, heart_center)
    n_t = mesh.n_triangles
    return _tensor(fiber, cross, np.full(n_t, v_fiber ** 2), np.full(n_t, v_cross ** 2))


def eikonal_activation(mesh: Mesh, sources: np.ndarray, metric: np.ndarray,
                       region: int = MYOCARDIUM) -> np.ndarray:
    """Multi-source anisotropic activation times via graph Dijkstra.

    Edge traversal cost is sqrt(e^T M^{-1} e) with M averaged over the edge's
    incident triangles of the given region.  Returns activation times (ms) on
    all mesh nodes, NaN outside the region's vertex set.

    Raises UnreachableNodeError if some region node cannot be reached.
    """
    sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
    tri_mask = mesh.regions == region
    tris = mesh.triangles[tri_mask]
    if tris.size == 0:
        raise DimensionError(f"mesh has no triangles of region {region}")
    met = metric[tri_mask]

    edges = {}
    for t, tri in enumerate(tris.tolist()):
        for a, b in ((0, 1), (1, 2), (2, 0)):
            key = (min(tri[a], tri[b]), max(tri[a], tri[b]))
            edges.setdefault(key, []).append(t)

    nodes = np.unique(tris)
    if not np.all(np.isin(sources, nodes)):
        raise ConfigurationError("activation sources must be vertices of the region")

    rows, cols, costs = [], [], []
    for (a, b), incident in edges.items():
        m = met[incident].mean(axis=0)
        e = mesh.vertices[b] - mesh.vertices[a]
        cost = math.sqrt(float(e @ np.linalg.solve(m, e)))
        rows.append(a)
        cols.append(b)
        costs.append(cost)
    graph = sp.coo_matrix((costs, (rows, cols)),
                          shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    dist = dijkstra(graph, directed=False, indices=sources)
    phi = np.min(np.atleast_2d(dist), axis=0)

    if np.any(~np.isfinite(phi[nodes])):
        raise UnreachableNodeError("part of the region is not connected to any source")
    out = np.full(mesh.n_vertices, np.nan)
    out[nodes] = phi[nodes]
    return out


def nearest_node(mesh: Mesh, point) -> int:
    d = np.linalg.norm(mesh.vertices - np.asarray(point), axis=1)
    return int(np.argmin(d))


def source_nodes_from_angles(mesh: Mesh, config_heart_center, endo_radius: float,
                             angles) -> np.ndarray:
    """Nodes on (or near) the endocardial circle at the requested angles."""
    cx, cy = config_heart_center
    pts = [(cx + endo_radius * math.cos(a), cy + endo_radius * math.sin(a)) for a in angles]
    return np.unique([nearest_node(mesh, p) for p in pts])


def transmembrane_waveform(phi: np.ndarray, grid: TimeGrid, cfg: SimConfig) -> np.ndarray:
    """Fixed depolarization waveform evaluated at nodes x time nodes.

    Returns (S+1, n) time-major; entries where phi is NaN are set to 0 (they
    never couple into the extracellular solve because sigma_i vanishes there).
    """
    phi = np.asarray(phi, dtype=np.float64)
    t = grid.nodes[:, None]
    with np.errstate(invalid="ignore"):
        v = cfg.r0 + 0.5 * (cfg.r1 - cfg.r0) * (np.tanh(cfg.steepness * (t - phi[None, :])) + 1.0)
    v[:, ~np.isfinite(phi)] = 0.0
    return v


def pseudo_bidomain_solve(mesh: Mesh, cond: ConductivityField, v_m: np.ndarray,
                          eps_pb: float) -> np.ndarray:
    """Extracellular potentials from transmembrane potentials, one elliptic
    solve per time node with a shared factorization.

    Weak form: (K_sigma + eps M) v = -K_{sigma_i} v_m with natural boundary
    conditions; eps > 0 removes the constant-kernel singularity.
    """
    if eps_pb <= 0.0:
        raise SingularSystemError("eps_pb = 0 leaves a pure Neumann (singular) system")
    v_m = np.asarray(v_m, dtype=np.float64)
    if v_m.ndim != 2 or v_m.shape[1] != mesh.n_vertices:
        raise DimensionError("v_m must be (n_time_nodes, n_mesh_nodes)")
    k_sig = assemble_stiffness(mesh, cond)
    k_i = assemble_stiffness(mesh, cond, tensor="sigma_i")
    mass = assemble_mass_2d(mesh)
    system = (k_sig + eps_pb * mass).tocsc()
    lu = spla.splu(system)
    rhs = -(k_i @ v_m.T)  # (n_nodes, S+1)
    return np.ascontiguousarray(lu.solve(rhs).T)


def sample_truth(v: np.ndarray, geometry: Geometry) -> tuple[np.ndarray, np.ndarray]:
    """Restrict the full-domain potentials to epicardial nodes and electrodes.

    Returns (u_g, z_g) as flat time-major vectors of lengths N_V*(S+1) and
    N_sigma*(S+1).
    """
    v = np.asarray(v)
    if v.ndim != 2 or v.shape[1] != geometry.full_mesh.n_vertices:
        raise DimensionError("v must be (n_time_nodes, n_full_mesh_nodes)")
    u_g = v[:, geometry.full_gammaH]
    z_g = v[:, geometry.full_electrodes]
    return np.ascontiguousarray(u_g).ravel(), np.ascontiguousarray(z_g).ravel()


@dataclass(frozen=True)
class NoiseInfo:
    """Realized noise levels for one draw (dB)."""

    target_snr_db: float  # requested level (inf for no noise)
    snr_db_clean: float  # 20 log10(||z_clean|| / ||n||)
    snr_db_noisy: float  # 20 log10(||z_noisy|| / ||n||)
    seed: int


def add_noise(z_clean: np.ndarray, snr_db: float | None, seed: int
              ) -> tuple[np.ndarray, NoiseInfo]:
    """Additive white Gaussian noise scaled to a target SNR.

    The noise norm is set against the clean signal norm; the realized level is
    also reported with the noisy norm in the numerator, since both conventions
    appear in practice.  ``snr_db=None`` or infinity returns the input.
    """
    z_clean = np.asarray(z_clean, dtype=np.float64)
    if snr_db is None or np.isinf(snr_db):
        return z_clean.copy(), NoiseInfo(np.inf, np.inf, np.inf, seed)
    z_norm = float(np.linalg.norm(z_clean))
    if z_norm == 0.0:
        raise DimensionError("cannot scale noise against an all-zero signal")
    rng = np.random.default_rng(seed)
    n = rng.standard_normal(z_clean.shape)
    n *= z_norm * 10.0 ** (-snr_db / 20.0) / np.linalg.norm(n)
    z_noisy = z_clean + n
    n_norm = float(np.linalg.norm(n))
    return z_noisy, NoiseInfo(
        target_snr_db=float(snr_db),
        snr_db_clean=20.0 * math.log10(z_norm / n_norm),
        snr_db_noisy=20.0 * math.log10(float(np.linalg.norm(z_noisy)) / n_norm),
        seed=seed,
    )


@dataclass(frozen=True)
class TruthBundle:
    """Simulated ground truth plus the noisy measurements used downstream."""

    u_g: np.ndarray  # epicardial truth, N_V*(S+1)
    z_g: np.ndarray  # clean electrode trace, N_sigma*(S+1)
    z_noisy: np.ndarray
    phi: np.ndarray  # activation times on the full mesh (NaN off-myocardium)
    noise: NoiseInfo
    config_hash: str


def simulate_truth(geometry: Geometry, sim: SimConfig, table: ConductivityTable,
                   snr_db: float | None = None, noise_seed: int = 0) -> TruthBundle:
    """Full pipeline: activation -> waveform -> extracellular solve -> sampling."""
    full = geometry.full_mesh
    cond = conductivity_full(full, table, geometry.config.heart_center)
    endo_radius = geometry.config.heart_radius - geometry.config.myocardium_thickness
    sources = source_nodes_from_angles(full, geometry.config.heart_center,
                                       endo_radius, sim.source_angles)
    metric = conduction_metric(full, sim.v_fiber, sim.v_cross, geometry.config.heart_center)
    phi = eikonal_activation(full, sources, metric)
    grid = sim.time_grid()
    v_m = transmembrane_waveform(phi, grid, sim)
    v = pseudo_bidomain_solve(full, cond, v_m, sim.eps_pb)
    u_g, z_g = sample_truth(v, geometry)
    z_noisy, info = add_noise(z_g, snr_db, noise_seed)
    return TruthBundle(u_g=u_g, z_g=z_g, z_noisy=z_noisy, phi=phi, noise=info,
                       config_hash=sim.content_hash())


def save_truth_bundle(bundle: TruthBundle, path) -> None:
    """Plain-text bundle with provenance header and one section per field."""
    def fmt(arr):
        return "\n".join(repr(float(x)) for x in arr)

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("ecgi-truth v1\n")
        fh.write(f"config {bundle.config_hash} seed {bundle.noise.seed} "
                 f"snr-target {bundle.noise.target_snr_db!r} "
                 f"snr-clean {bundle.noise.snr_db_clean!r} "
                 f"snr-noisy {bundle.noise.snr_db_noisy!r}\n")
        for name, arr in (("u_g", bundle.u_g), ("z_g", bundle.z_g),
                          ("z_noisy", bundle.z_noisy), ("phi", bundle.phi)):
            fh.write(f"{name} {arr.size}\n")
            fh.write(fmt(arr) + "\n")


def load_truth_bundle(path) -> TruthBundle:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "ecgi-truth v1":
        raise MeshFormatError("bad truth bundle header", line=1)
    meta = lines[1].split()
    if len(meta) != 10 or meta[0] != "config":
        raise MeshFormatError("bad truth bundle provenance line", line=2)
    info = NoiseInfo(target_snr_db=float(meta[5]), snr_db_clean=float(meta[7]),
                     snr_db_noisy=float(meta[9]), seed=int(meta[3]))
    pos = 2
    arrays = {}
    for _ in range(4):
        name, count = lines[pos].split()
        count = int(count)
        vals = np.array([float(x) for x in lines[pos + 1:pos + 1 + count]])
        if vals.size != count:
            raise MeshFormatError(f"section {name} truncated", line=pos + 1)
        arrays[name] = vals
        pos += 1 + count
    return TruthBundle(u_g=arrays["u_g"], z_g=arrays["z_g"], z_noisy=arrays["z_noisy"],
                       phi=arrays["phi"], noise=info, config_hash=meta[1])
