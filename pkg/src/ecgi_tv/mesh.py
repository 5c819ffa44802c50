"""Synthetic 2D torso-heart geometry: generation, boundary extraction, electrodes, file I/O.

The generator produces a single FULL mesh (torso annulus + myocardium annulus +
blood disk, optional lung stamps).  ``restrict_to_torso`` strips the cardiac
triangles to obtain the mesh used by the inverse problem; both meshes share the
epicardial node positions exactly.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigurationError, MeshFormatError, TopologyError

# Region codes, in file-format name order.
TORSO, LUNGS, BLOOD, MYOCARDIUM = 0, 1, 2, 3
REGION_NAMES = ("torso", "lungs", "blood", "myocardium")
_REGION_CODES = {name: code for code, name in enumerate(REGION_NAMES)}


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class LungEllipse:
    """Axis-aligned ellipse used to stamp lung triangles."""

    center: tuple[float, float]
    semi_x: float
    semi_y: float

    def contains(self, pts: np.ndarray) -> np.ndarray:
        dx = (pts[:, 0] - self.center[0]) / self.semi_x
        dy = (pts[:, 1] - self.center[1]) / self.semi_y
        return dx * dx + dy * dy <= 1.0


def default_lungs() -> tuple[LungEllipse, LungEllipse]:
    return (
        LungEllipse(center=(-45.0, 38.0), semi_x=28.0, semi_y=24.0),
        LungEllipse(center=(-45.0, -38.0), semi_x=28.0, semi_y=24.0),
    )


@dataclass(frozen=True)
class GeometryConfig:
    """Parameters of the concentric-circle torso model (lengths in mm)."""

    torso_radius: float = 100.0
    heart_radius: float = 25.0
    heart_center: tuple[float, float] = (10.0, 0.0)
    myocardium_thickness: float = 8.0
    angular_resolution: int = 210
    radial_resolution: int = 12
    lungs: tuple[LungEllipse, ...] = field(default_factory=default_lungs)

    def validate(self) -> None:
        if self.angular_resolution < 8:
            raise ConfigurationError("angular_resolution must be >= 8")
        if self.radial_resolution < 1:
            raise ConfigurationError("radial_resolution must be >= 1")
        if not 0.0 < self.myocardium_thickness < self.heart_radius:
            raise ConfigurationError("myocardium thickness must lie in (0, heart_radius)")
        cx, cy = self.heart_center
        if math.hypot(cx, cy) + self.heart_radius >= self.torso_radius:
            raise ConfigurationError("heart region must lie strictly inside the torso")
        for lung in self.lungs:
            self._validate_lung(lung)

    def _validate_lung(self, lung: LungEllipse) -> None:
        # Lungs must stay inside the torso and away from the heart disk.
        t = np.linspace(0.0, 2.0 * np.pi, 256, endpoint=False)
        boundary = np.column_stack(
            (
                lung.center[0] + lung.semi_x * np.cos(t),
                lung.center[1] + lung.semi_y * np.sin(t),
            )
        )
        if np.any(np.hypot(boundary[:, 0], boundary[:, 1]) >= self.torso_radius):
            raise ConfigurationError("lung ellipse exits the torso")
        cx, cy = self.heart_center
        if np.any(np.hypot(boundary[:, 0] - cx, boundary[:, 1] - cy) <= self.heart_radius):
            raise ConfigurationError("lung ellipse overlaps the heart region")
        if lung.contains(np.array([[cx, cy]]))[0]:
            raise ConfigurationError("lung ellipse encloses the heart region")


@dataclass(frozen=True)
class Mesh:
    """Conforming triangulation with per-triangle region labels."""

    vertices: np.ndarray  # (n_vertices, 2) float64
    triangles: np.ndarray  # (n_triangles, 3) int32
    regions: np.ndarray  # (n_triangles,) int8 region codes

    def __post_init__(self):
        object.__setattr__(self, "vertices", _readonly(np.asarray(self.vertices, dtype=np.float64)))
        object.__setattr__(self, "triangles", _readonly(np.asarray(self.triangles, dtype=np.int32)))
        object.__setattr__(self, "regions", _readonly(np.asarray(self.regions, dtype=np.int8)))

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        return 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1])
        )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.vertices.tobytes())
        h.update(self.triangles.tobytes())
        h.update(self.regions.tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True)
class BoundarySets:
    """Node partition of an inverse-problem mesh into Gamma, Gamma_H, interior."""

    gamma_nodes: np.ndarray  # ordered CCW along the outer loop
    gammaH_nodes: np.ndarray  # ordered CCW along the inner loop, start near angle 0
    interior_nodes: np.ndarray
    gammaH_segments: np.ndarray  # (N_Q, 2) consecutive node pairs of the inner loop
    gammaH_normals: np.ndarray  # (N_Q, 2) unit normals, outward w.r.t. the domain

    def __post_init__(self):
        for name in ("gamma_nodes", "gammaH_nodes", "interior_nodes", "gammaH_segments"):
            object.__setattr__(self, name, _readonly(np.asarray(getattr(self, name), dtype=np.int32)))
        object.__setattr__(self, "gammaH_normals", _readonly(np.asarray(self.gammaH_normals, dtype=np.float64)))

    @property
    def n_epi_nodes(self) -> int:
        return self.gammaH_nodes.shape[0]

    @property
    def n_epi_segments(self) -> int:
        return self.gammaH_segments.shape[0]


@dataclass(frozen=True)
class ElectrodeSet:
    """Measurement nodes on the torso surface."""

    nodes: np.ndarray
    strategy: str
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "nodes", _readonly(np.asarray(self.nodes, dtype=np.int32)))

    @property
    def count(self) -> int:
        return self.nodes.shape[0]


def _band_triangles(inner: np.ndarray, outer: np.ndarray) -> np.ndarray:
    """Triangulate the band between two same-length node rings (indices, CCW)."""
    n = inner.shape[0]
    jn = np.roll(np.arange(n), -1)
    t1 = np.column_stack((inner, outer, outer[jn]))
    t2 = np.column_stack((inner, outer[jn], inner[jn]))
    return np.vstack((t1, t2))


def generate_torso_2d(config: GeometryConfig) -> Mesh:
    """Build the FULL simulation mesh (torso + myocardium + blood).

    The mesh is a polar grid: all rings carry ``angular_resolution`` nodes at
    the same angles, so adjacent rings always form conforming bands.  Rings
    between the epicardial circle and the torso circle are linear blends of
    the two (the circles need not be concentric).
    """
    config.validate()
    n_a = config.angular_resolution
    n_r = config.radial_resolution
    cx, cy = config.heart_center
    r_h = config.heart_radius
    r_blood = r_h - config.myocardium_thickness
    theta = 2.0 * np.pi * np.arange(n_a) / n_a
    unit = np.column_stack((np.cos(theta), np.sin(theta)))

    dr = (config.torso_radius - r_h) / n_r
    n_myo = max(1, round(config.myocardium_thickness / dr))
    n_blood = max(1, round(r_blood / dr))

    verts = [np.array([[cx, cy]])]  # node 0: heart center
    rings = []  # node-index arrays, from innermost ring outwards
    next_idx = 1

    def add_ring(points):
        nonlocal next_idx
        verts.append(points)
        idx = np.arange(next_idx, next_idx + n_a, dtype=np.int64)
        rings.append(idx)
        next_idx += n_a
        return idx

    blood_rings = [add_ring(np.array([cx, cy]) + (r_blood * k / n_blood) * unit)
                   for k in range(1, n_blood + 1)]
    myo_rings = [add_ring(np.array([cx, cy]) + (r_blood + config.myocardium_thickness * k / n_myo) * unit)
                 for k in range(1, n_myo + 1)]  # last ring is Gamma_H
    epi = np.array([cx, cy]) + r_h * unit
    outer = config.torso_radius * unit
    torso_rings = []
    for k in range(1, n_r + 1):
        s = k / n_r
        torso_rings.append(add_ring((1.0 - s) * epi + s * outer))

    vertices = np.vstack(verts)

    # fan around the center node; (center, ring_j, ring_{j+1}) is CCW
    tris = [np.column_stack((np.zeros(n_a, dtype=np.int64), blood_rings[0], np.roll(blood_rings[0], -1)))]
    regs = [np.full(n_a, BLOOD, dtype=np.int8)]

    all_rings = blood_rings + myo_rings + torso_rings
    region_per_band = ([BLOOD] * (n_blood - 1) + [MYOCARDIUM] * n_myo + [TORSO] * n_r)
    for band, (inner, outer_ring) in enumerate(zip(all_rings[:-1], all_rings[1:])):
        t = _band_triangles(inner, outer_ring)
        tris.append(t)
        regs.append(np.full(t.shape[0], region_per_band[band], dtype=np.int8))

    triangles = np.vstack(tris)
    regions = np.concatenate(regs)

    # Stamp lungs by centroid containment (torso triangles only).
    if config.lungs:
        centroids = vertices[triangles].mean(axis=1)
        for lung in config.lungs:
            inside = lung.contains(centroids) & (regions == TORSO)
            regions[inside] = LUNGS

    mesh = Mesh(vertices=vertices, triangles=triangles, regions=regions)
    if np.any(mesh.signed_areas() <= 0.0):
        raise ConfigurationError("degenerate configuration produced non-positive triangle areas")
    return mesh


def restrict_to_torso(mesh: Mesh) -> tuple[Mesh, np.ndarray]:
    """Drop cardiac triangles; returns the inverse-problem mesh and the node map.

    ``node_map[k]`` is the index in ``mesh`` of node ``k`` of the restricted
    mesh, so epicardial node positions coincide bit-exactly.
    """
    keep = (mesh.regions == TORSO) | (mesh.regions == LUNGS)
    tris = mesh.triangles[keep]
    used = np.unique(tris)
    remap = np.full(mesh.n_vertices, -1, dtype=np.int64)
    remap[used] = np.arange(used.shape[0])
    sub = Mesh(vertices=mesh.vertices[used], triangles=remap[tris], regions=mesh.regions[keep])
    return sub, used.astype(np.int32)


def _boundary_loops(mesh: Mesh) -> list[np.ndarray]:
    """Ordered node loops of edges incident to exactly one triangle."""
    tris = mesh.triangles
    edges = np.vstack((tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]))
    key = np.sort(edges, axis=1)
    _, first, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 2):
        raise TopologyError("non-manifold edge shared by more than two triangles")
    boundary = edges[first[counts == 1]]  # directed as in the (CCW) triangles

    nxt = {}
    for a, b in boundary:
        if int(a) in nxt:
            raise TopologyError("boundary is not a disjoint union of simple loops")
        nxt[int(a)] = int(b)
    loops = []
    remaining = set(nxt)
    while remaining:
        start = min(remaining)
        loop = [start]
        remaining.discard(start)
        node = nxt[start]
        while node != start:
            loop.append(node)
            remaining.discard(node)
            node = nxt[node]
        loops.append(np.asarray(loop, dtype=np.int64))
    return loops


def _loop_signed_area(vertices: np.ndarray, loop: np.ndarray) -> float:
    p = vertices[loop]
    q = vertices[np.roll(loop, -1)]
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


def _orient_ccw_from_angle0(vertices: np.ndarray, loop: np.ndarray) -> np.ndarray:
    """Orient a loop counterclockwise and rotate it to start nearest angle 0."""
    if _loop_signed_area(vertices, loop) < 0.0:
        loop = loop[::-1]
    center = vertices[loop].mean(axis=0)
    rel = vertices[loop] - center
    ang = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
    ang = np.minimum(ang, 2.0 * np.pi - ang)  # distance to angle 0
    return np.roll(loop, -int(np.argmin(ang)))


def extract_boundary_sets(mesh: Mesh) -> BoundarySets:
    """Classify boundary loops of an inverse-problem mesh into Gamma and Gamma_H.

    Raises TopologyError unless the mesh has exactly two boundary loops (outer
    torso surface and inner epicardium).
    """
    loops = _boundary_loops(mesh)
    if len(loops) != 2:
        raise TopologyError(f"expected 2 boundary loops, found {len(loops)}")
    areas = [abs(_loop_signed_area(mesh.vertices, lp)) for lp in loops]
    outer = loops[int(np.argmax(areas))]
    inner = loops[1 - int(np.argmax(areas))]

    gamma = _orient_ccw_from_angle0(mesh.vertices, outer)
    gamma_h = _orient_ccw_from_angle0(mesh.vertices, inner)

    n_q = gamma_h.shape[0]
    segments = np.column_stack((gamma_h, np.roll(gamma_h, -1)))
    a = mesh.vertices[segments[:, 0]]
    b = mesh.vertices[segments[:, 1]]
    tangent = b - a
    tangent /= np.linalg.norm(tangent, axis=1)[:, None]
    # CCW inner loop: the domain lies outside the loop, so the outward normal
    # of the domain points to the left of travel (into the heart).
    normals = np.column_stack((-tangent[:, 1], tangent[:, 0]))

    on_boundary = np.zeros(mesh.n_vertices, dtype=bool)
    on_boundary[gamma] = True
    on_boundary[gamma_h] = True
    interior = np.flatnonzero(~on_boundary)

    return BoundarySets(
        gamma_nodes=gamma,
        gammaH_nodes=gamma_h,
        interior_nodes=interior,
        gammaH_segments=segments,
        gammaH_normals=normals,
    )


def place_electrodes(mesh: Mesh, bounds: BoundarySets, n: int, strategy: str = "uniform-angle",
                     seed: int = 0) -> ElectrodeSet:
    """Pick n distinct Gamma nodes, either at equispaced angles or at random."""
    gamma = bounds.gamma_nodes
    if n < 1:
        raise ConfigurationError("electrode count must be >= 1")
    if n > gamma.shape[0]:
        raise CapacityError(f"requested {n} electrodes but Gamma has {gamma.shape[0]} nodes")
    if strategy == "uniform-angle":
        center = mesh.vertices[gamma].mean(axis=0)
        rel = mesh.vertices[gamma] - center
        ang = np.mod(np.arctan2(rel[:, 1], rel[:, 0]), 2.0 * np.pi)
        chosen = []
        taken = np.zeros(gamma.shape[0], dtype=bool)
        for k in range(n):
            target = 2.0 * np.pi * k / n
            d = np.abs(ang - target)
            d = np.minimum(d, 2.0 * np.pi - d)
            d[taken] = np.inf
            j = int(np.argmin(d))
            taken[j] = True
            chosen.append(j)
        nodes = gamma[np.sort(chosen)]
    elif strategy == "random":
        rng = np.random.default_rng(seed)
        pick = rng.choice(gamma.shape[0], size=n, replace=False)
        nodes = gamma[np.sort(pick)]
    else:
        raise ConfigurationError(f"unknown electrode strategy '{strategy}'")
    return ElectrodeSet(nodes=nodes, strategy=strategy, seed=seed)


@dataclass(frozen=True)
class Geometry:
    """Paired simulation/inverse meshes with shared epicardial nodes."""

    config: GeometryConfig
    full_mesh: Mesh
    inv_mesh: Mesh
    inv_to_full: np.ndarray  # inverse-mesh node index -> full-mesh node index
    bounds: BoundarySets  # on inv_mesh
    electrodes: ElectrodeSet  # on inv_mesh

    @property
    def full_gammaH(self) -> np.ndarray:
        """Full-mesh indices of the epicardial nodes, in bounds order."""
        return self.inv_to_full[self.bounds.gammaH_nodes]

    @property
    def full_electrodes(self) -> np.ndarray:
        return self.inv_to_full[self.electrodes.nodes]


def build_geometry(config: GeometryConfig, n_electrodes: int = 16,
                   strategy: str = "uniform-angle", seed: int = 0) -> Geometry:
    full = generate_torso_2d(config)
    inv, inv_to_full = restrict_to_torso(full)
    bounds = extract_boundary_sets(inv)
    electrodes = place_electrodes(inv, bounds, n_electrodes, strategy, seed)
    return Geometry(config=config, full_mesh=full, inv_mesh=inv, inv_to_full=inv_to_full,
                    bounds=bounds, electrodes=electrodes)


# ---------------------------------------------------------------------------
# Plain-text mesh file format ("ecgi-mesh v1")
# ---------------------------------------------------------------------------

def save_mesh(mesh: Mesh, bounds: BoundarySets, electrodes: ElectrodeSet, path) -> None:
    lines = ["ecgi-mesh v1"]
    lines.append(f"vertices {mesh.n_vertices}")
    for i, (x, y) in enumerate(mesh.vertices):
        lines.append(f"{i} {float(x)!r} {float(y)!r}")
    lines.append(f"triangles {mesh.n_triangles}")
    for i, ((a, b, c), r) in enumerate(zip(mesh.triangles, mesh.regions)):
        lines.append(f"{i} {a} {b} {c} {REGION_NAMES[r]}")
    lines.append(f"gamma {bounds.gamma_nodes.shape[0]}")
    lines.extend(str(i) for i in bounds.gamma_nodes)
    lines.append(f"gammaH {bounds.gammaH_nodes.shape[0]}")
    lines.extend(str(i) for i in bounds.gammaH_nodes)
    lines.append(f"electrodes {electrodes.count} {electrodes.strategy} {electrodes.seed}")
    lines.extend(str(i) for i in electrodes.nodes)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class _LineReader:
    def __init__(self, path):
        with open(path, encoding="utf-8") as fh:
            self.lines = fh.read().splitlines()
        self.pos = 0

    def next(self) -> tuple[int, str]:
        while self.pos < len(self.lines):
            line = self.lines[self.pos].strip()
            self.pos += 1
            if line:
                return self.pos, line
        raise MeshFormatError("unexpected end of file", line=self.pos)


def _parse_section_header(lineno, line, name, extra=0):
    parts = line.split()
    if parts[0] != name or len(parts) < 2 + extra:
        raise MeshFormatError(f"expected '{name} <count>' header, got '{line}'", line=lineno)
    try:
        count = int(parts[1])
    except ValueError:
        raise MeshFormatError(f"bad count in '{line}'", line=lineno)
    return count, parts[2:]


def load_mesh(path) -> tuple[Mesh, BoundarySets, ElectrodeSet]:
    """Parse an ecgi-mesh v1 file; inverse of save_mesh."""
    rd = _LineReader(path)
    lineno, line = rd.next()
    if line != "ecgi-mesh v1":
        raise MeshFormatError(f"bad header '{line}'", line=lineno)

    lineno, line = rd.next()
    n_v, _ = _parse_section_header(lineno, line, "vertices")
    verts = np.empty((n_v, 2))
    for k in range(n_v):
        lineno, line = rd.next()
        parts = line.split()
        try:
            idx = int(parts[0])
            verts[idx] = (float(parts[1]), float(parts[2]))
        except (IndexError, ValueError):
            raise MeshFormatError(f"bad vertex line '{line}'", line=lineno)
        if idx != k:
            raise MeshFormatError(f"vertex index {idx} out of order", line=lineno)

    lineno, line = rd.next()
    n_t, _ = _parse_section_header(lineno, line, "triangles")
    tris = np.empty((n_t, 3), dtype=np.int64)
    regions = np.empty(n_t, dtype=np.int8)
    for k in range(n_t):
        lineno, line = rd.next()
        parts = line.split()
        try:
            idx = int(parts[0])
            tri = [int(parts[1]), int(parts[2]), int(parts[3])]
            regions[k] = _REGION_CODES[parts[4]]
        except (IndexError, ValueError, KeyError):
            raise MeshFormatError(f"bad triangle line '{line}'", line=lineno)
        if idx != k:
            raise MeshFormatError(f"triangle index {idx} out of order", line=lineno)
        if any(v < 0 or v >= n_v for v in tri):
            raise MeshFormatError(f"triangle references nonexistent vertex: '{line}'", line=lineno)
        tris[k] = tri

    def read_index_section(name):
        lno, hline = rd.next()
        count, extra = _parse_section_header(lno, hline, name)
        out = np.empty(count, dtype=np.int64)
        for k in range(count):
            lno, iline = rd.next()
            try:
                out[k] = int(iline)
            except ValueError:
                raise MeshFormatError(f"bad index '{iline}' in section {name}", line=lno)
            if out[k] < 0 or out[k] >= n_v:
                raise MeshFormatError(f"index {out[k]} out of range in section {name}", line=lno)
        return out, extra

    gamma, _ = read_index_section("gamma")
    gamma_h, _ = read_index_section("gammaH")
    el_nodes, extra = read_index_section("electrodes")
    if len(extra) != 2:
        raise MeshFormatError("electrodes header must carry strategy and seed")
    strategy, seed_text = extra
    try:
        seed = int(seed_text)
    except ValueError:
        raise MeshFormatError(f"bad electrode seed '{seed_text}'")

    mesh = Mesh(vertices=verts, triangles=tris, regions=regions)

    # Derived BoundarySets fields are recomputed from the stored loops.
    segments = np.column_stack((gamma_h, np.roll(gamma_h, -1)))
    a = mesh.vertices[segments[:, 0]]
    b = mesh.vertices[segments[:, 1]]
    tangent = b - a
    norms = np.linalg.norm(tangent, axis=1)
    if np.any(norms == 0.0):
        raise MeshFormatError("gammaH loop contains a zero-length segment")
    tangent /= norms[:, None]
    normals = np.column_stack((-tangent[:, 1], tangent[:, 0]))
    on_boundary = np.zeros(n_v, dtype=bool)
    on_boundary[gamma] = True
    on_boundary[gamma_h] = True
    interior = np.flatnonzero(~on_boundary)
    bounds = BoundarySets(gamma_nodes=gamma, gammaH_nodes=gamma_h, interior_nodes=interior,
                          gammaH_segments=segments, gammaH_normals=normals)
    electrodes = ElectrodeSet(nodes=el_nodes, strategy=strategy, seed=seed)
    return mesh, bounds, electrodes
