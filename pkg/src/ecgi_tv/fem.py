"""P1/P0 finite element assembly: stiffness, mass, lumped mass, quadrature weights.

All element integrals are exact closed forms (P1 gradients are constant per
triangle, 1D hat-function products integrate analytically), so no numerical
quadrature tolerance enters the assembled objects.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError
from .mesh import BoundarySets, Mesh, MYOCARDIUM

WEIGHT_KINDS = (
    "lumped_space_mass",   # diag of M^P1 row sums over Gamma_H
    "lumped_time_mass",    # diag of D^P1 row sums over the time grid
    "space_p0",            # segment lengths |L_l|
    "time_p0",             # interval lengths |J_j|
    "time_quadrature",     # nodal time weights d_s
    "space_quadrature",    # nodal space weights m_i
    "lumped",              # generic row-sum lumping
)


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing time nodes t_0 < ... < t_S (ms).

    S = 0 (a single node) is allowed as a degenerate grid so purely spatial
    operators can reuse the same plumbing; the TV solver itself needs S >= 1.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64)
        if nodes.ndim != 1 or nodes.size < 1:
            raise DimensionError("time grid needs at least one node")
        if np.any(np.diff(nodes) <= 0.0):
            raise DimensionError("time nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def uniform(cls, t_end: float, n_intervals: int, t_start: float = 0.0) -> "TimeGrid":
        return cls(np.linspace(t_start, t_end, n_intervals + 1))

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def span(self) -> float:
        return float(self.nodes[-1] - self.nodes[0])


@dataclass(frozen=True)
class DiagonalWeights:
    """Positive diagonal weight vector with a semantic tag."""

    values: np.ndarray
    kind: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kind '{self.kind}'")
        if np.any(values <= 0.0) or not np.all(np.isfinite(values)):
            raise ValueError(f"{self.kind} weights must be strictly positive and finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class ConductivityField:
    """Per-triangle symmetric 2x2 conductivity tensors (S/m).

    ``sigma`` is the bulk tensor (intra + extra), ``sigma_i`` the intracellular
    part; sigma_i vanishes outside the myocardium.
    """

    sigma: np.ndarray  # (n_triangles, 2, 2)
    sigma_i: np.ndarray  # (n_triangles, 2, 2)
    ellipticity: float  # recorded bound: eigenvalues of sigma lie in [1/z, z]

    def __post_init__(self):
        object.__setattr__(self, "sigma", np.ascontiguousarray(self.sigma, dtype=np.float64))
        object.__setattr__(self, "sigma_i", np.ascontiguousarray(self.sigma_i, dtype=np.float64))

    def validate(self, mesh: Mesh) -> None:
        for name in ("sigma", "sigma_i"):
            t = getattr(self, name)
            if t.shape != (mesh.n_triangles, 2, 2):
                raise DimensionError(f"{name} must have shape (n_triangles, 2, 2)")
            if not np.allclose(t, np.transpose(t, (0, 2, 1)), atol=0.0):
                raise ValueError(f"{name} tensors must be symmetric")
        ev = np.linalg.eigvalsh(self.sigma)
        z = self.ellipticity
        if np.any(ev < 1.0 / z - 1e-12) or np.any(ev > z + 1e-12):
            raise ValueError("sigma eigenvalues violate the recorded ellipticity bound")
        outside = mesh.regions != MYOCARDIUM
        if np.any(self.sigma_i[outside] != 0.0):
            raise ValueError("sigma_i must vanish outside the myocardium")

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.sigma.tobytes())
        h.update(self.sigma_i.tobytes())
        return h.hexdigest()[:16]


def isotropic_conductivity(mesh: Mesh, values_by_region: dict[int, float],
                           ellipticity: float | None = None) -> ConductivityField:
    """Isotropic bulk conductivity per region code; sigma_i = 0 everywhere."""
    vals = np.array([values_by_region[int(r)] for r in mesh.regions])
    sigma = np.zeros((mesh.n_triangles, 2, 2))
    sigma[:, 0, 0] = vals
    sigma[:, 1, 1] = vals
    if ellipticity is None:
        ellipticity = max(vals.max(), 1.0 / vals.min())
    return ConductivityField(sigma=sigma, sigma_i=np.zeros_like(sigma), ellipticity=ellipticity)


def _p1_triangle_gradients(mesh: Mesh):
    """Constant P1 basis gradients and areas for every triangle."""
    p = mesh.vertices[mesh.triangles]  # (n_t, 3, 2)
    e1 = p[:, 1] - p[:, 0]
    e2 = p[:, 2] - p[:, 0]
    det = e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0]
    area = 0.5 * det
    # grad lambda_i: rows of inv([e1 e2])^T applied to reference gradients
    inv = np.empty((mesh.n_triangles, 2, 2))
    inv[:, 0, 0] = e2[:, 1] / det
    inv[:, 0, 1] = -e2[:, 0] / det
    inv[:, 1, 0] = -e1[:, 1] / det
    inv[:, 1, 1] = e1[:, 0] / det
    ref = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])  # (3, 2) reference gradients
    grads = np.einsum("ki,tij->tkj", ref, inv)  # (n_t, 3, 2)
    return grads, area


def assemble_stiffness(mesh: Mesh, cond: ConductivityField,
                       rows: np.ndarray | None = None,
                       cols: np.ndarray | None = None,
                       tensor: str = "sigma") -> sp.csr_matrix:
    """Global P1 stiffness with per-triangle tensor conductivity.

    Entry (i, j) integrates sigma grad(phi_i) . grad(phi_j) over all triangles.
    ``rows``/``cols`` restrict the result to index blocks after assembly.
    """
    grads, area = _p1_triangle_gradients(mesh)
    sig = getattr(cond, tensor)
    sg = np.einsum("tij,tkj->tki", sig, grads)  # sigma @ grad, (n_t, 3, 2)
    local = np.einsum("tki,tli->tkl", grads, sg) * area[:, None, None]
    local = 0.5 * (local + np.transpose(local, (0, 2, 1)))  # bit-exact symmetry
    tri = mesh.triangles
    i_idx = np.repeat(tri, 3, axis=1).ravel()
    j_idx = np.tile(tri, (1, 3)).ravel()
    a = sp.coo_matrix((local.ravel(), (i_idx, j_idx)),
                      shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    a.sum_duplicates()
    a.eliminate_zeros()
    if rows is not None or cols is not None:
        if rows is None or cols is None:
            raise DimensionError("rows and cols must be given together")
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        if rows.size == 0 or cols.size == 0:
            raise DimensionError("empty row or column index set")
        a = a[rows][:, cols].tocsr()
    return a


def assemble_mass_2d(mesh: Mesh) -> sp.csr_matrix:
    """Consistent P1 mass matrix over all triangles."""
    _, area = _p1_triangle_gradients(mesh)
    base = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    local = area[:, None, None] * base[None]
    tri = mesh.triangles
    i_idx = np.repeat(tri, 3, axis=1).ravel()
    j_idx = np.tile(tri, (1, 3)).ravel()
    m = sp.coo_matrix((local.ravel(), (i_idx, j_idx)),
                      shape=(mesh.n_vertices, mesh.n_vertices)).tocsr()
    m.sum_duplicates()
    return m


def _gammaH_local(bounds: BoundarySets):
    """Segment endpoints in Gamma_H-local numbering."""
    order = {int(n): k for k, n in enumerate(bounds.gammaH_nodes)}
    seg = bounds.gammaH_segments
    n0 = np.array([order[int(a)] for a in seg[:, 0]], dtype=np.int64)
    n1 = np.array([order[int(b)] for b in seg[:, 1]], dtype=np.int64)
    return n0, n1


def segment_lengths(mesh: Mesh, bounds: BoundarySets) -> np.ndarray:
    a = mesh.vertices[bounds.gammaH_segments[:, 0]]
    b = mesh.vertices[bounds.gammaH_segments[:, 1]]
    return np.linalg.norm(b - a, axis=1)


def _assemble_1d(n_nodes, n0, n1, lengths, local_fn) -> sp.csr_matrix:
    rows, cols, vals = [], [], []
    pairs = np.column_stack((n0, n1))
    for (idx, ln) in zip(pairs, lengths):
        loc = local_fn(ln)
        for a in range(2):
            for b in range(2):
                rows.append(idx[a])
                cols.append(idx[b])
                vals.append(loc[a][b])
    m = sp.coo_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    m.sum_duplicates()
    return m


def assemble_surface_mass_p1(mesh: Mesh, bounds: BoundarySets) -> sp.csr_matrix:
    """P1 mass on the epicardial curve, in Gamma_H-local node numbering."""
    n0, n1 = _gammaH_local(bounds)
    ln = segment_lengths(mesh, bounds)
    return _assemble_1d(bounds.n_epi_nodes, n0, n1, ln,
                        lambda h: [[h / 3.0, h / 6.0], [h / 6.0, h / 3.0]])


def assemble_surface_stiffness_p1(mesh: Mesh, bounds: BoundarySets) -> sp.csr_matrix:
    """P1 stiffness (tangential Laplace) on the epicardial curve."""
    n0, n1 = _gammaH_local(bounds)
    ln = segment_lengths(mesh, bounds)
    return _assemble_1d(bounds.n_epi_nodes, n0, n1, ln,
                        lambda h: [[1.0 / h, -1.0 / h], [-1.0 / h, 1.0 / h]])


def assemble_time_mass_p1(grid: TimeGrid) -> sp.csr_matrix:
    """Tridiagonal P1 mass on the time grid ((S+1) x (S+1))."""
    s = grid.n_intervals
    n = s + 1
    if s == 0:
        return sp.csr_matrix((1, 1))
    h = grid.intervals
    main = np.zeros(n)
    main[:-1] += h / 3.0
    main[1:] += h / 3.0
    off = h / 6.0
    return sp.diags([off, main, off], offsets=[-1, 0, 1], format="csr")


def p0_weights_space(mesh: Mesh, bounds: BoundarySets) -> DiagonalWeights:
    return DiagonalWeights(segment_lengths(mesh, bounds), "space_p0")


def p0_weights_time(grid: TimeGrid) -> DiagonalWeights:
    if grid.n_intervals == 0:
        raise DimensionError("P0 time weights need at least one interval")
    return DiagonalWeights(grid.intervals, "time_p0")


def quadrature_weights(mesh: Mesh, bounds: BoundarySets, grid: TimeGrid
                       ) -> tuple[DiagonalWeights, DiagonalWeights]:
    """First-order quadrature weights: nodal time weights d and space weights m.

    d_s is half the total length of the intervals meeting t_s (so endpoints get
    half an interval); m_i is half the total length of the segments meeting
    node i (divisor = ambient dimension 2).  On a degenerate single-node grid
    the time weight is 1 so purely spatial operators stay well defined.
    """
    s = grid.n_intervals
    if s == 0:
        d = np.ones(1)
    else:
        h = grid.intervals
        d = np.zeros(s + 1)
        d[:-1] += 0.5 * h
        d[1:] += 0.5 * h
    n0, n1 = _gammaH_local(bounds)
    ln = segment_lengths(mesh, bounds)
    m = np.zeros(bounds.n_epi_nodes)
    np.add.at(m, n0, 0.5 * ln)
    np.add.at(m, n1, 0.5 * ln)
    return DiagonalWeights(d, "time_quadrature"), DiagonalWeights(m, "space_quadrature")


def lump(matrix: sp.spmatrix, kind: str = "lumped") -> DiagonalWeights:
    """Row-sum lumping of a mass matrix."""
    return DiagonalWeights(np.asarray(matrix.sum(axis=1)).ravel(), kind)


def is_symmetric(matrix: sp.spmatrix) -> bool:
    d = matrix - matrix.T
    return d.nnz == 0 or np.max(np.abs(d.data)) == 0.0


def kron_time_apply(block, n_blocks: int, x: np.ndarray) -> np.ndarray:
    """Apply I_{n_blocks} (x) B to a flat time-major vector without forming the product.

    ``block`` is a matrix (dense or sparse) or a callable acting on one time
    slice.  Time-major layout: all spatial values of t_0 first.
    """
    x = np.asarray(x)
    if x.ndim != 1 or x.size % n_blocks:
        raise DimensionError(f"vector of length {x.size} is not {n_blocks} equal blocks")
    slices = x.reshape(n_blocks, -1)
    if callable(block):
        out = np.stack([np.asarray(block(row)) for row in slices])
    else:
        out = (block @ slices.T).T
    if out.shape != slices.shape:
        raise DimensionError("block action changed the slice length")
    return np.ascontiguousarray(out).ravel()


def dump_matrix_coo(matrix: sp.spmatrix, path, header: str | None = None) -> None:
    """Coordinate text dump (row col value), 17 significant digits."""
    coo = matrix.tocoo()
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")
