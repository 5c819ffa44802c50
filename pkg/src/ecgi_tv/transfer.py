"""Discrete transfer operator: epicardial potentials -> electrode potentials.

The operator is the Schur-complement elimination of the source-free conduction
problem on the heartless torso mesh: interior unknowns are condensed onto the
torso surface, and the surface rows are restricted to the electrode nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse.linalg as spla

from .errors import DimensionError, IllPosedGeometryError, MeshFormatError, TopologyError
from .fem import ConductivityField, assemble_stiffness
from .mesh import BoundarySets, ElectrodeSet, Mesh


@dataclass(frozen=True)
class TransferMatrix:
    """Dense electrode-from-epicardium map with provenance hashes."""

    a_sigma: np.ndarray  # (N_sigma, N_V)
    electrode_nodes: np.ndarray
    mesh_hash: str
    cond_hash: str
    a_gamma: np.ndarray | None = None  # optional full (|Gamma|, N_V) map

    @property
    def n_electrodes(self) -> int:
        return self.a_sigma.shape[0]

    @property
    def n_epi_nodes(self) -> int:
        return self.a_sigma.shape[1]

    def restrict(self, electrodes: ElectrodeSet, gamma_nodes: np.ndarray) -> "TransferMatrix":
        """New electrode restriction from the cached full surface map."""
        if self.a_gamma is None:
            raise DimensionError("restrict() needs a TransferMatrix built with keep_gamma=True")
        pos = _positions_in(gamma_nodes, electrodes.nodes)
        return TransferMatrix(a_sigma=self.a_gamma[pos], electrode_nodes=electrodes.nodes.copy(),
                              mesh_hash=self.mesh_hash, cond_hash=self.cond_hash,
                              a_gamma=self.a_gamma)


def _positions_in(ordered: np.ndarray, wanted: np.ndarray) -> np.ndarray:
    lookup = {int(n): k for k, n in enumerate(ordered)}
    try:
        return np.array([lookup[int(n)] for n in wanted], dtype=np.int64)
    except KeyError as exc:
        raise DimensionError(f"node {exc} is not on Gamma") from exc


def build_transfer(mesh: Mesh, cond: ConductivityField, bounds: BoundarySets,
                   electrodes: ElectrodeSet, keep_gamma: bool = False) -> TransferMatrix:
    """Assemble and condense the transfer operator on the inverse-problem mesh.

    Requires that no triangle touches both Gamma and Gamma_H (the coupling
    block between the two boundaries must vanish for the elimination formula).
    """
    tris = mesh.triangles
    on_gamma = np.zeros(mesh.n_vertices, dtype=bool)
    on_gamma[bounds.gamma_nodes] = True
    on_gammaH = np.zeros(mesh.n_vertices, dtype=bool)
    on_gammaH[bounds.gammaH_nodes] = True
    touches_both = np.any(on_gamma[tris], axis=1) & np.any(on_gammaH[tris], axis=1)
    if np.any(touches_both):
        raise TopologyError("a triangle touches both Gamma and Gamma_H; refine the mesh")

    k = assemble_stiffness(mesh, cond)
    idx_i = bounds.interior_nodes
    idx_g = bounds.gamma_nodes
    idx_h = bounds.gammaH_nodes

    k_ii = k[idx_i][:, idx_i].tocsc()
    k_ig = k[idx_i][:, idx_g].toarray()
    k_gi = k[idx_g][:, idx_i].tocsr()
    k_gg = k[idx_g][:, idx_g].toarray()
    k_ih = k[idx_i][:, idx_h].toarray()

    lu = spla.splu(k_ii)
    y = lu.solve(k_ig)  # interior response to surface data
    schur = k_gg - k_gi @ y
    rhs = k_gi @ lu.solve(k_ih)
    try:
        cho = la.cho_factor(schur)
    except la.LinAlgError as exc:
        raise IllPosedGeometryError(f"singular Schur complement: {exc}") from exc
    a_gamma = la.cho_solve(cho, rhs)

    pos = _positions_in(idx_g, electrodes.nodes)
    a_sigma = np.ascontiguousarray(a_gamma[pos])
    return TransferMatrix(
        a_sigma=a_sigma,
        electrode_nodes=electrodes.nodes.copy(),
        mesh_hash=mesh.content_hash(),
        cond_hash=cond.content_hash(),
        a_gamma=a_gamma if keep_gamma else None,
    )


def apply_transfer_spacetime(tm: TransferMatrix, u: np.ndarray) -> np.ndarray:
    """Blockwise application across all time nodes (time-major layout)."""
    u = np.asarray(u)
    n_v = tm.n_epi_nodes
    if u.ndim != 1 or u.size % n_v:
        raise DimensionError(f"field length {u.size} is not a multiple of N_V={n_v}")
    slices = u.reshape(-1, n_v)
    return np.ascontiguousarray(slices @ tm.a_sigma.T).ravel()


def apply_transfer_adjoint_spacetime(tm: TransferMatrix, z: np.ndarray) -> np.ndarray:
    """Blockwise transpose application across all time nodes."""
    z = np.asarray(z)
    n_s = tm.n_electrodes
    if z.ndim != 1 or z.size % n_s:
        raise DimensionError(f"measurement length {z.size} is not a multiple of N_sigma={n_s}")
    slices = z.reshape(-1, n_s)
    return np.ascontiguousarray(slices @ tm.a_sigma).ravel()


def export_transfer(tm: TransferMatrix, path) -> None:
    """Coordinate text export with provenance header."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# ecgi-transfer v1 mesh={tm.mesh_hash} cond={tm.cond_hash}\n")
        fh.write(f"{tm.n_electrodes} {tm.n_epi_nodes}\n")
        fh.write(" ".join(str(int(n)) for n in tm.electrode_nodes) + "\n")
        for i in range(tm.n_electrodes):
            for j in range(tm.n_epi_nodes):
                fh.write(f"{i} {j} {tm.a_sigma[i, j]:.17g}\n")


def read_transfer(path) -> TransferMatrix:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if not header.startswith("# ecgi-transfer v1"):
            raise MeshFormatError(f"bad transfer header '{header}'", line=1)
        fields = dict(part.split("=") for part in header.split()[3:])
        try:
            n_e, n_v = map(int, fh.readline().split())
            nodes = np.array(fh.readline().split(), dtype=np.int32)
        except ValueError as exc:
            raise MeshFormatError(f"bad transfer size/node lines: {exc}")
        a = np.zeros((n_e, n_v))
        for lineno, line in enumerate(fh, start=4):
            if not line.strip():
                continue
            try:
                i, j, v = line.split()
                a[int(i), int(j)] = float(v)
            except (ValueError, IndexError):
                raise MeshFormatError(f"bad coordinate line '{line.strip()}'", line=lineno)
    return TransferMatrix(a_sigma=a, electrode_nodes=nodes,
                          mesh_hash=fields.get("mesh", ""), cond_hash=fields.get("cond", ""))
