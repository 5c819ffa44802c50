"""Space-time total-variation reconstruction of epicardial potentials.

Pipeline:  generate a synthetic 2D torso (mesh), assemble the FEM transfer
operator (transfer), simulate ground-truth potentials (simulate), and
reconstruct from noisy electrode traces with the primal-dual TV solver (pdhg)
or the Tikhonov baselines (tikhonov).  experiment/cli drive benchmarks.
"""

from .errors import EcgiTvError
from .fem import ConductivityField, DiagonalWeights, TimeGrid
from .kernels import BACKEND as KERNEL_BACKEND
from .mesh import (BoundarySets, ElectrodeSet, Geometry, GeometryConfig, Mesh,
                   build_geometry, extract_boundary_sets, generate_torso_2d,
                   load_mesh, place_electrodes, restrict_to_torso, save_mesh)
from .metrics import MetricsReport, metric_cc, metric_re, metric_vh
from .pdhg import InverseProblem, PdhgParams, SolveTrace, pdhg_solve
from .simulate import (ConductivityTable, SimConfig, TruthBundle, add_noise,
                       eikonal_activation, pseudo_bidomain_solve, sample_truth,
                       simulate_truth, transmembrane_waveform)
from .tikhonov import solve_t0, solve_t1s, solve_t1st
from .transfer import (TransferMatrix, apply_transfer_adjoint_spacetime,
                       apply_transfer_spacetime, build_transfer)
from .tvops import (AnisotropyWeights, DualFieldQ1, DualFieldQ2, GradOp, apply_adjoint,
                    apply_k, apply_k1, apply_k2, operator_norm)

__version__ = "0.1.0"

__all__ = [
    "AnisotropyWeights", "BoundarySets", "ConductivityField", "ConductivityTable",
    "DiagonalWeights", "DualFieldQ1", "DualFieldQ2", "EcgiTvError", "ElectrodeSet",
    "Geometry", "GeometryConfig", "GradOp", "InverseProblem", "KERNEL_BACKEND",
    "Mesh", "MetricsReport", "PdhgParams", "SimConfig", "SolveTrace", "TimeGrid",
    "TransferMatrix", "TruthBundle", "add_noise", "apply_adjoint", "apply_k",
    "apply_k1", "apply_k2", "apply_transfer_adjoint_spacetime",
    "apply_transfer_spacetime", "build_geometry", "build_transfer",
    "eikonal_activation", "extract_boundary_sets", "generate_torso_2d", "load_mesh",
    "metric_cc", "metric_re", "metric_vh", "operator_norm", "pdhg_solve",
    "place_electrodes", "pseudo_bidomain_solve", "restrict_to_torso", "sample_truth",
    "save_mesh", "simulate_truth", "solve_t0", "solve_t1s", "solve_t1st",
    "transmembrane_waveform",
]
