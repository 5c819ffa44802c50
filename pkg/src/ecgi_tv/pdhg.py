"""First-order primal-dual reconstruction: energies, proximal maps, iteration loop.

The saddle-point iteration alternates a projection of the dual variable onto
the weighted unit ball of the regularizer's conjugate with a quadratic
data-term proximal step, followed by over-relaxation of the primal iterate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from . import kernels
from .errors import ConfigurationError, DimensionError, DivergenceError
from .transfer import TransferMatrix, apply_transfer_spacetime
from .tvops import (DualFieldQ1, DualFieldQ2, GradOp, apply_adjoint, apply_k,
                    operator_norm, tv_value)


@dataclass(frozen=True)
class PdhgParams:
    """Step sizes and stopping controls; tau/sigma default to 1/||K||."""

    tau: float | None = None
    sigma_step: float | None = None
    theta: float = 1.0
    max_iter: int = 5000
    tol_du: float = 1e-3  # stop when ||u_{n+1} - u_n||_inf drops below
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigurationError("theta must lie in [0, 1]")
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if self.tol_du <= 0.0:
            raise ConfigurationError("tol_du must be positive")
        for name in ("tau", "sigma_step"):
            v = getattr(self, name)
            if v is not None and v <= 0.0:
                raise ConfigurationError(f"{name} must be positive")


@dataclass
class InverseProblem:
    """Measurements, transfer operator, and regularization operator."""

    transfer: TransferMatrix
    z: np.ndarray  # (N_sigma * (S+1),) time-major
    gradop: GradOp
    eps_tv: float = 0.0  # half-quadratic threshold, energy evaluation only

    _prox_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=np.float64)
        n = self.transfer.n_electrodes * (self.gradop.n_intervals + 1)
        if self.z.shape != (n,):
            raise DimensionError(f"measurements must have length {n}, got {self.z.shape}")
        if not np.all(np.isfinite(self.z)):
            raise DimensionError("measurements must be finite")
        if self.transfer.n_epi_nodes != self.gradop.n_nodes:
            raise DimensionError("transfer operator and gradient operator disagree on N_V")

    @property
    def alpha(self) -> int:
        return self.gradop.alpha

    def z_slices(self) -> np.ndarray:
        return self.z.reshape(-1, self.transfer.n_electrodes)


def energy(problem: InverseProblem, u: np.ndarray) -> tuple[float, float, float]:
    """Data term G, regularizer F, and total J = G + F at the given iterate."""
    op = problem.gradop
    residual = apply_transfer_spacetime(problem.transfer, u) - problem.z
    res = residual.reshape(-1, problem.transfer.n_electrodes)
    g = float(np.sum(op.dtilde * np.sum(res * res, axis=1)) / (2.0 * problem.transfer.n_electrodes))
    f = tv_value(op, apply_k(op, u), problem.eps_tv)
    return g, f, g + f


def prox_g(problem: InverseProblem, u_tilde: np.ndarray, tau: float) -> np.ndarray:
    """Proximal map of the data term in the lumped V_h metric.

    Solves (tau/N_sigma A^T A + diag(m)) u_s = tau/N_sigma A^T z_s + m u~_s for
    every time node; the Cholesky factor is cached per step size.
    """
    if tau <= 0.0:
        raise ConfigurationError("tau must be positive")
    op = problem.gradop
    a = problem.transfer.a_sigma
    n_sig = problem.transfer.n_electrodes
    key = float(tau)
    if key not in problem._prox_cache:
        h = (tau / n_sig) * (a.T @ a) + np.diag(op.mtilde)
        problem._prox_cache[key] = la.cho_factor(h)
    cho = problem._prox_cache[key]
    ut = op.slices(u_tilde)
    rhs = (tau / n_sig) * (problem.z_slices() @ a) + ut * op.mtilde[None, :]
    return np.ascontiguousarray(la.cho_solve(cho, rhs.T).T).ravel()


def prox_fstar_q1(p: DualFieldQ1, d_quad: np.ndarray, m_quad: np.ndarray,
                  dtilde: np.ndarray, mtilde: np.ndarray,
                  sigma_step: float | None = None) -> DualFieldQ1:
    """Projection onto the weighted l-inf dual ball of the separable TV.

    The conjugate is an indicator, so the step size does not enter (kept in
    the signature for symmetry with the primal prox).  The clamp ratios are
    lumped-mass over quadrature weights, identically 1 on closed loops.
    """
    del sigma_step
    out = p.copy()
    ratio_t = dtilde / d_quad
    for k in range(out.spatial.shape[0]):
        kernels.clamp_rows(out.spatial[k], ratio_t)
    if out.temporal.size:
        kernels.clamp_cols(out.temporal, mtilde / m_quad)
    return out


def prox_fstar_q2(p: DualFieldQ2, sigma_step: float | None = None) -> DualFieldQ2:
    """Radial projection of every corner gradient onto the closed unit ball."""
    del sigma_step
    out = p.copy()
    flat = out.values.reshape(-1, out.values.shape[-1])
    kernels.project_l2_rows(flat)
    return out


def _prox_fstar(problem: InverseProblem, p):
    op = problem.gradop
    if op.alpha == 1:
        return prox_fstar_q1(p, op.d_quad, op.m_quad, op.dtilde, op.mtilde)
    return prox_fstar_q2(p)


@dataclass
class SolveTrace:
    """Per-iteration energies and increments of one PDHG run."""

    g_values: np.ndarray
    f_values: np.ndarray
    j_values: np.ndarray
    delta_inf: np.ndarray
    seconds: np.ndarray  # cumulative wall time after each iteration
    termination: str

    @property
    def n_iterations(self) -> int:
        return self.j_values.size

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("iteration,G,F,J,delta_inf,seconds\n")
            for i in range(self.n_iterations):
                fh.write(f"{i + 1},{self.g_values[i]!r},{self.f_values[i]!r},"
                         f"{self.j_values[i]!r},{self.delta_inf[i]!r},{self.seconds[i]!r}\n")


def pdhg_solve(problem: InverseProblem, params: PdhgParams = PdhgParams()
               ) -> tuple[np.ndarray, SolveTrace]:
    """Run the primal-dual iteration until the primal increment stalls.

    Returns the final primal iterate (time-major nodal values) and the trace.
    Raises DivergenceError if the energy explodes, which indicates a violated
    step-size contract tau * sigma * ||K||^2 <= 1.
    """
    op = problem.gradop
    lip = operator_norm(op)
    if params.tau is None or params.sigma_step is None:
        if params.tau is not None or params.sigma_step is not None:
            raise ConfigurationError("give both tau and sigma_step or neither")
        step = 1.0 / lip if lip > 0.0 else 1.0
        tau, sigma = step, step
    else:
        tau, sigma = params.tau, params.sigma_step
        if tau * sigma * lip ** 2 > 1.0 + 1e-9:
            raise ConfigurationError(
                f"step sizes violate tau*sigma*L^2 <= 1 (got {tau * sigma * lip ** 2:.3g})")

    rng = np.random.default_rng(params.seed)
    n = op.n_nodes * (op.n_intervals + 1)
    u = rng.standard_normal(n)
    p = apply_k(op, u)
    u_bar = u.copy()

    g0, f0, j0 = energy(problem, u)
    ceiling = 1e6 * max(abs(j0), 1e-30)

    if op.alpha == 1:
        ratio_time = op.dtilde / op.d_quad
        ratio_space = op.mtilde / op.m_quad

    g_tr, f_tr, j_tr, du_tr, t_tr = [], [], [], [], []
    start = time.perf_counter()
    termination = "max_iter"
    for _ in range(params.max_iter):
        q = apply_k(op, u_bar)
        if op.alpha == 1:
            p.spatial += sigma * q.spatial
            kernels.clamp_rows(p.spatial[0], ratio_time)
            kernels.clamp_rows(p.spatial[1], ratio_time)
            if p.temporal.size:
                p.temporal += sigma * q.temporal
                kernels.clamp_cols(p.temporal, ratio_space)
        else:
            kernels.axpy_project_l2(p.values.reshape(-1, 3), q.values.reshape(-1, 3), sigma)

        u_new = prox_g(problem, u - tau * apply_adjoint(op, p), tau)
        du = float(np.max(np.abs(u_new - u)))
        u_bar = u_new + params.theta * (u_new - u)
        u = u_new

        g, f, j = energy(problem, u)
        g_tr.append(g)
        f_tr.append(f)
        j_tr.append(j)
        du_tr.append(du)
        t_tr.append(time.perf_counter() - start)
        if j > ceiling:
            raise DivergenceError(
                "energy grew by more than 1e6x; step-size contract tau*sigma*L^2 <= 1 violated")
        if du < params.tol_du:
            termination = "converged"
            break

    trace = SolveTrace(
        g_values=np.array(g_tr), f_values=np.array(f_tr), j_values=np.array(j_tr),
        delta_inf=np.array(du_tr), seconds=np.array(t_tr), termination=termination,
    )
    return u, trace
