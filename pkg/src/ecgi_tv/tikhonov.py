"""Closed-form Tikhonov baselines, solved per time step.

All three variants share the per-step normal equations
(A^T A / N_sigma + penalty) u_s = A^T z_s / N_sigma (+ temporal coupling for
the S+T variant) with a single Cholesky factorization reused across steps.
Baselines use consistent (non-lumped) masses.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import ConfigurationError, DimensionError, SingularSystemError
from .transfer import TransferMatrix


def _dense(m) -> np.ndarray:
    return m.toarray() if sp.issparse(m) else np.asarray(m, dtype=np.float64)


def _z_slices(tm: TransferMatrix, z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 1 or z.size % tm.n_electrodes:
        raise DimensionError(f"measurement length {z.size} is not a multiple of N_sigma")
    return z.reshape(-1, tm.n_electrodes)


def _factor(h: np.ndarray):
    try:
        return la.cho_factor(h)
    except la.LinAlgError as exc:
        raise SingularSystemError(f"Tikhonov normal matrix is singular: {exc}") from exc


def solve_t0(tm: TransferMatrix, z: np.ndarray, lam_gamma: float,
             mass_p1) -> np.ndarray:
    """Zero-order Tikhonov: identity penalty in the consistent surface mass."""
    if lam_gamma <= 0.0:
        raise ConfigurationError("T0 needs lam_gamma > 0")
    zz = _z_slices(tm, z)
    a = tm.a_sigma
    n_sig = tm.n_electrodes
    cho = _factor(a.T @ a / n_sig + lam_gamma * _dense(mass_p1))
    rhs = zz @ a / n_sig  # (S+1, N_V)
    return np.ascontiguousarray(la.cho_solve(cho, rhs.T).T).ravel()


def solve_t1s(tm: TransferMatrix, z: np.ndarray, lam_gamma: float,
              laplace_x) -> np.ndarray:
    """First-order Tikhonov in space: penalty -lam * Laplacian (PSD addition).

    ``laplace_x`` is the negative-semidefinite discrete surface Laplacian,
    i.e. minus the curve stiffness matrix; constants lie in its kernel.
    """
    if lam_gamma <= 0.0:
        raise ConfigurationError("T1 S needs lam_gamma > 0")
    zz = _z_slices(tm, z)
    a = tm.a_sigma
    n_sig = tm.n_electrodes
    cho = _factor(a.T @ a / n_sig - lam_gamma * _dense(laplace_x))
    rhs = zz @ a / n_sig
    return np.ascontiguousarray(la.cho_solve(cho, rhs.T).T).ravel()


def solve_t1st(tm: TransferMatrix, z: np.ndarray, lam_gamma: float, lam_t: float,
               mass_p1, laplace_x) -> np.ndarray:
    """First-order Tikhonov in space plus coupling to the previous time step.

    Sweeps s = 0..S with u(t_{-1}) = 0, reusing one factorization.
    """
    if lam_gamma < 0.0 or lam_t < 0.0 or (lam_gamma == 0.0 and lam_t == 0.0):
        raise ConfigurationError("T1 S+T needs lam_gamma, lam_t >= 0, not both zero")
    zz = _z_slices(tm, z)
    a = tm.a_sigma
    n_sig = tm.n_electrodes
    mass = _dense(mass_p1)
    cho = _factor(a.T @ a / n_sig - lam_gamma * _dense(laplace_x) + lam_t * mass)
    base = zz @ a / n_sig  # data part of every right-hand side
    out = np.empty((zz.shape[0], tm.n_epi_nodes))
    prev = np.zeros(tm.n_epi_nodes)
    for s in range(zz.shape[0]):
        prev = la.cho_solve(cho, base[s] + lam_t * (mass @ prev))
        out[s] = prev
    return out.ravel()
