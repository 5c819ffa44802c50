"""Reconstruction quality metrics: relative error, Pearson correlation, and
the lumped space-time FEM norm of the error."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, UndefinedMetricError


def _check(u, u_ref):
    u = np.asarray(u, dtype=np.float64)
    u_ref = np.asarray(u_ref, dtype=np.float64)
    if u.shape != u_ref.shape:
        raise DimensionError(f"shape mismatch {u.shape} vs {u_ref.shape}")
    return u, u_ref


def metric_re(u, u_ref) -> float:
    """Relative l2 error of the nodal vectors."""
    u, u_ref = _check(u, u_ref)
    denom = np.linalg.norm(u_ref)
    if denom == 0.0:
        raise UndefinedMetricError("relative error needs a nonzero reference")
    return float(np.linalg.norm(u - u_ref) / denom)


def metric_cc(u, u_ref) -> float:
    """Pearson correlation of the (flattened) nodal vectors."""
    u, u_ref = _check(u, u_ref)
    du = u - u.mean()
    dr = u_ref - u_ref.mean()
    nr = np.linalg.norm(dr)
    if nr == 0.0:
        raise UndefinedMetricError("correlation is undefined for a constant reference")
    nu = np.linalg.norm(du)
    if nu == 0.0:
        raise UndefinedMetricError("correlation is undefined for a constant reconstruction")
    return float(du @ dr / (nu * nr))


def metric_vh(u, u_ref, mtilde: np.ndarray, dtilde: np.ndarray) -> float:
    """Lumped space-time weighted error norm sqrt(sum d_s m_i (u - u_ref)^2)."""
    u, u_ref = _check(u, u_ref)
    w = np.outer(dtilde, mtilde).ravel()
    if w.size != u.size:
        raise DimensionError("weight sizes do not match the field length")
    d = u - u_ref
    return float(np.sqrt(np.sum(w * d * d)))


@dataclass(frozen=True)
class MetricsReport:
    """One evaluated reconstruction."""

    method: str
    lam_gamma: float
    lam_t: float
    snr_db: float
    n_electrodes: int
    re: float
    cc: float
    vh: float
    seconds: float

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.cc <= 1.0 + 1e-12:
            raise ValueError("correlation outside [-1, 1]")
        if self.re < 0.0 or self.vh < 0.0:
            raise ValueError("error metrics must be nonnegative")

    def csv_row(self, seconds_override: float | None = None) -> str:
        sec = self.seconds if seconds_override is None else seconds_override
        return (f"{self.method},{self.lam_gamma!r},{self.lam_t!r},{self.snr_db!r},"
                f"{self.n_electrodes},{self.re!r},{self.cc!r},{self.vh!r},{sec!r}")


CSV_HEADER = "method,lambda_g,lambda_t,snr_db,n_electrodes,re,cc,vh,seconds"
