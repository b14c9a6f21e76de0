"""Dense symmetric kernels used by the collapse metrics."""
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NegativeEigenvalueBeyondTolerance, NoConvergence, NonFiniteValue, NotSymmetric

JACOBI_TOL = 1e-14
JACOBI_MAX_SWEEPS = 64
SYMMETRY_TOL = 1e-10
PSD_TOL = 1e-10


@dataclass(frozen=True)
class SymEig:
    eigenvalues: np.ndarray  # (d,), descending
    eigenvectors: np.ndarray  # (d, d), column i pairs with eigenvalues[i]
    sweeps: int = 0


def _check_symmetric(s, name="matrix"):
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise NotSymmetric(f"{name} must be square, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NonFiniteValue(f"{name} has non-finite entries")
    scale = float(np.max(np.abs(s))) if s.size else 0.0
    asym = float(np.max(np.abs(s - s.T))) if s.size else 0.0
    if asym > SYMMETRY_TOL * (1.0 + scale):
        raise NotSymmetric(f"{name} asymmetry {asym:.3e} exceeds tolerance")
    return s


def power_spectral_norm(a, max_iters: int = 200, rel_tol: float = 1e-10, seed: int = 0) -> float:
    """Largest singular value of ``a`` by power iteration on the smaller Gram matrix.

    The start vector is drawn from ``np.random.default_rng(seed)``, so the
    result is reproducible. Iteration stops once successive Rayleigh quotients
    agree to ``rel_tol`` (relative) or after ``max_iters`` products.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {a.shape}")
    if max_iters < 1 or rel_tol <= 0:
        raise ValueError("max_iters must be >= 1 and rel_tol > 0")
    if not np.all(np.isfinite(a)):
        raise NonFiniteValue("matrix has non-finite entries")
    if a.size == 0 or not np.any(a):
        return 0.0
    m, n = a.shape
    gram = a.T @ a if n <= m else a @ a.T
    v0 = np.random.default_rng(seed).standard_normal(gram.shape[0])
    v0 /= np.linalg.norm(v0)
    lam = _kernels.power_iterate(gram, v0, max_iters, rel_tol)
    return float(np.sqrt(max(lam, 0.0)))


def sym_eig(s, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> SymEig:
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps continue until the off-diagonal Frobenius mass falls below
    ``tol * ||s||_F``; raises :class:`NoConvergence` after ``max_sweeps``.
    """
    s = _check_symmetric(s)
    s = 0.5 * (s + s.T)
    w, v, sweeps, converged = _kernels.jacobi_eigh(s, tol, max_sweeps)
    if not converged:
        raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
    order = np.argsort(-w, kind="stable")
    return SymEig(np.ascontiguousarray(w[order]), np.ascontiguousarray(v[:, order]), int(sweeps))


def pinv_quadratic_trace(sigma_w, sigma_b, rank_rel_tol: float = 1e-10) -> float:
    """``trace(sigma_w @ pinv(sigma_b))`` through the eigenpairs of ``sigma_b``.

    Eigenvalues at or below ``rank_rel_tol * lambda_max`` are treated as zero,
    which is how the rank deficiency of a between-class covariance (rank at
    most K - 1) is handled.
    """
    sigma_w = _check_symmetric(sigma_w, "sigma_w")
    sigma_b = _check_symmetric(sigma_b, "sigma_b")
    if sigma_w.shape != sigma_b.shape:
        raise NotSymmetric(f"shape mismatch {sigma_w.shape} vs {sigma_b.shape}")
    diag_w = np.diag(sigma_w)
    if diag_w.size and diag_w.min() < -PSD_TOL * max(1.0, float(diag_w.max())):
        raise NegativeEigenvalueBeyondTolerance("sigma_w has a negative diagonal entry")
    eig = sym_eig(sigma_b)
    lam = eig.eigenvalues
    lam_max = float(lam[0]) if lam.size else 0.0
    if lam.size and lam[-1] < -PSD_TOL * max(1.0, lam_max):
        raise NegativeEigenvalueBeyondTolerance(f"sigma_b eigenvalue {lam[-1]:.3e}")
    if lam_max <= 0.0:
        return 0.0
    keep = lam > rank_rel_tol * lam_max
    u = eig.eigenvectors[:, keep]
    quad = np.sum((sigma_w @ u) * u, axis=0)
    return float(np.sum(quad / lam[keep]))
