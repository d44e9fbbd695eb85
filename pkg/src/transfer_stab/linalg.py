"""Dense real linear-algebra helpers shared by every other module.

Matrices are plain 2-D ``numpy`` float arrays. ``as_matrix`` and ``as_sym``
are the validating constructors: they reject NaN/Inf and, for symmetric
input, symmetrize so that ``S == S.T`` holds exactly.
"""

import numpy as np
import scipy.linalg

REL_TOL = 1e-10


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array (vectors become columns)."""
    M = np.array(M, dtype=float)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    elif M.ndim == 1:
        M = M.reshape(-1, 1)
    if M.ndim != 2 or M.shape[0] < 1 or M.shape[1] < 1:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} has non-finite entries")
    return M


def as_square(M, name="matrix"):
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square, got shape {M.shape}")
    return M


def symmetrize(M):
    M = np.asarray(M, dtype=float)
    return 0.5 * (M + M.T)


def as_sym(S, name="matrix", tol=None):
    """Validate a symmetric matrix and return its exactly symmetric part.

    ``tol`` bounds the admissible asymmetry relative to ``1 + max|S|``;
    ``None`` skips the check (caller guarantees symmetry up to rounding).
    """
    S = as_square(S, name)
    if tol is not None:
        asym = np.max(np.abs(S - S.T))
        if asym > tol * (1.0 + np.max(np.abs(S))):
            raise ValueError(f"{name} is not symmetric (max asymmetry {asym:.3g})")
    return symmetrize(S)


def spectral_radius(M):
    M = as_square(M)
    lam = np.linalg.eigvals(M)
    return float(np.max(np.abs(lam)))


def sym_eig(S):
    """Eigendecomposition ``S = U.T @ diag(lam) @ U`` with ascending ``lam``.

    The rows of ``U`` are the orthonormal eigenvectors.
    """
    S = as_sym(S)
    lam, V = np.linalg.eigh(S)
    return V.T, lam


def min_eig(S):
    return float(np.linalg.eigvalsh(symmetrize(S))[0])


def max_eig(S):
    return float(np.linalg.eigvalsh(symmetrize(S))[-1])


def is_psd(S, tol=0.0):
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    return min_eig(as_sym(S)) >= -tol


def psd_sqrt(S, tol=1e-9, scale=None):
    """Symmetric PSD square root.

    Eigenvalues in ``[-tol*scale, 0)`` are clamped to zero; anything more
    negative raises ``ValueError``. ``scale`` defaults to ``max|eig(S)|``;
    pass the magnitude of the terms ``S`` was computed from when ``S`` itself
    may be pure rounding noise.
    """
    U, lam = sym_eig(S)
    if scale is None:
        scale = float(np.max(np.abs(lam)))
    if lam[0] < -tol * scale:
        raise ValueError(f"matrix is indefinite (min eigenvalue {lam[0]:.3g})")
    root = np.sqrt(np.clip(lam, 0.0, None))
    return symmetrize(U.T @ (root[:, None] * U))


def operator_norm(M):
    M = as_matrix(M)
    return float(np.linalg.norm(M, 2))


def rank_with_tol(M, rel_tol=REL_TOL):
    if not 0.0 < rel_tol < 1.0:
        raise ValueError("rel_tol must lie in (0, 1)")
    M = as_matrix(M)
    sv = np.linalg.svd(M, compute_uv=False)
    if sv[0] == 0.0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def expm(M):
    # scipy uses scaling-and-squaring with Pade approximants (Al-Mohy & Higham)
    M = as_square(M)
    return scipy.linalg.expm(M)


def sym_inv(S, tol=REL_TOL):
    """Inverse of a symmetric positive definite matrix via Cholesky."""
    S = as_sym(S)
    lam = np.linalg.eigvalsh(S)
    if lam[0] <= tol * max(abs(lam[-1]), 1e-300):
        raise np.linalg.LinAlgError(
            f"matrix is not positive definite (min eigenvalue {lam[0]:.3g})"
        )
    cho = scipy.linalg.cho_factor(S, lower=True)
    return symmetrize(scipy.linalg.cho_solve(cho, np.eye(S.shape[0])))
