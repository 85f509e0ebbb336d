"""Dense symmetric linear algebra with explicit tolerances.

Every rank decision in the package goes through this module so that the
thresholds are consistent: a singular value ``s`` of an ``n x m`` matrix is
treated as zero when ``s <= rank_tol * s_max`` with
``rank_tol = 1e-9 * max(n, m)`` unless overridden.

Matrices are plain :class:`numpy.ndarray` objects; functions that expect a
symmetric argument symmetrize it as ``(M + M.T) / 2`` on entry.
"""

import numpy as np

from .errors import DimensionError, InvalidInputError, NotPsdError, SingularityError

__all__ = [
    "as_matrix",
    "symmetrize",
    "default_rank_tol",
    "is_psd",
    "min_eig",
    "psd_sqrt",
    "pinv",
    "rank",
    "range_basis",
    "range_projector",
    "range_inclusion",
    "gen_schur",
    "block_psd_test",
    "woodbury_capped",
]

PSD_TOL = 1e-9


def as_matrix(M, name="matrix"):
    """Return ``M`` as a finite 2-D float array (scalars become 1x1)."""
    A = np.array(M, dtype=float)
    if A.ndim == 0:
        A = A.reshape(1, 1)
    elif A.ndim == 1:
        A = A.reshape(-1, 1)
    if A.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return A


def symmetrize(M, name="matrix"):
    A = as_matrix(M, name)
    if A.shape[0] != A.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {A.shape}")
    return 0.5 * (A + A.T)


def default_rank_tol(shape):
    return 1e-9 * max(shape) if len(shape) else 1e-9


def _eig_floor(w, tol):
    return -tol * max(1.0, float(w[-1]) if w.size else 0.0)


def min_eig(M):
    """Smallest eigenvalue of the symmetric part of ``M``."""
    S = symmetrize(M)
    if S.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(S)[0])


def is_psd(M, tol=PSD_TOL):
    """True iff ``lambda_min(M) >= -tol * max(1, lambda_max(M))``."""
    S = symmetrize(M)
    if S.size == 0:
        return True
    w = np.linalg.eigvalsh(S)
    return bool(w[0] >= _eig_floor(w, tol))


def psd_sqrt(M, tol=PSD_TOL):
    """Symmetric PSD square root of a PSD matrix.

    Eigenvalues that are negative but within the :func:`is_psd` tolerance
    are clamped to zero; anything more negative raises :class:`NotPsdError`.
    """
    S = symmetrize(M)
    w, V = np.linalg.eigh(S)
    if w.size and w[0] < _eig_floor(w, tol):
        raise NotPsdError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})", min_eig=float(w[0]))
    R = (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T
    return 0.5 * (R + R.T)


def pinv(M, rank_tol=None):
    """Moore-Penrose inverse with relative singular-value cutoff ``rank_tol``."""
    A = as_matrix(M)
    if A.size == 0:
        return np.zeros(A.shape[::-1])
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape)
    return np.linalg.pinv(A, rcond=rank_tol)


def _svd_range(A, rank_tol):
    if A.size == 0:
        return np.zeros((A.shape[0], 0))
    U, s, _ = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros((A.shape[0], 0))
    r = int(np.sum(s > rank_tol * s[0]))
    return U[:, :r]


def rank(M, rank_tol=None):
    A = as_matrix(M)
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape)
    return _svd_range(A, rank_tol).shape[1]


def range_basis(M, rank_tol=None):
    """Orthonormal basis (as columns) of the column span of ``M``."""
    A = as_matrix(M)
    if rank_tol is None:
        rank_tol = default_rank_tol(A.shape)
    return _svd_range(A, rank_tol)


def range_projector(M, onto="range", rank_tol=None):
    """Orthogonal projector onto ``range M`` or onto its orthogonal complement.

    Parameters
    ----------
    M : array_like, shape (n, m)
    onto : {"range", "complement"}
    rank_tol : float, optional
        Relative singular value cutoff, see module docstring.

    Returns
    -------
    P : ndarray, shape (n, n)
        Symmetric idempotent matrix ``Z Z^T`` (or ``I - Z Z^T``) where ``Z``
        is an orthonormal basis of the range.
    """
    if onto not in ("range", "complement"):
        raise InvalidInputError(f"onto must be 'range' or 'complement', got {onto!r}")
    A = as_matrix(M)
    Z = range_basis(A, rank_tol)
    P = Z @ Z.T
    if onto == "complement":
        P = np.eye(A.shape[0]) - P
    return 0.5 * (P + P.T)


def range_inclusion(M2, M1, rank_tol=None):
    """Decide ``range M2 ⊆ range M1``.

    The residual ``||(I - P_M1) M2||_F`` is compared against
    ``rank_tol * (1 + ||M2||_F)``.
    """
    A2 = as_matrix(M2, "M2")
    A1 = as_matrix(M1, "M1")
    if A1.shape[0] != A2.shape[0]:
        raise DimensionError(f"row dimensions differ: {A2.shape[0]} vs {A1.shape[0]}")
    if rank_tol is None:
        rank_tol = default_rank_tol(A1.shape)
    P = range_projector(A1, "complement", rank_tol)
    resid = np.linalg.norm(P @ A2)
    return bool(resid <= rank_tol * (1.0 + np.linalg.norm(A2)))


def gen_schur(M, split, rank_tol=None):
    """Generalized Schur complement ``M3 - M2^T M1^+ M2`` of the leading block."""
    S = symmetrize(M)
    n = S.shape[0]
    if not 0 < split < n:
        raise InvalidInputError(f"split must satisfy 0 < split < {n}, got {split}")
    M1, M2, M3 = S[:split, :split], S[:split, split:], S[split:, split:]
    return symmetrize(M3 - M2.T @ pinv(M1, rank_tol) @ M2)


def block_psd_test(M, split, tol=PSD_TOL, rank_tol=None):
    """Three-part block test: ``M1 ⪰ 0``, ``range M2 ⊆ range M1``, Schur complement ``⪰ 0``."""
    S = symmetrize(M)
    M1, M2 = S[:split, :split], S[:split, split:]
    return (
        is_psd(M1, tol)
        and range_inclusion(M2, M1, rank_tol)
        and is_psd(gen_schur(S, split, rank_tol), tol)
    )


def woodbury_capped(W, Gamma, rank_tol=None):
    """Evaluate ``W (W + Gamma Gamma^T)^{-1} W`` without forming the inverse.

    ``W`` is rotated to ``diag(W1, 0)`` with ``W1 ≻ 0`` and ``Gamma`` is split
    conformally into ``(Gamma1, Gamma2)``. With
    ``P2 = I - Gamma2^T (Gamma2 Gamma2^T)^{-1} Gamma2`` the leading block of the
    result is ``W1 - Gamma1 P2 (I + P2 Gamma1^T W1^{-1} Gamma1 P2)^{-1} P2 Gamma1^T``
    and every other block vanishes.

    Raises
    ------
    SingularityError
        If ``[W Gamma]`` does not have full row rank.
    """
    Ws = symmetrize(W, "W")
    m = Ws.shape[0]
    G = np.array(Gamma, dtype=float)
    if G.size == 0:
        G = np.zeros((m, 0))
    G = G.reshape(m, -1)
    if not np.all(np.isfinite(G)):
        raise InvalidInputError("Gamma has non-finite entries")
    ell = G.shape[1]
    if rank_tol is None:
        rank_tol = default_rank_tol((m, m + ell))

    w, V = np.linalg.eigh(Ws)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    if w.size and w[-1] < _eig_floor(w[::-1], PSD_TOL):
        raise NotPsdError("W is not PSD", min_eig=float(w[-1]))
    scale = max(float(w[0]), 0.0) if w.size else 0.0
    r = int(np.sum(w > rank_tol * scale)) if scale > 0 else 0

    Gr = V.T @ G
    G1, G2 = Gr[:r], Gr[r:]
    if m - r > 0:
        if ell == 0 or np.linalg.matrix_rank(G2, tol=rank_tol * max(1.0, np.abs(G2).max())) < m - r:
            raise SingularityError("[W Gamma] is rank deficient; W + Gamma Gamma^T is singular")
        P2 = np.eye(ell) - G2.T @ np.linalg.solve(G2 @ G2.T, G2)
    else:
        P2 = np.eye(ell)

    W1 = np.diag(w[:r])
    if ell:
        G1P = G1 @ P2
        inner = np.eye(ell) + G1P.T @ np.linalg.solve(W1, G1P)
        block = W1 - G1P @ np.linalg.solve(inner, G1P.T)
    else:
        block = W1
    out = np.zeros((m, m))
    out[:r, :r] = block
    return symmetrize(V @ out @ V.T)
