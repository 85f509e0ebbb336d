"""Reachable terminal covariances and covariance controllability, discrete time.

The reachable set at step ``k`` is represented by an intersection of
projected constraints: with ``P_i`` the orthogonal projector onto
``(range G(k, i))^⊥`` and ``N_j = Phi(k, j) D_{j-1} D_{j-1}^T Phi(k, j)^T``,

* ``P_0 Sigma P_0 == P_0 [Phi(k,0) Sigma_0 Phi(k,0)^T + sum_{j>=1} N_j] P_0``
* ``P_i Sigma P_i ⪰ P_i [sum_{j>=i} N_j] P_i`` for ``i = 1..k``

together with ``Sigma ⪰ 0``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .dsys import gramian_table, phi_table
from .errors import StepIndexError

__all__ = [
    "Constraint",
    "ReachabilityCertificate",
    "Violation",
    "ReachabilityVerdict",
    "ControllabilityVerdict",
    "reach_set_description",
    "is_reachable_cov",
    "cov_controllable",
    "mean_reachable",
]

EQ_TOL = 1e-8
INEQ_TOL = 1e-8


@dataclass(frozen=True)
class Constraint:
    i: int
    projector: np.ndarray
    target: np.ndarray
    kind: str  # "equality" | "psd-inequality"

    @property
    def projected_target(self):
        return self.projector @ self.target @ self.projector


@dataclass(frozen=True)
class ReachabilityCertificate:
    k: int
    constraints: tuple
    rank_tol: float = None

    @property
    def equality(self):
        return self.constraints[0]

    def fixed_entries(self):
        """Return ``(P_0, P_0 T_0 P_0)``: the pinned part of every reachable covariance."""
        c = self.equality
        return c.projector, c.projected_target


@dataclass(frozen=True)
class Violation:
    i: object  # step index, or None for the PSD requirement on Sigma itself
    kind: str
    residual: float


@dataclass
class ReachabilityVerdict:
    member: bool
    violations: list = field(default_factory=list)
    residuals: list = field(default_factory=list)

    def __bool__(self):
        return self.member


@dataclass
class ControllabilityVerdict:
    controllable: bool
    failed: str = None
    failed_step: int = None
    cross_check: bool = None  # verdict from the controllability-Gramian route, if evaluated

    def __bool__(self):
        return self.controllable


def reach_set_description(sys, sigma0, k, rank_tol=None):
    """Build the intersection-form certificate of the reachable set at step ``k``."""
    if k < 1:
        raise StepIndexError(f"k must be >= 1, got {k}")
    S0 = matcore.symmetrize(sigma0, "sigma0")
    phis = phi_table(sys, k)
    grams = gramian_table(sys, k)
    noise = [None] + [phis[j] @ sys.D_at(j - 1) for j in range(1, k + 1)]
    noise = [None] + [M @ M.T for M in noise[1:]]
    tails = [None] * (k + 2)
    tails[k + 1] = np.zeros((sys.n, sys.n))
    for i in range(k, 0, -1):
        tails[i] = tails[i + 1] + noise[i]

    constraints = []
    P0 = matcore.range_projector(grams[0], "complement", rank_tol)
    T0 = matcore.symmetrize(phis[0] @ S0 @ phis[0].T + tails[1])
    constraints.append(Constraint(0, P0, T0, "equality"))
    for i in range(1, k + 1):
        Pi = matcore.range_projector(grams[i], "complement", rank_tol)
        constraints.append(Constraint(i, Pi, matcore.symmetrize(tails[i]), "psd-inequality"))
    return ReachabilityCertificate(k, tuple(constraints), rank_tol)


def is_reachable_cov(sys, sigma0, k, sigmaK, tol=EQ_TOL, certificate=None):
    """Decide whether ``sigmaK`` is reachable at step ``k`` from ``sigma0``.

    Every constraint of the certificate is evaluated and its residual
    recorded, so a negative verdict explains which constraint failed and by
    how much. Equality residuals are ``||P Sigma P - P T P||_F`` and fail
    above ``tol * (1 + ||P T P||_F)``; inequality residuals are the
    magnitude of the most negative eigenvalue of ``P Sigma P - P T P``.
    """
    cert = certificate if certificate is not None else reach_set_description(sys, sigma0, k)
    S = matcore.symmetrize(sigmaK, "sigmaK")
    violations, residuals = [], []

    lam = matcore.min_eig(S)
    if not matcore.is_psd(S, tol):
        violations.append(Violation(None, "psd", -lam))

    for c in cert.constraints:
        P = c.projector
        target = c.projected_target
        diff = matcore.symmetrize(P @ S @ P - target)
        if c.kind == "equality":
            r = float(np.linalg.norm(diff))
            ok = r <= tol * (1.0 + np.linalg.norm(target))
        else:
            r = max(0.0, -matcore.min_eig(diff))
            ok = matcore.is_psd(diff, tol)
        residuals.append(Violation(c.i, c.kind, r))
        if not ok:
            violations.append(Violation(c.i, c.kind, r))
    return ReachabilityVerdict(not violations, violations, residuals)


def _all_invertible(sys, k):
    for j in range(k):
        c = np.linalg.cond(sys.A_at(j))
        if not np.isfinite(c) or c >= 1e12:
            return False
    return True


def cov_controllable(sys, k, rank_tol=None):
    """Covariance controllability from step 0 to ``k``.

    Checks ``G(k, 0) ≻ 0`` and ``range Phi(k, i) D_{i-1} ⊆ range G(k, i)``
    for ``i = 1..k``. When every ``A_j`` is invertible the equivalent test
    on the controllability Gramians is evaluated as well and reported in
    ``cross_check``; a disagreement indicates a numerically ambiguous rank.
    """
    if k < 1:
        raise StepIndexError(f"k must be >= 1, got {k}")
    phis = phi_table(sys, k)
    grams = gramian_table(sys, k)
    n = sys.n

    failed, failed_step = None, None
    if matcore.rank(grams[0], rank_tol) < n:
        failed, failed_step = "reachability Gramian G(k,0) is singular", 0
    else:
        for i in range(1, k + 1):
            if not matcore.range_inclusion(phis[i] @ sys.D_at(i - 1), grams[i], rank_tol):
                failed, failed_step = f"noise at step {i - 1} leaves range G(k,{i})", i
                break
    verdict = ControllabilityVerdict(failed is None, failed, failed_step)

    if _all_invertible(sys, k):
        ok = True
        inv = [np.linalg.inv(P) for P in phis]
        ghat0 = inv[0] @ grams[0] @ inv[0].T
        if matcore.rank(ghat0, rank_tol) < n:
            ok = False
        else:
            for i in range(1, k + 1):
                ghat = inv[i] @ grams[i] @ inv[i].T
                if not matcore.range_inclusion(sys.D_at(i - 1), ghat, rank_tol):
                    ok = False
                    break
        verdict.cross_check = ok
    return verdict


def mean_reachable(sys, mu0, k, muK, tol=EQ_TOL):
    """True iff ``muK - Phi(k, 0) mu0`` lies in ``range G(k, 0)`` (within ``tol``)."""
    if k < 1:
        raise StepIndexError(f"k must be >= 1, got {k}")
    mu0 = np.asarray(mu0, dtype=float).reshape(sys.n)
    muK = np.asarray(muK, dtype=float).reshape(sys.n)
    P = matcore.range_projector(gramian_table(sys, k)[0], "complement")
    return bool(np.linalg.norm(P @ (muK - phi_table(sys, k)[0] @ mu0)) <= tol)
