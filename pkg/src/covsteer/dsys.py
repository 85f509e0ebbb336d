"""Discrete-time linear stochastic systems ``x_{k+1} = A_k x_k + B_k u_k + D_k w_k``.

Transition matrices, reachability and controllability Gramians, and
covariance propagation under randomized state feedback
``u_k = F_k x_k + nu_k`` with ``Cov(nu_k) = V_k``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import AssumptionError, DimensionError, InvalidInputError, NotPsdError, StepIndexError

__all__ = [
    "DiscreteLtvSystem",
    "DiscretePolicy",
    "CovTrajectory",
    "phi",
    "phi_table",
    "reach_gramian",
    "gramian_table",
    "ctrl_gramian",
    "propagate_cov",
]

COND_LIMIT = 1e12


def _as_sequence(M, name):
    """Split ``M`` into (list of 2-D arrays, constant flag)."""
    arr = np.asarray(M, dtype=float)
    if arr.ndim <= 2:
        return [matcore.as_matrix(arr, name)], True
    if arr.ndim != 3:
        raise DimensionError(f"{name} must be a matrix or a sequence of matrices")
    return [matcore.as_matrix(m, f"{name}[{j}]") for j, m in enumerate(arr)], False


class DiscreteLtvSystem:
    """Coefficient sequences ``A_k`` (n x n), ``B_k`` (n x p), ``D_k`` (n x q).

    Each coefficient may be a single 2-D array (used at every step) or a
    sequence of arrays indexed by step. ``D`` may be omitted for a
    noiseless system. ``horizon`` is the number of steps the coefficients
    cover; it is inferred from the longest sequence and is ``None`` when
    every coefficient is constant.
    """

    def __init__(self, A, B, D=None, horizon=None):
        self._A, a_const = _as_sequence(A, "A")
        self._B, b_const = _as_sequence(B, "B")
        n = self._A[0].shape[0]
        if D is None:
            D = np.zeros((n, 0))
        self._D, d_const = _as_sequence(D, "D")
        self.n = n
        self.p = self._B[0].shape[1]
        self.q = self._D[0].shape[1]
        for name, seq, cols in (("A", self._A, n), ("B", self._B, self.p), ("D", self._D, self.q)):
            for j, M in enumerate(seq):
                if M.shape != (n, cols):
                    raise DimensionError(f"{name}[{j}] has shape {M.shape}, expected {(n, cols)}")
        self._const = {"A": a_const, "B": b_const, "D": d_const}
        lengths = [len(s) for s, c in ((self._A, a_const), (self._B, b_const), (self._D, d_const)) if not c]
        if lengths and len(set(lengths)) > 1:
            raise DimensionError(f"time-varying coefficient sequences differ in length: {lengths}")
        inferred = lengths[0] if lengths else None
        if horizon is not None and inferred is not None and horizon > inferred:
            raise DimensionError(f"horizon {horizon} exceeds coefficient length {inferred}")
        self.horizon = horizon if horizon is not None else inferred

    @property
    def time_invariant(self):
        return all(self._const.values())

    def _at(self, name, seq, k):
        if self._const[name]:
            return seq[0]
        if not 0 <= k < len(seq):
            raise StepIndexError(f"{name}_{k} requested but coefficients cover steps 0..{len(seq) - 1}")
        return seq[k]

    def A_at(self, k):
        return self._at("A", self._A, k)

    def B_at(self, k):
        return self._at("B", self._B, k)

    def D_at(self, k):
        return self._at("D", self._D, k)

    def check_steps(self, k):
        if self.horizon is not None and k > self.horizon:
            raise StepIndexError(f"step {k} beyond horizon {self.horizon}")

    def __repr__(self):
        kind = "LTI" if self.time_invariant else f"LTV(horizon={self.horizon})"
        return f"DiscreteLtvSystem({kind}, n={self.n}, p={self.p}, q={self.q})"


@dataclass
class DiscretePolicy:
    """Randomized state feedback ``u_k = F_k x_k + nu_k``, ``Cov(nu_k) = V_k``."""

    F: list
    V: list

    def __post_init__(self):
        self.F = [matcore.as_matrix(f, "F") for f in self.F]
        self.V = [matcore.symmetrize(v, "V") for v in self.V]
        if len(self.F) != len(self.V):
            raise DimensionError("F and V must have the same length")
        for j, v in enumerate(self.V):
            if not matcore.is_psd(v, 1e-9):
                raise NotPsdError(f"V[{j}] is not PSD", min_eig=matcore.min_eig(v))

    def __len__(self):
        return len(self.F)

    @classmethod
    def zeros(cls, sys, k):
        return cls([np.zeros((sys.p, sys.n))] * k, [np.zeros((sys.p, sys.p))] * k)


@dataclass
class CovTrajectory:
    sigmas: list
    means: list = field(default=None)

    @property
    def final(self):
        return self.sigmas[-1]


def _check_order(k, i):
    if i < 0 or k < 0:
        raise StepIndexError(f"steps must be non-negative, got k={k}, i={i}")
    if i > k:
        raise StepIndexError(f"need i <= k, got i={i} > k={k}")


def _closed_loop(sys, j, policy):
    A = sys.A_at(j)
    if policy is None:
        return A
    return A + sys.B_at(j) @ policy.F[j]


def phi(sys, k, i, policy=None):
    """State transition matrix ``A_{k-1} ... A_i`` (closed loop if ``policy`` is given)."""
    _check_order(k, i)
    sys.check_steps(k)
    out = np.eye(sys.n)
    for j in range(i, k):
        out = _closed_loop(sys, j, policy) @ out
    return out


def phi_table(sys, k, policy=None):
    """List ``[Phi(k, 0), Phi(k, 1), ..., Phi(k, k)]``."""
    _check_order(k, 0)
    sys.check_steps(k)
    table = [None] * (k + 1)
    table[k] = np.eye(sys.n)
    for j in range(k - 1, -1, -1):
        table[j] = table[j + 1] @ _closed_loop(sys, j, policy)
    return table


def gramian_table(sys, k):
    """List ``[G(k, 0), ..., G(k, k)]`` of reachability Gramians."""
    phis = phi_table(sys, k)
    G = [None] * (k + 1)
    G[k] = np.zeros((sys.n, sys.n))
    for i in range(k - 1, -1, -1):
        PB = phis[i + 1] @ sys.B_at(i)
        G[i] = matcore.symmetrize(G[i + 1] + PB @ PB.T)
    return G


def reach_gramian(sys, k, i):
    """``G(k, i) = sum_{j=i}^{k-1} Phi(k, j+1) B_j B_j^T Phi(k, j+1)^T``."""
    _check_order(k, i)
    sys.check_steps(k)
    G = np.zeros((sys.n, sys.n))
    for j in range(i, k):
        A, B = sys.A_at(j), sys.B_at(j)
        G = A @ G @ A.T + B @ B.T
    return matcore.symmetrize(G)


def _check_invertible(sys, i, k):
    for j in range(i, k):
        c = np.linalg.cond(sys.A_at(j))
        if not np.isfinite(c) or c >= COND_LIMIT:
            raise AssumptionError(f"A_{j} is not invertible (condition number {c:.3e})", step=j)


def ctrl_gramian(sys, k, i):
    """Controllability Gramian ``Phi(i, k) G(k, i) Phi(i, k)^T``; needs invertible ``A_j``."""
    _check_order(k, i)
    _check_invertible(sys, i, k)
    G = reach_gramian(sys, k, i)
    Pinv = np.linalg.inv(phi(sys, k, i))
    return matcore.symmetrize(Pinv @ G @ Pinv.T)


def propagate_cov(sys, sigma0, policy, k, mu0=None):
    """Propagate ``Sigma_{j+1} = (A+BF) Sigma_j (A+BF)^T + B V B^T + D D^T``.

    Returns a :class:`CovTrajectory` with ``Sigma_0 .. Sigma_k`` and, when
    ``mu0`` is given, the means ``mu_{j+1} = (A_j + B_j F_j) mu_j``.
    """
    _check_order(k, 0)
    sys.check_steps(k)
    if len(policy) < k:
        raise InvalidInputError(f"policy covers {len(policy)} steps, need {k}")
    S = matcore.symmetrize(sigma0, "sigma0")
    if S.shape != (sys.n, sys.n):
        raise DimensionError(f"sigma0 has shape {S.shape}, expected {(sys.n, sys.n)}")
    sigmas = [S]
    means = None
    if mu0 is not None:
        mu = np.asarray(mu0, dtype=float).reshape(sys.n)
        means = [mu]
    for j in range(k):
        V = policy.V[j]
        if not matcore.is_psd(V, 1e-9):
            raise NotPsdError(f"V[{j}] is not PSD", min_eig=matcore.min_eig(V))
        Acl = _closed_loop(sys, j, policy)
        B, D = sys.B_at(j), sys.D_at(j)
        S = matcore.symmetrize(Acl @ S @ Acl.T + B @ V @ B.T + D @ D.T)
        sigmas.append(S)
        if means is not None:
            means.append(Acl @ means[-1])
    return CovTrajectory(sigmas, means)
