"""Continuous-time linear stochastic systems ``dx = (A x + B u) dt + D dw`` on ``[0, T]``.

All time integration uses fixed-step classical RK4 on the uniform grid
``t_j = j T / N_g``. A single pass integrates, jointly,

* ``Phi(t, 0)``       from ``d/dt Phi = M(t) Phi``,
* ``Psi(t) = Phi(0, t)`` from ``d/dt Psi = -Psi M(t)``,
* ``Ghat(t, 0)``      from ``d/dt Ghat = Psi B B^T Psi^T``,

so every Gramian is fourth-order accurate in ``h``. Integrals of integrands
that are only known on grid nodes use composite Simpson quadrature.
Values between nodes are obtained with one partial RK4 step from the
preceding node.
"""

from collections import namedtuple
from functools import cached_property

import numpy as np
from scipy.integrate import simpson

from . import matcore
from .errors import (
    ConditioningError,
    DimensionError,
    DivergenceError,
    InvalidInputError,
    NotPsdError,
    StepIndexError,
)

__all__ = [
    "ContinuousLtvSystem",
    "Gramians",
    "ControllabilityVerdictC",
    "phi_c",
    "gramians_c",
    "propagate_cov_c",
    "lyapunov_path",
    "upper_bound_sample",
    "upper_bound_witness",
    "cov_controllable_c",
]

DEFAULT_GRID = 400
COND_LIMIT = 1e12
BLOWUP = 1e12

Gramians = namedtuple("Gramians", ["G", "Ghat"])


class _Interp:
    """Piecewise-linear matrix function through samples ``(times[j], values[j])``."""

    def __init__(self, times, values):
        self.times = np.asarray(times, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.ndim != 3 or self.values.shape[0] != self.times.size:
            raise DimensionError("samples must have shape (len(times), rows, cols)")
        if np.any(np.diff(self.times) <= 0):
            raise InvalidInputError("sample times must be strictly increasing")

    def __call__(self, t):
        ts = self.times
        j = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        w = (t - ts[j]) / (ts[j + 1] - ts[j])
        return (1.0 - w) * self.values[j] + w * self.values[j + 1]


def _as_function(M, name, rows=None):
    if callable(M):
        return M
    C = matcore.as_matrix(M, name)
    if rows is not None and C.shape[0] != rows:
        raise DimensionError(f"{name} has {C.shape[0]} rows, expected {rows}")
    return lambda t, C=C: C


class ContinuousLtvSystem:
    """Coefficients ``A(t)``, ``B(t)``, ``D(t)`` on ``[0, T]`` with an RK4 grid.

    Each coefficient is either a constant array or a callable ``t -> array``;
    callables must be side-effect free. ``D=None`` means no noise.
    """

    def __init__(self, A, B, D=None, T=1.0, grid=DEFAULT_GRID):
        if not T > 0:
            raise InvalidInputError(f"T must be positive, got {T}")
        if int(grid) < 2:
            raise InvalidInputError(f"grid must be >= 2, got {grid}")
        self.T = float(T)
        self.grid = int(grid)
        self._A = _as_function(A, "A")
        A0 = matcore.as_matrix(self._A(0.0), "A(0)")
        self.n = A0.shape[0]
        self._B = _as_function(B, "B", self.n)
        self.p = matcore.as_matrix(self._B(0.0), "B(0)").shape[1]
        if D is None:
            D = np.zeros((self.n, 0))
        self._D = _as_function(D, "D", self.n)
        self.q = np.asarray(self._D(0.0), dtype=float).reshape(self.n, -1).shape[1]
        for t in self.nodes:
            for name, f, cols in (("A", self._A, self.n), ("B", self._B, self.p), ("D", self._D, self.q)):
                v = np.asarray(f(t), dtype=float).reshape(self.n, -1)
                if v.shape != (self.n, cols):
                    raise DimensionError(f"{name}({t:g}) has shape {v.shape}, expected {(self.n, cols)}")
                if not np.all(np.isfinite(v)):
                    raise InvalidInputError(f"{name}({t:g}) has non-finite entries")

    @classmethod
    def from_samples(cls, times, A, B, D=None, grid=DEFAULT_GRID):
        """Build a system from coefficient samples, linearly interpolated in time."""
        times = np.asarray(times, dtype=float)
        if times[0] != 0.0:
            raise InvalidInputError("sample times must start at 0")
        fA = _Interp(times, A)
        fB = _Interp(times, np.asarray(B, dtype=float).reshape(times.size, fA.values.shape[1], -1))
        fD = None
        if D is not None:
            fD = _Interp(times, np.asarray(D, dtype=float).reshape(times.size, fA.values.shape[1], -1))
        return cls(fA, fB, fD, T=float(times[-1]), grid=grid)

    def with_grid(self, grid):
        return ContinuousLtvSystem(self._A, self._B, self._D, self.T, grid)

    def A_at(self, t):
        return np.asarray(self._A(t), dtype=float).reshape(self.n, self.n)

    def B_at(self, t):
        return np.asarray(self._B(t), dtype=float).reshape(self.n, self.p)

    def D_at(self, t):
        return np.asarray(self._D(t), dtype=float).reshape(self.n, self.q)

    @property
    def h(self):
        return self.T / self.grid

    @cached_property
    def nodes(self):
        return np.linspace(0.0, self.T, self.grid + 1)

    @cached_property
    def flow(self):
        """Open-loop :class:`Flow` of ``A(t)`` with Gramians of ``B(t)``."""
        return Flow(self, self.A_at)

    def check_time(self, *ts):
        for t in ts:
            if not (-1e-12 * self.T <= t <= self.T * (1 + 1e-12)):
                raise StepIndexError(f"time {t} outside [0, {self.T}]")

    def __repr__(self):
        return f"ContinuousLtvSystem(n={self.n}, p={self.p}, q={self.q}, T={self.T}, grid={self.grid})"


class Flow:
    """RK4 fundamental matrices of ``M(t)`` plus the controllability Gramian of ``B(t)``."""

    def __init__(self, sys, M):
        self.sys = sys
        self.M = M
        n = sys.n
        N = sys.grid
        self.Phi = np.empty((N + 1, n, n))
        self.Psi = np.empty((N + 1, n, n))
        self.Ghat = np.empty((N + 1, n, n))
        state = (np.eye(n), np.eye(n), np.zeros((n, n)))
        self.Phi[0], self.Psi[0], self.Ghat[0] = state
        ts = sys.nodes
        for j in range(N):
            state = self._step(state, ts[j], ts[j + 1] - ts[j])
            self.Phi[j + 1], self.Psi[j + 1], self.Ghat[j + 1] = state
            if not np.all(np.isfinite(state[0])) or np.abs(state[0]).max() > BLOWUP:
                raise DivergenceError(f"transition matrix diverged near t={ts[j + 1]:g}")
        self.Ghat = 0.5 * (self.Ghat + np.swapaxes(self.Ghat, 1, 2))

    def _rhs(self, t, state):
        Phi, Psi, _ = state
        M = self.M(t)
        PB = Psi @ self.sys.B_at(t)
        return M @ Phi, -Psi @ M, PB @ PB.T

    def _step(self, state, t, h):
        k1 = self._rhs(t, state)
        k2 = self._rhs(t + h / 2, tuple(s + h / 2 * k for s, k in zip(state, k1)))
        k3 = self._rhs(t + h / 2, tuple(s + h / 2 * k for s, k in zip(state, k2)))
        k4 = self._rhs(t + h, tuple(s + h * k for s, k in zip(state, k3)))
        return tuple(s + h / 6 * (a + 2 * b + 2 * c + d) for s, a, b, c, d in zip(state, k1, k2, k3, k4))

    def at(self, t):
        """``(Phi(t, 0), Phi(0, t), Ghat(t, 0))`` at an arbitrary time in ``[0, T]``."""
        ts = self.sys.nodes
        h = self.sys.h
        j = int(round(t / h))
        if abs(t - ts[min(j, ts.size - 1)]) <= 1e-12 * max(1.0, self.sys.T):
            j = min(j, ts.size - 1)
            return self.Phi[j], self.Psi[j], self.Ghat[j]
        j = int(np.clip(np.floor(t / h), 0, ts.size - 2))
        Phi, Psi, G = self._step((self.Phi[j], self.Psi[j], self.Ghat[j]), ts[j], t - ts[j])
        return Phi, Psi, 0.5 * (G + G.T)

    def transition(self, t1, t0):
        return self.at(t1)[0] @ self.at(t0)[1]


def _feedback_function(sys, F):
    if F is None:
        return None
    if callable(F):
        return F
    arr = np.asarray(F, dtype=float)
    if arr.ndim <= 2:
        C = matcore.as_matrix(arr, "F").reshape(sys.p, sys.n)
        return lambda t, C=C: C
    if arr.shape[0] != sys.grid + 1:
        raise DimensionError(f"grid-sampled feedback needs {sys.grid + 1} samples, got {arr.shape[0]}")
    return _Interp(sys.nodes, arr)


def _closed_loop(sys, F):
    Ff = _feedback_function(sys, F)
    if Ff is None:
        return sys.A_at
    return lambda t: sys.A_at(t) + sys.B_at(t) @ np.asarray(Ff(t), dtype=float).reshape(sys.p, sys.n)


def phi_c(sys, t1, t0, feedback=None):
    """Transition matrix from ``t0`` to ``t1`` of ``A`` (or ``A + B F`` with feedback)."""
    sys.check_time(t1, t0)
    if t1 == t0:
        return np.eye(sys.n)
    flow = sys.flow if feedback is None else Flow(sys, _closed_loop(sys, feedback))
    return flow.transition(t1, t0)


def gramians_c(sys, T, t):
    """Reachability Gramian ``G(T, t)`` and controllability Gramian ``Ghat(T, t)``."""
    sys.check_time(T, t)
    if t > T:
        raise StepIndexError(f"need t <= T, got t={t} > T={T}")
    PhiT, _, GT = sys.flow.at(T)
    Phit, _, Gt = sys.flow.at(t)
    W = GT - Gt
    G = matcore.symmetrize(PhiT @ W @ PhiT.T)
    Ghat = matcore.symmetrize(Phit @ W @ Phit.T)
    return Gramians(G, Ghat)


def lyapunov_path(sys, sigma0, feedback=None, noise=True):
    """RK4 solution of ``dS/dt = M S + S M^T + D D^T`` at every grid node."""
    S = matcore.symmetrize(sigma0, "sigma0")
    if S.shape != (sys.n, sys.n):
        raise DimensionError(f"sigma0 has shape {S.shape}, expected {(sys.n, sys.n)}")
    M = _closed_loop(sys, feedback)

    def rhs(t, S):
        Mt = M(t)
        out = Mt @ S + S @ Mt.T
        if noise:
            Dt = sys.D_at(t)
            out = out + Dt @ Dt.T
        return out

    ts = sys.nodes
    path = np.empty((ts.size, sys.n, sys.n))
    path[0] = S
    for j in range(sys.grid):
        t, h = ts[j], ts[j + 1] - ts[j]
        k1 = rhs(t, S)
        k2 = rhs(t + h / 2, S + h / 2 * k1)
        k3 = rhs(t + h / 2, S + h / 2 * k2)
        k4 = rhs(t + h, S + h * k3)
        S = S + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        S = 0.5 * (S + S.T)
        if not np.all(np.isfinite(S)) or np.abs(S).max() > BLOWUP:
            raise DivergenceError(f"covariance diverged near t={ts[j + 1]:g}")
        path[j + 1] = S
    return path


def propagate_cov_c(sys, sigma0, feedback=None):
    """Terminal covariance ``Sigma(T)`` under ``u = F(t) x``.

    ``feedback`` is a callable ``t -> F(t)``, a constant ``p x n`` array, or
    an array of ``grid + 1`` node samples (linearly interpolated).
    """
    S = lyapunov_path(sys, sigma0, feedback)[-1]
    if not matcore.is_psd(S, 1e-8):
        raise NotPsdError("propagated covariance lost positive semi-definiteness", matcore.min_eig(S))
    return S


def _grid_values(sys, K):
    if callable(K):
        return np.array([np.asarray(K(t), dtype=float).reshape(sys.n, sys.n) for t in sys.nodes])
    arr = np.asarray(K, dtype=float)
    if arr.ndim == 2:
        return np.broadcast_to(arr, (sys.grid + 1, sys.n, sys.n))
    if arr.shape != (sys.grid + 1, sys.n, sys.n):
        raise DimensionError(f"K must have shape {(sys.grid + 1, sys.n, sys.n)}, got {arr.shape}")
    return arr


def _upper_bound_factors(sys, K):
    Kv = _grid_values(sys, K)
    flow = sys.flow
    PhiT, GT = flow.Phi[-1], flow.Ghat[-1]
    # Phi(T, t) = Phi(T,0) Psi(t);  G(T, t) = Phi(T,0) [Ghat(T,0) - Ghat(t,0)] Phi(T,0)^T
    PhiTt = PhiT @ flow.Psi
    GTt = PhiT @ (GT - flow.Ghat) @ PhiT.T
    return PhiTt + GTt @ Kv


def upper_bound_sample(sys, sigma0, K):
    """Element of the outer bound of the reachable set parameterized by ``K(t)``.

    Evaluates ``M(0) Sigma_0 M(0)^T + int_0^T M(t) D D^T M(t)^T dt`` with
    ``M(t) = Phi_A(T, t) + G(T, t) K(t)`` on the grid nodes.
    """
    S0 = matcore.symmetrize(sigma0, "sigma0")
    Mt = _upper_bound_factors(sys, K)
    conds = np.linalg.cond(Mt)
    bad = np.flatnonzero(~np.isfinite(conds) | (conds >= COND_LIMIT))
    if bad.size:
        j = int(bad[0])
        raise ConditioningError(
            f"Phi_A(T,t) + G(T,t) K(t) is singular at node {j} (t={sys.nodes[j]:g})"
        )
    D = np.array([sys.D_at(t) for t in sys.nodes])
    MD = Mt @ D
    integrand = MD @ np.swapaxes(MD, 1, 2)
    total = Mt[0] @ S0 @ Mt[0].T + simpson(integrand, x=sys.nodes, axis=0)
    return matcore.symmetrize(total)


def upper_bound_witness(sys, feedback, rank_tol=None):
    """Node samples of ``K(t) = G(T,t)^+ (Phi_{A+BF}(T,t) - Phi_A(T,t))``.

    For any feedback the closed-loop transition matrix has the form
    ``Phi_A(T,t) + G(T,t) K(t)``; this returns the ``K`` that realizes it.
    """
    cl = Flow(sys, _closed_loop(sys, feedback))
    flow = sys.flow
    PhiT, GT = flow.Phi[-1], flow.Ghat[-1]
    K = np.empty((sys.grid + 1, sys.n, sys.n))
    for j in range(sys.grid + 1):
        G = PhiT @ (GT - flow.Ghat[j]) @ PhiT.T
        diff = cl.Phi[-1] @ cl.Psi[j] - PhiT @ flow.Psi[j]
        K[j] = matcore.pinv(matcore.symmetrize(G), rank_tol) @ diff
    return K


class ControllabilityVerdictC:
    def __init__(self, controllable, failed_time=None, failed=None, cross_check=None):
        self.controllable = controllable
        self.failed_time = failed_time
        self.failed = failed
        self.cross_check = cross_check

    def __bool__(self):
        return self.controllable

    def __repr__(self):
        return (
            f"ControllabilityVerdictC(controllable={self.controllable}, "
            f"failed_time={self.failed_time}, cross_check={self.cross_check})"
        )


def cov_controllable_c(sys, rank_tol=None):
    """Covariance controllability on ``[0, T]``, checked at the grid nodes.

    Primary test: ``Ghat(T, 0) ≻ 0`` and ``range D(t) ⊆ range Ghat(T, t)``
    at every node ``t < T``. The reachability-Gramian form
    (``G(T, 0) ≻ 0``, ``range Phi(T,t) D(t) ⊆ range G(T, t)``) is evaluated
    too and reported as ``cross_check``. Behaviour strictly between nodes is
    not examined.
    """
    n = sys.n
    flow = sys.flow
    PhiT, GT = flow.Phi[-1], flow.Ghat[-1]

    failed_time, failed = None, None
    if matcore.rank(GT, rank_tol) < n:
        failed_time, failed = 0.0, "controllability Gramian Ghat(T,0) is singular"
    else:
        for j, t in enumerate(sys.nodes[:-1]):
            W = GT - flow.Ghat[j]
            Ghat = flow.Phi[j] @ W @ flow.Phi[j].T
            if not matcore.range_inclusion(sys.D_at(t), matcore.symmetrize(Ghat), rank_tol):
                failed_time, failed = float(t), f"range D(t) not in range Ghat(T,t) at t={t:g}"
                break

    cross = True
    G0 = PhiT @ GT @ PhiT.T
    if matcore.rank(matcore.symmetrize(G0), rank_tol) < n:
        cross = False
    else:
        for j, t in enumerate(sys.nodes[:-1]):
            G = matcore.symmetrize(PhiT @ (GT - flow.Ghat[j]) @ PhiT.T)
            if not matcore.range_inclusion(PhiT @ flow.Psi[j] @ sys.D_at(t), G, rank_tol):
                cross = False
                break
    return ControllabilityVerdictC(failed_time is None, failed_time, failed, cross)
