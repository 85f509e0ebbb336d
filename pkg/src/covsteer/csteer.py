"""Minimum-energy covariance steering in continuous time.

The Riccati equation ``dPi/dt = -A^T Pi - Pi A + Pi B B^T Pi`` has the closed form

    Pi(t) = Phi_A(0,t)^T Pi_0 (I - Ghat(t,0) Pi_0)^{-1} Phi_A(0,t)

and a solution exists on ``[0, T]`` iff every eigenvalue of
``I - Ghat(T,0) Pi_0`` is positive. The feedback ``u = -B^T Pi x`` sends
``Sigma_0`` to ``f(Pi_0)``; steering to a prescribed terminal covariance
amounts to solving ``f(Pi_0) = Sigma_T``, done here by damped Newton.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import matcore
from .csys import cov_controllable_c, propagate_cov_c
from .errors import (
    ConditioningError,
    DimensionError,
    NoConvergenceError,
    NoSolutionError,
    PreconditionError,
    StepIndexError,
)

__all__ = [
    "RiccatiSolution",
    "ContinuousSteeringLaw",
    "FMapWorkspace",
    "NewtonConfig",
    "riccati_conditions",
    "riccati_exists",
    "riccati_solve",
    "integrate_riccati",
    "phi_pi",
    "fmap_workspace",
    "f_map",
    "f_jacobian",
    "steer_min_energy",
    "closed_loop_cov",
    "duplication_matrix",
    "elimination_matrix",
]

COND_LIMIT = 1e12
ADMISSIBLE_MARGIN = 1e-10


def _square(M, n, name):
    A = matcore.as_matrix(M, name)
    if A.shape != (n, n):
        raise DimensionError(f"{name} has shape {A.shape}, expected {(n, n)}")
    return A


def riccati_conditions(sys, pi0):
    """Return ``(min eig of I - Ghat(T,0) Pi_0, max eig of Ghat^{1/2} Pi_0 Ghat^{1/2})``.

    The first is the existence margin (positive means a solution exists on
    ``[0, T]``); the second must be below one for the same conclusion.
    ``Ghat(T,0) Pi_0`` is similar to a symmetric matrix, so both spectra are
    real; the real parts are taken to discard round-off imaginary parts.
    """
    P = matcore.symmetrize(_square(pi0, sys.n, "pi0"))
    G = sys.flow.Ghat[-1]
    lam_iii = float(np.min(np.linalg.eigvals(np.eye(sys.n) - G @ P).real))
    R = matcore.psd_sqrt(G)
    lam_v = float(np.linalg.eigvalsh(matcore.symmetrize(R @ P @ R))[-1])
    return lam_iii, lam_v


def riccati_exists(sys, pi0, tol=0.0):
    """True iff the Riccati equation started at ``Pi(0) = pi0`` has a solution on ``[0, T]``."""
    lam_iii, _ = riccati_conditions(sys, pi0)
    return lam_iii > tol


def _check_exists(sys, P):
    lam, _ = riccati_conditions(sys, P)
    if not lam > 0:
        raise NoSolutionError(
            f"Riccati solution escapes before T: I - Ghat(T,0) Pi_0 has eigenvalue {lam:.6g}",
            eigenvalue=lam,
        )


def _pi_from(P, Psi, Ghat):
    M = np.eye(P.shape[0]) - Ghat @ P
    return matcore.symmetrize(Psi.T @ P @ np.linalg.solve(M, Psi))


@dataclass
class RiccatiSolution:
    """Closed-form Riccati trajectory determined by ``pi0``."""

    sys: object
    pi0: np.ndarray

    def __post_init__(self):
        self.pi0 = matcore.symmetrize(_square(self.pi0, self.sys.n, "pi0"))
        _check_exists(self.sys, self.pi0)

    @property
    def ghat_cache(self):
        return self.sys.flow.Ghat

    def at(self, t):
        self.sys.check_time(t)
        _, Psi, Ghat = self.sys.flow.at(t)
        return _pi_from(self.pi0, Psi, Ghat)

    def nodes(self):
        fl = self.sys.flow
        return np.array([_pi_from(self.pi0, fl.Psi[j], fl.Ghat[j]) for j in range(self.sys.grid + 1)])


@dataclass
class ContinuousSteeringLaw:
    """Feedback ``u(t) = -B(t)^T Pi(t) x(t)`` with its Newton diagnostics."""

    riccati: RiccatiSolution
    residual: float = None
    iterations: int = None
    history: list = field(default_factory=list)

    def gain(self, t):
        return -self.riccati.sys.B_at(t).T @ self.riccati.at(t)

    __call__ = gain

    def gain_samples(self):
        sys = self.riccati.sys
        return np.array([-sys.B_at(t).T @ P for t, P in zip(sys.nodes, self.riccati.nodes())])


def riccati_solve(sys, pi0, t):
    """``Pi(t)`` from the closed form; raises :class:`NoSolutionError` if it escapes before ``T``."""
    return RiccatiSolution(sys, pi0).at(t)


def phi_pi(sys, pi0, t, s):
    """Closed-loop transition ``Phi_A(t,s) (I - Ghat(t,s) Pi(s))`` under ``u = -B^T Pi x``."""
    sys.check_time(t, s)
    if s > t:
        raise StepIndexError(f"need s <= t, got s={s} > t={t}")
    sol = RiccatiSolution(sys, pi0)
    fl = sys.flow
    Phi_t, _, G_t = fl.at(t)
    Phi_s, Psi_s, G_s = fl.at(s)
    Ghat_ts = Phi_s @ (G_t - G_s) @ Phi_s.T
    return (Phi_t @ Psi_s) @ (np.eye(sys.n) - Ghat_ts @ sol.at(s))


def integrate_riccati(sys, pi0, t_eval, steps=None, blowup=1e8):
    """Integrate the Riccati ODE directly with fixed-step RK4.

    Independent of the closed form; used to cross-check it.

    Returns
    -------
    values : ndarray, shape (len(t_eval), n, n)
        ``Pi`` at the requested times (NaN after an escape).
    escaped : bool
        True when ``||Pi||`` exceeded ``blowup`` before ``T``.
    t_escape : float or None
    """
    n = sys.n
    steps = int(steps or 8 * sys.grid)
    h = sys.T / steps
    t_eval = np.atleast_1d(np.asarray(t_eval, dtype=float))
    out = np.full((t_eval.size, n, n), np.nan)
    P = matcore.symmetrize(_square(pi0, n, "pi0"))

    # coefficients at every half step, so each RK4 stage reads a cached value
    def coeffs(t):
        B = sys.B_at(t)
        return sys.A_at(t).T, B @ B.T

    half = [coeffs(j * h / 2) for j in range(2 * steps + 1)]

    def rhs_at(At, BB, P):
        AP = At @ P
        return P @ BB @ P - AP - AP.T

    def rhs(t, P):
        return rhs_at(*coeffs(t), P)

    order = np.argsort(t_eval)
    k = 0
    t = 0.0
    for j in range(steps + 1):
        t = j * h
        while k < order.size and t_eval[order[k]] <= t + 1e-12:
            te = t_eval[order[k]]
            if abs(te - t) <= 1e-12:
                out[order[k]] = P
            else:  # requested time between nodes: partial step from the previous node
                dt = te - (t - h)
                out[order[k]] = _rk4(rhs, t - h, prev, dt)
            k += 1
        if j == steps:
            break
        prev = P
        c0, c1, c2 = half[2 * j], half[2 * j + 1], half[2 * j + 2]
        k1 = rhs_at(*c0, P)
        k2 = rhs_at(*c1, P + h / 2 * k1)
        k3 = rhs_at(*c1, P + h / 2 * k2)
        k4 = rhs_at(*c2, P + h * k3)
        P = P + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        P = 0.5 * (P + P.T)
        norm = np.abs(P).max()
        if not np.isfinite(norm) or norm > blowup:
            return out, True, t + h
    return out, False, None


def _rk4(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + h / 2, y + h / 2 * k1)
    k3 = rhs(t + h / 2, y + h / 2 * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


@dataclass
class FMapWorkspace:
    """Grid quantities shared by ``f`` and its Jacobian for one ``(Sigma_0, Pi_0)``.

    ``Q[j] = (I - Ghat(t_j,0) Pi_0)^{-1} Ghat(t_j,0)`` and
    ``U[j] = (I - Ghat_j Pi_0)^{-1} Phi_A(0,t_j) D D^T Phi_A(0,t_j)^T (I - Pi_0 Ghat_j)^{-1}``.
    """

    sigma0: np.ndarray
    pi0: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    phi_pi_T: np.ndarray
    left_T: np.ndarray
    right_T: np.ndarray
    nodes: np.ndarray


def fmap_workspace(sys, sigma0, pi0):
    n = sys.n
    S0 = matcore.symmetrize(_square(sigma0, n, "sigma0"))
    P = _square(pi0, n, "pi0")
    fl = sys.flow
    I = np.eye(n)
    G = fl.Ghat
    left = I - G @ P  # I - Ghat_t Pi_0
    right = I - P @ G  # I - Pi_0 Ghat_t
    conds = np.linalg.cond(left)
    bad = np.flatnonzero(~np.isfinite(conds) | (conds >= COND_LIMIT))
    if bad.size:
        j = int(bad[0])
        raise ConditioningError(f"I - Ghat(t,0) Pi_0 is near-singular at t={sys.nodes[j]:g}")
    Linv = np.linalg.inv(left)
    Rinv = np.linalg.inv(right)
    D = np.array([sys.D_at(t) for t in sys.nodes])
    PD = fl.Psi @ D
    U = Linv @ PD @ np.swapaxes(PD, 1, 2) @ Rinv
    Q = Linv @ G
    phi_pi_T = fl.Phi[-1] @ left[-1]
    return FMapWorkspace(S0, P, Q, U, phi_pi_T, left[-1], right[-1], sys.nodes)


def f_map(sys, sigma0, pi0, workspace=None):
    """Terminal covariance reached from ``sigma0`` under ``u = -B^T Pi x`` with ``Pi(0) = pi0``."""
    ws = workspace if workspace is not None else fmap_workspace(sys, sigma0, pi0)
    PhiT = sys.flow.Phi[-1]
    inner = ws.sigma0 + simpson(ws.U, x=ws.nodes, axis=0)
    out = PhiT @ ws.left_T @ inner @ ws.right_T @ PhiT.T
    return out


def _kron_stack(X, Y):
    t, n, _ = X.shape
    return np.einsum("tij,tkl->tikjl", X, Y).reshape(t, n * n, n * n)


def f_jacobian(sys, sigma0, pi0, workspace=None):
    """Jacobian of ``vec f`` with respect to ``vec Pi_0`` (column-major ``vec``), shape ``(n^2, n^2)``."""
    ws = workspace if workspace is not None else fmap_workspace(sys, sigma0, pi0)
    S0 = ws.sigma0
    QT = ws.Q[-1]
    dQ = QT[None] - ws.Q
    integrand = _kron_stack(ws.U, dQ) + _kron_stack(dQ, ws.U)
    bracket = np.kron(S0, QT) + np.kron(QT, S0) + simpson(integrand, x=ws.nodes, axis=0)
    return -np.kron(ws.phi_pi_T, ws.phi_pi_T) @ bracket


def duplication_matrix(n):
    """``D_n`` with ``vec(S) = D_n vech(S)`` for symmetric ``S`` (column-major, lower triangle)."""
    m = n * (n + 1) // 2
    Dn = np.zeros((n * n, m))
    c = 0
    for j in range(n):
        for i in range(j, n):
            Dn[j * n + i, c] = 1.0
            Dn[i * n + j, c] = 1.0
            c += 1
    return Dn


def elimination_matrix(n):
    """``L_n`` with ``vech(S) = L_n vec(S)``."""
    m = n * (n + 1) // 2
    Ln = np.zeros((m, n * n))
    c = 0
    for j in range(n):
        for i in range(j, n):
            Ln[c, j * n + i] = 1.0
            c += 1
    return Ln


@dataclass
class NewtonConfig:
    tol: float = 1e-9
    max_iter: int = 100
    max_halvings: int = 60


def _admissible(R, P, margin=ADMISSIBLE_MARGIN):
    return np.linalg.eigvalsh(matcore.symmetrize(R @ P @ R))[-1] < 1.0 - margin


def _unvech(v, n):
    S = np.zeros((n, n))
    c = 0
    for j in range(n):
        for i in range(j, n):
            S[i, j] = S[j, i] = v[c]
            c += 1
    return S


def steer_min_energy(sys, sigma0, sigmaT, cfg=None, pi_init=None, check_controllable=True):
    """Find ``Pi_0`` with ``f(Pi_0) = sigmaT`` and return the steering law.

    Damped Newton on the ``n(n+1)/2`` free entries of ``Pi_0``, started at
    ``Pi_0 = 0``. Each step is halved until the iterate stays strictly in
    the admissible set ``Ghat^{1/2} Pi_0 Ghat^{1/2} ≺ I`` and the residual
    ``||f(Pi_0) - sigmaT||_F`` decreases.

    Raises
    ------
    PreconditionError
        The system is not covariance controllable.
    NoConvergenceError
        No descent step was found or ``cfg.max_iter`` was exhausted.
    """
    cfg = cfg or NewtonConfig()
    n = sys.n
    S0 = matcore.symmetrize(_square(sigma0, n, "sigma0"))
    ST = matcore.symmetrize(_square(sigmaT, n, "sigmaT"))
    for name, S in (("sigma0", S0), ("sigmaT", ST)):
        if matcore.min_eig(S) <= 0:
            raise PreconditionError(f"{name} must be positive definite")
    if check_controllable:
        verdict = cov_controllable_c(sys)
        if not verdict.controllable:
            raise PreconditionError(f"system is not covariance controllable: {verdict.failed}")

    R = matcore.psd_sqrt(sys.flow.Ghat[-1])
    Dn, Ln = duplication_matrix(n), elimination_matrix(n)
    P = np.zeros((n, n)) if pi_init is None else matcore.symmetrize(_square(pi_init, n, "pi_init"))
    if not _admissible(R, P):
        raise PreconditionError("initial Pi_0 is not admissible")

    ws = fmap_workspace(sys, S0, P)
    res = f_map(sys, S0, P, ws) - ST
    rnorm = float(np.linalg.norm(res))
    history = [rnorm]
    it = 0
    while rnorm > cfg.tol:
        if it >= cfg.max_iter:
            raise NoConvergenceError(
                f"Newton did not converge in {cfg.max_iter} iterations (residual {rnorm:.3e})",
                residual=rnorm,
                iterations=it,
            )
        J = Ln @ f_jacobian(sys, S0, P, ws) @ Dn
        step = np.linalg.lstsq(J, -(Ln @ res.reshape(-1, order="F")), rcond=None)[0]
        dP = _unvech(step, n)
        alpha = 1.0
        for _ in range(cfg.max_halvings):
            cand = P + alpha * dP
            if _admissible(R, cand):
                try:
                    ws_c = fmap_workspace(sys, S0, cand)
                except ConditioningError:
                    ws_c = None
                if ws_c is not None:
                    res_c = f_map(sys, S0, cand, ws_c) - ST
                    rn_c = float(np.linalg.norm(res_c))
                    if rn_c < rnorm:
                        break
            alpha *= 0.5
        else:
            raise NoConvergenceError(
                f"Newton stagnated at residual {rnorm:.3e} after {it} iterations",
                residual=rnorm,
                iterations=it,
            )
        P, ws, res, rnorm = cand, ws_c, res_c, rn_c
        history.append(rnorm)
        it += 1
    law = ContinuousSteeringLaw(RiccatiSolution(sys, P), rnorm, it, history)
    return law


def closed_loop_cov(law, sigma0, refine=1):
    """Terminal covariance under ``law`` by RK4 on the Lyapunov equation.

    The Lyapunov equation is integrated on a grid ``refine`` times finer
    than the law's own. ``Pi`` is taken from the closed form at every RK4
    stage time (nodes and midpoints of the fine grid), so the only
    discretization error is that of the Lyapunov integration itself.
    """
    sys = law.riccati.sys
    fine = sys.with_grid(int(refine) * sys.grid)
    half = sys.with_grid(2 * fine.grid)
    fl = half.flow
    P0 = law.riccati.pi0
    Pis = np.array([_pi_from(P0, fl.Psi[j], fl.Ghat[j]) for j in range(half.grid + 1)])
    gains = np.array([-half.B_at(t).T @ P for t, P in zip(half.nodes, Pis)])
    hh = half.h

    def gain(t):
        return gains[int(round(t / hh))]

    return propagate_cov_c(fine, sigma0, feedback=gain)
