"""Independent reference computations.

Each oracle reaches its answer by a route that shares no code with the
main modules: explicit summation, separation of variables, ``expm`` with
adaptive quadrature, adaptive ODE solvers or brute-force enumeration.
"""

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.integrate import quad_vec, solve_ivp
from scipy.linalg import expm, sqrtm

from .errors import EscapeError

__all__ = [
    "OracleReport",
    "fixed_entry_oracle",
    "fixed_entry_series",
    "scalar_riccati_oracle",
    "enumerate_reachable_1d",
    "gramian_quad_oracle",
    "lyapunov_ivp_oracle",
    "riccati_ivp_oracle",
    "closed_loop_ivp_oracle",
    "s4_member",
    "minkowski_member",
    "derived_reports",
]


@dataclass
class OracleReport:
    name: str
    value: object
    method: str
    tol: float
    seed: int = None

    def to_dict(self):
        d = asdict(self)
        v = np.asarray(self.value, dtype=float)
        d["value"] = v.tolist()
        return d


def fixed_entry_oracle(A, D, sigma0, k, entry=(1, 1)):
    """Entry of ``Phi(k,0) S0 Phi(k,0)^T + sum_j Phi(k,j) D D^T Phi(k,j)^T`` by direct summation.

    For a constant pair whose coordinate ``entry`` is not influenced by the
    input this is the value every reachable covariance must carry there.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    D = np.asarray(D, dtype=float).reshape(A.shape[0], -1)
    S = np.asarray(sigma0, dtype=float).reshape(A.shape)
    Pk = np.linalg.matrix_power(A, k)
    total = Pk @ S @ Pk.T
    for j in range(1, k + 1):
        Pj = np.linalg.matrix_power(A, k - j)
        total = total + Pj @ D @ D.T @ Pj.T
    return float(total[entry])


def fixed_entry_series(a22, s22, dd22, k):
    """``(a22^{2k} s22, dd22 (1 - a22^{2k}) / (1 - a22^2))`` for an unforced, decoupled coordinate."""
    a2 = a22 * a22
    return a2**k * s22, dd22 * (1 - a2**k) / (1 - a2)


def scalar_riccati_oracle(a, b, pi0, t):
    """Solve ``d pi/dt = -2 a pi + b^2 pi^2`` in closed form.

    With ``y = 1/pi`` the equation is linear, ``dy/dt = 2 a y - b^2``.

    Raises
    ------
    EscapeError
        If the solution escapes at some time ``<= t``; ``escape_time`` is set.
    """
    if pi0 == 0:
        return 0.0
    y0 = 1.0 / pi0
    b2 = b * b
    if a == 0:
        y = lambda s: y0 - b2 * s  # noqa: E731
        t_esc = y0 / b2 if (b2 > 0 and y0 > 0) else np.inf
    else:
        c = b2 / (2 * a)
        y = lambda s: np.exp(2 * a * s) * (y0 - c) + c  # noqa: E731
        ratio = c / (c - y0) if c != y0 else -1.0
        t_esc = np.log(ratio) / (2 * a) if ratio > 0 else np.inf
        if not t_esc > 0:
            t_esc = np.inf
    if t_esc <= t:
        raise EscapeError(f"solution escapes at t={t_esc:.6g}", escape_time=float(t_esc))
    return float(1.0 / y(t))


def enumerate_reachable_1d(a, b, d, k, sigma0, F_grid, V_grid):
    """Interval hull ``(min, max)`` of terminal variances over every gridded policy sequence."""
    vals = np.array([float(sigma0)])
    combos = np.array(list(itertools.product(F_grid, V_grid)), dtype=float)
    for _ in range(k):
        F, V = combos[:, 0], combos[:, 1]
        vals = ((a + b * F)[None, :] ** 2 * vals[:, None] + b * b * V[None, :] + d * d).ravel()
        vals = np.unique(np.round(vals, 12))
    return float(vals.min()), float(vals.max())


def gramian_quad_oracle(A, B, T, t):
    """``G(T,t) = int_t^T e^{A(T-s)} B B^T e^{A^T(T-s)} ds`` for constant ``A, B`` via adaptive quadrature."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)

    def f(s):
        E = expm(A * (T - s)) @ B
        return E @ E.T

    if T == t:
        return np.zeros_like(A)
    val, _ = quad_vec(f, t, T, epsabs=1e-13, epsrel=1e-12)
    return val


def lyapunov_ivp_oracle(A, B, D, F, sigma0, T):
    """Terminal covariance of ``dS = (M S + S M^T + D D^T) dt`` with constant ``M = A + B F``, via RK45."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    M = A + np.asarray(B, dtype=float).reshape(n, -1) @ np.asarray(F, dtype=float).reshape(-1, n)
    D = np.asarray(D, dtype=float).reshape(n, -1)
    Q = D @ D.T

    def rhs(_, s):
        S = s.reshape(n, n)
        return (M @ S + S @ M.T + Q).ravel()

    sol = solve_ivp(rhs, (0.0, T), np.asarray(sigma0, dtype=float).reshape(n, n).ravel(),
                    method="DOP853", rtol=1e-12, atol=1e-13)
    return sol.y[:, -1].reshape(n, n)


def riccati_ivp_oracle(A, B, pi0, times):
    """``Pi`` at ``times`` for constant ``A, B`` with an adaptive 8th-order integrator."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, -1)

    def rhs(_, p):
        P = p.reshape(n, n)
        return (-A.T @ P - P @ A + P @ B @ B.T @ P).ravel()

    times = np.asarray(times, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(times.max())), np.asarray(pi0, dtype=float).reshape(n, n).ravel(),
                    method="DOP853", t_eval=times, rtol=1e-12, atol=1e-13)
    return sol.y.T.reshape(-1, n, n)


def closed_loop_ivp_oracle(sys, gain, sigma0, rtol=1e-11, atol=1e-12):
    """``Sigma(T)`` of ``dS = (M S + S M^T + D D^T) dt`` with ``M = A(t) + B(t) F(t)``, via DOP853.

    ``gain`` is any callable ``t -> F(t)``; the coefficients are read from
    ``sys`` at the times the adaptive integrator requests.
    """
    n = sys.n

    def rhs(t, s):
        S = s.reshape(n, n)
        M = sys.A_at(t) + sys.B_at(t) @ np.asarray(gain(t), dtype=float).reshape(-1, n)
        D = sys.D_at(t)
        return (M @ S + S @ M.T + D @ D.T).ravel()

    sol = solve_ivp(rhs, (0.0, sys.T), np.asarray(sigma0, dtype=float).reshape(n, n).ravel(),
                    method="DOP853", rtol=rtol, atol=atol)
    S = sol.y[:, -1].reshape(n, n)
    return 0.5 * (S + S.T)


def _random_psd(rng, n, rank=None):
    r = n if rank is None else rank
    X = rng.standard_normal((n, r))
    return X @ X.T


def s4_member(H, J, Sbar, rng):
    """Random ``(H + J F) Sbar (H + J F)^T + J V J^T`` with ``F``, ``V ⪰ 0`` drawn from ``rng``."""
    m = J.shape[1]
    F = rng.standard_normal((m, H.shape[1]))
    V = _random_psd(rng, m, rng.integers(0, m + 1)) if m else np.zeros((0, 0))
    HF = H + J @ F
    S = HF @ Sbar @ HF.T + J @ V @ J.T
    return 0.5 * (S + S.T)


def minkowski_member(A_seq, B_seq, D_seq, sigma0, k, rng):
    """Random reachable covariance built as a sum over noise sources.

    Each summand takes the initial covariance (``i = 0``) or the noise
    injected at step ``i - 1`` and transports it to step ``k`` with an
    independent random policy on steps ``i..k-1``.
    """
    n = A_seq[0].shape[0]
    total = np.zeros((n, n))
    sources = [np.asarray(sigma0, dtype=float)] + [D_seq[i - 1] @ D_seq[i - 1].T for i in range(1, k + 1)]
    for i, S in enumerate(sources):
        for j in range(i, k):
            A, B = A_seq[j], B_seq[j]
            F = rng.standard_normal((B.shape[1], n))
            V = _random_psd(rng, B.shape[1], rng.integers(0, B.shape[1] + 1))
            Acl = A + B @ F
            S = Acl @ S @ Acl.T + B @ V @ B.T
        total = total + S
    return 0.5 * (total + total.T)


def derived_reports():
    """Oracle values backing the derived examples used by the test suite."""
    A5 = np.array([[1.0, 0.2], [0.0, 0.96]])
    D5 = np.array([[0.4, 0.2], [0.0, 0.3]])
    S0 = np.array([[5.0, -1.0], [-1.0, 3.0]])
    reps = [
        OracleReport("fixed_entry_k30", fixed_entry_oracle(A5, D5, S0, 30), "direct summation", 5e-4),
        OracleReport("fixed_entry_series_k30", list(fixed_entry_series(0.96, 3.0, 0.09, 30)), "geometric series", 1e-12),
        OracleReport("fixed_entry_k1", fixed_entry_oracle(A5, D5, S0, 1), "direct summation", 1e-12),
        OracleReport("phi_A_2_0", np.linalg.matrix_power(A5, 2), "matrix power", 1e-12),
        OracleReport("psd_sqrt_2112", sqrtm(np.array([[2.0, 1.0], [1.0, 2.0]])).real, "scipy sqrtm", 1e-10),
        OracleReport("pinv_col11", np.linalg.lstsq(np.array([[1.0], [1.0]]), np.eye(2), rcond=None)[0],
                     "least squares", 1e-12),
        OracleReport("woodbury_diag20_11", (lambda W, G: W @ np.linalg.inv(W + G @ G.T) @ W)(
            np.diag([2.0, 0.0]), np.array([[1.0], [1.0]])), "dense inverse", 1e-10),
        OracleReport("eig_sigma30_minus_DDT", np.linalg.eigvalsh(
            np.array([[0.5, 0.2], [0.2, 1.3079]]) - D5 @ D5.T), "eigvalsh", 1e-12),
        OracleReport("scalar_riccati_half", scalar_riccati_oracle(0.0, 1.0, 0.5, 1.0), "separation", 1e-12),
        OracleReport("double_integrator_G", gramian_quad_oracle([[0, 1], [0, 0]], [[0], [1]], 1.0, 0.0),
                     "expm + adaptive quadrature", 1e-6),
        OracleReport("scalar_decay", lyapunov_ivp_oracle(0.0, 1.0, 0.0, -1.0, 1.0, 1.0), "DOP853", 1e-8),
        OracleReport("enumerate_a1b1d0", list(enumerate_reachable_1d(1, 1, 0, 1, 1.0, np.linspace(-2, 2, 41),
                                                                   np.linspace(0, 1, 11))), "grid", 1e-12),
        OracleReport("enumerate_a1b1d1", list(enumerate_reachable_1d(1, 1, 1, 1, 1.0, np.linspace(-2, 2, 41),
                                                                   np.linspace(0, 1, 11))), "grid", 1e-12),
    ]
    return reps


def reports_json(reports=None):
    reports = derived_reports() if reports is None else reports
    return json.dumps([r.to_dict() for r in reports], sort_keys=True, indent=1)
