"""Discrete-time covariance steering by semidefinite programming.

With ``U_i = F_i Sigma_i`` and ``Y_i = F_i Sigma_i F_i^T + V_i`` the covariance
recursion becomes linear,

    Sigma_{i+1} = A Sigma_i A^T + B U_i A^T + A U_i^T B^T + B Y_i B^T + D D^T,

and ``V_i ⪰ 0`` becomes the LMI ``[[Sigma_i, U_i^T], [U_i, Y_i]] ⪰ 0``. The
program minimizes ``sum_i tr(R_i Y_i)``, the expected control energy.

Standard form
-------------
The boundary covariances are data, so the decision vector ``x`` stacks the
interior ``Sigma_1 .. Sigma_{k-1}`` (upper triangle, column-major), every
``U_i`` (column-major) and every ``Y_i`` (upper triangle, column-major).
The program is

    minimize c^T x  subject to  A x + s = b,  s in K,

with ``K`` a zero cone (the recursion, one row per upper-triangle entry of
``Sigma_{i+1}``) followed by one PSD-triangle cone per LMI. A PSD block
``M`` of order ``d`` is stored as ``svec(M)``: upper triangle, column-major,
off-diagonal entries multiplied by ``sqrt(2)``, so ``<svec X, svec Y> =
tr(X Y)``.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import matcore
from .dsys import DiscretePolicy, phi_table
from .errors import DimensionError, InconsistentSolutionError, InvalidInputError, NotPsdError, SolverError, StepIndexError

__all__ = [
    "SdpProblem",
    "SdpSolution",
    "SolverConfig",
    "svec",
    "smat",
    "build_steering_sdp",
    "solve_steering_sdp",
    "recover_policy",
    "mean_feedforward",
]

V_FLOOR = -1e-7
FORMAT = "covsteer-conic-v1"


def _triu(d):
    """Upper-triangle index pairs in column-major order."""
    return [(i, j) for j in range(d) for i in range(j + 1)]


def svec(M):
    """Scaled upper-triangle vectorization (off-diagonals times ``sqrt(2)``)."""
    M = np.asarray(M, dtype=float)
    r2 = np.sqrt(2.0)
    return np.array([M[i, j] if i == j else r2 * M[i, j] for i, j in _triu(M.shape[0])])


def smat(v):
    """Inverse of :func:`svec`."""
    v = np.asarray(v, dtype=float)
    d = int(round((np.sqrt(8 * v.size + 1) - 1) / 2))
    M = np.zeros((d, d))
    r2 = np.sqrt(2.0)
    for val, (i, j) in zip(v, _triu(d)):
        if i == j:
            M[i, i] = val
        else:
            M[i, j] = M[j, i] = val / r2
    return M


@dataclass
class _Block:
    name: str  # "Sigma" | "U" | "Y"
    step: int
    shape: tuple
    offset: int
    symmetric: bool

    @property
    def size(self):
        r, c = self.shape
        return r * (r + 1) // 2 if self.symmetric else r * c

    def unpack(self, x):
        v = x[self.offset:self.offset + self.size]
        r, c = self.shape
        if self.symmetric:
            M = np.zeros((r, r))
            for val, (i, j) in zip(v, _triu(r)):
                M[i, j] = M[j, i] = val
            return M
        return v.reshape((r, c), order="F")


@dataclass
class SdpProblem:
    """Steering program in standard conic form plus the data needed to interpret ``x``."""

    sys: object
    k: int
    sigma0: np.ndarray
    sigmaK: np.ndarray
    weights: list
    c: np.ndarray
    A: sp.csc_matrix
    b: np.ndarray
    n_eq: int
    psd_orders: list
    blocks: list
    infeasible_rows: list = field(default_factory=list)

    @property
    def n_vars(self):
        return self.c.size

    def unpack(self, x):
        """Split ``x`` into ``(sigmas, Us, Ys)`` with the boundary covariances filled in."""
        sig = [self.sigma0] + [None] * (self.k - 1) + [self.sigmaK]
        U, Y = [None] * self.k, [None] * self.k
        for blk in self.blocks:
            M = blk.unpack(x)
            if blk.name == "Sigma":
                sig[blk.step] = M
            elif blk.name == "U":
                U[blk.step] = M
            else:
                Y[blk.step] = M
        return sig, U, Y

    def to_dict(self):
        A = self.A.tocoo()
        order = np.lexsort((A.col, A.row))
        return {
            "format": FORMAT,
            "sense": "minimize",
            "form": "A x + s = b, s in K",
            "svec": "upper triangle, column-major, off-diagonal scaled by sqrt(2)",
            "n": int(self.n_vars),
            "m": int(self.b.size),
            "c": self.c.tolist(),
            "A": {
                "shape": [int(s) for s in self.A.shape],
                "rows": A.row[order].tolist(),
                "cols": A.col[order].tolist(),
                "vals": A.data[order].tolist(),
            },
            "b": self.b.tolist(),
            "cones": [{"type": "zero", "dim": int(self.n_eq)}]
            + [{"type": "psd_triangle", "order": int(d)} for d in self.psd_orders],
            "variables": [
                {"name": blk.name, "step": blk.step, "shape": list(blk.shape), "offset": blk.offset,
                 "size": blk.size, "symmetric": blk.symmetric}
                for blk in self.blocks
            ],
        }


@dataclass
class SdpSolution:
    status: str  # "optimal" | "infeasible"
    sigmas: list = None
    U: list = None
    Y: list = None
    objective: float = None
    solver_status: str = None
    primal_residual: float = None
    iterations: int = None


@dataclass
class SolverConfig:
    tol_feas: float = 1e-9
    tol_gap_abs: float = 1e-9
    tol_gap_rel: float = 1e-9
    max_iter: int = 500
    verbose: bool = False
    retry: tuple = ({"static_regularization_constant": 1e-7},)


def _check_psd(M, name, n):
    S = matcore.symmetrize(M, name)
    if S.shape != (n, n):
        raise DimensionError(f"{name} has shape {S.shape}, expected {(n, n)}")
    if not matcore.is_psd(S):
        raise NotPsdError(f"{name} is not PSD", min_eig=matcore.min_eig(S))
    return S


def build_steering_sdp(sys, sigma0, sigmaK, k, weights=None):
    """Assemble the steering program from ``sigma0`` to ``sigmaK`` in ``k`` steps.

    ``weights`` is a single ``p x p`` matrix or a list of ``k`` of them
    (default identity); each must be positive definite.
    """
    if k < 1:
        raise StepIndexError(f"k must be >= 1, got {k}")
    sys.check_steps(k)
    n, p = sys.n, sys.p
    S0 = _check_psd(sigma0, "sigma0", n)
    SK = _check_psd(sigmaK, "sigmaK", n)
    if weights is None:
        weights = np.eye(p)
    W = np.asarray(weights, dtype=float)
    R = [matcore.symmetrize(W, "R")] * k if W.ndim <= 2 else [matcore.symmetrize(w, "R") for w in W]
    if len(R) != k:
        raise DimensionError(f"need {k} weight matrices, got {len(R)}")
    for i, Ri in enumerate(R):
        if Ri.shape != (p, p) or matcore.min_eig(Ri) <= 0:
            raise InvalidInputError(f"R[{i}] must be a positive definite {p}x{p} matrix")

    blocks, off = [], 0
    for i in range(1, k):
        blocks.append(_Block("Sigma", i, (n, n), off, True))
        off += blocks[-1].size
    for i in range(k):
        blocks.append(_Block("U", i, (p, n), off, False))
        off += blocks[-1].size
    for i in range(k):
        blocks.append(_Block("Y", i, (p, p), off, True))
        off += blocks[-1].size
    nv = off

    prob = SdpProblem(sys, k, S0, SK, R, None, None, None, 0, [], blocks)
    tri_n = _triu(n)
    DD = [sys.D_at(i) @ sys.D_at(i).T for i in range(k)]

    def residual_rows(x):
        sig, U, Y = prob.unpack(x)
        rows = []
        for i in range(k):
            A, B = sys.A_at(i), sys.B_at(i)
            BUA = B @ U[i] @ A.T
            nxt = A @ sig[i] @ A.T + BUA + BUA.T + B @ Y[i] @ B.T + DD[i]
            E = sig[i + 1] - nxt
            rows.extend(E[a, b] for a, b in tri_n)
        return np.array(rows)

    def lmi_rows(x):
        sig, U, Y = prob.unpack(x)
        out = []
        for i in range(k):
            M = np.block([[sig[i], U[i].T], [U[i], Y[i]]])
            out.append(svec(M))
        return np.concatenate(out)

    def affine(fun):
        f0 = fun(np.zeros(nv))
        cols = []
        for j in range(nv):
            e = np.zeros(nv)
            e[j] = 1.0
            cols.append(fun(e) - f0)
        return np.column_stack(cols) if cols else np.zeros((f0.size, 0)), f0

    Aeq, eq0 = affine(residual_rows)
    Apsd, psd0 = affine(lmi_rows)

    # Rows with no decision variables are either trivially satisfied or certify infeasibility.
    empty = np.flatnonzero(~np.any(np.abs(Aeq) > 0, axis=1))
    scale = 1.0 + np.abs(eq0).max()
    bad = [int(r) for r in empty if abs(eq0[r]) > 1e-9 * scale]
    keep = np.setdiff1d(np.arange(Aeq.shape[0]), empty)
    Aeq, eq0 = Aeq[keep], eq0[keep]

    c = np.zeros(nv)
    for blk in blocks:
        if blk.name == "Y":
            Ri = R[blk.step]
            for t, (a, b) in enumerate(_triu(p)):
                c[blk.offset + t] = Ri[a, a] if a == b else 2.0 * Ri[a, b]

    # equality:  Aeq x + eq0 = 0  ->  Aeq x + s = -eq0, s = 0
    # LMI:       svec(M(x)) = Apsd x + psd0 = s  ->  -Apsd x + s = psd0
    prob.c = c
    prob.A = sp.csc_matrix(np.vstack([Aeq, -Apsd]))
    prob.A.eliminate_zeros()
    prob.b = np.concatenate([-eq0, psd0])
    prob.n_eq = Aeq.shape[0]
    prob.psd_orders = [n + p] * k
    prob.infeasible_rows = bad
    return prob


def _clarabel_solve(problem, cfg, overrides):
    import clarabel

    st = clarabel.DefaultSettings()
    st.verbose = cfg.verbose
    st.tol_feas = cfg.tol_feas
    st.tol_gap_abs = cfg.tol_gap_abs
    st.tol_gap_rel = cfg.tol_gap_rel
    st.max_iter = cfg.max_iter
    for key, val in overrides.items():
        setattr(st, key, val)
    cones = []
    if problem.n_eq:
        cones.append(clarabel.ZeroConeT(problem.n_eq))
    cones += [clarabel.PSDTriangleConeT(d) for d in problem.psd_orders]
    nv = problem.n_vars
    P = sp.csc_matrix((nv, nv))
    return clarabel.DefaultSolver(P, problem.c, problem.A, problem.b, cones, st).solve()


def solve_steering_sdp(problem, cfg=None):
    """Solve with the Clarabel interior-point method.

    Returns an :class:`SdpSolution` with status ``"optimal"`` or
    ``"infeasible"``. A run that stalls or reports an "almost" status is
    repeated with stronger static regularization (``cfg.retry``), which
    settles the poorly scaled infeasibility certificates that show up on
    unreachable targets. Any other outcome raises :class:`SolverError`.
    """
    cfg = cfg or SolverConfig()
    if problem.infeasible_rows:
        return SdpSolution("infeasible", solver_status="InconsistentEqualities")
    attempts = [{}] + list(cfg.retry)
    for n_try, overrides in enumerate(attempts):
        sol = _clarabel_solve(problem, cfg, overrides)
        status = str(sol.status)
        if status in ("Solved", "PrimalInfeasible") or n_try == len(attempts) - 1:
            break
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SdpSolution("infeasible", solver_status=status, iterations=sol.iterations)
    if status not in ("Solved", "AlmostSolved"):
        raise SolverError(f"conic solver failed with status {status}", status=status)
    x = np.asarray(sol.x)
    sig, U, Y = problem.unpack(x)
    eq = problem.A[: problem.n_eq] @ x - problem.b[: problem.n_eq]
    res = float(np.abs(eq).max()) if eq.size else 0.0
    return SdpSolution(
        "optimal", sig, U, Y, float(problem.c @ x), status, res, sol.iterations
    )


def recover_policy(sys, solution, rank_tol=None):
    """Randomized feedback ``F_i = U_i Sigma_i^+``, ``V_i = Y_i - F_i Sigma_i F_i^T``.

    ``V_i`` eigenvalues in ``[-1e-7, 0)`` are floored to zero; anything more
    negative raises :class:`InconsistentSolutionError`.
    """
    if solution.status != "optimal":
        raise InconsistentSolutionError(f"cannot recover a policy from status {solution.status!r}")
    F, V = [], []
    for i, (S, U, Y) in enumerate(zip(solution.sigmas, solution.U, solution.Y)):
        Fi = U @ matcore.pinv(matcore.symmetrize(S), rank_tol)
        Vi = matcore.symmetrize(Y - Fi @ S @ Fi.T)
        w, Q = np.linalg.eigh(Vi)
        if w.size and w[0] < V_FLOOR:
            raise InconsistentSolutionError(f"V[{i}] has eigenvalue {w[0]:.3e} below {V_FLOOR}")
        Vi = matcore.symmetrize((Q * np.clip(w, 0.0, None)) @ Q.T)
        F.append(Fi)
        V.append(Vi)
    return DiscretePolicy(F, V)


def mean_feedforward(sys, policy, mu0, muK, k):
    """Minimum-norm open-loop inputs ``v_0..v_{k-1}`` steering the mean to ``muK``.

    With ``u_j = F_j x_j + v_j + nu_j`` the mean obeys
    ``mu_{j+1} = (A_j + B_j F_j) mu_j + B_j v_j``; the least-norm ``v`` is
    obtained from a pseudo-inverse. Raises if ``muK`` is not reachable.
    """
    n, p = sys.n, sys.p
    mu0 = np.asarray(mu0, dtype=float).reshape(n)
    muK = np.asarray(muK, dtype=float).reshape(n)
    phis = phi_table(sys, k, policy)
    M = np.hstack([phis[j + 1] @ sys.B_at(j) for j in range(k)])
    rhs = muK - phis[0] @ mu0
    v = matcore.pinv(M) @ rhs
    if np.linalg.norm(M @ v - rhs) > 1e-8 * (1.0 + np.linalg.norm(muK)):
        raise InvalidInputError("target mean is not reachable")
    return [v[j * p:(j + 1) * p] for j in range(k)]
