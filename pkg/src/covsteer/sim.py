"""Seeded Monte Carlo simulation and covariance-ellipse data.

Every path owns an independent Philox stream keyed by ``(seed, path)``,
and each stream is consumed in a fixed order (initial state, then per step
the control noise followed by the process noise). An ensemble is therefore
bit-identical regardless of chunk size or the order in which paths are
generated.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import matcore
from .errors import DimensionError, DivergenceError, InsufficientDataError, InvalidInputError

__all__ = [
    "SimEnsemble",
    "path_rng",
    "simulate_discrete",
    "simulate_continuous",
    "empirical_cov",
    "empirical_mean",
    "ellipse_data",
    "ellipse_geometry",
    "ensemble_csv",
    "ellipse_csv",
]

CHUNK = 2000
BLOWUP = 1e12


def path_rng(seed, path):
    """Generator for one sample path; independent across ``path`` for a fixed ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(int(path),))))


@dataclass
class SimEnsemble:
    """Sample paths ``paths[path, j, :]`` recorded at ``steps[j]`` (times ``times[j]``)."""

    paths: np.ndarray
    seed: int
    steps: np.ndarray
    times: np.ndarray = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return self.paths.shape[0]

    @property
    def means(self):
        if "means" not in self._cache:
            self._cache["means"] = self.paths.mean(axis=0)
        return self._cache["means"]

    @property
    def covs(self):
        if "covs" not in self._cache:
            self._cache["covs"] = np.array([empirical_cov(self, j) for j in range(self.paths.shape[1])])
        return self._cache["covs"]

    def to_dict(self, include_paths=False):
        out = {
            "seed": int(self.seed),
            "N": int(self.N),
            "steps": self.steps.tolist(),
            "means": self.means.tolist(),
            "covs": self.covs.tolist(),
        }
        if self.times is not None:
            out["times"] = self.times.tolist()
        if include_paths:
            out["paths"] = self.paths.tolist()
        return out


def _factor(M, n, name):
    S = matcore.symmetrize(M, name)
    if S.shape != (n, n):
        raise DimensionError(f"{name} has shape {S.shape}, expected {(n, n)}")
    return matcore.psd_sqrt(S)


def _draws(seed, lo, hi, size):
    return np.stack([path_rng(seed, i).standard_normal(size) for i in range(lo, hi)])


def simulate_discrete(sys, policy, sigma0, mu0, N, k, seed, feedforward=None, chunk=CHUNK):
    """Simulate ``x_{j+1} = A x_j + B (F_j x_j + v_j + nu_j) + D w_j`` for ``N`` paths.

    ``x_0 ~ N(mu0, sigma0)``, ``nu_j ~ N(0, V_j)``, ``w_j ~ N(0, I)``;
    ``feedforward`` optionally supplies the open-loop inputs ``v_j``.
    """
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    n, p, q = sys.n, sys.p, sys.q
    if len(policy) < k:
        raise InvalidInputError(f"policy covers {len(policy)} steps, need {k}")
    R0 = _factor(sigma0, n, "sigma0")
    mu0 = np.asarray(mu0, dtype=float).reshape(n)
    RV = [matcore.psd_sqrt(policy.V[j]) for j in range(k)]
    v = [np.zeros(p)] * k if feedforward is None else [np.asarray(f, dtype=float).reshape(p) for f in feedforward]
    per_step = p + q
    paths = np.empty((N, k + 1, n))
    for lo in range(0, N, chunk):
        hi = min(N, lo + chunk)
        z = _draws(seed, lo, hi, n + k * per_step)
        x = mu0 + z[:, :n] @ R0.T
        paths[lo:hi, 0] = x
        for j in range(k):
            base = n + j * per_step
            nu = z[:, base:base + p] @ RV[j].T
            w = z[:, base + p:base + per_step]
            u = x @ policy.F[j].T + v[j] + nu
            x = x @ sys.A_at(j).T + u @ sys.B_at(j).T + w @ sys.D_at(j).T
            paths[lo:hi, j + 1] = x
    return SimEnsemble(paths, int(seed), np.arange(k + 1))


def simulate_continuous(sys, law, sigma0, mu0, N, seed, record=None, chunk=CHUNK):
    """Euler-Maruyama paths of ``dx = (A + B F) x dt + D dw`` on the grid of ``sys``.

    ``law`` is a :class:`~covsteer.csteer.ContinuousSteeringLaw`, a callable
    gain ``t -> F(t)``, or ``None`` for the open loop. ``record`` selects the
    grid indices to keep (default: all nodes).
    """
    if N < 1:
        raise InvalidInputError(f"N must be >= 1, got {N}")
    n, q, Ng = sys.n, sys.q, sys.grid
    R0 = _factor(sigma0, n, "sigma0")
    mu0 = np.asarray(mu0, dtype=float).reshape(n)
    ts = sys.nodes
    h = sys.h
    if law is None:
        gains = np.zeros((Ng + 1, sys.p, n))
    elif hasattr(law, "gain_samples"):
        gains = law.gain_samples()
    else:
        gains = np.array([np.asarray(law(t), dtype=float).reshape(sys.p, n) for t in ts])
    M = np.array([sys.A_at(t) + sys.B_at(t) @ gains[j] for j, t in enumerate(ts)])
    Dsq = np.array([sys.D_at(t) * np.sqrt(h) for t in ts])
    record = np.arange(Ng + 1) if record is None else np.asarray(record, dtype=int)
    slot = {int(j): r for r, j in enumerate(record)}
    paths = np.empty((N, record.size, n))
    for lo in range(0, N, chunk):
        hi = min(N, lo + chunk)
        z = _draws(seed, lo, hi, n + Ng * q)
        x = mu0 + z[:, :n] @ R0.T
        if 0 in slot:
            paths[lo:hi, slot[0]] = x
        for j in range(Ng):
            xi = z[:, n + j * q:n + (j + 1) * q]
            x = x + h * (x @ M[j].T) + xi @ Dsq[j].T
            if j + 1 in slot:
                paths[lo:hi, slot[j + 1]] = x
        if not np.all(np.isfinite(x)) or np.abs(x).max() > BLOWUP:
            raise DivergenceError("Euler-Maruyama paths diverged")
    return SimEnsemble(paths, int(seed), record, ts[record])


def empirical_mean(ensemble, j):
    return ensemble.paths[:, j].mean(axis=0)


def empirical_cov(ensemble, j):
    """Unbiased sample covariance (divisor ``N - 1``) of the states recorded at slot ``j``."""
    X = ensemble.paths[:, j]
    if X.shape[0] < 2:
        raise InsufficientDataError("need at least two paths for a covariance")
    Xc = X - X.mean(axis=0)
    return matcore.symmetrize(Xc.T @ Xc / (X.shape[0] - 1))


def ellipse_data(sigma, mu, n_sigma=3.0, points=100):
    """Polyline ``mu + n_sigma Sigma^{1/2} (cos th, sin th)``, ``th`` uniform on ``[0, 2 pi)``."""
    S = matcore.symmetrize(sigma, "sigma")
    if S.shape != (2, 2):
        raise DimensionError(f"ellipses need a 2x2 covariance, got {S.shape}")
    mu = np.asarray(mu, dtype=float).reshape(2)
    th = 2 * np.pi * np.arange(points) / points
    circle = np.stack([np.cos(th), np.sin(th)], axis=1)
    return mu + n_sigma * circle @ matcore.psd_sqrt(S).T


def ellipse_geometry(sigma, mu, n_sigma=3.0):
    """Center, semi-axes (major first) and major-axis angle in ``[0, pi)``."""
    S = matcore.symmetrize(sigma, "sigma")
    if S.shape != (2, 2):
        raise DimensionError(f"ellipses need a 2x2 covariance, got {S.shape}")
    w, V = np.linalg.eigh(S)
    w = np.clip(w[::-1], 0.0, None)
    major = V[:, 1]
    angle = float(np.arctan2(major[1], major[0]) % np.pi)
    return {
        "center": np.asarray(mu, dtype=float).reshape(2).tolist(),
        "semi_axes": (n_sigma * np.sqrt(w)).tolist(),
        "angle": angle,
    }


def ensemble_csv(ensemble, path_ids=None):
    """CSV text with columns ``step, time, path, x1..xn``."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    n = ensemble.paths.shape[2]
    wr.writerow(["step", "time", "path"] + [f"x{i + 1}" for i in range(n)])
    ids = range(ensemble.N) if path_ids is None else path_ids
    for pid in ids:
        for r, step in enumerate(ensemble.steps):
            t = ensemble.times[r] if ensemble.times is not None else float(step)
            wr.writerow([int(step), repr(float(t)), int(pid)] + [repr(float(v)) for v in ensemble.paths[pid, r]])
    return buf.getvalue()


def ellipse_csv(ellipses):
    """CSV text with columns ``label, index, x, y`` for a mapping ``label -> polyline``."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(["label", "index", "x", "y"])
    for label, pts in ellipses.items():
        for i, (x, y) in enumerate(pts):
            wr.writerow([label, i, repr(float(x)), repr(float(y))])
    return buf.getvalue()
