import numpy as np
import pytest

from covsteer import matcore
from covsteer.csteer import (
    NewtonConfig,
    RiccatiSolution,
    duplication_matrix,
    elimination_matrix,
    closed_loop_cov,
    f_jacobian,
    f_map,
    fmap_workspace,
    integrate_riccati,
    phi_pi,
    riccati_conditions,
    riccati_exists,
    riccati_solve,
    steer_min_energy,
)
from covsteer.csys import ContinuousLtvSystem, phi_c, propagate_cov_c
from covsteer.errors import NoConvergenceError, NoSolutionError, PreconditionError
from covsteer.oracles import closed_loop_ivp_oracle, riccati_ivp_oracle, scalar_riccati_oracle
from covsteer.errors import EscapeError
from gen import bounded_pi0, rand_continuous, rand_controllable, rand_pd, scaled_pi0

SCALAR = ContinuousLtvSystem(0.0, 1.0)
SCALAR_NOISY = ContinuousLtvSystem(0.0, 1.0, 1.0)


def fd_jacobian(sys, S0, P, eps=1e-6):
    n = sys.n
    J = np.zeros((n * n, n * n))
    for c in range(n * n):
        E = np.zeros(n * n)
        E[c] = eps
        E = E.reshape(n, n, order="F")
        d = f_map(sys, S0, P + E) - f_map(sys, S0, P - E)
        J[:, c] = d.reshape(-1, order="F") / (2 * eps)
    return J


def test_existence_examples():
    assert riccati_exists(SCALAR, [[0.0]])
    assert not riccati_exists(SCALAR, [[2.0]])
    assert riccati_exists(SCALAR, [[0.5]])
    with pytest.raises(EscapeError) as exc:
        scalar_riccati_oracle(0.0, 1.0, 2.0, 1.0)
    assert exc.value.escape_time == pytest.approx(0.5)


def test_solve_examples(rng):
    sys = rand_continuous(rng, 2, 1, 0, time_varying=True)
    for t in (0.0, 0.4, 1.0):
        assert np.allclose(riccati_solve(sys, np.zeros((2, 2)), t), 0.0)
    assert riccati_solve(SCALAR, [[0.5]], 1.0)[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert riccati_solve(SCALAR, [[0.5]], 1.0)[0, 0] == pytest.approx(scalar_riccati_oracle(0, 1, 0.5, 1.0), abs=1e-12)
    a = 0.8
    sys = ContinuousLtvSystem(a, 0.0)
    assert riccati_solve(sys, [[1.3]], 0.7)[0, 0] == pytest.approx(1.3 * np.exp(-2 * a * 0.7), abs=1e-9)
    with pytest.raises(NoSolutionError):
        riccati_solve(SCALAR, [[2.0]], 0.2)


def test_scalar_closed_form_vs_oracle(rng):
    for _ in range(20):
        a, b = rng.uniform(-1, 1), rng.uniform(0.3, 1.5)
        sys = ContinuousLtvSystem(a, b)
        pi0 = float(scaled_pi0(rng, sys, rng.uniform(-2, 0.95))[0, 0])
        for t in (0.3, 1.0):
            assert riccati_solve(sys, [[pi0]], t)[0, 0] == pytest.approx(scalar_riccati_oracle(a, b, pi0, t), rel=1e-9)


def test_closed_form_vs_ivp(rng):
    for _ in range(5):
        A, B = rng.standard_normal((3, 3)) * 0.6, rng.standard_normal((3, 2))
        sys = ContinuousLtvSystem(A, B)
        P0 = scaled_pi0(rng, sys, 0.9)
        ts = np.linspace(0.05, 1.0, 8)
        ref = riccati_ivp_oracle(A, B, P0, ts)
        got = np.array([riccati_solve(sys, P0, t) for t in ts])
        assert np.max(np.abs(got - ref)) <= 1e-7 * max(1.0, np.abs(ref).max())


def test_riccati_symmetric_at_nodes(rng):
    sys = rand_continuous(rng, 3, 1, 0, time_varying=True)
    nodes = RiccatiSolution(sys, scaled_pi0(rng, sys, 0.8)).nodes()
    assert np.max(np.abs(nodes - np.swapaxes(nodes, 1, 2))) <= 1e-9


def test_phi_pi_examples(rng):
    sys = rand_continuous(rng, 2, 1, 0)
    assert np.allclose(phi_pi(sys, np.zeros((2, 2)), 0.8, 0.1), phi_c(sys, 0.8, 0.1), atol=1e-12)
    assert phi_pi(SCALAR, [[0.5]], 1.0, 0.0)[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert np.allclose(phi_pi(sys, scaled_pi0(rng, sys, 0.5), 0.4, 0.4), np.eye(2), atol=1e-12)


def test_phi_pi_vs_closed_loop(rng):
    sys = rand_continuous(rng, 2, 1, 0, time_varying=True)
    P0 = scaled_pi0(rng, sys, 0.7)
    sol = RiccatiSolution(sys, P0)
    gain = lambda t: -sys.B_at(t).T @ sol.at(t)  # noqa: E731
    assert np.allclose(phi_pi(sys, P0, 1.0, 0.3), phi_c(sys, 1.0, 0.3, feedback=gain), atol=1e-6)


def test_fmap_examples(rng):
    sys = rand_continuous(rng, 2, 1, 2)
    S0 = rand_pd(rng, 2)
    assert np.allclose(f_map(sys, S0, np.zeros((2, 2))), propagate_cov_c(sys, S0), atol=1e-9)
    quiet = rand_continuous(rng, 2, 1, 0)
    P0 = scaled_pi0(rng, quiet, 0.6)
    Pp = phi_pi(quiet, P0, 1.0, 0.0)
    assert np.allclose(f_map(quiet, S0, P0), Pp @ S0 @ Pp.T, atol=1e-10)
    assert f_map(SCALAR, [[1.0]], [[0.5]])[0, 0] == pytest.approx(0.25, abs=1e-12)


def test_fmap_matches_lyapunov(rng):
    for _ in range(5):
        sys = rand_continuous(rng, 2, 1, 1, time_varying=True)
        S0 = rand_pd(rng, 2)
        P0 = scaled_pi0(rng, sys, rng.uniform(0.05, 0.9))
        law = RiccatiSolution(sys, P0)
        gain = lambda t: -sys.B_at(t).T @ law.at(t)  # noqa: E731
        assert np.allclose(f_map(sys, S0, P0), propagate_cov_c(sys, S0, feedback=gain), atol=5e-6)


def test_workspace_monotone(rng):
    sys = rand_continuous(rng, 3, 1, 1)
    ws = fmap_workspace(sys, np.eye(3), scaled_pi0(rng, sys, 0.9))
    for Qt in ws.Q[::20]:
        assert matcore.is_psd(matcore.symmetrize(Qt), 1e-9)
        assert matcore.is_psd(matcore.symmetrize(ws.Q[-1] - Qt), 1e-9)


def test_jacobian_examples():
    for p in (-0.5, 0.0, 0.3, 0.8):
        assert f_jacobian(SCALAR, [[1.0]], [[p]])[0, 0] == pytest.approx(-2 * (1 - p), abs=1e-10)
    assert f_jacobian(SCALAR_NOISY, [[1.0]], [[0.0]])[0, 0] == pytest.approx(-3.0, abs=1e-10)


def test_jacobian_noiseless_form(rng):
    sys = rand_continuous(rng, 2, 1, 0)
    S0, P0 = rand_pd(rng, 2), scaled_pi0(rng, sys, 0.5)
    ws = fmap_workspace(sys, S0, P0)
    QT = ws.Q[-1]
    ref = -np.kron(ws.phi_pi_T, ws.phi_pi_T) @ (np.kron(S0, QT) + np.kron(QT, S0))
    assert np.allclose(f_jacobian(sys, S0, P0, ws), ref, atol=1e-12)


def test_jacobian_vs_finite_differences(rng):
    for n in (2, 3):
        for _ in range(5):
            sys = rand_continuous(rng, n, 1, 1, time_varying=True)
            S0, P0 = rand_pd(rng, n), scaled_pi0(rng, sys, rng.uniform(0.05, 0.8))
            J, ref = f_jacobian(sys, S0, P0), fd_jacobian(sys, S0, P0)
            assert np.linalg.norm(J - ref) <= 1e-4 * np.linalg.norm(ref)


def test_vech_maps():
    for n in (1, 2, 4):
        S = np.arange(n * n, dtype=float).reshape(n, n)
        S = S + S.T
        v = elimination_matrix(n) @ S.reshape(-1, order="F")
        assert np.array_equal(duplication_matrix(n) @ v, S.reshape(-1, order="F"))


def test_steer_examples():
    target = f_map(SCALAR_NOISY, [[1.0]], [[0.0]])
    law = steer_min_energy(SCALAR_NOISY, [[1.0]], target)
    assert law.iterations == 0 and np.allclose(law.riccati.pi0, 0.0)
    target = f_map(SCALAR_NOISY, [[1.0]], [[0.3]])
    law = steer_min_energy(SCALAR_NOISY, [[1.0]], target)
    assert law.riccati.pi0[0, 0] == pytest.approx(0.3, abs=1e-8)


def test_steer_uncontrollable():
    sys = ContinuousLtvSystem([[0.0, 0.2], [0.0, -0.04]], [[1.0], [0.0]], [[0.4, 0.2], [0.0, 0.3]])
    with pytest.raises(PreconditionError):
        steer_min_energy(sys, np.eye(2), np.eye(2))


def test_steer_rejects_singular_target():
    with pytest.raises(PreconditionError):
        steer_min_energy(SCALAR_NOISY, [[1.0]], [[0.0]])


def test_steer_reaches_target(rng):
    cfg = NewtonConfig()
    for _ in range(5):
        sys = rand_controllable(rng, 2, 1, 2)
        S0 = rand_pd(rng, 2)
        target = f_map(sys, S0, bounded_pi0(rng, sys, 0.9))
        law = steer_min_energy(sys, S0, target, cfg)
        assert law.residual <= cfg.tol
        reached = closed_loop_ivp_oracle(sys, law.gain, S0)
        assert np.linalg.norm(reached - target) <= 10 * cfg.tol * max(1.0, np.linalg.norm(target))
        assert np.allclose(closed_loop_cov(law, S0), reached, rtol=1e-6, atol=1e-8)


def test_steer_iteration_cap(rng):
    sys = rand_continuous(rng, 2, 1, 2)
    target = f_map(sys, np.eye(2), scaled_pi0(rng, sys, 0.9))
    with pytest.raises(NoConvergenceError) as exc:
        steer_min_energy(sys, np.eye(2), target, NewtonConfig(tol=1e-12, max_iter=1))
    assert exc.value.residual > 0


def test_boundary_monotone():
    sys = ContinuousLtvSystem([[0.0, 1.0], [-1.0, -0.2]], [[0.0], [1.0]], [[0.3], [0.5]])
    Gi = np.linalg.inv(sys.flow.Ghat[-1])
    for s0, sysx in ((np.eye(2), sys), (np.eye(1), SCALAR)):
        Gi = np.linalg.inv(sysx.flow.Ghat[-1])
        lam = [np.linalg.eigvalsh(f_map(sysx, s0, s * Gi))[0] for s in (0.5, 0.9, 0.99, 0.999)]
        assert all(x > y for x, y in zip(lam, lam[1:]))
        assert lam[-1] < 1e-3 * lam[0]


def test_conditions_agree(rng):
    for _ in range(50):
        sys = rand_continuous(rng, 2, 1, 0, grid=100)
        P0 = scaled_pi0(rng, sys, rng.uniform(0.2, 2.0))
        lam_iii, lam_v = riccati_conditions(sys, P0)
        assert (lam_iii > 0) == (lam_v < 1)


def test_escape_detected():
    _, escaped, t_esc = integrate_riccati(SCALAR, [[2.0]], [1.0])
    assert escaped and t_esc == pytest.approx(0.5, abs=1e-2)
