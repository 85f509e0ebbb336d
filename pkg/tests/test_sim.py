import numpy as np
import pytest

from covsteer import matcore
from covsteer.csteer import f_map, steer_min_energy
from covsteer.csys import ContinuousLtvSystem, propagate_cov_c
from covsteer.dsys import DiscreteLtvSystem, DiscretePolicy, propagate_cov
from covsteer.errors import DimensionError, DivergenceError, InsufficientDataError
from covsteer.sim import (
    SimEnsemble,
    ellipse_csv,
    ellipse_data,
    ellipse_geometry,
    empirical_cov,
    empirical_mean,
    ensemble_csv,
    path_rng,
    simulate_continuous,
    simulate_discrete,
)
from gen import rand_discrete, rand_policy, rand_psd


def test_zero_paths():
    sys = DiscreteLtvSystem(np.eye(2), np.ones((2, 1)))
    ens = simulate_discrete(sys, DiscretePolicy.zeros(sys, 3), np.zeros((2, 2)), [0, 0], 10, 3, seed=1)
    assert np.array_equal(ens.paths, np.zeros((10, 4, 2)))
    csys = ContinuousLtvSystem(np.eye(2), np.ones((2, 1)), grid=50)
    ens = simulate_continuous(csys, None, np.zeros((2, 2)), [0, 0], 10, seed=1)
    assert np.array_equal(ens.paths, np.zeros((10, 51, 2)))


def test_scalar_random_walk():
    sys = DiscreteLtvSystem(1.0, 0.0, 1.0)
    ens = simulate_discrete(sys, DiscretePolicy.zeros(sys, 4), 0.0, 0.0, 100_000, 4, seed=7)
    assert empirical_cov(ens, 4)[0, 0] == pytest.approx(4.0, abs=0.06)


def test_reproducible_and_chunk_invariant(rng):
    sys = rand_discrete(rng, 2, 1, 2, 5)
    pol = rand_policy(rng, sys, 5)
    S0 = rand_psd(rng, 2)
    a = simulate_discrete(sys, pol, S0, [1, 2], 300, 5, seed=11)
    b = simulate_discrete(sys, pol, S0, [1, 2], 300, 5, seed=11, chunk=7)
    c = simulate_discrete(sys, pol, S0, [1, 2], 300, 5, seed=12)
    assert np.array_equal(a.paths, b.paths)
    assert not np.array_equal(a.paths, c.paths)
    # a path does not depend on how many paths are simulated
    d = simulate_discrete(sys, pol, S0, [1, 2], 50, 5, seed=11)
    assert np.array_equal(a.paths[:50], d.paths)


def test_streams_do_not_overlap():
    draws = np.concatenate([path_rng(3, i).random(1000) for i in range(1000)])
    assert np.unique(draws).size == draws.size


def test_clt_consistency(rng):
    sys = rand_discrete(rng, 2, 1, 2, 4)
    pol = rand_policy(rng, sys, 4)
    S0 = rand_psd(rng, 2) + 0.1 * np.eye(2)
    N = 20_000
    ens = simulate_discrete(sys, pol, S0, [0.0, 0.0], N, 4, seed=5)
    tr = propagate_cov(sys, S0, pol, 4)
    c = 4.5  # per-entry band in units of the sample-covariance standard deviation
    for j in range(5):
        S = tr.sigmas[j]
        sd = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / N)
        assert np.all(np.abs(ens.covs[j] - S) <= c * sd + 1e-12)
        assert matcore.is_psd(ens.covs[j], 1e-9)


def test_continuous_steered_variance():
    sys = ContinuousLtvSystem(0.0, 1.0, 1.0)
    target = f_map(sys, [[1.0]], [[0.3]])
    law = steer_min_energy(sys, [[1.0]], target)
    ens = simulate_continuous(sys, law, 1.0, 0.0, 100_000, seed=3, record=[sys.grid])
    ref = propagate_cov_c(sys, 1.0, feedback=law.gain)[0, 0]
    band = 3 * ref * np.sqrt(2 / 100_000)
    assert abs(empirical_cov(ens, 0)[0, 0] - ref) <= band


def test_euler_maruyama_first_order():
    a = -1.5
    exact = np.exp(a)
    errs = []
    for g in (50, 100, 200):
        sys = ContinuousLtvSystem(a, 0.0, grid=g)
        ens = simulate_continuous(sys, None, 0.0, 1.0, 4, seed=0, record=[g])
        errs.append(abs(empirical_mean(ens, 0)[0] - exact))
    for e0, e1 in zip(errs, errs[1:]):
        assert 1.8 <= e0 / e1 <= 2.2


def test_continuous_divergence():
    with pytest.raises(DivergenceError):
        simulate_continuous(ContinuousLtvSystem(100.0, 0.0, 1.0, grid=20), None, 1.0, 1.0, 5, seed=0)


def test_empirical_cov_examples():
    ens = SimEnsemble(np.zeros((5, 1, 2)), 0, np.arange(1))
    assert np.array_equal(empirical_cov(ens, 0), np.zeros((2, 2)))
    ens = SimEnsemble(np.array([[[1.0, 0.0]], [[-1.0, 0.0]]]), 0, np.arange(1))
    assert np.allclose(empirical_cov(ens, 0), [[2.0, 0.0], [0.0, 0.0]])
    with pytest.raises(InsufficientDataError):
        empirical_cov(SimEnsemble(np.zeros((1, 1, 2)), 0, np.arange(1)), 0)


def test_gaussian_draws_clt():
    S = np.array([[2.0, 0.6], [0.6, 1.0]])
    sys = DiscreteLtvSystem(np.eye(2), np.zeros((2, 1)))
    ens = simulate_discrete(sys, DiscretePolicy.zeros(sys, 1), S, [0, 0], 50_000, 1, seed=9)
    sd = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / 50_000)
    assert np.all(np.abs(empirical_cov(ens, 0) - S) <= 4 * sd)


def test_ellipse_examples(planar):
    pts = ellipse_data(np.eye(2), [0, 0], 3.0)
    assert np.allclose(np.linalg.norm(pts, axis=1), 3.0)
    pts = ellipse_data(np.diag([4.0, 1.0]), [0, 0], 1.0)
    assert np.allclose(pts[:, 0] ** 2 / 4 + pts[:, 1] ** 2, 1.0)
    assert np.isclose(pts[:, 0].max(), 2.0) and np.isclose(pts[:, 1].max(), 1.0, atol=1e-3)
    geo = ellipse_geometry(planar.sigmaK, planar.muK, 3.0)
    w, V = np.linalg.eigh(planar.sigmaK)
    assert geo["center"] == [30.0, 0.0]
    assert np.allclose(geo["semi_axes"], 3 * np.sqrt(w[::-1]), atol=1e-12)
    assert np.isclose(np.tan(geo["angle"]), V[1, 1] / V[0, 1])
    with pytest.raises(DimensionError):
        ellipse_data(np.eye(3), [0, 0, 0])


def test_csv_exports():
    ens = SimEnsemble(np.arange(12, dtype=float).reshape(2, 3, 2), 0, np.arange(3))
    lines = ensemble_csv(ens).splitlines()
    assert lines[0] == "step,time,path,x1,x2" and len(lines) == 7
    assert lines[1] == "0,0.0,0,0.0,1.0"
    text = ellipse_csv({"start": ellipse_data(np.eye(2), [0, 0], 1.0, points=4)})
    assert text.splitlines()[0] == "label,index,x,y" and len(text.splitlines()) == 5
