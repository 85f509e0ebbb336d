import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from covsteer import matcore
from covsteer.errors import DimensionError, InvalidInputError, NotPsdError, SingularityError
from covsteer.oracles import derived_reports
from gen import rand_psd, rand_sym

ORACLE = {r.name: r for r in derived_reports()}


def test_is_psd_examples(planar):
    assert matcore.is_psd(np.eye(2), 1e-9)
    assert not matcore.is_psd([[1, 2], [2, 1]], 1e-9)
    D = planar.sys.D_at(0)
    diff = planar.sigmaK_printed - D @ D.T
    assert matcore.is_psd(diff, 1e-9)
    assert np.allclose(np.linalg.eigvalsh(diff), ORACLE["eig_sigma30_minus_DDT"].value, atol=1e-12)


def test_is_psd_rejects_non_finite():
    with pytest.raises(InvalidInputError):
        matcore.is_psd([[np.nan, 0], [0, 1]])


def test_psd_sqrt_examples():
    assert np.allclose(matcore.psd_sqrt(np.eye(3)), np.eye(3))
    assert np.allclose(matcore.psd_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))
    R = matcore.psd_sqrt([[2, 1], [1, 2]])
    assert np.allclose(R, ORACLE["psd_sqrt_2112"].value, atol=1e-10)
    assert np.allclose(R, [[1.3660, 0.3660], [0.3660, 1.3660]], atol=1e-4)


def test_psd_sqrt_rejects_indefinite():
    with pytest.raises(NotPsdError) as exc:
        matcore.psd_sqrt([[1, 0], [0, -0.5]])
    assert exc.value.min_eig == pytest.approx(-0.5)


def test_psd_sqrt_clamps_tiny_negative():
    M = np.diag([1.0, -1e-12])
    R = matcore.psd_sqrt(M)
    assert np.allclose(R, np.diag([1.0, 0.0]))


def test_psd_sqrt_squares_back(rng):
    for _ in range(50):
        M = rand_psd(rng, 4, rng.integers(1, 5))
        R = matcore.psd_sqrt(M)
        assert np.allclose(R, R.T)
        assert np.linalg.norm(R @ R - M) <= 1e-10 * max(1.0, np.linalg.norm(M))
        assert matcore.min_eig(R) >= -1e-10


def test_pinv_examples():
    assert np.allclose(matcore.pinv(np.diag([2.0, 0.0])), np.diag([0.5, 0.0]))
    assert np.allclose(matcore.pinv(np.zeros((2, 3))), np.zeros((3, 2)))
    assert np.allclose(matcore.pinv([[1.0], [1.0]]), ORACLE["pinv_col11"].value)
    assert np.allclose(matcore.pinv([[1.0], [1.0]]), [[0.5, 0.5]])


def test_pinv_moore_penrose_identities(rng):
    for _ in range(50):
        m, n, r = rng.integers(1, 6), rng.integers(1, 6), rng.integers(0, 4)
        M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        X = matcore.pinv(M)
        s = 1e-9 * max(1.0, np.linalg.norm(M)) * max(1.0, np.linalg.norm(X)) ** 2
        assert np.linalg.norm(M @ X @ M - M) <= s
        assert np.linalg.norm(X @ M @ X - X) <= s
        assert np.linalg.norm((M @ X).T - M @ X) <= s
        assert np.linalg.norm((X @ M).T - X @ M) <= s


def test_range_projector_examples(planar):
    assert np.allclose(matcore.range_projector(np.diag([2.0, 0.0]), "range"), np.diag([1.0, 0.0]))
    assert np.allclose(matcore.range_projector(np.diag([2.0, 0.0]), "complement"), np.diag([0.0, 1.0]))
    from covsteer.dsys import reach_gramian

    G = reach_gramian(planar.sys, 30, 0)
    assert np.allclose(matcore.range_projector(G, "complement"), np.diag([0.0, 1.0]), atol=1e-10)


def test_range_projector_rejects_bad_mode():
    with pytest.raises(InvalidInputError):
        matcore.range_projector(np.eye(2), "kernel")


def test_projector_laws(rng):
    for _ in range(100):
        m, n, r = rng.integers(1, 6), rng.integers(1, 6), rng.integers(0, 5)
        M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
        P = matcore.range_projector(M, "range")
        Pc = matcore.range_projector(M, "complement")
        for Q in (P, Pc):
            assert np.abs(Q - Q.T).max() <= 1e-12
            assert np.linalg.norm(Q @ Q - Q) <= 1e-10 * max(1.0, np.linalg.norm(Q))
        assert np.linalg.norm(Pc @ M) <= 1e-10 * max(1.0, np.linalg.norm(M))


def test_range_inclusion_examples(planar):
    assert matcore.range_inclusion([[1.0], [0.0]], np.diag([1.0, 0.0]))
    assert not matcore.range_inclusion(np.eye(2), np.diag([1.0, 0.0]))
    from covsteer.dsys import phi, reach_gramian

    M2 = phi(planar.sys, 30, 1) @ planar.sys.D_at(0)
    assert not matcore.range_inclusion(M2, reach_gramian(planar.sys, 30, 1))


def test_range_inclusion_dimension_mismatch():
    with pytest.raises(DimensionError):
        matcore.range_inclusion(np.ones((3, 1)), np.eye(2))


def test_gen_schur_examples():
    assert np.allclose(matcore.gen_schur([[1, 1], [1, 1]], 1), 0.0)
    assert np.allclose(matcore.gen_schur(np.eye(2), 1), 1.0)
    assert np.allclose(matcore.gen_schur([[0, 0], [0, 1]], 1), 1.0)


def test_block_psd_equivalence(rng):
    """Eigenvalue test agrees with the three-part block test on 200 random block matrices."""
    agree = 0
    for trial in range(200):
        n1, n2 = rng.integers(1, 4), rng.integers(1, 4)
        n = n1 + n2
        kind = trial % 4
        if kind == 0:
            M = rand_psd(rng, n, rng.integers(0, n + 1))
        elif kind == 1:
            M = rand_sym(rng, n)
        elif kind == 2:
            # PSD with a singular leading block
            Z = rng.standard_normal((n, rng.integers(1, n + 1)))
            Z[:n1, :] = 0.0 if rng.random() < 0.5 else Z[:n1, :]
            M = Z @ Z.T
        else:
            # leading block singular but off-diagonal leaves its range
            M = rand_psd(rng, n, rng.integers(1, n + 1))
            M[:n1, :n1] = 0.0
            M[0, n1] = M[n1, 0] = 1.0
        assert matcore.is_psd(M, 1e-8) == matcore.block_psd_test(M, n1, 1e-8)
        agree += 1
    assert agree == 200


def test_woodbury_examples():
    assert np.allclose(matcore.woodbury_capped(np.diag([1.0, 0.0]), [[0.0], [1.0]]), np.diag([1.0, 0.0]))
    assert np.allclose(matcore.woodbury_capped(np.eye(2), np.zeros((2, 0))), np.eye(2))
    assert np.allclose(matcore.woodbury_capped(np.diag([2.0, 0.0]), [[1.0], [1.0]]),
                       ORACLE["woodbury_diag20_11"].value, atol=1e-10)


def test_woodbury_rank_deficient():
    with pytest.raises(SingularityError):
        matcore.woodbury_capped(np.diag([1.0, 0.0]), np.zeros((2, 1)))


@settings(max_examples=60, deadline=None)
@given(arrays(np.float64, (3, 3), elements=st.floats(-5, 5)))
def test_symmetrize_is_exact(M):
    S = matcore.symmetrize(M)
    assert np.array_equal(S, S.T)
