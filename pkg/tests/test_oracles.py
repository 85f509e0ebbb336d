import json

import numpy as np
import pytest

from covsteer.dreach import is_reachable_cov
from covsteer.dsys import DiscreteLtvSystem
from covsteer.errors import EscapeError
from covsteer.oracles import (
    derived_reports,
    enumerate_reachable_1d,
    fixed_entry_oracle,
    fixed_entry_series,
    gramian_quad_oracle,
    reports_json,
    riccati_ivp_oracle,
    scalar_riccati_oracle,
)

REPORTS = {r.name: r for r in derived_reports()}


def test_fixed_entry_values():
    assert REPORTS["fixed_entry_k30"].value == pytest.approx(1.3079, abs=5e-4)
    lead, noise = REPORTS["fixed_entry_series_k30"].value
    assert lead + noise == pytest.approx(REPORTS["fixed_entry_k30"].value, abs=1e-12)
    assert REPORTS["fixed_entry_k1"].value == pytest.approx(0.96**2 * 3 + 0.09, abs=1e-12)


def test_series_matches_summation():
    A = np.array([[0.7, 0.0], [0.0, 0.5]])
    D = np.diag([0.0, 0.4])
    S0 = np.diag([1.0, 2.0])
    assert sum(fixed_entry_series(0.5, 2.0, 0.16, 9)) == pytest.approx(fixed_entry_oracle(A, D, S0, 9), abs=1e-14)


def test_small_example_values():
    assert np.allclose(REPORTS["phi_A_2_0"].value, [[1, 0.392], [0, 0.9216]])
    assert np.allclose(REPORTS["psd_sqrt_2112"].value @ REPORTS["psd_sqrt_2112"].value, [[2, 1], [1, 2]])
    assert np.allclose(REPORTS["pinv_col11"].value, [[0.5, 0.5]])
    assert np.allclose(REPORTS["woodbury_diag20_11"].value, [[2.0, 0.0], [0.0, 0.0]])
    assert np.all(np.asarray(REPORTS["eig_sigma30_minus_DDT"].value) > 0)
    assert REPORTS["scalar_riccati_half"].value == pytest.approx(1.0)
    assert np.allclose(REPORTS["double_integrator_G"].value, [[1 / 3, 1 / 2], [1 / 2, 1]], atol=1e-10)
    assert float(np.squeeze(REPORTS["scalar_decay"].value)) == pytest.approx(np.exp(-2), abs=1e-10)


def test_enumeration_vs_certificate():
    lo, hi = REPORTS["enumerate_a1b1d0"].value
    assert (lo, hi) == pytest.approx((0.0, 10.0))
    lo, hi = REPORTS["enumerate_a1b1d1"].value
    assert (lo, hi) == pytest.approx((1.0, 11.0))
    sys = DiscreteLtvSystem(1.0, 1.0, 1.0)
    assert is_reachable_cov(sys, 1.0, 1, [[1.0]]) and is_reachable_cov(sys, 1.0, 1, [[11.0]])
    assert not is_reachable_cov(sys, 1.0, 1, [[0.9]])
    assert enumerate_reachable_1d(0.5, 0.0, 1.0, 3, 2.0, [0.0], [0.0])[0] == pytest.approx(
        fixed_entry_oracle(0.5, 1.0, 2.0, 3, (0, 0)))


def test_scalar_riccati_oracle_vs_ivp():
    for a, b, p in [(0.3, 1.0, 0.4), (-0.7, 0.5, -2.0), (0.0, 1.0, 0.9)]:
        ref = riccati_ivp_oracle(a, b, p, [0.5, 1.0])
        for t, r in zip((0.5, 1.0), ref):
            assert scalar_riccati_oracle(a, b, p, t) == pytest.approx(r[0, 0], rel=1e-9)
    with pytest.raises(EscapeError):
        scalar_riccati_oracle(0.5, 1.0, 3.0, 1.0)


def test_quad_oracle_trivial():
    assert gramian_quad_oracle(0.0, 1.0, 2.0, 0.5)[0, 0] == pytest.approx(1.5)
    assert np.array_equal(gramian_quad_oracle(0.0, 1.0, 1.0, 1.0), np.zeros((1, 1)))


def test_reports_serialize():
    data = json.loads(reports_json())
    assert {d["name"] for d in data} == set(REPORTS)
    assert all({"value", "method", "tol"} <= set(d) for d in data)
