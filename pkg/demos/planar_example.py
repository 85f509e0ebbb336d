"""Planar discrete example: pinned entry, membership, SDP steering and figure data.

Writes ``planar_paths.csv`` and ``planar_ellipses.csv`` next to this script.
Run with ``python3 demos/planar_example.py``.
"""

from pathlib import Path

import numpy as np

from covsteer.benchmarks import planar_example
from covsteer.dreach import cov_controllable, is_reachable_cov, reach_set_description
from covsteer.dsys import propagate_cov
from covsteer.sdpsteer import build_steering_sdp, recover_policy, solve_steering_sdp
from covsteer.sim import empirical_cov, ellipse_csv, ellipse_data, ensemble_csv, simulate_discrete

OUT = Path(__file__).resolve().parent


def main():
    ex = planar_example()
    cert = reach_set_description(ex.sys, ex.sigma0, ex.k)
    _, pinned = cert.fixed_entries()
    print(f"pinned (2,2) entry at step {ex.k}: {pinned[1, 1]:.6f}")
    print("controllable:", cov_controllable(ex.sys, ex.k).controllable)

    print("target reachable:", is_reachable_cov(ex.sys, ex.sigma0, ex.k, ex.sigmaK, certificate=cert).member)
    bad = ex.sigmaK.copy()
    bad[1, 1] = 1.0
    verdict = is_reachable_cov(ex.sys, ex.sigma0, ex.k, bad, certificate=cert)
    print("(2,2)=1.0 reachable:", verdict.member, [(v.kind, round(v.residual, 4)) for v in verdict.violations])

    sol = solve_steering_sdp(build_steering_sdp(ex.sys, ex.sigma0, ex.sigmaK, ex.k))
    pol = recover_policy(ex.sys, sol)
    final = propagate_cov(ex.sys, ex.sigma0, pol, ex.k).final
    print(f"SDP {sol.status}, objective {sol.objective:.4f}, terminal error {np.linalg.norm(final - ex.sigmaK):.2e}")

    ens = simulate_discrete(ex.sys, pol, ex.sigma0, ex.mu0, 20000, ex.k, seed=1)
    print("empirical terminal covariance:\n", np.round(empirical_cov(ens, ex.k), 4))

    (OUT / "planar_paths.csv").write_text(ensemble_csv(ens, path_ids=range(20)))
    polys = {"initial": ellipse_data(ex.sigma0, ex.mu0), "terminal": ellipse_data(ex.sigmaK, ex.muK)}
    (OUT / "planar_ellipses.csv").write_text(ellipse_csv(polys))
    print("wrote planar_paths.csv and planar_ellipses.csv")


if __name__ == "__main__":
    main()
