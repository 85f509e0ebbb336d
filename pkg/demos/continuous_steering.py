"""Minimum-energy steering of a noisy double integrator on ``[0, 1]``.

Solves for the Riccati boundary value, checks the terminal covariance with
the closed-loop Lyapunov equation and with Monte Carlo paths.
"""

import numpy as np

from covsteer.csteer import closed_loop_cov, steer_min_energy
from covsteer.csys import ContinuousLtvSystem, cov_controllable_c
from covsteer.sim import empirical_cov, simulate_continuous


def main():
    A = np.array([[0.0, 1.0], [0.0, 0.0]])
    B = np.array([[0.0], [1.0]])
    D = np.array([[0.0], [0.4]])
    sys = ContinuousLtvSystem(A, B, D, T=1.0)
    print("controllable:", cov_controllable_c(sys).controllable)

    sigma0 = np.diag([1.0, 0.5])
    target = np.array([[0.3, -0.1], [-0.1, 0.4]])
    law = steer_min_energy(sys, sigma0, target)
    print(f"Newton: {law.iterations} iterations, residual {law.residual:.2e}")
    print("Pi_0 =\n", np.round(law.riccati.pi0, 6))

    reached = closed_loop_cov(law, sigma0)
    print(f"closed-loop terminal error {np.linalg.norm(reached - target):.2e}")

    ens = simulate_continuous(sys, law, sigma0, np.zeros(2), 20000, seed=7, record=[sys.grid])
    print("Monte Carlo terminal covariance:\n", np.round(empirical_cov(ens, 0), 4))


if __name__ == "__main__":
    main()
