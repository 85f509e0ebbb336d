"""When does the closed-form Riccati solution exist on the whole horizon?

For a scalar integrator ``a = 0, b = 1`` on ``[0, 1]`` the solution with
``pi(0) = p`` is ``p / (1 - p t)``; it escapes before ``T = 1`` once ``p >= 1``.
The existence test agrees with direct integration.
"""

import numpy as np

from covsteer.csteer import integrate_riccati, riccati_conditions
from covsteer.csys import ContinuousLtvSystem


def main():
    sys = ContinuousLtvSystem([[0.0]], [[1.0]], T=1.0)
    print(" pi0    lambda_min(I-Ghat Pi0)  lambda_max(...)  exists  RK4 escape")
    for p in (-2.0, 0.0, 0.5, 0.9, 0.99, 1.01, 1.5, 3.0):
        lam_iii, lam_v = riccati_conditions(sys, [[p]])
        _, escaped, t_esc = integrate_riccati(sys, [[p]], [sys.T])
        esc = f"t={t_esc:.3f} (exact {1 / p:.3f})" if escaped else "-"
        print(f"{p:5.2f}   {lam_iii:20.4f}  {lam_v:15.4f}  {str(lam_iii > 0):6}  {esc}")


if __name__ == "__main__":
    main()
