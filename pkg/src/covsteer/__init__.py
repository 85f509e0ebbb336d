"""Covariance reachability, controllability and steering for linear stochastic systems."""

__version__ = "0.1.0"

from . import errors, matcore  # noqa: E402
from .csteer import (  # noqa: E402
    ContinuousSteeringLaw,
    NewtonConfig,
    RiccatiSolution,
    f_jacobian,
    f_map,
    phi_pi,
    riccati_exists,
    riccati_solve,
    steer_min_energy,
)
from .csys import (  # noqa: E402
    ContinuousLtvSystem,
    cov_controllable_c,
    gramians_c,
    phi_c,
    propagate_cov_c,
    upper_bound_sample,
)
from .dreach import (  # noqa: E402
    ReachabilityCertificate,
    cov_controllable,
    is_reachable_cov,
    mean_reachable,
    reach_set_description,
)
from .dsys import (  # noqa: E402
    CovTrajectory,
    DiscreteLtvSystem,
    DiscretePolicy,
    ctrl_gramian,
    phi,
    propagate_cov,
    reach_gramian,
)
from .sdpsteer import (  # noqa: E402
    SdpProblem,
    SdpSolution,
    build_steering_sdp,
    recover_policy,
    solve_steering_sdp,
)
from .sim import (  # noqa: E402
    SimEnsemble,
    ellipse_data,
    empirical_cov,
    simulate_continuous,
    simulate_discrete,
)
