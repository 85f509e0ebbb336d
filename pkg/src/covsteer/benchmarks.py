"""Reference problem instances."""

from dataclasses import dataclass

import numpy as np

from .dreach import reach_set_description
from .dsys import DiscreteLtvSystem

__all__ = ["PlanarExample", "planar_example"]


@dataclass
class PlanarExample:
    sys: DiscreteLtvSystem
    k: int
    sigma0: np.ndarray
    sigmaK: np.ndarray
    sigmaK_printed: np.ndarray
    mu0: np.ndarray
    muK: np.ndarray


def planar_example():
    """Two-state system with a scalar input acting on the first state only.

    The second state is never influenced by the input, so the (2,2) entry of
    every reachable covariance at step 30 is pinned by the initial covariance
    and the noise. ``sigmaK`` carries that pinned value to full precision;
    ``sigmaK_printed`` is the same target with the entry rounded to 1.3079.
    """
    A = np.array([[1.0, 0.2], [0.0, 0.96]])
    B = np.array([[1.0], [0.0]])
    D = np.array([[0.4, 0.2], [0.0, 0.3]])
    sys = DiscreteLtvSystem(A, B, D)
    k = 30
    sigma0 = np.array([[5.0, -1.0], [-1.0, 3.0]])
    printed = np.array([[0.5, 0.2], [0.2, 1.3079]])
    _, pinned = reach_set_description(sys, sigma0, k).fixed_entries()
    target = printed.copy()
    target[1, 1] = pinned[1, 1]
    return PlanarExample(sys, k, sigma0, target, printed, np.zeros(2), np.array([30.0, 0.0]))
