"""Slow-variable recovery for multiscale SDE data.

Local covariances estimated from short simulation bursts define a Mahalanobis
metric that collapses fast directions; diffusion maps on that metric give
coordinates that parameterise the slow variables.
"""

from .dmaps import (DmapsConfig, DmapsResult, best_matching_eigenvector, diffusion_map,
                    embed, kernel_matrix)
from .errors import *  # noqa: F401,F403
from .geometry import (LocalCovariance, SquaredDistanceMatrix, estimate_covariance,
                       mahalanobis_sq, metric_bounds, pairwise_euclidean,
                       pairwise_mahalanobis, pseudoinvert)
from .observation import (ObservationMap, get_map, halfmoon_map, identity_map, invert,
                          linear_map, observe, register_map, rescale)
from .sde import (BurstConfig, BurstEnsemble, SdeSystem, Trajectory, em_step,
                  linear_example, sample_burst, sample_bursts, simulate)
from .tuning import (delta_t_scan, detect_knee, detect_quadratic_break, oracle_halfmoon,
                     oracle_halfmoon_em, oracle_linear_cov, sigma_scan)

__version__ = "0.1.0"
