"""Local clustering of age-period log-mortality surfaces across populations.

A Bayesian model for panels of log-mortality rates observed over ages and
calendar periods for several populations.  The age profile of each surface is
expanded over a shared B-spline basis; the per-population coefficient of each
basis function follows a temporal random partition process, so that groups of
populations may share coefficients locally in (age interval, period) cells.
Inference runs through a Gibbs sampler; summaries include co-clustering
matrices, minimum-VI point partitions, coefficient trajectories and
association measures against external indicators.
"""

__version__ = "0.1.0"

from surfclust.splinebasis import SplineBasis, build_basis, default_mortality_basis
from surfclust.partitions import Membership, PersistenceFlags
from surfclust.modelcore import GPCovariance, Hyperparameters, ModelState, SurfacePanel

__all__ = [
    "__version__",
    "SplineBasis",
    "build_basis",
    "default_mortality_basis",
    "Membership",
    "PersistenceFlags",
    "GPCovariance",
    "Hyperparameters",
    "ModelState",
    "SurfacePanel",
]
