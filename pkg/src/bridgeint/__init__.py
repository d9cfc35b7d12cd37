"""Path integrals along high-dimensional Brownian bridges and free Brownian motion.

The package computes occupation-type functionals int_0^t v(X_s) ds of a
bounded, compactly supported potential v, where X is either a Brownian
bridge or an unconstrained Brownian motion in dimension d >= 3.  It provides
exact Gaussian laws, Monte Carlo estimators with standard errors,
deterministic quadrature oracles for low-order moments, and experiment
harnesses that measure convergence of the bridge integral to its
long-horizon limits.
"""

from .gaussian import (
    TimePoints,
    SpacePoints,
    transition_density,
    log_transition_density,
    free_joint_density,
    bridge_joint_density,
    bridge_marginal,
    density_ratio,
    jensen_lower_bound,
)
from .potentials import Potential, BoundsReport, k1_bound, alpha1_divergence_probe
from .path_sim import (
    BridgeSpec,
    TimeGrid,
    PathSample,
    sample_bridge,
    sample_free,
    integrate_along_path,
    sample_bridge_integral,
    sample_free_integral,
    sample_two_sided_integral,
)
from .estimators import (
    McEstimate,
    MgfCurve,
    EstimatorConfig,
    mc_moment,
    mc_mgf,
    reaction_probability,
    bloch_green,
)
from .quadrature import (
    QuadConfig,
    moment_free,
    moment_bridge,
    moment_two_sided,
    horizon_moment_gap,
)
from .convergence import (
    SweepPlan,
    ConvergenceReport,
    run_theorem1,
    run_theorem2,
    run_lemma4,
    density_ratio_sweep,
    scaling_restatement,
)

__all__ = [
    "TimePoints",
    "SpacePoints",
    "transition_density",
    "log_transition_density",
    "free_joint_density",
    "bridge_joint_density",
    "bridge_marginal",
    "density_ratio",
    "jensen_lower_bound",
    "Potential",
    "BoundsReport",
    "k1_bound",
    "alpha1_divergence_probe",
    "BridgeSpec",
    "TimeGrid",
    "PathSample",
    "sample_bridge",
    "sample_free",
    "integrate_along_path",
    "sample_bridge_integral",
    "sample_free_integral",
    "sample_two_sided_integral",
    "McEstimate",
    "MgfCurve",
    "EstimatorConfig",
    "mc_moment",
    "mc_mgf",
    "reaction_probability",
    "bloch_green",
    "QuadConfig",
    "moment_free",
    "moment_bridge",
    "moment_two_sided",
    "horizon_moment_gap",
    "SweepPlan",
    "ConvergenceReport",
    "run_theorem1",
    "run_theorem2",
    "run_lemma4",
    "density_ratio_sweep",
    "scaling_restatement",
]

__version__ = "0.1.0"
