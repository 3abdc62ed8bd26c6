"""Desk-scale apprenticeship learning on finite MDPs.

The package revolves around occupancy measures: imitation is cast as matching
the expert's feature expectations, solved by entropy-regularized proximal
updates with logistic (softmin) critics, with exact and sampled critic
variants, an offline single-shot solver, a mirror-descent baseline, and a
dense-LP oracle that certifies optimality claims independently.
"""

__version__ = "0.1.0"

from .errors import ConfigurationError, NumericalError
from .mdp import (OccupancyMeasure, Policy, TabularMdp, bellman_flow_residual,
                  occupancy_measure, policy_from_occupancy, soft_value_iteration,
                  total_cost, uniform_policy, value_iteration)
from .features import (FeatureMap, excitation_estimate, fev,
                       min_feature_excitation, tabular_features, theta_radius,
                       validate_linear_mdp)
from .demos import (TrajectoryDataset, TransitionBuffer, empirical_fev,
                    fev_presets, generate_expert, load_trajectories,
                    sample_occupancy_buffer, sample_trajectories,
                    save_trajectories)
from .envs import ENV_NAMES, make_env

__all__ = [name for name in dir() if not name.startswith("_")]
