"""Feature maps for linear MDP structure.

A feature map assigns every state-action pair a vector ``phi(s, a)`` lying on
the probability simplex of dimension ``m``. When the transition kernel
factorizes as ``T = phi @ factor`` (each factor row itself a distribution over
next states), the MDP is "linear" and Bellman errors can be tracked in the
m-dimensional feature space instead of over all pairs. The tabular case is
the identity map with the transition matrix as its own factor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .mdp import OccupancyMeasure, Policy, TabularMdp

_SIMPLEX_TOL = 1e-10
_FACTOR_TOL = 1e-8


@dataclass(frozen=True)
class FeatureMap:
    """Simplex-valued features, with an optional transition factorization.

    ``phi`` has shape ``(S*A, m)``; each row is a probability vector over
    feature coordinates. ``factor`` (shape ``(m, S)``), when present, gives
    the next-state distribution attached to each coordinate, so that
    ``transition = phi @ factor``.
    """

    phi: np.ndarray
    factor: np.ndarray | None = None

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        if phi.ndim != 2:
            raise ConfigurationError("phi must be a 2-d array (pairs x features)")
        if not np.all(np.isfinite(phi)):
            raise ConfigurationError("phi contains non-finite entries")
        if phi.min() < -_SIMPLEX_TOL:
            raise ConfigurationError("phi rows must be nonnegative")
        if np.max(np.abs(phi.sum(axis=1) - 1.0)) > _SIMPLEX_TOL:
            raise ConfigurationError("phi rows must sum to 1 (simplex convention)")
        object.__setattr__(self, "phi", phi)
        if self.factor is not None:
            fac = np.asarray(self.factor, dtype=float)
            if fac.shape != (phi.shape[1], fac.shape[1]) or fac.ndim != 2:
                raise ConfigurationError("factor must have shape (m, n_states)")
            if not np.all(np.isfinite(fac)):
                raise ConfigurationError("factor contains non-finite entries")
            if fac.min() < -_SIMPLEX_TOL or np.max(np.abs(fac.sum(axis=1) - 1.0)) > _SIMPLEX_TOL:
                raise ConfigurationError("factor rows must be probability vectors")
            object.__setattr__(self, "factor", fac)

    @property
    def n_features(self) -> int:
        return self.phi.shape[1]

    @property
    def n_pairs(self) -> int:
        return self.phi.shape[0]


def tabular_features(mdp: TabularMdp) -> FeatureMap:
    """Identity features: one indicator per pair, factored by the kernel."""
    return FeatureMap(np.eye(mdp.n_pairs), mdp.transition.copy())


def validate_linear_mdp(mdp: TabularMdp, features: FeatureMap,
                        tol: float = _FACTOR_TOL) -> float:
    """Check ``transition == phi @ factor`` and return the sup-norm defect.

    Raises if the factor is missing (the exact critic path needs it) or the
    factorization does not reproduce the kernel.
    """
    if features.phi.shape[0] != mdp.n_pairs:
        raise ConfigurationError("feature map and MDP disagree on the number of pairs")
    if features.factor is None:
        raise ConfigurationError(
            "feature map has no transition factor; exact feature-space "
            "computations need one (tabular_features provides it)")
    if features.factor.shape[1] != mdp.n_states:
        raise ConfigurationError("transition factor has the wrong state dimension")
    defect = float(np.max(np.abs(mdp.transition - features.phi @ features.factor)))
    if defect > tol:
        raise ConfigurationError(
            f"phi @ factor misses the transition kernel by {defect:.3e} (tol {tol:g})")
    return defect


def fev(features: FeatureMap, occ: OccupancyMeasure | np.ndarray) -> np.ndarray:
    """Feature expectation vector ``phi^T mu`` of an occupancy measure.

    With simplex rows the result is again a point of the m-simplex.
    """
    mu = occ.mu if isinstance(occ, OccupancyMeasure) else np.asarray(occ, dtype=float)
    if mu.shape != (features.n_pairs,):
        raise ConfigurationError("occupancy length does not match the feature map")
    return features.phi.T @ mu


def state_policy_features(features: FeatureMap, policy: Policy) -> np.ndarray:
    """Per-state expected features ``F(s) = sum_a pi(a|s) phi(s, a)``, (S, m)."""
    n_states, n_actions = policy.probs.shape
    if features.n_pairs != n_states * n_actions:
        raise ConfigurationError("policy shape does not match the feature map")
    cube = features.phi.reshape(n_states, n_actions, features.n_features)
    return np.einsum("sa,saj->sj", policy.probs, cube)


def min_feature_excitation(features: FeatureMap,
                           occ: OccupancyMeasure | np.ndarray) -> float:
    """Smallest eigenvalue of the second-moment matrix ``E_mu[phi phi^T]``.

    Zero means some feature direction is never excited by the occupancy,
    which is exactly when ridge regression on features becomes ill-posed.
    """
    mu = occ.mu if isinstance(occ, OccupancyMeasure) else np.asarray(occ, dtype=float)
    if mu.shape != (features.n_pairs,):
        raise ConfigurationError("occupancy length does not match the feature map")
    second_moment = features.phi.T @ (mu[:, None] * features.phi)
    return float(np.linalg.eigvalsh(second_moment)[0])


# Coordinate-coverage floor: tabular expert occupancies routinely leave whole
# coordinates unvisited, which would send the theta box radius to infinity.
EXCITATION_FLOOR = 1e-3


def excitation_estimate(features: FeatureMap, occ: OccupancyMeasure | np.ndarray,
                        floor: float = EXCITATION_FLOOR) -> float:
    """Floored coverage constant used to size the critic's parameter box."""
    return max(min_feature_excitation(features, occ), floor)


def theta_radius(excitation: float, gamma: float) -> float:
    """Sup-norm box radius for critic parameters: ``(1 + |log beta|)/(1-gamma)``.

    Derived from the coverage constant: the optimal critic parameter is
    bounded by this radius, so clipping to the box never cuts off the
    maximizer while keeping every Bellman-error exponent bounded.
    """
    if not (0 < excitation):
        raise ConfigurationError("excitation must be positive (apply the floor first)")
    if not (0.0 < gamma < 1.0):
        raise ConfigurationError("gamma must lie in (0, 1)")
    return (1.0 + abs(np.log(excitation))) / (1.0 - gamma)


def features_to_json(features: FeatureMap) -> dict:
    payload: dict = {"phi": features.phi.tolist()}
    if features.factor is not None:
        payload["factor_m"] = features.factor.tolist()
    return payload


def features_from_json(payload: dict) -> FeatureMap:
    try:
        phi = np.asarray(payload["phi"], dtype=float)
    except KeyError:
        raise ConfigurationError("feature JSON is missing 'phi'") from None
    factor = payload.get("factor_m")
    return FeatureMap(phi, None if factor is None else np.asarray(factor, dtype=float))
