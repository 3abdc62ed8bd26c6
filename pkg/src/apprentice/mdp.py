"""Finite discounted MDPs and their occupancy-measure calculus.

Conventions used everywhere in this package:

* state-action pairs are flattened row-major, ``idx = s * n_actions + a``;
* ``transition`` has shape ``(S*A, S)`` with row ``(s, a)`` giving the
  next-state law;
* an occupancy measure is the discounted visitation distribution
  ``mu(s, a) = (1 - gamma) * sum_t gamma^t P[s_t = s, a_t = a]``, a
  probability vector over pairs satisfying the flow balance

      marginal(mu) = gamma * transition^T mu + (1 - gamma) * init_dist.

Costs live in ``[0, 1]`` and are minimized; returns reported elsewhere are
negated costs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp, softmax

from .errors import ConfigurationError, NumericalError

# Validation slack. Stochasticity defects beyond these are caller bugs, not
# float dust, so constructors refuse rather than renormalize.
_ROW_TOL = 1e-12
_OCC_TOL = 1e-10


def _as_float_array(x: Any, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=float)
    if arr.shape != shape:
        raise ConfigurationError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class TabularMdp:
    """A finite MDP with a discount factor and a ground-truth cost."""

    n_states: int
    n_actions: int
    transition: np.ndarray  # (S*A, S), rows are next-state distributions
    init_dist: np.ndarray  # (S,)
    true_cost: np.ndarray  # (S*A,), entries in [0, 1]
    gamma: float

    def __post_init__(self):
        if self.n_states < 1 or self.n_actions < 1:
            raise ConfigurationError("need at least one state and one action")
        if not (0.0 < self.gamma < 1.0):
            raise ConfigurationError(f"gamma must lie in (0, 1), got {self.gamma}")
        n = self.n_states * self.n_actions
        object.__setattr__(
            self, "transition",
            _as_float_array(self.transition, (n, self.n_states), "transition"))
        object.__setattr__(
            self, "init_dist",
            _as_float_array(self.init_dist, (self.n_states,), "init_dist"))
        object.__setattr__(
            self, "true_cost",
            _as_float_array(self.true_cost, (n,), "true_cost"))
        rows = self.transition.sum(axis=1)
        if np.max(np.abs(rows - 1.0)) > _ROW_TOL or self.transition.min() < -_ROW_TOL:
            raise ConfigurationError("transition rows must be probability vectors")
        if abs(self.init_dist.sum() - 1.0) > _ROW_TOL or self.init_dist.min() < -_ROW_TOL:
            raise ConfigurationError("init_dist must be a probability vector")
        if self.true_cost.min() < -_ROW_TOL or self.true_cost.max() > 1.0 + _ROW_TOL:
            raise ConfigurationError("true_cost entries must lie in [0, 1]")

    @property
    def n_pairs(self) -> int:
        return self.n_states * self.n_actions

    def pair_index(self, state: int, action: int) -> int:
        return state * self.n_actions + action


@dataclass(frozen=True)
class Policy:
    """A stationary stochastic policy, rows ``probs[s] = pi(.|s)``."""

    probs: np.ndarray  # (S, A)

    def __post_init__(self):
        arr = np.asarray(self.probs, dtype=float)
        if arr.ndim != 2:
            raise ConfigurationError("policy table must be 2-d (states x actions)")
        if not np.all(np.isfinite(arr)):
            raise ConfigurationError("policy table contains non-finite entries")
        if arr.min() < -_ROW_TOL:
            raise ConfigurationError("policy probabilities must be nonnegative")
        if np.max(np.abs(arr.sum(axis=1) - 1.0)) > _ROW_TOL:
            raise ConfigurationError("policy rows must sum to 1")
        object.__setattr__(self, "probs", arr)

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]

    def flat(self) -> np.ndarray:
        """Row-major (S*A,) view matching the pair indexing."""
        return self.probs.reshape(-1)


@dataclass(frozen=True)
class OccupancyMeasure:
    """Discounted state-action visitation frequencies, a vector over pairs."""

    mu: np.ndarray  # (S*A,)
    n_states: int
    n_actions: int

    def __post_init__(self):
        arr = np.asarray(self.mu, dtype=float)
        if arr.shape != (self.n_states * self.n_actions,):
            raise ConfigurationError(
                f"occupancy must have {self.n_states * self.n_actions} entries")
        if arr.min() < -_OCC_TOL:
            raise ConfigurationError("occupancy entries must be nonnegative")
        if abs(arr.sum() - 1.0) > _OCC_TOL:
            raise ConfigurationError(
                f"occupancy must sum to 1 (got {arr.sum():.12g})")
        object.__setattr__(self, "mu", np.maximum(arr, 0.0))

    def state_marginal(self) -> np.ndarray:
        return self.mu.reshape(self.n_states, self.n_actions).sum(axis=1)


def uniform_policy(mdp: TabularMdp) -> Policy:
    return Policy(np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))


def policy_transition(mdp: TabularMdp, policy: Policy) -> np.ndarray:
    """State-to-state kernel ``P_pi(s, s') = sum_a pi(a|s) T(s,a -> s')``."""
    t = mdp.transition.reshape(mdp.n_states, mdp.n_actions, mdp.n_states)
    return np.einsum("sa,sat->st", policy.probs, t)


def policy_evaluation(mdp: TabularMdp, policy: Policy, cost: np.ndarray) -> np.ndarray:
    """Solve ``V = c_pi + gamma * P_pi V`` exactly (dense linear solve)."""
    cost = _as_float_array(cost, (mdp.n_pairs,), "cost")
    p_pi = policy_transition(mdp, policy)
    c_pi = (policy.probs * cost.reshape(mdp.n_states, mdp.n_actions)).sum(axis=1)
    return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi, c_pi)


# Past this size the dense (I - gamma P_pi^T) solve stops being the obvious
# winner; fall back to forward propagation of the state distribution.
_DENSE_SOLVE_LIMIT = 5000


def occupancy_measure(mdp: TabularMdp, policy: Policy,
                      tol: float = 1e-10) -> OccupancyMeasure:
    """Occupancy measure of ``policy``: exact solve or power iteration.

    The state marginal solves the flow equation
    ``d = (1 - gamma) nu0 + gamma P_pi^T d``; the pair measure is then
    ``mu(s, a) = d(s) pi(a|s)``.
    """
    if policy.probs.shape != (mdp.n_states, mdp.n_actions):
        raise ConfigurationError("policy shape does not match the MDP")
    p_pi = policy_transition(mdp, policy)
    source = (1.0 - mdp.gamma) * mdp.init_dist
    if mdp.n_pairs <= _DENSE_SOLVE_LIMIT:
        d = np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * p_pi.T, source)
    else:
        # Geometric contraction at rate gamma: tol is reached after about
        # log(tol)/log(gamma) sweeps; the 10x cap leaves a wide margin.
        cap = 10 * max(1, math.ceil(math.log(tol) / math.log(mdp.gamma)))
        d = source.copy()
        residual = np.inf
        for _ in range(cap):
            d_next = source + mdp.gamma * (p_pi.T @ d)
            residual = float(np.max(np.abs(d_next - d)))
            d = d_next
            if residual <= tol:
                break
        else:
            raise NumericalError(
                "occupancy power iteration did not converge",
                diagnostics={"residual": residual, "iterations": cap, "tol": tol})
    mu = (d[:, None] * policy.probs).reshape(-1)
    # Tiny negative dust from the solve is legal; real negativity is not.
    if mu.min() < -_OCC_TOL:
        raise NumericalError(
            "occupancy solve produced negative mass",
            diagnostics={"min_entry": float(mu.min())})
    return OccupancyMeasure(np.maximum(mu, 0.0), mdp.n_states, mdp.n_actions)


def policy_from_occupancy(occ: OccupancyMeasure) -> Policy:
    """Conditional policy ``pi(a|s) = mu(s,a) / marginal(s)``.

    States the occupancy never visits get a uniform row: any policy is
    consistent there, and uniform keeps downstream KL terms finite.
    """
    table = occ.mu.reshape(occ.n_states, occ.n_actions)
    marg = table.sum(axis=1)
    probs = np.full_like(table, 1.0 / occ.n_actions)
    visited = marg > 0.0
    probs[visited] = table[visited] / marg[visited, None]
    return Policy(probs)


def bellman_flow_residual(mdp: TabularMdp, mu: np.ndarray) -> float:
    """Sup-norm violation of the flow balance by a candidate pair measure."""
    mu = _as_float_array(mu, (mdp.n_pairs,), "mu")
    marginal = mu.reshape(mdp.n_states, mdp.n_actions).sum(axis=1)
    inflow = mdp.gamma * (mdp.transition.T @ mu) + (1.0 - mdp.gamma) * mdp.init_dist
    return float(np.max(np.abs(marginal - inflow)))


def total_cost(mdp: TabularMdp, policy: Policy, cost: np.ndarray | None = None,
               tol: float = 1e-8) -> float:
    """Normalized expected discounted cost ``<mu_pi, c>`` of a policy.

    Evaluated two independent ways — through the occupancy measure and
    through ``(1 - gamma) <nu0, V_c^pi>`` — which must agree; a gap beyond
    ``tol`` means one of the linear solves went bad.
    """
    if cost is None:
        cost = mdp.true_cost
    cost = _as_float_array(cost, (mdp.n_pairs,), "cost")
    via_occupancy = float(occupancy_measure(mdp, policy).mu @ cost)
    via_values = (1.0 - mdp.gamma) * float(
        mdp.init_dist @ policy_evaluation(mdp, policy, cost))
    if abs(via_occupancy - via_values) > tol:
        raise NumericalError(
            "occupancy-route and value-route costs disagree",
            diagnostics={"via_occupancy": via_occupancy, "via_values": via_values,
                         "gap": abs(via_occupancy - via_values)})
    return via_occupancy


@dataclass(frozen=True)
class ValueSolution:
    """Output of (soft) value iteration."""

    values: np.ndarray  # (S,)
    q_values: np.ndarray  # (S*A,)
    policy: Policy
    iterations: int
    residual: float
    extras: dict = field(default_factory=dict)


def _iteration_cap(gamma: float, tol: float) -> int:
    return 10 * max(100, math.ceil(math.log(min(tol, 0.5)) / math.log(gamma)))


def value_iteration(mdp: TabularMdp, cost: np.ndarray | None = None,
                    tol: float = 1e-10) -> ValueSolution:
    """Standard value iteration for the minimum-cost control problem.

    Stops when ``||V - TV||_inf <= tol``. The returned policy is greedy with
    ties broken toward the lowest action index (argmin order).
    """
    if cost is None:
        cost = mdp.true_cost
    cost = _as_float_array(cost, (mdp.n_pairs,), "cost")
    cap = _iteration_cap(mdp.gamma, tol)
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, cap + 1):
        q = cost + mdp.gamma * (mdp.transition @ v)
        v_next = q.reshape(mdp.n_states, mdp.n_actions).min(axis=1)
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= tol:
            break
    else:
        raise NumericalError(
            "value iteration hit the iteration cap",
            diagnostics={"residual": residual, "iterations": cap, "tol": tol})
    q = cost + mdp.gamma * (mdp.transition @ v)
    greedy = q.reshape(mdp.n_states, mdp.n_actions).argmin(axis=1)
    probs = np.zeros((mdp.n_states, mdp.n_actions))
    probs[np.arange(mdp.n_states), greedy] = 1.0
    return ValueSolution(v, q, Policy(probs), it, residual)


def soft_value_iteration(mdp: TabularMdp, cost: np.ndarray | None = None,
                         alpha: float = 1.0, tol: float = 1e-10) -> ValueSolution:
    """Smoothed control: the min over actions becomes an alpha-softmin.

    The backup is ``V(s) = -(1/alpha) log sum_a exp(-alpha Q(s, a))`` (no
    1/A weighting, so large alpha recovers the hard minimum and the fixed
    point for a zero cost is ``-log(A) / (alpha (1 - gamma))``, not zero).
    The returned policy is the Boltzmann policy ``pi ~ exp(-alpha Q)``.
    """
    if alpha <= 0:
        raise ConfigurationError("alpha must be positive")
    if cost is None:
        cost = mdp.true_cost
    cost = _as_float_array(cost, (mdp.n_pairs,), "cost")
    cap = _iteration_cap(mdp.gamma, tol)
    v = np.zeros(mdp.n_states)
    residual = np.inf
    for it in range(1, cap + 1):
        q = cost + mdp.gamma * (mdp.transition @ v)
        v_next = -logsumexp(-alpha * q.reshape(mdp.n_states, mdp.n_actions),
                            axis=1) / alpha
        residual = float(np.max(np.abs(v_next - v)))
        v = v_next
        if residual <= tol:
            break
    else:
        raise NumericalError(
            "soft value iteration hit the iteration cap",
            diagnostics={"residual": residual, "iterations": cap, "tol": tol})
    q = cost + mdp.gamma * (mdp.transition @ v)
    probs = softmax(-alpha * q.reshape(mdp.n_states, mdp.n_actions), axis=1)
    return ValueSolution(v, q, Policy(probs), it, residual)


def mdp_to_json(mdp: TabularMdp) -> dict:
    return {
        "n_states": mdp.n_states,
        "n_actions": mdp.n_actions,
        "transition": mdp.transition.tolist(),
        "init_dist": mdp.init_dist.tolist(),
        "true_cost": mdp.true_cost.tolist(),
        "gamma": mdp.gamma,
    }


def mdp_from_json(payload: dict) -> TabularMdp:
    try:
        return TabularMdp(
            n_states=int(payload["n_states"]),
            n_actions=int(payload["n_actions"]),
            transition=np.asarray(payload["transition"], dtype=float),
            init_dist=np.asarray(payload["init_dist"], dtype=float),
            true_cost=np.asarray(payload["true_cost"], dtype=float),
            gamma=float(payload["gamma"]),
        )
    except KeyError as missing:
        raise ConfigurationError(f"MDP JSON is missing key {missing}") from None
