"""Evaluation helpers: feature-matching gaps, returns, recovered-cost checks.

Everything here is evaluation-side: it may consult the true model even when
the learner that produced the artifacts could not.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError
from .mdp import (Policy, TabularMdp, occupancy_measure, total_cost,
                  uniform_policy, value_iteration)


def imitation_gap(candidate_fev: np.ndarray, expert_fev: np.ndarray,
                  w_class: str = "simplex") -> float:
    """Worst-case cost excess of the candidate over the expert.

    Over the simplex of feature prices this is the largest coordinate of the
    FEV difference; over the unit ball it is the Euclidean norm.
    """
    diff = np.asarray(candidate_fev, dtype=float) - np.asarray(expert_fev,
                                                               dtype=float)
    if w_class == "simplex":
        return float(np.max(diff))
    if w_class == "ball":
        return float(np.linalg.norm(diff))
    raise ConfigurationError("w_class must be 'simplex' or 'ball'")


def policy_return(env: TabularMdp, policy: Policy) -> float:
    """Negated discounted cost, so bigger is better."""
    return -total_cost(env, policy)


def normalized_return(env: TabularMdp, policy: Policy, expert_policy: Policy,
                      clip: bool = False) -> float:
    """Return rescaled so uniform-random scores 0 and the expert scores 1.

    Raw by default (values above 1 or below 0 are informative); pass
    ``clip=True`` only at the reporting boundary.
    """
    base = policy_return(env, uniform_policy(env))
    top = policy_return(env, expert_policy)
    if abs(top - base) < 1e-12:
        raise ConfigurationError(
            "expert and uniform returns coincide; normalized return undefined")
    value = (policy_return(env, policy) - base) / (top - base)
    if clip:
        value = min(max(value, 0.0), 1.0)
    return float(value)


def rescale_cost(cost: np.ndarray) -> np.ndarray:
    """Affinely map a cost vector into [0, 1] (order-preserving, so the
    optimal policy is unchanged). Constant vectors map to all-zeros."""
    cost = np.asarray(cost, dtype=float)
    lo, hi = float(cost.min()), float(cost.max())
    if hi - lo < 1e-300:
        return np.zeros_like(cost)
    return (cost - lo) / (hi - lo)


def recovered_cost_eval(env: TabularMdp, recovered_cost: np.ndarray,
                        expert_policy: Policy) -> dict:
    """Plan against a recovered cost, score against the truth.

    Runs value iteration on the environment with its cost replaced by the
    recovered one, then reports how the resulting greedy policy fares under
    the *true* cost. Greedy planning is invariant to positive-affine changes
    of the cost, so shifted/rescaled recoveries give the same policy. The
    report carries both optimal value functions (under the recovered and the
    true cost) for side-by-side export.
    """
    recovered_cost = np.asarray(recovered_cost, dtype=float)
    if recovered_cost.shape != (env.n_pairs,):
        raise ConfigurationError(
            f"recovered cost must have one entry per state-action pair "
            f"({env.n_pairs}), got shape {recovered_cost.shape}")
    plan = value_iteration(env, recovered_cost)
    truth = value_iteration(env)
    return {
        "policy": plan.policy,
        "true_return": policy_return(env, plan.policy),
        "normalized_return": normalized_return(env, plan.policy, expert_policy),
        "value_recovered": plan.values,
        "value_true": truth.values,
    }


def transfer_eval(source_env: TabularMdp, target_env: TabularMdp,
                  recovered_cost: np.ndarray, learned_policy: Policy) -> dict:
    """Score cost transfer: replan with the recovered cost in a changed MDP.

    Reports returns in the target MDP under its true cost for four policies:
    the target's own optimum, the source expert executed verbatim, the
    greedy policy of the recovered cost replanned in the target, and the
    learned policy executed verbatim. Returns are reported raw and
    normalized against the target optimum (uniform = 0, target optimum = 1).
    """
    if (source_env.n_states, source_env.n_actions) != (
            target_env.n_states, target_env.n_actions):
        raise ConfigurationError(
            "source and target MDPs must share state and action spaces")
    recovered_cost = np.asarray(recovered_cost, dtype=float)
    if recovered_cost.shape != (target_env.n_pairs,):
        raise ConfigurationError(
            f"recovered cost must have shape ({target_env.n_pairs},), "
            f"got {recovered_cost.shape}")

    target_opt = value_iteration(target_env).policy
    source_expert = value_iteration(source_env).policy
    replanned = value_iteration(target_env, recovered_cost).policy

    policies = {
        "target_optimal": target_opt,
        "source_expert": source_expert,
        "replanned_recovered": replanned,
        "learned_policy": learned_policy,
    }
    report = {"policies": policies, "returns": {}, "normalized_returns": {}}
    for name, policy in policies.items():
        report["returns"][name] = policy_return(target_env, policy)
        report["normalized_returns"][name] = normalized_return(
            target_env, policy, target_opt)
    return report


def fev_of_policy(env: TabularMdp, policy: Policy, features) -> np.ndarray:
    """Convenience: exact feature expectations of a policy's occupancy."""
    from .features import fev

    return fev(features, occupancy_measure(env, policy))
