"""Online imitation loop: repeated critic solves with multiplicative actor steps.

Each outer iteration solves the concave critic problem anchored at the
current policy's feature expectations, then improves the policy by an
exponential-weights step against the learned Q. The loop returns both the
last policy and the uniform mixture of all iterates; the mixture is realized
exactly as the policy of the *average occupancy measure*, which is valid
because the set of discounted occupancies is convex.

Two critic back ends:

* ``exact`` — projected gradient ascent with the true transition factor
  (``critic.exact_critic``), warm-started across outer iterations;
* ``bsge`` — the batch-sampled gradient estimator (``estimators.sgd_critic``)
  fed by fresh occupancy draws from the current policy each iteration.

The per-iteration log always reports exact evaluation quantities (objective
with exact reference FEV, exact imitation gap, true returns); in sampled
mode these are diagnostics the learner itself never sees.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import estimators
from .critic import (CriticParams, CriticProblem, W_CLASSES, actor_update,
                     critic_gradients, critic_objective, exact_critic,
                     initial_params, logistic_q)
from .demos import coerce_rng, sample_occupancy_buffer
from .errors import ConfigurationError
from .features import (EXCITATION_FLOOR, FeatureMap, excitation_estimate, fev,
                       theta_radius)
from .mdp import (OccupancyMeasure, Policy, TabularMdp, occupancy_measure,
                  policy_from_occupancy, uniform_policy)
from .metrics import imitation_gap, normalized_return, policy_return

CRITIC_MODES = ("exact", "bsge")


@dataclass
class OnlineConfig:
    """Knobs of the online loop. Defaults match the reference experiments."""

    eta: float = 10.0
    alpha: float = 1.0
    n_iterations: int = 50
    critic_mode: str = "exact"
    w_class: str = "simplex"
    theta_box: float | None = None     # None: sized from expert coverage
    critic_tol: float = 1e-6
    critic_max_steps: int = 20000
    warm_start: bool = True
    seed: int = 0
    early_stop_return: float | None = None
    # sampled-critic knobs (ignored in exact mode)
    sgd_steps: int = 300
    batch_base: int = 4
    batch_cap: int = 128
    fresh_draws: int = 1
    ridge_scale: float = 1.0
    ridge_delta: float = 0.1
    draw_mode: str = "geometric"
    draw_horizon: int | None = None

    def __post_init__(self):
        if self.critic_mode not in CRITIC_MODES:
            raise ConfigurationError(
                f"critic_mode must be one of {CRITIC_MODES}")
        if self.w_class not in W_CLASSES:
            raise ConfigurationError(f"w_class must be one of {W_CLASSES}")
        if self.n_iterations < 0:
            raise ConfigurationError("n_iterations must be >= 0")
        if self.sgd_steps < 1 and self.critic_mode == "bsge":
            raise ConfigurationError("sgd_steps must be >= 1")


@dataclass(frozen=True)
class IterationRow:
    k: int
    G_value: float
    grad_norm: float
    d_C_hat: float
    true_return: float
    normalized_return: float
    wallclock_ms: float


ITERATION_COLUMNS = ("k", "G_value", "grad_norm", "d_C_hat", "true_return",
                     "normalized_return", "wallclock_ms")


@dataclass
class RunResult:
    rows: list[IterationRow]
    policies: list[Policy]
    critic_params: list[CriticParams]
    last_policy: Policy
    mixed_policy: Policy
    last_params: CriticParams
    avg_params: CriticParams
    expert_fev: np.ndarray
    config: dict
    algorithm: str = "ppm"

    @property
    def n_iterations_run(self) -> int:
        return len(self.rows)


def default_theta_box(features: FeatureMap, gamma: float,
                      expert_occupancy: OccupancyMeasure | np.ndarray | None = None) -> float:
    """Box radius from the expert's coverage; most-conservative floor if the
    expert occupancy is unavailable (a bigger box never cuts the optimum)."""
    if expert_occupancy is not None:
        beta = excitation_estimate(features, expert_occupancy)
    else:
        beta = EXCITATION_FLOOR
    return theta_radius(beta, gamma)


def run_online(env: TabularMdp, features: FeatureMap, expert_fev: np.ndarray,
               config: OnlineConfig | None = None,
               expert_policy: Policy | None = None) -> RunResult:
    """Run the online imitation loop; see the module docstring.

    ``expert_fev`` drives the learner. ``expert_policy`` is optional and
    used only for evaluation columns (normalized return, early stopping) and
    for sizing the critic box from true expert coverage.
    """
    config = config if config is not None else OnlineConfig()
    expert_fev = np.asarray(expert_fev, dtype=float)
    rng = coerce_rng(config.seed)

    expert_occ = None
    if expert_policy is not None:
        expert_occ = occupancy_measure(env, expert_policy)
    box = (config.theta_box if config.theta_box is not None
           else default_theta_box(features, env.gamma, expert_occ))

    if config.n_iterations == 0:
        uniform = uniform_policy(env)
        init = initial_params(features.n_features, config.w_class)
        return RunResult([], [], [], uniform, uniform, init, init,
                         expert_fev, asdict(config))

    policy = uniform_policy(env)
    occ = occupancy_measure(env, policy)
    occ_sum = np.zeros(env.n_pairs)
    w_sum = np.zeros(features.n_features)
    theta_sum = np.zeros(features.n_features)
    rows: list[IterationRow] = []
    policies: list[Policy] = []
    critic_params: list[CriticParams] = []
    warm: CriticParams | None = None

    for k in range(1, config.n_iterations + 1):
        tic = time.perf_counter()
        reference_fev = fev(features, occ)
        problem = CriticProblem(features, env.gamma, env.init_dist, policy,
                                reference_fev, expert_fev, config.eta,
                                config.alpha)
        if config.critic_mode == "exact":
            solved = exact_critic(problem, box, config.w_class,
                                  tol=config.critic_tol,
                                  max_steps=config.critic_max_steps,
                                  warm_start=warm if config.warm_start else None)
            params = solved.params
            g_value = solved.value
            g_norm = solved.grad_mapping_norm
            warm = params
        else:
            needed = estimators.required_buffer_size(
                config.sgd_steps, config.batch_base, config.batch_cap,
                config.fresh_draws)
            buffer = sample_occupancy_buffer(env, policy, needed, rng,
                                             draw_mode=config.draw_mode,
                                             horizon=config.draw_horizon)
            solved = estimators.sgd_critic(
                features, env.gamma, env.init_dist, policy, expert_fev,
                buffer, rng, config.eta, config.alpha, box,
                w_class=config.w_class, sgd_steps=config.sgd_steps,
                batch_base=config.batch_base, batch_cap=config.batch_cap,
                ridge_scale=config.ridge_scale, ridge_delta=config.ridge_delta,
                fresh_draws=config.fresh_draws)
            params = solved.params
            g_value = critic_objective(problem, params.w, params.theta)
            gw, gt = critic_gradients(problem, params.w, params.theta)
            g_norm = float(np.linalg.norm(np.concatenate([gw, gt])))

        policy = actor_update(policy, logistic_q(features, params.theta),
                              config.alpha)
        occ = occupancy_measure(env, policy)
        occ_sum += occ.mu
        w_sum += params.w
        theta_sum += params.theta
        policies.append(policy)
        critic_params.append(params)

        gap = imitation_gap(fev(features, occ), expert_fev, config.w_class)
        true_ret = policy_return(env, policy)
        norm_ret = (normalized_return(env, policy, expert_policy)
                    if expert_policy is not None else math.nan)
        rows.append(IterationRow(k, float(g_value), float(g_norm), float(gap),
                                 float(true_ret), float(norm_ret),
                                 (time.perf_counter() - tic) * 1000.0))
        if (config.early_stop_return is not None and expert_policy is not None
                and norm_ret >= config.early_stop_return):
            break

    n_run = len(rows)
    mixed = policy_from_occupancy(OccupancyMeasure(
        occ_sum / n_run, env.n_states, env.n_actions))
    return RunResult(rows, policies, critic_params, policies[-1], mixed,
                     critic_params[-1],
                     CriticParams(w_sum / n_run, theta_sum / n_run),
                     expert_fev, asdict(config))
